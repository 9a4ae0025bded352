mod report;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use streamtree::bounds::{bounds_table, Grid};
use streamtree::extensions::{allcast_coverage_check, allcast_route, multi_source_bootstrap};
use streamtree::overlay::{check_property1, check_property2, check_property3, parse_snapshot, write_snapshot};
use streamtree::simulator::{parse_rational, parse_trace, write_trace, ChurnScenario, Simulation};
use streamtree::{GlobalOverlay, NodeId, StreamConfig};

#[derive(Parser)]
#[command(name = "streamtree", version, about = "Redundant substream-tree overlay simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a churn scenario and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Trace output; stdout when absent, in which case no report is printed.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Final overlay snapshot output.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario tolerance, e.g. `1/4` or `0.25`.
        #[arg(long)]
        tolerance: Option<String>,
        /// Starts from `k` sources per substream instead of one.
        #[arg(long)]
        sources: Option<usize>,
        /// Also runs an all-cast coverage check from every peer of the final overlay.
        #[arg(long)]
        allcast: bool,
    },
    /// Check a trace or an overlay snapshot for property violations.
    Check {
        #[arg(long, conflicts_with = "overlay", required_unless_present = "overlay")]
        trace: Option<PathBuf>,
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Print a table of the delay and rate bounds over a parameter grid.
    Bounds {
        /// Grid text such as `n=11;R=3/4;tau=0:1:1/4`, or `@path` to read it from a file.
        #[arg(long)]
        grid: String,
    },
    /// Run a named property suite.
    Suite {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// All-cast coverage on the final overlay of a scenario or on a snapshot.
    Allcast {
        #[arg(long, conflicts_with = "overlay", required_unless_present = "overlay")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Only this source; prints its hops.
        #[arg(long)]
        source: Option<u32>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Summarize a trace. Exits nonzero when the trace records a breach.
    Report {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<ChurnScenario> {
    ChurnScenario::parse(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_snapshot(path: &Path) -> Result<GlobalOverlay> {
    parse_snapshot(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn ok(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

struct RunResult {
    sim: Simulation,
    breach: Option<String>,
}

fn simulate(sc: &ChurnScenario, sources: Option<usize>) -> Result<RunResult> {
    let mut sim = Simulation::from_scenario(sc)?;
    if let Some(k) = sources {
        if k == 0 {
            bail!("--sources must be at least 1");
        }
        sim.overlay = multi_source_bootstrap(&sc.config, &vec![k; sc.config.m])?;
    }
    let mut breach = None;
    for round in 1..=sc.horizon {
        if let Err(e) = sim.step(&sc.events_at(round)) {
            breach = Some(e.to_string());
            break;
        }
    }
    sim.finish(sc.events.last().map_or(0, |e| e.round));
    Ok(RunResult { sim, breach })
}

fn coverage(g: &GlobalOverlay) -> (usize, u64) {
    let mut missed = 0;
    let mut worst = 0;
    for &s in g.peers.keys() {
        let rep = allcast_coverage_check(g, s);
        missed += usize::from(!rep.covered);
        worst = worst.max(rep.max_round);
    }
    (missed, worst)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, trace, snapshot, seed, tolerance, sources, allcast } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            if let Some(t) = tolerance {
                sc.config.tolerance = parse_rational(&t).with_context(|| format!("bad tolerance `{t}`"))?;
            }
            let RunResult { sim, breach } = simulate(&sc, sources)?;
            let text = format!("{}{}", report::header(&sc), write_trace(&sim.records));
            if let Some(p) = &snapshot {
                write(p, &write_snapshot(&sim.overlay))?;
            }
            match &trace {
                Some(p) => {
                    write(p, &text)?;
                    print!("{}", report::summarize(&text)?.text);
                }
                None => print!("{text}"),
            }
            if allcast {
                let (missed, worst) = coverage(&sim.overlay);
                eprintln!("allcast: {} sources, {missed} incomplete, max round {worst}", sim.overlay.n());
            }
            if let Some(b) = &breach {
                eprintln!("breach: {b}");
            }
            Ok(ok(breach.is_none()))
        }
        Command::Check { trace: Some(p), .. } => {
            let records = parse_trace(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?;
            let bad: Vec<_> = records.iter().filter(|r| !r.p1 || !r.p2).collect();
            for r in &bad {
                println!("violation: {r}");
            }
            println!("{} rounds, {} with violations", records.len(), bad.len());
            Ok(ok(bad.is_empty()))
        }
        Command::Check { overlay, .. } => {
            let p = overlay.context("--trace or --overlay is required")?;
            let g = load_snapshot(&p)?;
            let cfg = StreamConfig::new(g.n(), g.m);
            let mut pass = true;
            for rep in check_property1(&g).iter().filter(|r| !r.holds) {
                pass = false;
                println!("unreachable in substream {}: {:?}", rep.substream + 1, rep.unreachable);
            }
            for v in check_property2(&g) {
                pass = false;
                println!("structure: {v}");
            }
            let p3 = check_property3(&g, &cfg);
            println!(
                "connectivity={} structure={} balanced={}",
                u8::from(pass),
                u8::from(pass),
                u8::from(p3.is_empty())
            );
            Ok(ok(pass))
        }
        Command::Bounds { grid } => {
            let text = match grid.strip_prefix('@') {
                Some(path) => read(Path::new(path))?,
                None => grid,
            };
            let grid = Grid::parse(&text).context("invalid grid")?;
            print!("{}", bounds_table(&grid));
            Ok(ExitCode::SUCCESS)
        }
        Command::Suite { suite, seed } => {
            let rep = streamtree::suite::run_suite(&suite, seed)?;
            print!("{rep}");
            Ok(ok(rep.passed()))
        }
        Command::Allcast { scenario, overlay, source, seed } => {
            let g = match (scenario, overlay) {
                (Some(p), _) => {
                    let mut sc = load_scenario(&p)?;
                    sc.seed = seed;
                    simulate(&sc, None)?.sim.overlay
                }
                (None, Some(p)) => load_snapshot(&p)?,
                (None, None) => bail!("--scenario or --overlay is required"),
            };
            match source {
                Some(s) => {
                    let s = NodeId(s);
                    if !g.contains(s) {
                        bail!("peer {s} is not in the overlay");
                    }
                    for i in 0..g.m {
                        let st = allcast_route(&g, s, i);
                        for h in &st.hops {
                            println!(
                                "substream={} round={} {}->{}{}",
                                i + 1,
                                h.round,
                                h.from,
                                h.to,
                                if h.duplicate { " dup" } else { "" }
                            );
                        }
                    }
                    let rep = allcast_coverage_check(&g, s);
                    println!("source={s} covered={} max_round={}", u8::from(rep.covered), rep.max_round);
                    Ok(ok(rep.covered))
                }
                None => {
                    let (missed, worst) = coverage(&g);
                    println!("sources={} incomplete={missed} max_round={worst}", g.n());
                    Ok(ok(missed == 0))
                }
            }
        }
        Command::Report { trace } => {
            let rep = report::summarize(&read(&trace)?)?;
            print!("{}", rep.text);
            Ok(ok(rep.passed))
        }
    }
}
