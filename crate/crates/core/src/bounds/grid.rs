use super::{
    delay_bound_tolerance, delay_lower_bound_converse, delay_upper_bound, supported_rate_tolerance, BoundError,
    BoundQuery,
};
use crate::simulator::{format_rational, parse_rational};
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("grid is empty")]
    Empty,
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("grid has {0} points, limit is 100000")]
    TooLarge(usize),
}

/// Cartesian grid over `n`, rate `R`, tolerance `tau` and degree bound `delta`.
///
/// Text form: `key=values` items separated by `;` or newlines. Values are a
/// comma list or an inclusive `start:stop:step` range; `#` starts a comment. Missing keys default
/// to `R=3/4`, `tau=0`, `delta=2`; `n` is required.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    pub n: Vec<u64>,
    pub rate: Vec<Rational64>,
    pub tolerance: Vec<Rational64>,
    pub delta: Vec<u32>,
}

const MAX_POINTS: usize = 100_000;

const MAX_MAGNITUDE: i64 = 1_000_000;

fn number(key: &str, text: &str) -> Result<Rational64, GridError> {
    let err = |message: String| GridError::Value { key: key.to_string(), message };
    let x = parse_rational(text).ok_or_else(|| err(format!("`{text}` is not a number")))?;
    if x.numer().abs() > MAX_MAGNITUDE || *x.denom() > MAX_MAGNITUDE {
        return Err(err(format!("`{text}` is out of range")));
    }
    Ok(x)
}

fn values(key: &str, text: &str) -> Result<Vec<Rational64>, GridError> {
    let err = |message: String| GridError::Value { key: key.to_string(), message };
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim) {
        if item.is_empty() {
            return Err(err("empty value".into()));
        }
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [one] => out.push(number(key, one)?),
            [a, b, s] => {
                let (a, b, s) = (number(key, a)?, number(key, b)?, number(key, s)?);
                if s <= Rational64::zero() {
                    return Err(err("range step must be positive".into()));
                }
                if b < a {
                    return Err(err("range stop is below start".into()));
                }
                let count = ((b - a) / s).floor().to_integer();
                if !(0..MAX_POINTS as i64).contains(&count) {
                    return Err(err("range has too many points".into()));
                }
                out.extend((0..=count).map(|k| a + s * Rational64::from_integer(k)));
            }
            _ => return Err(err(format!("`{item}` is neither a value nor start:stop:step"))),
        }
    }
    Ok(out)
}

fn integers<T: TryFrom<i64>>(key: &str, xs: Vec<Rational64>, min: i64) -> Result<Vec<T>, GridError> {
    xs.into_iter()
        .map(|x| {
            let bad = || GridError::Value {
                key: key.to_string(),
                message: format!("{} is not an integer >= {min}", format_rational(x)),
            };
            if !x.is_integer() || x.to_integer() < min {
                return Err(bad());
            }
            T::try_from(x.to_integer()).map_err(|_| bad())
        })
        .collect()
}

impl Grid {
    pub fn parse(text: &str) -> Result<Grid, GridError> {
        let mut n = None;
        let mut rate = None;
        let mut tolerance = None;
        let mut delta = None;
        let uncommented = text.lines().map(|l| l.split('#').next().unwrap_or("")).collect::<Vec<_>>().join("\n");
        for item in uncommented.split([';', '\n']).map(str::trim).filter(|s| !s.is_empty()) {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| GridError::Value { key: item.to_string(), message: "expected key=values".into() })?;
            let key = key.trim();
            let xs = values(key, val)?;
            let slot_taken = match key {
                "n" => n.replace(integers::<u64>(key, xs, 1)?).is_some(),
                "R" | "rate" => rate.replace(xs).is_some(),
                "tau" | "tolerance" => tolerance.replace(xs).is_some(),
                "delta" | "Delta" => delta.replace(integers::<u32>(key, xs, 2)?).is_some(),
                _ => return Err(GridError::UnknownKey(key.to_string())),
            };
            if slot_taken {
                return Err(GridError::Duplicate(key.to_string()));
            }
        }
        let grid = Grid {
            n: n.ok_or(GridError::Empty)?,
            rate: rate.unwrap_or_else(|| vec![Rational64::new(3, 4)]),
            tolerance: tolerance.unwrap_or_else(|| vec![Rational64::zero()]),
            delta: delta.unwrap_or_else(|| vec![2]),
        };
        let points = [grid.n.len(), grid.rate.len(), grid.tolerance.len(), grid.delta.len()]
            .iter()
            .try_fold(1usize, |acc, &k| acc.checked_mul(k))
            .unwrap_or(usize::MAX);
        if points == 0 {
            return Err(GridError::Empty);
        }
        if points > MAX_POINTS {
            return Err(GridError::TooLarge(points));
        }
        Ok(grid)
    }

    pub fn points(&self) -> Vec<BoundQuery> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &rate in &self.rate {
                for &tolerance in &self.tolerance {
                    for &degree_bound in &self.delta {
                        out.push(BoundQuery {
                            n,
                            rate,
                            capacity: Rational64::from_integer(1),
                            tolerance,
                            degree_bound,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One evaluated grid point. `None` marks a bound whose hypothesis fails.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub query: BoundQuery,
    pub upper: Option<f64>,
    pub tolerance_upper: Option<f64>,
    pub converse: Result<f64, BoundError>,
    /// `m/(m+1-τ)` when `R = m/(m+1)` for an integer `m`.
    pub supported_rate: Option<Rational64>,
}

/// Integer `m` with `R = m/(m+1)`.
fn substreams_for(rate: Rational64) -> Option<u32> {
    let one = Rational64::from_integer(1);
    if rate <= Rational64::zero() || rate >= one {
        return None;
    }
    let m = rate / (one - rate);
    m.is_integer().then(|| m.to_integer().to_u32()).flatten()
}

pub fn evaluate(q: &BoundQuery) -> BoundRow {
    BoundRow {
        query: *q,
        upper: delay_upper_bound(q).ok(),
        tolerance_upper: delay_bound_tolerance(q).ok(),
        converse: delay_lower_bound_converse(q),
        supported_rate: substreams_for(q.rate).map(|m| supported_rate_tolerance(m, q.tolerance)),
    }
}

/// Tab-separated table with a header line, one row per grid point in input order.
pub fn bounds_table(grid: &Grid) -> String {
    let mut out = String::from("n\tR\ttau\tdelta\tupper\ttolerance_upper\tconverse\tsupported_rate\n");
    let num = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for row in grid.points().iter().map(evaluate) {
        let q = row.query;
        let converse = match &row.converse {
            Ok(v) => format!("{v:.3}"),
            Err(BoundError::HypothesisUnmet { .. }) => "unmet".to_string(),
            Err(_) => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            q.n,
            format_rational(q.rate),
            format_rational(q.tolerance),
            q.degree_bound,
            num(row.upper),
            num(row.tolerance_upper),
            converse,
            row.supported_rate.map_or_else(|| "-".to_string(), format_rational),
        );
    }
    out
}
