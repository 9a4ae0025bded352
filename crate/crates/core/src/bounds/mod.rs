//! Closed-form delay and rate bounds, and a brute-force tree-depth oracle.
//!
//! Rational subexpressions are evaluated exactly; only logarithms go through `f64`.

mod grid;
mod oracle;

pub use grid::{bounds_table, evaluate, BoundRow, Grid, GridError};
pub use oracle::{brute_force_min_depth, realizable_profiles, Witness};

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Slack used when measured integers are compared with real-valued bounds.
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("rate {rate} must lie strictly between 0 and capacity {capacity}")]
    Domain { rate: Rational64, capacity: Rational64 },
    #[error("tolerance {0} outside [0, 1]")]
    Tolerance(Rational64),
    #[error("degree bound must be at least 2")]
    DegreeBound,
    #[error("hypothesis unmet: n = {n} is below 3R/(C-R) = {required:.3}")]
    HypothesisUnmet { n: u64, required: f64 },
    #[error("profile has no leaves")]
    NoLeaves,
    #[error("profile is not realizable: {0}")]
    Unrealizable(String),
    #[error("n = {0} exceeds the exhaustive limit of 15")]
    TooLarge(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundQuery {
    pub n: u64,
    pub rate: Rational64,
    pub capacity: Rational64,
    pub tolerance: Rational64,
    pub degree_bound: u32,
}

impl BoundQuery {
    pub fn new(n: u64, rate: Rational64) -> Self {
        BoundQuery { n, rate, capacity: Rational64::from_integer(1), tolerance: Rational64::zero(), degree_bound: 2 }
    }

    fn check_rate(&self) -> Result<(), BoundError> {
        if self.rate <= Rational64::zero() || self.rate >= self.capacity {
            return Err(BoundError::Domain { rate: self.rate, capacity: self.capacity });
        }
        Ok(())
    }
}

fn f(x: Rational64) -> f64 {
    x.to_f64().expect("finite rational")
}

fn r(n: i64) -> Rational64 {
    Rational64::from_integer(n)
}

/// `log2(n+1) + 2R/(C-R) + log2(1-R/C) - 2`.
pub fn delay_upper_bound(q: &BoundQuery) -> Result<f64, BoundError> {
    q.check_rate()?;
    let gap = q.capacity - q.rate;
    let linear = r(2) * q.rate / gap;
    let inner = r(1) - q.rate / q.capacity;
    Ok(((q.n + 1) as f64).log2() + f(linear) + f(inner).log2() - 2.0)
}

/// `log_Δ n + R/(2(C-R)) + log_Δ(2(C-R)/R) - c` with
/// `c = (Δ-2) log_Δ(Δ!/2) + ln(Δ-1) + 2`, valid for `n ≥ 3R/(C-R)`.
pub fn delay_lower_bound_converse(q: &BoundQuery) -> Result<f64, BoundError> {
    q.check_rate()?;
    if q.degree_bound < 2 {
        return Err(BoundError::DegreeBound);
    }
    let gap = q.capacity - q.rate;
    let required = r(3) * q.rate / gap;
    if r(q.n as i64) < required {
        return Err(BoundError::HypothesisUnmet { n: q.n, required: f(required) });
    }
    let delta = q.degree_bound as f64;
    let log_d = |x: f64| x.ln() / delta.ln();
    let half_factorial: f64 = (1..=q.degree_bound).map(f64::from).product::<f64>() / 2.0;
    let c = (delta - 2.0) * log_d(half_factorial) + (delta - 1.0).ln() + 2.0;
    let linear = q.rate / (r(2) * gap);
    let ratio = r(2) * gap / q.rate;
    Ok(log_d(q.n as f64) + f(linear) + log_d(f(ratio)) - c)
}

/// `log2(n+1) - log2(R(1-τ)/(1-R) + 1) + 2R(1-τ)/(1-R) - 2`, capacity normalized to 1.
pub fn delay_bound_tolerance(q: &BoundQuery) -> Result<f64, BoundError> {
    let one = r(1);
    if q.rate <= Rational64::zero() || q.rate >= one {
        return Err(BoundError::Domain { rate: q.rate, capacity: one });
    }
    if q.tolerance < Rational64::zero() || q.tolerance > one {
        return Err(BoundError::Tolerance(q.tolerance));
    }
    let x = q.rate * (one - q.tolerance) / (one - q.rate);
    Ok(((q.n + 1) as f64).log2() - f(x + one).log2() + f(r(2) * x) - 2.0)
}

/// `m/(m+1-τ)`.
pub fn supported_rate_tolerance(m: u32, tau: Rational64) -> Rational64 {
    r(m as i64) / (r(m as i64 + 1) - tau)
}

/// `2 log2(n+1) + 8R/(1-R) + 2 log2(1-R) - 8`.
pub fn allcast_delay_bound(n: u64, rate: Rational64) -> Result<f64, BoundError> {
    let one = r(1);
    if rate <= Rational64::zero() || rate >= one {
        return Err(BoundError::Domain { rate, capacity: one });
    }
    Ok(2.0 * ((n + 1) as f64).log2() + f(r(8) * rate / (one - rate)) + 2.0 * f(one - rate).log2() - 8.0)
}

/// Fractions `d[j]` of the `n` nodes of one tree that have out-degree `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeProfile {
    pub n: u64,
    pub d: Vec<Rational64>,
}

impl DegreeProfile {
    pub fn from_counts(counts: &[u64]) -> Self {
        let n: u64 = counts.iter().sum();
        let d = counts.iter().map(|&c| Rational64::new(c as i64, n.max(1) as i64)).collect();
        DegreeProfile { n, d }
    }

    /// Largest degree with a slot in the vector.
    pub fn l(&self) -> usize {
        self.d.len().saturating_sub(1)
    }

    pub fn fraction(&self, j: usize) -> Rational64 {
        self.d.get(j).copied().unwrap_or_else(Rational64::zero)
    }

    /// Integer node counts, if every fraction times `n` is whole.
    pub fn counts(&self) -> Option<Vec<u64>> {
        self.d
            .iter()
            .map(|&x| {
                let c = x * r(self.n as i64);
                c.is_integer().then(|| c.to_integer()).filter(|&c| c >= 0).map(|c| c as u64)
            })
            .collect()
    }

    pub fn fraction_sum_holds(&self) -> bool {
        self.d.iter().copied().sum::<Rational64>() == r(1)
    }

    pub fn edge_identity_holds(&self) -> bool {
        let edges: Rational64 = self.d.iter().enumerate().map(|(j, &x)| x * r(j as i64)).sum();
        edges == r(1) - Rational64::new(1, self.n.max(1) as i64)
    }
}

/// `d1/d0 + log_l(1 + Σ_{k≥2} n d_k (k-1)) - (l-2) log_l(l!/2)`, with `l` at least 2.
pub fn depth_lower_bound(p: &DegreeProfile) -> Result<f64, BoundError> {
    let d0 = p.fraction(0);
    if d0.is_zero() {
        return Err(BoundError::NoLeaves);
    }
    let l = p.l().max(2);
    let lf = l as f64;
    let log_l = |x: f64| x.ln() / lf.ln();
    let branching: Rational64 = (2..=p.l()).map(|k| r(p.n as i64) * p.fraction(k) * r(k as i64 - 1)).sum();
    let half_factorial: f64 = (1..=l).map(|k| k as f64).product::<f64>() / 2.0;
    Ok(f(p.fraction(1) / d0) + log_l(f(r(1) + branching)) - (lf - 2.0) * log_l(half_factorial))
}

/// One tree of a converse instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeProfile {
    pub profile: DegreeProfile,
    pub rate: Rational64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Infeasibility {
    FractionSum { tree: usize },
    EdgeIdentity { tree: usize },
    Capacity { load: Rational64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub reasons: Vec<Infeasibility>,
    /// `Σ_i (1 - 1/n + Σ_{j≥2} (j-1) d_i^(j)) r_i`, which must not exceed 1.
    pub load: Rational64,
    pub min_leaf_fraction: Rational64,
    /// `1/R - 1 + 2/n` with `R = Σ r_i`.
    pub leaf_bound: Rational64,
}

impl FeasibilityReport {
    pub fn leaf_bound_holds(&self) -> bool {
        self.min_leaf_fraction <= self.leaf_bound
    }
}

/// Fraction sums, edge-count identity and the capacity budget with `j-1`
/// redundant edges per degree-`j` node.
pub fn converse_feasibility_check(trees: &[TreeProfile]) -> FeasibilityReport {
    let mut reasons = Vec::new();
    let mut load = Rational64::zero();
    let mut total_rate = Rational64::zero();
    let mut min_leaf: Option<Rational64> = None;
    let mut n = 1;
    for (k, t) in trees.iter().enumerate() {
        let p = &t.profile;
        n = p.n.max(1);
        if !p.fraction_sum_holds() {
            reasons.push(Infeasibility::FractionSum { tree: k });
        }
        if !p.edge_identity_holds() {
            reasons.push(Infeasibility::EdgeIdentity { tree: k });
        }
        let redundant: Rational64 = (2..=p.l()).map(|j| r(j as i64 - 1) * p.fraction(j)).sum();
        load += (r(1) - Rational64::new(1, n as i64) + redundant) * t.rate;
        total_rate += t.rate;
        let d0 = p.fraction(0);
        min_leaf = Some(min_leaf.map_or(d0, |x: Rational64| x.min(d0)));
    }
    if load > r(1) {
        reasons.push(Infeasibility::Capacity { load });
    }
    let leaf_bound =
        if total_rate.is_zero() { Rational64::zero() } else { r(1) / total_rate - r(1) + Rational64::new(2, n as i64) };
    FeasibilityReport {
        feasible: reasons.is_empty(),
        reasons,
        load,
        min_leaf_fraction: min_leaf.unwrap_or_else(Rational64::zero),
        leaf_bound,
    }
}
