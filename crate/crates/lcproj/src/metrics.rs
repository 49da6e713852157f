//! Exact distances between discrete distributions and between projected
//! densities, plus the continuity-ratio record of the projection map.

use serde::{Deserialize, Serialize};

use crate::density::{hellinger_affinity, PiecewiseLogLinearDensity};
use crate::dist::DiscreteDistribution;
use crate::error::Result;
use crate::solver::{project, SolverOptions};

/// Wasserstein-1 distance, computed exactly as `∫ |F_P - F_Q|` over the
/// merged atom grid.
pub fn wasserstein1(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut locs: Vec<f64> = p.locations().chain(q.locations()).collect();
    locs.sort_by(f64::total_cmp);
    locs.dedup();
    let mut total = 0.0;
    for w in locs.windows(2) {
        let gap = w[1] - w[0];
        total += gap * (p.cdf(w[0]) - q.cdf(w[0])).abs();
    }
    total
}

/// Squared Hellinger distance `2 - 2 ∫ sqrt(f g)` between normalized
/// densities; lies in `[0, 2]`.
pub fn hellinger_sq(f: &PiecewiseLogLinearDensity, g: &PiecewiseLogLinearDensity) -> Result<f64> {
    Ok(2.0 - 2.0 * hellinger_affinity(f, g)?)
}

/// `max{ sup_t |sqrt(P[X>t]) - sqrt(Q[X>t])|, sup_t |sqrt(P[X<t]) - sqrt(Q[X<t])| }`.
///
/// Both one-sided tail functions are piecewise constant with jumps at atoms,
/// so the supremum is attained on the finite candidate set given by the
/// merged atom locations; strict and non-strict variants are both evaluated
/// at every candidate.
pub fn delta_cdf(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut locs: Vec<f64> = p.locations().chain(q.locations()).collect();
    locs.sort_by(f64::total_cmp);
    locs.dedup();
    let mut best = 0.0f64;
    for &t in &locs {
        let upper = (p.survival_strict(t).sqrt() - q.survival_strict(t).sqrt()).abs();
        let upper_open = (p.survival(t).sqrt() - q.survival(t).sqrt()).abs();
        let lower = (p.cdf_strict(t).sqrt() - q.cdf_strict(t).sqrt()).abs();
        let lower_closed = (p.cdf(t).sqrt() - q.cdf(t).sqrt()).abs();
        best = best.max(upper).max(upper_open).max(lower).max(lower_closed);
    }
    best
}

/// One observation of the projection map's local continuity: the Hellinger
/// distance between the two projections against the fourth root of the
/// normalized Wasserstein distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityRecord {
    pub dw: f64,
    pub dh: f64,
    pub eps_max: f64,
    /// `dh / (dw / eps_max)^{1/4}`, zero by convention when `P = Q`.
    pub ratio: f64,
}

impl ContinuityRecord {
    /// Fixed CSV column order: `delta,eps,dW,dH,eps_max,ratio`.
    pub const CSV_HEADER: &'static str = "delta,eps,dW,dH,eps_max,ratio";

    pub fn csv_row(&self, delta: f64, eps: f64) -> String {
        format!(
            "{},{},{},{},{},{}",
            delta, eps, self.dw, self.dh, self.eps_max, self.ratio
        )
    }
}

/// Project both distributions and assemble the continuity record.
/// Propagates `NotInP1` from the solver.
pub fn continuity_record(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    opts: &SolverOptions,
) -> Result<ContinuityRecord> {
    let eps_max = p.epsilon().max(q.epsilon());
    if p.atoms() == q.atoms() {
        return Ok(ContinuityRecord {
            dw: 0.0,
            dh: 0.0,
            eps_max,
            ratio: 0.0,
        });
    }
    let dw = wasserstein1(p, q);
    let fp = project(p, opts)?.density;
    let fq = project(q, opts)?.density;
    let dh = hellinger_sq(&fp, &fq)?.max(0.0).sqrt();
    let ratio = if dw == 0.0 {
        0.0
    } else {
        dh / (dw / eps_max).powf(0.25)
    };
    Ok(ContinuityRecord {
        dw,
        dh,
        eps_max,
        ratio,
    })
}
