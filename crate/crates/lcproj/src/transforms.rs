//! The L-Lipschitz majorization of a concave piecewise-linear log density:
//! the smallest L-Lipschitz function dominating it, `sup_y { φ(y) - L|x-y| }`.
//!
//! In one dimension the sup-convolution of a concave piecewise-linear
//! function with the cone `-L|·|` reduces to clipping every slope into
//! `[-L, L]`, propagating outward from the argmax, with tails of slope `±L`
//! extending to `-inf`. The construction is O(m); debug builds verify it
//! pointwise against direct maximization over knots.

use crate::density::{seg_integral, PiecewiseLogLinearDensity};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};

/// A concave, L-Lipschitz, piecewise-linear function on the whole real
/// line: clipped values on the base knots plus two `±L` tail rays.
#[derive(Debug, Clone)]
pub struct LipschitzEnvelope {
    base: PiecewiseLogLinearDensity,
    lipschitz: f64,
    values: Vec<f64>,
}

/// Build the L-Lipschitz majorization of `phi`.
pub fn lipschitz_majorize(
    phi: &PiecewiseLogLinearDensity,
    lipschitz: f64,
) -> Result<LipschitzEnvelope> {
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lipschitz_majorize requires L > 0, got {lipschitz}"
        )));
    }
    let knots = phi.knots();
    let logvals = phi.logvals();
    let m = knots.len();
    let peak = logvals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut values = vec![0.0; m];
    values[peak] = logvals[peak];
    for j in peak..m - 1 {
        let slope = (logvals[j + 1] - logvals[j]) / (knots[j + 1] - knots[j]);
        values[j + 1] = values[j] + slope.clamp(-lipschitz, lipschitz) * (knots[j + 1] - knots[j]);
    }
    for j in (0..peak).rev() {
        let slope = (logvals[j + 1] - logvals[j]) / (knots[j + 1] - knots[j]);
        values[j] = values[j + 1] - slope.clamp(-lipschitz, lipschitz) * (knots[j + 1] - knots[j]);
    }
    let env = LipschitzEnvelope {
        base: phi.clone(),
        lipschitz,
        values,
    };
    #[cfg(debug_assertions)]
    env.check_sup_definition_on_grid();
    Ok(env)
}

impl LipschitzEnvelope {
    pub fn base(&self) -> &PiecewiseLogLinearDensity {
        &self.base
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Clipped values at the base knots.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Envelope value anywhere on the real line (finite everywhere).
    pub fn log_eval(&self, x: f64) -> f64 {
        let knots = self.base.knots();
        let (lo, hi) = self.base.support();
        if x < lo {
            return self.values[0] - self.lipschitz * (lo - x);
        }
        if x > hi {
            return self.values[self.values.len() - 1] - self.lipschitz * (x - hi);
        }
        match knots.binary_search_by(|t| t.total_cmp(&x)) {
            Ok(j) => self.values[j],
            Err(j) => {
                let t0 = knots[j - 1];
                let t1 = knots[j];
                self.values[j - 1] + (self.values[j] - self.values[j - 1]) * (x - t0) / (t1 - t0)
            }
        }
    }

    /// `∫_R e^{envelope}`: segment sums over the support plus the two
    /// closed-form tail integrals `e^{endpoint value} / L`.
    pub fn integral(&self) -> f64 {
        let knots = self.base.knots();
        let mut total = 0.0;
        for j in 0..knots.len() - 1 {
            total += seg_integral(self.values[j], self.values[j + 1], knots[j + 1] - knots[j]);
        }
        total
            + self.values[0].exp() / self.lipschitz
            + self.values[self.values.len() - 1].exp() / self.lipschitz
    }

    /// `ℓ(envelope, P) = Σ w_i envelope(x_i) - ∫ e^{envelope} + 1`; atoms may
    /// lie anywhere since the envelope is finite on all of R.
    pub fn objective(&self, p: &DiscreteDistribution) -> f64 {
        let e: f64 = p.atoms().iter().map(|&(x, w)| w * self.log_eval(x)).sum();
        e - self.integral() + 1.0
    }

    /// Normalized compact-support density: the tails are cut where the
    /// envelope drops `clip_at` nats below its maximum (default 60), which
    /// changes the integral by less than 1e-12 relative, then everything is
    /// shifted by `-log ∫`.
    pub fn normalize(&self, clip_at: f64) -> Result<PiecewiseLogLinearDensity> {
        if !(clip_at > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "clip_at must be positive, got {clip_at}"
            )));
        }
        let knots = self.base.knots();
        let vmax = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cut = vmax - clip_at;
        let mut ks: Vec<f64> = Vec::with_capacity(knots.len() + 2);
        let mut vs: Vec<f64> = Vec::with_capacity(knots.len() + 2);
        let first = self.values[0];
        if first - cut > 1e-12 {
            ks.push(knots[0] - (first - cut) / self.lipschitz);
            vs.push(cut);
        }
        ks.extend_from_slice(knots);
        vs.extend_from_slice(&self.values);
        let last = self.values[self.values.len() - 1];
        if last - cut > 1e-12 {
            ks.push(knots[knots.len() - 1] + (last - cut) / self.lipschitz);
            vs.push(cut);
        }
        PiecewiseLogLinearDensity::new(ks, vs)?.normalize()
    }

    /// Verify the clipping construction against the literal
    /// `sup_y { φ(y) - L|x-y| }` maximized over knots and the point itself.
    #[cfg(debug_assertions)]
    fn check_sup_definition_on_grid(&self) {
        let (lo, hi) = self.base.support();
        let span = hi - lo;
        for i in 0..=100 {
            let x = lo - 0.5 * span + 2.0 * span * i as f64 / 100.0;
            let mut sup = self.base.log_eval(x);
            for (j, &t) in self.base.knots().iter().enumerate() {
                sup = sup.max(self.base.logvals()[j] - self.lipschitz * (x - t).abs());
            }
            let got = self.log_eval(x);
            debug_assert!(
                (got - sup).abs() <= 1e-9 * (1.0 + sup.abs()),
                "envelope mismatch at x={x}: clipped {got}, sup {sup}"
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{objective, project, SolverOptions};

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn uniform_base_envelope() {
        // φ^L(x) = -log2 - L (|x| - 1)_+ for the Unif[-1,1] log density
        let u = PiecewiseLogLinearDensity::uniform(-1.0, 1.0).unwrap();
        for &l in &[1.0, 10.0] {
            let e = lipschitz_majorize(&u, l).unwrap();
            assert!((e.log_eval(0.3) + LN2).abs() < 1e-14);
            assert!((e.log_eval(2.0) - (-LN2 - l)).abs() < 1e-14);
            assert!((e.log_eval(-3.0) - (-LN2 - 2.0 * l)).abs() < 1e-14);
        }
    }

    #[test]
    fn gentle_tent_unchanged_on_support() {
        // L at least the max slope: no interior clipping, linear tails
        let tent = PiecewiseLogLinearDensity::new(vec![-1.0, 0.0, 1.0], vec![-1.0, 0.0, -1.0])
            .unwrap();
        let e = lipschitz_majorize(&tent, 1.5).unwrap();
        for (v, b) in e.values().iter().zip(tent.logvals()) {
            assert!((v - b).abs() < 1e-14);
        }
        assert!((e.log_eval(1.5) - (-1.0 - 0.75)).abs() < 1e-14);
    }

    #[test]
    fn steep_tent_clipped() {
        // slopes ±2 clipped to ±1: peak preserved, endpoints raised to -1
        let tent = PiecewiseLogLinearDensity::new(vec![-1.0, 0.0, 1.0], vec![-2.0, 0.0, -2.0])
            .unwrap();
        let e = lipschitz_majorize(&tent, 1.0).unwrap();
        assert!((e.log_eval(0.0) - 0.0).abs() < 1e-14);
        assert!((e.log_eval(1.0) + 1.0).abs() < 1e-14);
        assert!((e.log_eval(-1.0) + 1.0).abs() < 1e-14);
        assert!((e.log_eval(2.0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn envelope_integral_uniform_base() {
        let u = PiecewiseLogLinearDensity::uniform(-1.0, 1.0).unwrap();
        for &l in &[10.0, 100.0] {
            let e = lipschitz_majorize(&u, l).unwrap();
            assert!((e.integral() - (1.0 + 1.0 / l)).abs() < 1e-10, "L={l}");
        }
    }

    #[test]
    fn excess_scales_like_one_over_l() {
        let p = DiscreteDistribution::uniform(&[-1.0, 0.0, 1.0]).unwrap();
        let base = project(&p, &SolverOptions::default()).unwrap().density;
        let at = |l: f64| (lipschitz_majorize(&base, l).unwrap().integral() - 1.0) * l;
        let e2 = at(1e2);
        let e3 = at(1e3);
        let e4 = at(1e4);
        assert!((e3 / e2 - 1.0).abs() <= 0.10);
        assert!((e4 / e2 - 1.0).abs() <= 0.10);
        // excess at L vs 2L halves
        let r = (lipschitz_majorize(&base, 100.0).unwrap().integral() - 1.0)
            / (lipschitz_majorize(&base, 200.0).unwrap().integral() - 1.0);
        assert!((1.9..=2.1).contains(&r));
    }

    #[test]
    fn majorization_and_monotonicity_in_l() {
        let f = PiecewiseLogLinearDensity::new(
            vec![-2.0, -0.5, 0.1, 1.0],
            vec![-6.0, -0.2, 0.1, -4.0],
        )
        .unwrap();
        let e1 = lipschitz_majorize(&f, 1.0).unwrap();
        let e2 = lipschitz_majorize(&f, 3.0).unwrap();
        let (lo, hi) = f.support();
        for i in 0..=1000 {
            let x = lo + (hi - lo) * i as f64 / 1000.0;
            assert!(e1.log_eval(x) >= f.log_eval(x) - 1e-10);
            assert!(e2.log_eval(x) >= f.log_eval(x) - 1e-10);
            // smaller L majorizes more
            assert!(e1.log_eval(x) >= e2.log_eval(x) - 1e-10);
        }
    }

    #[test]
    fn normalize_envelope_examples() {
        let u = PiecewiseLogLinearDensity::uniform(-1.0, 1.0).unwrap();
        let e = lipschitz_majorize(&u, 10.0).unwrap();
        let f = e.normalize(60.0).unwrap();
        // density proportional to min{1/2, e^{-10(|x|-1)_+}/2}, normalized by 1.1
        assert!((f.eval(0.0) - 0.5 / 1.1).abs() < 1e-10);
        assert!((f.support().0 - -7.0).abs() < 1e-10);
        assert!((f.integral() - 1.0).abs() < 1e-10);
        // idempotent under further normalization
        let g = f.normalize().unwrap();
        assert!(f
            .logvals()
            .iter()
            .zip(g.logvals())
            .all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn normalizing_improves_objective() {
        let p = DiscreteDistribution::uniform(&[-1.0, 1.0]).unwrap();
        let u = PiecewiseLogLinearDensity::uniform(-1.0, 1.0).unwrap();
        let e = lipschitz_majorize(&u, 10.0).unwrap();
        let normalized = e.normalize(60.0).unwrap();
        assert!(objective(&normalized, &p) >= e.objective(&p) - 1e-12);
    }

    #[test]
    fn near_optimality_bound() {
        // ℓ(normalized envelope, P) >= ℓ(envelope, P) >= ℓ(φ, P) - excess
        let p = DiscreteDistribution::new(vec![(-1.5, 0.3), (0.0, 0.45), (2.0, 0.25)]).unwrap();
        let phi = project(&p, &SolverOptions::default()).unwrap().density;
        let base_obj = objective(&phi, &p);
        for &l in &[5.0, 50.0] {
            let e = lipschitz_majorize(&phi, l).unwrap();
            let excess = e.integral() - 1.0;
            assert!(excess >= -1e-12);
            assert!(e.objective(&p) >= base_obj - excess - 1e-10);
            let tilde = e.normalize(60.0).unwrap();
            assert!(objective(&tilde, &p) >= e.objective(&p) - 1e-10);
            assert!(objective(&tilde, &p) >= base_obj - excess - 1e-10);
        }
    }

    #[test]
    fn rejects_bad_l() {
        let u = PiecewiseLogLinearDensity::uniform(-1.0, 1.0).unwrap();
        assert!(lipschitz_majorize(&u, 0.0).is_err());
        assert!(lipschitz_majorize(&u, -1.0).is_err());
    }
}
