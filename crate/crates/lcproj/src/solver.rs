//! Maximum-likelihood log-concave projection of a discrete distribution.
//!
//! The solver maximizes `ℓ(φ, P) = E_P[φ(X)] - ∫ e^φ + 1` over concave
//! piecewise-linear log densities with knots at the atoms of `P`. The
//! nonincreasing-slope cone is handled by an active-set scheme: Newton steps
//! are taken on the affine face spanned by the current kink set (a
//! tridiagonal solve), rays that leave the cone are cut at the boundary and
//! the offending adjacent slopes pooled, and at a face optimum the hinge
//! directions at non-kink atoms are tested for release.

use serde::{Deserialize, Serialize};

use crate::density::{exp_kernels, seg_integral, segment_calculus, PiecewiseLogLinearDensity};
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};

pub mod oracle;

/// Tolerances and damping parameters for [`project`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Bound on the optimality residual (max directional derivative over
    /// unit feasible directions) at termination.
    pub gradient_tol: f64,
    /// Bound on `|∫ e^φ - 1|` at termination.
    pub normalization_tol: f64,
    pub max_iterations: u32,
    /// Armijo sufficient-decrease constant for the backtracking line search.
    pub armijo_c1: f64,
    /// Step shrink factor per backtrack.
    pub backtrack_factor: f64,
    pub max_backtracks: u32,
    /// Cap on the upward (positive) component of a Newton step, in nats;
    /// keeps trial exponentials finite on wild early steps.
    pub max_up_step_nats: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gradient_tol: 1e-9,
            normalization_tol: 1e-8,
            max_iterations: 500,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            max_up_step_nats: 60.0,
        }
    }
}

/// Output of [`project`]: the normalized density plus solver diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub density: PiecewiseLogLinearDensity,
    /// `ℓ(φ, P)` at the returned (normalized) log density.
    pub objective: f64,
    /// Max directional derivative of `ℓ` over the canonical generating rays
    /// of the feasible cone, each normalized to unit sup norm on the support.
    pub optimality_residual: f64,
    pub iterations: u32,
    /// Atom indices at which the optimal log density has a kink (support
    /// endpoints always included).
    pub active_knots: Vec<usize>,
    /// Objective value after each accepted step; nondecreasing.
    pub objective_trace: Vec<f64>,
}

/// `ℓ(φ, P) = Σ w_i φ(x_i) - ∫ e^φ + 1`. Returns `-inf` (not an error) when
/// an atom of `P` falls outside the support of `φ`.
pub fn objective(phi: &PiecewiseLogLinearDensity, p: &DiscreteDistribution) -> f64 {
    let mut e = 0.0;
    for &(x, w) in p.atoms() {
        let v = phi.log_eval(x);
        if v == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        e += w * v;
    }
    e - phi.integral() + 1.0
}

/// Max directional derivative of `ℓ(·, P)` at a normalized density over the
/// generating rays of the feasible cone: the two affine directions (both
/// signs) and the hinge `(x - x_i)_+` at every interior atom (both signs
/// where the density already has a kink, the concavity-preserving sign
/// elsewhere). Each ray is scaled to unit sup norm on the support.
pub fn optimality_residual(
    phi: &PiecewiseLogLinearDensity,
    p: &DiscreteDistribution,
) -> Result<f64> {
    let atoms = p.atoms();
    let (lo, hi) = phi.support();
    let s = 0.5 * (hi - lo);
    let mut r: f64 = (1.0 - phi.integral()).abs();
    let mean_diff = p.mean() - phi.mean()?;
    r = r.max(mean_diff.abs() / s);

    let kinks = kink_locations(phi);
    for &(xi, _) in &atoms[..atoms.len()] {
        if xi <= lo || xi >= hi {
            continue;
        }
        let ep: f64 = atoms.iter().map(|&(x, w)| w * (x - xi).max(0.0)).sum();
        let ef = phi.hinge_expectation(xi)?;
        let dd = (ep - ef) / (hi - xi); // derivative along +hinge, unit sup norm
        let is_kink = kinks.iter().any(|&k| (k - xi).abs() <= 1e-12);
        if is_kink {
            r = r.max(dd.abs());
        } else {
            r = r.max(-dd);
        }
    }
    Ok(r)
}

/// Interior knot locations where the log density genuinely changes slope.
fn kink_locations(phi: &PiecewiseLogLinearDensity) -> Vec<f64> {
    let k = phi.knots();
    let v = phi.logvals();
    let mut out = Vec::new();
    for j in 1..k.len() - 1 {
        let s0 = (v[j] - v[j - 1]) / (k[j] - k[j - 1]);
        let s1 = (v[j + 1] - v[j]) / (k[j + 1] - k[j]);
        if s0 - s1 > 1e-9 * (1.0 + s0.abs().max(s1.abs())) {
            out.push(k[j]);
        }
    }
    out
}

/// Compute the log-concave maximum-likelihood projection of `p`.
///
/// Errors with [`Error::NotInP1`] when `p` has a single atom (the projection
/// is undefined there) and with [`Error::NoConvergence`] if the iteration
/// budget is exhausted.
pub fn project(p: &DiscreteDistribution, opts: &SolverOptions) -> Result<ProjectionResult> {
    if !p.is_in_p1() {
        return Err(Error::NotInP1);
    }
    let x: Vec<f64> = p.locations().collect();
    let w: Vec<f64> = p.weights().collect();
    if x.len() == 2 {
        return solve_two_atom(p, &x, &w, opts);
    }
    FaceNewton::new(&x, &w, opts).run(p)
}

/// Exact solution for two atoms: the log density on `[x_0, x_1]` is linear
/// with tilt `δ` solving `E1(δ)/E0(δ) = w_1` (mean preservation), found by a
/// safeguarded Newton iteration on the monotone tilt-mean map.
fn solve_two_atom(
    p: &DiscreteDistribution,
    x: &[f64],
    w: &[f64],
    opts: &SolverOptions,
) -> Result<ProjectionResult> {
    let len = x[1] - x[0];
    let target = w[1];
    let mut d: f64 = 12.0 * (target - 0.5);
    let mut iters = 0u32;
    for _ in 0..200 {
        iters += 1;
        let m = tilt_mean(d);
        let resid = m - target;
        if resid.abs() <= 1e-15 {
            break;
        }
        let step = -resid / tilt_variance(d);
        // growth-limited Newton: |d| can at most triple (plus a fixed
        // allowance) per iteration, which tames the flat far-tilt region
        let cap = 2.0 * d.abs() + 24.0;
        d += step.clamp(-cap, cap);
        if step.abs() <= 1e-14 * (1.0 + d.abs()) {
            break;
        }
    }
    let v0 = -(len.ln() + ln_e0(d));
    let density = PiecewiseLogLinearDensity::new(vec![x[0], x[1]], vec![v0, v0 + d])?
        .normalize()?;
    let obj = objective(&density, p);
    let residual = optimality_residual(&density, p)?;
    if residual > opts.gradient_tol.max(1e-12) * 10.0 {
        return Err(Error::NoConvergence {
            iterations: iters,
            residual,
        });
    }
    Ok(ProjectionResult {
        density,
        objective: obj,
        optimality_residual: residual,
        iterations: iters,
        active_knots: vec![0, 1],
        objective_trace: vec![obj],
    })
}

/// Mean of `u` under the exponential tilt `e^{d u}` on `[0, 1]`, computed
/// in a form stable for any `d`.
fn tilt_mean(d: f64) -> f64 {
    if d <= 0.0 {
        let (e0, e1, _) = exp_kernels(d);
        e1 / e0
    } else {
        let (e0, e1, _) = exp_kernels(-d);
        1.0 - e1 / e0
    }
}

/// Variance of `u` under the same tilt; symmetric in the sign of `d`.
fn tilt_variance(d: f64) -> f64 {
    let (e0, e1, e2) = exp_kernels(-d.abs());
    (e2 / e0 - (e1 / e0).powi(2)).max(f64::MIN_POSITIVE)
}

/// `log E0(d)`, stable for large `d` via `E0(d) = e^d E0(-d)`.
fn ln_e0(d: f64) -> f64 {
    if d <= 0.0 {
        exp_kernels(d).0.ln()
    } else {
        d + exp_kernels(-d).0.ln()
    }
}

/// Active-set Newton state for `m >= 3` atoms.
struct FaceNewton<'a> {
    x: &'a [f64],
    w: &'a [f64],
    opts: &'a SolverOptions,
    /// Sorted atom indices of the current free knots; always contains the
    /// two support endpoints.
    kinks: Vec<usize>,
    /// Full log values, linear between free knots by construction.
    y: Vec<f64>,
    iterations: u32,
    trace: Vec<f64>,
}

impl<'a> FaceNewton<'a> {
    fn new(x: &'a [f64], w: &'a [f64], opts: &'a SolverOptions) -> Self {
        let m = x.len();
        let y0 = -(x[m - 1] - x[0]).ln();
        FaceNewton {
            x,
            w,
            opts,
            kinks: vec![0, m - 1],
            y: vec![y0; m],
            iterations: 0,
        trace: Vec::new(),
        }
    }

    fn run(mut self, p: &DiscreteDistribution) -> Result<ProjectionResult> {
        let m = self.x.len();
        loop {
            // shifting by -log ∫ never lowers the objective and keeps the
            // iterate well scaled
            let z = self.integral();
            if z.is_finite() && z > 0.0 {
                let shift = z.ln();
                for v in &mut self.y {
                    *v -= shift;
                }
            }
            self.newton_on_face()?;
            let (residual, worst) = self.full_residual();
            if residual <= self.opts.gradient_tol {
                break;
            }
            match worst {
                Some(i) => {
                    self.kinks.push(i);
                    self.kinks.sort_unstable();
                }
                None => {
                    // residual driven by within-face directions; tighten
                    if self.iterations >= self.opts.max_iterations {
                        return Err(Error::NoConvergence {
                            iterations: self.iterations,
                            residual,
                        });
                    }
                }
            }
            if self.iterations >= self.opts.max_iterations {
                let (residual, _) = self.full_residual();
                return Err(Error::NoConvergence {
                    iterations: self.iterations,
                    residual,
                });
            }
        }
        let density =
            PiecewiseLogLinearDensity::new(self.x.to_vec(), self.y.clone())?.normalize()?;
        let obj = objective(&density, p);
        self.trace.push(obj);
        let residual = optimality_residual(&density, p)?;
        let mut active = self.kinks.clone();
        if *active.first().unwrap() != 0 {
            active.insert(0, 0);
        }
        if *active.last().unwrap() != m - 1 {
            active.push(m - 1);
        }
        Ok(ProjectionResult {
            density,
            objective: obj,
            optimality_residual: residual,
            iterations: self.iterations,
            active_knots: active,
            objective_trace: self.trace,
        })
    }

    fn integral(&self) -> f64 {
        (0..self.x.len() - 1)
            .map(|j| seg_integral(self.y[j], self.y[j + 1], self.x[j + 1] - self.x[j]))
            .sum()
    }

    /// Free-knot locations and the barycentric aggregation of atom weights
    /// onto them.
    fn face_data(&self) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = self.kinks.iter().map(|&i| self.x[i]).collect();
        let mut bw = vec![0.0; z.len()];
        let mut block = 0usize;
        for (i, (&xi, &wi)) in self.x.iter().zip(self.w).enumerate() {
            while self.kinks[block + 1] < i {
                block += 1;
            }
            if self.kinks[block] == i {
                bw[block] += wi;
            } else if self.kinks[block + 1] == i {
                bw[block + 1] += wi;
            } else {
                let theta = (xi - z[block]) / (z[block + 1] - z[block]);
                bw[block] += wi * (1.0 - theta);
                bw[block + 1] += wi * theta;
            }
        }
        (z, bw)
    }

    fn set_from_face(&mut self, z: &[f64], v: &[f64]) {
        for (block, pair) in self.kinks.windows(2).enumerate() {
            let (i0, i1) = (pair[0], pair[1]);
            self.y[i0] = v[block];
            self.y[i1] = v[block + 1];
            for i in i0 + 1..i1 {
                let theta = (self.x[i] - z[block]) / (z[block + 1] - z[block]);
                self.y[i] = v[block] + theta * (v[block + 1] - v[block]);
            }
        }
    }

    fn face_objective(z: &[f64], bw: &[f64], v: &[f64]) -> f64 {
        let mut e = 0.0;
        let mut integ = 0.0;
        for j in 0..z.len() {
            e += bw[j] * v[j];
            if j + 1 < z.len() {
                integ += seg_integral(v[j], v[j + 1], z[j + 1] - z[j]);
            }
        }
        e - integ + 1.0
    }

    /// Newton iterations restricted to the current face. Returns after the
    /// face gradient is small; boundary hits pool the adjacent slopes and
    /// continue on the smaller face.
    fn newton_on_face(&mut self) -> Result<()> {
        'faces: loop {
            let (z, bw) = self.face_data();
            let k = z.len();
            let mut v: Vec<f64> = self.kinks.iter().map(|&i| self.y[i]).collect();
            // face tolerance: tight enough that every within-face direction
            // (affine, kink hinges) meets the global tolerance
            let face_tol = self.opts.gradient_tol / (4.0 * k as f64);
            loop {
                self.iterations += 1;
                if self.iterations > self.opts.max_iterations {
                    self.set_from_face(&z, &v);
                    return Ok(()); // caller reports NoConvergence
                }
                let (g, diag, off) = face_grad_hess(&z, &bw, &v);
                if g.iter().all(|gi| gi.abs() <= face_tol) {
                    break;
                }
                let mut d = thomas_solve(&diag, &off, &g);
                // cap upward movement to keep exponentials finite
                let up = d.iter().copied().fold(0.0f64, f64::max);
                if up > self.opts.max_up_step_nats {
                    let sc = self.opts.max_up_step_nats / up;
                    for di in &mut d {
                        *di *= sc;
                    }
                }
                // largest step keeping adjacent free slopes ordered
                let (alpha_max, hit) = max_cone_step(&z, &v, &d);
                if alpha_max <= 0.0 {
                    // blocked without moving: the Newton rotation points out
                    // of the cone through an already-tight pair; pool it
                    self.set_from_face(&z, &v);
                    self.merge_flat_kinks(hit.unwrap());
                    continue 'faces;
                }
                let gd: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
                let obj0 = Self::face_objective(&z, &bw, &v);
                let mut alpha = alpha_max.min(1.0);
                let mut accepted = false;
                for _ in 0..self.opts.max_backtracks {
                    let trial: Vec<f64> =
                        v.iter().zip(&d).map(|(vi, di)| vi + alpha * di).collect();
                    if trial == v {
                        // below float resolution; smaller steps cannot move
                        break;
                    }
                    let obj = Self::face_objective(&z, &bw, &trial);
                    if obj.is_finite() && obj >= obj0 + self.opts.armijo_c1 * alpha * gd {
                        v = trial;
                        self.trace.push(obj);
                        accepted = true;
                        break;
                    }
                    alpha *= self.opts.backtrack_factor;
                }
                if !accepted {
                    break; // stalled at float precision; residual check decides
                }
                if let Some(blocked) = hit {
                    if alpha == alpha_max {
                        self.set_from_face(&z, &v);
                        self.merge_flat_kinks(blocked);
                        continue 'faces;
                    }
                }
            }
            self.set_from_face(&z, &v);
            return Ok(());
        }
    }

    /// Remove interior kinks whose adjacent slopes have pooled. `forced` is
    /// the block index whose boundary was hit by the ray search.
    fn merge_flat_kinks(&mut self, forced: usize) {
        let mut remove = vec![false; self.kinks.len()];
        for b in 0..self.kinks.len() - 2 {
            let (i0, i1, i2) = (self.kinks[b], self.kinks[b + 1], self.kinks[b + 2]);
            let s0 = (self.y[i1] - self.y[i0]) / (self.x[i1] - self.x[i0]);
            let s1 = (self.y[i2] - self.y[i1]) / (self.x[i2] - self.x[i1]);
            if (s0 - s1).abs() <= 1e-11 * (1.0 + s0.abs().max(s1.abs())) || b == forced {
                remove[b + 1] = true;
            }
        }
        let mut idx = 0;
        self.kinks.retain(|_| {
            let r = remove[idx];
            idx += 1;
            !r
        });
    }

    /// Full-knot optimality residual and the worst violated non-kink hinge.
    fn full_residual(&self) -> (f64, Option<usize>) {
        let m = self.x.len();
        let mut gf: Vec<f64> = self.w.to_vec();
        for j in 0..m - 1 {
            let sc = segment_calculus(self.y[j], self.y[j + 1], self.x[j + 1] - self.x[j]);
            gf[j] -= sc.d_left;
            gf[j + 1] -= sc.d_right;
        }
        let sum_g: f64 = gf.iter().sum();
        let c = 0.5 * (self.x[0] + self.x[m - 1]);
        let s = 0.5 * (self.x[m - 1] - self.x[0]);
        let xdir: f64 = gf
            .iter()
            .zip(self.x)
            .map(|(g, &xi)| g * (xi - c) / s)
            .sum();
        let mut residual = sum_g.abs().max(xdir.abs());
        // hinge directional derivatives, right-to-left prefix sums
        let mut worst_violation = 0.0;
        let mut worst_idx = None;
        let mut s1 = gf[m - 1];
        let mut sx = gf[m - 1] * self.x[m - 1];
        for i in (1..m - 1).rev() {
            let dd = (sx - self.x[i] * s1) / (self.x[m - 1] - self.x[i]);
            if self.kinks.binary_search(&i).is_ok() {
                residual = residual.max(dd.abs());
            } else {
                // releasing the constraint at i moves along -hinge
                residual = residual.max(-dd);
                if -dd > worst_violation {
                    worst_violation = -dd;
                    worst_idx = Some(i);
                }
            }
            s1 += gf[i];
            sx += gf[i] * self.x[i];
        }
        let pick = if worst_violation > self.opts.gradient_tol {
            worst_idx
        } else {
            None
        };
        (residual, pick)
    }
}

/// Gradient and tridiagonal Hessian of the face objective. Returns
/// `(grad ℓ, diag(-Hess ℓ), offdiag(-Hess ℓ))`; the negated Hessian is
/// positive definite.
fn face_grad_hess(z: &[f64], bw: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = z.len();
    let mut g = bw.to_vec();
    let mut diag = vec![0.0; k];
    let mut off = vec![0.0; k - 1];
    for j in 0..k - 1 {
        let sc = segment_calculus(v[j], v[j + 1], z[j + 1] - z[j]);
        g[j] -= sc.d_left;
        g[j + 1] -= sc.d_right;
        diag[j] += sc.h_ll;
        diag[j + 1] += sc.h_rr;
        off[j] = sc.h_lr;
    }
    (g, diag, off)
}

/// Solve the symmetric positive-definite tridiagonal system
/// `T d = r` with diagonal `diag` and off-diagonal `off`.
fn thomas_solve(diag: &[f64], off: &[f64], r: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let c = off.to_vec();
    let mut d = diag.to_vec();
    let mut b = r.to_vec();
    for j in 1..n {
        let m = c[j - 1] / d[j - 1];
        d[j] -= m * c[j - 1];
        b[j] -= m * b[j - 1];
    }
    let mut out = vec![0.0; n];
    out[n - 1] = b[n - 1] / d[n - 1];
    for j in (0..n - 1).rev() {
        out[j] = (b[j] - c[j] * out[j + 1]) / d[j];
    }
    out
}

/// Largest `alpha` such that `v + alpha d` keeps adjacent free-segment
/// slopes nonincreasing; also returns the blocking block index.
fn max_cone_step(z: &[f64], v: &[f64], d: &[f64]) -> (f64, Option<usize>) {
    let mut alpha: f64 = f64::INFINITY;
    let mut hit = None;
    for j in 0..z.len().saturating_sub(2) {
        let h0 = z[j + 1] - z[j];
        let h1 = z[j + 2] - z[j + 1];
        let cur = (v[j + 1] - v[j]) / h0 - (v[j + 2] - v[j + 1]) / h1;
        let chg = (d[j + 1] - d[j]) / h0 - (d[j + 2] - d[j + 1]) / h1;
        if chg < 0.0 {
            let a = -cur / chg;
            if a < alpha {
                alpha = a.max(0.0);
                hit = Some(j);
            }
        }
    }
    if alpha.is_finite() {
        (alpha, hit)
    } else {
        (f64::INFINITY.min(1e18), None)
    }
}
