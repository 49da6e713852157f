//! Brute-force verification oracle for the projection solver.
//!
//! Maximizes the same objective `ℓ(φ, P)` over concave piecewise-linear log
//! densities on at most five atoms, but through an independent route: the
//! integral is evaluated by Gauss–Legendre quadrature rather than the
//! closed-form kernels, derivatives come from finite differences of that
//! quadrature objective, and the concavity cone is handled by exhausting
//! every face (kink subset) rather than by the solver's active-set walk.
//!
//! A coordinate grid-refinement pass with pool-adjacent-violators cone
//! projection supplies the incumbent; the face sweep then guarantees the
//! result, since the constrained maximizer is the unconstrained face optimum
//! of its own kink set and every face is visited.

use crate::density::PiecewiseLogLinearDensity;
use crate::dist::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::solver::{optimality_residual, ProjectionResult};

/// 16-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GL16: [(f64, f64); 16] = [
    (-0.9894009349916499, 0.027152459411754037),
    (-0.9445750230732326, 0.062253523938647706),
    (-0.8656312023878318, 0.09515851168249259),
    (-0.755404408355003, 0.12462897125553403),
    (-0.6178762444026438, 0.14959598881657676),
    (-0.45801677765722737, 0.16915651939500262),
    (-0.2816035507792589, 0.1826034150449236),
    (-0.09501250983763745, 0.18945061045506859),
    (0.09501250983763745, 0.18945061045506859),
    (0.2816035507792589, 0.1826034150449236),
    (0.45801677765722737, 0.16915651939500262),
    (0.6178762444026438, 0.14959598881657676),
    (0.755404408355003, 0.12462897125553403),
    (0.8656312023878318, 0.09515851168249259),
    (0.9445750230732326, 0.062253523938647706),
    (0.9894009349916499, 0.027152459411754037),
];

/// Quadrature of `exp(linear)` over `[p, q]` with endpoint log values
/// `a, b`, subdivided so each panel sees at most half a nat of log change.
fn quad_segment(a: f64, b: f64, p: f64, q: f64) -> f64 {
    let nsub = (((b - a).abs() / 0.5).ceil() as usize).clamp(8, 100_000);
    let h = (q - p) / nsub as f64;
    let slope = (b - a) / (q - p);
    let mut total = 0.0;
    for s in 0..nsub {
        let mid = p + (s as f64 + 0.5) * h;
        let mut panel = 0.0;
        for (xi, wi) in GL16 {
            let x = mid + 0.5 * h * xi;
            panel += wi * (a + slope * (x - p)).exp();
        }
        total += panel;
    }
    total * 0.5 * h
}

fn quad_integral(x: &[f64], y: &[f64]) -> f64 {
    (0..x.len() - 1)
        .map(|j| quad_segment(y[j], y[j + 1], x[j], x[j + 1]))
        .sum()
}

fn quad_objective(x: &[f64], w: &[f64], y: &[f64]) -> f64 {
    let e: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    e - quad_integral(x, y) + 1.0
}

/// Pool-adjacent-violators fit of a nonincreasing sequence (equal weights).
fn pava_nonincreasing(s: &[f64]) -> Vec<f64> {
    let mut vals: Vec<f64> = Vec::with_capacity(s.len());
    let mut counts: Vec<usize> = Vec::with_capacity(s.len());
    for &si in s {
        vals.push(si);
        counts.push(1);
        while vals.len() >= 2 && vals[vals.len() - 2] < vals[vals.len() - 1] {
            let (v1, c1) = (vals.pop().unwrap(), counts.pop().unwrap());
            let (v0, c0) = (vals.pop().unwrap(), counts.pop().unwrap());
            vals.push((v0 * c0 as f64 + v1 * c1 as f64) / (c0 + c1) as f64);
            counts.push(c0 + c1);
        }
    }
    let mut out = Vec::with_capacity(s.len());
    for (v, c) in vals.iter().zip(&counts) {
        out.extend(std::iter::repeat_n(*v, *c));
    }
    out
}

/// Project log values onto the concavity cone: fit nonincreasing slopes by
/// PAVA and rebuild from the left endpoint.
fn project_cone(x: &[f64], y: &[f64]) -> Vec<f64> {
    let slopes: Vec<f64> = (0..x.len() - 1)
        .map(|j| (y[j + 1] - y[j]) / (x[j + 1] - x[j]))
        .collect();
    let fitted = pava_nonincreasing(&slopes);
    let mut out = vec![y[0]; y.len()];
    for j in 0..fitted.len() {
        out[j + 1] = out[j] + fitted[j] * (x[j + 1] - x[j]);
    }
    out
}

fn is_feasible(x: &[f64], y: &[f64], tol: f64) -> bool {
    let mut prev = f64::INFINITY;
    for j in 0..x.len() - 1 {
        let s = (y[j + 1] - y[j]) / (x[j + 1] - x[j]);
        if s > prev + tol * (1.0 + prev.abs().max(s.abs())) {
            return false;
        }
        prev = s;
    }
    true
}

/// Coordinate grid refinement over log values with cone projection after
/// every candidate move; supplies the incumbent for the face sweep.
fn coordinate_refine(x: &[f64], w: &[f64], y0: &[f64]) -> Vec<f64> {
    let mut y = project_cone(x, y0);
    let mut best = quad_objective(x, w, &y);
    let mut radius = 4.0;
    for _round in 0..40 {
        for k in 0..y.len() {
            for step in 0..17 {
                let cand_val = y[k] - radius + radius * step as f64 / 8.0;
                let mut cand = y.clone();
                cand[k] = cand_val;
                let cand = project_cone(x, &cand);
                let obj = quad_objective(x, w, &cand);
                if obj > best {
                    best = obj;
                    y = cand;
                }
            }
        }
        radius *= 0.65;
    }
    y
}

fn fd_grad(f: &impl Fn(&[f64]) -> f64, v: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    (0..v.len())
        .map(|k| {
            let mut up = v.to_vec();
            let mut dn = v.to_vec();
            up[k] += h;
            dn[k] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn fd_hess(f: &impl Fn(&[f64]) -> f64, v: &[f64]) -> Vec<Vec<f64>> {
    let h = 1e-4;
    let n = v.len();
    let f0 = f(v);
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut up = v.to_vec();
        let mut dn = v.to_vec();
        up[i] += h;
        dn[i] -= h;
        out[i][i] = (f(&up) + f(&dn) - 2.0 * f0) / (h * h);
        for j in i + 1..n {
            let mut pp = v.to_vec();
            let mut pm = v.to_vec();
            let mut mp = v.to_vec();
            let mut mm = v.to_vec();
            pp[i] += h;
            pp[j] += h;
            pm[i] += h;
            pm[j] -= h;
            mp[i] -= h;
            mp[j] += h;
            mm[i] -= h;
            mm[j] -= h;
            let v2 = (f(&pp) + f(&mm) - f(&pm) - f(&mp)) / (4.0 * h * h);
            out[i][j] = v2;
            out[j][i] = v2;
        }
    }
    out
}

/// Solve `A d = g` for symmetric positive-definite `A` by Cholesky; `None`
/// if the factorization fails.
fn cholesky_solve(a: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for (lik, ljk) in l[i].iter().zip(&l[j]).take(j) {
                s -= lik * ljk;
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut ytmp = vec![0.0; n];
    for i in 0..n {
        let mut s = g[i];
        for (k, yk) in ytmp.iter().enumerate().take(i) {
            s -= l[i][k] * yk;
        }
        ytmp[i] = s / l[i][i];
    }
    let mut d = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = ytmp[i];
        for k in i + 1..n {
            s -= l[k][i] * d[k];
        }
        d[i] = s / l[i][i];
    }
    Some(d)
}

/// Unconstrained maximization of the quadrature objective on the affine
/// hull of one face, by finite-difference Newton with backtracking.
fn face_optimum(
    x: &[f64],
    w: &[f64],
    kinks: &[usize],
    v0: Vec<f64>,
) -> (Vec<f64>, u32) {
    let z: Vec<f64> = kinks.iter().map(|&i| x[i]).collect();
    let interp = |v: &[f64]| -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        let mut block = 0usize;
        for i in 0..x.len() {
            while kinks[block + 1] < i {
                block += 1;
            }
            y[i] = if kinks[block] == i {
                v[block]
            } else if kinks[block + 1] == i {
                v[block + 1]
            } else {
                let th = (x[i] - z[block]) / (z[block + 1] - z[block]);
                v[block] + th * (v[block + 1] - v[block])
            };
        }
        y
    };
    let f = |v: &[f64]| quad_objective(x, w, &interp(v));
    let mut v = v0;
    let mut iters = 0u32;
    for _ in 0..60 {
        iters += 1;
        let g = fd_grad(&f, &v);
        if g.iter().all(|gi| gi.abs() <= 1e-8) {
            break;
        }
        let hess = fd_hess(&f, &v);
        // objective is concave; -H should be PD up to FD noise
        let neg: Vec<Vec<f64>> = hess
            .iter()
            .map(|row| row.iter().map(|&e| -e).collect())
            .collect();
        let mut d = match cholesky_solve(&neg, &g) {
            Some(d) => d,
            None => g.clone(),
        };
        let up = d.iter().copied().fold(0.0f64, f64::max);
        if up > 60.0 {
            let sc = 60.0 / up;
            for di in &mut d {
                *di *= sc;
            }
        }
        let obj0 = f(&v);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let trial: Vec<f64> = v.iter().zip(&d).map(|(vi, di)| vi + alpha * di).collect();
            let obj = f(&trial);
            if obj.is_finite() && obj > obj0 {
                v = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (interp(&v), iters)
}

/// Ground-truth projection for distributions with at most five atoms.
///
/// Agrees with [`crate::solver::project`] to within 1e-6 in objective value;
/// the face sweep makes the maximizer exhaustive rather than heuristic.
pub fn brute_force_oracle(p: &DiscreteDistribution) -> Result<ProjectionResult> {
    if !p.is_in_p1() {
        return Err(Error::NotInP1);
    }
    let m = p.len();
    if m > 5 {
        return Err(Error::InvalidParameter(format!(
            "brute_force_oracle handles at most 5 atoms, got {m}"
        )));
    }
    let x: Vec<f64> = p.locations().collect();
    let w: Vec<f64> = p.weights().collect();
    let y0 = vec![-(x[m - 1] - x[0]).ln(); m];
    let incumbent = coordinate_refine(&x, &w, &y0);
    let mut best_y = incumbent.clone();
    let mut best_obj = quad_objective(&x, &w, &incumbent);
    let mut total_iters = 0u32;

    let interior = m - 2;
    for mask in 0u32..(1 << interior) {
        let mut kinks = vec![0usize];
        for b in 0..interior {
            if mask & (1 << b) != 0 {
                kinks.push(b + 1);
            }
        }
        kinks.push(m - 1);
        let v0: Vec<f64> = kinks.iter().map(|&i| incumbent[i]).collect();
        let (y, iters) = face_optimum(&x, &w, &kinks, v0);
        total_iters += iters;
        if !is_feasible(&x, &y, 1e-7) {
            continue;
        }
        let obj = quad_objective(&x, &w, &y);
        if obj > best_obj {
            best_obj = obj;
            best_y = y;
        }
    }

    // repair float-level slope wiggles, then normalize by the quadrature
    // integral
    let mut y = project_cone(&x, &best_y);
    let shift = quad_integral(&x, &y).ln();
    for v in &mut y {
        *v -= shift;
    }
    let density = PiecewiseLogLinearDensity::new(x.clone(), y.clone())?;
    let obj = {
        let e: f64 = w.iter().zip(&y).map(|(wi, yi)| wi * yi).sum();
        e - quad_integral(&x, &y) + 1.0
    };
    let residual = optimality_residual(&density, p)?;
    let mut active = vec![0usize];
    for j in 1..m - 1 {
        let s0 = (y[j] - y[j - 1]) / (x[j] - x[j - 1]);
        let s1 = (y[j + 1] - y[j]) / (x[j + 1] - x[j]);
        if s0 - s1 > 1e-7 * (1.0 + s0.abs().max(s1.abs())) {
            active.push(j);
        }
    }
    active.push(m - 1);
    Ok(ProjectionResult {
        density,
        objective: obj,
        optimality_residual: residual,
        iterations: total_iters,
        active_knots: active,
        objective_trace: vec![obj],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{project, SolverOptions};

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn pava_pools_violators() {
        assert_eq!(pava_nonincreasing(&[3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(pava_nonincreasing(&[1.0, 3.0]), vec![2.0, 2.0]);
        let f = pava_nonincreasing(&[1.0, 2.0, 3.0]);
        assert!(f.iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let got = quad_segment(0.0, 1.0, 0.0, 1.0);
        assert!((got - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        let got = quad_segment(-2.0, -30.0, 0.0, 3.0);
        let want = crate::density::j_integral(-2.0, -30.0, 3.0).unwrap();
        assert!(((got - want) / want).abs() < 1e-11);
    }

    #[test]
    fn oracle_two_point() {
        let p = DiscreteDistribution::uniform(&[-1.0, 1.0]).unwrap();
        let r = brute_force_oracle(&p).unwrap();
        assert!((r.objective + LN2).abs() < 1e-8);
        let s = project(&p, &SolverOptions::default()).unwrap();
        assert!((r.objective - s.objective).abs() < 1e-6);
    }

    #[test]
    fn oracle_three_point() {
        let p = DiscreteDistribution::uniform(&[-1.0, 0.0, 1.0]).unwrap();
        let r = brute_force_oracle(&p).unwrap();
        let s = project(&p, &SolverOptions::default()).unwrap();
        assert!((r.objective - s.objective).abs() < 1e-6);
        let dh2 = 2.0 - 2.0 * crate::density::hellinger_affinity(&r.density, &s.density).unwrap();
        assert!(dh2 <= 1e-6);
    }

    #[test]
    fn oracle_rejects_large_inputs() {
        let p = DiscreteDistribution::uniform(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(brute_force_oracle(&p).is_err());
    }
}
