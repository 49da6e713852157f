//! Finite discrete distributions on the real line: moments, one-sided
//! probabilities, truncation, affine images, mixtures, sampling, and the
//! explicit two-point / heavy-tail constructions used by the experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atom locations closer than this are merged at construction.
pub const MERGE_TOL: f64 = 1e-12;
/// Weight sums off by at most this much are renormalized; larger
/// discrepancies are construction errors.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Seed for reproducible sampling. Equal seeds and equal call sequences
/// reproduce identical samples bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derive an independent child seed from a pair of indices
    /// (e.g. sweep cell and trial). The derivation is a fixed splitmix64
    /// mix, so results do not depend on scheduling or call order.
    pub fn derive(self, a: u64, b: u64) -> RngSeed {
        let mut z = self.0 ^ a.wrapping_mul(0x9e3779b97f4a7c15);
        z = splitmix64(z);
        z ^= b.wrapping_mul(0xbf58476d1ce4e5b9);
        RngSeed(splitmix64(z))
    }

    fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A probability distribution with finitely many atoms on the real line.
///
/// Invariants: locations strictly increasing, weights strictly positive and
/// summing to one (renormalized once at construction when off by at most
/// [`WEIGHT_SUM_TOL`]). A single atom is a valid distribution; membership in
/// `P_1` (at least two distinct atoms) is a queryable predicate.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
    /// Cumulative weights, cached for O(log m) one-sided probabilities.
    cum: Vec<f64>,
}

impl DiscreteDistribution {
    /// Build a distribution from `(location, weight)` pairs. Pairs are
    /// sorted; locations within [`MERGE_TOL`] of each other are merged by
    /// summing weights.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        for &(x, w) in &atoms {
            if !x.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "non-finite location {x}"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "weight {w} at location {x} is not strictly positive"
                )));
            }
        }
        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (x, w) in sorted {
            match merged.last_mut() {
                Some(last) if x - last.0 <= MERGE_TOL => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let sum: f64 = merged.iter().map(|a| a.1).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        for a in &mut merged {
            a.1 /= sum;
        }
        Ok(Self::from_merged(merged))
    }

    fn from_merged(atoms: Vec<(f64, f64)>) -> Self {
        let mut cum = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for &(_, w) in &atoms {
            acc += w;
            cum.push(acc);
        }
        DiscreteDistribution { atoms, cum }
    }

    /// Uniform distribution on the given locations.
    pub fn uniform(locations: &[f64]) -> Result<Self> {
        let w = 1.0 / locations.len() as f64;
        Self::new(locations.iter().map(|&x| (x, w)).collect())
    }

    /// Point mass at `x`.
    pub fn point(x: f64) -> Self {
        Self::from_merged(vec![(x, 1.0)])
    }

    /// Empirical distribution of raw draws, each with weight `1/n`.
    pub fn empirical_from_draws(draws: &[f64]) -> Result<Self> {
        let w = 1.0 / draws.len() as f64;
        Self::new(draws.iter().map(|&x| (x, w)).collect())
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Never empty; a constructed distribution has at least one atom.
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.0)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.1)
    }

    /// Whether the distribution lies in `P_1`, i.e. has at least two
    /// distinct atoms. The log-concave projection is defined exactly on
    /// this set.
    pub fn is_in_p1(&self) -> bool {
        self.atoms.len() >= 2
    }

    /// Mean `Σ w_i x_i`.
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * x).sum()
    }

    /// Mean absolute deviation `Σ w_i |x_i − μ|`. Zero exactly when the
    /// distribution is a single atom.
    pub fn epsilon(&self) -> f64 {
        let mu = self.mean();
        self.atoms.iter().map(|&(x, w)| w * (x - mu).abs()).sum()
    }

    /// q-th absolute moment `(Σ w_i |x_i|^q)^{1/q}` for `q > 1`.
    pub fn moment_q(&self, q: f64) -> Result<f64> {
        if !(q > 1.0) {
            return Err(Error::InvalidParameter(format!("moment_q requires q > 1, got {q}")));
        }
        let s: f64 = self.atoms.iter().map(|&(x, w)| w * x.abs().powf(q)).sum();
        Ok(s.powf(1.0 / q))
    }

    /// `Pr[X <= t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        let idx = self.atoms.partition_point(|a| a.0 <= t);
        self.prefix_weight(idx)
    }

    /// `Pr[X < t]`.
    pub fn cdf_strict(&self, t: f64) -> f64 {
        let idx = self.atoms.partition_point(|a| a.0 < t);
        self.prefix_weight(idx)
    }

    /// `Pr[X >= t]`.
    pub fn survival(&self, t: f64) -> f64 {
        (1.0 - self.cdf_strict(t)).clamp(0.0, 1.0)
    }

    /// `Pr[X > t]`.
    pub fn survival_strict(&self, t: f64) -> f64 {
        (1.0 - self.cdf(t)).clamp(0.0, 1.0)
    }

    fn prefix_weight(&self, idx: usize) -> f64 {
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1].clamp(0.0, 1.0)
        }
    }

    /// Clamp every atom into `[-R, R]`, merging duplicates created at the
    /// boundary.
    pub fn truncate(&self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("truncate requires R > 0, got {r}")));
        }
        Self::new(
            self.atoms
                .iter()
                .map(|&(x, w)| (x.clamp(-r, r), w))
                .collect(),
        )
    }

    /// Image under `x -> a x + b` with `a != 0`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "affine map requires finite a != 0, got a={a}, b={b}"
            )));
        }
        Self::new(self.atoms.iter().map(|&(x, w)| (a * x + b, w)).collect())
    }

    /// Mixture of components with positive weights summing to one.
    pub fn mixture(components: &[(DiscreteDistribution, f64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture of zero components".into()));
        }
        let total: f64 = components.iter().map(|c| c.1).sum();
        if components.iter().any(|c| !(c.1 > 0.0)) || (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mixture weights must be positive and sum to 1 (sum {total})"
            )));
        }
        let mut atoms = Vec::new();
        for (dist, pi) in components {
            for &(x, w) in &dist.atoms {
                atoms.push((x, pi * w));
            }
        }
        Self::new(atoms)
    }

    /// Draw `n` i.i.d. samples by inverse CDF and return the empirical
    /// distribution (weights are multiples of `1/n`).
    pub fn sample(&self, n: usize, seed: RngSeed) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("sample of size 0".into()));
        }
        let mut cum = self.cum.clone();
        // guard against the last cumulative weight rounding below 1
        *cum.last_mut().unwrap() = 1.0;
        let mut rng = seed.rng();
        let mut counts = vec![0u64; self.atoms.len()];
        for _ in 0..n {
            let u: f64 = rng.gen();
            let idx = cum.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
            counts[idx] += 1;
        }
        let inv = 1.0 / n as f64;
        Self::new(
            self.atoms
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(&(x, _), &c)| (x, c as f64 * inv))
                .collect(),
        )
    }
}

/// `Unif{-rho, +rho}`, the two-point sphere of radius `rho`.
pub fn two_point_sphere(rho: f64) -> Result<DiscreteDistribution> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "two_point_sphere requires rho > 0, got {rho}"
        )));
    }
    DiscreteDistribution::new(vec![(-rho, 0.5), (rho, 0.5)])
}

/// The matched pair `(P, Q)` of the continuity lower-bound construction:
/// `Q = Unif{-eps, +eps}` and `P` mixes `Unif{-eps, +eps}` (weight `1-beta`)
/// with `Unif{-2eps, +2eps}` (weight `beta`), `beta = min(delta/eps, 1/2)`.
/// Guarantees `epsilon(P) >= epsilon(Q) = eps` and `W1(P, Q) = beta*eps <= delta`.
pub fn lowerbound_pair(eps: f64, delta: f64) -> Result<(DiscreteDistribution, DiscreteDistribution)> {
    if !(eps > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lowerbound_pair requires eps, delta > 0, got eps={eps}, delta={delta}"
        )));
    }
    let beta = (delta / eps).min(0.5);
    let q = two_point_sphere(eps)?;
    let p = DiscreteDistribution::mixture(&[
        (two_point_sphere(eps)?, 1.0 - beta),
        (two_point_sphere(2.0 * eps)?, beta),
    ])?;
    Ok((p, q))
}

/// The misspecified heavy-tail population for the empirical-rate experiment:
/// atoms `±1/2` with weight `(1 - 1/(2n))/2` each and `±n^{1/q}` with weight
/// `1/(4n)` each, so the q-th moment stays bounded by one while a vanishing
/// mass sits far out.
pub fn heavy_tail_radius(n: usize, q: f64) -> Result<DiscreteDistribution> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "heavy_tail_radius requires n >= 2, got {n}"
        )));
    }
    if !(q > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "heavy_tail_radius requires q > 1, got {q}"
        )));
    }
    let nf = n as f64;
    let far = nf.powf(1.0 / q);
    let w_far = 1.0 / (4.0 * nf);
    let w_near = (1.0 - 1.0 / (2.0 * nf)) / 2.0;
    DiscreteDistribution::new(vec![(-far, w_far), (-0.5, w_near), (0.5, w_near), (far, w_far)])
}

// JSON form: {"atoms": [[location, weight], ...]} with locations ascending.
#[derive(Serialize, Deserialize)]
struct DistJson {
    atoms: Vec<(f64, f64)>,
}

impl Serialize for DiscreteDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistJson {
            atoms: self.atoms.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DistJson::deserialize(d)?;
        DiscreteDistribution::new(raw.atoms).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif(locs: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::uniform(locs).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(unif(&[-1.0, 1.0]).mean(), 0.0);
        let p = DiscreteDistribution::new(vec![(0.0, 0.25), (4.0, 0.75)]).unwrap();
        assert!((p.mean() - 3.0).abs() < 1e-15);
        assert_eq!(unif(&[-2.0, 2.0]).mean(), 0.0);
    }

    #[test]
    fn epsilon_examples() {
        assert!((unif(&[-1.0, 1.0]).epsilon() - 1.0).abs() < 1e-15);
        assert_eq!(DiscreteDistribution::point(3.0).epsilon(), 0.0);
        // mu = 1, eps = 0.75*1 + 0.25*3 = 1.5
        let p = DiscreteDistribution::new(vec![(0.0, 0.75), (4.0, 0.25)]).unwrap();
        assert!((p.epsilon() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn epsilon_positive_iff_in_p1() {
        assert!(unif(&[-1.0, 1.0]).is_in_p1());
        assert!(unif(&[-1.0, 1.0]).epsilon() > 0.0);
        let single = DiscreteDistribution::point(3.0);
        assert!(!single.is_in_p1());
        assert_eq!(single.epsilon(), 0.0);
    }

    #[test]
    fn moment_q_examples() {
        assert!((unif(&[-1.0, 1.0]).moment_q(2.0).unwrap() - 1.0).abs() < 1e-15);
        let p = unif(&[0.0, 2.0]);
        assert!((p.moment_q(2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(unif(&[0.0, 1.0]).moment_q(1.0).is_err());
        assert!(unif(&[0.0, 1.0]).moment_q(0.5).is_err());
    }

    #[test]
    fn heavy_tail_moment_bounded() {
        // (1 - 1/2n) 2^{-q} + 1/2 <= 1, checked on a grid of (n, q)
        for &n in &[2usize, 3, 8, 100, 8192] {
            for &q in &[1.5, 2.0, 4.0, 8.0] {
                let p = heavy_tail_radius(n, q).unwrap();
                assert!(p.moment_q(q).unwrap() <= 1.0 + 1e-12, "n={n} q={q}");
            }
        }
        let p = heavy_tail_radius(8, 2.0).unwrap();
        assert!(p.moment_q(2.0).unwrap() <= 1.0);
    }

    #[test]
    fn heavy_tail_shape() {
        let p = heavy_tail_radius(2, 2.0).unwrap();
        let atoms = p.atoms();
        assert_eq!(atoms.len(), 4);
        assert!((atoms[0].0 + 2f64.sqrt()).abs() < 1e-15 && (atoms[0].1 - 0.125).abs() < 1e-15);
        assert!((atoms[1].0 + 0.5).abs() < 1e-15 && (atoms[1].1 - 0.375).abs() < 1e-15);
        // mass outside [-1/2, 1/2] is 1/(2n)
        for &n in &[2usize, 10, 100] {
            let p = heavy_tail_radius(n, 2.0).unwrap();
            let outside = p.cdf_strict(-0.5) + p.survival_strict(0.5);
            assert!((outside - 1.0 / (2.0 * n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_survival_examples() {
        let u = unif(&[-1.0, 1.0]);
        assert_eq!(u.survival_strict(0.0), 0.5);
        assert_eq!(u.survival_strict(1.0), 0.0);
        assert_eq!(u.survival_strict(1.0 - 1e-9), 0.5);
        let p = DiscreteDistribution::new(vec![(0.0, 0.25), (1.0, 0.75)]).unwrap();
        assert_eq!(p.cdf(0.0), 0.25);
        assert_eq!(p.cdf_strict(0.0), 0.0);
        assert_eq!(p.survival(0.0), 1.0);
    }

    #[test]
    fn truncate_examples() {
        let u = unif(&[-2.0, 2.0]).truncate(1.0).unwrap();
        assert_eq!(u.atoms(), unif(&[-1.0, 1.0]).atoms());
        let same = unif(&[-1.0, 1.0]).truncate(5.0).unwrap();
        assert_eq!(same.atoms(), unif(&[-1.0, 1.0]).atoms());
        let p = DiscreteDistribution::new(vec![(-3.0, 0.25), (0.0, 0.5), (3.0, 0.25)]).unwrap();
        let t = p.truncate(1.0).unwrap();
        assert_eq!(t.atoms(), &[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]);
    }

    #[test]
    fn affine_examples() {
        let u = unif(&[-1.0, 1.0]);
        assert_eq!(u.affine(2.0, 0.0).unwrap().atoms(), unif(&[-2.0, 2.0]).atoms());
        assert_eq!(u.affine(-1.0, 0.0).unwrap().atoms(), u.atoms());
        let p = unif(&[0.0, 1.0]).affine(1.0, 3.0).unwrap();
        assert_eq!(p.atoms(), unif(&[3.0, 4.0]).atoms());
        assert!(u.affine(0.0, 1.0).is_err());
    }

    #[test]
    fn mixture_examples() {
        let m = DiscreteDistribution::mixture(&[
            (unif(&[-1.0, 1.0]), 0.9),
            (unif(&[-2.0, 2.0]), 0.1),
        ])
        .unwrap();
        assert_eq!(m.atoms(), &[(-2.0, 0.05), (-1.0, 0.45), (1.0, 0.45), (2.0, 0.05)]);
        let id = DiscreteDistribution::mixture(&[(unif(&[0.0, 1.0]), 1.0)]).unwrap();
        assert_eq!(id.atoms(), unif(&[0.0, 1.0]).atoms());
        let p = unif(&[0.0, 1.0]);
        let dup = DiscreteDistribution::mixture(&[(p.clone(), 0.5), (p.clone(), 0.5)]).unwrap();
        assert_eq!(dup.atoms(), p.atoms());
        assert!(DiscreteDistribution::mixture(&[(p, 0.7)]).is_err());
    }

    #[test]
    fn two_point_examples() {
        let p = two_point_sphere(2.0).unwrap();
        assert_eq!(p.atoms(), &[(-2.0, 0.5), (2.0, 0.5)]);
        assert!((two_point_sphere(1.5).unwrap().epsilon() - 1.5).abs() < 1e-15);
        assert!(two_point_sphere(0.0).is_err());
    }

    #[test]
    fn lowerbound_pair_examples() {
        let (p, q) = lowerbound_pair(1.0, 0.1).unwrap();
        assert_eq!(q.atoms(), &[(-1.0, 0.5), (1.0, 0.5)]);
        assert_eq!(p.atoms(), &[(-2.0, 0.05), (-1.0, 0.45), (1.0, 0.45), (2.0, 0.05)]);
        assert!((q.epsilon() - 1.0).abs() < 1e-15);
        assert!(p.epsilon() >= q.epsilon());
        // beta cap at 1/2
        let (p, _) = lowerbound_pair(1.0, 10.0).unwrap();
        assert_eq!(p.atoms()[0], (-2.0, 0.25));
    }

    #[test]
    fn sampling_determinism_and_support() {
        let p = unif(&[-1.0, 1.0]);
        let a = p.sample(10, RngSeed(42)).unwrap();
        let b = p.sample(10, RngSeed(42)).unwrap();
        assert_eq!(a.atoms(), b.atoms());
        let c = p.sample(10, RngSeed(43)).unwrap();
        assert!(a.atoms() != c.atoms() || a.atoms() == c.atoms()); // either, but deterministic

        let single = DiscreteDistribution::point(0.0);
        let s = single.sample(1, RngSeed(7)).unwrap();
        assert_eq!(s.atoms(), &[(0.0, 1.0)]);
    }

    #[test]
    fn sampling_concentration() {
        // 6-sigma band: weight of atom -1 within 0.5 +- 0.01 for n = 1e5
        let p = unif(&[-1.0, 1.0]);
        let s = p.sample(100_000, RngSeed(42)).unwrap();
        let w = s.atoms()[0].1;
        assert!((w - 0.5).abs() < 0.01, "empirical weight {w}");
    }

    #[test]
    fn derived_seeds_differ() {
        let s = RngSeed(42);
        assert_ne!(s.derive(0, 0), s.derive(0, 1));
        assert_ne!(s.derive(0, 0), s.derive(1, 0));
        assert_eq!(s.derive(3, 5), s.derive(3, 5));
    }

    #[test]
    fn merges_near_duplicates() {
        let p = DiscreteDistribution::new(vec![(0.0, 0.5), (1e-13, 0.25), (1.0, 0.25)]).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p.atoms()[0].1 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn weight_validation() {
        assert!(DiscreteDistribution::new(vec![(0.0, 0.5), (1.0, 0.6)]).is_err());
        // small drift renormalized
        let p = DiscreteDistribution::new(vec![(0.0, 0.5 + 3e-10), (1.0, 0.5)]).unwrap();
        let sum: f64 = p.weights().sum();
        assert!((sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let p = DiscreteDistribution::new(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"atoms":[[-1.0,0.5],[1.0,0.5]]}"#);
        let q: DiscreteDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(p.atoms(), q.atoms());
        assert!(serde_json::from_str::<DiscreteDistribution>(r#"{"atoms":[[0.0,-0.5]]}"#).is_err());
    }
}
