//! Seeded Monte Carlo and deterministic sweeps: the continuity-rate sweep,
//! the misspecified empirical-rate experiment, the square-root-CDF tail
//! study, and a property battery that checks every exact lemma on a
//! randomized corpus.
//!
//! Reproducibility contract: a given config (seed included) renders
//! byte-identical CSV regardless of thread count, because every trial draws
//! from a seed derived from `(seed, cell, trial)` and aggregation follows
//! trial order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::density::PiecewiseLogLinearDensity;
use crate::dist::{heavy_tail_radius, lowerbound_pair, DiscreteDistribution, RngSeed};
use crate::error::{Error, Result};
use crate::metrics::{continuity_record, delta_cdf, hellinger_sq, wasserstein1, ContinuityRecord};
use crate::solver::{project, SolverOptions};

/// Experiment configuration, dispatched on the JSON `kind` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepConfig {
    Continuity(ContinuityConfig),
    EmpiricalRate(EmpiricalRateConfig),
    DeltaCdfTail(DeltaCdfTailConfig),
    PropertyBattery(BatteryConfig),
}

/// Optional output destinations carried inside a sweep config; the CLI
/// resolves them against its own flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

impl SweepConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            SweepConfig::Continuity(_) => "continuity",
            SweepConfig::EmpiricalRate(_) => "empirical_rate",
            SweepConfig::DeltaCdfTail(_) => "delta_cdf_tail",
            SweepConfig::PropertyBattery(_) => "property_battery",
        }
    }

    /// Replace the seed (CLI `--seed` override).
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            SweepConfig::Continuity(c) => c.seed = seed,
            SweepConfig::EmpiricalRate(c) => c.seed = seed,
            SweepConfig::DeltaCdfTail(c) => c.seed = seed,
            SweepConfig::PropertyBattery(c) => c.seed = seed,
        }
    }

    pub fn output(&self) -> &OutputPaths {
        match self {
            SweepConfig::Continuity(c) => &c.output,
            SweepConfig::EmpiricalRate(c) => &c.output,
            SweepConfig::DeltaCdfTail(c) => &c.output,
            SweepConfig::PropertyBattery(c) => &c.output,
        }
    }
}

fn default_seed() -> u64 {
    42
}

fn continuity_band() -> (f64, f64) {
    (0.20, 0.30)
}

fn default_multiplier() -> f64 {
    5.0
}

fn default_reference_atoms() -> usize {
    10_000
}

fn default_corpus_count() -> usize {
    500
}

/// Deterministic sweep over the matched lower-bound pairs: for each delta,
/// the Hellinger distance between the two projections is recorded and the
/// log-log slope against delta is fitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuityConfig {
    pub eps: f64,
    pub deltas: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "continuity_band")]
    pub slope_band: (f64, f64),
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: OutputPaths,
}

/// Population for the empirical-rate experiment: either the n-dependent
/// heavy-tail construction or a fixed distribution (well-specified control).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PopulationSpec {
    #[default]
    HeavyTail,
    Fixed { distribution: DiscreteDistribution },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalRateConfig {
    pub q: f64,
    pub n_grid: Vec<usize>,
    pub trials: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub population: PopulationSpec,
    /// Expected slope band; defaults to the theory exponent
    /// `-(1/2 - 1/(2q))` plus/minus 0.10 for the heavy-tail population, and
    /// to no check for a fixed population.
    #[serde(default)]
    pub slope_band: Option<(f64, f64)>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaCdfTailConfig {
    pub n_grid: Vec<usize>,
    pub trials: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Acceptance multiplier in `q95 <= multiplier sqrt(log n / n)`.
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Atom count of the uniform-grid reference discretization.
    #[serde(default = "default_reference_atoms")]
    pub reference_atoms: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryConfig {
    #[serde(default = "default_corpus_count")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: OutputPaths,
}

/// One grid cell of a rate experiment. For the continuity sweep `mean` is
/// the Hellinger distance itself; for the tail study it is the empirical
/// 0.95-quantile the slope is fitted on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub x: f64,
    pub trials: u32,
    pub mean: f64,
    pub se: f64,
    /// Trials whose sample left `P_1` (counted with squared Hellinger 2).
    pub degenerate: u32,
}

/// Aggregated sweep outcome: per-cell statistics, the fitted log-log slope
/// with its standard error, and the pass flag (band overlap at two standard
/// errors, or the per-cell quantile criterion for the tail study).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: String,
    pub cells: Vec<CellRecord>,
    pub slope: f64,
    pub slope_se: f64,
    pub band: Option<(f64, f64)>,
    pub pass: bool,
    /// Fully rendered CSV; byte-identical across runs of the same config.
    pub csv: String,
}

impl RateReport {
    /// Summary JSON `{"pass":..., "se":..., "slope":...}`.
    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "slope": self.slope,
            "se": self.slope_se,
            "pass": self.pass,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryRow {
    pub lemma: String,
    pub case_id: String,
    /// Slack remaining in the checked inequality; negative means violated
    /// beyond the lemma's numeric tolerance.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryReport {
    pub rows: Vec<BatteryRow>,
    pub total: usize,
    pub failed: usize,
    pub pass: bool,
    pub csv: String,
}

impl BatteryReport {
    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "pass": self.pass,
            "total": self.total,
            "failed": self.failed,
        })
        .to_string()
    }
}

/// Least-squares slope of `ln y` on `ln x` with its standard error.
fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter(
            "slope fit needs at least two cells".into(),
        ));
    }
    if ys.iter().any(|&y| !(y > 0.0)) {
        return Err(Error::InvalidParameter(
            "slope fit needs positive cell values".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let se = if lx.len() > 2 {
        let icpt = my - slope * mx;
        let ss_res: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(x, y)| (y - (icpt + slope * x)).powi(2))
            .sum();
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, se))
}

fn bands_overlap(slope: f64, se: f64, band: (f64, f64)) -> bool {
    let lo = slope - 2.0 * se;
    let hi = slope + 2.0 * se;
    hi >= band.0 && lo <= band.1
}

/// Deterministic continuity sweep over the lower-bound pair family.
/// Requires the delta grid to span at least 2.5 decades with every delta at
/// most `eps / 2`.
pub fn run_continuity_sweep(cfg: &ContinuityConfig) -> Result<RateReport> {
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidParameter("empty delta grid".into()));
    }
    if !(cfg.eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {}", cfg.eps)));
    }
    let dmin = cfg.deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = cfg.deltas.iter().copied().fold(0.0f64, f64::max);
    if dmax > cfg.eps / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "deltas must satisfy delta <= eps/2 (max delta {dmax}, eps {})",
            cfg.eps
        )));
    }
    if (dmax / dmin).log10() < 2.5 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "delta grid must span at least 2.5 decades, got {:.2}",
            (dmax / dmin).log10()
        )));
    }
    let mut deltas = cfg.deltas.clone();
    deltas.sort_by(f64::total_cmp);
    let records: Vec<(f64, ContinuityRecord)> = deltas
        .par_iter()
        .map(|&d| {
            let (p, q) = lowerbound_pair(cfg.eps, d)?;
            Ok((d, continuity_record(&p, &q, &cfg.solver)?))
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from(ContinuityRecord::CSV_HEADER);
    csv.push('\n');
    let mut cells = Vec::new();
    for (d, rec) in &records {
        csv.push_str(&rec.csv_row(*d, cfg.eps));
        csv.push('\n');
        cells.push(CellRecord {
            x: *d,
            trials: 1,
            mean: rec.dh,
            se: 0.0,
            degenerate: 0,
        });
    }
    let xs: Vec<f64> = cells.iter().map(|c| c.x).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.mean).collect();
    let (slope, slope_se) = fit_loglog(&xs, &ys)?;
    let pass = bands_overlap(slope, slope_se, cfg.slope_band);
    Ok(RateReport {
        kind: "continuity".into(),
        cells,
        slope,
        slope_se,
        band: Some(cfg.slope_band),
        pass,
        csv,
    })
}

/// Monte Carlo estimate of the empirical projection rate: per sample size,
/// `trials` empirical distributions are projected against the population
/// projection and the squared Hellinger distances averaged. Samples that
/// collapse to a single atom count as the maximum squared distance, 2.
pub fn run_empirical_rate(cfg: &EmpiricalRateConfig) -> Result<RateReport> {
    if cfg.n_grid.is_empty() || cfg.trials == 0 {
        return Err(Error::InvalidParameter(
            "empirical rate needs a nonempty n grid and at least one trial".into(),
        ));
    }
    let seed = RngSeed(cfg.seed);
    let mut cells = Vec::new();
    for (ci, &n) in cfg.n_grid.iter().enumerate() {
        let population = match &cfg.population {
            PopulationSpec::HeavyTail => heavy_tail_radius(n, cfg.q)?,
            PopulationSpec::Fixed { distribution } => distribution.clone(),
        };
        let f_pop = project(&population, &cfg.solver)?.density;
        let values: Vec<(f64, bool)> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let s = population.sample(n, seed.derive(ci as u64, t as u64))?;
                if !s.is_in_p1() {
                    return Ok((2.0, true));
                }
                let f_samp = project(&s, &cfg.solver)?.density;
                Ok((hellinger_sq(&f_samp, &f_pop)?, false))
            })
            .collect::<Result<_>>()?;
        let t = cfg.trials as f64;
        let mean = values.iter().map(|v| v.0).sum::<f64>() / t;
        let var = if cfg.trials > 1 {
            values.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / (t - 1.0)
        } else {
            0.0
        };
        cells.push(CellRecord {
            x: n as f64,
            trials: cfg.trials,
            mean,
            se: (var / t).sqrt(),
            degenerate: values.iter().filter(|v| v.1).count() as u32,
        });
    }
    let mut csv = String::from("n,trials,mean_dh2,se_dh2,not_in_p1\n");
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c.x, c.trials, c.mean, c.se, c.degenerate
        ));
    }
    let xs: Vec<f64> = cells.iter().map(|c| c.x).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.mean).collect();
    let (slope, slope_se) = if cells.len() >= 2 {
        fit_loglog(&xs, &ys)?
    } else {
        (0.0, 0.0)
    };
    let band = cfg.slope_band.or(match cfg.population {
        PopulationSpec::HeavyTail => {
            let theory = -(0.5 - 0.5 / cfg.q);
            Some((theory - 0.10, theory + 0.10))
        }
        PopulationSpec::Fixed { .. } => None,
    });
    let pass = band.is_none_or(|b| bands_overlap(slope, slope_se, b));
    Ok(RateReport {
        kind: "empirical_rate".into(),
        cells,
        slope,
        slope_se,
        band,
        pass,
        csv,
    })
}

/// Uniform grid discretization of `Unif[0,1]` on `m` midpoints.
fn uniform_reference(m: usize) -> Result<DiscreteDistribution> {
    let w = 1.0 / m as f64;
    DiscreteDistribution::new((0..m).map(|k| ((k as f64 + 0.5) * w, w)).collect())
}

/// Order statistic at level `p` of sorted `v`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[idx - 1]
}

/// Tail study of `Δ_CDF` between the empirical distribution of `n` uniform
/// draws and a fixed grid discretization of `Unif[0,1]`. Reports the
/// empirical 0.95-quantile per cell against `multiplier sqrt(log n / n)`.
pub fn run_delta_cdf_tail(cfg: &DeltaCdfTailConfig) -> Result<RateReport> {
    if cfg.n_grid.is_empty() || cfg.trials == 0 {
        return Err(Error::InvalidParameter(
            "delta_cdf tail needs a nonempty n grid and at least one trial".into(),
        ));
    }
    let reference = uniform_reference(cfg.reference_atoms)?;
    let seed = RngSeed(cfg.seed);
    let mut cells = Vec::new();
    let mut csv = format!(
        "# reference: {}-atom uniform grid discretization of Unif[0,1]; discretization bias on the sup terms <= {:.4}\n",
        cfg.reference_atoms,
        (1.0 / cfg.reference_atoms as f64).sqrt()
    );
    csv.push_str("n,trials,median,q95,rate,q95_over_rate\n");
    let mut all_pass = true;
    for (ci, &n) in cfg.n_grid.iter().enumerate() {
        let mut vals: Vec<f64> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let child = seed.derive(ci as u64, t as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(child.0);
                let draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let emp = DiscreteDistribution::empirical_from_draws(&draws)?;
                Ok(delta_cdf(&emp, &reference))
            })
            .collect::<Result<_>>()?;
        vals.sort_by(f64::total_cmp);
        let q95 = quantile(&vals, 0.95);
        let median = quantile(&vals, 0.5);
        let rate = ((n as f64).ln() / n as f64).sqrt();
        all_pass &= q95 <= cfg.multiplier * rate;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            n,
            cfg.trials,
            median,
            q95,
            rate,
            q95 / rate
        ));
        cells.push(CellRecord {
            x: n as f64,
            trials: cfg.trials,
            mean: q95,
            se: 0.0,
            degenerate: 0,
        });
    }
    let xs: Vec<f64> = cells.iter().map(|c| c.x).collect();
    let ys: Vec<f64> = cells.iter().map(|c| c.mean).collect();
    let (slope, slope_se) = if cells.len() >= 2 {
        fit_loglog(&xs, &ys)?
    } else {
        (0.0, 0.0)
    };
    Ok(RateReport {
        kind: "delta_cdf_tail".into(),
        cells,
        slope,
        slope_se,
        band: None,
        pass: all_pass,
        csv,
    })
}

/// Seeded randomized corpus: atom counts 2 to 8, locations in `[-5, 5]`
/// separated by at least 1e-3, Dirichlet(1,...,1) weights.
pub fn seeded_corpus(count: usize, seed: RngSeed) -> Vec<DiscreteDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let m = rng.gen_range(2..=8);
        let mut locs: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
        locs.sort_by(f64::total_cmp);
        if locs.windows(2).any(|w| w[1] - w[0] < 1e-3) {
            continue;
        }
        let raw: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let atoms: Vec<(f64, f64)> = locs.iter().zip(&raw).map(|(&x, &e)| (x, e / total)).collect();
        match DiscreteDistribution::new(atoms) {
            Ok(d) => out.push(d),
            Err(_) => continue,
        }
    }
    out
}

struct LemmaChecks<'a> {
    dist: &'a DiscreteDistribution,
    proj: PiecewiseLogLinearDensity,
}

const MOMENT_QS: [f64; 3] = [1.5, 2.0, 4.0];
const TRUNCATION_RADII: [f64; 4] = [0.5, 1.0, 2.0, 5.0];
const AFFINE_MAPS: [(f64, f64); 4] = [(2.0, 0.0), (1.0, 3.0), (-1.0, 0.0), (0.5, -1.0)];

impl<'a> LemmaChecks<'a> {
    /// `E_P[h] - E_f[h]` minimized over the convex test functions
    /// `|x-c|, (x-c)^2` for `c in {0, mean, 1}` and `e^{0.3x}`.
    fn convex_order_margin(&self) -> Result<f64> {
        let p = self.dist;
        let f = &self.proj;
        let mut margin = f64::INFINITY;
        for c in [0.0, p.mean(), 1.0] {
            let ep_abs: f64 = p.atoms().iter().map(|&(x, w)| w * (x - c).abs()).sum();
            margin = margin.min(ep_abs - f.abs_moment_about(c)?);
            let ep_sq: f64 = p.atoms().iter().map(|&(x, w)| w * (x - c).powi(2)).sum();
            margin = margin.min(ep_sq - f.second_moment_about(c)?);
        }
        let ep_exp: f64 = p.atoms().iter().map(|&(x, w)| w * (0.3 * x).exp()).sum();
        margin = margin.min(ep_exp - f.mgf(0.3)?);
        Ok(margin)
    }

    fn mean_margin(&self) -> Result<f64> {
        Ok(-(self.proj.mean()? - self.dist.mean()).abs())
    }

    fn variance_margin(&self) -> Result<f64> {
        Ok(16.0 * self.dist.epsilon().powi(2) - self.proj.variance()?)
    }

    fn truncation_margin(&self) -> Result<f64> {
        let mut margin = f64::INFINITY;
        for q in MOMENT_QS {
            let mq = self.dist.moment_q(q)?;
            for r in TRUNCATION_RADII {
                let bound = mq.powf(q) / r.powf(q - 1.0);
                let d = wasserstein1(self.dist, &self.dist.truncate(r)?);
                margin = margin.min(bound - d);
            }
        }
        Ok(margin)
    }

    fn above_below_margin(&self) -> Result<f64> {
        let mu = self.dist.mean();
        let min_mass = self
            .dist
            .survival_strict(mu)
            .min(self.dist.cdf_strict(mu));
        let mut margin = f64::INFINITY;
        for q in MOMENT_QS {
            let mq = self.dist.moment_q(q)?;
            let bound = (self.dist.epsilon() / (4.0 * mq)).powf(q / (q - 1.0));
            margin = margin.min(min_mass - bound);
        }
        Ok(margin)
    }

    fn affine_margin(&self, solver: &SolverOptions) -> Result<f64> {
        let mut worst = 0.0f64;
        for (a, b) in AFFINE_MAPS {
            let direct = project(&self.dist.affine(a, b)?, solver)?.density;
            let image = self.proj.affine(a, b)?;
            let dh = hellinger_sq(&direct, &image)?.max(0.0).sqrt();
            worst = worst.max(dh);
        }
        Ok(-worst)
    }

    fn ball_margin(&self) -> f64 {
        let mu = self.dist.mean();
        let r = 0.01 * self.dist.epsilon();
        let fmax = self.proj.max_log().0.exp();
        let mut min_ratio = f64::INFINITY;
        for i in 0..=20 {
            let x = mu - r + 2.0 * r * i as f64 / 20.0;
            min_ratio = min_ratio.min(self.proj.eval(x) / fmax);
        }
        min_ratio
    }

    fn first_moment_ratio(&self) -> Result<f64> {
        Ok(self.proj.abs_moment_about(self.dist.mean())? / self.dist.epsilon())
    }
}

/// Run every exact-lemma check across the seeded corpus; one row per
/// (lemma, distribution) with the remaining margin.
pub fn run_property_battery(cfg: &BatteryConfig) -> Result<BatteryReport> {
    if cfg.count < 2 {
        return Err(Error::InvalidParameter(
            "battery needs at least two corpus distributions".into(),
        ));
    }
    let corpus = seeded_corpus(cfg.count, RngSeed(cfg.seed));
    let eps: Vec<f64> = corpus.iter().map(|d| d.epsilon()).collect();

    // pairwise epsilon Lipschitz bound: per distribution, the minimum margin
    // of 2 W1 - |eps_i - eps_j| over the rest of the corpus
    let mut lip_margin = vec![f64::INFINITY; corpus.len()];
    for i in 0..corpus.len() {
        for j in i + 1..corpus.len() {
            let m = 2.0 * wasserstein1(&corpus[i], &corpus[j]) - (eps[i] - eps[j]).abs();
            lip_margin[i] = lip_margin[i].min(m);
            lip_margin[j] = lip_margin[j].min(m);
        }
    }

    let projections: Vec<PiecewiseLogLinearDensity> = corpus
        .par_iter()
        .map(|d| Ok(project(d, &cfg.solver)?.density))
        .collect::<Result<_>>()?;

    // empirical stand-in for the main-theorem constant: over seeded corpus
    // pairs (i, i+1) and (i, i+2), the continuity ratio
    // dH / (dW / eps_max)^{1/4} stays below the calibrated ceiling 10;
    // per-distribution margin is 10 minus its worst pair ratio
    let n = corpus.len();
    let mut ratio_margin = vec![f64::INFINITY; n];
    for offset in [1usize, 2] {
        for i in 0..n.saturating_sub(offset) {
            let j = i + offset;
            let dw = wasserstein1(&corpus[i], &corpus[j]);
            if dw == 0.0 {
                continue;
            }
            let dh = hellinger_sq(&projections[i], &projections[j])?.max(0.0).sqrt();
            let ratio = dh / (dw / eps[i].max(eps[j])).powf(0.25);
            ratio_margin[i] = ratio_margin[i].min(10.0 - ratio);
            ratio_margin[j] = ratio_margin[j].min(10.0 - ratio);
        }
    }

    let per_dist: Vec<Vec<BatteryRow>> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, dist)| {
            let case = format!("dist{i:04}");
            let proj = projections[i].clone();
            let checks = LemmaChecks { dist, proj };
            let mut rows = Vec::with_capacity(10);
            let mut push = |lemma: &str, margin: f64, slack: f64| {
                rows.push(BatteryRow {
                    lemma: lemma.into(),
                    case_id: case.clone(),
                    margin,
                    pass: margin >= -slack,
                });
            };
            push("eps_lipschitz", lip_margin[i], 1e-12);
            push("continuity_ratio_ceiling", ratio_margin[i], 0.0);
            push("convex_order", checks.convex_order_margin()?, 1e-6);
            push("mean_preservation", checks.mean_margin()?, 1e-6);
            push("variance_upper", checks.variance_margin()?, 1e-6);
            push("truncation_wasserstein", checks.truncation_margin()?, 1e-12);
            push("above_below_mass", checks.above_below_margin()?, 1e-12);
            push("affine_equivariance", checks.affine_margin(&cfg.solver)?, 1e-4);
            let ball = checks.ball_margin();
            rows.push(BatteryRow {
                lemma: "ball_lower_bound".into(),
                case_id: case.clone(),
                margin: ball,
                pass: ball > 0.0,
            });
            let ratio = checks.first_moment_ratio()?;
            rows.push(BatteryRow {
                lemma: "first_moment_ratio".into(),
                case_id: case.clone(),
                margin: ratio,
                pass: ratio > 0.0 && ratio <= 1.0 + 1e-6,
            });
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<BatteryRow> = per_dist.into_iter().flatten().collect();

    // the canonical non-uniform-continuity fixture
    let f = PiecewiseLogLinearDensity::uniform(-0.25, 0.25)?;
    let g = PiecewiseLogLinearDensity::uniform(-1.0 / 16.0, 1.0 / 16.0)?;
    let dh2 = hellinger_sq(&f, &g)?;
    rows.push(BatteryRow {
        lemma: "hellinger_fixture".into(),
        case_id: "unif_quarter_vs_sixteenth".into(),
        margin: -(dh2 - 1.0).abs(),
        pass: (dh2 - 1.0).abs() <= 1e-10,
    });

    let failed = rows.iter().filter(|r| !r.pass).count();
    let mut csv = String::from("lemma,case,margin,pass\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.lemma, r.case_id, r.margin, r.pass));
    }
    Ok(BatteryReport {
        total: rows.len(),
        failed,
        pass: failed == 0,
        rows,
        csv,
    })
}

/// Dispatch a sweep config. Battery reports are wrapped so callers get a
/// uniform (csv, summary, pass) view.
pub enum SweepOutcome {
    Rate(RateReport),
    Battery(BatteryReport),
}

impl SweepOutcome {
    pub fn csv(&self) -> &str {
        match self {
            SweepOutcome::Rate(r) => &r.csv,
            SweepOutcome::Battery(b) => &b.csv,
        }
    }

    pub fn summary_json(&self) -> String {
        match self {
            SweepOutcome::Rate(r) => r.summary_json(),
            SweepOutcome::Battery(b) => b.summary_json(),
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            SweepOutcome::Rate(r) => r.pass,
            SweepOutcome::Battery(b) => b.pass,
        }
    }
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    Ok(match cfg {
        SweepConfig::Continuity(c) => SweepOutcome::Rate(run_continuity_sweep(c)?),
        SweepConfig::EmpiricalRate(c) => SweepOutcome::Rate(run_empirical_rate(c)?),
        SweepConfig::DeltaCdfTail(c) => SweepOutcome::Rate(run_delta_cdf_tail(c)?),
        SweepConfig::PropertyBattery(c) => SweepOutcome::Battery(run_property_battery(c)?),
    })
}

/// Log-spaced grid helper used by configs and tests.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lo > 0.0 && hi > lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
