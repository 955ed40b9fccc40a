//! Monte-Carlo check of the pointwise convergence `(4/ε) L_N g → Δ_M f` with
//! `g(i, κ) = f(κ·x_i)`, and of how the error scales with `N` and `ε`.
//!
//! Every trial shares a fixed evaluation set (the first points of each dataset);
//! the remaining points are fresh per trial. Errors are split into
//!
//! * total: `|estimate − Δ_M f|`,
//! * variance: `|estimate − surrogate|`, where the surrogate replaces the sample
//!   mean by quadrature over a dense manifold grid (the `N → ∞` limit),
//! * bias: `|surrogate − Δ_M f|`.
//!
//! A cell's statistic is the median over trials of the mean over evaluation points.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{rotate_into, sq_dist, AffinityParams};
use crate::dataset::{rng_from_seed, Dataset, ManifoldSpec, TestFunction};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};

/// Sums of `G` below this are treated as underflow.
pub const UNDERFLOW: f64 = 1e-300;

const EVAL_SALT: u64 = 0x6576_616c;
const BOOT_SALT: u64 = 0x626f_6f74;

fn default_quadrature() -> usize {
    64
}
fn default_eval_points() -> usize {
    32
}
fn default_resolution() -> usize {
    128
}
fn default_bootstrap() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

/// One `(N, ε)` grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub n: usize,
    pub epsilon: f64,
}

/// Sweep configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub manifold: ManifoldSpec,
    /// `"x<k>"` (1-based ambient coordinate) or `"const:<value>"`.
    pub test_function: String,
    pub cells: Vec<Cell>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub exclude_diagonal: bool,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    /// Nodes per angular coordinate of the surrogate grid.
    #[serde(default = "default_resolution")]
    pub surrogate_resolution: usize,
    /// Extra `ε` values at which only the bias is measured.
    #[serde(default)]
    pub bias_epsilons: Vec<f64>,
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Only `"uniform"` is supported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
}

impl ConvergenceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ConvergenceConfig = serde_json::from_str(text).map_err(|e| Error::input(format!("convergence config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: ConvergenceConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.manifold.validate()?;
        if matches!(self.manifold, ManifoldSpec::Custom { .. }) {
            return Err(Error::input("manifold: convergence sweeps need a manifold with a known Laplacian"));
        }
        if let Some(d) = &self.density {
            if d != "uniform" {
                return Err(Error::input(format!("density: only `uniform` sampling is supported, got `{d}`")));
            }
        }
        if self.cells.is_empty() {
            return Err(Error::input("cells: the grid must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::input("trials: must be at least 1"));
        }
        if self.eval_points == 0 {
            return Err(Error::input("eval_points: must be at least 1"));
        }
        if self.quadrature_order == 0 || self.surrogate_resolution == 0 {
            return Err(Error::input("quadrature_order and surrogate_resolution must be positive"));
        }
        for c in &self.cells {
            if c.n == 0 {
                return Err(Error::input("cells: n must be positive"));
            }
            AffinityParams::new(c.epsilon).map_err(|e| Error::input(format!("cells: {e}")))?;
        }
        for e in &self.bias_epsilons {
            AffinityParams::new(*e).map_err(|e| Error::input(format!("bias_epsilons: {e}")))?;
        }
        let f = TestFunction::parse(&self.test_function)?;
        f.laplacian(&self.manifold, &vec![0.0; self.manifold.ambient_dim()])?;
        Ok(())
    }

    pub fn function(&self) -> Result<TestFunction> {
        TestFunction::parse(&self.test_function)
    }

    pub fn group(&self) -> Result<GroupModel> {
        self.manifold
            .default_group(self.quadrature_order, None)
            .build(self.manifold.ambient_dim())
    }
}

/// Seed of trial `trial` in cell `cell`: fixed offsets from the master seed.
pub fn trial_seed(master: u64, cell: usize, trial: usize) -> u64 {
    master
        .wrapping_add((cell as u64 + 1) << 32)
        .wrapping_add(trial as u64)
}

/// Both diagonal variants of the estimate at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatePair {
    pub included: f64,
    pub excluded: f64,
}

impl EstimatePair {
    pub fn pick(&self, exclude_diagonal: bool) -> f64 {
        if exclude_diagonal {
            self.excluded
        } else {
            self.included
        }
    }
}

fn estimate_both(
    dataset: &Dataset,
    params: &AffinityParams,
    f: &TestFunction,
    i: usize,
    kappa: &GroupElement,
) -> Result<EstimatePair> {
    let g = dataset.group();
    let anchor = g.act(kappa, &dataset.point(i));
    let fi = f.eval(&anchor);
    let d = dataset.ambient_dim();
    let mut y = vec![0.0; d];
    let (mut num, mut den) = (0.0, 0.0);
    let (mut num_ii, mut den_ii) = (0.0, 0.0);
    for j in 0..dataset.len() {
        let xj = dataset.point(j);
        let (mut nj, mut dj) = (0.0, 0.0);
        for (t, node) in g.quadrature().iter().enumerate() {
            rotate_into(g, t, &xj, &mut y);
            let k = params.kernel(sq_dist(&anchor, &y)) * node.weight;
            nj += k * (fi - f.eval(&y));
            dj += k;
        }
        num += nj;
        den += dj;
        if j == i {
            num_ii = nj;
            den_ii = dj;
        }
    }
    let scale = 4.0 / params.epsilon();
    let ratio = |n: f64, d: f64| -> Result<f64> {
        if !(d >= UNDERFLOW) {
            return Err(Error::Numerical(format!(
                "kernel sums underflow at point {} (ε = {}); increase epsilon",
                i + 1,
                params.epsilon()
            )));
        }
        Ok(scale * n / d)
    };
    Ok(EstimatePair {
        included: ratio(num, den)?,
        excluded: ratio(num - num_ii, den - den_ii)?,
    })
}

/// `(4/ε)·[f(κ·x_i) − Σ_j F_{i,κ}(x_j) / Σ_j G_{i,κ}(x_j)]`, with the `j = i`
/// term dropped when `exclude_diagonal` is set.
pub fn pointwise_estimate(
    dataset: &Dataset,
    params: &AffinityParams,
    f: &TestFunction,
    i: usize,
    kappa: &GroupElement,
    exclude_diagonal: bool,
) -> Result<f64> {
    Ok(estimate_both(dataset, params, f, i, kappa)?.pick(exclude_diagonal))
}

/// The classical estimate on the raw points, ignoring the symmetry.
pub fn baseline_vanilla_laplacian(dataset: &Dataset, params: &AffinityParams, f: &TestFunction, i: usize) -> Result<f64> {
    let plain = dataset.with_group(GroupModel::trivial(dataset.ambient_dim())?)?;
    pointwise_estimate(&plain, params, f, i, &plain.group().identity(), false)
}

/// Large-sample limit at `x`: the sums over data points replaced by quadrature
/// over `grid` (points and weights).
pub fn surrogate_estimate(
    x: &[f64],
    grid: &(DMatrix<f64>, Vec<f64>),
    group: &GroupModel,
    params: &AffinityParams,
    f: &TestFunction,
) -> Result<f64> {
    let fi = f.eval(x);
    let (pts, w) = grid;
    let d = pts.ncols();
    let mut y = vec![0.0; d];
    let mut p = vec![0.0; d];
    let (mut num, mut den) = (0.0, 0.0);
    for (r, wr) in w.iter().enumerate() {
        for (c, v) in p.iter_mut().enumerate() {
            *v = pts[(r, c)];
        }
        for (t, node) in group.quadrature().iter().enumerate() {
            rotate_into(group, t, &p, &mut y);
            let k = params.kernel(sq_dist(x, &y)) * node.weight * wr;
            num += k * (fi - f.eval(&y));
            den += k;
        }
    }
    if !(den >= UNDERFLOW) {
        return Err(Error::Numerical(format!(
            "surrogate kernel sums underflow (ε = {}); increase epsilon",
            params.epsilon()
        )));
    }
    Ok(4.0 / params.epsilon() * num / den)
}

/// Summary of one per-trial error series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub median: f64,
    pub mean: f64,
    pub q10: f64,
    pub q90: f64,
    pub per_trial: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile(&s, 0.5)
}

impl Stats {
    pub fn new(per_trial: Vec<f64>) -> Self {
        let mut s = per_trial.clone();
        s.sort_by(f64::total_cmp);
        Stats {
            median: quantile(&s, 0.5),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            q10: quantile(&s, 0.1),
            q90: quantile(&s, 0.9),
            per_trial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Bias,
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub n: usize,
    pub epsilon: f64,
    pub total: Stats,
    pub variance: Stats,
    pub bias: f64,
    /// `|included − excluded|` diagonal-term effect.
    pub diagonal: Stats,
    pub regime: Regime,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Stats>,
    /// Baseline median total error over symmetry-aware median total error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantage_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    VarianceVsN,
    VarianceVsEpsilon,
    BiasVsEpsilon,
    DiagonalVsN,
}

/// Least-squares slope of `log y` against `log x` with a bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub kind: FitKind,
    /// Value of the parameter held fixed (`ε` for fits against `N`, `N` for
    /// fits against `ε`); absent for the bias fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: Vec<[f64; 2]>,
    /// False when too few cells were in the matching regime and all were used.
    pub regime_filtered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasPoint {
    pub epsilon: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub manifold: String,
    pub test_function: String,
    pub intrinsic_dim: usize,
    pub group_dim: usize,
    pub exclude_diagonal: bool,
    pub trials: usize,
    pub seed: u64,
    pub cells: Vec<CellReport>,
    pub bias_curve: Vec<BiasPoint>,
    pub fits: Vec<Fit>,
    /// Fraction of cells where the symmetry-aware median error does not exceed the baseline's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantage_fraction: Option<f64>,
}

/// `(slope, intercept)` of the least-squares line through `(log x, log y)`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Bootstrap percentile interval: `samples[k]` are the per-trial (or per-point)
/// values at `x[k]`; each replicate resamples every series and takes its median.
fn bootstrap_ci(x: &[f64], samples: &[&[f64]], reps: usize, seed: u64) -> (f64, f64) {
    if reps == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = rng_from_seed(seed);
    let mut slopes = Vec::with_capacity(reps);
    for _ in 0..reps {
        let y: Vec<f64> = samples
            .iter()
            .map(|s| {
                let re: Vec<f64> = (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).collect();
                median(&re)
            })
            .collect();
        if let Some((s, _)) = loglog_fit(x, &y) {
            if s.is_finite() {
                slopes.push(s);
            }
        }
    }
    if slopes.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    slopes.sort_by(f64::total_cmp);
    (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
}

struct Trial {
    total: f64,
    variance: f64,
    diagonal: f64,
    baseline: Option<f64>,
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Runs the whole sweep.
pub fn run_sweep(config: &ConvergenceConfig) -> Result<RateReport> {
    config.validate()?;
    let f = config.function()?;
    let group = config.group()?;
    let manifold = &config.manifold;
    let max_n = config.cells.iter().map(|c| c.n).max().unwrap();
    let n_eval = config.eval_points.min(max_n);
    let eval_pts = manifold.sample(n_eval, config.seed ^ EVAL_SALT)?;
    let eval_rows: Vec<Vec<f64>> = (0..n_eval).map(|i| eval_pts.row(i).iter().copied().collect()).collect();
    let truth: Vec<f64> = eval_rows
        .iter()
        .map(|x| f.laplacian(manifold, x))
        .collect::<Result<_>>()?;

    // N → ∞ surrogate at the evaluation points, per distinct ε
    let grid = manifold.volume_grid(config.surrogate_resolution)?;
    let all_eps = distinct(
        config
            .cells
            .iter()
            .map(|c| c.epsilon)
            .chain(config.bias_epsilons.iter().copied())
            .collect(),
    );
    let surrogates: Vec<Vec<f64>> = all_eps
        .iter()
        .map(|&e| {
            let p = AffinityParams::new(e)?;
            eval_rows
                .par_iter()
                .map(|x| surrogate_estimate(x, &grid, &group, &p, &f))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let surrogate_for = |e: f64| &surrogates[all_eps.iter().position(|v| *v == e).unwrap()];
    let bias_per_point = |e: f64| -> Vec<f64> {
        surrogate_for(e).iter().zip(&truth).map(|(s, t)| (s - t).abs()).collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let identity = group.identity();
    let mut cells = Vec::with_capacity(config.cells.len());
    for (ci, cell) in config.cells.iter().enumerate() {
        let params = AffinityParams::new(cell.epsilon)?;
        let k = n_eval.min(cell.n);
        let surr = surrogate_for(cell.epsilon);
        let trials: Vec<Trial> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let fresh = manifold.sample(cell.n - k, trial_seed(config.seed, ci, t))?;
                let pts = DMatrix::from_fn(cell.n, manifold.ambient_dim(), |r, c| {
                    if r < k {
                        eval_pts[(r, c)]
                    } else {
                        fresh[(r - k, c)]
                    }
                });
                let ds = Dataset::new(pts, group.clone(), None)?;
                let plain = if config.baseline {
                    Some(ds.with_group(GroupModel::trivial(ds.ambient_dim())?)?)
                } else {
                    None
                };
                let (mut tot, mut var, mut diag, mut base) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..k {
                    let e = estimate_both(&ds, &params, &f, i, &identity)?;
                    let v = e.pick(config.exclude_diagonal);
                    tot += (v - truth[i]).abs();
                    var += (v - surr[i]).abs();
                    diag += (e.included - e.excluded).abs();
                    if let Some(p) = &plain {
                        let b = pointwise_estimate(p, &params, &f, i, &p.group().identity(), config.exclude_diagonal)?;
                        base += (b - truth[i]).abs();
                    }
                }
                let kf = k as f64;
                Ok(Trial {
                    total: tot / kf,
                    variance: var / kf,
                    diagonal: diag / kf,
                    baseline: plain.map(|_| base / kf),
                })
            })
            .collect::<Result<_>>()?;
        let total = Stats::new(trials.iter().map(|t| t.total).collect());
        let variance = Stats::new(trials.iter().map(|t| t.variance).collect());
        let diagonal = Stats::new(trials.iter().map(|t| t.diagonal).collect());
        let bias = mean(&bias_per_point(cell.epsilon)[..k]);
        let baseline = config
            .baseline
            .then(|| Stats::new(trials.iter().map(|t| t.baseline.unwrap()).collect()));
        let advantage_ratio = baseline.as_ref().map(|b| b.median / total.median);
        cells.push(CellReport {
            n: cell.n,
            epsilon: cell.epsilon,
            regime: if variance.median > bias { Regime::Variance } else { Regime::Bias },
            total,
            variance,
            bias,
            diagonal,
            baseline,
            advantage_ratio,
        });
    }

    let bias_curve: Vec<BiasPoint> = all_eps
        .iter()
        .map(|&e| BiasPoint {
            epsilon: e,
            bias: mean(&bias_per_point(e)),
        })
        .collect();

    let mut fits = Vec::new();
    let mut boot_seed = config.seed ^ BOOT_SALT;
    // variance and diagonal effect against N at fixed ε
    for e in distinct(config.cells.iter().map(|c| c.epsilon).collect()) {
        let group_cells: Vec<&CellReport> = cells.iter().filter(|c| c.epsilon == e).collect();
        if distinct(group_cells.iter().map(|c| c.n as f64).collect()).len() < 2 {
            continue;
        }
        for kind in [FitKind::VarianceVsN, FitKind::DiagonalVsN] {
            boot_seed = boot_seed.wrapping_add(1);
            if let Some(fit) = fit_cells(kind, Some(e), &group_cells, |c| c.n as f64, config.bootstrap, boot_seed) {
                fits.push(fit);
            }
        }
    }
    // variance against ε at fixed N
    for n in distinct(config.cells.iter().map(|c| c.n as f64).collect()) {
        let group_cells: Vec<&CellReport> = cells.iter().filter(|c| c.n as f64 == n).collect();
        if distinct(group_cells.iter().map(|c| c.epsilon).collect()).len() < 2 {
            continue;
        }
        boot_seed = boot_seed.wrapping_add(1);
        if let Some(fit) = fit_cells(FitKind::VarianceVsEpsilon, Some(n), &group_cells, |c| c.epsilon, config.bootstrap, boot_seed) {
            fits.push(fit);
        }
    }
    // bias against ε, bootstrapping over evaluation points
    if all_eps.len() >= 2 {
        let per_point: Vec<Vec<f64>> = all_eps.iter().map(|&e| bias_per_point(e)).collect();
        let y: Vec<f64> = per_point.iter().map(|v| mean(v)).collect();
        if let Some((slope, intercept)) = loglog_fit(&all_eps, &y) {
            let mut rng = rng_from_seed(config.seed ^ BOOT_SALT ^ 0xb1a5);
            let mut slopes = Vec::new();
            for _ in 0..config.bootstrap {
                let idx: Vec<usize> = (0..n_eval).map(|_| rng.random_range(0..n_eval)).collect();
                let yb: Vec<f64> = per_point.iter().map(|v| idx.iter().map(|&i| v[i]).sum::<f64>() / n_eval as f64).collect();
                if let Some((s, _)) = loglog_fit(&all_eps, &yb) {
                    slopes.push(s);
                }
            }
            slopes.sort_by(f64::total_cmp);
            let (lo, hi) = if slopes.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (quantile(&slopes, 0.025), quantile(&slopes, 0.975))
            };
            fits.push(Fit {
                kind: FitKind::BiasVsEpsilon,
                fixed: None,
                slope,
                intercept,
                ci_low: lo,
                ci_high: hi,
                points: all_eps.iter().zip(&y).map(|(a, b)| [*a, *b]).collect(),
                regime_filtered: true,
            });
        }
    }

    let advantage_fraction = config.baseline.then(|| {
        let wins = cells
            .iter()
            .filter(|c| c.total.median <= c.baseline.as_ref().unwrap().median)
            .count();
        wins as f64 / cells.len() as f64
    });

    Ok(RateReport {
        manifold: manifold.name().to_string(),
        test_function: f.label(),
        intrinsic_dim: manifold.intrinsic_dim(),
        group_dim: group.manifold_dim(),
        exclude_diagonal: config.exclude_diagonal,
        trials: config.trials,
        seed: config.seed,
        cells,
        bias_curve,
        fits,
        advantage_fraction,
    })
}

fn fit_cells(
    kind: FitKind,
    fixed: Option<f64>,
    cells: &[&CellReport],
    xof: impl Fn(&CellReport) -> f64,
    reps: usize,
    seed: u64,
) -> Option<Fit> {
    let series = |c: &CellReport| -> Vec<f64> {
        match kind {
            FitKind::DiagonalVsN => c.diagonal.per_trial.clone(),
            _ => c.variance.per_trial.clone(),
        }
    };
    let matching: Vec<&CellReport> = match kind {
        FitKind::DiagonalVsN => cells.to_vec(),
        _ => cells.iter().copied().filter(|c| c.regime == Regime::Variance).collect(),
    };
    let (used, filtered) = if matching.len() >= 2 { (matching, true) } else { (cells.to_vec(), false) };
    let x: Vec<f64> = used.iter().map(|c| xof(c)).collect();
    let samples: Vec<Vec<f64>> = used.iter().map(|c| series(c)).collect();
    let y: Vec<f64> = samples.iter().map(|s| median(s)).collect();
    let (slope, intercept) = loglog_fit(&x, &y)?;
    let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
    let (ci_low, ci_high) = bootstrap_ci(&x, &refs, reps, seed);
    Some(Fit {
        kind,
        fixed,
        slope,
        intercept,
        ci_low,
        ci_high,
        points: x.iter().zip(&y).map(|(a, b)| [*a, *b]).collect(),
        regime_filtered: filtered,
    })
}

impl RateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,epsilon,total_median,total_q10,total_q90,variance_median,bias,diagonal_median,baseline_median,advantage_ratio,regime\n",
        );
        for c in &self.cells {
            let (bm, ar) = match (&c.baseline, c.advantage_ratio) {
                (Some(b), Some(r)) => (format!("{:.16e}", b.median), format!("{r:.16e}")),
                _ => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
                c.n,
                c.epsilon,
                c.total.median,
                c.total.q10,
                c.total.q90,
                c.variance.median,
                c.bias,
                c.diagonal.median,
                bm,
                ar,
                match c.regime {
                    Regime::Bias => "bias",
                    Regime::Variance => "variance",
                }
            )
            .unwrap();
        }
        out
    }

    /// Gnuplot data files, one per fit: `x y` columns after a comment header.
    pub fn plot_files(&self) -> Vec<(String, String)> {
        self.fits
            .iter()
            .map(|fit| {
                let (stem, xname) = match fit.kind {
                    FitKind::VarianceVsN => ("variance_vs_n", "n"),
                    FitKind::VarianceVsEpsilon => ("variance_vs_epsilon", "epsilon"),
                    FitKind::BiasVsEpsilon => ("bias_vs_epsilon", "epsilon"),
                    FitKind::DiagonalVsN => ("diagonal_vs_n", "n"),
                };
                let name = match fit.fixed {
                    Some(v) => format!("{stem}_{}.dat", format_tag(v)),
                    None => format!("{stem}.dat"),
                };
                let mut body = format!("# {xname} error  (slope {:.6}, 95% CI [{:.6}, {:.6}])\n", fit.slope, fit.ci_low, fit.ci_high);
                for [x, y] in &fit.points {
                    writeln!(body, "{x:.16e} {y:.16e}").unwrap();
                }
                (name, body)
            })
            .collect()
    }

    /// Writes `report.json`, `cells.csv` and the `.dat` files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            ("report.json".to_string(), self.to_json()),
            ("cells.csv".to_string(), self.to_csv()),
        ];
        files.extend(self.plot_files());
        files
            .into_iter()
            .map(|(name, body)| {
                let p = dir.join(name);
                std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
                Ok(p)
            })
            .collect()
    }

    pub fn fit(&self, kind: FitKind, fixed: Option<f64>) -> Option<&Fit> {
        self.fits.iter().find(|f| f.kind == kind && f.fixed == fixed)
    }
}

fn format_tag(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v}")
    } else {
        format!("{v}").replace('.', "p")
    }
}
