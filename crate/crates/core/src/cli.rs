//! Command-line front end: `generate`, `spectrum`, `validate`, `converge`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::affinity::{median_sq_distance, AffinityParams};
use crate::binfmt::Dtype;
use crate::convergence::{run_sweep, ConvergenceConfig};
use crate::dataset::{generate, Dataset, ManifoldSpec};
use crate::error::{Error, Result};
use crate::group::GroupDescriptor;
use crate::harmonic::{assemble_all, auto_truncation, TruncationReport, DEFAULT_TAIL_ENERGY_TOL, HERMITIAN_HARD_TOL, HERMITIAN_WARN_TOL};
use crate::oracle::{compare_spectra, dense_laplacian, EXACT_TOL, QUADRATURE_TOL};
use crate::spectral::{eigvec_file_name, read_eigvecs, SpectralBundle};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "KINVLAP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kinvlap", version, about = "K-invariant graph Laplacians of group-invariant point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    Complex128,
    Complex64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::Complex128 => Dtype::Complex128,
            DtypeArg::Complex64 => Dtype::Complex64,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset bundle (points.csv, group.json, meta.json) from a JSON config.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full spectrum through the per-irrep blocks.
    Spectrum {
        dataset: PathBuf,
        /// Kernel bandwidth; defaults to the median squared pairwise distance.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Keep irreps with |label| ≤ LMAX; defaults to the tail-energy choice.
        #[arg(long)]
        lmax: Option<usize>,
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "complex128")]
        dtype: DtypeArg,
        /// Tail-energy tolerance for the automatic truncation.
        #[arg(long, default_value_t = DEFAULT_TAIL_ENERGY_TOL)]
        tail_tol: f64,
    },
    /// Compare the block spectrum with the dense augmented-graph Laplacian.
    Validate {
        dataset: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        lmax: Option<usize>,
        #[arg(long)]
        normalized: bool,
        /// Maximum eigenvalue deviation; defaults to 1e-8 for finite groups, 1e-6 otherwise.
        #[arg(long)]
        tol: Option<f64>,
        /// Also check the eigenvector files of a `spectrum` output directory.
        #[arg(long)]
        spectrum: Option<PathBuf>,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a convergence sweep.
    Converge {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `generate` config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub manifold: ManifoldSpec,
    pub n: usize,
    pub seed: u64,
    /// Defaults to the manifold's natural symmetry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupDescriptor>,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
}

fn default_quadrature() -> usize {
    64
}

impl GenerateConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match configure_threads().and_then(|_| execute(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::input(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a pool may already exist when run() is called repeatedly in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Generate { config, out } => cmd_generate(config, out).map(|hash| println!("{hash}")),
        Command::Spectrum {
            dataset,
            epsilon,
            lmax,
            normalized,
            out,
            dtype,
            tail_tol,
        } => cmd_spectrum(dataset, *epsilon, *lmax, *normalized, out, (*dtype).into(), *tail_tol).map(|_| ()),
        Command::Validate {
            dataset,
            epsilon,
            lmax,
            normalized,
            tol,
            spectrum,
            out,
        } => {
            let report = cmd_validate(dataset, *epsilon, *lmax, *normalized, *tol, spectrum.as_deref())?;
            let text = report.to_json();
            println!("{text}");
            if let Some(p) = out {
                std::fs::write(p, text + "\n").map_err(|e| Error::io(p, e))?;
            }
            if report.passed {
                Ok(())
            } else {
                Err(Error::Mismatch(format!(
                    "max eigenvalue deviation {:e} exceeds {:e} ({} unmatched)",
                    report.max_abs_dev, report.tolerance, report.unmatched
                )))
            }
        }
        Command::Converge { config, out } => {
            let report = cmd_converge(config, out)?;
            for f in &report.fits {
                println!(
                    "{:?}{}: slope {:.16e} [{:.16e}, {:.16e}]",
                    f.kind,
                    f.fixed.map(|v| format!(" @ {v}")).unwrap_or_default(),
                    f.slope,
                    f.ci_low,
                    f.ci_high
                );
            }
            Ok(())
        }
    }
}

/// Writes the bundle and returns its hash.
pub fn cmd_generate(config: &Path, out: &Path) -> Result<String> {
    let c = GenerateConfig::load(config)?;
    c.manifold.validate()?;
    let group = c
        .group
        .clone()
        .unwrap_or_else(|| c.manifold.default_group(c.quadrature_order, None));
    let ds = generate(&c.manifold, c.n, c.seed, &group)?;
    ds.save_bundle(out)?;
    Ok(ds.hash())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    User,
    MedianHeuristic,
}

/// `ε` given by the user, or the median squared pairwise distance.
pub fn resolve_epsilon(ds: &Dataset, epsilon: Option<f64>) -> Result<(AffinityParams, EpsilonSource)> {
    match epsilon {
        Some(e) => Ok((AffinityParams::new(e)?, EpsilonSource::User)),
        None => Ok((AffinityParams::new(median_sq_distance(ds))?, EpsilonSource::MedianHeuristic)),
    }
}

/// Applies `--lmax`, or the tail-energy truncation when absent.
fn truncate(ds: &Dataset, params: &AffinityParams, lmax: Option<usize>, tail_tol: f64) -> Result<(Dataset, TruncationReport)> {
    let report = match lmax {
        Some(l) => TruncationReport {
            truncation: l.min(ds.group().band_limit()),
            band_limit: ds.group().band_limit(),
            tail_energy: f64::NAN,
            tolerance: tail_tol,
            converged: true,
        },
        None => auto_truncation(ds, params, tail_tol)?,
    };
    if lmax.is_some_and(|l| l > report.band_limit) {
        return Err(Error::input(format!(
            "--lmax {} exceeds the quadrature band limit {}",
            lmax.unwrap(),
            report.band_limit
        )));
    }
    let g = ds.group().with_truncation(report.truncation)?;
    Ok((ds.with_group(g)?, report))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    dataset: String,
    dataset_hash: String,
    n: usize,
    group: GroupDescriptor,
    epsilon: f64,
    epsilon_source: EpsilonSource,
    normalized: bool,
    dtype: Dtype,
    truncation: &'a TruncationReport,
    tolerances: Tolerances,
    blocks: &'a [crate::spectral::BlockStats],
    warnings: Vec<String>,
    files: Vec<String>,
    started_unix: f64,
    finished_unix: f64,
}

#[derive(Debug, Serialize)]
struct Tolerances {
    hermitian_hard: f64,
    hermitian_warn: f64,
    tail_energy: f64,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

pub fn cmd_spectrum(
    dataset: &Path,
    epsilon: Option<f64>,
    lmax: Option<usize>,
    normalized: bool,
    out: &Path,
    dtype: Dtype,
    tail_tol: f64,
) -> Result<SpectralBundle> {
    let started = now();
    let ds = Dataset::load_bundle(dataset)?;
    let (params, source) = resolve_epsilon(&ds, epsilon)?;
    let (ds, trunc) = truncate(&ds, &params, lmax, tail_tol)?;
    let blocks = assemble_all(&ds, &params)?;
    let warnings: Vec<String> = blocks
        .iter()
        .filter(|b| b.needs_warning())
        .map(|b| {
            format!(
                "block {} deviates from Hermitian by {:e} (symmetrized)",
                b.irrep.label, b.hermitian_deviation
            )
        })
        .collect();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let bundle = SpectralBundle::from_blocks(&blocks, normalized)?;
    let files = bundle.export(out, dtype)?;
    let manifest = Manifest {
        command: "spectrum",
        version: env!("CARGO_PKG_VERSION"),
        dataset: dataset.display().to_string(),
        dataset_hash: ds.hash(),
        n: ds.len(),
        group: ds.group().descriptor(),
        epsilon: params.epsilon(),
        epsilon_source: source,
        normalized,
        dtype,
        truncation: &trunc,
        tolerances: Tolerances {
            hermitian_hard: HERMITIAN_HARD_TOL,
            hermitian_warn: HERMITIAN_WARN_TOL,
            tail_energy: tail_tol,
        },
        blocks: &bundle.stats,
        warnings,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        started_unix: started,
        finished_unix: now(),
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(bundle)
}

pub fn cmd_validate(
    dataset: &Path,
    epsilon: Option<f64>,
    lmax: Option<usize>,
    normalized: bool,
    tol: Option<f64>,
    spectrum_dir: Option<&Path>,
) -> Result<crate::oracle::OracleReport> {
    let ds = Dataset::load_bundle(dataset)?;
    let (params, _) = resolve_epsilon(&ds, epsilon)?;
    let tol = tol.unwrap_or(if ds.group().kind().is_finite() { EXACT_TOL } else { QUADRATURE_TOL });
    let oracle = dense_laplacian(&ds, &params)?;
    let ds = match lmax {
        Some(l) => ds.with_group(ds.group().with_truncation(l)?)?,
        None => ds,
    };
    let blocks = assemble_all(&ds, &params)?;
    let bundle = SpectralBundle::from_blocks(&blocks, normalized)?;
    if let Some(dir) = spectrum_dir {
        check_exported(dir, &bundle, tol)?;
    }
    let dense = oracle.spectrum(normalized)?;
    Ok(compare_spectra(&dense, &bundle, tol))
}

/// Reads every eigenvector file of a `spectrum` run and checks its eigenvalues
/// against a fresh solve.
fn check_exported(dir: &Path, bundle: &SpectralBundle, tol: f64) -> Result<()> {
    for r in &bundle.irreps {
        let path = dir.join(eigvec_file_name(r.label));
        if !path.exists() {
            continue;
        }
        let (vecs, values) = read_eigvecs(&path)?;
        let fresh: Vec<f64> = bundle.for_irrep(r.label).iter().map(|p| p.value).collect();
        if values.len() != fresh.len() || vecs.ncols() != fresh.len() {
            return Err(Error::Mismatch(format!(
                "{}: {} eigenpairs stored, {} expected",
                path.display(),
                values.len(),
                fresh.len()
            )));
        }
        if let Some((a, b)) = values.iter().zip(&fresh).find(|(a, b)| (*a - *b).abs() > tol) {
            return Err(Error::Mismatch(format!("{}: stored eigenvalue {a:e} vs recomputed {b:e}", path.display())));
        }
    }
    Ok(())
}

pub fn cmd_converge(config: &Path, out: &Path) -> Result<crate::convergence::RateReport> {
    let c = ConvergenceConfig::load(config)?;
    // fail on an unwritable destination before the sweep
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let probe = out.join(".write-test");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    let _ = std::fs::remove_file(&probe);
    let report = run_sweep(&c)?;
    report.write(out)?;
    Ok(report)
}
