//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::path::Path;
use std::time::Instant;

use kinvlap::affinity::{affinity_profile, median_sq_distance, AffinityParams};
use kinvlap::binfmt::Dtype;
use kinvlap::cli::{cmd_converge, cmd_spectrum};
use kinvlap::convergence::{loglog_fit, median, run_sweep, Cell, ConvergenceConfig, FitKind, Regime};
use kinvlap::dataset::{sample_so3_embedded, sample_torus_r4, Dataset, ManifoldSpec};
use kinvlap::group::GroupDescriptor;
use kinvlap::harmonic::{assemble_all, reconstruct_profile, reconstruction_tail_bound, shift_block};
use kinvlap::operator::{BandLimited, GammaFunction, LaplacianOperator};
use kinvlap::oracle::{compare_spectra, dense_laplacian};
use kinvlap::spectral::{full_spectrum, synthesize_eigenfunction};
use num_complex::Complex64;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn z(n: usize) -> GroupDescriptor {
    GroupDescriptor::Cyclic {
        order: n,
        generator: None,
        pairs: Some(vec![[0, 1]]),
    }
}

fn so2(q: usize, m: usize) -> GroupDescriptor {
    GroupDescriptor::So2 {
        quadrature_order: q,
        m_max: Some(m),
        pairs: vec![[0, 1]],
    }
}

fn torus(n: usize, g: GroupDescriptor, seed: u64) -> Dataset {
    sample_torus_r4(n, [1.0, 2.0], seed, &g).unwrap()
}

fn so3(n: usize, q: usize, l: usize, seed: u64) -> Dataset {
    sample_so3_embedded(n, seed, &ManifoldSpec::So3EmbeddedR9 {}.default_group(q, Some(l))).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (k, n) in [2, 4, 8].into_iter().enumerate() {
        let ds = torus(n, z(8), 100 + k as u64);
        let p = AffinityParams::new(median_sq_distance(&ds)).map_err(|e| e.to_string())?;
        let dense = dense_laplacian(&ds, &p).map_err(|e| e.to_string())?;
        for normalized in [false, true] {
            let bundle = full_spectrum(&ds, &p, None, normalized).map_err(|e| e.to_string())?;
            let r = compare_spectra(&dense.spectrum(normalized).map_err(|e| e.to_string())?, &bundle, 1e-8);
            if r.unmatched > 0 || r.dense_surplus > 0 {
                return Err(format!("N={n}: {} unmatched, {} surplus", r.unmatched, r.dense_surplus));
            }
            worst = worst.max(r.max_abs_dev);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst < 1e-8 && secs < 5.0, format!("max |Δλ| = {worst:.3e}, {secs:.2} s"))
}

fn psd_and_zero_mode() -> Outcome {
    let sets = [
        ("Z8", torus(8, z(8), 1), 0.5),
        ("SO(2)", torus(6, so2(32, 15), 2), 0.5),
        ("SO(3)", so3(2, 14, 3, 3), 2.0),
        ("trivial", torus(20, GroupDescriptor::Trivial {}, 4), 0.5),
    ];
    let mut min_eig = f64::INFINITY;
    let mut worst_res = 0.0f64;
    for (name, ds, eps) in &sets {
        let p = AffinityParams::new(*eps).unwrap();
        let g = ds.group();
        let un = full_spectrum(ds, &p, None, false).map_err(|e| e.to_string())?;
        min_eig = min_eig.min(un.pairs.iter().map(|q| q.value).fold(f64::INFINITY, f64::min));
        let nb = full_spectrum(ds, &p, None, true).map_err(|e| e.to_string())?;
        let zero = &nb.pairs[0];
        if zero.value.abs() > 1e-10 || zero.irrep.label != 0 {
            return Err(format!("{name}: lowest normalized eigenvalue {:e} in irrep {}", zero.value, zero.irrep.label));
        }
        let one = GammaFunction::constant(ds.len(), g, Complex64::new(1.0, 0.0));
        let op = LaplacianOperator::new(ds, &p).unwrap();
        worst_res = worst_res.max(op.apply_ln(&one).unwrap().max_abs() / one.norm(g));
    }
    check(
        min_eig >= -1e-10 && worst_res < 1e-10,
        format!("min unnormalized λ = {min_eig:.3e}, constant-mode residual {worst_res:.3e}"),
    )
}

fn gram_deviation(ds: &Dataset, p: &AffinityParams) -> f64 {
    let g = ds.group();
    let b = full_spectrum(ds, p, None, false).unwrap();
    let funcs: Vec<(usize, (i64, usize, usize), GammaFunction)> = b
        .pairs
        .iter()
        .flat_map(|pair| (1..=pair.irrep.dim).map(move |m| (pair, m)))
        .map(|(pair, m)| {
            let f = synthesize_eigenfunction(pair, m).unwrap().on_nodes(g).unwrap();
            (pair.irrep.dim, (pair.irrep.label, pair.s, m), f)
        })
        .collect();
    let mut worst = 0.0f64;
    for (dim, ka, fa) in &funcs {
        for (_, kb, fb) in &funcs {
            let expect = if ka == kb { 1.0 / *dim as f64 } else { 0.0 };
            worst = worst.max((fa.inner(fb, g) - Complex64::new(expect, 0.0)).norm());
        }
    }
    worst
}

fn schur_orthogonality() -> Outcome {
    let a = gram_deviation(&torus(3, so2(64, 8), 6), &AffinityParams::new(0.5).unwrap());
    let b = gram_deviation(&so3(2, 6, 2, 7), &AffinityParams::new(2.0).unwrap());
    check(a < 1e-8 && b < 1e-8, format!("SO(2) {a:.3e}, SO(3) {b:.3e}"))
}

fn operator_consistency() -> Outcome {
    let cases = [
        ("Z8", torus(5, z(8), 11), 0.5),
        ("SO(2)", torus(5, so2(33, 16), 12), 0.5),
        ("SO(3)", so3(2, 14, 2, 13), 3.0),
    ];
    let (mut worst_rel, mut worst_res) = (0.0f64, 0.0f64);
    for (_, ds, eps) in &cases {
        let g = ds.group();
        let p = AffinityParams::new(*eps).unwrap();
        let op = LaplacianOperator::new(ds, &p).unwrap();
        let blocks = assemble_all(ds, &p).unwrap();
        let shifted: Vec<_> = blocks.iter().map(|b| shift_block(b, false).unwrap()).collect();
        for seed in 0..20 {
            let bl = BandLimited::random(g, ds.len(), seed);
            let f = bl.synthesize(g).unwrap();
            let direct = op.apply_l(&f).unwrap();
            let via = bl.apply_blocks(&shifted).unwrap().synthesize(g).unwrap();
            worst_rel = worst_rel.max(direct.sub(&via).norm(g) / direct.norm(g));
        }
        let b = full_spectrum(ds, &p, None, false).unwrap();
        for pair in &b.pairs {
            let phi = synthesize_eigenfunction(pair, 1).unwrap().on_nodes(g).unwrap();
            let r = op.apply_l(&phi).unwrap().sub(&phi.scale(Complex64::new(pair.value, 0.0))).max_abs();
            worst_res = worst_res.max(r / phi.norm(g));
        }
    }
    check(
        worst_rel < 1e-8 && worst_res < 1e-6,
        format!("apply_L vs blocks rel {worst_rel:.3e}, eigen-residual {worst_res:.3e}·‖Φ‖"),
    )
}

fn round_trip_error(ds: &Dataset, p: &AffinityParams) -> f64 {
    let g = ds.group();
    let blocks = assemble_all(ds, p).unwrap();
    let mut worst = 0.0f64;
    for i in 0..ds.len() {
        for j in 0..ds.len() {
            let exact = affinity_profile(&ds.point(i), &ds.point(j), p, g);
            let rec = reconstruct_profile(&blocks, g, i, j).unwrap();
            worst = exact.iter().zip(&rec).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
    }
    worst
}

fn fourier_round_trip() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [3, 5, 8] {
        let e = round_trip_error(&torus(4, z(n), n as u64), &AffinityParams::new(0.5).unwrap());
        ok &= e < 1e-10;
        parts.push(format!("Z{n} {e:.1e}"));
    }
    for (name, ds, eps) in [("SO(2)", torus(4, so2(32, 6), 21), 0.5), ("SO(3)", so3(3, 8, 2, 22), 2.0)] {
        let p = AffinityParams::new(eps).unwrap();
        let e = round_trip_error(&ds, &p);
        let bound = reconstruction_tail_bound(&ds, &p, 2, ds.len()).unwrap();
        ok &= e <= bound;
        parts.push(format!("{name} {e:.1e} ≤ {bound:.1e}"));
    }
    check(ok, parts.join(", "))
}

fn torus_sweep_config() -> ConvergenceConfig {
    let mut cells: Vec<Cell> = [256, 512, 1024, 2048].iter().map(|&n| Cell { n, epsilon: 0.3 }).collect();
    cells.extend([0.1, 0.2, 0.4].iter().map(|&epsilon| Cell { n: 512, epsilon }));
    ConvergenceConfig {
        manifold: ManifoldSpec::TorusR4 { radii: [1.0, 2.0] },
        test_function: "x3".into(),
        cells,
        trials: 20,
        seed: 2024,
        exclude_diagonal: false,
        quadrature_order: 64,
        eval_points: 32,
        surrogate_resolution: 160,
        bias_epsilons: vec![0.05, 0.1, 0.2, 0.4],
        baseline: true,
        bootstrap: 1000,
        density: None,
    }
}

fn convergence_rates(report: &kinvlap::convergence::RateReport, secs: f64) -> Outcome {
    let a = report
        .fit(FitKind::VarianceVsN, Some(0.3))
        .ok_or("no variance-vs-N fit")?
        .slope;
    let eps_cells: Vec<_> = report
        .cells
        .iter()
        .filter(|c| c.n == 512 && [0.1, 0.2, 0.4].contains(&c.epsilon))
        .collect();
    let in_regime = eps_cells.iter().all(|c| c.regime == Regime::Variance);
    let x: Vec<f64> = eps_cells.iter().map(|c| c.epsilon).collect();
    let y: Vec<f64> = eps_cells.iter().map(|c| median(&c.variance.per_trial)).collect();
    let (b, _) = loglog_fit(&x, &y).ok_or("no variance-vs-ε fit")?;
    let c = report.fit(FitKind::BiasVsEpsilon, None).ok_or("no bias fit")?.slope;
    check(
        (-0.65..=-0.35).contains(&a) && (b + 0.75).abs() <= 0.3 && in_regime && (c - 1.0).abs() <= 0.3 && secs < 1800.0,
        format!("N-slope {a:.3}, ε-slope {b:.3} (variance regime: {in_regime}), bias slope {c:.3}, {secs:.1} s"),
    )
}

fn symmetry_advantage(report: &kinvlap::convergence::RateReport) -> Outcome {
    let frac = report.advantage_fraction.ok_or("baseline not run")?;
    let ratios: Vec<String> = report
        .cells
        .iter()
        .map(|c| format!("{:.2}", c.advantage_ratio.unwrap_or(f64::NAN)))
        .collect();
    check(
        frac >= 0.8,
        format!("{:.0}% of cells, baseline/aware error ratios [{}]", 100.0 * frac, ratios.join(", ")),
    )
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    for n in &names {
        let (x, y) = (std::fs::read(a.join(n)), std::fs::read(b.join(n)));
        if x.map_err(|e| e.to_string())? != y.map_err(|e| e.to_string())? {
            return Err(format!("{} differs", n.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let ds = torus(10, so2(32, 8), 31);
    ds.save_bundle(&d.join("data")).map_err(|e| e.to_string())?;
    for out in ["s1", "s2"] {
        cmd_spectrum(&d.join("data"), Some(0.5), None, true, &d.join(out), Dtype::Complex128, 1e-8).map_err(|e| e.to_string())?;
    }
    let spectrum_files = same_files(&d.join("s1"), &d.join("s2"))?;
    let mut cfg = torus_sweep_config();
    cfg.cells = vec![Cell { n: 128, epsilon: 0.3 }, Cell { n: 256, epsilon: 0.3 }];
    cfg.trials = 4;
    cfg.bias_epsilons = vec![0.2];
    cfg.surrogate_resolution = 64;
    cfg.bootstrap = 200;
    let cfg_path = d.join("converge.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).map_err(|e| e.to_string())?;
    for out in ["c1", "c2"] {
        cmd_converge(&cfg_path, &d.join(out)).map_err(|e| e.to_string())?;
    }
    let converge_files = same_files(&d.join("c1"), &d.join("c2"))?;
    Ok(format!("{spectrum_files} spectrum and {converge_files} converge files byte-identical"))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut run = |id: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let r = f();
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {id}: {name} — {detail}");
        results.push((id, name, r));
    };
    run(1, "oracle equivalence (finite groups)", &oracle_equivalence);
    run(2, "PSD and zero mode", &psd_and_zero_mode);
    run(3, "Schur/Gram orthogonality", &schur_orthogonality);
    run(4, "operator–matrix consistency", &operator_consistency);
    run(5, "Fourier round-trip", &fourier_round_trip);
    let t = Instant::now();
    let sweep = run_sweep(&torus_sweep_config());
    let secs = t.elapsed().as_secs_f64();
    match sweep {
        Ok(report) => {
            run(6, "convergence rates", &|| convergence_rates(&report, secs));
            run(7, "symmetry advantage", &|| symmetry_advantage(&report));
        }
        Err(e) => {
            run(6, "convergence rates", &|| Err(e.to_string()));
            run(7, "symmetry advantage", &|| Err(e.to_string()));
        }
    }
    run(8, "determinism", &determinism);
    let failed = results.iter().filter(|(_, _, r)| r.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
