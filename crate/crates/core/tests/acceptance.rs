//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! on stderr (outside the test harness capture) before asserting.

use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use qspde::ensemble::{run_ensemble, write_run, RunConfig};
use qspde::evolution::{smoothing_audit_with, EvolutionFamily, FamilyOptions, LeftFrozen, SmoothingOptions};
use qspde::grid::TimeGrid;
use qspde::models::{blowup_study, degenerate_witness, models, ModelSetup, ProblemTemplate, StudyOptions};
use qspde::operator::matfun::spectral_norm;
use qspde::operator::OperatorSnapshot;
use qspde::solver::{
    ibp_identity_audit, lifetime_probability, linear_pathwise_mild, maximal_continuation, picard_solve,
    ContinuationOptions, LifetimeRequest, LinearOptions, PicardOptions, PicardStatus,
};
use qspde::spectral::{build_basis, BoundaryCondition, Domain, Field, SpectralBasis};
use qspde::stats::median;
use qspde::stochastic::{holder_estimate, ito_integral, sample_wiener, AdditiveNoise, DyadicMax};

fn report(id: u32, name: &str, passed: bool, elapsed: Duration, budget: Duration, detail: String) {
    let ok = passed && elapsed <= budget;
    let line = format!(
        "criterion {id:>2} [{name}]: {} ({:.2} s of {} s) {detail}\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {id} failed: {detail}");
    assert!(elapsed <= budget, "criterion {id} exceeded its runtime budget: {elapsed:?}");
}

fn dirichlet(n: usize) -> Arc<SpectralBasis> {
    build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, n).unwrap()
}

/// `(1 + t)(I − Δ)` on `basis`.
fn heat_path(basis: Arc<SpectralBasis>) -> impl Fn(f64) -> qspde::Result<OperatorSnapshot> + Sync {
    move |t| Ok(OperatorSnapshot::shifted_laplacian(basis.clone(), 1, 1.0, 1.0 + t))
}

fn model(name: &str, params: serde_json::Value, modes: usize, horizon: f64) -> qspde::models::BuiltModel {
    let setup = ModelSetup {
        modes,
        template: ProblemTemplate {
            horizon,
            ..ProblemTemplate::default()
        },
    };
    models().get(name).unwrap().build(&params, &setup).unwrap()
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_identity_and_cocycle() {
    let start = Instant::now();
    let b = dirichlet(16);
    let n = b.len();
    // Non-commuting generator: heat operator plus a rotating skew coupling.
    let skew = DMatrix::from_fn(n, n, |i, j| if i + 1 == j { 1.0 } else if j + 1 == i { -1.0 } else { 0.0 });
    let bb = b.clone();
    let path = move |t: f64| {
        let base = OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 1.0, 1.0 + t);
        let m = base.matrix() + &skew * (3.0 * (2.0 * PI * t).sin());
        OperatorSnapshot::new(bb.clone(), 1, m)
    };
    let grid = TimeGrid::with_horizon(1.0, 1e-3).unwrap();
    let fam = EvolutionFamily::build(
        &path,
        grid,
        &LeftFrozen,
        FamilyOptions {
            checkpoints: true,
            ..FamilyOptions::default()
        },
    )
    .unwrap();
    let k = grid.steps();
    let eye = DMatrix::identity(n, n);
    let mut identity: f64 = 0.0;
    for i in [0, 1, k / 3, k / 2, k] {
        identity = identity.max((fam.matrix_idx(i, i).unwrap() - &eye).abs().max());
    }
    let mut cocycle: f64 = 0.0;
    for (s, r, t) in [(0, k / 2, k), (0, 1, k), (k / 7, 3 * k / 7, 6 * k / 7), (100, 101, 102), (0, k - 1, k)] {
        let whole = fam.matrix_idx(t, s).unwrap();
        let split = fam.matrix_idx(t, r).unwrap() * fam.matrix_idx(r, s).unwrap();
        cocycle = cocycle.max(rel_frobenius(&whole, &split));
    }
    report(
        1,
        "evolution family identity and cocycle",
        identity <= 1e-12 && cocycle <= 1e-12,
        start.elapsed(),
        Duration::from_secs(5),
        format!("identity error {identity:.3e}, relative cocycle error {cocycle:.3e}"),
    );
}

/// Sup over `(t, s)` pairs of the operator-norm gap to `exp(−((t−s) + (t²−s²)/2)(I − Δ))`.
fn commuting_error(b: &Arc<SpectralBasis>, h: f64) -> f64 {
    let grid = TimeGrid::with_horizon(1.0, h).unwrap();
    let fam = EvolutionFamily::build(&heat_path(b.clone()), grid, &LeftFrozen, FamilyOptions::default()).unwrap();
    let a: Vec<f64> = b.eigenvalues().iter().map(|l| 1.0 + l).collect();
    let k = grid.steps();
    let mut worst: f64 = 0.0;
    for i in [0, k / 4, k / 2] {
        let us = fam.matrices_from(i).unwrap();
        let s = grid.time(i);
        for (off, u) in us.iter().enumerate() {
            let t = grid.time(i + off);
            let e = (t - s) + 0.5 * (t * t - s * s);
            let exact = DMatrix::from_diagonal(&DVector::from_iterator(a.len(), a.iter().map(|am| (-am * e).exp())));
            worst = worst.max(spectral_norm(&(u - exact)));
        }
    }
    worst
}

#[test]
fn criterion_02_commuting_family_first_order() {
    let start = Instant::now();
    let b = dirichlet(16);
    let e_h = commuting_error(&b, 2e-3);
    let e_h2 = commuting_error(&b, 1e-3);
    let ratio = e_h / e_h2;
    report(
        2,
        "commuting family convergence",
        (1.7..=2.3).contains(&ratio),
        start.elapsed(),
        Duration::from_secs(30),
        format!("sup error {e_h:.3e} at h, {e_h2:.3e} at h/2, ratio {ratio:.3}"),
    );
}

#[test]
fn criterion_03_smoothing_slopes() {
    let start = Instant::now();
    let b = dirichlet(64);
    let path = heat_path(b.clone());
    let grid = TimeGrid::with_horizon(1.0, 1e-4).unwrap();
    let fam = EvolutionFamily::build(&path, grid, &LeftFrozen, FamilyOptions::default()).unwrap();
    let r = smoothing_audit_with(&fam, &path, &[(0.0, 0.5), (0.0, 1.0), (0.5, 0.75)], &SmoothingOptions::default()).unwrap();
    let ok = r.fits.iter().all(|f| f.gaps.len() >= 8 && (f.slope - (f.alpha - f.beta)).abs() <= 0.1);
    let slopes: Vec<String> = r
        .fits
        .iter()
        .map(|f| format!("({}, {}) slope {:.3} vs {}", f.alpha, f.beta, f.slope, f.alpha - f.beta))
        .collect();
    report(
        3,
        "smoothing estimates",
        ok,
        start.elapsed(),
        Duration::from_secs(60),
        slopes.join("; "),
    );
}

/// Median sup error of the pathwise solution against the mode-by-mode
/// exponential recursion `x ← e^{−ah}x + (1 − e^{−ah})/(ah) · g ΔW`.
fn ou_median_error(h: f64, samples: usize) -> f64 {
    let b = dirichlet(16);
    let n = b.len();
    let a: Vec<f64> = b.eigenvalues().iter().map(|l| 1.0 + l).collect();
    let g: Vec<f64> = a.iter().map(|x| 1.0 / x).collect();
    let noise = AdditiveNoise::diagonal(n, &g).unwrap();
    let bb = b.clone();
    let path = move |_t: f64| Ok(OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 1.0, 1.0));
    let zero = |_t: f64| Ok(DVector::zeros(n));
    let x0 = DVector::from_fn(n, |m, _| 1.0 / (m + 1) as f64);
    let u0 = Field::from_coeffs(b.clone(), 1, x0.clone()).unwrap();
    let grid = TimeGrid::with_horizon(1.0, h).unwrap();
    let errs: Vec<f64> = (0..samples)
        .map(|s| {
            let w = sample_wiener(n, grid, 2024, s as u64).unwrap();
            let traj = linear_pathwise_mild(&path, &zero, &noise, &w, &u0, &LinearOptions::default()).unwrap();
            let mut x = x0.clone();
            let mut sup: f64 = 0.0;
            for j in 0..grid.steps() {
                for m in 0..n {
                    let decay = (-a[m] * h).exp();
                    x[m] = decay * x[m] + (1.0 - decay) / (a[m] * h) * g[m] * w.increment(j, m);
                }
                sup = sup.max((traj.state(j + 1) - &x).norm());
            }
            sup
        })
        .collect();
    median(&errs)
}

#[test]
fn criterion_04_ou_oracle() {
    let start = Instant::now();
    let e_h = ou_median_error(1e-3, 100);
    let e_h2 = ou_median_error(5e-4, 100);
    let ratio = e_h2 / e_h;
    report(
        4,
        "OU oracle",
        e_h < 5e-3 && (0.35..=0.65).contains(&ratio),
        start.elapsed(),
        Duration::from_secs(120),
        format!("median sup error {e_h:.3e} at h = 1e-3, {e_h2:.3e} at h/2, ratio {ratio:.3}"),
    );
}

#[test]
fn criterion_05_integration_by_parts_audit() {
    let start = Instant::now();
    let b = dirichlet(2);
    let bb = b.clone();
    let path = move |t: f64| {
        let (s, c) = (2.0 * PI * t).sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let m = &r * DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 3.0])) * r.transpose();
        OperatorSnapshot::new(bb.clone(), 1, m)
    };
    let grid = TimeGrid::with_horizon(1.0, 1e-4).unwrap();
    let g = AdditiveNoise::diagonal(2, &[0.5, 0.5]).unwrap();
    let w = sample_wiener(2, grid, 11, 0).unwrap();
    let u0 = DVector::from_column_slice(&[1.0, 0.0]);
    let r = ibp_identity_audit(&path, &g, &w, &u0).unwrap();

    // Independent Euler–Maruyama on the same increments against the pathwise solution.
    let zero = |_t: f64| Ok(DVector::zeros(2));
    let field = Field::from_coeffs(b, 1, u0.clone()).unwrap();
    let traj = linear_pathwise_mild(&path, &zero, &g, &w, &field, &LinearOptions::default()).unwrap();
    let mut x = u0;
    let mut em: f64 = 0.0;
    for j in 0..grid.steps() {
        let a = path(grid.time(j)).unwrap();
        let dw = DVector::from_column_slice(w.step(j));
        x = &x - a.matrix() * &x * grid.h() + dw * 0.5;
        em = em.max((traj.state(j + 1) - &x).norm());
    }
    report(
        5,
        "integration-by-parts audit",
        r.strong_residual < 1e-2 && r.em_difference < 5e-2 && em < 5e-2,
        start.elapsed(),
        Duration::from_secs(60),
        format!(
            "strong residual {:.3e}, EM difference {:.3e} (independent EM {em:.3e})",
            r.strong_residual, r.em_difference
        ),
    );
}

#[test]
fn criterion_06_holder_exponent() {
    let start = Instant::now();
    let b = dirichlet(16);
    let n = b.len();
    let amps: Vec<f64> = b.eigenvalues().iter().map(|l| 1.0 / (1.0 + l)).collect();
    let sigma = AdditiveNoise::diagonal(n, &amps).unwrap();
    let grid = TimeGrid::new(0.0, 1e-4, 10_000).unwrap();
    let ests: Vec<f64> = (0..50)
        .map(|s| {
            let w = sample_wiener(n, grid, 5, s).unwrap();
            let j = ito_integral(&sigma, &w, None).unwrap();
            holder_estimate(j.values(), grid.h(), None, 2.0, &DyadicMax).unwrap().exponent.unwrap()
        })
        .collect();
    let mean = ests.iter().sum::<f64>() / ests.len() as f64;
    let lo = ests.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ests.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report(
        6,
        "Hölder regularity of the stochastic integral",
        (0.35..=0.52).contains(&mean),
        start.elapsed(),
        Duration::from_secs(60),
        format!("mean exponent {mean:.4} over 50 paths (range {lo:.3}..{hi:.3})"),
    );
}

fn skt_final_ratio(horizon: f64) -> (PicardStatus, usize, Vec<f64>) {
    let m = model("skt", json!({}), 16, horizon);
    let grid = TimeGrid::with_horizon(horizon, 5e-4).unwrap();
    let w = sample_wiener(m.spec.noise.modes(), grid, 7, 0).unwrap();
    let out = picard_solve(&m.spec, &w, &PicardOptions::default()).unwrap();
    let win = &out.diagnostics.windows[0];
    (out.diagnostics.status, out.diagnostics.max_iterations(), win.ratios.clone())
}

#[test]
fn criterion_07_picard_contraction() {
    let start = Instant::now();
    let (status, iters, ratios) = skt_final_ratio(0.05);
    let (status_half, _, ratios_half) = skt_final_ratio(0.025);
    let last = *ratios.last().unwrap_or(&f64::NAN);
    let last_half = *ratios_half.last().unwrap_or(&f64::NAN);
    let ok = status == PicardStatus::Completed
        && status_half == PicardStatus::Completed
        && iters <= 8
        && !ratios.is_empty()
        && ratios.iter().all(|r| *r < 0.8)
        && last_half <= last;
    report(
        7,
        "Picard contraction on small SKT data",
        ok,
        start.elapsed(),
        Duration::from_secs(180),
        format!("{iters} iterations, ratios {ratios:.4?}; final ratio {last:.4e} at T, {last_half:.4e} at T/2"),
    );
}

#[test]
fn criterion_08_segment_agreement() {
    let start = Instant::now();
    let m = model("custom-quasilinear", json!({"force": 100.0, "sigma0": 0.05}), 16, 0.2);
    let grid = TimeGrid::with_horizon(0.2, 5e-4).unwrap();
    let w = sample_wiener(m.spec.noise.modes(), grid, 3, 0).unwrap();
    let picard = PicardOptions {
        window: Some(0.01),
        ..PicardOptions::default()
    };
    let out = maximal_continuation(
        &m.spec,
        &w,
        &[2.0, 4.0],
        &ContinuationOptions {
            picard,
            verify_index: Some(1),
        },
    )
    .unwrap();
    // Direct run from time zero to the n = 4 threshold, compared by hand on the shared prefix.
    let direct = picard_solve(
        &m.spec,
        &w,
        &PicardOptions {
            threshold: Some(4.0),
            ..picard
        },
    )
    .unwrap();
    let hit = out.records.iter().all(|r| r.hit);
    let upto = out.trajectory.last_index().min(direct.trajectory.last_index());
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..=upto {
        let d = out.trajectory.state(i) - direct.trajectory.state(i);
        gap = gap.max(qspde::spectral::sobolev_norm_coeffs(&m.spec.basis, &d, m.spec.mu_y()));
        scale = scale.max(out.trajectory.y_norms()[i]);
    }
    let rel = gap / scale;
    let limit = 10.0 * picard.tol;
    let built_in = out.uniqueness.as_ref().map(|u| !u.violated).unwrap_or(false);
    report(
        8,
        "uniqueness across continuation segments",
        hit && built_in && rel <= limit,
        start.elapsed(),
        Duration::from_secs(180),
        format!(
            "τ_2 = {:.4}, τ_4 = {:.4}, relative Y gap {rel:.3e} (limit {limit:.1e})",
            out.records[0].tau, out.records[1].tau
        ),
    );
}

#[test]
fn criterion_09_stopping_time_positivity() {
    let start = Instant::now();
    let m = model("skt", json!({}), 16, 0.01);
    let n = 10.0 * m.spec.z_norm0();
    let eps = [0.0025, 0.005, 0.01];
    let r = lifetime_probability(
        &m.spec,
        &eps,
        &LifetimeRequest {
            threshold: n,
            h: 5e-4,
            samples: 200,
            master_seed: 0,
        },
        &PicardOptions::default(),
    )
    .unwrap();
    let at = |e: f64| r.points.iter().find(|p| p.eps == e).unwrap().fraction;
    let fractions: Vec<f64> = eps.iter().map(|&e| at(e)).collect();
    // Sorted by increasing ε, so fractions must not increase along the list.
    let monotone = fractions.windows(2).all(|p| p[0] >= p[1]);
    report(
        9,
        "positivity of stopping times",
        at(0.01) >= 0.95 && monotone && r.monotone,
        start.elapsed(),
        Duration::from_secs(900),
        format!("n = {n:.4}, P(τ_n > ε) for ε = {eps:?}: {fractions:?}"),
    );
}

#[test]
fn criterion_10_quadratic_blowup() {
    let start = Instant::now();
    let t_star = LN_2;
    let deterministic = model("blowup1", json!({"y0": 2.0, "sigma0": 0.0}), 16, 0.9);
    let r = blowup_study(
        &deterministic,
        &StudyOptions {
            samples: 1,
            h: 1e-4,
            ..StudyOptions::default()
        },
    )
    .unwrap();
    let crossing = r.times.iter().zip(&r.mean_y).find(|(_, y)| **y >= 100.0).map(|(t, _)| *t);
    let det_ok = matches!(crossing, Some(c) if c < t_star + 0.15)
        && (r.ode.event_time.unwrap() - t_star).abs() < 1e-12;

    let noisy = model("blowup1", json!({"y0": 2.0, "sigma0": 0.05}), 16, 0.9);
    let rn = blowup_study(
        &noisy,
        &StudyOptions {
            samples: 100,
            h: 1e-4,
            ..StudyOptions::default()
        },
    )
    .unwrap();
    // Comparison `y' = −y + y²` with `y(0) = 2` is `2/(2 − e^t)`.
    let mut worst = f64::INFINITY;
    for ((t, y), se) in rn.times.iter().zip(&rn.mean_y).zip(&rn.std_error_y) {
        if *t >= t_star {
            break;
        }
        let ode = 2.0 / (2.0 - t.exp());
        worst = worst.min(y - (ode - 3.0 * se) + 1e-9 * ode);
    }
    let noisy_ok = worst >= 0.0;
    report(
        10,
        "quadratic blow-up against the comparison equation",
        det_ok && noisy_ok,
        start.elapsed(),
        Duration::from_secs(600),
        format!(
            "deterministic y reaches 100 at {crossing:?} (deadline {:.4}); noisy mean stays above the band by {worst:.3e} up to t = {:.4}",
            t_star + 0.15,
            rn.times.last().unwrap()
        ),
    );
}

#[test]
fn criterion_11_sign_change() {
    let start = Instant::now();
    let t1 = (1.0 + 16.0 / PI).ln();
    let m = model("blowup2", json!({"y0": 1.0, "k": 2.0, "sigma0": 0.0}), 16, 2.3);
    let r = blowup_study(
        &m,
        &StudyOptions {
            samples: 1,
            h: 1e-3,
            ..StudyOptions::default()
        },
    )
    .unwrap();
    let zero = r.times.iter().zip(&r.mean_y).find(|(_, y)| **y < 0.0).map(|(t, _)| *t);
    report(
        11,
        "sign change before the envelope root",
        matches!(zero, Some(z) if z < 1.2 * t1) && (r.ode.event_time.unwrap() - t1).abs() < 1e-12,
        start.elapsed(),
        Duration::from_secs(300),
        format!("y turns negative at {zero:?}; t₁ = {t1:.5}, deadline {:.5}", 1.2 * t1),
    );
}

#[test]
fn criterion_12_degeneracy_certificate() {
    let start = Instant::now();
    let t1 = (1.0 + 16.0 / PI).ln();
    let m = model("degenerate3", json!({"y0": 1.0, "k": 2.0}), 16, 2.3);
    let picard = PicardOptions {
        window: Some(1e-2),
        audit_phi: Some(1.2),
        ..PicardOptions::default()
    };
    let a = degenerate_witness(&m, 1e-3, 0, 0, picard).unwrap();
    let b = degenerate_witness(&m, 1e-3, 0, 0, picard).unwrap();
    let same = serde_json::to_vec(&a).unwrap() == serde_json::to_vec(&b).unwrap();
    let time = a.certificate.as_ref().map(|c| c.time);
    report(
        12,
        "sectoriality-failure certificate",
        matches!(time, Some(t) if t <= 1.2 * t1) && same,
        start.elapsed(),
        Duration::from_secs(300),
        format!("certificate at {time:?}, deadline {:.5}, bitwise reproducible {same}", 1.2 * t1),
    );
}

fn files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_13_parallel_invariance() {
    let start = Instant::now();
    let cfg = RunConfig::from_json(
        &json!({
            "schema_version": 1,
            "model": "skt",
            "grid": {"horizon": 0.05, "h": 5e-4, "modes": 16},
            "ensemble": {"samples": 16, "master_seed": 42}
        })
        .to_string(),
    )
    .unwrap();
    let prepared = cfg.prepare().unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d8 = tempfile::tempdir().unwrap();
    let r1 = run_ensemble(&prepared, 1).unwrap();
    write_run(&r1, &prepared.model.spec, d1.path()).unwrap();
    let r8 = run_ensemble(&prepared, 8).unwrap();
    write_run(&r8, &prepared.model.spec, d8.path()).unwrap();
    let f1 = files(d1.path());
    let f8 = files(d8.path());
    let same = f1 == f8;
    report(
        13,
        "reproducibility and parallel invariance",
        same && !f1.is_empty(),
        start.elapsed(),
        Duration::from_secs(600),
        format!("{} files compared between 1 and 8 threads, identical {same}", f1.len()),
    );
}
