//! Acceptance criteria 1–10, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. Pass criterion numbers to run a subset:
//!
//! ```text
//! cargo test --release --test acceptance -- 1 5 8
//! ```

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mpemba_wsd::landscape::presets::{self, double_well, DoubleWellParams};
use mpemba_wsd::mpemba::{
    find_strong_points, scan_amplitude, AmplitudeProbe, DoubleWellSearch, RootChoice, Verdict,
    ROOT_TOLERANCE,
};
use mpemba_wsd::schedule::{
    recommended_schedule, validate_schedule, DecayFamily, Margins,
};
use mpemba_wsd::simulator::{
    mpemba_experiment, simulate, Dynamics, ExperimentVerdict, Init, Integrator, MpembaConfig, Protocol,
    SimConfig,
};
use mpemba_wsd::{Grid, LandscapeSpec, SpectralDecomposition, TimeConvention};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    if elapsed <= budget {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, budget {budget:?}"))
    }
}

/// Frozen regression fixture with a strong point inside `[2η_b, 50η_b]`.
fn fixture() -> (LandscapeSpec, f64) {
    let spec = double_well(DoubleWellParams {
        h: 0.5,
        w: 0.8,
        a0: 4f64.exp(),
        beta: 2.0,
        half_width: 2.0,
    })
    .unwrap();
    (spec, 0.15)
}

fn decompose(spec: &LandscapeSpec, n_points: usize, eta_b: f64, n_modes: usize) -> SpectralDecomposition {
    let grid = Grid::for_spec(spec, n_points).unwrap();
    SpectralDecomposition::new(&spec.effective_free_energy(&grid, eta_b).unwrap(), n_modes).unwrap()
}

fn all_presets() -> Vec<(&'static str, LandscapeSpec)> {
    presets::NAMES
        .iter()
        .map(|name| (*name, presets::by_name(name).unwrap()))
        .collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = presets::ou(1.0, 8.0).unwrap();
    let d = decompose(&spec, 2001, 0.5, 4);
    let elapsed = start.elapsed();
    let gap2 = d.eigenvalues[1] - d.eigenvalues[0];
    let gap3 = d.eigenvalues[2] - d.eigenvalues[0];
    within_budget(elapsed, Duration::from_secs(10))?;
    check(
        (gap2 - 1.0).abs() <= 1e-3 && (gap3 - 2.0).abs() <= 5e-3,
        format!("lambda2 - lambda1 = {gap2:.6}, lambda3 - lambda1 = {gap3:.6} in {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for (_, spec) in all_presets() {
        let grid = Grid::for_spec(&spec, 2001).unwrap();
        for eta in [0.1, 0.3, 1.0] {
            let d = SpectralDecomposition::new(&spec.effective_free_energy(&grid, eta).unwrap(), 3)
                .unwrap();
            let residual = d
                .generator
                .apply(&d.stationary.weights)
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()));
            worst = worst.max(residual);
        }
    }
    check(worst < 1e-8, format!("max |L pi| over 3 presets x 3 rates = {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut worst_orth: f64 = 0.0;
    for (_, spec) in all_presets() {
        for eta_b in [0.1, 0.3, 1.0] {
            let d = decompose(&spec, 2001, eta_b, 4);
            let curve = scan_amplitude(&d, &spec, [2.0 * eta_b, 20.0 * eta_b], 8).unwrap();
            worst_orth = worst_orth.max(curve.a2_at_eta_b.abs());
        }
    }
    let symmetric = double_well(DoubleWellParams {
        beta: 0.0,
        ..DoubleWellParams::default()
    })
    .unwrap();
    let d = decompose(&symmetric, 2001, 0.3, 4);
    let curve = scan_amplitude(&d, &symmetric, [0.6, 15.0], 64).unwrap();
    let worst_parity = curve.a2_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        worst_orth < 1e-9 && worst_parity < 1e-9,
        format!("max |a2(eta_b)| = {worst_orth:.2e}, max |a2| for beta = 0 = {worst_parity:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let spec = presets::by_name("double-well").unwrap();
    let eta_b = 0.15;
    let d = decompose(&spec, 2001, eta_b, 4);
    let curve = scan_amplitude(&d, &spec, [2.0 * eta_b, 50.0 * eta_b], 32).unwrap();
    let probe = AmplitudeProbe::new(&d, &spec, &d.grid).unwrap();
    let mut worst: f64 = 0.0;
    for (eta, exact) in curve.eta_samples.iter().zip(&curve.derivative_values) {
        let h = 1e-4 * eta;
        let fd = (probe.a2(eta + h).unwrap() - probe.a2(eta - h).unwrap()) / (2.0 * h);
        worst = worst.max((exact - fd).abs() / fd.abs());
    }
    check(
        worst < 1e-3,
        format!("max relative error of Cov(c, u2)/eta^2 vs central differences = {worst:.2e} over 32 samples"),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let search = DoubleWellSearch::default();
    let hits = search.run();
    let (spec, eta_b) = fixture();
    let frozen = hits.iter().any(|h| {
        h.eta_b == eta_b && h.params.h == 0.5 && h.params.w == 0.8 && h.params.beta == 2.0 && h.params.half_width == 2.0
    });
    let root = |n_points: usize| {
        let d = decompose(&spec, n_points, eta_b, 8);
        let curve = scan_amplitude(&d, &spec, [2.0 * eta_b, 50.0 * eta_b], 48).unwrap();
        let report = find_strong_points(&curve, &d, &spec, ROOT_TOLERANCE, RootChoice::Largest).unwrap();
        (report.verdict, report.optimal_plateau, report.a2_at_optimum)
    };
    let (verdict, eta_star, residual) = root(2001);
    let (verdict_fine, eta_star_fine, _) = root(4001);
    let elapsed = start.elapsed();
    within_budget(elapsed, Duration::from_secs(600))?;
    let drift = (eta_star_fine - eta_star).abs() / eta_star;
    check(
        !hits.is_empty()
            && frozen
            && verdict == Verdict::Strong
            && verdict_fine == Verdict::Strong
            && residual.abs() < 1e-9
            && drift < 0.01,
        format!(
            "{} of {} configurations strong (fixture among them: {frozen}); eta* = {eta_star:.6}, |a2(eta*)| = {:.1e}, 4001-node eta* = {eta_star_fine:.6} ({:.2e} relative) in {elapsed:.1?}",
            hits.len(),
            search.configurations().len(),
            residual.abs(),
            drift
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let (spec, eta_b) = fixture();
    let d = decompose(&spec, 2001, eta_b, 8);
    let curve = scan_amplitude(&d, &spec, [2.0 * eta_b, 50.0 * eta_b], 48).unwrap();
    let report = find_strong_points(&curve, &d, &spec, ROOT_TOLERANCE, RootChoice::Largest).unwrap();
    let eta_h = report.optimal_plateau;
    let eta_l = 0.5 * (eta_b + eta_h);
    let cfg = MpembaConfig {
        sim: SimConfig {
            n_particles: 3_000_000,
            dt: 0.008,
            t_end: 1.0,
            seed: 20240601,
            time_convention: TimeConvention::Rescaled,
            histogram_bins: 8,
            init: Init::Point { x: 0.0, y: 0.0 },
            sample_interval: 0.02,
            x_max: None,
            workers: 0,
            frozen_river: false,
            integrator: Integrator::LeimkuhlerMatthews,
        },
        dynamics: Dynamics::Effective1d,
        plateau: None,
        horizon: 30.0,
    };
    let exp = mpemba_experiment(&spec, eta_h, eta_l, eta_b, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    within_budget(elapsed, Duration::from_secs(600))?;
    let (lambda2, lambda3) = (d.eigenvalues[1], d.eigenvalues[2]);
    let (hot, cold) = match (exp.hot_rate, exp.cold_rate) {
        (Some(h), Some(c)) => (h.rate, c.rate),
        _ => return Err("decay rate not resolvable".into()),
    };
    let hot_err = (hot - lambda3).abs() / lambda3;
    let cold_err = (cold - lambda2).abs() / lambda2;
    check(
        exp.verdict == ExperimentVerdict::MpembaConfirmed
            && hot > cold
            && hot_err < 0.15
            && cold_err < 0.15,
        format!(
            "crossing at t = {:?}; hot rate {hot:.4} vs lambda3 {lambda3:.4} ({:.1}%), cold rate {cold:.5} vs lambda2 {lambda2:.5} ({:.1}%) in {elapsed:.1?}",
            exp.crossing_time,
            100.0 * hot_err,
            100.0 * cold_err
        ),
    )
}

fn criterion_7() -> Outcome {
    let spec = double_well(DoubleWellParams {
        h: 0.5,
        w: 1.0,
        a0: 10.0,
        beta: 0.2,
        half_width: 2.0,
    })
    .unwrap();
    let eta = 0.25;
    let separation = [spec.y_min(), 0.0, spec.y_max()]
        .iter()
        .map(|&y| {
            let t = spec.relaxation_times(y, eta, TimeConvention::Rescaled).unwrap();
            t.tau_y / t.tau_x
        })
        .fold(f64::INFINITY, f64::min);
    if separation < 100.0 {
        return Err(format!("tau_y / tau_x = {separation:.0} < 100"));
    }
    let cfg = SimConfig {
        n_particles: 20_000,
        dt: 2e-3,
        t_end: 11.0,
        seed: 11,
        time_convention: TimeConvention::Rescaled,
        histogram_bins: 16,
        init: Init::Point { x: 0.0, y: -1.0 },
        sample_interval: 1.0,
        x_max: None,
        workers: 0,
        frozen_river: false,
        integrator: Integrator::default(),
    };
    let protocol = Protocol::Constant { eta };
    let full = simulate(&spec, &protocol, &cfg, Dynamics::ValleyRiver2d).unwrap();
    let reduced = simulate(&spec, &protocol, &SimConfig { seed: 12, ..cfg }, Dynamics::Effective1d).unwrap();
    let z: Vec<f64> = (2..=11)
        .map(|k| {
            let se = full.distance_standard_errors[k].hypot(reduced.distance_standard_errors[k]);
            (full.distance_series[k] - reduced.distance_series[k]) / se
        })
        .collect();
    let worst = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        z.len() == 10 && worst <= 3.0,
        format!("tau_y / tau_x >= {separation:.0}; max |z| over 10 instants = {worst:.2}"),
    )
}

/// Dormand–Prince 5(4) with step-size control for the autonomous `y' = f(y)`.
fn dopri45(f: impl Fn(f64) -> f64, y0: f64, t_end: f64, rtol: f64) -> f64 {
    const A: [&[f64]; 6] = [
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let (mut t, mut y, mut h) = (0.0, y0, 1e-3 * t_end);
    while t < t_end {
        h = h.min(t_end - t);
        let mut k = [0.0; 7];
        k[0] = f(y);
        for (s, row) in A.iter().enumerate() {
            let yi = y + h * row.iter().zip(&k).map(|(a, k)| a * k).sum::<f64>();
            k[s + 1] = f(yi);
        }
        let y_new = y + h * A[5].iter().zip(&k).map(|(a, k)| a * k).sum::<f64>();
        let err = h * E.iter().zip(&k).map(|(e, k)| e * k).sum::<f64>();
        let scale = rtol * y.abs().max(y_new.abs()) + 1e-300;
        let ratio = err.abs() / scale;
        if ratio <= 1.0 {
            t += h;
            y = y_new;
        }
        h *= (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0);
    }
    y
}

fn criterion_8() -> Outcome {
    let eta_star = 2.0;
    let m = 0.7;
    let mut worst: f64 = 0.0;
    for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let family = DecayFamily::new(p, m, eta_star, TimeConvention::Rescaled).unwrap();
        let tau = family.characteristic_time();
        // Past extinction the relative error is undefined; stop just short of it.
        let horizon = family
            .extinction_time()
            .map_or(20.0 * tau, |t_stop| (20.0 * tau).min(0.99 * t_stop));
        for i in 1..=40 {
            let t = horizon * i as f64 / 40.0;
            let reference = dopri45(|eta| -m * eta.max(0.0).powf(p), eta_star, t, 1e-13);
            worst = worst.max((family.value(t) - reference).abs() / reference.abs());
        }
    }
    let k = 0.3;
    let inverse_time = DecayFamily::new(2.0, k, eta_star, TimeConvention::Rescaled).unwrap();
    let worst_p2 = (0..=200)
        .map(|i| {
            let t = 0.5 * i as f64;
            let exact = eta_star / (1.0 + k * eta_star * t);
            (inverse_time.value(t) - exact).abs() / exact
        })
        .fold(0.0f64, f64::max);
    let sqrt_family = DecayFamily::new(0.5, m, eta_star, TimeConvention::Rescaled).unwrap();
    let t_stop = 2.0 * eta_star.sqrt() / m;
    let extinction_ok = sqrt_family.extinction_time() == Some(t_stop)
        && sqrt_family.value(t_stop) == 0.0
        && sqrt_family.value(t_stop * (1.0 - 1e-9)) > 0.0
        && sqrt_family.value(2.0 * t_stop) == 0.0;
    check(
        worst < 1e-8 && worst_p2 < 1e-14 && extinction_ok,
        format!(
            "max relative error vs Dormand-Prince = {worst:.2e}; p = 2 vs eta*/(1 + k eta* t) = {worst_p2:.1e}; p = 0.5 extinction at {t_stop:.6} exact: {extinction_ok}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let (spec, _) = fixture();
    let eta_star = 2.1138;
    // Both wells of the fixture, then the k = a/25 edge over a range of a.
    let mut cases: Vec<(f64, f64)> = [-0.8, 0.8]
        .iter()
        .map(|&y| {
            let a = spec.evaluate(y).unwrap().a;
            let k = spec.curvature_log_slope(y).unwrap().abs();
            (a, k)
        })
        .filter(|(a, k)| *k <= a / 25.0)
        .collect();
    if cases.is_empty() {
        return Err("no fixture well satisfies k <= a/25".into());
    }
    cases.extend([1.0, 5.0, 25.0, 270.0].iter().map(|&a| (a, a / 25.0)));
    let mut checked = 0;
    let mut failing = 0;
    for &(a, k) in &cases {
        let plan = recommended_schedule(eta_star, a, k, 1.0).unwrap();
        let report = validate_schedule(&plan, plan.decay_duration, 400, Margins::default()).unwrap();
        checked += report.points.len();
        failing += report.points.iter().filter(|p| !p.envelope_ok).count();
        let start = plan.decay_start();
        for &(t, eta) in plan.samples.iter().filter(|(t, _)| *t >= start) {
            let s = t - start;
            let lo = eta_star * (-a * s).exp();
            let hi = eta_star / (1.0 + k * eta_star * s);
            checked += 1;
            if eta < lo * (1.0 - 1e-12) || eta > hi * (1.0 + 1e-12) {
                failing += 1;
            }
        }
    }
    check(
        failing == 0,
        format!("{failing} of {checked} sampled decay instants outside the envelope across {} (a, k) pairs", cases.len()),
    )
}

fn criterion_10() -> Outcome {
    let spec = presets::ou(1.0, 8.0).unwrap();
    let eta = 0.5;
    let n = 50_000;
    let cfg = SimConfig {
        n_particles: n,
        dt: 1e-3,
        t_end: 6.0,
        seed: 7,
        time_convention: TimeConvention::Rescaled,
        histogram_bins: 16,
        init: Init::Point { x: 0.0, y: 0.0 },
        sample_interval: 1.0,
        x_max: None,
        workers: 0,
        frozen_river: true,
        integrator: Integrator::default(),
    };
    let protocol = Protocol::Constant { eta };
    let run = simulate(&spec, &protocol, &cfg, Dynamics::ValleyRiver2d).unwrap();
    let variance = *run.x_variance_series.last().unwrap();
    let expected = eta / spec.evaluate(0.0).unwrap().a;
    let se = expected * (2.0 / (n as f64 - 1.0)).sqrt();
    let z = (variance - expected) / se;

    let (fixture_spec, _) = fixture();
    let small = SimConfig {
        n_particles: 3_000,
        dt: 1e-4,
        t_end: 0.5,
        seed: 99,
        histogram_bins: 8,
        init: Init::Stationary { eta: 1.0 },
        sample_interval: 0.05,
        frozen_river: false,
        integrator: Integrator::default(),
        ..cfg
    };
    let plan = recommended_schedule(1.0, 20.0, 1.0, 0.05).unwrap();
    let schedule = Protocol::Schedule(plan);
    let by_workers: Vec<_> = [1, 2, 3]
        .iter()
        .map(|&workers| {
            simulate(&fixture_spec, &schedule, &SimConfig { workers, ..small.clone() }, Dynamics::ValleyRiver2d)
                .unwrap()
        })
        .collect();
    let bits = |r: &mpemba_wsd::simulator::EnsembleResult| {
        let mut v: Vec<u64> = r.y_histograms.iter().flatten().map(|x| x.to_bits()).collect();
        v.extend(r.x_variance_series.iter().map(|x| x.to_bits()));
        v.extend(r.y_variance_series.iter().map(|x| x.to_bits()));
        v.extend(r.distance_series.iter().map(|x| x.to_bits()));
        v
    };
    let deterministic = by_workers.windows(2).all(|w| bits(&w[0]) == bits(&w[1]));
    let conserved = run.particle_counts.iter().all(|&c| c == n as u64)
        && by_workers
            .iter()
            .all(|r| r.particle_counts.iter().all(|&c| c == small.n_particles as u64));
    check(
        z.abs() <= 3.0 && deterministic && conserved,
        format!(
            "Var x = {variance:.5} vs eta/a = {expected:.5} (z = {z:+.2}); bit-identical across 1/2/3 workers: {deterministic}; particle counts conserved: {conserved}"
        ),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "OU spectrum", criterion_1),
        (2, "stationarity", criterion_2),
        (3, "orthogonality and parity", criterion_3),
        (4, "derivative consistency", criterion_4),
        (5, "strong point search and fixture", criterion_5),
        (6, "dynamic Mpemba confirmation", criterion_6),
        (7, "2-D to 1-D reduction", criterion_7),
        (8, "decay closed forms", criterion_8),
        (9, "recommended schedule envelope", criterion_9),
        (10, "simulator physics", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {id:>2} {status} [{:.1?}] {name}: {detail}", start.elapsed());
    }
    if failures > 0 {
        println!("{failures} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
