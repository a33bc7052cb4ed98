//! Compares the river marginal of the full valley–river simulation with the
//! coarse-grained one-dimensional dynamics on a landscape whose valley
//! relaxes much faster than the river.
//!
//! ```text
//! cargo run --release --example reduction_2d_vs_1d [n_particles]
//! ```

use mpemba_wsd::landscape::presets::{double_well, DoubleWellParams};
use mpemba_wsd::simulator::{simulate, Dynamics, Init, Integrator, Protocol, SimConfig};
use mpemba_wsd::TimeConvention;

fn main() -> mpemba_wsd::Result<()> {
    let n_particles = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let spec = double_well(DoubleWellParams {
        h: 0.5,
        w: 1.0,
        a0: 10.0,
        beta: 0.2,
        half_width: 2.0,
    })?;
    let eta = 0.25;
    let worst = [spec.y_min(), spec.y_max()]
        .iter()
        .map(|&y| spec.relaxation_times(y, eta, TimeConvention::Rescaled))
        .collect::<mpemba_wsd::Result<Vec<_>>>()?;
    for (y, t) in [spec.y_min(), spec.y_max()].iter().zip(&worst) {
        println!(
            "y = {y:+}: tau_x = {:.4}, tau_y = {:.2}, ratio {:.0}",
            t.tau_x,
            t.tau_y,
            t.tau_y / t.tau_x
        );
    }

    let cfg = SimConfig {
        n_particles,
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
    let full = simulate(&spec, &protocol, &cfg, Dynamics::ValleyRiver2d)?;
    let reduced = simulate(
        &spec,
        &protocol,
        &SimConfig { seed: 12, ..cfg },
        Dynamics::Effective1d,
    )?;

    println!(
        "{:>6} {:>10} {:>10} {:>8}",
        "t", "L1 (2-D)", "L1 (1-D)", "z"
    );
    for k in 2..full.times.len() {
        let se = full.distance_standard_errors[k].hypot(reduced.distance_standard_errors[k]);
        let z = (full.distance_series[k] - reduced.distance_series[k]) / se;
        println!(
            "{:>6.1} {:>10.5} {:>10.5} {:>8.2}",
            full.times[k], full.distance_series[k], reduced.distance_series[k], z
        );
    }
    Ok(())
}
