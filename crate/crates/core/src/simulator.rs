//! Particle ensembles of the valley–river Langevin dynamics.
//!
//! Two dynamics are available: the full two-dimensional process
//!
//! ```text
//! dx = −a(y) x dt + √(2η) dW_x
//! dy = −[c'(y) + a'(y) x²/2] dt + √(2η) dW_y
//! ```
//!
//! and the coarse-grained river process `dy = −F'_η(y) dt + √(2η) dW`.
//! In the unscaled time convention every drift is multiplied by `η`.
//! Both coordinates reflect specularly at their walls.
//!
//! Each particle draws from its own ChaCha8 stream (master seed, stream =
//! particle index). Particles are processed in fixed-size chunks whose
//! accumulators are reduced in chunk order, so results are bit-identical
//! for any number of worker threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, run_id, to_json_string};
use crate::landscape::{Grid, LandscapeSpec, TimeConvention};
use crate::schedule::SchedulePlan;
use crate::spectral::{SpectralDecomposition, StationaryDistribution};
use crate::svg::{LinePlot, Series, PALETTE};

const CHUNK: usize = 256;
/// Target bin masses are integrated on at least this many grid intervals,
/// rounded up to a multiple of the bin count.
const TARGET_NODES: usize = 8192;
/// Grid used to sample stationary initial states.
const INIT_GRID_POINTS: usize = 8193;
/// `dt · (largest drift rate)` must stay below this.
pub const STABILITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// Full `(x, y)` process.
    #[default]
    #[serde(rename = "valley-river-2d")]
    ValleyRiver2d,
    /// River coordinate in the effective free energy `F_η`.
    #[serde(rename = "effective-1d")]
    Effective1d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Init {
    Point {
        x: f64,
        y: f64,
    },
    /// `y ~ π_η`, `x ~ N(0, η/a(y))`.
    Stationary {
        eta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Protocol {
    Constant {
        eta: f64,
    },
    /// `eta_from` before `t_quench`, `eta_to` from then on.
    Quench {
        eta_from: f64,
        eta_to: f64,
        t_quench: f64,
    },
    Schedule(SchedulePlan),
}

impl Protocol {
    pub fn eta_at(&self, t: f64) -> f64 {
        match self {
            Protocol::Constant { eta } => *eta,
            Protocol::Quench {
                eta_from,
                eta_to,
                t_quench,
            } => {
                if t < *t_quench {
                    *eta_from
                } else {
                    *eta_to
                }
            }
            Protocol::Schedule(plan) => plan.eta_at(t),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let valid = match self {
            Protocol::Constant { eta } => ok(*eta),
            Protocol::Quench {
                eta_from,
                eta_to,
                t_quench,
            } => ok(*eta_from) && ok(*eta_to) && *t_quench >= 0.0,
            Protocol::Schedule(plan) => ok(plan.stable.eta),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::contract(
                "simulate",
                "protocol learning rates must be positive",
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    #[serde(default)]
    pub time_convention: TimeConvention,
    pub histogram_bins: usize,
    pub init: Init,
    /// Time between recorded instants.
    pub sample_interval: f64,
    /// Reflection bound on `|x|`; defaults to `10 √(η_max / a_min)`.
    #[serde(default)]
    pub x_max: Option<f64>,
    /// Worker threads; 0 uses the global pool.
    #[serde(default)]
    pub workers: usize,
    /// Hold `y` fixed (valley-only test mode).
    #[serde(default)]
    pub frozen_river: bool,
    #[serde(default)]
    pub integrator: Integrator,
}

/// Time-stepping scheme shared by both dynamics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// `Δ = drift·dt + √(2η dt) ξ_n`.
    #[default]
    EulerMaruyama,
    /// Same drift with the noise `√(2η dt) (ξ_n + ξ_{n+1}) / 2`. One normal
    /// per coordinate and step, like Euler–Maruyama, but the stationary law
    /// of the chain is accurate to `O(dt²)` instead of `O(dt)`.
    LeimkuhlerMatthews,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.n_particles < 100 {
            return Err(Error::config(
                "sim.n_particles",
                format!("must be >= 100, got {}", self.n_particles),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(
                "sim.dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::config(
                "sim.t_end",
                format!("must be >= dt, got {}", self.t_end),
            ));
        }
        if self.histogram_bins < 2 {
            return Err(Error::config("sim.histogram_bins", "must be >= 2"));
        }
        if !(self.sample_interval >= self.dt) {
            return Err(Error::config("sim.sample_interval", "must be >= dt"));
        }
        if let Some(x) = self.x_max {
            if !(x > 0.0) {
                return Err(Error::config("sim.x_max", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Metadata echoed into every export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub dynamics: Dynamics,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// Normalized `y` histograms, one per instant, `histogram_bins` equal bins over the domain.
    pub y_histograms: Vec<Vec<f64>>,
    /// Particles inside the domain at each instant.
    pub particle_counts: Vec<u64>,
    /// L1 distance of each histogram to the binned target; empty without a target.
    pub distance_series: Vec<f64>,
    /// Delta-method standard error of each distance.
    pub distance_standard_errors: Vec<f64>,
    /// Expected L1 distance of an exact sample of the target of this size.
    pub distance_noise_floor: Option<f64>,
    /// Ensemble variance of `x` per instant (empty for river-only dynamics).
    pub x_variance_series: Vec<f64>,
    pub y_variance_series: Vec<f64>,
    /// `η` of the target stationary distribution (final protocol value).
    pub target_eta: Option<f64>,
    pub target_masses: Vec<f64>,
    pub n_particles: usize,
    pub metadata: RunMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    L1,
    Kl,
}

/// Distance of a normalized histogram to `target` integrated over the same bins.
pub fn distance_to_target(
    hist: &[f64],
    target: &StationaryDistribution,
    metric: Metric,
) -> Result<f64> {
    let masses = target.bin_masses(hist.len())?;
    distance_to_masses(hist, &masses, metric)
}

/// Distance between two bin-mass vectors.
pub fn distance_to_masses(hist: &[f64], target: &[f64], metric: Metric) -> Result<f64> {
    if hist.len() != target.len() {
        return Err(Error::contract(
            "distance_to_target",
            format!(
                "histogram has {} bins, target has {}",
                hist.len(),
                target.len()
            ),
        ));
    }
    Ok(match metric {
        Metric::L1 => hist.iter().zip(target).map(|(p, q)| (p - q).abs()).sum(),
        Metric::Kl => hist
            .iter()
            .zip(target)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p / q.max(1e-300)).ln())
            .sum(),
    })
}

/// Delta-method standard error of the L1 distance of a multinomial histogram.
pub fn l1_standard_error(hist: &[f64], target: &[f64], n: usize) -> f64 {
    let (mut mass, mut signed) = (0.0, 0.0);
    for (p, q) in hist.iter().zip(target) {
        if p != q {
            mass += p;
            signed += (p - q).signum() * p;
        }
    }
    ((mass - signed * signed).max(0.0) / n as f64).sqrt()
}

/// Expected L1 distance of an `n`-sample histogram drawn from `target`
/// (normal approximation per bin).
pub fn l1_noise_floor(target: &[f64], n: usize) -> f64 {
    target
        .iter()
        .map(|q| (2.0 * q * (1.0 - q) / (PI * n as f64)).sqrt())
        .sum()
}

fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    for _ in 0..8 {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
    v.clamp(lo, hi)
}

/// Inverse-CDF sampler for a piecewise-linear density on a grid.
struct LinearDensitySampler {
    nodes: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl LinearDensitySampler {
    fn new(pi: &StationaryDistribution) -> Self {
        let nodes: Vec<f64> = pi.grid.nodes().collect();
        let h = pi.grid.spacing();
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in pi.weights.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            cumulative.push(acc);
        }
        let total = acc;
        LinearDensitySampler {
            nodes,
            density: pi.weights.iter().map(|w| w / total).collect(),
            cumulative: cumulative.iter().map(|c| c / total).collect(),
        }
    }

    fn sample(&self, u: f64) -> f64 {
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .clamp(1, self.nodes.len() - 1)
            - 1;
        let h = self.nodes[i + 1] - self.nodes[i];
        let (p0, p1) = (self.density[i], self.density[i + 1]);
        let r = u - self.cumulative[i];
        // Solve p0 s + (p1 − p0) s²/(2h) = r for s in [0, h].
        let slope = (p1 - p0) / h;
        let s = if slope.abs() < 1e-12 * (p0 + p1).max(f64::MIN_POSITIVE) / h {
            if p0 > 0.0 {
                r / p0
            } else {
                0.5 * h
            }
        } else {
            let disc = (p0 * p0 + 2.0 * slope * r).max(0.0);
            2.0 * r / (p0 + disc.sqrt())
        };
        self.nodes[i] + s.clamp(0.0, h)
    }
}

/// `(c', a, a', a'/(2a))` tabulated on a fine uniform grid and interpolated
/// linearly; the relative interpolation error is far below the
/// Euler–Maruyama bias at any usable step.
struct LandscapeTable {
    y_min: f64,
    inv_h: f64,
    entries: Vec<[f64; 4]>,
}

const TABLE_INTERVALS: usize = 1 << 14;
const LANES: usize = 8;

impl LandscapeTable {
    fn new(spec: &LandscapeSpec) -> Self {
        let [y_min, y_max] = spec.domain;
        let h = (y_max - y_min) / TABLE_INTERVALS as f64;
        let entries = (0..=TABLE_INTERVALS)
            .map(|i| {
                let y = if i == TABLE_INTERVALS {
                    y_max
                } else {
                    y_min + i as f64 * h
                };
                let p = spec.point(y);
                [p.dc_dy, p.a, p.da_dy, 0.5 * p.da_dy / p.a]
            })
            .collect();
        LandscapeTable {
            y_min,
            inv_h: 1.0 / h,
            entries,
        }
    }

    #[inline]
    fn lookup(&self, y: f64) -> [f64; 4] {
        let s = (y - self.y_min) * self.inv_h;
        let i = (s as usize).min(TABLE_INTERVALS - 1);
        let w = s - i as f64;
        let (lo, hi) = (&self.entries[i], &self.entries[i + 1]);
        [
            lo[0] + w * (hi[0] - lo[0]),
            lo[1] + w * (hi[1] - lo[1]),
            lo[2] + w * (hi[2] - lo[2]),
            lo[3] + w * (hi[3] - lo[3]),
        ]
    }
}

/// Everything the per-particle loop needs, precomputed once.
struct Plan<'a> {
    table: LandscapeTable,
    spec: &'a LandscapeSpec,
    dynamics: Dynamics,
    cfg: &'a SimConfig,
    n_steps: usize,
    sample_every: usize,
    n_instants: usize,
    /// `η` during each step.
    eta: Vec<f64>,
    /// `√(2η dt)` during each step.
    noise: Vec<f64>,
    /// Drift multiplier (`dt` or `η dt`).
    drift: Vec<f64>,
    x_max: f64,
    sampler: Option<LinearDensitySampler>,
    init_eta: f64,
    bins: usize,
}

#[derive(Clone)]
struct ChunkStats {
    counts: Vec<u64>,
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
    sum_y: Vec<f64>,
    sum_yy: Vec<f64>,
}

impl ChunkStats {
    fn new(n_instants: usize, bins: usize) -> Self {
        ChunkStats {
            counts: vec![0; n_instants * bins],
            sum_x: vec![0.0; n_instants],
            sum_xx: vec![0.0; n_instants],
            sum_y: vec![0.0; n_instants],
            sum_yy: vec![0.0; n_instants],
        }
    }

    fn absorb(&mut self, other: &ChunkStats) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (dst, src) in [
            (&mut self.sum_x, &other.sum_x),
            (&mut self.sum_xx, &other.sum_xx),
            (&mut self.sum_y, &other.sum_y),
            (&mut self.sum_yy, &other.sum_yy),
        ] {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

impl Plan<'_> {
    fn record(&self, stats: &mut ChunkStats, k: usize, x: f64, y: f64) {
        let [y_min, y_max] = self.spec.domain;
        let b = (((y - y_min) / (y_max - y_min)) * self.bins as f64) as usize;
        stats.counts[k * self.bins + b.min(self.bins - 1)] += 1;
        stats.sum_x[k] += x;
        stats.sum_xx[k] += x * x;
        stats.sum_y[k] += y;
        stats.sum_yy[k] += y * y;
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng, two_d: bool) -> (f64, f64) {
        match self.cfg.init {
            Init::Point { x, y } => (if two_d { x } else { 0.0 }, y),
            Init::Stationary { .. } => {
                let sampler = self
                    .sampler
                    .as_ref()
                    .expect("stationary init has a sampler");
                let y = sampler.sample(rng.random::<f64>());
                let z: f64 = rng.sample(StandardNormal);
                let x = if two_d {
                    z * (self.init_eta / self.spec.point(y).a).sqrt()
                } else {
                    0.0
                };
                (x, y)
            }
        }
    }

    // Particles advance in lock-step groups of LANES so that the serial
    // dependency of each step on the previous position overlaps across lanes.
    fn run_chunk(&self, chunk: usize) -> Result<ChunkStats> {
        let mut stats = ChunkStats::new(self.n_instants, self.bins);
        let first = chunk * CHUNK;
        let last = (first + CHUNK).min(self.cfg.n_particles);
        let mut group = first;
        while group < last {
            let width = (last - group).min(LANES);
            self.run_group(&mut stats, group, width)?;
            group += width;
        }
        Ok(stats)
    }

    fn run_group(&self, stats: &mut ChunkStats, first: usize, width: usize) -> Result<()> {
        let [y_min, y_max] = self.spec.domain;
        let two_d = self.dynamics == Dynamics::ValleyRiver2d;
        let frozen = self.cfg.frozen_river;
        let mut rngs: Vec<ChaCha8Rng> = (0..width)
            .map(|lane| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                rng.set_stream((first + lane) as u64);
                rng
            })
            .collect();
        let mut xs = [0.0; LANES];
        let mut ys = [0.0; LANES];
        // Previous normals for the averaged-noise scheme; they stay zero and
        // unit-weighted under Euler–Maruyama.
        let averaged = self.cfg.integrator == Integrator::LeimkuhlerMatthews;
        let weight = if averaged { 0.5 } else { 1.0 };
        let mut prev_x = [0.0; LANES];
        let mut prev_y = [0.0; LANES];
        for (lane, rng) in rngs.iter_mut().enumerate() {
            (xs[lane], ys[lane]) = self.initial_state(rng, two_d);
            self.record(stats, 0, xs[lane], ys[lane]);
            if averaged {
                if two_d {
                    prev_x[lane] = rng.sample(StandardNormal);
                }
                prev_y[lane] = rng.sample(StandardNormal);
            }
        }
        let mut countdown = self.sample_every;
        for step in 0..self.n_steps {
            let g = self.drift[step];
            let s = weight * self.noise[step];
            let eta = self.eta[step];
            for (lane, rng) in rngs.iter_mut().enumerate() {
                let (mut x, mut y) = (xs[lane], ys[lane]);
                let [dc_dy, a, da_dy, half_log_slope] = self.table.lookup(y);
                if two_d {
                    let fresh_x: f64 = rng.sample(StandardNormal);
                    let fresh_y: f64 = rng.sample(StandardNormal);
                    let zx = fresh_x + prev_x[lane];
                    let zy = fresh_y + prev_y[lane];
                    if averaged {
                        prev_x[lane] = fresh_x;
                        prev_y[lane] = fresh_y;
                    }
                    let nx = x - g * a * x + s * zx;
                    if !frozen {
                        y -= g * (dc_dy + 0.5 * da_dy * x * x) - s * zy;
                    }
                    x = nx;
                    if x.abs() > self.x_max {
                        x = reflect(x, -self.x_max, self.x_max);
                    }
                } else {
                    let fresh: f64 = rng.sample(StandardNormal);
                    let zy = fresh + prev_y[lane];
                    if averaged {
                        prev_y[lane] = fresh;
                    }
                    if !frozen {
                        y += -g * (dc_dy + eta * half_log_slope) + s * zy;
                    }
                }
                if !(y.is_finite() && x.is_finite()) {
                    return Err(Error::Divergence {
                        particle: first + lane,
                        step: step + 1,
                        time: (step + 1) as f64 * self.cfg.dt,
                        suggested_dt: 0.5 * self.cfg.dt,
                    });
                }
                if y < y_min || y > y_max {
                    y = reflect(y, y_min, y_max);
                }
                xs[lane] = x;
                ys[lane] = y;
            }
            countdown -= 1;
            if countdown == 0 {
                countdown = self.sample_every;
                for lane in 0..width {
                    self.record(stats, (step + 1) / self.sample_every, xs[lane], ys[lane]);
                }
            }
        }
        Ok(())
    }
}

/// Runs an ensemble and measures its `y` marginal against the stationary
/// distribution at the protocol's final learning rate.
pub fn simulate(
    spec: &LandscapeSpec,
    protocol: &Protocol,
    cfg: &SimConfig,
    dynamics: Dynamics,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    protocol.validate()?;
    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let sample_every = ((cfg.sample_interval / cfg.dt).round() as usize).max(1);
    let n_instants = n_steps / sample_every + 1;
    let eta: Vec<f64> = (0..n_steps)
        .map(|i| protocol.eta_at(i as f64 * cfg.dt))
        .collect();
    if eta.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::contract(
            "simulate",
            "protocol produced an invalid learning rate",
        ));
    }
    let unscaled = cfg.time_convention == TimeConvention::Unscaled;
    let noise = eta.iter().map(|e| (2.0 * e * cfg.dt).sqrt()).collect();
    let drift = eta
        .iter()
        .map(|e| if unscaled { e * cfg.dt } else { cfg.dt })
        .collect();

    let init_eta = match cfg.init {
        Init::Stationary { eta } => {
            if !(eta > 0.0) {
                return Err(Error::config("sim.init.eta", "must be positive"));
            }
            eta
        }
        Init::Point { y, .. } => {
            spec.evaluate(y)
                .map_err(|e| Error::config("sim.init.y", e.to_string()))?;
            0.0
        }
    };
    let eta_max = eta.iter().cloned().fold(init_eta, f64::max);
    let (a_min, a_max) = spec.curvature_range();
    let rate_scale = if unscaled { eta_max } else { 1.0 };
    match dynamics {
        Dynamics::ValleyRiver2d => {
            if cfg.dt * a_max * rate_scale >= STABILITY_LIMIT {
                return Err(Error::config(
                    "sim.dt",
                    format!(
                        "dt * a_max{} = {:.3} must be below {STABILITY_LIMIT} (a_max = {a_max})",
                        if unscaled { " * eta_max" } else { "" },
                        cfg.dt * a_max * rate_scale
                    ),
                ));
            }
        }
        Dynamics::Effective1d => {
            let eta_min = eta.iter().cloned().fold(f64::INFINITY, f64::min);
            let stiffness =
                free_energy_stiffness(spec, eta_min).max(free_energy_stiffness(spec, eta_max));
            if cfg.dt * stiffness * rate_scale >= STABILITY_LIMIT {
                return Err(Error::config(
                    "sim.dt",
                    format!(
                        "dt * max|F''| = {:.3} must be below {STABILITY_LIMIT}",
                        cfg.dt * stiffness * rate_scale
                    ),
                ));
            }
        }
    }
    let x_max = cfg.x_max.unwrap_or(10.0 * (eta_max / a_min).sqrt());
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(Error::config(
            "sim.x_max",
            "could not derive a positive bound",
        ));
    }
    let sampler = match cfg.init {
        Init::Stationary { eta } => {
            let grid = Grid::for_spec(spec, INIT_GRID_POINTS)?;
            let pi =
                StationaryDistribution::from_free_energy(&spec.effective_free_energy(&grid, eta)?)?;
            Some(LinearDensitySampler::new(&pi))
        }
        Init::Point { .. } => None,
    };
    let plan = Plan {
        table: LandscapeTable::new(spec),
        spec,
        dynamics,
        cfg,
        n_steps,
        sample_every,
        n_instants,
        eta,
        noise,
        drift,
        x_max,
        sampler,
        init_eta,
        bins: cfg.histogram_bins,
    };

    let n_chunks = cfg.n_particles.div_ceil(CHUNK);
    let run = || -> Result<ChunkStats> {
        let mut total = ChunkStats::new(n_instants, cfg.histogram_bins);
        let batch = 64;
        for start in (0..n_chunks).step_by(batch) {
            let parts: Vec<Result<ChunkStats>> = (start..(start + batch).min(n_chunks))
                .into_par_iter()
                .map(|c| plan.run_chunk(c))
                .collect();
            for part in parts {
                total.absorb(&part?);
            }
        }
        Ok(total)
    };
    let stats = if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::numerical("simulate", format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };

    let final_eta = protocol.eta_at(cfg.t_end);
    let target = target_masses(spec, final_eta, cfg.histogram_bins);
    let n = cfg.n_particles as f64;
    let bins = cfg.histogram_bins;
    let mut result = EnsembleResult {
        times: (0..n_instants)
            .map(|k| (k * sample_every) as f64 * cfg.dt)
            .collect(),
        y_histograms: Vec::with_capacity(n_instants),
        particle_counts: Vec::with_capacity(n_instants),
        distance_series: Vec::new(),
        distance_standard_errors: Vec::new(),
        distance_noise_floor: None,
        x_variance_series: Vec::new(),
        y_variance_series: Vec::with_capacity(n_instants),
        target_eta: target.as_ref().map(|_| final_eta),
        target_masses: target.clone().unwrap_or_default(),
        n_particles: cfg.n_particles,
        metadata: metadata(spec, protocol, cfg, dynamics),
    };
    for k in 0..n_instants {
        let counts = &stats.counts[k * bins..(k + 1) * bins];
        result.particle_counts.push(counts.iter().sum());
        result
            .y_histograms
            .push(counts.iter().map(|c| *c as f64 / n).collect());
        let my = stats.sum_y[k] / n;
        result.y_variance_series.push(stats.sum_yy[k] / n - my * my);
        if dynamics == Dynamics::ValleyRiver2d {
            let mx = stats.sum_x[k] / n;
            result.x_variance_series.push(stats.sum_xx[k] / n - mx * mx);
        }
    }
    if let Some(q) = &target {
        result.distance_noise_floor = Some(l1_noise_floor(q, cfg.n_particles));
        for h in &result.y_histograms {
            result
                .distance_series
                .push(distance_to_masses(h, q, Metric::L1)?);
            result
                .distance_standard_errors
                .push(l1_standard_error(h, q, cfg.n_particles));
        }
    }
    Ok(result)
}

/// [`simulate`] with the coarse-grained river dynamics. The free energy is
/// re-evaluated at the instantaneous learning rate.
pub fn simulate_effective_1d(
    spec: &LandscapeSpec,
    protocol: &Protocol,
    cfg: &SimConfig,
) -> Result<EnsembleResult> {
    simulate(spec, protocol, cfg, Dynamics::Effective1d)
}

fn target_masses(spec: &LandscapeSpec, eta: f64, bins: usize) -> Option<Vec<f64>> {
    let per_bin = TARGET_NODES.div_ceil(bins);
    let grid = Grid::for_spec(spec, bins * per_bin + 1).ok()?;
    let field = spec.effective_free_energy(&grid, eta).ok()?;
    StationaryDistribution::from_free_energy(&field)
        .ok()?
        .bin_masses(bins)
        .ok()
}

/// Largest `|F''_η|` on a probe grid (finite differences of `F'_η`).
fn free_energy_stiffness(spec: &LandscapeSpec, eta: f64) -> f64 {
    let Ok(grid) = Grid::for_spec(spec, 2049) else {
        return f64::INFINITY;
    };
    let Ok(field) = spec.effective_free_energy(&grid, eta) else {
        return f64::INFINITY;
    };
    let h = grid.spacing();
    field
        .derivative
        .windows(2)
        .map(|w| ((w[1] - w[0]) / h).abs())
        .fold(0.0, f64::max)
}

fn metadata(
    spec: &LandscapeSpec,
    protocol: &Protocol,
    cfg: &SimConfig,
    dynamics: Dynamics,
) -> RunMetadata {
    let config = serde_json::json!({
        "landscape": spec,
        "protocol": protocol,
        "sim": cfg,
        "dynamics": dynamics,
    });
    let canonical = to_json_string(&config);
    RunMetadata {
        run_id: run_id(canonical.as_bytes()),
        dynamics,
        config,
    }
}

impl EnsembleResult {
    /// `time,distance,distance_se,x_variance,y_variance` preceded by a `#` config line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# run_id {} config {}\n",
            self.metadata.run_id,
            compact(&self.metadata.config)
        );
        out.push_str("time,distance,distance_se,x_variance,y_variance\n");
        for k in 0..self.times.len() {
            let cell = |v: Option<&f64>| v.map(|v| fmt_f64(*v)).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(self.times[k]),
                cell(self.distance_series.get(k)),
                cell(self.distance_standard_errors.get(k)),
                cell(self.x_variance_series.get(k)),
                cell(self.y_variance_series.get(k)),
            ));
        }
        out
    }

    /// Histograms and series as JSON, with the config echo.
    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    /// Distance to the target over time, with the config echoed in `<desc>`.
    pub fn to_svg(&self) -> String {
        let svg = LinePlot {
            title: format!("Ensemble relaxation, run {}", self.metadata.run_id),
            x_label: "time".into(),
            y_label: "L1 distance to target".into(),
            log_x: false,
            log_y: true,
            series: vec![Series {
                label: "distance".into(),
                points: self
                    .times
                    .iter()
                    .cloned()
                    .zip(self.distance_series.iter().cloned())
                    .filter(|p| p.1 > 0.0)
                    .collect(),
                color: PALETTE[1],
            }],
            markers: Vec::new(),
            y_reference: self.distance_noise_floor.filter(|f| *f > 0.0),
        }
        .render();
        with_desc(svg, &self.metadata.config)
    }
}

fn with_desc(svg: String, config: &serde_json::Value) -> String {
    let desc = format!(
        "<desc>{}</desc>\n",
        compact(config).replace('&', "&amp;").replace('<', "&lt;")
    );
    svg.replacen("<rect", &format!("{desc}<rect"), 1)
}

fn compact(v: &serde_json::Value) -> String {
    serde_json::to_string(v).expect("JSON values serialize")
}

/// Least-squares decay rate of a distance curve above its noise floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    /// Fit window, in time since the quench.
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

/// Fits `ln √(d² − floor²)` against time over the initial stretch where
/// `d ≥ 4·floor`, skipping its first `FIT_SKIP` fraction so that faster modes
/// have died out.
pub fn fit_decay_rate(times: &[f64], distance: &[f64], floor: f64) -> Option<RateFit> {
    let threshold = 4.0 * floor;
    let end = distance
        .iter()
        .position(|d| *d < threshold)
        .unwrap_or(distance.len());
    if end < 2 {
        return None;
    }
    let t0 = times[0];
    let horizon = times[end - 1] - t0;
    let pts: Vec<(f64, f64)> = (0..end)
        .filter(|&i| times[i] - t0 >= FIT_SKIP * horizon)
        .map(|i| {
            (
                times[i] - t0,
                0.5 * (distance[i] * distance[i] - floor * floor).ln(),
            )
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    Some(RateFit {
        rate: -sxy / sxx,
        t_start: pts[0].0,
        t_end: pts[pts.len() - 1].0,
        points: pts.len(),
    })
}

/// Leading fraction of the resolvable stretch excluded from rate fits. The
/// slow-mode noise is correlated over the whole window, so the spread of the
/// fitted rate shrinks roughly with the window length; 0.2 leaves fast
/// transients out while keeping most of the lever arm.
pub const FIT_SKIP: f64 = 0.2;

/// First instant from which `hot < cold` for `persistence` consecutive instants,
/// after having been `hot ≥ cold`. Only instants where `cold ≥ resolution`
/// qualify, so that curves already buried in sampling noise cannot cross.
pub fn crossing_index(
    hot: &[f64],
    cold: &[f64],
    persistence: usize,
    resolution: f64,
) -> Option<usize> {
    let n = hot.len().min(cold.len());
    (1..n).find(|&i| {
        hot[i - 1] >= cold[i - 1]
            && cold[i] >= resolution
            && i + persistence <= n
            && (i..i + persistence).all(|j| hot[j] < cold[j])
    })
}

/// Instants a crossing must persist.
pub const CROSSING_PERSISTENCE: usize = 10;
/// Allowed relative drift of the equilibration observable over the last part of the plateau.
pub const EQUILIBRATION_DRIFT: f64 = 0.02;
/// Fraction of the plateau inspected for equilibration.
pub const EQUILIBRATION_WINDOW: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpembaConfig {
    pub sim: SimConfig,
    #[serde(default)]
    pub dynamics: Dynamics,
    /// Plateau length before the quench; defaults to `10 τ_x = 10/a_min`.
    #[serde(default)]
    pub plateau: Option<f64>,
    /// Observation time after the quench.
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentVerdict {
    MpembaConfirmed,
    NotObserved,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpembaExperiment {
    pub eta_h: f64,
    pub eta_l: f64,
    pub eta_b: f64,
    pub plateau: f64,
    /// Times since the quench.
    pub times: Vec<f64>,
    pub hot_distance: Vec<f64>,
    pub cold_distance: Vec<f64>,
    pub hot_standard_error: Vec<f64>,
    pub cold_standard_error: Vec<f64>,
    pub noise_floor: f64,
    pub crossing_time: Option<f64>,
    pub hot_rate: Option<RateFit>,
    pub cold_rate: Option<RateFit>,
    /// Slowest rates of the bath operator, when resolvable.
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    /// Relative drift of the equilibration observable over the plateau tail.
    pub hot_plateau_drift: f64,
    pub cold_plateau_drift: f64,
    pub verdict: ExperimentVerdict,
    #[serde(skip)]
    pub hot: EnsembleResult,
    #[serde(skip)]
    pub cold: EnsembleResult,
}

/// Relative drift `|slope| · window / mean` of `series` over the instants in `[t0, t1]`.
fn relative_drift(times: &[f64], series: &[f64], t0: f64, t1: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 5 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    Some((sxy / sxx * (t1 - t0) / mv).abs())
}

/// Equilibrates a hot (`η_h`) and a cold (`η_l`) ensemble at their plateau
/// rates, quenches both to `η_b`, and compares their relaxation.
pub fn mpemba_experiment(
    spec: &LandscapeSpec,
    eta_h: f64,
    eta_l: f64,
    eta_b: f64,
    cfg: &MpembaConfig,
) -> Result<MpembaExperiment> {
    if !(eta_b > 0.0 && eta_b < eta_l && eta_l <= eta_h) {
        return Err(Error::contract(
            "mpemba_experiment",
            format!("requires 0 < eta_b < eta_l <= eta_h (got {eta_b}, {eta_l}, {eta_h})"),
        ));
    }
    if cfg.sim.time_convention == TimeConvention::Unscaled {
        return Err(Error::config(
            "sim.time_convention",
            "the unscaled dynamics relax to an eta-independent law; use `rescaled`",
        ));
    }
    if !(cfg.horizon > 0.0) {
        return Err(Error::config("horizon", "must be positive"));
    }
    let (a_min, _) = spec.curvature_range();
    let min_plateau = 10.0 / a_min;
    let plateau = cfg.plateau.unwrap_or(min_plateau);
    if plateau < min_plateau * (1.0 - 1e-12) {
        return Err(Error::config(
            "plateau",
            format!("must be at least 10 tau_x = {min_plateau}"),
        ));
    }
    let run = |eta: f64| -> Result<(EnsembleResult, f64)> {
        let sim = SimConfig {
            init: Init::Stationary { eta },
            t_end: plateau + cfg.horizon,
            ..cfg.sim.clone()
        };
        let protocol = Protocol::Quench {
            eta_from: eta,
            eta_to: eta_b,
            t_quench: plateau,
        };
        let result = simulate(spec, &protocol, &sim, cfg.dynamics)?;
        let observable = match cfg.dynamics {
            Dynamics::ValleyRiver2d => &result.x_variance_series,
            Dynamics::Effective1d => &result.y_variance_series,
        };
        // The last recorded plateau instant precedes the first quenched step.
        let drift = relative_drift(
            &result.times,
            observable,
            (1.0 - EQUILIBRATION_WINDOW) * plateau,
            plateau,
        )
        .ok_or_else(|| {
            Error::config(
                "sim.sample_interval",
                "too coarse: fewer than 5 instants in the plateau equilibration window",
            )
        })?;
        if drift >= EQUILIBRATION_DRIFT {
            return Err(Error::contract(
                "mpemba_experiment",
                format!(
                    "plateau at eta = {eta} is not equilibrated (relative drift {:.2}% >= {:.0}%); lengthen the plateau",
                    100.0 * drift,
                    100.0 * EQUILIBRATION_DRIFT
                ),
            ));
        }
        Ok((result, drift))
    };
    let (hot, hot_drift) = run(eta_h)?;
    let (cold, cold_drift) = run(eta_l)?;

    let start = hot.times.partition_point(|t| *t < plateau - 1e-9);
    let times: Vec<f64> = hot.times[start..].iter().map(|t| t - plateau).collect();
    let slice = |v: &[f64]| v.get(start..).map(<[f64]>::to_vec).unwrap_or_default();
    let hot_distance = slice(&hot.distance_series);
    let cold_distance = slice(&cold.distance_series);
    if hot_distance.is_empty() {
        return Err(Error::numerical(
            "mpemba_experiment",
            "bath distribution is degenerate; no distances",
        ));
    }
    let noise_floor = hot.distance_noise_floor.unwrap_or(0.0);
    let crossing = crossing_index(
        &hot_distance,
        &cold_distance,
        CROSSING_PERSISTENCE,
        4.0 * noise_floor,
    );
    let (lambda2, lambda3) = bath_rates(spec, eta_b);
    Ok(MpembaExperiment {
        eta_h,
        eta_l,
        eta_b,
        plateau,
        hot_rate: fit_decay_rate(&times, &hot_distance, noise_floor),
        cold_rate: fit_decay_rate(&times, &cold_distance, noise_floor),
        crossing_time: crossing.map(|i| times[i]),
        verdict: if crossing.is_some() {
            ExperimentVerdict::MpembaConfirmed
        } else {
            ExperimentVerdict::NotObserved
        },
        hot_standard_error: slice(&hot.distance_standard_errors),
        cold_standard_error: slice(&cold.distance_standard_errors),
        times,
        hot_distance,
        cold_distance,
        noise_floor,
        lambda2,
        lambda3,
        hot_plateau_drift: hot_drift,
        cold_plateau_drift: cold_drift,
        hot,
        cold,
    })
}

fn bath_rates(spec: &LandscapeSpec, eta_b: f64) -> (Option<f64>, Option<f64>) {
    let decomposition = Grid::for_spec(spec, 2001)
        .and_then(|g| spec.effective_free_energy(&g, eta_b))
        .and_then(|f| SpectralDecomposition::new(&f, 3));
    match decomposition {
        Ok(d) => (Some(d.eigenvalues[1]), Some(d.eigenvalues[2])),
        Err(_) => (None, None),
    }
}

impl MpembaExperiment {
    /// `time,hot_distance,cold_distance,hot_se,cold_se` after a `#` config line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# hot_run_id {} cold_run_id {} config {}\n",
            self.hot.metadata.run_id,
            self.cold.metadata.run_id,
            compact(&self.hot.metadata.config)
        );
        out.push_str("time,hot_distance,cold_distance,hot_se,cold_se\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(self.times[k]),
                fmt_f64(self.hot_distance[k]),
                fmt_f64(self.cold_distance[k]),
                fmt_f64(self.hot_standard_error[k]),
                fmt_f64(self.cold_standard_error[k])
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            #[serde(flatten)]
            report: &'a MpembaExperiment,
            hot_run: &'a RunMetadata,
            cold_run: &'a RunMetadata,
            hot_histograms: &'a [Vec<f64>],
            cold_histograms: &'a [Vec<f64>],
        }
        to_json_string(&Doc {
            report: self,
            hot_run: &self.hot.metadata,
            cold_run: &self.cold.metadata,
            hot_histograms: &self.hot.y_histograms,
            cold_histograms: &self.cold.y_histograms,
        })
    }

    /// Hot and cold distance curves on a log axis with the noise floor.
    pub fn to_svg(&self) -> String {
        let series = |label: String, d: &[f64], color| Series {
            label,
            points: self
                .times
                .iter()
                .cloned()
                .zip(d.iter().cloned())
                .filter(|p| p.1 > 0.0)
                .collect(),
            color,
        };
        let svg = LinePlot {
            title: format!("Quench to eta_b = {}", self.eta_b),
            x_label: "time since quench".into(),
            y_label: "L1 distance to bath distribution".into(),
            log_x: false,
            log_y: true,
            series: vec![
                series(
                    format!("hot eta = {}", self.eta_h),
                    &self.hot_distance,
                    PALETTE[0],
                ),
                series(
                    format!("cold eta = {}", self.eta_l),
                    &self.cold_distance,
                    PALETTE[1],
                ),
            ],
            markers: self
                .crossing_time
                .and_then(|t| {
                    self.times
                        .iter()
                        .position(|s| *s == t)
                        .map(|i| (t, self.hot_distance[i]))
                })
                .into_iter()
                .collect(),
            y_reference: Some(self.noise_floor).filter(|f| *f > 0.0),
        }
        .render();
        with_desc(svg, &self.hot.metadata.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{presets, RiverProfile, ValleyCurvature};

    fn flat_valley(a0: f64) -> LandscapeSpec {
        LandscapeSpec::new(
            RiverProfile::Polynomial { coeffs: vec![0.0] },
            ValleyCurvature::Constant { a0 },
            -1.0,
            1.0,
        )
        .unwrap()
    }

    fn cfg(n: usize, dt: f64, t_end: f64, init: Init) -> SimConfig {
        SimConfig {
            n_particles: n,
            dt,
            t_end,
            seed: 7,
            time_convention: TimeConvention::Rescaled,
            histogram_bins: 8,
            init,
            sample_interval: t_end / 10.0,
            x_max: None,
            workers: 0,
            frozen_river: false,
            integrator: Integrator::default(),
        }
    }

    #[test]
    fn reflection_folds_into_interval() {
        assert_eq!(reflect(1.2, -1.0, 1.0), 0.8);
        assert_eq!(reflect(-1.5, -1.0, 1.0), -0.5);
        assert_eq!(reflect(0.3, -1.0, 1.0), 0.3);
        assert_eq!(reflect(1e9, -1.0, 1.0), 1.0);
    }

    #[test]
    fn distances() {
        let p = [0.5, 0.5, 0.0, 0.0];
        let q = [0.0, 0.0, 0.5, 0.5];
        assert_eq!(distance_to_masses(&p, &q, Metric::L1).unwrap(), 2.0);
        assert_eq!(distance_to_masses(&p, &p, Metric::Kl).unwrap(), 0.0);
        assert!(distance_to_masses(&p, &q[..3], Metric::L1).is_err());
        // Zero target mass with positive histogram mass: finite thanks to the floor.
        assert!(distance_to_masses(&p, &q, Metric::Kl).unwrap().is_finite());
    }

    #[test]
    fn binned_target_has_zero_distance() {
        let spec = presets::by_name("double-well").unwrap();
        let grid = Grid::for_spec(&spec, 20 * TARGET_NODES.div_ceil(20) + 1).unwrap();
        let pi = StationaryDistribution::from_free_energy(
            &spec.effective_free_energy(&grid, 0.3).unwrap(),
        )
        .unwrap();
        let masses = pi.bin_masses(20).unwrap();
        assert!(distance_to_target(&masses, &pi, Metric::L1).unwrap() < 1e-12);
    }

    #[test]
    fn target_masses_match_quadrature_for_sharp_law() {
        let (h, w, a0, beta, eta) = (0.5, 0.8, 4f64.exp(), 2.0, 0.15);
        let spec = presets::double_well(presets::DoubleWellParams {
            h,
            w,
            a0,
            beta,
            half_width: 2.0,
        })
        .unwrap();
        let density = |y: f64| {
            let q = (y / w).powi(2) - 1.0;
            (-(h * q * q + 0.5 * eta * (a0.ln() + beta * y)) / eta).exp()
        };
        // Composite Simpson per unit bin.
        let simpson = |lo: f64| {
            let n = 4000;
            let dx = 1.0 / n as f64;
            (0..=n)
                .map(|i| {
                    let wgt = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    wgt * density(lo + i as f64 * dx)
                })
                .sum::<f64>()
                * dx
                / 3.0
        };
        let raw: Vec<f64> = [-2.0, -1.0, 0.0, 1.0]
            .iter()
            .map(|&lo| simpson(lo))
            .collect();
        let z: f64 = raw.iter().sum();
        let masses = target_masses(&spec, eta, 4).unwrap();
        for (m, r) in masses.iter().zip(&raw) {
            assert!((m - r / z).abs() < 1e-6, "{m} vs {}", r / z);
        }
    }

    #[test]
    fn averaged_noise_removes_the_step_size_bias_in_ou_variance() {
        // Euler–Maruyama inflates the stationary variance by 1/(1 − κ dt/2);
        // the averaged-noise scheme is exact for linear drift.
        let spec = presets::ou(1.0, 8.0).unwrap();
        let protocol = Protocol::Constant { eta: 0.5 };
        let late_variance = |integrator| {
            let c = SimConfig {
                integrator,
                ..cfg(20_000, 0.2, 10.0, Init::Stationary { eta: 0.5 })
            };
            let r = simulate(&spec, &protocol, &c, Dynamics::Effective1d).unwrap();
            let late = &r.y_variance_series[2..];
            late.iter().sum::<f64>() / late.len() as f64
        };
        let em = late_variance(Integrator::EulerMaruyama);
        let lm = late_variance(Integrator::LeimkuhlerMatthews);
        assert!((em / (0.5 / 0.9) - 1.0).abs() < 0.03, "EM variance {em}");
        assert!((lm / 0.5 - 1.0).abs() < 0.03, "LM variance {lm}");
    }

    #[test]
    fn gaussian_kl_matches_closed_form() {
        let spec = LandscapeSpec::new(
            RiverProfile::Polynomial {
                coeffs: vec![0.0, 0.0, 0.5],
            },
            ValleyCurvature::Constant { a0: 1.0 },
            -10.0,
            10.0,
        )
        .unwrap();
        let bins = 400;
        let p = target_masses(&spec, 1.0, bins).unwrap();
        let q = target_masses(&spec, 1.1, bins).unwrap();
        let kl = distance_to_masses(&p, &q, Metric::Kl).unwrap();
        let exact = 0.5 * (1.0 / 1.1 - 1.0 + 1.1f64.ln());
        assert!(((kl - exact) / exact).abs() < 0.05, "{kl} vs {exact}");
    }

    #[test]
    fn linear_sampler_reproduces_density() {
        let spec = presets::by_name("double-well").unwrap();
        let grid = Grid::for_spec(&spec, 257).unwrap();
        let pi = StationaryDistribution::from_free_energy(
            &spec.effective_free_energy(&grid, 0.4).unwrap(),
        )
        .unwrap();
        let s = LinearDensitySampler::new(&pi);
        assert_eq!(s.sample(0.0), spec.y_min());
        let n = 20000;
        let mean: f64 = (0..n)
            .map(|i| s.sample((i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        let nodes: Vec<f64> = grid.nodes().collect();
        assert!((mean - pi.expectation(&nodes)).abs() < 1e-4);
    }

    #[test]
    fn divergence_and_guards_are_reported() {
        let spec = flat_valley(4.0);
        let bad = SimConfig {
            sample_interval: 0.2,
            ..cfg(100, 0.2, 1.0, Init::Point { x: 0.0, y: 0.0 })
        };
        let err = simulate(
            &spec,
            &Protocol::Constant { eta: 0.1 },
            &bad,
            Dynamics::ValleyRiver2d,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "sim.dt"));
        let few = cfg(10, 0.01, 1.0, Init::Point { x: 0.0, y: 0.0 });
        assert!(simulate(
            &spec,
            &Protocol::Constant { eta: 0.1 },
            &few,
            Dynamics::ValleyRiver2d
        )
        .is_err());
    }

    #[test]
    fn noiseless_particles_stay_at_minimum() {
        let spec = presets::by_name("double-well").unwrap();
        let c = SimConfig {
            histogram_bins: 400,
            ..cfg(200, 1e-3, 1.0, Init::Point { x: 0.0, y: 1.0 })
        };
        let r = simulate(
            &spec,
            &Protocol::Constant { eta: 1e-12 },
            &c,
            Dynamics::ValleyRiver2d,
        )
        .unwrap();
        // Bin of width 0.01 containing y = 1 (plus neighbour for the edge).
        let last = r.y_histograms.last().unwrap();
        let mass: f64 = last[299..=300].iter().sum();
        assert_eq!(mass, 1.0);
        assert!(r.y_variance_series.iter().all(|v| *v < 1e-6));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = presets::by_name("double-well").unwrap();
        let base = cfg(600, 2e-3, 0.5, Init::Stationary { eta: 0.5 });
        let one = simulate(
            &spec,
            &Protocol::Constant { eta: 0.3 },
            &SimConfig {
                workers: 1,
                ..base.clone()
            },
            Dynamics::ValleyRiver2d,
        )
        .unwrap();
        let many = simulate(
            &spec,
            &Protocol::Constant { eta: 0.3 },
            &SimConfig { workers: 3, ..base },
            Dynamics::ValleyRiver2d,
        )
        .unwrap();
        assert_eq!(one.distance_series, many.distance_series);
        assert_eq!(one.x_variance_series, many.x_variance_series);
        assert!(one.particle_counts.iter().all(|c| *c == 600));
    }

    #[test]
    fn free_diffusion_flattens() {
        let spec = flat_valley(1.0);
        let c = SimConfig {
            sample_interval: 0.2,
            ..cfg(4000, 2e-3, 2.0, Init::Point { x: 0.0, y: -0.9 })
        };
        let r = simulate_effective_1d(&spec, &Protocol::Constant { eta: 0.5 }, &c).unwrap();
        assert!(r.x_variance_series.is_empty());
        let d = &r.distance_series;
        assert!(d[0] > 1.5 && *d.last().unwrap() < 0.2, "{d:?}");
        assert!(d.windows(2).take(5).all(|w| w[1] < w[0]));
    }

    #[test]
    fn crossing_requires_persistence() {
        let hot = [5.0, 4.0, 1.0, 1.0, 1.0];
        let cold = [2.0, 2.0, 2.0, 2.0, 2.0];
        assert_eq!(crossing_index(&hot, &cold, 3, 0.0), Some(2));
        assert_eq!(crossing_index(&hot, &cold, 4, 0.0), None);
        assert_eq!(crossing_index(&cold, &cold, 1, 0.0), None);
        assert_eq!(crossing_index(&hot, &cold, 3, 10.0), None);
    }

    #[test]
    fn rate_fit_recovers_exponential() {
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let floor = 1e-3;
        let d: Vec<f64> = times
            .iter()
            .map(|t| ((0.5 * (-0.7 * t).exp()).powi(2) + floor * floor).sqrt())
            .collect();
        let fit = fit_decay_rate(&times, &d, floor).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-9, "{fit:?}");
    }
}
