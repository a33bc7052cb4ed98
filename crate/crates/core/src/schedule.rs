//! Warm-up / stable / decay learning-rate schedules.
//!
//! Decay follows `η̇ = −m η^p` from the plateau value `η⋆`. A schedule
//! preserves the Mpemba advantage when its decay is fast compared with the
//! river time scale and slow compared with the valley time scale,
//! `η/τ_y ≪ |η̇| ≲ η/τ_x`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{fmt_f64, to_json_string};
use crate::landscape::TimeConvention;
use crate::svg::{LinePlot, Series, PALETTE};

/// Below this distance from 1 the exponent is treated as exactly 1.
pub const UNIT_EXPONENT_TOLERANCE: f64 = 1e-9;
/// Plateau length and decay slowdown factor of the recommended schedule.
pub const RECOMMENDED_FACTOR: f64 = 5.0;

/// `η̇ = −m η^p` started from `η⋆` at the beginning of the decay phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayFamily {
    /// `p > 0`.
    pub exponent: f64,
    /// `m > 0`.
    pub coefficient: f64,
    pub eta_star: f64,
    #[serde(default)]
    pub time_convention: TimeConvention,
}

impl DecayFamily {
    pub fn new(
        exponent: f64,
        coefficient: f64,
        eta_star: f64,
        time_convention: TimeConvention,
    ) -> Result<Self> {
        let family = DecayFamily {
            exponent,
            coefficient,
            eta_star,
            time_convention,
        };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("exponent", self.exponent),
            ("coefficient", self.coefficient),
            ("eta_star", self.eta_star),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::contract(
                    "DecayFamily",
                    format!("{name} must be positive and finite, got {v}"),
                ));
            }
        }
        Ok(())
    }

    fn is_exponential(&self) -> bool {
        (self.exponent - 1.0).abs() < UNIT_EXPONENT_TOLERANCE
    }

    /// `η(t)` in closed form; `0 < p < 1` is clamped to zero after extinction.
    pub fn value(&self, t: f64) -> f64 {
        let (p, m, e0) = (self.exponent, self.coefficient, self.eta_star);
        if self.is_exponential() {
            e0 * (-m * t).exp()
        } else if p > 1.0 {
            let q = p - 1.0;
            // (1 + q m η⋆^q t)^(−1/q)
            e0 * (-(q * m * e0.powf(q) * t).ln_1p() / q).exp()
        } else {
            let q = 1.0 - p;
            // (1 − q m η⋆^{−q} t)^(1/q), kept in log form so p → 1 stays accurate
            let x = m * q * t / e0.powf(q);
            if x >= 1.0 || t >= self.extinction_time().unwrap_or(f64::INFINITY) {
                0.0
            } else {
                e0 * ((-x).ln_1p() / q).exp()
            }
        }
    }

    /// `η̇(t) = −m η(t)^p`.
    pub fn rate(&self, t: f64) -> f64 {
        -self.coefficient * self.value(t).powf(self.exponent)
    }

    /// `t_stop = η⋆^{1−p} / (m(1−p))` for `0 < p < 1`.
    pub fn extinction_time(&self) -> Option<f64> {
        if self.exponent < 1.0 && !self.is_exponential() {
            let q = 1.0 - self.exponent;
            Some(self.eta_star.powf(q) / (self.coefficient * q))
        } else {
            None
        }
    }

    /// `1/(m η⋆^{p−1})`, the initial e-folding time.
    pub fn characteristic_time(&self) -> f64 {
        1.0 / (self.coefficient * self.eta_star.powf(self.exponent - 1.0))
    }
}

/// Closed-form decay value; see [`DecayFamily::value`].
pub fn decay_value(family: &DecayFamily, t: f64) -> f64 {
    family.value(t)
}

/// Envelope `(η⋆e^{−at}, η⋆/(1 + kη⋆t))` for rescaled time.
pub fn decay_bounds(eta_star: f64, a: f64, k: f64, t: f64) -> (f64, f64) {
    (
        eta_star * (-a * t).exp(),
        eta_star / (1.0 + k * eta_star * t),
    )
}

/// Inverse-time decay `η⋆/(1 + t/t½)` with `t½ = 1/(aη⋆)`, the saturated
/// valley bound when time is not rescaled by the learning rate.
pub fn unscaled_inverse_time(eta_star: f64, a: f64, t: f64) -> f64 {
    let t_half = 1.0 / (a * eta_star);
    eta_star / (1.0 + t / t_half)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Warmup {
    /// Linear ramp from 0 to `η⋆`.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stable {
    pub eta: f64,
    pub duration: f64,
}

/// A complete warm-up / stable / decay schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchedulePlan {
    pub warmup: Warmup,
    pub stable: Stable,
    pub decay: DecayFamily,
    pub decay_duration: f64,
    /// Valley curvature at the river position of interest.
    pub a: f64,
    /// Curvature log-slope at the same position.
    pub k: f64,
    /// `(t, η)` covering every phase.
    pub samples: Vec<(f64, f64)>,
}

impl SchedulePlan {
    /// Builds a plan and samples it every `sample_interval` (plus phase boundaries).
    pub fn new(
        warmup_duration: f64,
        stable_duration: f64,
        decay: DecayFamily,
        decay_duration: f64,
        a: f64,
        k: f64,
        sample_interval: f64,
    ) -> Result<Self> {
        decay.validate()?;
        for (name, v) in [
            ("warmup duration", warmup_duration),
            ("stable duration", stable_duration),
            ("decay duration", decay_duration),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::contract(
                    "SchedulePlan",
                    format!("{name} must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !(a > 0.0) || !(k >= 0.0) {
            return Err(Error::contract(
                "SchedulePlan",
                format!("requires a > 0 and k >= 0 (a = {a}, k = {k})"),
            ));
        }
        if !(sample_interval > 0.0) {
            return Err(Error::contract(
                "SchedulePlan",
                "sample interval must be positive",
            ));
        }
        let mut plan = SchedulePlan {
            warmup: Warmup {
                duration: warmup_duration,
            },
            stable: Stable {
                eta: decay.eta_star,
                duration: stable_duration,
            },
            decay,
            decay_duration,
            a,
            k,
            samples: Vec::new(),
        };
        plan.samples = plan
            .sample_times(sample_interval)
            .into_iter()
            .map(|t| (t, plan.eta_at(t)))
            .collect();
        Ok(plan)
    }

    fn sample_times(&self, interval: f64) -> Vec<f64> {
        let end = self.total_duration();
        let n = (end / interval).ceil() as usize;
        let mut times: Vec<f64> = (0..=n).map(|i| (i as f64 * interval).min(end)).collect();
        times.push(self.decay_start());
        times.push(self.warmup.duration);
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    pub fn decay_start(&self) -> f64 {
        self.warmup.duration + self.stable.duration
    }

    pub fn total_duration(&self) -> f64 {
        self.decay_start() + self.decay_duration
    }

    /// Learning rate at absolute time `t`; the decay continues past the sampled horizon.
    pub fn eta_at(&self, t: f64) -> f64 {
        if t < self.warmup.duration {
            self.stable.eta * t / self.warmup.duration
        } else if t < self.decay_start() {
            self.stable.eta
        } else {
            self.decay.value(t - self.decay_start())
        }
    }

    pub fn final_eta(&self) -> f64 {
        self.eta_at(self.total_duration())
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    /// `η(t)` over the whole plan with the decay-phase bound envelope.
    pub fn to_svg(&self) -> String {
        let start = self.decay_start();
        let envelope = |pick: fn((f64, f64)) -> f64| -> Vec<(f64, f64)> {
            self.samples
                .iter()
                .filter(|(t, _)| *t >= start)
                .map(|&(t, _)| {
                    (
                        t,
                        pick(decay_bounds(self.decay.eta_star, self.a, self.k, t - start)),
                    )
                })
                .collect()
        };
        LinePlot {
            title: format!("Learning-rate schedule, eta* = {}", self.stable.eta),
            x_label: "time".into(),
            y_label: "learning rate".into(),
            log_x: false,
            log_y: false,
            series: vec![
                Series {
                    label: "eta(t)".into(),
                    points: self.samples.clone(),
                    color: PALETTE[0],
                },
                Series {
                    label: "lower bound".into(),
                    points: envelope(|b| b.0),
                    color: PALETTE[2],
                },
                Series {
                    label: "upper bound".into(),
                    points: envelope(|b| b.1),
                    color: PALETTE[3],
                },
            ],
            markers: Vec::new(),
            y_reference: None,
        }
        .render()
    }

    /// Two-column `step,lr` table mapping continuous time to integer steps.
    pub fn to_step_csv(&self, steps_per_unit_time: f64) -> Result<String> {
        if !(steps_per_unit_time > 0.0 && steps_per_unit_time.is_finite()) {
            return Err(Error::config(
                "steps_per_unit_time",
                format!("must be positive, got {steps_per_unit_time}"),
            ));
        }
        let n = (self.total_duration() * steps_per_unit_time).round() as u64;
        let mut out = String::from("step,lr\n");
        for step in 0..=n {
            let _ = writeln!(
                out,
                "{step},{}",
                fmt_f64(self.eta_at(step as f64 / steps_per_unit_time))
            );
        }
        Ok(out)
    }
}

/// Plateau `t_stable = 5/a`, decay `η⋆e^{−at/5}` sampled for five decay times.
pub fn recommended_schedule(
    eta_star: f64,
    a: f64,
    k: f64,
    warmup_duration: f64,
) -> Result<SchedulePlan> {
    if !(a > 0.0 && eta_star > 0.0) {
        return Err(Error::contract(
            "recommended_schedule",
            format!("requires a > 0 and eta_star > 0 (a = {a}, eta_star = {eta_star})"),
        ));
    }
    let decay = DecayFamily::new(
        1.0,
        a / RECOMMENDED_FACTOR,
        eta_star,
        TimeConvention::Rescaled,
    )?;
    let stable = RECOMMENDED_FACTOR / a;
    SchedulePlan::new(
        warmup_duration,
        stable,
        decay,
        RECOMMENDED_FACTOR * stable,
        a,
        k,
        stable / 50.0,
    )
}

/// Ratios used to quantify `≪` and `≲`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    /// `|η̇| > r_low · η/τ_y`.
    pub r_low: f64,
    /// `|η̇| ≤ r_high · η/τ_x`.
    pub r_high: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Margins {
            r_low: 3.0,
            r_high: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckPoint {
    /// Time since the start of the decay phase.
    pub t: f64,
    pub eta: f64,
    pub eta_dot: f64,
    /// `|η̇| / (η/τ_y)`; infinite when `k = 0`.
    pub quench_ratio: f64,
    /// `|η̇| / (η/τ_x)`.
    pub saturation_ratio: f64,
    pub envelope_lower: f64,
    pub envelope_upper: f64,
    pub quench_ok: bool,
    pub saturation_ok: bool,
    pub envelope_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub margins: Margins,
    pub horizon: f64,
    pub points: Vec<CheckPoint>,
    /// Smallest `quench_ratio` seen.
    pub worst_quench_ratio: f64,
    /// Largest `saturation_ratio` seen.
    pub worst_saturation_ratio: f64,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failing(&self) -> impl Iterator<Item = &CheckPoint> {
        self.points
            .iter()
            .filter(|p| !(p.quench_ok && p.saturation_ok && p.envelope_ok))
    }
}

/// Checks the decay phase at `n_check` evenly spaced instants of `[0, horizon]`.
pub fn validate_schedule(
    plan: &SchedulePlan,
    horizon: f64,
    n_check: usize,
    margins: Margins,
) -> Result<ValidationReport> {
    if !(horizon > 0.0) || n_check < 2 {
        return Err(Error::contract(
            "validate_schedule",
            format!("requires horizon > 0 and n_check >= 2 (got {horizon}, {n_check})"),
        ));
    }
    let (a, k) = (plan.a, plan.k);
    let e0 = plan.decay.eta_star;
    let unscaled = plan.decay.time_convention == TimeConvention::Unscaled;
    let points: Vec<CheckPoint> = (0..n_check)
        .map(|i| {
            let t = horizon * i as f64 / (n_check - 1) as f64;
            let eta = plan.decay.value(t);
            let eta_dot = plan.decay.rate(t);
            // η/τ_y = kη² in both conventions; η/τ_x = aη (rescaled) or aη² (unscaled).
            let quench_scale = k * eta * eta;
            let saturation_scale = if unscaled { a * eta * eta } else { a * eta };
            let quench_ratio = eta_dot.abs() / quench_scale;
            let saturation_ratio = if saturation_scale > 0.0 {
                eta_dot.abs() / saturation_scale
            } else {
                0.0
            };
            let envelope_lower = if unscaled {
                unscaled_inverse_time(e0, a, t)
            } else {
                e0 * (-a * t).exp()
            };
            let envelope_upper = e0 / (1.0 + k * e0 * t);
            let slack = 1e-12 * e0;
            CheckPoint {
                t,
                eta,
                eta_dot,
                quench_ratio,
                saturation_ratio,
                envelope_lower,
                envelope_upper,
                quench_ok: eta_dot.abs() > margins.r_low * quench_scale,
                saturation_ok: eta_dot.abs() <= margins.r_high * saturation_scale * (1.0 + 1e-12),
                envelope_ok: eta >= envelope_lower - slack && eta <= envelope_upper + slack,
            }
        })
        .collect();
    let worst_quench_ratio = points
        .iter()
        .map(|p| p.quench_ratio)
        .fold(f64::INFINITY, f64::min);
    let worst_saturation_ratio = points
        .iter()
        .map(|p| p.saturation_ratio)
        .fold(0.0, f64::max);
    let passed = points
        .iter()
        .all(|p| p.quench_ok && p.saturation_ok && p.envelope_ok);
    Ok(ValidationReport {
        margins,
        horizon,
        points,
        worst_quench_ratio,
        worst_saturation_ratio,
        passed,
    })
}

/// Outcome of [`tune_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub plan: SchedulePlan,
    pub report: ValidationReport,
    /// `(p, m)` pairs tried, in order.
    pub attempts: Vec<(f64, f64)>,
}

/// Searches for a decay that passes validation: first `p = 1` with `m`
/// shrinking geometrically from `a`, then `p ∈ {1.25, 1.5, 1.75}`.
/// Returns the last attempt when nothing passes.
pub fn tune_decay(
    plan: &SchedulePlan,
    horizon: f64,
    n_check: usize,
    margins: Margins,
) -> Result<Tuning> {
    const SHRINK: f64 = 0.8;
    const MAX_SHRINKS: usize = 60;
    let mut attempts = Vec::new();
    let mut last = None;
    for p in [1.0, 1.25, 1.5, 1.75] {
        // Largest m that saturates the valley bound at η⋆.
        let e0 = plan.decay.eta_star;
        let mut m = match plan.decay.time_convention {
            TimeConvention::Rescaled => plan.a * e0.powf(1.0 - p),
            TimeConvention::Unscaled => plan.a * e0.powf(2.0 - p),
        };
        for _ in 0..MAX_SHRINKS {
            let decay = DecayFamily::new(p, m, e0, plan.decay.time_convention)?;
            let candidate = SchedulePlan::new(
                plan.warmup.duration,
                plan.stable.duration,
                decay,
                plan.decay_duration,
                plan.a,
                plan.k,
                sample_interval_of(plan),
            )?;
            let report = validate_schedule(&candidate, horizon, n_check, margins)?;
            attempts.push((p, m));
            if report.passed {
                return Ok(Tuning {
                    plan: candidate,
                    report,
                    attempts,
                });
            }
            // Too slow to quench: shrinking m further cannot help.
            let too_slow = report.points.iter().any(|pt| !pt.quench_ok);
            last = Some((candidate, report));
            if too_slow {
                break;
            }
            m *= SHRINK;
        }
    }
    let (plan, report) = last.expect("at least one attempt");
    Ok(Tuning {
        plan,
        report,
        attempts,
    })
}

fn sample_interval_of(plan: &SchedulePlan) -> f64 {
    plan.samples
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
}
