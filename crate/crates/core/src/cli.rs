//! Command-line front end.
//!
//! Every subcommand reads one TOML document (see [`crate::config`]) and writes
//! its results into an output directory. Exit codes: 0 on success, 2 for
//! configuration errors, 3 for numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Format, ProtocolBlock};
use crate::error::Error;
use crate::format::to_json_string;
use crate::landscape::{presets, Grid, LandscapeSpec, TimeConvention};
use crate::mpemba::{find_strong_points, scan_amplitude, AmplitudeCurve, MpembaReport};
use crate::schedule::{
    recommended_schedule, tune_decay, validate_schedule, DecayFamily, SchedulePlan,
    ValidationReport, RECOMMENDED_FACTOR,
};
use crate::simulator::{
    mpemba_experiment, simulate, EnsembleResult, MpembaConfig, MpembaExperiment, Protocol,
};
use crate::spectral::SpectralDecomposition;

#[derive(Debug, Parser)]
#[command(
    name = "mpemba-wsd",
    version,
    about = "Mpemba-effect analysis of valley-river landscapes and learning-rate schedule synthesis"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated output formats; overrides `output.formats`.
    #[arg(long, global = true, value_delimiter = ',', value_enum)]
    pub format: Vec<Format>,
    /// Suppress the summary on stdout.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bath spectrum, amplitude scan and strong-point search.
    Analyze,
    /// Warm-up / stable / decay schedule and its validation report.
    Schedule {
        /// Steps per unit of continuous time in the `step,lr` table.
        #[arg(long, default_value_t = 100.0)]
        steps_per_unit_time: f64,
    },
    /// Langevin ensemble under the `simulate.protocol` of the config.
    Simulate,
    /// Hot and cold ensembles quenched to the bath learning rate.
    MpembaExperiment,
    /// Built-in landscapes.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetsAction {
    /// Print every preset with its default parameters.
    List,
}

/// An error tagged with the module operation that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct Failure {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

trait At<T> {
    fn at(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> At<T> for crate::error::Result<T> {
    fn at(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|source| Failure { stage, source })
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            if !cli.global.quiet {
                for line in lines {
                    println!("{line}");
                }
            }
            0
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}

/// Runs a parsed command and returns the summary lines.
pub fn execute(cli: &Cli) -> Result<Vec<String>, Failure> {
    if let Command::Presets {
        action: PresetsAction::List,
    } = cli.command
    {
        return list_presets();
    }
    let path = cli
        .global
        .config
        .as_deref()
        .ok_or_else(|| Error::config("--config", "required for this subcommand"))
        .at("cli")?;
    let cfg = ExperimentConfig::load(path).at("config")?;
    let mut sink = Sink::new(&cfg, &cli.global);
    let mut lines = match cli.command {
        Command::Analyze => cmd_analyze(&cfg, &mut sink)?,
        Command::Schedule {
            steps_per_unit_time,
        } => cmd_schedule(&cfg, steps_per_unit_time, &mut sink)?,
        Command::Simulate => cmd_simulate(&cfg, &mut sink)?,
        Command::MpembaExperiment => cmd_mpemba_experiment(&cfg, &mut sink)?,
        Command::Presets { .. } => unreachable!("handled above"),
    };
    lines.push(format!(
        "wrote {} file(s) to {}",
        sink.written.len(),
        sink.dir.display()
    ));
    Ok(lines)
}

fn list_presets() -> Result<Vec<String>, Failure> {
    presets::NAMES
        .iter()
        .map(|name| {
            let spec = presets::by_name(name).at("landscape::presets")?;
            let json = serde_json::to_string(&spec).expect("landscape specs serialize");
            Ok(format!("{name}\t{json}"))
        })
        .collect()
}

/// Writes the requested formats into the output directory.
struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl Sink {
    fn new(cfg: &ExperimentConfig, global: &GlobalArgs) -> Self {
        Sink {
            dir: global
                .out
                .clone()
                .unwrap_or_else(|| cfg.output.directory.clone()),
            formats: if global.format.is_empty() {
                cfg.output.formats.clone()
            } else {
                global.format.clone()
            },
            written: Vec::new(),
        }
    }

    fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    fn put(
        &mut self,
        format: Format,
        name: &str,
        contents: impl FnOnce() -> crate::error::Result<String>,
    ) -> Result<(), Failure> {
        if !self.wants(format) {
            return Ok(());
        }
        let text = contents().at("cli::export")?;
        let path = self.dir.join(name);
        write_file(&self.dir, &path, text.as_bytes()).at("cli::write")?;
        self.written.push(path);
        Ok(())
    }
}

fn write_file(dir: &Path, path: &Path, bytes: &[u8]) -> crate::error::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Everything `analyze` computes.
pub struct Analysis {
    pub spec: LandscapeSpec,
    pub grid: Grid,
    pub eta_b: f64,
    pub decomposition: SpectralDecomposition,
    pub curve: AmplitudeCurve,
    pub report: MpembaReport,
}

/// Bath decomposition, amplitude scan and strong-point search for `cfg`.
pub fn analyze(cfg: &ExperimentConfig) -> Result<Analysis, Failure> {
    let spec = cfg.landscape_spec().at("config")?;
    let grid = cfg.grid(&spec).at("config")?;
    let eta_b = cfg.eta_b().at("config")?;
    let scan = cfg.scan().at("config")?;
    let field = spec
        .effective_free_energy(&grid, eta_b)
        .at("landscape::effective_free_energy")?;
    let decomposition =
        SpectralDecomposition::new(&field, scan.n_modes).at("spectral::eigendecompose")?;
    let curve = scan_amplitude(
        &decomposition,
        &spec,
        [scan.eta_min, scan.eta_max],
        scan.n_samples,
    )
    .at("mpemba::scan_amplitude")?;
    let report = find_strong_points(&curve, &decomposition, &spec, scan.tol, scan.root_choice)
        .at("mpemba::find_strong_points")?;
    Ok(Analysis {
        spec,
        grid,
        eta_b,
        decomposition,
        curve,
        report,
    })
}

fn cmd_analyze(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<String>, Failure> {
    let analysis = analyze(cfg)?;
    sink.put(Format::Csv, "eigenpairs.csv", || {
        let mut buf = Vec::new();
        analysis.decomposition.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    })?;
    sink.put(Format::Csv, "amplitude.csv", || Ok(analysis.curve.to_csv()))?;
    sink.put(Format::Json, "mpemba_report.json", || {
        Ok(analysis.curve.report_json(&analysis.report))
    })?;
    sink.put(Format::Svg, "amplitude.svg", || {
        Ok(analysis.curve.to_svg(&analysis.report))
    })?;
    let eig = &analysis.decomposition.eigenvalues;
    Ok(vec![
        format!("lambda2 = {}, lambda3 = {}", eig[1], eig[2]),
        format!(
            "verdict {:?}, eta* = {}, {} strong point(s)",
            analysis.report.verdict,
            analysis.report.optimal_plateau,
            analysis.report.strong_points.len()
        ),
    ])
}

/// A synthesized schedule and its validation.
pub struct ScheduleOutcome {
    pub plan: SchedulePlan,
    pub report: ValidationReport,
    /// `(p, m)` pairs tried when tuning was requested.
    pub attempts: Vec<(f64, f64)>,
}

/// Builds and validates the schedule described by the `schedule` table.
pub fn synthesize_schedule(cfg: &ExperimentConfig) -> Result<ScheduleOutcome, Failure> {
    let block = cfg.schedule().at("config")?;
    let spec = cfg.landscape_spec().at("config")?;
    let eta_star = match block.eta_star {
        Some(v) => v,
        None => analyze(cfg)?.report.optimal_plateau,
    };
    let grid = cfg.grid(&spec).at("config")?;
    let y_star = spec.river_minimum(&grid);
    let a = match block.a {
        Some(a) => a,
        None => spec.evaluate(y_star).at("landscape::evaluate")?.a,
    };
    let k = match block.k {
        Some(k) => k,
        None => spec
            .curvature_log_slope(y_star)
            .at("landscape::curvature_log_slope")?
            .abs(),
    };
    if !(a > 0.0) {
        return Err(Error::config(
            "schedule.a",
            format!("must be positive, got {a}"),
        ))
        .at("config");
    }
    if !(k >= 0.0) {
        return Err(Error::config(
            "schedule.k",
            format!("must be >= 0, got {k}"),
        ))
        .at("config");
    }
    let plan = match block.decay {
        None if block.stable_duration.is_none() && block.decay_duration.is_none() => {
            recommended_schedule(eta_star, a, k, block.warmup)
                .at("schedule::recommended_schedule")?
        }
        decay => {
            let (p, m) = decay
                .map(|d| (d.exponent, d.coefficient))
                .unwrap_or((1.0, a / RECOMMENDED_FACTOR));
            let family = DecayFamily::new(p, m, eta_star, TimeConvention::Rescaled)
                .map_err(|e| Error::config("schedule.decay", e.to_string()))
                .at("config")?;
            let stable = block.stable_duration.unwrap_or(RECOMMENDED_FACTOR / a);
            let decay_duration = block
                .decay_duration
                .unwrap_or(RECOMMENDED_FACTOR * RECOMMENDED_FACTOR / a);
            SchedulePlan::new(
                block.warmup,
                stable,
                family,
                decay_duration,
                a,
                k,
                stable.max(decay_duration) / 50.0,
            )
            .map_err(|e| Error::config("schedule", e.to_string()))
            .at("config")?
        }
    };
    let horizon = block.horizon.unwrap_or(plan.decay_duration);
    let report = validate_schedule(&plan, horizon, block.n_check, block.margins)
        .at("schedule::validate_schedule")?;
    if block.tune && !report.passed {
        let tuning =
            tune_decay(&plan, horizon, block.n_check, block.margins).at("schedule::tune_decay")?;
        return Ok(ScheduleOutcome {
            plan: tuning.plan,
            report: tuning.report,
            attempts: tuning.attempts,
        });
    }
    Ok(ScheduleOutcome {
        plan,
        report,
        attempts: Vec::new(),
    })
}

fn cmd_schedule(
    cfg: &ExperimentConfig,
    steps_per_unit_time: f64,
    sink: &mut Sink,
) -> Result<Vec<String>, Failure> {
    let outcome = synthesize_schedule(cfg)?;
    let csv = outcome
        .plan
        .to_step_csv(steps_per_unit_time)
        .map_err(|_| {
            Error::config(
                "--steps-per-unit-time",
                format!("must be positive, got {steps_per_unit_time}"),
            )
        })
        .at("config")?;
    sink.put(Format::Json, "schedule_plan.json", || {
        Ok(outcome.plan.to_json())
    })?;
    sink.put(Format::Json, "schedule_validation.json", || {
        Ok(to_json_string(&outcome.report))
    })?;
    sink.put(Format::Csv, "schedule_steps.csv", || Ok(csv))?;
    sink.put(Format::Svg, "schedule.svg", || Ok(outcome.plan.to_svg()))?;
    let plan = &outcome.plan;
    let mut lines = vec![
        format!(
            "eta* = {}, t_stable = {}, decay p = {}, m = {}",
            plan.stable.eta, plan.stable.duration, plan.decay.exponent, plan.decay.coefficient
        ),
        format!(
            "validation {}: {} failing instant(s) of {}",
            if outcome.report.passed {
                "passed"
            } else {
                "failed"
            },
            outcome.report.failing().count(),
            outcome.report.points.len()
        ),
    ];
    if !outcome.attempts.is_empty() {
        lines.push(format!("tuning tried {} decay(s)", outcome.attempts.len()));
    }
    Ok(lines)
}

fn cmd_simulate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<String>, Failure> {
    let spec = cfg.landscape_spec().at("config")?;
    let sim = cfg.sim().at("config")?;
    let block = cfg.simulate().at("config")?;
    let protocol = match block.protocol {
        ProtocolBlock::Constant { eta } => Protocol::Constant { eta },
        ProtocolBlock::Quench {
            eta_from,
            eta_to,
            t_quench,
        } => Protocol::Quench {
            eta_from,
            eta_to,
            t_quench,
        },
        ProtocolBlock::Schedule => Protocol::Schedule(synthesize_schedule(cfg)?.plan),
    };
    let result: EnsembleResult =
        simulate(&spec, &protocol, sim, block.dynamics).at("simulator::simulate")?;
    sink.put(Format::Csv, "ensemble.csv", || Ok(result.to_csv()))?;
    sink.put(Format::Json, "ensemble.json", || Ok(result.to_json()))?;
    sink.put(Format::Svg, "ensemble.svg", || Ok(result.to_svg()))?;
    let mut lines = vec![format!(
        "run {}: {} instants",
        result.metadata.run_id,
        result.times.len()
    )];
    if let Some(d) = result.distance_series.last() {
        lines.push(format!("final L1 distance to target = {d}"));
    }
    Ok(lines)
}

fn cmd_mpemba_experiment(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Vec<String>, Failure> {
    let spec = cfg.landscape_spec().at("config")?;
    let eta_b = cfg.eta_b().at("config")?;
    let sim = cfg.sim().at("config")?;
    let block = cfg.experiment().at("config")?;
    let eta_h = match block.eta_h {
        Some(v) => v,
        None => analyze(cfg)?.report.optimal_plateau,
    };
    let eta_l = block.eta_l.unwrap_or(0.5 * (eta_b + eta_h));
    let run = MpembaConfig {
        sim: sim.clone(),
        dynamics: block.dynamics,
        plateau: block.plateau,
        horizon: block.horizon,
    };
    let exp: MpembaExperiment =
        mpemba_experiment(&spec, eta_h, eta_l, eta_b, &run).at("simulator::mpemba_experiment")?;
    sink.put(Format::Csv, "mpemba_experiment.csv", || Ok(exp.to_csv()))?;
    sink.put(Format::Json, "mpemba_experiment.json", || Ok(exp.to_json()))?;
    sink.put(Format::Svg, "mpemba_experiment.svg", || Ok(exp.to_svg()))?;
    let rate =
        |r: Option<crate::simulator::RateFit>| r.map_or("n/a".to_string(), |r| r.rate.to_string());
    Ok(vec![
        format!("eta_h = {eta_h}, eta_l = {eta_l}, eta_b = {eta_b}"),
        format!(
            "verdict {:?}, crossing at {}",
            exp.verdict,
            exp.crossing_time
                .map_or("none".to_string(), |t| t.to_string())
        ),
        format!(
            "hot rate {}, cold rate {}",
            rate(exp.hot_rate),
            rate(exp.cold_rate)
        ),
    ])
}
