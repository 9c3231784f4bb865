//! Command-line front end: fit spectra, set limits on λ, run pseudo-experiments.
//!
//! Exit codes: 0 success, 1 analysis failure (degenerate fit), 2 usage or I/O
//! error.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use csl_xray::constants::ConstantsOverrides;
use csl_xray::fit::{self, FitMethod};
use csl_xray::limit::{
    alpha_to_lambda, quasi_free_count, AmplitudeEstimate, ClMode, LimitAssumptions, LimitReport,
};
use csl_xray::plot::render_fit_svg;
use csl_xray::pseudo::{self, uniform_edges, Execution, Sampling, SimulationConfig};
use csl_xray::report::{ComparisonTable, Envelope, FitReport, RunManifest};
use csl_xray::spectrum::{self, Normalization, SpectrumMetadata};
use csl_xray::{ConstantsMode, Error, MaterialSpec, PhysicalConstants};

#[derive(Parser, Debug)]
#[command(name = "csl-xray", version, about = "Collapse-rate limits from binned X-ray spectra")]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalFlags {
    /// exact | paper-compat
    #[arg(long, global = true)]
    constants_mode: Option<String>,
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files; reports go to stdout when absent.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Also write an SVG plot (fit, report).
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the α/E amplitude of a spectrum.
    Fit(FitArgs),
    /// Convert an amplitude (or a fit report) into an upper limit on λ.
    Limit(LimitArgs),
    /// Write a synthetic spectrum CSV.
    Simulate(SimArgs),
    /// Run a simulate → fit → limit closure study.
    Closure(ClosureArgs),
    /// Render the comparison table of a limit report.
    Compare { limit_report: PathBuf },
    /// Fit, limit and compare in one go.
    Report {
        spectrum: PathBuf,
        #[command(flatten)]
        input: SpectrumArgs,
        #[command(flatten)]
        assumptions: AssumptionArgs,
    },
}

#[derive(Args, Debug, Default)]
struct SpectrumArgs {
    /// Fit window LO:HI in keV.
    #[arg(long)]
    window: Option<String>,
    /// poisson (default) | wls
    #[arg(long)]
    method: Option<String>,
    /// Exposure in kg·day (else sidecar metadata or config).
    #[arg(long)]
    exposure: Option<f64>,
    /// counts_per_bin | counts_per_kev | counts_per_kev_kg_day
    #[arg(long)]
    normalization: Option<String>,
}

#[derive(Args, Debug)]
struct FitArgs {
    spectrum: PathBuf,
    #[command(flatten)]
    input: SpectrumArgs,
}

#[derive(Args, Debug, Default)]
struct AssumptionArgs {
    /// Quasi-free electrons per atom.
    #[arg(long)]
    electrons: Option<u32>,
    /// Derive the electron count from the shell table: binding energy times
    /// this factor must not exceed the lowest photon energy.
    #[arg(long, conflicts_with = "electrons")]
    quasi_free_factor: Option<f64>,
    /// Mass-proportional coupling.
    #[arg(long)]
    mass_prop: bool,
    /// point-estimate | plus-1sigma | plus-1p645sigma
    #[arg(long)]
    cl: Option<String>,
}

#[derive(Args, Debug)]
struct LimitArgs {
    /// Fit report JSON produced by `fit`.
    #[arg(long, conflicts_with = "alpha")]
    fit: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    alpha_err: Option<f64>,
    #[arg(long)]
    exposure: Option<f64>,
    /// Lowest photon energy, keV, for --quasi-free-factor (default: fit window).
    #[arg(long)]
    e_min: Option<f64>,
    #[command(flatten)]
    assumptions: AssumptionArgs,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// True collapse rate, s⁻¹.
    #[arg(long, conflicts_with = "alpha")]
    lambda: Option<f64>,
    /// True amplitude in counts; λ is derived from it.
    #[arg(long)]
    alpha: Option<f64>,
    /// Flat background, counts/(keV·kg·day).
    #[arg(long)]
    background: Option<f64>,
    #[arg(long)]
    e_min: Option<f64>,
    #[arg(long)]
    e_max: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    exposure: Option<f64>,
    /// binned | events
    #[arg(long)]
    sampling: Option<String>,
    #[command(flatten)]
    assumptions: AssumptionArgs,
}

#[derive(Args, Debug)]
struct ClosureArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    trials: Option<u64>,
    /// wls | poisson (default poisson)
    #[arg(long)]
    method: Option<String>,
    /// Also write per-trial CSV (needs --output).
    #[arg(long)]
    dump_trials: bool,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
}

/// Single JSON configuration; every field mirrors a flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Settings {
    #[serde(skip_serializing_if = "Option::is_none")]
    constants_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constants: Option<ConstantsOverrides>,
    #[serde(skip_serializing_if = "Option::is_none")]
    material: Option<MaterialSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plot: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exposure_kg_day: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalization: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    electrons: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quasi_free_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mass_prop: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cl_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    background: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sampling: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<u64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl Settings {
    /// `self` with every field set in `flags` replaced.
    fn merged(mut self, flags: Settings) -> Settings {
        overlay!(self, flags; constants_mode, constants, material, seed, plot, window, method,
            exposure_kg_day, normalization, alpha, alpha_err, electrons, quasi_free_factor, e_min,
            mass_prop, cl_mode, lambda, background, e_max, bins, sampling, trials);
        self
    }

    fn from_assumptions(a: &AssumptionArgs) -> Settings {
        Settings {
            electrons: a.electrons,
            quasi_free_factor: a.quasi_free_factor,
            mass_prop: a.mass_prop.then_some(true),
            cl_mode: a.cl.clone(),
            ..Settings::default()
        }
    }

    fn from_spectrum_args(s: &SpectrumArgs) -> Settings {
        Settings {
            window: s.window.clone(),
            method: s.method.clone(),
            exposure_kg_day: s.exposure,
            normalization: s.normalization.clone(),
            ..Settings::default()
        }
    }

    fn from_sim(s: &SimArgs) -> Settings {
        Settings {
            lambda: s.lambda,
            alpha: s.alpha,
            background: s.background,
            e_min: s.e_min,
            e_max: s.e_max,
            bins: s.bins,
            exposure_kg_day: s.exposure,
            sampling: s.sampling.clone(),
            ..Settings::default()
        }
        .merged(Settings::from_assumptions(&s.assumptions))
    }

    fn constants_mode(&self) -> Result<ConstantsMode, CliError> {
        Ok(match &self.constants_mode {
            Some(m) => m.parse()?,
            None => ConstantsMode::default(),
        })
    }

    fn constants(&self) -> Result<PhysicalConstants, CliError> {
        let base = PhysicalConstants::for_mode(self.constants_mode()?);
        Ok(match &self.constants {
            Some(o) => base.with_overrides(o)?,
            None => base,
        })
    }

    fn material(&self) -> Result<MaterialSpec, CliError> {
        let m = self.material.clone().unwrap_or_else(MaterialSpec::germanium);
        m.validate()?;
        Ok(m)
    }

    fn window(&self) -> Result<Option<(f64, f64)>, CliError> {
        let Some(w) = &self.window else { return Ok(None) };
        let parsed = w
            .split_once(':')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        match parsed {
            Some((lo, hi)) if lo < hi => Ok(Some((lo, hi))),
            _ => Err(CliError::Usage(format!("window must be LO:HI with LO < HI, got '{w}'"))),
        }
    }

    fn fit_method(&self, default: FitMethod) -> Result<FitMethod, CliError> {
        Ok(match &self.method {
            Some(m) => m.parse()?,
            None => default,
        })
    }

    fn cl_mode(&self) -> Result<ClMode, CliError> {
        Ok(match &self.cl_mode {
            Some(m) => m.parse()?,
            None => ClMode::default(),
        })
    }

    fn n_quasi_free(&self, material: &MaterialSpec, e_min: Option<f64>) -> Result<u32, CliError> {
        match (self.electrons, self.quasi_free_factor) {
            (Some(0), _) => Err(CliError::Usage("--electrons must be positive".into())),
            (Some(n), _) => Ok(n),
            (None, Some(factor)) => {
                let e_min = e_min.ok_or_else(|| {
                    CliError::Usage("--quasi-free-factor needs --e-min or a fit window".into())
                })?;
                let sel = quasi_free_count(material, e_min, factor)?;
                if sel.is_empty() {
                    return Err(CliError::Usage(format!(
                        "no quasi-free electrons at {e_min} keV with factor {factor}"
                    )));
                }
                Ok(sel.count)
            }
            (None, None) => Ok(4),
        }
    }

    fn assumptions(&self, exposure: f64, e_min: Option<f64>) -> Result<LimitAssumptions, CliError> {
        let material = self.material()?;
        let a = LimitAssumptions {
            n_quasi_free: self.n_quasi_free(&material, e_min)?,
            mass_proportional: self.mass_prop.unwrap_or(false),
            constants_mode: self.constants_mode()?,
            cl_mode: self.cl_mode()?,
            exposure_kg_day: exposure,
        };
        a.validate()?;
        Ok(a)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("settings serialize")
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Analysis(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Analysis(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DegenerateFit(_) => CliError::Analysis(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("malformed JSON: {e}"))
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::Usage(format!("no such input: {}", path.display()))
    } else {
        CliError::Usage(format!("{}: {e}", path.display()))
    }
}

struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    fn new(dir: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d).map_err(|e| io_error(d, e))?;
        }
        Ok(Sink { dir })
    }

    /// Writes `name` into the output directory, or to stdout when there is none.
    fn emit(&self, name: &str, contents: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(d) => {
                let p = d.join(name);
                std::fs::write(&p, contents).map_err(|e| io_error(&p, e))
            }
            None => {
                print!("{contents}");
                Ok(())
            }
        }
    }

    /// Like `emit`, but only when an output directory was given.
    fn emit_file(&self, name: &str, contents: &str, flag: &str) -> Result<(), CliError> {
        if self.dir.is_none() {
            return Err(CliError::Usage(format!("{flag} needs --output <dir>")));
        }
        self.emit(name, contents)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Analysis(msg)) = &e;
            eprintln!("csl-xray: {msg}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file_settings = match &cli.global.config {
        Some(p) => serde_json::from_str::<Settings>(&read_input(p)?)?,
        None => Settings::default(),
    };
    let global = Settings {
        constants_mode: cli.global.constants_mode.clone(),
        seed: cli.global.seed,
        plot: cli.global.plot.then_some(true),
        ..Settings::default()
    };
    let base = file_settings.merged(global);
    let sink = Sink::new(cli.global.output.clone())?;

    match cli.command {
        Command::Fit(args) => {
            let s = base.merged(Settings::from_spectrum_args(&args.input));
            let (report, spectrum) = run_fit(&s, &args.spectrum)?;
            let manifest = RunManifest::new("fit", vec![args.spectrum.display().to_string()], s.to_json());
            sink.emit("fit.json", &Envelope { body: report.clone(), manifest }.to_json()?)?;
            if s.plot == Some(true) {
                sink.emit_file("fit.svg", &render_fit_svg(&spectrum, &report.fit, "α/E fit"), "--plot")?;
            }
        }
        Command::Limit(args) => {
            let mut s = base.merged(Settings::from_assumptions(&args.assumptions));
            s = s.merged(Settings {
                alpha: args.alpha,
                alpha_err: args.alpha_err,
                exposure_kg_day: args.exposure,
                e_min: args.e_min,
                ..Settings::default()
            });
            let mut inputs = Vec::new();
            let fit_report = match &args.fit {
                Some(p) => {
                    inputs.push(p.display().to_string());
                    let env: Envelope<FitReport> = serde_json::from_str(&read_input(p)?)?;
                    Some(env.body.validated()?)
                }
                None => None,
            };
            let report = run_limit(&s, fit_report.as_ref())?;
            let manifest = RunManifest::new("limit", inputs, s.to_json());
            sink.emit("limit.json", &Envelope { body: report, manifest }.to_json()?)?;
        }
        Command::Simulate(args) => {
            let s = base.merged(Settings::from_sim(&args));
            let cfg = simulation_config(&s, FitMethod::PoissonMle)?;
            let spectrum = pseudo::simulate_spectrum(&cfg)?;
            let manifest = RunManifest::new("simulate", vec![], s.to_json());
            let mut buf = Vec::new();
            spectrum::save_spectrum(&spectrum, &manifest.csv_comments(), &mut buf)?;
            sink.emit("spectrum.csv", std::str::from_utf8(&buf).expect("utf-8"))?;
            if sink.dir.is_some() {
                let meta = SpectrumMetadata {
                    exposure_kg_day: spectrum.exposure(),
                    normalization: spectrum.normalization(),
                };
                sink.emit("spectrum.meta.json", &(serde_json::to_string_pretty(&meta)? + "\n"))?;
            }
        }
        Command::Closure(args) => {
            let s = base.merged(Settings::from_sim(&args.sim)).merged(Settings {
                trials: args.trials,
                method: args.method.clone(),
                ..Settings::default()
            });
            let cfg = simulation_config(&s, FitMethod::PoissonMle)?;
            let execution = if args.sequential { Execution::Sequential } else { Execution::default() };
            let report = pseudo::closure_study(&cfg, s.trials.unwrap_or(200), execution)?;
            let manifest = RunManifest::new("closure", vec![], s.to_json());
            if args.dump_trials {
                sink.emit_file("closure_trials.csv", &report.trials_csv(), "--dump-trials")?;
            }
            sink.emit("closure.json", &Envelope { body: report, manifest }.to_json()?)?;
        }
        Command::Compare { limit_report } => {
            let env: Envelope<LimitReport> = serde_json::from_str(&read_input(&limit_report)?)?;
            env.body.validate()?;
            let table = ComparisonTable::new(
                env.body.lambda_upper_per_s,
                &csl_xray::limit::compare_models(env.body.lambda_upper_per_s),
            );
            match &sink.dir {
                Some(_) => {
                    sink.emit("compare.txt", &table.to_text())?;
                    sink.emit("compare.csv", &table.to_csv()?)?;
                }
                None => print!("{}", table.to_text()),
            }
        }
        Command::Report { spectrum: path, input, assumptions } => {
            let s = base
                .merged(Settings::from_spectrum_args(&input))
                .merged(Settings::from_assumptions(&assumptions));
            let (fit_report, spectrum) = run_fit(&s, &path)?;
            let limit = run_limit(&s, Some(&fit_report))?;
            let table = ComparisonTable::new(limit.lambda_upper_per_s, &limit.comparisons);
            let inputs = vec![path.display().to_string()];
            let manifest = RunManifest::new("report", inputs, s.to_json());
            let combined = serde_json::json!({
                "fit": fit_report,
                "limit": limit,
                "manifest": manifest,
            });
            let json = serde_json::to_string_pretty(&combined)? + "\n";
            match &sink.dir {
                Some(_) => {
                    sink.emit("report.json", &json)?;
                    sink.emit("compare.txt", &table.to_text())?;
                    sink.emit("compare.csv", &table.to_csv()?)?;
                    if s.plot == Some(true) {
                        sink.emit("fit.svg", &render_fit_svg(&spectrum, &fit_report.fit, "α/E fit"))?;
                    }
                }
                None => {
                    if s.plot == Some(true) {
                        return Err(CliError::Usage("--plot needs --output <dir>".into()));
                    }
                    print!("{json}{}", table.to_text());
                }
            }
        }
    }
    Ok(())
}

fn run_fit(s: &Settings, path: &Path) -> Result<(FitReport, spectrum::BinnedSpectrum), CliError> {
    let normalization: Option<Normalization> = s.normalization.as_deref().map(str::parse).transpose()?;
    let full = spectrum::load_spectrum_file(path, normalization, s.exposure_kg_day).map_err(|e| match e {
        Error::Io(io) => io_error(path, io),
        other => other.into(),
    })?;
    let window = s.window()?;
    let spectrum = match window {
        Some((lo, hi)) => full.restrict_range(lo, hi)?,
        None => full,
    };
    let method = s.fit_method(FitMethod::default())?;
    let other = match method {
        FitMethod::Wls => FitMethod::PoissonMle,
        FitMethod::PoissonMle => FitMethod::Wls,
    };
    let mut primary = fit::fit(&spectrum, method)?;
    let mut alternative = fit::fit(&spectrum, other).ok();
    if let Some((lo, hi)) = window {
        primary = primary.with_window(lo, hi);
        alternative = alternative.map(|f| f.with_window(lo, hi));
    }
    Ok((
        FitReport {
            fit: primary,
            exposure_kg_day: spectrum.exposure(),
            alternative,
        },
        spectrum,
    ))
}

fn run_limit(s: &Settings, fit_report: Option<&FitReport>) -> Result<LimitReport, CliError> {
    let (alpha, alpha_err) = match (s.alpha, fit_report) {
        (Some(a), _) => (a, s.alpha_err),
        (None, Some(f)) => (f.fit.alpha_hat, Some(s.alpha_err.unwrap_or(f.fit.alpha_err))),
        (None, None) => return Err(CliError::Usage("give --alpha or --fit".into())),
    };
    if !(alpha > 0.0) {
        return Err(CliError::Usage(format!("alpha must be positive, got {alpha}")));
    }
    let exposure = s
        .exposure_kg_day
        .or(fit_report.map(|f| f.exposure_kg_day))
        .ok_or_else(|| CliError::Usage("exposure not given (--exposure)".into()))?;
    let e_min = s.e_min.or(fit_report.map(|f| f.fit.window.0));
    let assumptions = s.assumptions(exposure, e_min)?;
    let estimate = AmplitudeEstimate { alpha, sigma: alpha_err };
    let result = alpha_to_lambda(estimate, &assumptions, &s.material()?, &s.constants()?)?;
    Ok(LimitReport::from_result(&result))
}

fn simulation_config(s: &Settings, default_method: FitMethod) -> Result<SimulationConfig, CliError> {
    let (e_min, e_max) = (s.e_min.unwrap_or(4.5), s.e_max.unwrap_or(48.5));
    let bins = s.bins.unwrap_or(44);
    if !(e_min > 0.0 && e_max > e_min) || bins == 0 {
        return Err(CliError::Usage(format!("invalid binning {e_min}:{e_max} in {bins} bins")));
    }
    let exposure = s.exposure_kg_day.unwrap_or(80.0);
    let sampling = match s.sampling.as_deref() {
        None | Some("binned") => Sampling::Binned,
        Some("events") | Some("event_by_event") => Sampling::EventByEvent,
        Some(other) => return Err(CliError::Usage(format!("unknown sampling '{other}'"))),
    };
    let mut cfg = SimulationConfig {
        lambda_true: 0.0,
        background_rate: s.background.unwrap_or(0.0),
        edges: uniform_edges(e_min, e_max, bins),
        material: s.material()?,
        assumptions: s.assumptions(exposure, Some(e_min))?,
        constants: s.constants()?,
        seed: s.seed.unwrap_or(0),
        fit_method: s.fit_method(default_method)?,
        sampling,
    };
    cfg.lambda_true = match (s.lambda, s.alpha) {
        (Some(l), _) => l,
        (None, Some(a)) => cfg.lambda_for_alpha(a),
        (None, None) => cfg.lambda_for_alpha(110.0),
    };
    cfg.validate()?;
    Ok(cfg)
}
