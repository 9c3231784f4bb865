//! Pseudo-experiments: synthetic spectra from the 1/E emission law plus an
//! optional flat background, and closure studies of the fit→limit chain.
//!
//! Every trial draws from its own ChaCha8 stream keyed by `(seed, trial)`, so
//! results do not depend on how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::fit::{self, FitMethod};
use crate::limit::{alpha_to_lambda, lambda_to_alpha, AmplitudeEstimate, LimitAssumptions};
use crate::material::MaterialSpec;
use crate::spectrum::{BinnedSpectrum, Normalization};

/// Identifier of the random source, recorded in every report.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = trial index";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// One Poisson draw per bin.
    #[default]
    Binned,
    /// Individual photons drawn through the inverse CDF, then binned.
    EventByEvent,
}

/// Where closure trials run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon thread pool; sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub lambda_true: f64,
    /// Flat background, counts/(keV·kg·day).
    pub background_rate: f64,
    pub edges: Vec<f64>,
    pub material: MaterialSpec,
    pub assumptions: LimitAssumptions,
    pub constants: PhysicalConstants,
    pub seed: u64,
    pub fit_method: FitMethod,
    pub sampling: Sampling,
}

impl SimulationConfig {
    /// Ge, paper-compatible constants and assumptions, Poisson fits, 1-keV
    /// bins over `[4.5, 48.5]` keV and 80 kg·day, with λ chosen so the
    /// expected amplitude is `alpha`.
    pub fn paper_like(alpha: f64, seed: u64) -> Self {
        let mut cfg = SimulationConfig {
            lambda_true: 0.0,
            background_rate: 0.0,
            edges: uniform_edges(4.5, 48.5, 44),
            material: MaterialSpec::germanium(),
            assumptions: LimitAssumptions::paper_default(80.0),
            constants: PhysicalConstants::paper_compat(),
            seed,
            fit_method: FitMethod::PoissonMle,
            sampling: Sampling::Binned,
        };
        cfg.lambda_true = cfg.lambda_for_alpha(alpha);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_true.is_finite() && self.lambda_true >= 0.0) {
            return Err(Error::Config(format!("lambda_true must be ≥ 0, got {}", self.lambda_true)));
        }
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            return Err(Error::Config(format!(
                "background rate must be ≥ 0, got {}",
                self.background_rate
            )));
        }
        if self.edges.len() < 2 {
            return Err(Error::Config("binning needs at least two edges".into()));
        }
        if !(self.edges[0] > 0.0) || self.edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("bin edges must be positive and strictly increasing".into()));
        }
        self.assumptions.validate()?;
        self.material.validate()
    }

    pub fn exposure(&self) -> f64 {
        self.assumptions.exposure_kg_day
    }

    /// Amplitude, in counts, produced by `lambda_true`.
    pub fn alpha_true(&self) -> f64 {
        lambda_to_alpha(self.lambda_true, &self.assumptions, &self.material, &self.constants)
    }

    /// Collapse rate whose expected amplitude is `alpha`.
    pub fn lambda_for_alpha(&self, alpha: f64) -> f64 {
        alpha / lambda_to_alpha(1.0, &self.assumptions, &self.material, &self.constants)
    }

    /// Expected counts per bin.
    pub fn bin_means(&self) -> Vec<f64> {
        let alpha = self.alpha_true();
        self.edges
            .windows(2)
            .map(|w| alpha * (w[1] / w[0]).ln() + self.background_rate * (w[1] - w[0]) * self.exposure())
            .collect()
    }

    fn rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        rng
    }
}

/// `n` equal-width bins over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let w = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| if i == n { hi } else { lo + i as f64 * w })
        .collect()
}

/// Inverse CDF of the 1/E density on `[e_lo, e_hi]`: `e_lo·(e_hi/e_lo)^u`.
pub fn sample_energy(u: f64, e_lo: f64, e_hi: f64) -> Result<f64> {
    if !(e_lo > 0.0 && e_hi > e_lo) {
        return Err(Error::Domain(format!("invalid energy window [{e_lo}, {e_hi}]")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("uniform variate {u} outside [0, 1]")));
    }
    if u == 1.0 {
        return Ok(e_hi);
    }
    Ok((e_lo * (e_hi / e_lo).powf(u)).clamp(e_lo, e_hi))
}

/// Analytic CDF matching [`sample_energy`].
pub fn inverse_energy_cdf(e: f64, e_lo: f64, e_hi: f64) -> f64 {
    ((e / e_lo).ln() / (e_hi / e_lo).ln()).clamp(0.0, 1.0)
}

fn poisson<R: Rng>(mu: f64, rng: &mut R) -> f64 {
    if mu > 0.0 {
        Poisson::new(mu).expect("finite positive mean").sample(rng)
    } else {
        0.0
    }
}

/// Spectrum of trial 0.
pub fn simulate_spectrum(cfg: &SimulationConfig) -> Result<BinnedSpectrum> {
    simulate_trial(cfg, 0)
}

/// Spectrum of the given trial; a pure function of `(cfg, trial)`.
pub fn simulate_trial(cfg: &SimulationConfig, trial: u64) -> Result<BinnedSpectrum> {
    cfg.validate()?;
    let mut rng = cfg.rng(trial);
    let counts = match cfg.sampling {
        Sampling::Binned => cfg.bin_means().into_iter().map(|mu| poisson(mu, &mut rng)).collect(),
        Sampling::EventByEvent => events_to_counts(cfg, &mut rng)?,
    };
    BinnedSpectrum::from_edges(&cfg.edges, counts, cfg.exposure(), Normalization::CountsPerBin)
}

fn events_to_counts<R: Rng>(cfg: &SimulationConfig, rng: &mut R) -> Result<Vec<f64>> {
    let (lo, hi) = (cfg.edges[0], cfg.edges[cfg.edges.len() - 1]);
    let n_bins = cfg.edges.len() - 1;
    let mut counts = vec![0.0; n_bins];
    let mut fill = |e: f64| {
        let idx = cfg.edges.partition_point(|&edge| edge <= e).saturating_sub(1);
        counts[idx.min(n_bins - 1)] += 1.0;
    };
    let n_signal = poisson(cfg.alpha_true() * (hi / lo).ln(), rng) as u64;
    for _ in 0..n_signal {
        fill(sample_energy(rng.random::<f64>(), lo, hi)?);
    }
    let n_bkg = poisson(cfg.background_rate * (hi - lo) * cfg.exposure(), rng) as u64;
    for _ in 0..n_bkg {
        fill(lo + (hi - lo) * rng.random::<f64>());
    }
    Ok(counts)
}

/// Spectra of trials `0..n`, in trial order.
pub fn simulate_many(cfg: &SimulationConfig, n: u64, execution: Execution) -> Result<Vec<BinnedSpectrum>> {
    cfg.validate()?;
    run_indexed(n, execution, |t| simulate_trial(cfg, t)).into_iter().collect()
}

fn run_indexed<T, F>(n: u64, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// One row of a closure study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub alpha_hat: f64,
    pub alpha_err: f64,
    pub chi2_per_ndf: f64,
    pub lambda_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub n_trials: u64,
    pub n_failed: u64,
    pub lambda_true: f64,
    pub alpha_true: f64,
    pub mean_alpha: f64,
    pub median_alpha: f64,
    pub mean_lambda_upper: f64,
    pub median_lambda_upper: f64,
    pub pull_mean: f64,
    pub pull_std: f64,
    pub mean_chi2_per_ndf: f64,
    /// Fraction of successful trials whose upper limit is at or above
    /// `lambda_true`; `None` when no trial produced a fit.
    pub coverage: Option<f64>,
    pub cl_mode: String,
    pub fit_method: String,
    pub seed: u64,
    pub rng: String,
    #[serde(skip)]
    pub trials: Vec<TrialOutcome>,
}

impl ClosureReport {
    pub fn coverage_defined(&self) -> bool {
        self.coverage.is_some()
    }

    /// Per-trial dump with header `trial,alpha_hat,lambda_upper`.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial,alpha_hat,lambda_upper\n");
        for t in &self.trials {
            out.push_str(&format!("{},{},{}\n", t.trial, t.alpha_hat, t.lambda_upper));
        }
        out
    }
}

fn run_trial(cfg: &SimulationConfig, trial: u64) -> Result<TrialOutcome> {
    let s = simulate_trial(cfg, trial)?;
    let f = fit::fit(&s, cfg.fit_method)?;
    let limit = alpha_to_lambda(
        AmplitudeEstimate::with_sigma(f.alpha_hat, f.alpha_err),
        &cfg.assumptions,
        &cfg.material,
        &cfg.constants,
    )?;
    Ok(TrialOutcome {
        trial,
        alpha_hat: f.alpha_hat,
        alpha_err: f.alpha_err,
        chi2_per_ndf: fit::goodness(&f),
        lambda_upper: limit.lambda_upper,
    })
}

/// Runs simulate → fit → limit for `n_trials` trials.
///
/// Failed trials (degenerate fits) are counted in `n_failed` and excluded from
/// the statistics.
pub fn closure_study(cfg: &SimulationConfig, n_trials: u64, execution: Execution) -> Result<ClosureReport> {
    if n_trials == 0 {
        return Err(Error::Config("closure study needs at least one trial".into()));
    }
    cfg.validate()?;
    let results = run_indexed(n_trials, execution, |t| run_trial(cfg, t));

    let mut trials = Vec::with_capacity(results.len());
    let mut n_failed = 0;
    for r in results {
        match r {
            Ok(t) => trials.push(t),
            Err(Error::DegenerateFit(_)) | Err(Error::Domain(_)) => n_failed += 1,
            Err(e) => return Err(e),
        }
    }

    let alpha_true = cfg.alpha_true();
    let alphas: Vec<f64> = trials.iter().map(|t| t.alpha_hat).collect();
    let lambdas: Vec<f64> = trials.iter().map(|t| t.lambda_upper).collect();
    let pulls: Vec<f64> = trials
        .iter()
        .map(|t| (t.alpha_hat - alpha_true) / t.alpha_err)
        .collect();
    let chi2: Vec<f64> = trials.iter().map(|t| t.chi2_per_ndf).collect();
    let covered = trials.iter().filter(|t| t.lambda_upper >= cfg.lambda_true).count();

    Ok(ClosureReport {
        n_trials,
        n_failed,
        lambda_true: cfg.lambda_true,
        alpha_true,
        mean_alpha: mean(&alphas),
        median_alpha: median(&alphas),
        mean_lambda_upper: mean(&lambdas),
        median_lambda_upper: median(&lambdas),
        pull_mean: mean(&pulls),
        pull_std: std_dev(&pulls),
        mean_chi2_per_ndf: mean(&chi2),
        coverage: (!trials.is_empty()).then(|| covered as f64 / trials.len() as f64),
        cl_mode: cfg.assumptions.cl_mode.as_str().to_string(),
        fit_method: cfg.fit_method.as_str().to_string(),
        seed: cfg.seed,
        rng: RNG_ALGORITHM.to_string(),
        trials,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
