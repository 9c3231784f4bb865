//! Amplitude fits of the pure `α/E` model to binned spectra.
//!
//! The expected count in bin `[lo, hi]` is `α·ln(hi/lo)`, the exact integral of
//! `α/E`, so `α` is in counts (full-exposure units). Two estimators are
//! provided: Neyman-weighted least squares and Poisson maximum likelihood.
//! Both have closed forms; [`poisson_mle_numeric`] is an iterative
//! cross-check for the likelihood route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::{neyman_sigma, BinnedSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Wls,
    #[default]
    PoissonMle,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Wls => "wls",
            FitMethod::PoissonMle => "poisson_mle",
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wls" => Ok(FitMethod::Wls),
            "poisson" | "poisson_mle" | "poisson-mle" => Ok(FitMethod::PoissonMle),
            other => Err(Error::Config(format!("unknown fit method '{other}'"))),
        }
    }
}

/// Outcome of an amplitude fit.
///
/// Serializes to `{alpha_hat, alpha_err, chi2, ndf, chi2_per_ndf, method,
/// window_kev: [lo, hi]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha_hat: f64,
    pub alpha_err: f64,
    pub chi2: f64,
    pub ndf: u32,
    #[serde(default, skip_deserializing)]
    pub chi2_per_ndf: f64,
    pub method: FitMethod,
    #[serde(rename = "window_kev")]
    pub window: (f64, f64),
}

impl FitResult {
    fn new(alpha_hat: f64, alpha_err: f64, chi2: f64, ndf: u32, method: FitMethod, window: (f64, f64)) -> Self {
        FitResult {
            alpha_hat,
            alpha_err,
            chi2,
            ndf,
            chi2_per_ndf: chi2 / f64::from(ndf),
            method,
            window,
        }
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = (lo, hi);
        self
    }

    /// Checks the invariants of a (possibly deserialized) result and refreshes
    /// the derived `chi2_per_ndf`.
    pub fn validated(mut self) -> Result<Self> {
        if !(self.alpha_err.is_finite() && self.alpha_err > 0.0) {
            return Err(Error::Domain(format!("alpha_err must be positive, got {}", self.alpha_err)));
        }
        if self.ndf < 1 {
            return Err(Error::Domain("ndf must be at least 1".into()));
        }
        if !(self.chi2.is_finite() && self.chi2 >= 0.0) {
            return Err(Error::Domain(format!("chi2 must be non-negative, got {}", self.chi2)));
        }
        if !self.alpha_hat.is_finite() {
            return Err(Error::Domain("alpha_hat is not finite".into()));
        }
        self.chi2_per_ndf = goodness(&self);
        Ok(self)
    }
}

/// Reduced chi-square.
pub fn goodness(f: &FitResult) -> f64 {
    f.chi2 / f64::from(f.ndf)
}

/// `α·ln(e_hi/e_lo)`: counts expected in one bin for amplitude `alpha`.
pub fn expected_counts(alpha: f64, e_lo: f64, e_hi: f64) -> Result<f64> {
    if !(e_lo > 0.0 && e_hi > 0.0) {
        return Err(Error::Domain(format!(
            "bin edges must be positive, got [{e_lo}, {e_hi}]"
        )));
    }
    if e_hi <= e_lo {
        return Err(Error::Domain(format!("bin [{e_lo}, {e_hi}] is not ascending")));
    }
    Ok(alpha * (e_hi / e_lo).ln())
}

/// Per-bin design values `x_i = ln(hi/lo)`.
pub fn log_widths(s: &BinnedSpectrum) -> Result<Vec<f64>> {
    s.bins().map(|(lo, hi)| expected_counts(1.0, lo, hi)).collect()
}

fn extent(s: &BinnedSpectrum) -> (f64, f64) {
    (s.e_min(), s.e_max())
}

/// Weighted least squares with `σ_i = max(sqrt(n_i), 1)`.
pub fn fit_alpha_wls(s: &BinnedSpectrum) -> Result<FitResult> {
    if s.n_bins() < 2 {
        return Err(Error::DegenerateFit(format!(
            "least squares needs at least 2 bins, got {}",
            s.n_bins()
        )));
    }
    let y = s.raw_counts();
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateFit("all counts are zero".into()));
    }
    let x = log_widths(s)?;
    let w: Vec<f64> = y.iter().map(|&n| neyman_sigma(n).powi(-2)).collect();
    let (sxy, sxx) = x
        .iter()
        .zip(&y)
        .zip(&w)
        .fold((0.0, 0.0), |(sxy, sxx), ((&xi, &yi), &wi)| {
            (sxy + wi * xi * yi, sxx + wi * xi * xi)
        });
    let alpha = sxy / sxx;
    let chi2 = wls_chi2(alpha, &x, &y, &w);
    Ok(FitResult::new(
        alpha,
        sxx.sqrt().recip(),
        chi2,
        (s.n_bins() - 1) as u32,
        FitMethod::Wls,
        extent(s),
    ))
}

fn wls_chi2(alpha: f64, x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| wi * (yi - alpha * xi).powi(2))
        .sum()
}

/// Poisson maximum likelihood, `α̂ = N / Σ ln(hi/lo)`, `σ = α̂ / sqrt(N)`.
///
/// `chi2` is the likelihood-ratio statistic against the saturated model.
/// `ndf` is `bins - 1`, floored at 1 so single-bin spectra still report.
pub fn fit_alpha_poisson(s: &BinnedSpectrum) -> Result<FitResult> {
    let y = s.raw_counts();
    let total: f64 = y.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFit("total count is zero".into()));
    }
    let x = log_widths(s)?;
    let alpha = total / x.iter().sum::<f64>();
    Ok(FitResult::new(
        alpha,
        alpha / total.sqrt(),
        poisson_deviance(alpha, &x, &y),
        (s.n_bins().saturating_sub(1)).max(1) as u32,
        FitMethod::PoissonMle,
        extent(s),
    ))
}

pub fn fit(s: &BinnedSpectrum, method: FitMethod) -> Result<FitResult> {
    match method {
        FitMethod::Wls => fit_alpha_wls(s),
        FitMethod::PoissonMle => fit_alpha_poisson(s),
    }
}

/// `−2 ln(L(α)/L_sat) = 2 Σ [μ − n + n ln(n/μ)]`.
pub fn poisson_deviance(alpha: f64, x: &[f64], y: &[f64]) -> f64 {
    let d: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &n)| {
            let mu = alpha * xi;
            let log_term = if n > 0.0 { n * (n / mu).ln() } else { 0.0 };
            mu - n + log_term
        })
        .sum();
    (2.0 * d).max(0.0)
}

/// Maximizes the Poisson log-likelihood numerically.
///
/// Bisects the sign of the score `Σ (n_i/α − x_i)` in `ln α`. The bracket is
/// derived from the data alone; no closed form is used.
pub fn poisson_mle_numeric(s: &BinnedSpectrum) -> Result<f64> {
    let y = s.raw_counts();
    let x = log_widths(s)?;
    let total: f64 = y.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateFit("total count is zero".into()));
    }
    let score = |alpha: f64| -> f64 {
        x.iter()
            .zip(&y)
            .map(|(&xi, &n)| n / alpha - xi)
            .sum()
    };
    // score > 0 for small α, < 0 for large α
    let mut lo = 1e-300f64.ln();
    let mut hi = 1.0f64;
    while score(hi.exp()) > 0.0 {
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::DegenerateFit("likelihood maximum not bracketed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
