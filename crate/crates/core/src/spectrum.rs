//! Binned X-ray spectra: data model, CSV ingestion and energy windows.
//!
//! CSV format: header `e_low_kev,e_high_kev,counts`, one bin per row, `#`
//! starts a comment line. Exposure and normalization travel separately, on
//! the command line or in a sidecar JSON file (see [`SpectrumMetadata`]).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 3] = ["e_low_kev", "e_high_kev", "counts"];

/// Absolute slack, keV, when comparing bin edges against a window.
const EDGE_TOLERANCE_KEV: f64 = 1e-9;

/// How the `counts` column of a spectrum is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw counts per bin over the full exposure.
    #[default]
    CountsPerBin,
    /// Counts per keV over the full exposure.
    CountsPerKev,
    /// Counts per keV per kg·day.
    CountsPerKevKgDay,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::CountsPerBin => "counts_per_bin",
            Normalization::CountsPerKev => "counts_per_kev",
            Normalization::CountsPerKevKgDay => "counts_per_kev_kg_day",
        }
    }

    /// Multiplier turning a value in this normalization into raw counts.
    fn to_raw_factor(self, width_kev: f64, exposure: f64) -> f64 {
        match self {
            Normalization::CountsPerBin => 1.0,
            Normalization::CountsPerKev => width_kev,
            Normalization::CountsPerKevKgDay => width_kev * exposure,
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "counts_per_bin" => Ok(Normalization::CountsPerBin),
            "counts_per_kev" => Ok(Normalization::CountsPerKev),
            "counts_per_kev_kg_day" => Ok(Normalization::CountsPerKevKgDay),
            _ => Err(Error::Config(format!("unknown normalization '{s}'"))),
        }
    }
}

/// Sidecar metadata for a spectrum CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMetadata {
    pub exposure_kg_day: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

impl SpectrumMetadata {
    /// `spectrum.csv` → `spectrum.meta.json`.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A validated binned spectrum.
///
/// Bins are stored as `(low, high)` pairs ordered by energy; neighbouring bins
/// may touch but never overlap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedSpectrum {
    lows: Vec<f64>,
    highs: Vec<f64>,
    counts: Vec<f64>,
    exposure: f64,
    normalization: Normalization,
}

/// Per-bin rate density with its Poisson uncertainty, counts/(keV·kg·day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub e_lo: f64,
    pub e_hi: f64,
    pub rate: f64,
    pub sigma: f64,
}

impl BinnedSpectrum {
    /// Builds a spectrum from explicit `(low, high)` bins.
    pub fn from_bins(
        bins: &[(f64, f64)],
        counts: Vec<f64>,
        exposure: f64,
        normalization: Normalization,
    ) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::NoBins);
        }
        if bins.len() != counts.len() {
            return Err(Error::Domain(format!(
                "{} bins but {} count values",
                bins.len(),
                counts.len()
            )));
        }
        check_exposure(exposure)?;
        for (i, &(lo, hi)) in bins.iter().enumerate() {
            check_bin(lo, hi, i + 1)?;
            if i > 0 && lo < bins[i - 1].1 {
                return Err(Error::Domain(format!(
                    "bin {} [{lo}, {hi}] overlaps preceding bin",
                    i + 1
                )));
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Domain(format!("bin {}: negative count {c}", i + 1)));
            }
        }
        Ok(BinnedSpectrum {
            lows: bins.iter().map(|b| b.0).collect(),
            highs: bins.iter().map(|b| b.1).collect(),
            counts,
            exposure,
            normalization,
        })
    }

    /// Builds a contiguous spectrum from `n + 1` ascending edges.
    pub fn from_edges(
        edges: &[f64],
        counts: Vec<f64>,
        exposure: f64,
        normalization: Normalization,
    ) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::NoBins);
        }
        let bins: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        Self::from_bins(&bins, counts, exposure, normalization)
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lows.iter().copied().zip(self.highs.iter().copied())
    }

    /// Stored values in the spectrum's own normalization.
    pub fn values(&self) -> &[f64] {
        &self.counts
    }

    pub fn exposure(&self) -> f64 {
        self.exposure
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn e_min(&self) -> f64 {
        self.lows[0]
    }

    pub fn e_max(&self) -> f64 {
        self.highs[self.highs.len() - 1]
    }

    /// Edge list when the bins are contiguous.
    pub fn edges(&self) -> Option<Vec<f64>> {
        if !self.is_contiguous() {
            return None;
        }
        let mut e = self.lows.clone();
        e.push(self.e_max());
        Some(e)
    }

    pub fn is_contiguous(&self) -> bool {
        self.lows
            .iter()
            .skip(1)
            .zip(&self.highs)
            .all(|(lo, prev_hi)| lo == prev_hi)
    }

    /// Observed counts per bin over the full exposure.
    pub fn raw_counts(&self) -> Vec<f64> {
        self.bins()
            .zip(&self.counts)
            .map(|((lo, hi), &v)| v * self.normalization.to_raw_factor(hi - lo, self.exposure))
            .collect()
    }

    pub fn total_counts(&self) -> f64 {
        self.raw_counts().iter().sum()
    }

    /// Same spectrum re-expressed in another normalization.
    pub fn renormalized(&self, target: Normalization) -> BinnedSpectrum {
        let counts = self
            .bins()
            .zip(self.raw_counts())
            .map(|((lo, hi), raw)| raw / target.to_raw_factor(hi - lo, self.exposure))
            .collect();
        BinnedSpectrum {
            counts,
            normalization: target,
            ..self.clone()
        }
    }

    /// Keeps exactly the bins fully contained in `[e_lo, e_hi]`.
    ///
    /// Bins straddling a window edge are dropped, never split.
    pub fn restrict_range(&self, e_lo: f64, e_hi: f64) -> Result<BinnedSpectrum> {
        if !(e_lo < e_hi) {
            return Err(Error::Domain(format!(
                "window lower edge {e_lo} must be below upper edge {e_hi}"
            )));
        }
        let keep: Vec<usize> = (0..self.n_bins())
            .filter(|&i| {
                self.lows[i] >= e_lo - EDGE_TOLERANCE_KEV && self.highs[i] <= e_hi + EDGE_TOLERANCE_KEV
            })
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyRange { lo: e_lo, hi: e_hi });
        }
        Ok(BinnedSpectrum {
            lows: keep.iter().map(|&i| self.lows[i]).collect(),
            highs: keep.iter().map(|&i| self.highs[i]).collect(),
            counts: keep.iter().map(|&i| self.counts[i]).collect(),
            exposure: self.exposure,
            normalization: self.normalization,
        })
    }

    /// Rate density per bin, counts/(keV·kg·day).
    ///
    /// The uncertainty is `max(sqrt(n), 1) / (width · exposure)` with `n` the raw
    /// count, so empty bins carry a one-count error rather than zero.
    pub fn to_rate_density(&self) -> Result<Vec<RatePoint>> {
        self.bins()
            .zip(self.raw_counts())
            .map(|((lo, hi), n)| {
                let width = hi - lo;
                if !(width > 0.0) {
                    return Err(Error::Domain(format!("zero-width bin at {lo} keV")));
                }
                let norm = width * self.exposure;
                Ok(RatePoint {
                    e_lo: lo,
                    e_hi: hi,
                    rate: n / norm,
                    sigma: neyman_sigma(n) / norm,
                })
            })
            .collect()
    }

    /// Inverse of [`to_rate_density`](Self::to_rate_density): raw counts from
    /// rate densities.
    pub fn from_rate_density(points: &[RatePoint], exposure: f64) -> Result<BinnedSpectrum> {
        let bins: Vec<(f64, f64)> = points.iter().map(|p| (p.e_lo, p.e_hi)).collect();
        let counts = points
            .iter()
            .map(|p| p.rate * (p.e_hi - p.e_lo) * exposure)
            .collect();
        Self::from_bins(&bins, counts, exposure, Normalization::CountsPerBin)
    }
}

/// Per-bin σ used by the weighted least-squares path: `max(sqrt(n), 1)`.
pub fn neyman_sigma(n: f64) -> f64 {
    n.sqrt().max(1.0)
}

fn check_exposure(exposure: f64) -> Result<()> {
    if exposure.is_finite() && exposure > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("exposure must be positive, got {exposure}")))
    }
}

fn check_bin(lo: f64, hi: f64, line: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(format!("bin {line}: non-finite edge")));
    }
    if lo >= hi {
        return Err(Error::Domain(format!(
            "bin {line}: edges [{lo}, {hi}] are not ascending"
        )));
    }
    Ok(())
}

/// Reads a spectrum in the documented CSV format.
///
/// Errors name the 1-based line of the offending row.
pub fn load_spectrum<R: Read>(
    source: R,
    normalization: Normalization,
    exposure: f64,
) -> Result<BinnedSpectrum> {
    check_exposure(exposure)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);

    let header_err = |msg: String| Error::Parse { line: 1, msg };
    let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(Error::NoBins);
    }
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        let line = headers.position().map_or(1, |p| p.line() as usize);
        return Err(Error::Parse {
            line,
            msg: format!("expected header '{}'", CSV_HEADER.join(",")),
        });
    }

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut counts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let err = |msg: String| Error::Parse { line, msg };
        if record.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", record.len())));
        }
        let field = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("non-numeric field '{}'", &record[i])))
        };
        let (lo, hi, c) = (field(0)?, field(1)?, field(2)?);
        if lo >= hi {
            return Err(err(format!("descending edges [{lo}, {hi}]")));
        }
        if lo <= 0.0 {
            return Err(err(format!("non-positive energy edge {lo}")));
        }
        if c < 0.0 {
            return Err(err(format!("negative count {c}")));
        }
        if let Some(&(plo, phi)) = bins.last() {
            if lo < phi {
                return Err(err(format!(
                    "bin [{lo}, {hi}] overlaps preceding bin [{plo}, {phi}]"
                )));
            }
        }
        bins.push((lo, hi));
        counts.push(c);
    }
    if bins.is_empty() {
        return Err(Error::NoBins);
    }
    BinnedSpectrum::from_bins(&bins, counts, exposure, normalization)
}

/// Loads a CSV file, taking exposure/normalization from explicit values or
/// from the `*.meta.json` sidecar when present.
pub fn load_spectrum_file(
    path: &Path,
    normalization: Option<Normalization>,
    exposure: Option<f64>,
) -> Result<BinnedSpectrum> {
    let file = std::fs::File::open(path)?;
    let sidecar = SpectrumMetadata::sidecar_path(path);
    let meta = if sidecar.exists() {
        Some(SpectrumMetadata::load(&sidecar)?)
    } else {
        None
    };
    let exposure = exposure
        .or(meta.map(|m| m.exposure_kg_day))
        .ok_or_else(|| Error::Config("exposure not given and no sidecar metadata".into()))?;
    let normalization = normalization
        .or(meta.map(|m| m.normalization))
        .unwrap_or_default();
    load_spectrum(std::io::BufReader::new(file), normalization, exposure)
}

/// Writes the spectrum in the documented CSV format. `comments` are emitted
/// as leading `#` lines.
pub fn save_spectrum<W: Write>(s: &BinnedSpectrum, comments: &[String], mut out: W) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for ((lo, hi), c) in s.bins().zip(s.values()) {
        writeln!(out, "{lo},{hi},{c}")?;
    }
    Ok(())
}
