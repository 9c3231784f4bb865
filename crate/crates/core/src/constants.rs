//! Physical constants and natural-unit conversion.
//!
//! Everything that enters the emission rate is expressed in keV-based natural
//! units (ħ = c = 1). Lengths are converted to keV⁻¹ through `ħc` before they
//! are combined with masses; there is no mixed-unit evaluation path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fine-structure constant as used for the published Ge limits, `1/137.04`.
pub const ALPHA_EM_PAPER: f64 = 1.0 / 137.04;
/// CODATA fine-structure constant, `1/137.035999`.
pub const ALPHA_EM_CODATA: f64 = 1.0 / 137.035_999_084;

/// Electron mass to three significant figures, keV.
pub const ELECTRON_MASS_KEV: f64 = 511.0;
/// CODATA electron mass, keV.
pub const ELECTRON_MASS_KEV_CODATA: f64 = 510.998_950_00;
/// Proton mass, keV. Used as the nucleon mass.
pub const NUCLEON_MASS_KEV: f64 = 938_272.0;

/// ħc in m·keV.
pub const HBAR_C_M_KEV: f64 = 1.973_269_8e-10;

/// Conventional CSL correlation length, m.
pub const CORRELATION_LENGTH_M: f64 = 1e-7;

pub const SECONDS_PER_DAY_EXACT: f64 = 86_400.0;
/// Rounded value used when the published Ge factor was evaluated.
pub const SECONDS_PER_DAY_PAPER: f64 = 8.6e4;

pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Selects the rounding conventions applied to derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantsMode {
    /// 86400 s per day.
    #[default]
    Exact,
    /// 8.6·10⁴ s per day, reproducing the published factor `c`.
    PaperCompat,
}

impl ConstantsMode {
    pub fn seconds_per_day(self) -> f64 {
        match self {
            ConstantsMode::Exact => SECONDS_PER_DAY_EXACT,
            ConstantsMode::PaperCompat => SECONDS_PER_DAY_PAPER,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConstantsMode::Exact => "exact",
            ConstantsMode::PaperCompat => "paper_compat",
        }
    }
}

impl std::str::FromStr for ConstantsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ConstantsMode::Exact),
            "paper-compat" | "paper_compat" => Ok(ConstantsMode::PaperCompat),
            other => Err(Error::Config(format!("unknown constants mode '{other}'"))),
        }
    }
}

/// Validated set of physical constants. Immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    m_e_kev: f64,
    m_n_kev: f64,
    alpha_em: f64,
    hbar_c_m_kev: f64,
    a_m: f64,
    seconds_per_day: f64,
}

impl PhysicalConstants {
    pub fn new(
        m_e_kev: f64,
        m_n_kev: f64,
        alpha_em: f64,
        hbar_c_m_kev: f64,
        a_m: f64,
        seconds_per_day: f64,
    ) -> Result<Self> {
        let fields = [
            ("m_e_kev", m_e_kev),
            ("m_n_kev", m_n_kev),
            ("alpha_em", alpha_em),
            ("hbar_c_m_kev", hbar_c_m_kev),
            ("a_m", a_m),
            ("seconds_per_day", seconds_per_day),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConstants(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if m_e_kev > m_n_kev {
            return Err(Error::InvalidConstants(format!(
                "electron mass {m_e_kev} keV exceeds nucleon mass {m_n_kev} keV"
            )));
        }
        if alpha_em >= 1.0 {
            return Err(Error::InvalidConstants(format!(
                "alpha_em must lie in (0, 1), got {alpha_em}"
            )));
        }
        Ok(PhysicalConstants {
            m_e_kev,
            m_n_kev,
            alpha_em,
            hbar_c_m_kev,
            a_m,
            seconds_per_day,
        })
    }

    /// Defaults for the given mode: m_e = 511 keV, m_N = proton mass,
    /// α_em = 1/137.04, a = 10⁻⁷ m.
    pub fn for_mode(mode: ConstantsMode) -> Self {
        PhysicalConstants {
            m_e_kev: ELECTRON_MASS_KEV,
            m_n_kev: NUCLEON_MASS_KEV,
            alpha_em: ALPHA_EM_PAPER,
            hbar_c_m_kev: HBAR_C_M_KEV,
            a_m: CORRELATION_LENGTH_M,
            seconds_per_day: mode.seconds_per_day(),
        }
    }

    pub fn paper_compat() -> Self {
        Self::for_mode(ConstantsMode::PaperCompat)
    }

    pub fn m_e_kev(&self) -> f64 {
        self.m_e_kev
    }
    pub fn m_n_kev(&self) -> f64 {
        self.m_n_kev
    }
    pub fn alpha_em(&self) -> f64 {
        self.alpha_em
    }
    pub fn hbar_c_m_kev(&self) -> f64 {
        self.hbar_c_m_kev
    }
    pub fn a_m(&self) -> f64 {
        self.a_m
    }
    pub fn seconds_per_day(&self) -> f64 {
        self.seconds_per_day
    }

    /// Squared electron charge in Heaviside–Lorentz natural units, `4π·α_em`.
    pub fn e_squared(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.alpha_em
    }

    /// Correlation length in keV⁻¹.
    pub fn a_natural(&self) -> f64 {
        length_to_inverse_kev(self.a_m, self.hbar_c_m_kev)
    }

    pub fn with_correlation_length(self, a_m: f64) -> Result<Self> {
        Self::new(
            self.m_e_kev,
            self.m_n_kev,
            self.alpha_em,
            self.hbar_c_m_kev,
            a_m,
            self.seconds_per_day,
        )
    }

    pub fn with_electron_mass(self, m_e_kev: f64) -> Result<Self> {
        Self::new(
            m_e_kev,
            self.m_n_kev,
            self.alpha_em,
            self.hbar_c_m_kev,
            self.a_m,
            self.seconds_per_day,
        )
    }

    pub fn with_nucleon_mass(self, m_n_kev: f64) -> Result<Self> {
        Self::new(
            self.m_e_kev,
            m_n_kev,
            self.alpha_em,
            self.hbar_c_m_kev,
            self.a_m,
            self.seconds_per_day,
        )
    }

    /// Applies configuration-file overrides on top of `self`.
    pub fn with_overrides(self, o: &ConstantsOverrides) -> Result<Self> {
        Self::new(
            o.m_e_kev.unwrap_or(self.m_e_kev),
            o.m_n_kev.unwrap_or(self.m_n_kev),
            o.alpha_em.unwrap_or(self.alpha_em),
            self.hbar_c_m_kev,
            o.a_m.unwrap_or(self.a_m),
            o.seconds_per_day.unwrap_or(self.seconds_per_day),
        )
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::for_mode(ConstantsMode::default())
    }
}

/// Optional overrides read from a JSON configuration object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_e_kev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_n_kev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_em: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds_per_day: Option<f64>,
}

/// Converts a length in metres to keV⁻¹.
pub fn length_to_inverse_kev(length_m: f64, hbar_c_m_kev: f64) -> f64 {
    length_m / hbar_c_m_kev
}

/// Converts a length in keV⁻¹ back to metres.
pub fn inverse_kev_to_length(length_inv_kev: f64, hbar_c_m_kev: f64) -> f64 {
    length_inv_kev * hbar_c_m_kev
}
