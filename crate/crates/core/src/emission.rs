//! Spontaneous photon emission rate of a free electron under white-noise CSL.
//!
//! Per electron, `dΓ/dE = e²λ / (4π² a² m_e² E)`. With `e² = 4π α_em` and
//! `a` expressed in keV⁻¹ the prefactor `K = α_em / (π a² m_e²)` is
//! dimensionless, so `K·λ/E` carries units of s⁻¹·keV⁻¹ when λ is in s⁻¹ and
//! E in keV. Mass-proportional coupling multiplies the rate by `(m_e/m_N)²`.

use serde::Serialize;

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

/// Rate parameters: collapse rate λ (s⁻¹), coupling variant and constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionModelParams {
    lambda: f64,
    mass_proportional: bool,
    constants: PhysicalConstants,
}

impl EmissionModelParams {
    pub fn new(lambda: f64, mass_proportional: bool, constants: PhysicalConstants) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Domain(format!(
                "collapse rate must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(EmissionModelParams {
            lambda,
            mass_proportional,
            constants,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mass_proportional(&self) -> bool {
        self.mass_proportional
    }
    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    /// Rate prefactor including the coupling factor, `K·f`.
    pub fn effective_coefficient(&self) -> f64 {
        per_electron_coefficient(&self.constants) * coupling_factor(&self.constants, self.mass_proportional)
    }
}

/// Dimensionless prefactor `K = e² / (4π² a² m_e²)` of the 1/E emission law.
pub fn per_electron_coefficient(constants: &PhysicalConstants) -> f64 {
    let a = constants.a_natural();
    let m = constants.m_e_kev();
    constants.alpha_em() / (std::f64::consts::PI * a * a * m * m)
}

/// `(m_e/m_N)²`.
pub fn mass_prop_factor(constants: &PhysicalConstants) -> f64 {
    let r = constants.m_e_kev() / constants.m_n_kev();
    r * r
}

/// 1 for white-noise coupling, [`mass_prop_factor`] for mass-proportional.
pub fn coupling_factor(constants: &PhysicalConstants, mass_proportional: bool) -> f64 {
    if mass_proportional {
        mass_prop_factor(constants)
    } else {
        1.0
    }
}

/// Emission rate density per electron at photon energy `e_kev`, s⁻¹·keV⁻¹.
pub fn rate_density(e_kev: f64, params: &EmissionModelParams) -> Result<f64> {
    if !(e_kev.is_finite() && e_kev > 0.0) {
        return Err(Error::Domain(format!(
            "photon energy must be positive, got {e_kev} keV"
        )));
    }
    Ok(params.effective_coefficient() * params.lambda / e_kev)
}

/// Expected emissions per electron integrated over `[e_lo, e_hi]` keV, s⁻¹.
pub fn integrated_rate(e_lo: f64, e_hi: f64, params: &EmissionModelParams) -> Result<f64> {
    if !(e_lo > 0.0 && e_hi > e_lo) {
        return Err(Error::Domain(format!(
            "invalid energy interval [{e_lo}, {e_hi}] keV"
        )));
    }
    Ok(params.effective_coefficient() * params.lambda * (e_hi / e_lo).ln())
}
