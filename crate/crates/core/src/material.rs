//! Detector material: atom density and the electron shell table used to
//! decide which electrons count as quasi-free.

use serde::{Deserialize, Serialize};

use crate::constants::AVOGADRO;
use crate::error::{Error, Result};

/// One electron shell, binding energy in eV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub label: String,
    pub binding_energy_ev: f64,
    pub occupancy: u32,
}

/// Shells are ordered outermost first, i.e. by increasing binding energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    name: String,
    atoms_per_kg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    molar_mass_g_per_mol: Option<f64>,
    shells: Vec<Shell>,
}

impl MaterialSpec {
    pub fn new(
        name: impl Into<String>,
        atoms_per_kg: f64,
        molar_mass_g_per_mol: Option<f64>,
        shells: Vec<Shell>,
    ) -> Result<Self> {
        let m = MaterialSpec {
            name: name.into(),
            atoms_per_kg,
            molar_mass_g_per_mol,
            shells,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.atoms_per_kg.is_finite() && self.atoms_per_kg > 0.0) {
            return Err(Error::Config(format!(
                "{}: atoms_per_kg must be positive",
                self.name
            )));
        }
        if let Some(mm) = self.molar_mass_g_per_mol {
            if !(mm.is_finite() && mm > 0.0) {
                return Err(Error::Config(format!(
                    "{}: molar mass must be positive",
                    self.name
                )));
            }
        }
        let mut prev = 0.0;
        for s in &self.shells {
            if s.occupancy == 0 {
                return Err(Error::Config(format!("shell {}: zero occupancy", s.label)));
            }
            if !(s.binding_energy_ev.is_finite() && s.binding_energy_ev > 0.0) {
                return Err(Error::Config(format!(
                    "shell {}: binding energy must be positive",
                    s.label
                )));
            }
            if s.binding_energy_ev < prev {
                return Err(Error::Config(format!(
                    "shell {}: shells must be listed outermost first",
                    s.label
                )));
            }
            prev = s.binding_energy_ev;
        }
        Ok(())
    }

    /// Natural germanium with the nominal density 8.9·10²⁴ atoms/kg.
    ///
    /// Binding energies for n = 1..3 are the tabulated X-ray edge energies
    /// (deeper sub-shell of each split pair); the 4s/4p values are
    /// approximate valence energies of order 10 eV.
    pub fn germanium() -> Self {
        let shell = |label: &str, be: f64, occ: u32| Shell {
            label: label.to_string(),
            binding_energy_ev: be,
            occupancy: occ,
        };
        MaterialSpec {
            name: "Ge".to_string(),
            atoms_per_kg: 8.9e24,
            molar_mass_g_per_mol: Some(72.63),
            shells: vec![
                shell("4p", 7.9, 2),
                shell("4s", 12.0, 2),
                shell("3d", 29.8, 10),
                shell("3p", 124.9, 6),
                shell("3s", 180.1, 2),
                shell("2p", 1248.1, 6),
                shell("2s", 1414.6, 2),
                shell("1s", 11103.1, 2),
            ],
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn atoms_per_kg(&self) -> f64 {
        self.atoms_per_kg
    }
    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    /// Atom density implied by the molar mass, `N_A / M`.
    pub fn atoms_per_kg_from_molar_mass(&self) -> Option<f64> {
        self.molar_mass_g_per_mol.map(|mm| AVOGADRO * 1000.0 / mm)
    }

    /// Same material with the atom density replaced by the molar-mass value.
    pub fn with_computed_density(&self) -> Option<Self> {
        self.atoms_per_kg_from_molar_mass().map(|n| MaterialSpec {
            atoms_per_kg: n,
            ..self.clone()
        })
    }

    pub fn total_electrons(&self) -> u32 {
        self.shells.iter().map(|s| s.occupancy).sum()
    }
}
