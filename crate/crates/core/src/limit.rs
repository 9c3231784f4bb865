//! From a fitted amplitude to an upper bound on the collapse rate λ.
//!
//! The predicted count spectrum of a detector is `c · K·f · λ · exposure / E`
//! with `c = atoms/kg × s/day × quasi-free electrons per atom`, `K` the
//! per-electron coefficient and `f` the coupling factor (1 or `(m_e/m_N)²`).
//! Requiring it to stay below the measured `α/E` gives
//! `λ ≤ α / (K·f·c·exposure)`.

use serde::{Deserialize, Serialize};

use crate::constants::{ConstantsMode, PhysicalConstants};
use crate::emission::{coupling_factor, per_electron_coefficient};
use crate::error::{Error, Result};
use crate::material::MaterialSpec;

/// Collapse rate of the original spontaneous-localization model, s⁻¹.
pub const LAMBDA_QMSL: f64 = 1e-16;
/// Conventional CSL collapse rate, s⁻¹.
pub const LAMBDA_CSL: f64 = 2.2e-17;

/// How the fitted amplitude is turned into the bounding amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClMode {
    /// α̂ itself.
    #[default]
    #[serde(rename = "point_estimate")]
    PointEstimate,
    /// α̂ + σ.
    #[serde(rename = "plus_1sigma")]
    Plus1Sigma,
    /// α̂ + 1.645σ, one-sided 95% for a Gaussian estimator.
    #[serde(rename = "plus_1p645sigma")]
    Plus1p645Sigma,
}

impl ClMode {
    pub fn sigma_multiple(self) -> f64 {
        match self {
            ClMode::PointEstimate => 0.0,
            ClMode::Plus1Sigma => 1.0,
            ClMode::Plus1p645Sigma => 1.645,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClMode::PointEstimate => "point_estimate",
            ClMode::Plus1Sigma => "plus_1sigma",
            ClMode::Plus1p645Sigma => "plus_1p645sigma",
        }
    }
}

impl std::str::FromStr for ClMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "point_estimate" | "point" => Ok(ClMode::PointEstimate),
            "plus_1sigma" => Ok(ClMode::Plus1Sigma),
            "plus_1p645sigma" => Ok(ClMode::Plus1p645Sigma),
            _ => Err(Error::Config(format!("unknown CL mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitAssumptions {
    pub n_quasi_free: u32,
    pub mass_proportional: bool,
    pub constants_mode: ConstantsMode,
    pub cl_mode: ClMode,
    pub exposure_kg_day: f64,
}

impl LimitAssumptions {
    /// Four valence electrons, white-noise coupling, point estimate.
    pub fn paper_default(exposure_kg_day: f64) -> Self {
        LimitAssumptions {
            n_quasi_free: 4,
            mass_proportional: false,
            constants_mode: ConstantsMode::PaperCompat,
            cl_mode: ClMode::PointEstimate,
            exposure_kg_day,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_quasi_free == 0 {
            return Err(Error::Config("number of quasi-free electrons must be positive".into()));
        }
        if !(self.exposure_kg_day.is_finite() && self.exposure_kg_day > 0.0) {
            return Err(Error::Config(format!(
                "exposure must be positive, got {}",
                self.exposure_kg_day
            )));
        }
        Ok(())
    }
}

/// Fitted amplitude with its 1σ uncertainty (needed for non-point CL modes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeEstimate {
    pub alpha: f64,
    pub sigma: Option<f64>,
}

impl AmplitudeEstimate {
    pub fn point(alpha: f64) -> Self {
        AmplitudeEstimate { alpha, sigma: None }
    }

    pub fn with_sigma(alpha: f64, sigma: f64) -> Self {
        AmplitudeEstimate {
            alpha,
            sigma: Some(sigma),
        }
    }

    fn bounding(&self, mode: ClMode) -> Result<f64> {
        match (mode, self.sigma) {
            (ClMode::PointEstimate, _) => Ok(self.alpha),
            (m, Some(s)) if s >= 0.0 => Ok(self.alpha + m.sigma_multiple() * s),
            (m, _) => Err(Error::Config(format!(
                "CL mode {} needs the amplitude uncertainty",
                m.as_str()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitResult {
    pub lambda_upper: f64,
    pub assumptions: LimitAssumptions,
    pub alpha_used: f64,
    pub c_used: f64,
    pub k_used: f64,
    pub coupling_factor: f64,
}

/// `atoms_per_kg × seconds_per_day × n_quasi_free`, electrons·s/(kg·day).
pub fn factor_c(material: &MaterialSpec, n_quasi_free: u32, mode: ConstantsMode) -> f64 {
    factor_c_with(material, n_quasi_free, mode.seconds_per_day())
}

pub fn factor_c_with(material: &MaterialSpec, n_quasi_free: u32, seconds_per_day: f64) -> f64 {
    material.atoms_per_kg() * seconds_per_day * f64::from(n_quasi_free)
}

/// Electrons per atom whose binding energies are far below the lowest photon
/// energy of the fit window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasiFreeSelection {
    pub count: u32,
    /// Label of the deepest shell included, `None` when no shell qualifies.
    pub deepest_shell: Option<String>,
}

impl QuasiFreeSelection {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// Sums occupancies of the outer shells satisfying
/// `binding_energy × safety_factor ≤ e_min`.
pub fn quasi_free_count(
    material: &MaterialSpec,
    e_min_kev: f64,
    safety_factor: f64,
) -> Result<QuasiFreeSelection> {
    if material.shells().is_empty() {
        return Err(Error::Config(format!("{}: empty shell table", material.name())));
    }
    if !(e_min_kev > 0.0) {
        return Err(Error::Domain(format!("e_min must be positive, got {e_min_kev}")));
    }
    if !(safety_factor > 1.0) {
        return Err(Error::Domain(format!(
            "safety factor must exceed 1, got {safety_factor}"
        )));
    }
    let threshold_ev = e_min_kev * 1000.0;
    let mut sel = QuasiFreeSelection {
        count: 0,
        deepest_shell: None,
    };
    for shell in material.shells() {
        if shell.binding_energy_ev * safety_factor > threshold_ev {
            break;
        }
        sel.count += shell.occupancy;
        sel.deepest_shell = Some(shell.label.clone());
    }
    Ok(sel)
}

/// Inverts the amplitude bound into `λ ≤ α_eff / (K·f·c·exposure)`.
pub fn alpha_to_lambda(
    estimate: AmplitudeEstimate,
    assumptions: &LimitAssumptions,
    material: &MaterialSpec,
    constants: &PhysicalConstants,
) -> Result<LimitResult> {
    assumptions.validate()?;
    if !(estimate.alpha.is_finite() && estimate.alpha > 0.0) {
        return Err(Error::Domain(format!(
            "amplitude must be positive, got {}",
            estimate.alpha
        )));
    }
    let alpha_used = estimate.bounding(assumptions.cl_mode)?;
    let k = per_electron_coefficient(constants);
    let f = coupling_factor(constants, assumptions.mass_proportional);
    let c = factor_c_with(material, assumptions.n_quasi_free, constants.seconds_per_day());
    Ok(LimitResult {
        lambda_upper: alpha_used / (k * f * c * assumptions.exposure_kg_day),
        assumptions: *assumptions,
        alpha_used,
        c_used: c,
        k_used: k,
        coupling_factor: f,
    })
}

/// Forward map: the amplitude (counts) a detector would see for collapse rate
/// `lambda`.
pub fn lambda_to_alpha(
    lambda: f64,
    assumptions: &LimitAssumptions,
    material: &MaterialSpec,
    constants: &PhysicalConstants,
) -> f64 {
    let k = per_electron_coefficient(constants);
    let f = coupling_factor(constants, assumptions.mass_proportional);
    let c = factor_c_with(material, assumptions.n_quasi_free, constants.seconds_per_day());
    lambda * k * f * c * assumptions.exposure_kg_day
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Collapse rate assumed by a model.
    Model,
    /// Bound from a laboratory experiment.
    Laboratory,
    /// Bound from an astronomical observation.
    Astronomical,
}

impl ReferenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::Model => "model",
            ReferenceKind::Laboratory => "laboratory",
            ReferenceKind::Astronomical => "astronomical",
        }
    }
}

/// A reference is either an absolute rate or a distance in orders of
/// magnitude above λ_CSL (a `[lo, hi]` range; single values have lo = hi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceValue {
    ValuePerS(f64),
    OrdersAboveCsl([u32; 2]),
}

impl ReferenceValue {
    /// Rate used for the comparison; ranges use their stringent end.
    pub fn lambda(&self) -> f64 {
        match *self {
            ReferenceValue::ValuePerS(v) => v,
            ReferenceValue::OrdersAboveCsl([lo, _]) => LAMBDA_CSL * 10f64.powi(lo as i32),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ReferenceValue::ValuePerS(v) => format!("{v:e}"),
            ReferenceValue::OrdersAboveCsl([lo, hi]) if lo == hi => format!("{lo}"),
            ReferenceValue::OrdersAboveCsl([lo, hi]) => format!("{lo}-{hi}"),
        }
    }

    pub fn parse_label(label: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad reference '{label}'"));
        if label.contains('e') || label.contains('.') {
            return label.parse().map(ReferenceValue::ValuePerS).map_err(|_| bad());
        }
        let (lo, hi) = label.split_once('-').unwrap_or((label, label));
        Ok(ReferenceValue::OrdersAboveCsl([
            lo.parse().map_err(|_| bad())?,
            hi.parse().map_err(|_| bad())?,
        ]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub name: &'static str,
    pub kind: ReferenceKind,
    pub value: ReferenceValue,
}

/// The two model rates and the laboratory/astronomical bounds, the latter in
/// orders of magnitude above λ_CSL.
pub const REFERENCES: [Reference; 10] = [
    Reference { name: "lambda_QMSL", kind: ReferenceKind::Model, value: ReferenceValue::ValuePerS(LAMBDA_QMSL) },
    Reference { name: "lambda_CSL", kind: ReferenceKind::Model, value: ReferenceValue::ValuePerS(LAMBDA_CSL) },
    Reference { name: "Fullerene diffraction experiments", kind: ReferenceKind::Laboratory, value: ReferenceValue::OrdersAboveCsl([12, 13]) },
    Reference { name: "Decay of supercurrents (SQUIDs)", kind: ReferenceKind::Laboratory, value: ReferenceValue::OrdersAboveCsl([15, 15]) },
    Reference { name: "Spontaneous X-ray emission from Ge", kind: ReferenceKind::Laboratory, value: ReferenceValue::OrdersAboveCsl([5, 5]) },
    Reference { name: "Proton decay", kind: ReferenceKind::Laboratory, value: ReferenceValue::OrdersAboveCsl([19, 19]) },
    Reference { name: "Dissociation of cosmic hydrogen", kind: ReferenceKind::Astronomical, value: ReferenceValue::OrdersAboveCsl([18, 18]) },
    Reference { name: "Heating of intergalactic medium (IGM)", kind: ReferenceKind::Astronomical, value: ReferenceValue::OrdersAboveCsl([9, 9]) },
    Reference { name: "Heating of protons in the universe", kind: ReferenceKind::Astronomical, value: ReferenceValue::OrdersAboveCsl([13, 13]) },
    Reference { name: "Heating of interstellar dust grains", kind: ReferenceKind::Astronomical, value: ReferenceValue::OrdersAboveCsl([16, 16]) },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub name: String,
    pub kind: ReferenceKind,
    pub reference_value_or_magnitude: ReferenceValue,
    /// The new limit lies strictly below the reference.
    pub excluded: bool,
    pub boundary: bool,
    /// `log10(limit / reference)`; negative when the limit is more stringent.
    pub log10_distance: f64,
}

impl Comparison {
    pub fn verdict(&self) -> &'static str {
        match (self.boundary, self.excluded, self.kind) {
            (true, _, _) => "BOUNDARY",
            (false, true, ReferenceKind::Model) => "EXCLUDED",
            (false, false, ReferenceKind::Model) => "not excluded",
            (false, true, _) => "stronger",
            (false, false, _) => "weaker",
        }
    }
}

/// Compares a λ upper bound with every entry of [`REFERENCES`].
pub fn compare_models(lambda_upper: f64) -> Vec<Comparison> {
    REFERENCES
        .iter()
        .map(|r| {
            let reference = r.value.lambda();
            let boundary = ((lambda_upper - reference) / reference).abs() <= 1e-12;
            let log10_distance = if boundary { 0.0 } else { (lambda_upper / reference).log10() };
            Comparison {
                name: r.name.to_string(),
                kind: r.kind,
                reference_value_or_magnitude: r.value,
                excluded: !boundary && lambda_upper < reference,
                boundary,
                log10_distance,
            }
        })
        .collect()
}

/// A historical limit, stored as published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceLimit {
    pub lambda_upper_per_s: f64,
    pub source: &'static str,
    pub description: &'static str,
}

/// Earlier bound from the Ge emission at 11 keV, four valence electrons.
pub fn fu_reference() -> ReferenceLimit {
    ReferenceLimit {
        lambda_upper_per_s: 0.55e-16,
        source: "Fu-1997-Ge-11keV",
        description: "spontaneous emission from an isolated Ge slab at 11 keV, 4 valence electrons",
    }
}

/// Serialized limit: flat assumptions plus comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub lambda_upper_per_s: f64,
    pub n_quasi_free: u32,
    pub mass_proportional: bool,
    pub cl_mode: ClMode,
    pub constants_mode: ConstantsMode,
    pub exposure_kg_day: f64,
    pub alpha_used: f64,
    pub c_used: f64,
    pub comparisons: Vec<Comparison>,
}

impl LimitReport {
    pub fn from_result(r: &LimitResult) -> Self {
        LimitReport {
            lambda_upper_per_s: r.lambda_upper,
            n_quasi_free: r.assumptions.n_quasi_free,
            mass_proportional: r.assumptions.mass_proportional,
            cl_mode: r.assumptions.cl_mode,
            constants_mode: r.assumptions.constants_mode,
            exposure_kg_day: r.assumptions.exposure_kg_day,
            alpha_used: r.alpha_used,
            c_used: r.c_used,
            comparisons: compare_models(r.lambda_upper),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_upper_per_s.is_finite() && self.lambda_upper_per_s > 0.0) {
            return Err(Error::Domain("lambda_upper_per_s must be positive".into()));
        }
        if self.n_quasi_free == 0 || !(self.exposure_kg_day > 0.0) {
            return Err(Error::Domain("invalid assumptions in limit report".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::mass_prop_factor;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn limit(n: u32, mp: bool) -> LimitResult {
        let a = LimitAssumptions {
            n_quasi_free: n,
            mass_proportional: mp,
            ..LimitAssumptions::paper_default(80.0)
        };
        alpha_to_lambda(
            AmplitudeEstimate::point(110.0),
            &a,
            &MaterialSpec::germanium(),
            &PhysicalConstants::paper_compat(),
        )
        .unwrap()
    }

    #[test]
    fn factor_c_examples() {
        let ge = MaterialSpec::germanium();
        let c4 = factor_c(&ge, 4, ConstantsMode::PaperCompat);
        assert!(rel(c4, 8.9e24 * 8.6e4 * 4.0) < 1e-15);
        assert!(rel(c4, 3.06e30) < 1e-3);
        let c22 = factor_c(&ge, 22, ConstantsMode::PaperCompat);
        assert!(rel(c22, c4 * 22.0 / 4.0) < 1e-15);
        let exact = factor_c(&ge, 4, ConstantsMode::Exact);
        assert!(rel(exact, 3.076e30) < 1e-3);
    }

    #[test]
    fn quasi_free_examples() {
        let ge = MaterialSpec::germanium();
        let sel = quasi_free_count(&ge, 4.5, 22.0).unwrap();
        assert_eq!(sel.count, 22);
        assert_eq!(sel.deepest_shell.as_deref(), Some("3s"));
        let valence = quasi_free_count(&ge, 4.5, 200.0).unwrap();
        assert_eq!(valence.count, 4);
        let none = quasi_free_count(&ge, 0.05, 22.0).unwrap();
        assert!(none.is_empty());
        assert_eq!(none.deepest_shell, None);

        let empty = MaterialSpec::new("void", 1e24, None, vec![]).unwrap();
        assert!(quasi_free_count(&empty, 4.5, 22.0).is_err());
        assert!(quasi_free_count(&ge, 4.5, 1.0).is_err());
        assert!(quasi_free_count(&ge, 0.0, 22.0).is_err());
    }

    #[test]
    fn published_limits_within_ten_percent() {
        for (n, mp, published) in [
            (4, false, 1.4e-17),
            (22, false, 2.5e-18),
            (4, true, 4.7e-11),
            (22, true, 8.5e-12),
        ] {
            let l = limit(n, mp);
            assert!(rel(l.lambda_upper, published) < 0.10, "{n} {mp}: {}", l.lambda_upper);
        }
    }

    #[test]
    fn exact_ratios() {
        let c = PhysicalConstants::paper_compat();
        assert!(rel(limit(22, false).lambda_upper / limit(4, false).lambda_upper, 2.0 / 11.0) < 1e-12);
        assert!(rel(limit(4, true).lambda_upper / limit(4, false).lambda_upper, 1.0 / mass_prop_factor(&c)) < 1e-12);
    }

    #[test]
    fn cl_modes() {
        let a = LimitAssumptions {
            cl_mode: ClMode::Plus1p645Sigma,
            ..LimitAssumptions::paper_default(80.0)
        };
        let ge = MaterialSpec::germanium();
        let c = PhysicalConstants::paper_compat();
        assert!(alpha_to_lambda(AmplitudeEstimate::point(110.0), &a, &ge, &c).is_err());
        let r = alpha_to_lambda(AmplitudeEstimate::with_sigma(110.0, 7.0), &a, &ge, &c).unwrap();
        assert!(rel(r.alpha_used, 110.0 + 1.645 * 7.0) < 1e-15);
        assert!(rel(r.lambda_upper / limit(4, false).lambda_upper, r.alpha_used / 110.0) < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        let ge = MaterialSpec::germanium();
        let c = PhysicalConstants::paper_compat();
        let a = LimitAssumptions::paper_default(80.0);
        assert!(matches!(
            alpha_to_lambda(AmplitudeEstimate::point(0.0), &a, &ge, &c),
            Err(Error::Domain(_))
        ));
        assert!(alpha_to_lambda(AmplitudeEstimate::point(-3.0), &a, &ge, &c).is_err());
        let zero = LimitAssumptions { n_quasi_free: 0, ..a };
        assert!(alpha_to_lambda(AmplitudeEstimate::point(1.0), &zero, &ge, &c).is_err());
    }

    #[test]
    fn comparisons() {
        let cmp = compare_models(2.5e-18);
        let csl = cmp.iter().find(|c| c.name == "lambda_CSL").unwrap();
        assert!(csl.excluded);
        assert_eq!(csl.verdict(), "EXCLUDED");
        assert!(cmp.iter().find(|c| c.name == "lambda_QMSL").unwrap().excluded);

        let cmp = compare_models(8.5e-12);
        let csl = cmp.iter().find(|c| c.name == "lambda_CSL").unwrap();
        assert!(!csl.excluded);
        assert!((csl.log10_distance - 5.586_996_244_892_086).abs() < 1e-9);

        let cmp = compare_models(1e-16);
        let qmsl = cmp.iter().find(|c| c.name == "lambda_QMSL").unwrap();
        assert!(qmsl.boundary && !qmsl.excluded);
        assert_eq!(qmsl.log10_distance, 0.0);
        assert_eq!(qmsl.verdict(), "BOUNDARY");

        assert_eq!(compare_models(1e-17).len(), 10);
    }

    #[test]
    fn fu_reference_value() {
        let fu = fu_reference();
        assert_eq!(fu.lambda_upper_per_s, 0.55e-16);
        assert_eq!(fu.source, "Fu-1997-Ge-11keV");
        let ratio = 2.5e-18 / fu.lambda_upper_per_s;
        assert!((ratio - 0.045).abs() < 1e-3);
    }

    #[test]
    fn reference_labels_round_trip() {
        for r in REFERENCES {
            assert_eq!(ReferenceValue::parse_label(&r.value.label()).unwrap(), r.value);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_through_forward_model(
                alpha in 1e-3f64..1e6,
                n in 1u32..33,
                mp in any::<bool>(),
                exposure in 0.1f64..1e4,
            ) {
                let a = LimitAssumptions { n_quasi_free: n, mass_proportional: mp, ..LimitAssumptions::paper_default(exposure) };
                let ge = MaterialSpec::germanium();
                let c = PhysicalConstants::paper_compat();
                let r = alpha_to_lambda(AmplitudeEstimate::point(alpha), &a, &ge, &c).unwrap();
                prop_assert!(rel(lambda_to_alpha(r.lambda_upper, &a, &ge, &c), alpha) < 1e-9);
            }

            #[test]
            fn strictly_decreasing_in_electrons(n in 1u32..40) {
                prop_assert!(limit(n + 1, false).lambda_upper < limit(n, false).lambda_upper);
            }

            #[test]
            fn linear_in_alpha_inverse_in_exposure(alpha in 1.0f64..1e4, k in 1.1f64..100.0) {
                let ge = MaterialSpec::germanium();
                let c = PhysicalConstants::paper_compat();
                let a = LimitAssumptions::paper_default(80.0);
                let base = alpha_to_lambda(AmplitudeEstimate::point(alpha), &a, &ge, &c).unwrap().lambda_upper;
                let scaled = alpha_to_lambda(AmplitudeEstimate::point(k * alpha), &a, &ge, &c).unwrap().lambda_upper;
                prop_assert!(rel(scaled, k * base) < 1e-12);
                let more = LimitAssumptions::paper_default(80.0 * k);
                let diluted = alpha_to_lambda(AmplitudeEstimate::point(alpha), &more, &ge, &c).unwrap().lambda_upper;
                prop_assert!(rel(diluted, base / k) < 1e-12);
            }
        }
    }
}
