//! Experiment configuration: a TOML document with every number explicit.
//!
//! The schema mirrors [`ExperimentConfig`]; every section has a complete default so a partial
//! file overrides only what it names. `dumbbell print-config` emits the effective document.

use crate::PipelineError;
use dumbbell_core::geometry::{DumbbellSpec, ModelSpec, Resolution};
use dumbbell_core::weight_model::{Bump, PWeight};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Mesh resolution tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Tiny,
    Default,
    Fine,
}

impl Tier {
    pub fn resolution(self) -> Resolution {
        match self {
            Tier::Tiny => Resolution::tiny(),
            Tier::Default => Resolution::default(),
            Tier::Fine => Resolution::fine(),
        }
    }

    /// Radial grid cells of the cross-section solver.
    pub fn cross_section_cells(self) -> usize {
        match self {
            Tier::Tiny => 400,
            Tier::Default => 2000,
            Tier::Fine => 4000,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Tiny => "tiny",
            Tier::Default => "default",
            Tier::Fine => "fine",
        }
    }
}

/// Dumbbell and model-domain geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub dim: usize,
    /// Truncation radius of D⁻.
    pub r_left: f64,
    /// Truncation radius of D⁺ about e₁.
    pub r_right: f64,
    /// Geometric grading ratio toward the junction circles.
    pub grading_ratio: f64,
    /// Tube length of the junction model domain.
    pub model_tube_length: f64,
    /// Truncation radius of the model domain's half-space about e₁.
    pub model_radius: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let d = DumbbellSpec::new(3, 0.1);
        let m = ModelSpec::new(3);
        Self {
            dim: 3,
            r_left: d.r_left,
            r_right: d.r_right,
            grading_ratio: d.grading_ratio,
            model_tube_length: m.tube_length,
            model_radius: m.radius,
        }
    }
}

/// One smooth bump of the weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub bumps: Vec<BumpConfig>,
    /// Smallest admissible relative distance of λ_{k0}(D⁺) from the spectrum of D⁻.
    pub min_gap: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        let bumps = PWeight::default()
            .bumps
            .iter()
            .map(|b| BumpConfig {
                center: b.center,
                radius: b.radius,
                amplitude: b.amplitude,
            })
            .collect();
        Self {
            bumps,
            min_gap: 0.05,
        }
    }
}

impl WeightConfig {
    pub fn weight(&self) -> PWeight {
        PWeight {
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    center: b.center,
                    radius: b.radius,
                    amplitude: b.amplitude,
                })
                .collect(),
        }
    }
}

/// Channel widths and the sample grids of the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Strictly decreasing channel widths.
    pub eps_ladder: Vec<f64>,
    /// Width for the right-junction limit of the frequency.
    pub junction_eps: f64,
    /// Width for the mesh-refinement study of the identities.
    pub identity_eps: f64,
    /// Frequency sample radii, left regime (negative).
    pub r_left: Vec<f64>,
    /// Frequency sample radii, channel regime, in (0, 1).
    pub r_corridor: Vec<f64>,
    /// Frequency sample radii, right regime, as offsets t of r = 1 + t.
    pub t_right: Vec<f64>,
    /// Offset t of the right-junction limit sample r = 1 + t.
    pub junction_t: f64,
    /// Radius of the half-sphere normalizing U_ε.
    pub k_tilde: f64,
    /// Upper end of the H_U window; the lower end is 4ε.
    pub lambda_max: f64,
    pub lambda_count: usize,
    /// Radii of the nodal scan on Γ_r⁻.
    pub nodal_radii: Vec<f64>,
    /// Radius of the envelope ball about e₁.
    pub envelope_r0: f64,
    /// Multiples R of ε for the slice-trace growth bound.
    pub hat_gamma_radii: Vec<f64>,
    /// Sample radii of the tube-model frequency of Φ₁.
    pub tube_radii: Vec<f64>,
    /// Sample radii of the exterior frequency of the reflected Φ₂.
    pub exterior_radii: Vec<f64>,
    /// Radius at which the left frequency is compared after doubling r_left.
    pub robustness_r: f64,
    /// Refinement factors of the identity study, increasing.
    pub refinement: Vec<f64>,
    /// Radius t of the identity study: half-spheres of radius t about 0 and e₁, the slice at
    /// x₁ = t, and derivative samples within 0.2 of each.
    pub identity_radius: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            eps_ladder: vec![0.2, 0.1, 0.05, 0.02],
            junction_eps: 0.01,
            identity_eps: 0.1,
            r_left: vec![-8.0, -4.0, -2.0, -1.0, -0.5, -0.25],
            r_corridor: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            t_right: vec![0.1, 0.25, 0.5, 1.0, 2.0],
            junction_t: 0.1,
            k_tilde: 0.25,
            lambda_max: 0.2,
            lambda_count: 8,
            nodal_radii: vec![0.05, 0.1],
            envelope_r0: 0.5,
            hat_gamma_radii: vec![2.0, 3.0, 4.0],
            tube_radii: vec![-6.0, -3.0, -1.0, 0.0],
            exterior_radii: vec![-2.0, -5.0, -10.0],
            robustness_r: -0.25,
            refinement: vec![0.5, 1.0, 2.0],
            identity_radius: 0.5,
        }
    }
}

/// Acceptance tolerances, all relative unless named otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub cross_section_extrapolated: f64,
    pub cross_section_exact: f64,
    pub upsilon_abs: f64,
    pub y1_quotient_abs: f64,
    pub poincare: f64,
    pub poincare_trial: f64,
    pub constant_frequency: f64,
    pub kelvin: f64,
    pub profile_frequency: f64,
    pub junction_limit_abs: f64,
    pub exponent_abs: f64,
    pub beta: f64,
    pub blowup: f64,
    pub min_rate: f64,
    pub scale_invariance: f64,
    pub robustness_frequency: f64,
    pub robustness_profile: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cross_section_extrapolated: 1e-3,
            cross_section_exact: 1e-4,
            upsilon_abs: 1e-6,
            y1_quotient_abs: 1e-5,
            poincare: 0.02,
            poincare_trial: 1e-3,
            constant_frequency: 0.01,
            kelvin: 0.01,
            profile_frequency: 0.05,
            junction_limit_abs: 0.1,
            exponent_abs: 0.4,
            beta: 0.1,
            blowup: 0.1,
            min_rate: 0.8,
            scale_invariance: 1e-12,
            robustness_frequency: 0.01,
            robustness_profile: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Run on one thread so repeated runs give byte-identical files.
    pub serial: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("dumbbell-out"),
            serial: false,
        }
    }
}

/// The full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub tier: Tier,
    pub geometry: GeometryConfig,
    pub weight: WeightConfig,
    pub sampling: SamplingConfig,
    pub tolerances: Tolerances,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tier: Tier::Default,
            geometry: GeometryConfig::default(),
            weight: WeightConfig::default(),
            sampling: SamplingConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Rejects inconsistent settings before any solve.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut problems = Vec::new();
        let s = &self.sampling;
        if s.eps_ladder.is_empty() {
            problems.push("eps ladder is empty".to_string());
        }
        if s.eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            problems.push(format!(
                "eps ladder {:?} is not strictly decreasing",
                s.eps_ladder
            ));
        }
        let all_eps = s
            .eps_ladder
            .iter()
            .chain([&s.junction_eps, &s.identity_eps]);
        if let Some(e) = all_eps.clone().find(|&&e| !(e > 0.0 && e < 0.5)) {
            problems.push(format!("channel width {e} outside (0, 0.5)"));
        }
        if s.r_left.iter().any(|&r| !(r < 0.0)) {
            problems.push("left sample radii must be negative".into());
        }
        if s.r_corridor.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            problems.push("channel sample radii must lie in (0, 1)".into());
        }
        if s.t_right.iter().chain([&s.junction_t]).any(|&t| !(t > 0.0)) {
            problems.push("right offsets must be positive".into());
        }
        if !(s.k_tilde > 0.0 && s.lambda_max > 0.0 && s.lambda_max <= s.k_tilde) {
            problems.push(format!(
                "need 0 < lambda_max <= k_tilde, got {} and {}",
                s.lambda_max, s.k_tilde
            ));
        }
        if s.lambda_count < 3 {
            problems.push("lambda_count must be at least 3".into());
        }
        if s.refinement.len() < 2
            || s.refinement.windows(2).any(|w| !(w[1] > w[0]))
            || s.refinement.iter().any(|&f| !(f > 0.0))
        {
            problems.push("refinement factors must be positive and strictly increasing".into());
        }
        if !(s.identity_radius > 0.2 + 2.0 * s.identity_eps && s.identity_radius < 0.8) {
            problems.push(format!(
                "identity radius {} must exceed 0.2 + 2 identity_eps and stay below 0.8",
                s.identity_radius
            ));
        }
        if !(s.robustness_r < 0.0) {
            problems.push("robustness radius must be negative".into());
        }
        let tol = serde_json::to_value(&self.tolerances).expect("tolerances serialize");
        for (name, value) in tol.as_object().expect("tolerances are a table") {
            if !(value.as_f64().unwrap_or(f64::NAN) > 0.0) {
                problems.push(format!("tolerance {name} = {value} is not positive"));
            }
        }
        if !(self.weight.min_gap > 0.0) {
            problems.push("min_gap must be positive".into());
        }
        let weight_issues = self.weight.weight().validate();
        problems.extend(weight_issues.into_iter().map(|w| format!("weight: {w}")));
        for eps in all_eps {
            if let Err(e) = self.dumbbell(*eps).validate() {
                problems.push(format!("geometry at eps = {eps}: {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }

    /// Every channel width the run meshes; all meshes share their half-space parts.
    pub fn all_eps(&self) -> Vec<f64> {
        let s = &self.sampling;
        let mut v: Vec<f64> = s
            .eps_ladder
            .iter()
            .copied()
            .chain([s.junction_eps, s.identity_eps])
            .collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v.dedup();
        v
    }

    pub fn dumbbell(&self, eps: f64) -> DumbbellSpec {
        let g = &self.geometry;
        let mut spec = DumbbellSpec::new(g.dim, eps);
        spec.r_left = g.r_left;
        spec.r_right = g.r_right;
        spec.grading_ratio = g.grading_ratio;
        spec.resolution = self.tier.resolution();
        spec.extra_radii = self.all_eps().into_iter().filter(|&e| e != eps).collect();
        spec
    }

    pub fn model(&self) -> ModelSpec {
        let g = &self.geometry;
        let mut spec = ModelSpec::new(g.dim);
        spec.tube_length = g.model_tube_length;
        spec.radius = g.model_radius;
        spec.grading_ratio = g.grading_ratio;
        spec.resolution = self.tier.resolution();
        spec
    }

    /// Geometric λ grid from 4ε to lambda_max.
    pub fn lambda_grid(&self, eps: f64) -> Vec<f64> {
        let s = &self.sampling;
        let lo = 4.0 * eps;
        let n = s.lambda_count;
        (0..n)
            .map(|i| lo * (s.lambda_max / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_and_validates() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c =
            ExperimentConfig::from_toml("tier = \"tiny\"\n[sampling]\neps_ladder = [0.2, 0.1]\n")
                .unwrap();
        assert_eq!(c.tier, Tier::Tiny);
        assert_eq!(c.sampling.eps_ladder, vec![0.2, 0.1]);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn non_decreasing_ladder_is_rejected() {
        let mut c = ExperimentConfig::default();
        c.sampling.eps_ladder = vec![0.1, 0.2];
        assert!(
            matches!(c.validate(), Err(PipelineError::Config(m)) if m.contains("strictly decreasing"))
        );
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let mut c = ExperimentConfig::default();
        c.tolerances.beta = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[sampling]\nbogus = 1\n").is_err());
    }

    #[test]
    fn lambda_grid_spans_window() {
        let g = ExperimentConfig::default().lambda_grid(0.02);
        assert!((g[0] - 0.08).abs() < 1e-15 && (g[g.len() - 1] - 0.2).abs() < 1e-15);
    }
}
