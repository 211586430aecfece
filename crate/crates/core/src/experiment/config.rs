//! TOML experiment description with schema versioning and up-front validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::elasticity::{Loads, MaterialField, PlaneAssumption};
use crate::error::{Error, Result};
use crate::estimator::DEFAULT_DOF_BUDGET;
use crate::fetidp::{FetiSettings, Tolerance};
use crate::interface_ops::Scaling;
use crate::mesh::{
    default_inclusions, generate_benchmark_mesh, partition_structured, Inclusion, PartitionScheme,
};
use crate::recovery::{EetMode, MultipointMode, RecoverySettings, DEFAULT_DEGREE};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub geometry: GeometryConfig,
    pub materials: MaterialsConfig,
    #[serde(default)]
    pub loads: LoadsConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Cells per side.
    pub n: usize,
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default)]
    pub inclusions: InclusionLayout,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InclusionLayout {
    /// `"default"` (four squares at the quarter points) or `"none"`.
    Named(String),
    Explicit(Vec<Inclusion>),
}

impl Default for InclusionLayout {
    fn default() -> Self {
        Self::Named("default".into())
    }
}

impl InclusionLayout {
    pub fn resolve(&self, length: f64) -> Result<Vec<Inclusion>> {
        match self {
            Self::Named(n) if n == "default" => Ok(default_inclusions(length)),
            Self::Named(n) if n == "none" => Ok(Vec::new()),
            Self::Named(n) => Err(Error::Config(format!("unknown inclusion layout {n:?}"))),
            Self::Explicit(list) => Ok(list.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    /// Matrix modulus `E₁`.
    pub young: f64,
    /// Inclusion-to-matrix modulus ratios `E₂/E₁`.
    pub ratios: Vec<f64>,
    pub poisson: f64,
    #[serde(default)]
    pub plane: PlaneAssumption,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsConfig {
    /// Top-edge traction `(g_x, g_y)`.
    pub traction: [f64; 2],
    #[serde(default)]
    pub body: [f64; 2],
}

impl Default for LoadsConfig {
    fn default() -> Self {
        let l = Loads::default();
        Self {
            traction: l.traction,
            body: l.body,
        }
    }
}

impl From<LoadsConfig> for Loads {
    fn from(c: LoadsConfig) -> Self {
        Loads {
            traction: c.traction,
            body: c.body,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub schemes: Vec<PartitionScheme>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub max_iter: usize,
    pub scaling: Scaling,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            tolerance_kind: ToleranceKind::Relative,
            max_iter: 500,
            scaling: Scaling::Stiffness,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> FetiSettings {
        let tolerance = match self.tolerance_kind {
            ToleranceKind::Relative => Tolerance::Relative(self.tolerance),
            ToleranceKind::Absolute => Tolerance::Absolute(self.tolerance),
        };
        FetiSettings {
            tolerance,
            max_iter: self.max_iter,
            scaling: self.scaling,
        }
    }
}

/// Estimator column: either one of the four standard names or a custom combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeSpec {
    Named(String),
    Custom(CustomMode),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomMode {
    pub label: String,
    pub substructured: bool,
    pub eet: EetMode,
    #[serde(default = "identity_p")]
    pub multipoint: MultipointMode,
}

fn identity_p() -> MultipointMode {
    MultipointMode::IdentityP
}

/// Resolved estimator column.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub label: String,
    pub substructured: bool,
    pub recovery: RecoverySettings,
}

pub const STANDARD_MODES: [&str; 4] = ["EET", "EEToptim", "DD EET", "DD optim EET"];

impl ModeSpec {
    pub fn resolve(&self, degree: usize) -> Result<Mode> {
        let (label, substructured, eet, multipoint) = match self {
            Self::Named(n) => match n.as_str() {
                "EET" => (
                    n.clone(),
                    false,
                    EetMode::Classical,
                    MultipointMode::IdentityP,
                ),
                "EEToptim" => (
                    n.clone(),
                    false,
                    EetMode::Weighted,
                    MultipointMode::WeightedP,
                ),
                "DD EET" => (
                    n.clone(),
                    true,
                    EetMode::Classical,
                    MultipointMode::IdentityP,
                ),
                "DD optim EET" => (
                    n.clone(),
                    true,
                    EetMode::Weighted,
                    MultipointMode::WeightedP,
                ),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown mode {n:?}; expected one of {STANDARD_MODES:?}"
                    )))
                }
            },
            Self::Custom(c) => (c.label.clone(), c.substructured, c.eet, c.multipoint),
        };
        Ok(Mode {
            label,
            substructured,
            recovery: RecoverySettings {
                eet,
                multipoint,
                degree,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Refinement factor of the overkill reference; 0 disables it.
    #[serde(default)]
    pub overkill: usize,
    #[serde(default = "default_budget")]
    pub dof_budget: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
}

fn default_budget() -> usize {
    DEFAULT_DOF_BUDGET
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            overkill: 0,
            dof_budget: DEFAULT_DOF_BUDGET,
            degree: DEFAULT_DEGREE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Error maps as legacy VTK.
    #[serde(default)]
    pub vtk: bool,
    /// Per-iteration solver and estimator terms for substructured modes.
    #[serde(default)]
    pub trace: bool,
    /// Recovered edge densities and stress coefficients.
    #[serde(default)]
    pub fields: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn modes(&self) -> Result<Vec<Mode>> {
        let modes: Vec<Mode> = self
            .modes
            .iter()
            .map(|m| m.resolve(self.estimator.degree))
            .collect::<Result<_>>()?;
        for (k, m) in modes.iter().enumerate() {
            if modes[..k].iter().any(|o| o.label == m.label) {
                return Err(Error::Config(format!("duplicate mode label {:?}", m.label)));
            }
        }
        Ok(modes)
    }

    pub fn loads(&self) -> Loads {
        self.loads.into()
    }

    pub fn material_field(&self, ratio: f64) -> Result<MaterialField> {
        MaterialField::benchmark(
            self.materials.young,
            ratio,
            self.materials.poisson,
            self.materials.plane,
        )
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.materials.ratios.is_empty() {
            return Err(Error::Config("materials.ratios is empty".into()));
        }
        for &r in &self.materials.ratios {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Config(format!(
                    "modulus ratio must be positive, got {r}"
                )));
            }
            self.material_field(r)?;
        }
        if self.modes.is_empty() {
            return Err(Error::Config("no estimator mode requested".into()));
        }
        let modes = self.modes()?;
        if !(1..=8).contains(&self.estimator.degree) {
            return Err(Error::Config(format!(
                "element degree must be in 1..=8, got {}",
                self.estimator.degree
            )));
        }
        if self.estimator.overkill == 1 {
            return Err(Error::Config(
                "overkill factor must be 0 or at least 2".into(),
            ));
        }
        if !(self.solver.tolerance.is_finite() && self.solver.tolerance > 0.0)
            || self.solver.max_iter == 0
        {
            return Err(Error::Config(
                "solver tolerance must be positive and max_iter nonzero".into(),
            ));
        }
        if self
            .loads
            .traction
            .iter()
            .chain(&self.loads.body)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("loads must be finite".into()));
        }
        if modes.iter().any(|m| m.substructured) && self.partition.schemes.is_empty() {
            return Err(Error::Config(
                "substructured modes need at least one partition scheme".into(),
            ));
        }
        let inclusions = self.geometry.inclusions.resolve(self.geometry.length)?;
        let mesh = generate_benchmark_mesh(self.geometry.n, self.geometry.length, &inclusions)?;
        for &scheme in &self.partition.schemes {
            partition_structured(&mesh, scheme)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
modes = ["EET", "DD optim EET", { label = "DD off", substructured = true, eet = "weighted", multipoint = "off" }]
[geometry]
n = 12
[materials]
young = 1.0
ratios = [1.0]
poisson = 0.3
[partition]
schemes = ["grid3x3"]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.loads.traction, [1.0, 1.0]);
        let modes = cfg.modes().unwrap();
        assert_eq!(modes.len(), 3);
        assert_eq!(modes[2].recovery.multipoint, MultipointMode::Off);
        assert!(!modes[0].substructured);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cases = [
            MINIMAL.replace("poisson = 0.3", "poisson = 0.6"),
            MINIMAL.replace("schema_version = 1", "schema_version = 2"),
            MINIMAL.replace("n = 12", "n = 12\ncolour = 3"),
            MINIMAL.replace("ratios = [1.0]", "ratios = [-1.0]"),
            MINIMAL.replace("\"EET\",", "\"EETX\","),
            MINIMAL.replace("n = 12", "n = 10"),
            MINIMAL.replace("grid3x3", "grid4x4"),
        ];
        for text in cases {
            assert!(
                matches!(
                    ExperimentConfig::from_toml(&text),
                    Err(Error::Config(_) | Error::Material(_) | Error::Mesh(_))
                ),
                "{text}"
            );
        }
    }
}
