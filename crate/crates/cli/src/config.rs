//! Run configuration: a single JSON document, with command-line flags taking
//! precedence over file fields, which take precedence over defaults. The
//! only honored environment variable is `TIMEOP_OUTPUT_DIR` (between flags
//! and file). Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use timeop_core::{
    CheckTolerances, Construction, DomainTolerances, Grid, PhysicalConstants, StencilOrder,
    TestFunction, ValidationTolerances, Weight, WeightSpec,
};

use crate::CliError;

/// Weight source: a registry entry with parameters, or a two-column samples
/// file interpolated piecewise-linearly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_file: Option<PathBuf>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            name: Some("shifted_gaussian".to_string()),
            params: BTreeMap::new(),
            samples_file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WaveFunctionConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Declare an effective compact support after sampling (needed to shift
    /// functions that only decay numerically, like gaussians).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_radius: Option<f64>,
    /// Largest magnitude tolerated outside the declared radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_tol: Option<f64>,
}

impl Default for WaveFunctionConfig {
    fn default() -> Self {
        WaveFunctionConfig {
            kind: "smooth_bump".to_string(),
            params: BTreeMap::new(),
            support_radius: None,
            support_tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub weight: WeightConfig,
    pub half_width: f64,
    pub nodes: usize,
    pub hbar: f64,
    pub order: usize,
    pub construction: String,
    /// Restrict the verify suite to these checks (default: all).
    pub checks: Option<Vec<String>>,
    /// Opt out of these checks.
    pub skip: Vec<String>,
    pub tolerances: CheckTolerances,
    pub validation: ValidationTolerances,
    pub domain: DomainTolerances,
    pub deficiency_l_list: Vec<f64>,
    pub deficiency_nodes: usize,
    pub kappa: f64,
    pub wavefunction: WaveFunctionConfig,
    pub sigma: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            weight: WeightConfig::default(),
            half_width: 20.0,
            nodes: 4097,
            hbar: 1.0,
            order: 4,
            construction: "conjugated".to_string(),
            checks: None,
            skip: Vec::new(),
            tolerances: CheckTolerances::default(),
            validation: ValidationTolerances::default(),
            domain: DomainTolerances::default(),
            deficiency_l_list: vec![10.0, 20.0, 30.0],
            deficiency_nodes: 500_001,
            kappa: 1.0,
            wavefunction: WaveFunctionConfig::default(),
            // 2.5 = 1280 h on the default grid, so the shift is node-aligned
            sigma: 2.5,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("cannot parse config {}: {e}", path.display())))
    }

    /// Apply the output-directory environment override (weaker than flags).
    pub fn apply_env(&mut self) {
        if let Ok(dir) = std::env::var("TIMEOP_OUTPUT_DIR") {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    /// The resolved configuration as JSON, embedded in reports for
    /// reproducibility.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_else(|_| json!({}))
    }
}

/// Domain objects built from a [`RunConfig`].
#[derive(Debug)]
pub struct Resolved {
    pub weight: Weight,
    pub grid: Grid,
    pub constants: PhysicalConstants,
    pub order: StencilOrder,
    pub construction: Construction,
}

impl Resolved {
    pub fn from_config(config: &RunConfig) -> Result<Self, CliError> {
        let weight = build_weight(&config.weight)?;
        let grid = Grid::new(config.half_width, config.nodes)
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        let constants = PhysicalConstants::new(config.hbar)
            .map_err(|e| CliError::Config(format!("constants: {e}")))?;
        let order = StencilOrder::from_value(config.order)
            .map_err(|e| CliError::Config(format!("order: {e}")))?;
        let construction = match config.construction.as_str() {
            "conjugated" => Construction::Conjugated,
            "direct" => Construction::Direct,
            other => {
                return Err(CliError::Config(format!(
                    "construction must be 'conjugated' or 'direct', got '{other}'"
                )))
            }
        };
        Ok(Resolved {
            weight,
            grid,
            constants,
            order,
            construction,
        })
    }
}

pub fn build_weight(config: &WeightConfig) -> Result<Weight, CliError> {
    match (&config.name, &config.samples_file) {
        (Some(_), Some(_)) => Err(CliError::Config(
            "weight: give either a name or a samples_file, not both".into(),
        )),
        (Some(name), None) => Weight::from_spec(&WeightSpec {
            name: name.clone(),
            params: config.params.clone(),
        })
        .map_err(|e| CliError::Config(format!("weight: {e}"))),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Io(format!(
                    "cannot read weight samples {}: {e}",
                    path.display()
                ))
            })?;
            let samples = timeop_core::io::weight_samples_from_csv(&text)
                .map_err(|e| CliError::Config(format!("weight samples: {e}")))?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sampled".to_string());
            Weight::from_samples(id, samples)
                .map_err(|e| CliError::Config(format!("weight samples: {e}")))
        }
        (None, None) => Err(CliError::Config(
            "weight: needs a name or a samples_file".into(),
        )),
    }
}

pub fn build_wavefunction(
    config: &WaveFunctionConfig,
    grid: &Grid,
) -> Result<timeop_core::WaveFunction, CliError> {
    let kind = TestFunction::from_spec(&config.kind, &config.params)
        .map_err(|e| CliError::Config(format!("wavefunction: {e}")))?;
    let mut psi = kind
        .sample(grid)
        .map_err(|e| CliError::Config(format!("wavefunction: {e}")))?;
    if let Some(radius) = config.support_radius {
        let tol = config.support_tol.unwrap_or(1e-12);
        psi = psi
            .declare_support(radius, tol)
            .map_err(|e| CliError::Check(format!("support declaration: {e}")))?;
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let config = RunConfig::default();
        let resolved = Resolved::from_config(&config).unwrap();
        assert_eq!(resolved.grid.len(), 4097);
        assert_eq!(resolved.weight.id(), "shifted_gaussian");
        assert_eq!(resolved.construction, Construction::Conjugated);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>("{\"half_wdith\": 10.0}").unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn even_node_count_is_a_config_error() {
        let config = RunConfig {
            nodes: 4096,
            ..RunConfig::default()
        };
        let err = Resolved::from_config(&config).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("odd"));
    }

    #[test]
    fn partial_tolerance_override() {
        let config: RunConfig =
            serde_json::from_str("{\"tolerances\": {\"commutation_order2\": 1e-3}}").unwrap();
        assert_eq!(config.tolerances.commutation_order2, 1e-3);
        assert_eq!(
            config.tolerances.hermiticity_conjugated,
            CheckTolerances::default().hermiticity_conjugated
        );
    }
}
