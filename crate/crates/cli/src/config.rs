//! The run configuration tree, presets, and `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ns_pinn::bound::NuTerm;
use ns_pinn::experiment::DEFAULT_POPULATION_POINTS;
use ns_pinn::oracle::SuiteConfig;
use ns_pinn::{ActivationSpec, Domain, Loss, Sigma, SweepConfig, TrainConfig};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_r: usize,
    pub n_0: usize,
    pub seed: u64,
    pub domain: Domain,
    pub population_points: usize,
    pub population_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_r: 125,
            n_0: 500,
            seed: 0,
            domain: Domain::unit_cube(2),
            population_points: DEFAULT_POPULATION_POINTS,
            population_seed: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub seed: u64,
    /// Spread of the first layer; `null` means `1/√(d+1)`.
    pub w_scale: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub nu_term: NuTerm,
    /// Replaces the activation's tabulated constants.
    pub sigma_constants: Option<Sigma>,
    /// Fixed moment constants; when absent they are measured on a
    /// population sample.
    pub c_z: Option<f64>,
    pub c_z0: Option<f64>,
    /// Also plan collocation counts for this target bound.
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_r_values: Vec<usize>,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_r_values: vec![27, 64, 125, 216],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Snapshot times for the field grids.
    pub times: Vec<f64>,
    /// Grid points per spatial axis.
    pub resolution: usize,
    /// Random points for the residual statistics.
    pub residual_points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            times: vec![0.0, 0.5, 1.0],
            resolution: 21,
            residual_points: 10_000,
        }
    }
}

/// Every knob of every command. All fields have defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub activation: ActivationSpec,
    pub d: usize,
    pub p: usize,
    pub loss: Loss,
    pub training: TrainConfig,
    pub sampling: SamplingConfig,
    pub init: InitConfig,
    pub bound: BoundConfig,
    pub sweep: SweepSection,
    pub verify: SuiteConfig,
    pub report: ReportConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            activation: ActivationSpec::tanh_cubed(),
            d: 2,
            p: 64,
            loss: Loss::default(),
            training: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            init: InitConfig::default(),
            bound: BoundConfig::default(),
            sweep: SweepSection::default(),
            verify: SuiteConfig::default(),
            report: ReportConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            p: self.p,
            n_r_values: self.sweep.n_r_values.clone(),
            n_0: self.sampling.n_0,
            activation: self.activation,
            loss: self.loss,
            train: self.training.clone(),
            domain: self.sampling.domain.clone(),
            init_seed: self.init.seed,
            sweep_seed: self.sweep.seed,
            w_scale: self.init.w_scale,
            population_points: self.sampling.population_points,
            sigma_constants: self.bound.sigma_constants,
            nu_term: self.bound.nu_term,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Full-size correlation sweep on the unit cube.
    Sweep,
    /// The `[0,2]² × [0,1]` benchmark with 1000 interior points.
    Figure1,
    /// Laptop-scale correlation sweep (the defaults).
    Desk,
}

impl Preset {
    pub fn config(self) -> RunConfig {
        let desk = RunConfig::default();
        match self {
            Preset::Desk => desk,
            Preset::Sweep => {
                let full = SweepConfig::full_scale();
                RunConfig {
                    training: full.train,
                    sampling: SamplingConfig {
                        n_0: full.n_0,
                        ..desk.sampling.clone()
                    },
                    sweep: SweepSection {
                        n_r_values: full.n_r_values,
                        ..desk.sweep.clone()
                    },
                    ..desk
                }
            }
            Preset::Figure1 => RunConfig {
                training: SweepConfig::full_scale().train,
                sampling: SamplingConfig {
                    n_r: 1000,
                    n_0: 2500,
                    domain: Domain::figure1(),
                    ..desk.sampling.clone()
                },
                ..desk
            },
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else replaces.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses, else as a string.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad key path {path:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("{path:?}: {key:?} is not inside an object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("{path:?} does not name an object field")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Preset (or defaults), then the config file, then `--set`, then `--out`.
pub fn resolve(
    preset: Option<Preset>,
    file: Option<&Path>,
    sets: &[String],
    out: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let base = preset.map(Preset::config).unwrap_or_default();
    let mut tree = serde_json::to_value(&base).expect("config serializes");
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::Usage("config file must hold a JSON object".into()));
        }
        merge(&mut tree, patch);
    }
    for s in sets {
        apply_set(&mut tree, s)?;
    }
    if let Some(out) = out {
        tree["out"] = Value::String(out.to_string_lossy().into_owned());
    }
    serde_json::from_value(tree).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert_eq!(resolve(None, None, &[], None).unwrap(), cfg);
    }

    #[test]
    fn sets_override_nested_fields() {
        let sets = vec![
            "training.epochs=7".to_string(),
            "activation.family=tanh".to_string(),
            "activation.k=1".to_string(),
            "sweep.n_r_values=[8,16,32]".to_string(),
        ];
        let cfg = resolve(None, None, &sets, Some(Path::new("elsewhere"))).unwrap();
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.activation, ActivationSpec::tanh());
        assert_eq!(cfg.sweep.n_r_values, vec![8, 16, 32]);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
    }

    #[test]
    fn file_then_set_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"p": 9, "training": {"epochs": 3}}"#).unwrap();
        let cfg = resolve(Some(Preset::Figure1), Some(&path), &["p=11".into()], None).unwrap();
        assert_eq!(cfg.p, 11);
        assert_eq!(cfg.training.epochs, 3);
        assert_eq!(cfg.training.learning_rate, 1e-3);
        assert_eq!(cfg.sampling.domain, Domain::figure1());
    }

    #[test]
    fn bad_overrides_are_usage_errors() {
        for bad in ["nokey", "training.epochz=3", "p.x=1", "=3", "activation.k=-1"] {
            assert!(
                matches!(resolve(None, None, &[bad.to_string()], None), Err(CliError::Usage(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn presets_differ_where_expected() {
        let sweep = Preset::Sweep.config();
        assert_eq!(sweep.sampling.n_0, 2500);
        assert_eq!(sweep.training.epochs, 20_000);
        assert_eq!(sweep.sweep.n_r_values.last(), Some(&1000));
        assert_eq!(Preset::Desk.config(), RunConfig::default());
        assert_eq!(RunConfig::default().sweep_config(), SweepConfig::desk());
    }
}
