//! TOML experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use semilinear_inverse::domain::BoundaryArc;
use semilinear_inverse::elliptic::LinearSolveOptions;
use semilinear_inverse::harmonic::Parity;
use semilinear_inverse::inverse::{ObstacleSearch, ReconstructionOptions, TestSpec};
use semilinear_inverse::linearize::EpsStencil;
use semilinear_inverse::semilinear::{CoefficientPreset, NewtonOptions, DEFAULT_K_TRUNC};
use semilinear_inverse::DomainConfig;
use serde::{Deserialize, Serialize};

/// A configuration problem, located by key path and (when known) line.
#[derive(Debug, thiserror::Error)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.file {
            write!(f, "{}", p.display())?;
            if let Some(l) = self.line {
                write!(f, ":{l}")?;
            }
            write!(f, ": ")?;
        }
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "key `{}`: {}", self.key, self.message)
        }
    }
}

impl ConfigError {
    pub fn key(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { file: None, line: None, key: key.into(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Forward,
    DtnBank,
    Linearize,
    RecoverQ,
    RecoverV,
    RecoverObstacle,
    DensityCheck,
    FullPipeline,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Forward => "forward",
            Experiment::DtnBank => "dtn_bank",
            Experiment::Linearize => "linearize",
            Experiment::RecoverQ => "recover_q",
            Experiment::RecoverV => "recover_v",
            Experiment::RecoverObstacle => "recover_obstacle",
            Experiment::DensityCheck => "density_check",
            Experiment::FullPipeline => "full_pipeline",
        }
    }
}

/// Boundary data on `Γ₁`, as a function of the boundary parameter `s`
/// (angle on the disk, arclength on the square).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Zero,
    /// `offset + amplitude · cos(mode·θ)` (or `sin`), `θ = 2πs / period`.
    Fourier {
        mode: usize,
        #[serde(default = "default_parity")]
        parity: Parity,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `amplitude · Re (x+iy)^degree` (or `Im`) sampled on the boundary.
    Polynomial {
        degree: usize,
        #[serde(default = "default_parity")]
        parity: Parity,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn default_parity() -> Parity {
    Parity::Re
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    #[serde(default = "zero_preset")]
    pub q: CoefficientPreset,
    /// Node-indexed CSV (`node,value`) replacing `q`.
    pub q_file: Option<PathBuf>,
    pub v3: Option<CoefficientPreset>,
    pub v3_file: Option<PathBuf>,
    pub v4: Option<CoefficientPreset>,
    pub v4_file: Option<PathBuf>,
    pub v5: Option<CoefficientPreset>,
    pub v5_file: Option<PathBuf>,
    #[serde(default = "default_k_trunc")]
    pub k_trunc: usize,
}

fn zero_preset() -> CoefficientPreset {
    CoefficientPreset::Zero
}

fn default_k_trunc() -> usize {
    DEFAULT_K_TRUNC
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            q: CoefficientPreset::Zero,
            q_file: None,
            v3: None,
            v3_file: None,
            v4: None,
            v4_file: None,
            v5: None,
            v5_file: None,
            k_trunc: DEFAULT_K_TRUNC,
        }
    }
}

impl CoefficientSection {
    /// `(order, preset, file)` for each configured `V_k`.
    pub fn v_entries(&self) -> Vec<(usize, Option<&CoefficientPreset>, Option<&PathBuf>)> {
        vec![
            (3, self.v3.as_ref(), self.v3_file.as_ref()),
            (4, self.v4.as_ref(), self.v4_file.as_ref()),
            (5, self.v5.as_ref(), self.v5_file.as_ref()),
        ]
    }
}

/// Exponentials growing toward `growth_angle`, see [`TestSpec::cgo_fan`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgoFan {
    pub growth_angle: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    pub n_dirs: usize,
    pub freqs: Vec<f64>,
    #[serde(default = "one")]
    pub h: f64,
}

fn default_spread() -> f64 {
    0.6
}

/// Harmonic test functions lifted from tapered traces on `Γ₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankSection {
    pub poly_degree: usize,
    pub cgo_fan: Option<CgoFan>,
}

impl Default for BankSection {
    fn default() -> Self {
        BankSection { poly_degree: 6, cgo_fan: None }
    }
}

impl BankSection {
    pub fn specs(&self) -> Vec<TestSpec> {
        let mut s = TestSpec::polynomials(self.poly_degree);
        if let Some(f) = &self.cgo_fan {
            s.extend(TestSpec::cgo_fan(f.growth_angle, f.spread, f.n_dirs, &f.freqs, f.h));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardSection {
    pub f: BoundarySpec,
    /// Also run the Picard iteration and report its distance to Newton.
    pub picard_check: bool,
}

impl Default for ForwardSection {
    fn default() -> Self {
        ForwardSection { f: BoundarySpec::Zero, picard_check: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputsSection {
    pub inputs: Vec<BoundarySpec>,
}

impl Default for InputsSection {
    fn default() -> Self {
        InputsSection {
            inputs: vec![
                BoundarySpec::Fourier { mode: 1, parity: Parity::Re, amplitude: 1.0, offset: 0.0 },
                BoundarySpec::Fourier { mode: 2, parity: Parity::Im, amplitude: 1.0, offset: 0.0 },
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentData {
    BoundaryData,
    InteriorOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverQSection {
    pub moments: MomentData,
}

impl Default for RecoverQSection {
    fn default() -> Self {
        RecoverQSection { moments: MomentData::BoundaryData }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoverVSection {
    pub order: usize,
    /// Polynomial degree of the bank used for `V_m` (all input multisets are used).
    pub poly_degree: usize,
    pub reconstruction: ReconstructionOptions,
}

impl Default for RecoverVSection {
    fn default() -> Self {
        RecoverVSection {
            order: 3,
            poly_degree: 3,
            reconstruction: ReconstructionOptions { fourier_modes: 7, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSection {
    pub search: ObstacleSearch,
    /// Nonnegative Dirichlet inputs for the first linearizations.
    pub inputs: Vec<BoundarySpec>,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        let f = |mode, parity, amplitude| BoundarySpec::Fourier { mode, parity, amplitude, offset: 1.0 };
        ObstacleSection {
            search: ObstacleSearch::default(),
            inputs: vec![
                f(0, Parity::Re, 0.0),
                f(1, Parity::Re, 1.0),
                f(1, Parity::Re, -1.0),
                f(1, Parity::Im, 1.0),
                f(1, Parity::Im, -1.0),
                f(2, Parity::Re, 1.0),
                f(2, Parity::Im, 1.0),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityTarget {
    /// A coefficient preset sampled at the nodes.
    Preset { preset: CoefficientPreset },
    /// `∇uᵢ·∇uⱼ` of two basis members, a target inside the span.
    Product { i: usize, j: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    /// Inaccessible arc `Γ̃` where basis functions vanish; none for `Γ̃ = ∅`.
    pub gamma_tilde: Option<BoundaryArc>,
    pub target: DensityTarget,
    pub n_list: Vec<usize>,
    /// Frequency vectors `ξ` of the corrected exponentials mixed into the basis.
    pub cgo_xi: Vec<[f64; 2]>,
    pub cgo_h: f64,
    pub gram_threshold: f64,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            gamma_tilde: None,
            target: DensityTarget::Preset { preset: CoefficientPreset::Constant { value: 1.0 } },
            n_list: vec![2, 4, 6, 8, 10, 12],
            cgo_xi: Vec::new(),
            cgo_h: 1.0,
            gram_threshold: 1e12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub rng_seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Reuse Dirichlet-to-Neumann evaluations stored under `<output_dir>/cache`.
    #[serde(default = "yes")]
    pub cache: bool,
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub newton: NewtonOptions,
    pub linear: Option<LinearSolveOptions>,
    /// Unset means [`EpsStencil::for_order`].
    pub stencil: Option<EpsStencil>,
    #[serde(default)]
    pub reconstruction: ReconstructionOptions,
    #[serde(default)]
    pub bank: BankSection,
    #[serde(default)]
    pub forward: ForwardSection,
    #[serde(default)]
    pub dtn_bank: InputsSection,
    #[serde(default)]
    pub linearize: InputsSection,
    #[serde(default)]
    pub recover_q: RecoverQSection,
    #[serde(default)]
    pub recover_v: RecoverVSection,
    #[serde(default)]
    pub obstacle: ObstacleSection,
    #[serde(default)]
    pub density: DensitySection,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Defaults for an experiment run without a config file.
    /// The recovery experiments get nonzero coefficients so that a bare
    /// invocation has something to recover.
    pub fn for_experiment(experiment: Experiment) -> Self {
        let mut coefficients = CoefficientSection::default();
        if matches!(experiment, Experiment::RecoverQ | Experiment::FullPipeline) {
            coefficients.q = CoefficientPreset::GaussianBump { amplitude: 1.0, center: [0.0, 0.0], width: 0.4 };
        }
        if matches!(experiment, Experiment::RecoverV | Experiment::FullPipeline) {
            coefficients.v3 = Some(CoefficientPreset::Affine { c0: 1.0, cx: 1.0, cy: 0.0 });
        }
        ExperimentConfig {
            experiment,
            rng_seed: 0,
            output_dir: None,
            cache: true,
            domain: None,
            coefficients,
            newton: NewtonOptions::default(),
            linear: None,
            stencil: None,
            reconstruction: ReconstructionOptions::default(),
            bank: BankSection::default(),
            forward: ForwardSection::default(),
            dtn_bank: InputsSection::default(),
            linearize: InputsSection::default(),
            recover_q: RecoverQSection::default(),
            recover_v: RecoverVSection::default(),
            obstacle: ObstacleSection::default(),
            density: DensitySection::default(),
        }
    }

    pub fn stencil(&self, order: usize) -> EpsStencil {
        self.stencil.unwrap_or_else(|| EpsStencil::for_order(order))
    }

    pub fn domain_config(&self) -> DomainConfig {
        self.domain.clone().unwrap_or_else(|| DomainConfig::disk(64))
    }

    /// Checks that cannot be expressed in the serde schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |key: &str, r: semilinear_inverse::Result<()>| {
            r.map_err(|e| ConfigError::key(key, e.to_string().trim_start_matches("invalid configuration: ").to_string()))
        };
        check("newton", self.newton.validate())?;
        if let Some(l) = &self.linear {
            check("linear", l.validate())?;
        }
        if let Some(st) = &self.stencil {
            check("stencil", st.validate(self.newton.delta_data))?;
        }
        if !(3..=8).contains(&self.coefficients.k_trunc) {
            return Err(ConfigError::key("coefficients.k_trunc", "must lie in 3..=8"));
        }
        for (k, p, f) in self.coefficients.v_entries() {
            if p.is_some() && f.is_some() {
                return Err(ConfigError::key(format!("coefficients.v{k}_file"), format!("conflicts with coefficients.v{k}")));
            }
            if (p.is_some() || f.is_some()) && k > self.coefficients.k_trunc {
                return Err(ConfigError::key(format!("coefficients.v{k}"), "order exceeds k_trunc"));
            }
        }
        if self.reconstruction.rng_seed != 0 && self.reconstruction.rng_seed != self.rng_seed {
            return Err(ConfigError::key(
                "reconstruction.rng_seed",
                "set the top-level rng_seed instead; it seeds every random choice",
            ));
        }
        if !(3..=5).contains(&self.recover_v.order) || self.recover_v.order > self.coefficients.k_trunc {
            return Err(ConfigError::key("recover_v.order", "must lie in 3..=5 and not exceed k_trunc"));
        }
        if self.density.n_list.is_empty() || self.density.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::key("density.n_list", "must be non-empty and strictly increasing"));
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses a config, reporting the offending key path and line on failure.
pub fn parse_config(text: &str, file: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    parse_toml(text, file)
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, file: Option<&Path>) -> Result<T, ConfigError> {
    let located = |key: String, message: String, span: Option<std::ops::Range<usize>>| ConfigError {
        file: file.map(Path::to_path_buf),
        line: span.map(|s| line_of(text, s.start)),
        key,
        message,
    };
    let de = toml::de::Deserializer::parse(text).map_err(|e| located(String::new(), e.message().to_string(), e.span()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let key = if path == "." { String::new() } else { path };
        let mut msg = inner.message().to_string();
        // make sure the unknown field itself is part of the reported path
        let key = match msg.strip_prefix("unknown field `").and_then(|r| r.split_once('`')) {
            Some((field, _)) => {
                let k = if key.is_empty() {
                    field.to_string()
                } else if key == field || key.ends_with(&format!(".{field}")) {
                    key
                } else {
                    format!("{key}.{field}")
                };
                msg = format!("unknown key `{field}`");
                k
            }
            None => key,
        };
        located(key, msg, inner.span())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: Some(path.to_path_buf()),
        line: None,
        key: String::new(),
        message: e.to_string(),
    })?;
    parse_config(&text, Some(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config("experiment = \"forward\"\n", None).unwrap();
        assert_eq!(c.experiment, Experiment::Forward);
        assert_eq!(c.domain_config(), DomainConfig::disk(64));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let text = "experiment = \"recover_q\"\n\n[reconstruction]\ntikhonov_lamda = 1e-6\n";
        let e = parse_config(text, None).unwrap_err();
        assert_eq!(e.key, "reconstruction.tikhonov_lamda");
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn wrong_type_names_key() {
        let e = parse_config("experiment = \"forward\"\n[domain]\nshape = \"unit_disk\"\nn_cells_per_side = \"x\"\ngamma1_arc = [0.0, 1.0]\ngamma2_arc = [0.0, 1.0]\n", None).unwrap_err();
        assert_eq!(e.key, "domain.n_cells_per_side");
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::for_experiment(Experiment::FullPipeline);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(parse_config(&text, None).unwrap(), c);
    }
}
