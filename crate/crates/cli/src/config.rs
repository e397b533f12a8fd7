//! Scenario configuration: a single strict JSON document per run.
//!
//! The schema is versioned through a required `$schema_version` field and
//! unknown fields are rejected everywhere, so a typo fails loudly instead of
//! silently falling back to a default. Validation is aggregated: every
//! problem in the file is reported in one pass, not just the first.
//!
//! The config hash embedded in every artifact is the hash of the parsed
//! document's canonical serialization, which makes load -> serialize -> load
//! a fixed point: cosmetic whitespace differences do not change the hash,
//! while any semantic change does.

use std::fmt;
use std::path::{Path, PathBuf};

use metasim_core::channel::ChannelModel;
use metasim_core::framework::ArchitectureSpec;
use metasim_core::optimize::{ObjectiveKind, OptimizerConfig};
use serde::{Deserialize, Serialize};

/// Schema generation this binary understands.
pub const SCHEMA_VERSION: u32 = 1;

/// Default element spacing in wavelengths when a preset omits it.
pub const DEFAULT_SPACING_WL: f64 = 0.5;

/// Default gap between diffractive layers, in wavelengths.
pub const DEFAULT_LAYER_GAP_WL: f64 = 5.0;

/// Errors surfaced by the command-line layer. Every variant maps to a
/// stable machine-readable code via [`CliError::code`]; the binary prints
/// them as a JSON object and exits nonzero.
#[derive(Debug)]
pub enum CliError {
    /// The file is not syntactically valid JSON (or is structurally wrong
    /// in a way serde catches before field validation runs).
    Parse {
        line: usize,
        column: usize,
        detail: String,
    },
    /// The document parsed but one or more fields are unusable. Every
    /// issue found is listed, each prefixed with its field path.
    Validation { issues: Vec<String> },
    /// A plot-data emission received rows of more than one kind.
    HeterogeneousResults { expected: String, found: String },
    /// Filesystem trouble reading the config or writing artifacts.
    Io { path: PathBuf, detail: String },
    /// An error propagated from the simulation library.
    Core(metasim_core::Error),
}

impl CliError {
    /// Stable machine-readable code, one per failure class. Library errors
    /// pass their own codes through unchanged.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Validation { .. } => "validation_error",
            CliError::HeterogeneousResults { .. } => "heterogeneous_results",
            CliError::Io { .. } => "io_error",
            CliError::Core(e) => e.code(),
        }
    }

    /// The `{"error": {"code", "message"}}` body the binary prints on any
    /// failure.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            code: &'a str,
            message: String,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Wrapper {
            error: Body {
                code: self.code(),
                message: self.to_string(),
            },
        })
        .expect("error body serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse {
                line,
                column,
                detail,
            } => {
                write!(f, "config parse error at line {line}, column {column}: {detail}")
            }
            CliError::Validation { issues } => {
                write!(f, "invalid config ({} issue(s)): {}", issues.len(), issues.join("; "))
            }
            CliError::HeterogeneousResults { expected, found } => {
                write!(f, "plot data expected only {expected} rows but found {found}")
            }
            CliError::Io { path, detail } => {
                write!(f, "io error on {}: {detail}", path.display())
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<metasim_core::Error> for CliError {
    fn from(e: metasim_core::Error) -> Self {
        CliError::Core(e)
    }
}

/// Architecture presets. Each preset expands to a full
/// [`ArchitectureSpec`]; `custom` embeds one verbatim for layouts the
/// presets cannot express.
///
/// Required numeric fields are optional at the parse stage so that several
/// missing fields surface together as one aggregated validation error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchitectureConfig {
    /// Single-layer phase-only surface fed by one carrier chain.
    Ris {
        elements: Option<usize>,
        spacing_wl: Option<f64>,
        carrier_frequency: Option<f64>,
        /// Accepted so that an over-provisioned file fails validation with
        /// the architecture rule rather than a parse error.
        rf_chains: Option<usize>,
        streams: Option<usize>,
    },
    /// Stacked diffractive layers over a small active antenna array.
    Sim {
        layers: Option<usize>,
        elements_per_layer: Option<usize>,
        rf_chains: Option<usize>,
        streams: Option<usize>,
        spacing_wl: Option<f64>,
        layer_gap_wl: Option<f64>,
        carrier_frequency: Option<f64>,
    },
    /// Waveguide-fed surface with Lorentzian element responses.
    Dma {
        waveguides: Option<usize>,
        elements_per_waveguide: Option<usize>,
        streams: Option<usize>,
        spacing_wl: Option<f64>,
        carrier_frequency: Option<f64>,
    },
    /// Waveguide-fed surface with amplitude-only responses in [0, 1].
    Rhs {
        waveguides: Option<usize>,
        elements_per_waveguide: Option<usize>,
        streams: Option<usize>,
        spacing_wl: Option<f64>,
        carrier_frequency: Option<f64>,
    },
    /// A complete architecture description, given inline.
    Custom { spec: Box<ArchitectureSpec> },
}

/// Stochastic channel model selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModelConfig {
    Los,
    Rayleigh,
    Rician { k_factor: f64 },
}

impl ChannelModelConfig {
    pub fn to_core(self) -> ChannelModel {
        match self {
            ChannelModelConfig::Los => ChannelModel::Los,
            ChannelModelConfig::Rayleigh => ChannelModel::Rayleigh,
            ChannelModelConfig::Rician { k_factor } => ChannelModel::Rician { k_factor },
        }
    }
}

/// A far-field sensing direction, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetDirection {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Propagation scenario: user positions in meters, sensing directions,
/// and the receiver noise power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub model: Option<ChannelModelConfig>,
    #[serde(default)]
    pub users: Vec<[f64; 3]>,
    #[serde(default)]
    pub targets: Vec<TargetDirection>,
    pub noise_power: Option<f64>,
}

/// Pilot-based channel estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    /// Pilot slots for a single estimation run.
    pub slots: Option<usize>,
    /// When nonempty, the estimate command runs once per entry and the
    /// error-versus-slots table is emitted.
    #[serde(default)]
    pub slots_list: Vec<usize>,
    /// Noise power at the sensing receiver; defaults to the channel noise.
    pub noise_power: Option<f64>,
    /// Ridge weight for the regularized solver; 0 keeps plain least squares.
    #[serde(default)]
    pub ridge: f64,
}

/// Time-modulation design settings for the waveform command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    /// Modulation period in slots; at least 2.
    pub slots: Option<usize>,
    /// Weight on the sensing harmonic in [0, 1]; 0.5 when omitted.
    pub sense_weight: Option<f64>,
    /// Requested carrier magnitude per element; derived from the weight
    /// when omitted.
    pub comm_magnitude: Option<f64>,
    /// Sensing beam direction; falls back to the first channel target.
    pub sense_azimuth_deg: Option<f64>,
    pub sense_elevation_deg: Option<f64>,
    /// Per-element carrier phases in radians; all zeros when omitted.
    pub comm_phases: Option<Vec<f64>>,
}

/// Axes for the elements/layers sweep command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub elements_per_layer: Vec<usize>,
    #[serde(default)]
    pub layers: Vec<usize>,
}

/// Weight grid for the dual-function trade-off sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoConfig {
    #[serde(default)]
    pub omegas: Vec<f64>,
}

/// One experiment description. Sections beyond `architecture` and
/// `channel` are optional; each command checks for the section it needs
/// and falls back to documented defaults elsewhere (strict mode refuses
/// those fallbacks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "$schema_version")]
    pub schema_version: u32,
    pub architecture: ArchitectureConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(default)]
    pub estimation: Option<EstimationConfig>,
    #[serde(default)]
    pub waveform: Option<WaveformConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub pareto: Option<ParetoConfig>,
    /// Master seeds; sweeps iterate all of them, single runs use the first.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Read and fully validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    parse_scenario(&text)
}

/// Parse a scenario document from memory; same contract as
/// [`load_scenario`].
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        detail: e.to_string(),
    })?;
    let issues = validate_scenario(&cfg);
    if !issues.is_empty() {
        return Err(CliError::Validation { issues });
    }
    Ok(cfg)
}

/// Hash of the canonical serialized form of a parsed config. Two files
/// that parse to the same document share a hash regardless of formatting.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    metasim_core::hash::hash_bytes(&canonical)
}

/// Collect every problem in the document. Empty means usable.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Vec<String> {
    let mut issues = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        issues.push(format!(
            "$schema_version: expected {SCHEMA_VERSION}, got {}",
            cfg.schema_version
        ));
    }
    match build_architecture(&cfg.architecture) {
        Ok(_) => {}
        Err(CliError::Validation { issues: arch }) => issues.extend(arch),
        Err(other) => issues.push(other.to_string()),
    }
    validate_channel(&cfg.channel, &mut issues);
    if let Some(opt) = &cfg.optimizer {
        if let Err(e) = opt.validate() {
            issues.push(format!("optimizer: {e}"));
        }
        if matches!(opt.objective, ObjectiveKind::WeightedIsac { .. } | ObjectiveKind::BeamPatternGain)
            && cfg.channel.targets.is_empty()
        {
            issues.push(
                "channel.targets: the selected objective needs at least one sensing target".into(),
            );
        }
    }
    if let Some(est) = &cfg.estimation {
        if est.slots == Some(0) {
            issues.push("estimation.slots: a pilot schedule needs at least one slot".into());
        }
        if est.slots_list.iter().any(|&t| t == 0) {
            issues.push("estimation.slots_list: every entry must be at least one slot".into());
        }
        if let Some(p) = est.noise_power {
            if !(p >= 0.0) || !p.is_finite() {
                issues.push(format!(
                    "estimation.noise_power: must be finite and nonnegative, got {p}"
                ));
            }
        }
        if !(est.ridge >= 0.0) {
            issues.push(format!("estimation.ridge: must be nonnegative, got {}", est.ridge));
        }
    }
    if let Some(wf) = &cfg.waveform {
        if let Some(p) = wf.slots {
            if p < 2 {
                issues.push(format!(
                    "waveform.slots: separating two harmonics needs at least 2 slots, got {p}"
                ));
            }
        }
        if let Some(w) = wf.sense_weight {
            if !(0.0..=1.0).contains(&w) {
                issues.push(format!("waveform.sense_weight: must lie in [0, 1], got {w}"));
            }
        }
        if let Some(m) = wf.comm_magnitude {
            if !(0.0..=1.0).contains(&m) {
                issues.push(format!(
                    "waveform.comm_magnitude: a unit-modulus element caps the carrier at 1, got {m}"
                ));
            }
        }
    }
    if let Some(par) = &cfg.pareto {
        if par.omegas.iter().any(|w| !(0.0..=1.0).contains(w)) {
            issues.push("pareto.omegas: every weight must lie in [0, 1]".into());
        }
        if par.omegas.windows(2).any(|p| p[1] < p[0]) {
            issues.push("pareto.omegas: the weight grid must be sorted ascending".into());
        }
    }
    issues
}

fn validate_channel(ch: &ChannelConfig, issues: &mut Vec<String>) {
    if ch.model.is_none() {
        issues.push("channel.model: required field is missing".into());
    }
    if let Some(ChannelModelConfig::Rician { k_factor }) = ch.model {
        if !(k_factor >= 0.0) || !k_factor.is_finite() {
            issues.push(format!(
                "channel.model.k_factor: must be nonnegative and finite, got {k_factor}"
            ));
        }
    }
    match ch.noise_power {
        None => issues.push("channel.noise_power: required field is missing".into()),
        Some(p) if !(p > 0.0) || !p.is_finite() => {
            issues.push(format!("channel.noise_power: must be positive, got {p}"));
        }
        _ => {}
    }
    for (i, t) in ch.targets.iter().enumerate() {
        if !t.azimuth_deg.is_finite() || !t.elevation_deg.is_finite() {
            issues.push(format!("channel.targets[{i}]: angles must be finite"));
        }
    }
    for (i, u) in ch.users.iter().enumerate() {
        if u.iter().any(|c| !c.is_finite()) {
            issues.push(format!("channel.users[{i}]: coordinates must be finite"));
        }
    }
}

/// Expand an architecture preset into a full spec, reporting every
/// missing field and every architecture-rule violation together.
pub fn build_architecture(arch: &ArchitectureConfig) -> Result<ArchitectureSpec, CliError> {
    let mut issues = Vec::new();
    let spec = match arch {
        ArchitectureConfig::Ris {
            elements,
            spacing_wl,
            carrier_frequency,
            rf_chains,
            streams,
        } => {
            let n = require(&mut issues, "architecture.elements", *elements);
            let f = require(&mut issues, "architecture.carrier_frequency", *carrier_frequency);
            check_positive(&mut issues, "architecture.carrier_frequency", *carrier_frequency);
            check_positive(&mut issues, "architecture.spacing_wl", *spacing_wl);
            if issues.is_empty() {
                let mut spec =
                    ArchitectureSpec::ris(n.unwrap(), spacing_wl.unwrap_or(DEFAULT_SPACING_WL), f.unwrap());
                // Carried through so the architecture rules, not the
                // parser, reject a multi-chain phase-only surface.
                spec.num_rf_chains = rf_chains.unwrap_or(1);
                spec.num_streams = streams.unwrap_or(1);
                Some(spec)
            } else {
                None
            }
        }
        ArchitectureConfig::Sim {
            layers,
            elements_per_layer,
            rf_chains,
            streams,
            spacing_wl,
            layer_gap_wl,
            carrier_frequency,
        } => {
            let l = require(&mut issues, "architecture.layers", *layers);
            let n = require(&mut issues, "architecture.elements_per_layer", *elements_per_layer);
            let k = require(&mut issues, "architecture.rf_chains", *rf_chains);
            let f = require(&mut issues, "architecture.carrier_frequency", *carrier_frequency);
            check_positive(&mut issues, "architecture.carrier_frequency", *carrier_frequency);
            check_positive(&mut issues, "architecture.spacing_wl", *spacing_wl);
            check_positive(&mut issues, "architecture.layer_gap_wl", *layer_gap_wl);
            if issues.is_empty() {
                let f = f.unwrap();
                let lambda = metasim_core::SPEED_OF_LIGHT / f;
                Some(ArchitectureSpec::sim(
                    l.unwrap(),
                    n.unwrap(),
                    k.unwrap(),
                    streams.unwrap_or_else(|| k.unwrap()),
                    spacing_wl.unwrap_or(DEFAULT_SPACING_WL),
                    layer_gap_wl.unwrap_or(DEFAULT_LAYER_GAP_WL) * lambda,
                    f,
                ))
            } else {
                None
            }
        }
        ArchitectureConfig::Dma {
            waveguides,
            elements_per_waveguide,
            streams,
            spacing_wl,
            carrier_frequency,
        }
        | ArchitectureConfig::Rhs {
            waveguides,
            elements_per_waveguide,
            streams,
            spacing_wl,
            carrier_frequency,
        } => {
            let g = require(&mut issues, "architecture.waveguides", *waveguides);
            let m = require(
                &mut issues,
                "architecture.elements_per_waveguide",
                *elements_per_waveguide,
            );
            let f = require(&mut issues, "architecture.carrier_frequency", *carrier_frequency);
            check_positive(&mut issues, "architecture.carrier_frequency", *carrier_frequency);
            check_positive(&mut issues, "architecture.spacing_wl", *spacing_wl);
            if issues.is_empty() {
                let (g, m, f) = (g.unwrap(), m.unwrap(), f.unwrap());
                let s = streams.unwrap_or(g);
                let spacing = spacing_wl.unwrap_or(DEFAULT_SPACING_WL);
                Some(match arch {
                    ArchitectureConfig::Dma { .. } => ArchitectureSpec::dma(g, m, s, spacing, f),
                    _ => ArchitectureSpec::rhs(g, m, s, spacing, f),
                })
            } else {
                None
            }
        }
        ArchitectureConfig::Custom { spec } => Some(spec.as_ref().clone()),
    };
    if let Some(spec) = spec {
        let report = spec.validate();
        for v in &report.violations {
            issues.push(format!("architecture.{}: {}", v.field_path, v.message));
        }
        if issues.is_empty() {
            return Ok(spec);
        }
    }
    Err(CliError::Validation { issues })
}

fn require<T: Copy>(issues: &mut Vec<String>, path: &str, value: Option<T>) -> Option<T> {
    if value.is_none() {
        issues.push(format!("{path}: required field is missing"));
    }
    value
}

fn check_positive(issues: &mut Vec<String>, path: &str, value: Option<f64>) {
    if let Some(v) = value {
        if !(v > 0.0) || !v.is_finite() {
            issues.push(format!("{path}: must be positive and finite, got {v}"));
        }
    }
}
