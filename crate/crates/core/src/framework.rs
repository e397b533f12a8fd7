//! Transceiver data model and effective-matrix composition.
//!
//! An architecture is three slices chained together:
//!
//! 1. a baseband matrix `V` (K RF chains by S streams),
//! 2. per-layer feeding matrices `T_l` describing how energy reaches the
//!    elements of layer `l` (from the RF chains for the first layer, from the
//!    previous layer otherwise),
//! 3. per-layer diagonal reconfiguration matrices `Q_l` holding the tunable
//!    element coefficients, each constrained to its layer's family.
//!
//! [`build_effective_matrix`] realizes `E = Q_L T_L ... Q_1 T_1 V`, the map
//! from stream symbols to the radiating aperture. Layers are indexed from 0
//! in code; layer `L-1` is the radiating layer.

use crate::error::{Error, Result};
use crate::optimize::projections;
use crate::{hash, CMatrix};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Drift tolerated on stored coefficients at composition time. Anything
/// further from its constraint family is a hard error.
pub const BUILD_CONSTRAINT_TOL: f64 = 1e-9;

/// Supported transceiver families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    /// Passive phase-only surface fed by a single carrier chain.
    #[serde(rename = "RIS")]
    Ris,
    /// Stack of transmissive layers coupled by free-space diffraction.
    #[serde(rename = "SIM")]
    Sim,
    /// Waveguide-fed surface with Lorentzian-coupled element responses.
    #[serde(rename = "DMA")]
    Dma,
    /// Waveguide-fed surface with amplitude-only element control.
    #[serde(rename = "RHS")]
    Rhs,
    /// No kind-specific rules; all structure comes from the per-layer fields.
    Custom,
}

/// How energy reaches a layer's elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedingTopology {
    /// Every source couples to every element through a propagation kernel.
    DenseDiffraction,
    /// One block per RF chain; an element hears only its own waveguide.
    BlockDiagonalWaveguide,
    /// Single-chain broadcast: one attenuation factor for the whole aperture.
    ScalarCarrier,
}

/// Feasible set of one layer's element coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ConstraintFamily {
    /// |q| = 1: phase-only control.
    UnitModulus,
    /// q real in [lo, hi]: amplitude-only control over a continuous range.
    AmplitudeRange { lo: f64, hi: f64 },
    /// q real drawn from a finite level set.
    AmplitudeSet { levels: Vec<f64> },
    /// q = (j + e^{j psi})/2: amplitude and phase coupled on the circle
    /// centered at j/2 with radius 1/2.
    Lorentzian,
}

impl ConstraintFamily {
    /// Euclidean distance from `q` to the feasible set.
    pub fn distance(&self, q: Complex64) -> f64 {
        match self {
            ConstraintFamily::UnitModulus => (q.norm() - 1.0).abs(),
            ConstraintFamily::AmplitudeRange { lo, hi } => {
                let re_excess = if q.re < *lo {
                    lo - q.re
                } else if q.re > *hi {
                    q.re - hi
                } else {
                    0.0
                };
                (q.im * q.im + re_excess * re_excess).sqrt()
            }
            ConstraintFamily::AmplitudeSet { levels } => levels
                .iter()
                .map(|lvl| (q - Complex64::new(*lvl, 0.0)).norm())
                .fold(f64::INFINITY, f64::min),
            ConstraintFamily::Lorentzian => {
                ((q - Complex64::new(0.0, 0.5)).norm() - 0.5).abs()
            }
        }
    }

    /// Coefficient realized from the family's scalar parameter: phase for
    /// UnitModulus, the circle angle psi for Lorentzian, amplitude otherwise.
    pub fn realize(&self, param: f64) -> Complex64 {
        match self {
            ConstraintFamily::UnitModulus => Complex64::from_polar(1.0, param),
            ConstraintFamily::Lorentzian => {
                (Complex64::new(0.0, 1.0) + Complex64::from_polar(1.0, param)) * 0.5
            }
            // Amplitude families read the parameter as a magnitude: the
            // nearest feasible value to |param| (documented convention).
            ConstraintFamily::AmplitudeRange { lo, hi } => {
                Complex64::new(param.abs().clamp(*lo, *hi), 0.0)
            }
            ConstraintFamily::AmplitudeSet { levels } => {
                Complex64::new(projections::nearest_level(param.abs(), levels), 0.0)
            }
        }
    }

    /// Scalar parameter recovered from a feasible coefficient; inverse of
    /// [`ConstraintFamily::realize`] up to angle wrap-around.
    pub fn parameter(&self, q: Complex64) -> f64 {
        match self {
            ConstraintFamily::UnitModulus => q.arg(),
            ConstraintFamily::Lorentzian => (q - Complex64::new(0.0, 0.5)).arg(),
            ConstraintFamily::AmplitudeRange { .. } | ConstraintFamily::AmplitudeSet { .. } => q.re,
        }
    }

    /// Interior parameter bounds for amplitude families; None for angles.
    pub fn parameter_bounds(&self) -> Option<(f64, f64)> {
        match self {
            ConstraintFamily::AmplitudeRange { lo, hi } => Some((*lo, *hi)),
            ConstraintFamily::AmplitudeSet { levels } => {
                let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
            _ => None,
        }
    }
}

/// Element layout of one layer. Positions are meters; the element normal is
/// +z for every layer (layers are planes parallel to xy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub positions: Vec<[f64; 3]>,
    /// Receiving element area in m^2, used by the diffraction kernel.
    pub element_area: f64,
    /// Explicit element-to-waveguide assignment. `None` uses contiguous
    /// index chunks, one chunk per RF chain. An element mapped to `None`
    /// inside an explicit assignment is an error at feed-building time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveguide_of: Option<Vec<Option<usize>>>,
}

/// Full array geometry: per-layer element layouts plus the feed points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub layers: Vec<LayerGeometry>,
    /// Positions of the K RF-chain sources (meters). Used by diffraction
    /// feeds into the first layer; informational for other topologies.
    pub feed_positions: Vec<[f64; 3]>,
    /// Gap between consecutive layer planes (and feed plane to layer 0), m.
    pub inter_layer_spacing: f64,
    /// Element pitch in wavelengths.
    pub element_spacing_wl: f64,
}

/// Declarative description of a transceiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub elements_per_layer: Vec<usize>,
    pub num_rf_chains: usize,
    pub num_streams: usize,
    /// Per-layer feeding topology, same length as `elements_per_layer`.
    pub feeding: Vec<FeedingTopology>,
    /// Per-layer constraint family, same length as `elements_per_layer`.
    pub constraints: Vec<ConstraintFamily>,
    pub geometry: ArrayGeometry,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
}

/// One failed architecture rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field_path: String,
    pub message: String,
}

/// Outcome of [`ArchitectureSpec::validate`]: empty means the architecture is sound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field_path: path.to_string(),
            message: message.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "{}: {}", v.field_path, v.message)?;
        }
        Ok(())
    }
}

fn square_grid(n: usize, pitch: f64, z: f64) -> Vec<[f64; 3]> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let x0 = -0.5 * (cols.saturating_sub(1) as f64) * pitch;
    let y0 = -0.5 * (rows.saturating_sub(1) as f64) * pitch;
    (0..n)
        .map(|i| {
            let r = i / cols;
            let c = i % cols;
            [x0 + c as f64 * pitch, y0 + r as f64 * pitch, z]
        })
        .collect()
}

fn row_grid(rows: usize, per_row: usize, pitch: f64) -> Vec<[f64; 3]> {
    let x0 = -0.5 * (per_row.saturating_sub(1) as f64) * pitch;
    let y0 = -0.5 * (rows.saturating_sub(1) as f64) * pitch;
    let mut out = Vec::with_capacity(rows * per_row);
    for r in 0..rows {
        for c in 0..per_row {
            out.push([x0 + c as f64 * pitch, y0 + r as f64 * pitch, 0.0]);
        }
    }
    out
}

impl ArchitectureSpec {
    pub fn num_layers(&self) -> usize {
        self.elements_per_layer.len()
    }

    /// Number of elements on the radiating (last) layer.
    pub fn radiating_elements(&self) -> usize {
        *self.elements_per_layer.last().unwrap_or(&0)
    }

    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Positions of the radiating layer's elements.
    pub fn radiating_positions(&self) -> &[[f64; 3]] {
        &self.geometry.layers[self.num_layers() - 1].positions
    }

    /// Single-layer carrier-fed phase-only surface with `n` elements on a
    /// centered square grid, `spacing_wl` wavelengths apart.
    pub fn ris(n: usize, spacing_wl: f64, carrier_frequency: f64) -> Self {
        let lambda = crate::SPEED_OF_LIGHT / carrier_frequency;
        let pitch = spacing_wl * lambda;
        let standoff = 10.0 * lambda;
        ArchitectureSpec {
            kind: ArchKind::Ris,
            elements_per_layer: vec![n],
            num_rf_chains: 1,
            num_streams: 1,
            feeding: vec![FeedingTopology::ScalarCarrier],
            constraints: vec![ConstraintFamily::UnitModulus],
            geometry: ArrayGeometry {
                layers: vec![LayerGeometry {
                    positions: square_grid(n, pitch, 0.0),
                    element_area: pitch * pitch,
                    waveguide_of: None,
                }],
                feed_positions: vec![[0.0, 0.0, -standoff]],
                inter_layer_spacing: standoff,
                element_spacing_wl: spacing_wl,
            },
            carrier_frequency,
        }
    }

    /// Multi-layer diffractive stack: `num_layers` layers of `n_per_layer`
    /// elements with a gap of `layer_gap` meters between planes. The K feed
    /// antennas sit on a centered square grid one gap below the first layer.
    pub fn sim(
        num_layers: usize,
        n_per_layer: usize,
        num_rf_chains: usize,
        num_streams: usize,
        spacing_wl: f64,
        layer_gap: f64,
        carrier_frequency: f64,
    ) -> Self {
        let lambda = crate::SPEED_OF_LIGHT / carrier_frequency;
        let pitch = spacing_wl * lambda;
        let layers = (0..num_layers)
            .map(|l| LayerGeometry {
                positions: square_grid(n_per_layer, pitch, (l + 1) as f64 * layer_gap),
                element_area: pitch * pitch,
                waveguide_of: None,
            })
            .collect();
        ArchitectureSpec {
            kind: ArchKind::Sim,
            elements_per_layer: vec![n_per_layer; num_layers],
            num_rf_chains,
            num_streams,
            feeding: vec![FeedingTopology::DenseDiffraction; num_layers],
            constraints: vec![ConstraintFamily::UnitModulus; num_layers],
            geometry: ArrayGeometry {
                layers,
                feed_positions: square_grid(num_rf_chains, pitch, 0.0),
                inter_layer_spacing: layer_gap,
                element_spacing_wl: spacing_wl,
            },
            carrier_frequency,
        }
    }

    /// Waveguide-fed Lorentzian surface: `num_waveguides` parallel guides of
    /// `elements_per_waveguide` elements each, one RF chain per guide.
    pub fn dma(
        num_waveguides: usize,
        elements_per_waveguide: usize,
        num_streams: usize,
        spacing_wl: f64,
        carrier_frequency: f64,
    ) -> Self {
        Self::waveguide_surface(
            ArchKind::Dma,
            ConstraintFamily::Lorentzian,
            num_waveguides,
            elements_per_waveguide,
            num_streams,
            spacing_wl,
            carrier_frequency,
        )
    }

    /// Waveguide-fed amplitude-only surface with responses in [0, 1].
    pub fn rhs(
        num_waveguides: usize,
        elements_per_waveguide: usize,
        num_streams: usize,
        spacing_wl: f64,
        carrier_frequency: f64,
    ) -> Self {
        Self::waveguide_surface(
            ArchKind::Rhs,
            ConstraintFamily::AmplitudeRange { lo: 0.0, hi: 1.0 },
            num_waveguides,
            elements_per_waveguide,
            num_streams,
            spacing_wl,
            carrier_frequency,
        )
    }

    fn waveguide_surface(
        kind: ArchKind,
        family: ConstraintFamily,
        num_waveguides: usize,
        elements_per_waveguide: usize,
        num_streams: usize,
        spacing_wl: f64,
        carrier_frequency: f64,
    ) -> Self {
        let lambda = crate::SPEED_OF_LIGHT / carrier_frequency;
        let pitch = spacing_wl * lambda;
        let n = num_waveguides * elements_per_waveguide;
        let positions = row_grid(num_waveguides, elements_per_waveguide, pitch);
        // Feed at the first element of each guide.
        let feed_positions = (0..num_waveguides)
            .map(|k| positions[k * elements_per_waveguide])
            .collect();
        ArchitectureSpec {
            kind,
            elements_per_layer: vec![n],
            num_rf_chains: num_waveguides,
            num_streams,
            feeding: vec![FeedingTopology::BlockDiagonalWaveguide],
            constraints: vec![family],
            geometry: ArrayGeometry {
                layers: vec![LayerGeometry {
                    positions,
                    element_area: pitch * pitch,
                    waveguide_of: None,
                }],
                feed_positions,
                inter_layer_spacing: pitch,
                element_spacing_wl: spacing_wl,
            },
            carrier_frequency,
        }
    }

    /// Check every architecture rule; violations are data, not faults.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let l = self.num_layers();

        if l == 0 {
            report.push("elements_per_layer", "architecture must have at least one layer");
            return report;
        }
        for (i, n) in self.elements_per_layer.iter().enumerate() {
            if *n == 0 {
                report.push(
                    &format!("elements_per_layer[{i}]"),
                    "layer must have at least one element",
                );
            }
        }
        if self.num_rf_chains == 0 {
            report.push("num_rf_chains", "at least one RF chain is required");
        }
        if self.num_streams == 0 {
            report.push("num_streams", "at least one stream is required");
        }
        if self.num_streams > self.num_rf_chains {
            report.push(
                "num_streams",
                format!(
                    "stream count {} exceeds RF chain count {}",
                    self.num_streams, self.num_rf_chains
                ),
            );
        }
        if self.feeding.len() != l {
            report.push("feeding", format!("expected {} entries, got {}", l, self.feeding.len()));
        }
        if self.constraints.len() != l {
            report.push(
                "constraints",
                format!("expected {} entries, got {}", l, self.constraints.len()),
            );
        }
        if self.geometry.layers.len() != l {
            report.push(
                "geometry.layers",
                format!("expected {} entries, got {}", l, self.geometry.layers.len()),
            );
        }
        for (i, layer) in self.geometry.layers.iter().enumerate() {
            if let Some(n) = self.elements_per_layer.get(i) {
                if self.geometry.layers.len() == l && layer.positions.len() != *n {
                    report.push(
                        &format!("geometry.layers[{i}].positions"),
                        format!("expected {} positions, got {}", n, layer.positions.len()),
                    );
                }
            }
            if !(layer.element_area > 0.0) {
                report.push(
                    &format!("geometry.layers[{i}].element_area"),
                    "element area must be positive",
                );
            }
            if let Some(assign) = &layer.waveguide_of {
                if assign.len() != layer.positions.len() {
                    report.push(
                        &format!("geometry.layers[{i}].waveguide_of"),
                        format!(
                            "expected {} entries, got {}",
                            layer.positions.len(),
                            assign.len()
                        ),
                    );
                }
                for (e, a) in assign.iter().enumerate() {
                    if let Some(k) = a {
                        if *k >= self.num_rf_chains {
                            report.push(
                                &format!("geometry.layers[{i}].waveguide_of[{e}]"),
                                format!(
                                    "waveguide index {} out of range for {} RF chains",
                                    k, self.num_rf_chains
                                ),
                            );
                        }
                    }
                }
            }
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            report.push("carrier_frequency", "carrier frequency must be positive and finite");
        }
        if !(self.geometry.inter_layer_spacing > 0.0) {
            report.push("geometry.inter_layer_spacing", "inter-layer spacing must be positive");
        }
        if !(self.geometry.element_spacing_wl > 0.0) {
            report.push("geometry.element_spacing_wl", "element spacing must be positive");
        }

        let waveguide_fed = self
            .feeding
            .iter()
            .any(|t| *t == FeedingTopology::BlockDiagonalWaveguide);
        if waveguide_fed && self.num_rf_chains > self.elements_per_layer[0] {
            report.push(
                "num_rf_chains",
                format!(
                    "waveguide feeding needs K <= N1 ({} > {})",
                    self.num_rf_chains, self.elements_per_layer[0]
                ),
            );
        }
        if self.feeding.first() == Some(&FeedingTopology::DenseDiffraction)
            && self.geometry.feed_positions.len() != self.num_rf_chains
        {
            report.push(
                "geometry.feed_positions",
                format!(
                    "diffraction feeding needs one source position per RF chain ({} != {})",
                    self.geometry.feed_positions.len(),
                    self.num_rf_chains
                ),
            );
        }

        for (i, fam) in self.constraints.iter().enumerate() {
            match fam {
                ConstraintFamily::AmplitudeRange { lo, hi } => {
                    if !(lo <= hi) {
                        report.push(
                            &format!("constraints[{i}]"),
                            format!("amplitude range [{lo}, {hi}] is empty"),
                        );
                    }
                    if *lo < 0.0 {
                        report.push(
                            &format!("constraints[{i}]"),
                            "amplitude lower bound must be nonnegative",
                        );
                    }
                }
                ConstraintFamily::AmplitudeSet { levels } => {
                    if levels.is_empty() {
                        report.push(&format!("constraints[{i}]"), "amplitude level set is empty");
                    }
                    if levels.iter().any(|v| !v.is_finite() || *v < 0.0) {
                        report.push(
                            &format!("constraints[{i}]"),
                            "amplitude levels must be finite and nonnegative",
                        );
                    }
                }
                _ => {}
            }
        }

        match self.kind {
            ArchKind::Ris => {
                if self.num_rf_chains != 1 {
                    report.push("num_rf_chains", "RIS requires single RF chain");
                }
                if self.feeding.iter().any(|t| *t != FeedingTopology::ScalarCarrier) {
                    report.push("feeding", "RIS requires a scalar carrier feed");
                }
                if self.constraints.iter().any(|c| *c != ConstraintFamily::UnitModulus) {
                    report.push("constraints", "RIS requires unit-modulus elements");
                }
                if l != 1 {
                    report.push("elements_per_layer", "RIS is a single-surface architecture");
                }
            }
            ArchKind::Sim => {
                if self.feeding.iter().any(|t| *t != FeedingTopology::DenseDiffraction) {
                    report.push("feeding", "SIM requires dense diffraction feeding on every layer");
                }
                if self.constraints.iter().any(|c| *c != ConstraintFamily::UnitModulus) {
                    report.push("constraints", "SIM requires unit-modulus elements");
                }
            }
            ArchKind::Dma => {
                if self.constraints.iter().any(|c| *c != ConstraintFamily::Lorentzian) {
                    report.push("constraints", "DMA requires Lorentzian element responses");
                }
                if self
                    .feeding
                    .iter()
                    .any(|t| *t != FeedingTopology::BlockDiagonalWaveguide)
                {
                    report.push("feeding", "DMA requires waveguide feeding");
                }
                if l != 1 {
                    report.push("elements_per_layer", "DMA is a single-surface architecture");
                }
            }
            ArchKind::Rhs => {
                let amplitude_only = self.constraints.iter().all(|c| {
                    matches!(
                        c,
                        ConstraintFamily::AmplitudeRange { .. } | ConstraintFamily::AmplitudeSet { .. }
                    )
                });
                if !amplitude_only {
                    report.push("constraints", "RHS requires amplitude-only element control");
                }
                if self
                    .feeding
                    .iter()
                    .any(|t| *t != FeedingTopology::BlockDiagonalWaveguide)
                {
                    report.push("feeding", "RHS requires waveguide feeding");
                }
                if l != 1 {
                    report.push("elements_per_layer", "RHS is a single-surface architecture");
                }
            }
            ArchKind::Custom => {}
        }

        report
    }
}

/// Free-function form of [`ArchitectureSpec::validate`].
pub fn validate_architecture(spec: &ArchitectureSpec) -> ValidationReport {
    spec.validate()
}

/// Baseband precoding slice: K x S matrix under a total power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandProcessor {
    pub v: CMatrix,
    /// Budget on the squared Frobenius norm of `v`, watts.
    pub total_power_budget: f64,
}

impl BasebandProcessor {
    /// Degenerate single-chain case: V is the 1x1 scalar sqrt(power).
    pub fn scalar_power(power: f64) -> Self {
        BasebandProcessor {
            v: CMatrix::from_element(1, 1, Complex64::new(power.sqrt(), 0.0)),
            total_power_budget: power,
        }
    }

    /// Diagonal equal-power allocation: K x S with sqrt(power/S) on the
    /// leading diagonal (the no-digital-precoding case).
    pub fn equal_power_diag(num_rf_chains: usize, num_streams: usize, power: f64) -> Self {
        let amp = (power / num_streams as f64).sqrt();
        let v = CMatrix::from_fn(num_rf_chains, num_streams, |r, c| {
            if r == c {
                Complex64::new(amp, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        BasebandProcessor {
            v,
            total_power_budget: power,
        }
    }

    pub fn from_matrix(v: CMatrix, total_power_budget: f64) -> Self {
        BasebandProcessor {
            v,
            total_power_budget,
        }
    }

    /// Squared Frobenius norm of V (transmit power actually used).
    pub fn used_power(&self) -> f64 {
        self.v.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Budget check with a small relative slack for accumulated rounding.
    pub fn within_budget(&self) -> bool {
        self.used_power() <= self.total_power_budget * (1.0 + 1e-9) + 1e-12
    }
}

/// One layer's feeding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedingMatrix {
    /// 0-based layer this matrix feeds.
    pub layer_index: usize,
    /// N_l x K for layer 0, N_l x N_{l-1} above.
    pub matrix: CMatrix,
    pub topology: FeedingTopology,
}

impl FeedingMatrix {
    /// Identity feed, handy for degenerate and test architectures.
    pub fn identity(layer_index: usize, n: usize) -> Self {
        FeedingMatrix {
            layer_index,
            matrix: CMatrix::identity(n, n),
            topology: FeedingTopology::DenseDiffraction,
        }
    }
}

/// One layer's stored coefficients together with their family.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub family: ConstraintFamily,
    pub q: Vec<Complex64>,
}

impl LayerState {
    /// Largest distance of any stored coefficient from the family.
    pub fn feasibility_error(&self) -> f64 {
        self.q
            .iter()
            .map(|q| self.family.distance(*q))
            .fold(0.0, f64::max)
    }

    /// Element index attaining [`LayerState::feasibility_error`].
    pub fn worst_element(&self) -> usize {
        let mut worst = 0;
        let mut worst_d = -1.0;
        for (i, q) in self.q.iter().enumerate() {
            let d = self.family.distance(*q);
            if d > worst_d {
                worst_d = d;
                worst = i;
            }
        }
        worst
    }

    /// Scalar parameters (phase, circle angle, or amplitude) per element.
    pub fn parameters(&self) -> Vec<f64> {
        self.q.iter().map(|q| self.family.parameter(*q)).collect()
    }
}

/// All layers' tunable coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconfigState {
    pub layers: Vec<LayerState>,
}

impl ReconfigState {
    /// Neutral state: unit phase for phase-controlled families, circle angle
    /// zero for Lorentzian, mid-range amplitude for amplitude families.
    pub fn zero_phase(spec: &ArchitectureSpec) -> Self {
        let layers = spec
            .constraints
            .iter()
            .zip(&spec.elements_per_layer)
            .map(|(family, n)| {
                let param = match family {
                    ConstraintFamily::UnitModulus | ConstraintFamily::Lorentzian => 0.0,
                    ConstraintFamily::AmplitudeRange { lo, hi } => 0.5 * (lo + hi),
                    ConstraintFamily::AmplitudeSet { levels } => levels[levels.len() / 2],
                };
                LayerState {
                    family: family.clone(),
                    q: vec![family.realize(param); *n],
                }
            })
            .collect();
        ReconfigState { layers }
    }

    /// Independent uniform draw per element: angles uniform on [0, 2 pi),
    /// amplitudes uniform over the range or level set.
    pub fn uniform_random<R: Rng>(spec: &ArchitectureSpec, rng: &mut R) -> Self {
        let layers = spec
            .constraints
            .iter()
            .zip(&spec.elements_per_layer)
            .map(|(family, n)| {
                let q = (0..*n)
                    .map(|_| match family {
                        ConstraintFamily::UnitModulus | ConstraintFamily::Lorentzian => {
                            family.realize(rng.gen::<f64>() * std::f64::consts::TAU)
                        }
                        ConstraintFamily::AmplitudeRange { lo, hi } => {
                            family.realize(lo + (hi - lo) * rng.gen::<f64>())
                        }
                        ConstraintFamily::AmplitudeSet { levels } => {
                            let idx = rng.gen_range(0..levels.len());
                            Complex64::new(levels[idx], 0.0)
                        }
                    })
                    .collect();
                LayerState {
                    family: family.clone(),
                    q,
                }
            })
            .collect();
        ReconfigState { layers }
    }

    /// State from raw coefficients, dimension-checked but not projected;
    /// lets callers exercise the drift tolerance of the build step.
    pub fn from_q_values(spec: &ArchitectureSpec, q: Vec<Vec<Complex64>>) -> Result<Self> {
        if q.len() != spec.num_layers() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "state has {} layers, architecture has {}",
                    q.len(),
                    spec.num_layers()
                ),
            });
        }
        let layers = q
            .into_iter()
            .enumerate()
            .map(|(l, q)| {
                if q.len() != spec.elements_per_layer[l] {
                    return Err(Error::DimensionMismatch {
                        context: format!(
                            "layer {} state has {} coefficients, expected {}",
                            l,
                            q.len(),
                            spec.elements_per_layer[l]
                        ),
                    });
                }
                Ok(LayerState {
                    family: spec.constraints[l].clone(),
                    q,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ReconfigState { layers })
    }

    /// New state with one layer's entries replaced by `(phase, amplitude)`
    /// pairs mapped onto the layer's constraint family: phase realizes
    /// unit-modulus and Lorentzian coefficients (amplitude is discarded),
    /// amplitude is clamped or snapped for amplitude families (phase is
    /// discarded). The original state is untouched.
    pub fn apply_parameters(&self, layer: usize, raw: &[(f64, f64)]) -> Result<Self> {
        let state = self.layers.get(layer).ok_or(Error::LayerOutOfRange {
            layer,
            num_layers: self.layers.len(),
        })?;
        if raw.len() != state.q.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "layer {} expects {} parameter pairs, got {}",
                    layer,
                    state.q.len(),
                    raw.len()
                ),
            });
        }
        let q = raw
            .iter()
            .map(|(phase, amplitude)| match &state.family {
                ConstraintFamily::UnitModulus | ConstraintFamily::Lorentzian => {
                    state.family.realize(*phase)
                }
                ConstraintFamily::AmplitudeRange { .. } | ConstraintFamily::AmplitudeSet { .. } => {
                    state.family.realize(*amplitude)
                }
            })
            .collect();
        let mut layers = self.layers.clone();
        layers[layer] = LayerState {
            family: state.family.clone(),
            q,
        };
        Ok(ReconfigState { layers })
    }
}

/// Composed transmit map with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTransmitMatrix {
    /// N_L x S map from stream symbols to the radiating aperture.
    pub matrix: CMatrix,
    pub spec_hash: String,
    pub state_hash: String,
}

fn check_chain(spec: &ArchitectureSpec, feeds: &[FeedingMatrix], state: &ReconfigState) -> Result<()> {
    let l = spec.num_layers();
    if feeds.len() != l {
        return Err(Error::DimensionMismatch {
            context: format!("{} feeding matrices for {} layers", feeds.len(), l),
        });
    }
    if state.layers.len() != l {
        return Err(Error::DimensionMismatch {
            context: format!("{} state layers for {} layers", state.layers.len(), l),
        });
    }
    for i in 0..l {
        let feed = &feeds[i];
        if feed.layer_index != i {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "feed at position {} carries layer_index {}",
                    i, feed.layer_index
                ),
            });
        }
        let want_rows = spec.elements_per_layer[i];
        let want_cols = if i == 0 {
            spec.num_rf_chains
        } else {
            spec.elements_per_layer[i - 1]
        };
        if feed.matrix.nrows() != want_rows || feed.matrix.ncols() != want_cols {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "layer {} feed is {}x{}, expected {}x{}",
                    i,
                    feed.matrix.nrows(),
                    feed.matrix.ncols(),
                    want_rows,
                    want_cols
                ),
            });
        }
        if state.layers[i].q.len() != want_rows {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "layer {} state has {} coefficients, expected {}",
                    i,
                    state.layers[i].q.len(),
                    want_rows
                ),
            });
        }
        if state.layers[i].family != spec.constraints[i] {
            return Err(Error::ConstraintViolation {
                layer: i,
                element: 0,
                detail: "state constraint family differs from the architecture's".into(),
            });
        }
        let drift = state.layers[i].feasibility_error();
        if drift > BUILD_CONSTRAINT_TOL {
            let element = state.layers[i].worst_element();
            return Err(Error::ConstraintViolation {
                layer: i,
                element,
                detail: format!("coefficient {:.3e} off its family (tolerance {BUILD_CONSTRAINT_TOL:.0e})", drift),
            });
        }
    }
    Ok(())
}

/// Product over layers of Q_l T_l, an N_L x K map from the RF chains to the
/// radiating aperture. Shared by composition and pilot observation.
pub fn layer_product(
    spec: &ArchitectureSpec,
    feeds: &[FeedingMatrix],
    state: &ReconfigState,
) -> Result<CMatrix> {
    check_chain(spec, feeds, state)?;
    let mut m = CMatrix::identity(spec.num_rf_chains, spec.num_rf_chains);
    for (feed, layer) in feeds.iter().zip(&state.layers) {
        m = &feed.matrix * m;
        for (r, qv) in layer.q.iter().enumerate() {
            for c in 0..m.ncols() {
                m[(r, c)] *= qv;
            }
        }
    }
    Ok(m)
}

/// Compose E = Q_L T_L ... Q_1 T_1 V. Pure; identical inputs give
/// bit-identical outputs. Stored coefficients more than
/// [`BUILD_CONSTRAINT_TOL`] off their family are rejected.
pub fn build_effective_matrix(
    spec: &ArchitectureSpec,
    baseband: &BasebandProcessor,
    feeds: &[FeedingMatrix],
    state: &ReconfigState,
) -> Result<EffectiveTransmitMatrix> {
    if baseband.v.nrows() != spec.num_rf_chains || baseband.v.ncols() != spec.num_streams {
        return Err(Error::DimensionMismatch {
            context: format!(
                "baseband matrix is {}x{}, expected {}x{}",
                baseband.v.nrows(),
                baseband.v.ncols(),
                spec.num_rf_chains,
                spec.num_streams
            ),
        });
    }
    let aperture = layer_product(spec, feeds, state)?;
    Ok(EffectiveTransmitMatrix {
        matrix: aperture * &baseband.v,
        spec_hash: hash::hash_spec(spec),
        state_hash: hash::hash_state(state),
    })
}
