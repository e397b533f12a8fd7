//! Error type shared by every module of the library.

use thiserror::Error;

/// Errors reported by composition, channel synthesis, metrics, optimization,
/// estimation, and time-modulation routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A matrix in the layer chain does not have the shape the architecture demands.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// A stored reconfiguration coefficient drifted off its constraint family.
    #[error("constraint violation at layer {layer}, element {element}: {detail}")]
    ConstraintViolation {
        layer: usize,
        element: usize,
        detail: String,
    },

    /// Layer index outside 0..L.
    #[error("layer index {layer} out of range for an architecture with {num_layers} layers")]
    LayerOutOfRange { layer: usize, num_layers: usize },

    /// Wavelength must be positive and finite.
    #[error("invalid wavelength {value} m (must be positive and finite)")]
    InvalidWavelength { value: f64 },

    /// A source point sits on top of an array element.
    #[error("source point coincides with element {element} (distance {distance:.3e} m)")]
    CoincidentSource { element: usize, distance: f64 },

    /// Layer-to-layer spacing must be strictly positive.
    #[error("non-positive inter-layer spacing {value} m")]
    NonPositiveSpacing { value: f64 },

    /// An element has no waveguide feeding it.
    #[error("element {element} is not assigned to any waveguide")]
    UnassignedElement { element: usize },

    /// Stream-to-user assignment is not a one-to-one map onto the users.
    #[error("invalid stream-to-user map: {detail}")]
    StreamMapInvalid { detail: String },

    /// An angle grid was empty where at least one sample is required.
    #[error("angle grid is empty")]
    EmptyGrid,

    /// A desired beam-pattern mask was malformed.
    #[error("invalid mask: {detail}")]
    InvalidMask { detail: String },

    /// Normalization references for the weighted objective must be positive.
    #[error("non-positive normalization reference {value}")]
    NonPositiveReference { value: f64 },

    /// The objective or its gradient evaluated to NaN or infinity.
    #[error("objective is not finite ({context})")]
    NonFiniteObjective { context: String },

    /// Effective channel too ill-conditioned for unregularized zero forcing.
    #[error("effective channel is singular (condition number {condition:.3e})")]
    SingularEffectiveChannel { condition: f64 },

    /// Fewer stacked pilot equations than unknowns with no ridge term.
    #[error("insufficient observations: {observations} equations for {unknowns} unknowns")]
    InsufficientObservations {
        observations: usize,
        unknowns: usize,
    },

    /// Stacked observation matrix numerically rank deficient with no ridge term.
    #[error("observation matrix rank deficient (condition number {condition:.3e})")]
    RankDeficient { condition: f64 },

    /// Time modulation requested on a layer other than the radiating one.
    #[error("time modulation is only supported on the final layer (requested layer {layer}, final layer {final_layer})")]
    UnsupportedMultiLayerModulation { layer: usize, final_layer: usize },

    /// Requested carrier-harmonic magnitude exceeds what the slot power budget allows.
    #[error("requested carrier coefficient magnitude {requested} exceeds the feasible maximum {max_feasible}")]
    InfeasibleSplit { requested: f64, max_feasible: f64 },

    /// Catch-all for violated call preconditions not covered by a dedicated variant.
    #[error("invalid parameter: {detail}")]
    InvalidParameter { detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable code for CLI error reporting.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ConstraintViolation { .. } => "constraint_violation",
            Error::LayerOutOfRange { .. } => "layer_out_of_range",
            Error::InvalidWavelength { .. } => "invalid_wavelength",
            Error::CoincidentSource { .. } => "coincident_source",
            Error::NonPositiveSpacing { .. } => "non_positive_spacing",
            Error::UnassignedElement { .. } => "unassigned_element",
            Error::StreamMapInvalid { .. } => "stream_map_invalid",
            Error::EmptyGrid => "empty_grid",
            Error::InvalidMask { .. } => "invalid_mask",
            Error::NonPositiveReference { .. } => "non_positive_reference",
            Error::NonFiniteObjective { .. } => "non_finite_objective",
            Error::SingularEffectiveChannel { .. } => "singular_effective_channel",
            Error::InsufficientObservations { .. } => "insufficient_observations",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::UnsupportedMultiLayerModulation { .. } => "unsupported_multi_layer_modulation",
            Error::InfeasibleSplit { .. } => "infeasible_split",
            Error::InvalidParameter { .. } => "invalid_parameter",
        }
    }
}
