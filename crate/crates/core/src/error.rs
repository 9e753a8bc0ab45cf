use thiserror::Error;

/// Errors raised by the scattering engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Validation(String),

    #[error("no open channel at total energy E = {energy}")]
    NoOpenChannel { energy: f64 },

    #[error("incoming channel j = {j_in} is closed at total energy E = {energy}")]
    ChannelClosed { j_in: usize, energy: f64 },

    #[error("degenerate geometry: monomers coincide (1 - cos(theta) = {0:e})")]
    DegenerateGeometry(f64),

    #[error("selection rule violated: Gamma({v}, {w}) requires |v - w| = 1")]
    SelectionRuleViolation { v: usize, w: usize },

    #[error("vibrational index {index} outside truncation of {n_vib} levels")]
    Truncation { index: usize, n_vib: usize },

    #[error("quadrature did not converge: {nodes} -> {doubled} nodes changed result by {change:e} (relative)")]
    Convergence {
        nodes: usize,
        doubled: usize,
        change: f64,
    },

    #[error("ring system singular at E = {energy} (pivot ratio {pivot_ratio:e}); energy sits on a bound-state pole")]
    SingularRing { energy: f64, pivot_ratio: f64 },

    #[error("band-edge singularity in channel {channel} at E = {energy} (|sin k| = {sin_k:e})")]
    BandEdgeSingularity {
        channel: usize,
        energy: f64,
        sin_k: f64,
    },

    #[error("channel amplitude matrix is singular at E = {energy}")]
    SingularAmplitudeMatrix { energy: f64 },

    #[error("effective potential has a pole at E = {energy}")]
    PoleAtEigenvalue { energy: f64 },

    #[error("energy E = {energy} outside the band |E| < 2J = {band_edge}")]
    OutOfBand { energy: f64, band_edge: f64 },

    #[error("wavepacket overlaps the control unit: {0}")]
    BadGeometry(String),

    #[error("time step too large: norm drift {drift:e} exceeds {limit:e}")]
    StepSizeTooLarge { drift: f64, limit: f64 },

    #[error("excitation reached the chain end at t = {time}")]
    HardWallContact { time: f64 },

    #[error("premature extraction: {0}")]
    PrematureExtraction(String),

    #[error("no vibrational resonance feature in [{lo}, {hi}]")]
    FeatureNotFound { lo: f64, hi: f64 },

    #[error("problem hash mismatch: {left} vs {right}")]
    ProblemMismatch { left: String, right: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
