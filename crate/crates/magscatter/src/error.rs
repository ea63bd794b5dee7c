//! Error types for every module of the crate.

use thiserror::Error;

/// Construction / validation failures of the physical parameter set.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cavity mode {index}: frequency must be positive, got {value} GHz")]
    NonPositiveFrequency { index: usize, value: f64 },
    #[error("cavity mode {index}: dissipation rate must be non-negative, got {value} MHz")]
    NegativeRate { index: usize, value: f64 },
    #[error("magnon {index}: gyromagnetic ratio must be positive, got {value} GHz/T")]
    NonPositiveGyro { index: usize, value: f64 },
    #[error("magnon {index}: Gilbert damping must be non-negative, got {value}")]
    NegativeAlpha { index: usize, value: f64 },
    #[error("magnon {index}: coupling magnitude must be non-negative, got {value} MHz")]
    NegativeCoupling { index: usize, value: f64 },
    #[error("magnon {index}: internal phase {value} rad outside (-pi, pi]")]
    PhaseOutOfRange { index: usize, value: f64 },
    #[error("magnon {index}: has {got} couplings but the model has {expected} cavity modes")]
    CouplingCountMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("crosstalk xi = {0} outside [0, 1]")]
    CrosstalkOutOfRange(f64),
    #[error("static field must be non-negative, got {0} T")]
    NegativeField(f64),
    #[error(
        "cavity mode {index}: symmetric-cavity validation requires port phases to differ \
         by 0 or pi, got {delta} rad"
    )]
    AsymmetricPortPhases { index: usize, delta: f64 },
    #[error("internal phase is undefined for Ix = Iy = 0")]
    DegeneratePhase,
    #[error("model must have at least one cavity mode")]
    NoCavityModes,
}

/// Linear-algebra failures.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix is singular to working precision (pivot magnitude {pivot:.3e})")]
    Singular { pivot: f64 },
    #[error("right-hand side has {got} rows, matrix needs {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error(
        "solve residual {residual:.3e} exceeds tolerance {tolerance:.3e} even after refinement"
    )]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("invalid model: {0}")]
    Model(String),
}

/// Grid-sweep failures.
#[derive(Debug, Error)]
pub enum SweepError {
    #[error("grid axis '{axis}' must be non-empty and strictly increasing")]
    BadAxis { axis: &'static str },
    #[error("phase unwrapping needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("export failed: {0}")]
    Export(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Spectrum-analysis failures.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("analysis window [{lo}, {hi}] lies outside the trace")]
    WindowOutsideTrace { lo: f64, hi: f64 },
    #[error("no pi-scale phase transition within {radius} GHz of {f0} GHz")]
    NoPhaseJump { f0: f64, radius: f64 },
    #[error(
        "antiresonance tracking failed: dip lost on {lost_percent:.1}% of field samples \
         (limit {limit_percent:.0}%)"
    )]
    TrackingFailure {
        lost_percent: f64,
        limit_percent: f64,
    },
    #[error("antiresonance tracking failed: no usable dip samples in the field window")]
    NoTrackableSamples,
    #[error("no antiresonance found in the window [{lo}, {hi}] GHz")]
    NoAntiresonance { lo: f64, hi: f64 },
    #[error("polariton branches not resolvable: {0}")]
    BranchesNotResolvable(String),
    #[error("varied index {varied} and reference index {reference} must differ")]
    DegenerateScan { varied: usize, reference: usize },
    #[error("mode index {index} out of range for {n_modes} cavity modes")]
    ModeIndexOutOfRange { index: usize, n_modes: usize },
    #[error("model template must have exactly one magnon mode, got {0}")]
    TemplateNeedsOneMagnon(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Least-squares estimation failures.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("fit problem needs at least one free parameter")]
    NoFreeParameters,
    #[error("fit problem needs observed samples")]
    NoObservations,
    #[error("parameter '{0}' has invalid bounds (lower must be below upper)")]
    BadBounds(String),
    #[error("initial value of '{param}' ({value}) lies outside its bounds [{lower}, {upper}]")]
    StartOutOfBounds {
        param: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("normal equations are rank deficient; parameter '{0}' is not identifiable")]
    RankDeficient(String),
    #[error("residual became non-finite at sample {sample} (f = {f_ghz} GHz)")]
    NonFiniteResidual { sample: usize, f_ghz: f64 },
    #[error("weights length {got} does not match {expected} observations")]
    WeightLengthMismatch { got: usize, expected: usize },
    #[error("model evaluation failed: {0}")]
    Evaluation(String),
    #[error("unknown parameter handle '{0}'")]
    UnknownHandle(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Trace / network-file ingestion failures.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error reading '{path}': {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("'{path}' line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unsupported network-data format '{0}' (supported: MA, RI)")]
    UnsupportedFormat(String),
    #[error("'{0}' contains no data rows")]
    Empty(String),
}

/// Position-sweep failures.
#[derive(Debug, Error)]
pub enum PositionError {
    #[error("position table must have at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("position table y values must be strictly monotone")]
    NonMonotone,
    #[error("row at y = {y} mm has {got} modes, expected {expected}")]
    ModeCountMismatch { y: f64, got: usize, expected: usize },
    #[error("y = {y} mm outside the table range [{lo}, {hi}] mm (no extrapolation)")]
    Extrapolation { y: f64, lo: f64, hi: f64 },
    #[error("position step must be positive, got {0} mm")]
    BadStep(f64),
    #[error(transparent)]
    Trace(#[from] TraceError),
}
