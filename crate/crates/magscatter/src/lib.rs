//! Phase-resolved multi-mode scattering for two-port cavity-magnon systems.
//!
//! The crate models a microwave cavity with `N` modes coupled to two
//! measurement ports and `M` magnon modes, evaluates its 2x2 scattering
//! matrix from the standard input-output form
//!
//! ```text
//! S(w) = C + D [ -i w I - A ]^{-1} B,        w = 2 pi f
//! ```
//!
//! and builds the measurement-style analyses on top of it:
//!
//! - [`model`]: model types, conventions, validation, and the `A`, `B`,
//!   `C`, `D` system matrices. Frequencies are entered in GHz and rates in
//!   MHz (both as ordinary frequencies; the crate multiplies by 2 pi
//!   internally).
//! - [`numerics`]: dense complex linear algebra sized for small mode
//!   counts, with pivoted LU, iterative refinement, and a per-sweep
//!   condition monitor.
//! - [`sweep`]: frequency x field maps, phase unwrapping, isolation, CSV
//!   and JSON-sidecar export; data-parallel over field rows when the
//!   `parallel` feature (default) is on.
//! - [`analysis`]: antiresonance detection, pi-phase-jump classification,
//!   dip tracking across field, attraction/repulsion/uncoupled regime
//!   labels, the coupling-suppression search, and the avoided-crossing
//!   coupling fit.
//! - [`fit`]: Levenberg-Marquardt estimation of dissipation rates from
//!   dB transmission traces, with covariance-based uncertainties and a
//!   batch mode.
//! - [`possweep`]: parameter interpolation along the sphere-displacement
//!   axis and regime-boundary location.
//! - [`traces`]: CSV and Touchstone trace ingestion.
//! - [`reference`]: the reference four-mode configuration shipped as
//!   fixtures.
//!
//! With the `parallel` feature disabled the same API runs fully
//! sequentially; results are identical either way, including the exact
//! bytes of exported CSV files.

pub mod analysis;
pub mod error;
pub mod fit;
pub mod model;
pub mod numerics;
pub mod possweep;
pub mod reference;
pub mod sweep;
pub mod traces;

pub use error::{
    AnalysisError, FitError, ModelError, NumericsError, PositionError, SweepError,
    TraceError,
};
pub use model::{
    build_a, build_b, build_c, build_d, internal_phase, magnon_decay, magnon_frequency,
    wrap_phase, CavityMode, Conventions, CouplingScale, DiagonalConvention, FieldPoint,
    MagnonCoupling, MagnonMode, SystemModel,
};
pub use numerics::{
    inverse_2x2, inverse_3x3, scattering, solve_linear, solve_linear_vec, CMatrix,
    LuFactors, SParams, ScatteringKernel,
};
pub use sweep::{
    export_csv, export_layers_csv, export_metadata, isolation, model_hash, run_sweep,
    run_sweep_seq, unwrap_phase, Grid, SElem, SpectrumMap,
};
#[cfg(feature = "parallel")]
pub use sweep::run_sweep_par;
pub use analysis::{
    antiresonance_excursion, classify_phase_jump, classify_regime,
    dips_with_axis_distance, effective_ar_coupling, find_antiresonances,
    influence_ratio, suppression_ratio, ArCouplingFit, ArCouplingOptions, Dip,
    ExcursionReport, InfluenceReadings, JumpDirection, ModeTag, PhaseJump, Regime,
    RegimeReport, RegimeWindows, SuppressionOptions, SuppressionResult,
    TrackingOptions,
};
pub use fit::{
    batch_fit, levenberg_marquardt, model_db_trace, BatchOutcome, FitProblem,
    FitResult, FreeParam, ParamHandle,
};
pub use possweep::{
    model_at, regime_profile, DissipationSet, MagnonSettings, ModeParams,
    PositionRow, PositionTable, RegimeBoundary, RegimeProfile,
};
pub use traces::{load_db_trace, load_s21_db, load_touchstone, DbTrace, TwoPortTrace};
