//! Frequency-domain quantum noise budget for a teleportation-based optical
//! speed meter.
//!
//! The engine models an interferometric displacement sensor whose meter field
//! is entangled (EPR-style) with a reference beam. Two readout strategies are
//! supported, both with optical losses:
//!
//! * **online** — Bell-measurement outcomes are fed forward in real time as a
//!   displacement on the meter input (fixed or optimized complex gains);
//! * **offline** — the Bell records are stored and the measured quadrature is
//!   conditioned on them afterwards with Wiener filters.
//!
//! All spectral densities are vacuum-normalized single-sided quantum PSDs
//! (vacuum = 1 per quadrature). Displacement sensitivities are reported in
//! m²/Hz and as amplitude spectral densities in m/√Hz.
//!
//! Module layout:
//! * [`qalgebra`] — complex quadrature-space algebra: transfer blocks,
//!   Hermitian spectral densities, homodyne projections, noise budgets.
//! * [`plant`] — physical parameters, coupling factors, closed-form lossless
//!   transfer blocks, and the per-frequency linear solver of the lossy
//!   Langevin system.
//! * [`teleport`] — EPR state, Bell channels, feedforward wiring, loss
//!   injection, readout amplification, and Wiener conditioning.
//! * [`budget`] — end-to-end sensitivity curves and figures of merit.
//! * [`cli`] — scenario presets, flat key=value configuration, and CSV/JSON
//!   export used by the `tsm` binary.

pub mod budget;
pub mod cli;
pub mod error;
pub mod plant;
pub mod qalgebra;
pub mod teleport;

pub use error::{Error, Result};

/// Centralized numeric tolerances and caps.
///
/// Every comparison tolerance used by the library (and pinned by the
/// acceptance suite) lives here so a reader can audit the numerics in one
/// place. Values are chosen from observed solver accuracy (complex 6×6 LU at
/// f64) with comfortable headroom, not tuned per-test.
pub mod tol {
    /// Absolute Hermiticity tolerance for spectral-density matrices.
    pub const HERMITICITY_ABS: f64 = 1e-12;

    /// Most-negative eigenvalue a spectral density may have before it is
    /// rejected as non-positive-semidefinite (rounding headroom).
    pub const PSD_MIN_EIG: f64 = -1e-10;

    /// Relative tolerance for solver-vs-closed-form block recovery.
    pub const BLOCK_MATCH_REL: f64 = 1e-10;

    /// Relative tolerance for exact algebraic identities (|K_z|² = K_sm·K_pm,
    /// scaling laws) evaluated in f64.
    pub const IDENTITY_REL: f64 = 1e-12;

    /// Relative tolerance for the lossless online/offline equivalence.
    pub const EQUIVALENCE_REL: f64 = 1e-10;

    /// Relative tolerance for the lossy online(optimized)/offline(Wiener)
    /// equivalence.
    pub const LOSSY_EQUIVALENCE_REL: f64 = 1e-6;

    /// Relative tolerance for numerically recovered Wiener filters against
    /// the closed forms.
    pub const WIENER_FILTER_REL: f64 = 1e-6;

    /// Condition-number threshold beyond which a Bell-channel covariance is
    /// Tikhonov-regularized before inversion.
    pub const CONDITION_REG_THRESHOLD: f64 = 1e12;

    /// Scale of the trace-proportional regularization added in that case.
    pub const CONDITION_REG_SCALE: f64 = 1e-12;

    /// Cap on finite squeezing strength, in dB. Larger finite values are
    /// clamped before matrices are materialized; the infinite limit takes
    /// dedicated analytic paths instead.
    pub const SQUEEZE_DB_CAP: f64 = 60.0;

    /// Slack used when asserting "conditioning never increases noise".
    pub const CONDITIONING_SLACK_ABS: f64 = 1e-12;
}
