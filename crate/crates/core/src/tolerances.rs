//! Default tolerances used by the verification machinery.
//!
//! Two regimes are kept apart deliberately. PDE residuals are evaluated with
//! second-order stencils on grids around h = 1e-2, so anything below ~C·h²
//! is discretization noise; the pass threshold for those is `RESIDUAL_TOL`.
//! Algebraic identities (reality conditions, projection identities, rational
//! loop identities) involve no differencing at all and must hold to near
//! machine precision; those use `ALGEBRAIC_TOL`.

/// PDE residual pass threshold at grid spacing ~1e-2 with order-2 stencils.
pub const RESIDUAL_TOL: f64 = 1e-3;

/// Exact-arithmetic identities checked numerically (reality, projections,
/// loop identities).
pub const ALGEBRAIC_TOL: f64 = 1e-10;

/// Structural identities that hold entrywise by construction.
pub const EXACT_TOL: f64 = 1e-12;

/// Orthogonality / unitarity drift allowed along an ODE integration.
pub const ORTHO_TOL: f64 = 1e-8;

/// Agreement between two independent constructions of the same object
/// (algebraic vs ODE vs linear-system Bäcklund routes).
pub const CROSS_METHOD_TOL: f64 = 1e-6;

/// Path-independence defect of frame integration on a flat connection
/// over a unit domain at h = 1e-2.
pub const PATH_INDEPENDENCE_TOL: f64 = 1e-6;

/// Frame determinant drift over a unit domain for trace-free connections.
pub const DET_DRIFT_TOL: f64 = 1e-6;

/// Curvature acceptance for reconstructed surfaces, |K + 1| away from cusps.
pub const CURVATURE_TOL: f64 = 1e-2;

/// Nodes with |sin 2q| at or below this are treated as cusp nodes and
/// excluded from curvature acceptance.
pub const CUSP_CUTOFF: f64 = 0.1;

/// Default spectral step for λ-derivatives of frame families.
pub const LAMBDA_STEP: f64 = 1e-4;

/// Minimum |det| for a frame value to count as invertible.
pub const FRAME_DET_FLOOR: f64 = 1e-12;

/// Quotients like (a_1i)_{x_j}/a_1j flag the node when the denominator
/// drops below this.
pub const QUOTIENT_FLOOR: f64 = 1e-6;

/// Fraction of flagged nodes beyond which a field-level operation errors
/// out instead of masking.
pub const FLAGGED_FRACTION_LIMIT: f64 = 0.25;

/// Empirical factor for the path-discrepancy bound
/// ‖E_fwd − E_rev‖ ≤ K·(max curvature residual + h⁴) on unit domains.
pub const PATH_DISCREPANCY_FACTOR: f64 = 50.0;
