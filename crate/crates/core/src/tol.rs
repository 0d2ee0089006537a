//! Numeric tolerances shared across the workspace.
//!
//! Every module asserts against these two constants instead of inventing its
//! own thresholds. Domain-specific limits (reprojection rejection, IK
//! convergence) live next to the algorithm that owns them.

/// Tolerance for algebraic identities built from several floating-point
/// operations: compositions, round trips, reconstructions.
pub const ALGEBRAIC: f64 = 1e-9;

/// Tolerance for exact metric identities: inverses, unit norms, distances
/// that should cancel to machine precision.
pub const METRIC: f64 = 1e-12;
