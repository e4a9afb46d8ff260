//! Data of the matrix-estimation model problem on (-1,1)².

use crate::control::{MatrixControlField, SpectralBounds, Sym2};
use crate::fem::StructuredMesh;

/// Right-hand side `f = (1 − y²)(6x² + 2) + 2(1 − x²)`.
pub fn source(x: f64, y: f64) -> f64 {
    (1.0 - y * y) * (6.0 * x * x + 2.0) + 2.0 * (1.0 - x * x)
}

/// Desired state `u_d = (1 − x²)(1 − y²)`.
pub fn desired_state(x: f64, y: f64) -> f64 {
    (1.0 - x * x) * (1.0 - y * y)
}

/// Desired control `q_d = diag(1 + x², 1)`.
pub fn desired_control(x: f64, _y: f64) -> Sym2 {
    Sym2::new(1.0 + x * x, 1.0, 0.0)
}

/// Initial control `[[2, −1], [−1, 2]]`.
pub const INITIAL_CONTROL: Sym2 = Sym2::new(2.0, 2.0, -1.0);

pub const OBSTACLE: f64 = 0.5;
pub const ALPHA: f64 = 0.1;
pub const BETA: f64 = 1e-4;
pub const Q_MIN: f64 = 0.5;
pub const Q_MAX: f64 = 10.0;
/// Constant of the max-reformulation of the complementarity conditions.
pub const COMPLEMENTARITY_C: f64 = 1.0;

pub fn default_bounds() -> SpectralBounds {
    SpectralBounds::new(Q_MIN, Q_MAX)
}

pub fn desired_control_field(mesh: &StructuredMesh) -> MatrixControlField {
    MatrixControlField::from_fn(mesh, desired_control)
}
