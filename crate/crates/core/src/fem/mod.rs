//! Structured meshes of (-1,1)², bilinear elements with 2×2 Gauss
//! quadrature, and assembly of the discrete operators.

mod element;
mod mesh;
mod space;
mod sparse;

pub use element::{Q1Element, CORNERS, GAUSS2_POINT};
pub use mesh::{StructuredMesh, MAX_LEVEL};
pub use space::FeSpace;
pub use sparse::CsrMatrix;
