use std::sync::Arc;

use super::element::Q1Element;
use super::mesh::StructuredMesh;
use super::sparse::CsrMatrix;
use crate::control::{MatrixControlField, Sym2};
use crate::error::{check_len, Error, Result};

/// Continuous bilinear finite element space on a structured mesh, together
/// with the operators every other component needs (mass, lumped mass and the
/// unit-coefficient stiffness).
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: StructuredMesh,
    element: Q1Element,
    row_ptr: Arc<Vec<usize>>,
    cols: Arc<Vec<usize>>,
    mass: CsrMatrix,
    lumped: Vec<f64>,
    laplace: CsrMatrix,
}

impl FeSpace {
    pub fn new(level: u32) -> Result<Self> {
        let mesh = StructuredMesh::new(level)?;
        let element = Q1Element::new(mesh.h());
        let (row_ptr, cols) = mesh.sparsity();
        let mut space = Self {
            mesh,
            element,
            row_ptr: Arc::new(row_ptr),
            cols: Arc::new(cols),
            mass: CsrMatrix::identity(0),
            lumped: Vec::new(),
            laplace: CsrMatrix::identity(0),
        };
        space.mass = space.assemble_mass();
        space.lumped = space.mass.row_sums();
        let n = space.mesh.num_nodes();
        space.laplace = space.assemble_coefficient_form(&MatrixControlField::identity(n));
        Ok(space)
    }

    pub fn mesh(&self) -> &StructuredMesh {
        &self.mesh
    }

    pub fn element(&self) -> &Q1Element {
        &self.element
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_nodes()
    }

    /// Consistent mass matrix, without boundary elimination.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// Row-sum lumped mass, one weight per node.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    /// Stiffness matrix of the unit coefficient, without boundary elimination.
    pub fn laplace(&self) -> &CsrMatrix {
        &self.laplace
    }

    pub fn zero_matrix(&self) -> CsrMatrix {
        CsrMatrix::zeros_with_pattern(self.row_ptr.clone(), self.cols.clone())
    }

    pub fn local(&self, v: &[f64], cell: usize) -> [f64; 4] {
        self.mesh.cell_nodes(cell).map(|k| v[k])
    }

    /// Physical coordinates of the quadrature points of a cell.
    pub fn quadrature_points(&self, cell: usize) -> [[f64; 2]; 4] {
        let [x0, y0] = self.mesh.cell_origin(cell);
        self.element.offsets.map(|[dx, dy]| [x0 + dx, y0 + dy])
    }

    /// A control field interpolated at the quadrature points of a cell.
    pub fn control_at_qp(&self, q: &MatrixControlField, cell: usize) -> [Sym2; 4] {
        let a11 = self.element.interpolate(&self.local(&q.q11, cell));
        let a22 = self.element.interpolate(&self.local(&q.q22, cell));
        let a12 = self.element.interpolate(&self.local(&q.q12, cell));
        [0, 1, 2, 3].map(|k| Sym2::new(a11[k], a22[k], a12[k]))
    }

    fn assemble_cells(&self, mut local: impl FnMut(usize, &mut [[f64; 4]; 4]) -> Result<()>) -> Result<CsrMatrix> {
        let mut m = self.zero_matrix();
        for cell in 0..self.mesh.num_cells() {
            let mut ke = [[0.0; 4]; 4];
            local(cell, &mut ke)?;
            let nodes = self.mesh.cell_nodes(cell);
            for a in 0..4 {
                for b in 0..4 {
                    m.add_to(nodes[a], nodes[b], ke[a][b]);
                }
            }
        }
        Ok(m)
    }

    fn coefficient_local(&self, qp: &[Sym2; 4], ke: &mut [[f64; 4]; 4]) {
        let e = &self.element;
        for k in 0..4 {
            let w = e.weights[k];
            for a in 0..4 {
                let qa = qp[k].apply(e.grads[k][a]);
                for b in 0..4 {
                    let gb = e.grads[k][b];
                    ke[a][b] += w * (qa[0] * gb[0] + qa[1] * gb[1]);
                }
            }
        }
    }

    /// Stiffness matrix `∫ q∇φ_j·∇φ_i` of an admissible coefficient.
    ///
    /// Fails if `q` is not positive definite at some quadrature point.
    pub fn assemble_stiffness(&self, q: &MatrixControlField) -> Result<CsrMatrix> {
        check_len("control field", self.num_nodes(), q.len())?;
        self.assemble_cells(|cell, ke| {
            let qp = self.control_at_qp(q, cell);
            if let Some(bad) = qp.iter().find(|m| !m.is_positive_definite()) {
                return Err(Error::Coefficient {
                    cell,
                    det: bad.det(),
                    trace: bad.trace(),
                });
            }
            self.coefficient_local(&qp, ke);
            Ok(())
        })
    }

    /// The same bilinear form for an arbitrary symmetric field (e.g. a
    /// perturbation direction), without a definiteness check.
    pub fn assemble_coefficient_form(&self, d: &MatrixControlField) -> CsrMatrix {
        self.assemble_cells(|cell, ke| {
            let qp = self.control_at_qp(d, cell);
            self.coefficient_local(&qp, ke);
            Ok(())
        })
        .expect("unchecked assembly cannot fail")
    }

    /// Consistent mass matrix.
    pub fn assemble_mass(&self) -> CsrMatrix {
        self.assemble_weighted_mass(|_, _| 1.0)
    }

    /// Mass matrix `∫ w φ_j φ_i` with a weight given per (cell, quadrature point).
    pub fn assemble_weighted_mass(&self, weight: impl Fn(usize, usize) -> f64) -> CsrMatrix {
        let e = &self.element;
        self.assemble_cells(|cell, ke| {
            for k in 0..4 {
                let w = weight(cell, k) * e.weights[k];
                if w == 0.0 {
                    continue;
                }
                for a in 0..4 {
                    for b in 0..4 {
                        ke[a][b] += w * e.values[k][a] * e.values[k][b];
                    }
                }
            }
            Ok(())
        })
        .expect("mass assembly cannot fail")
    }

    /// Load vector `∫ f φ_i` of a pointwise function (2×2 Gauss per cell).
    pub fn assemble_load(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.assemble_qp_load(|cell, k| {
            let [x, y] = self.quadrature_points(cell)[k];
            f(x, y)
        })
    }

    /// Load vector of a density given per (cell, quadrature point).
    pub fn assemble_qp_load(&self, density: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let e = &self.element;
        let mut out = vec![0.0; self.num_nodes()];
        for cell in 0..self.mesh.num_cells() {
            let nodes = self.mesh.cell_nodes(cell);
            for k in 0..4 {
                let g = density(cell, k) * e.weights[k];
                if g == 0.0 {
                    continue;
                }
                for a in 0..4 {
                    out[nodes[a]] += g * e.values[k][a];
                }
            }
        }
        out
    }

    pub fn l2_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.mass.bilinear(a, b)
    }

    /// `√(vᵀ M v)`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.mass.quad_form(v).max(0.0).sqrt()
    }

    /// `√(vᵀ K v)` with the unit-coefficient stiffness.
    pub fn h1_seminorm(&self, v: &[f64]) -> f64 {
        self.laplace.quad_form(v).max(0.0).sqrt()
    }

    /// L² norm of a nodal density under the lumped mass.
    pub fn lumped_l2_norm(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.lumped)
            .map(|(x, m)| m * x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn boundary_mask(&self) -> &[bool] {
        self.mesh.boundary_mask()
    }

    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.mesh.interpolate(f)
    }
}
