//! Symmetric 2×2 matrix-valued controls: admissibility, the log-det barrier,
//! spectral projection and the L² Frobenius geometry.

use crate::error::{check_len, Result};
use crate::fem::{FeSpace, StructuredMesh};
use crate::linalg::{self, PcgOptions};

/// Tolerance for Riesz-map (mass matrix) solves.
const MASS_SOLVE_TOL: f64 = 1e-13;

/// Symmetric 2×2 matrix `[[a11, a12], [a12, a22]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a22: f64,
    pub a12: f64,
}

impl Sym2 {
    pub const fn new(a11: f64, a22: f64, a12: f64) -> Self {
        Self { a11, a22, a12 }
    }

    pub const fn scalar(s: f64) -> Self {
        Self::new(s, s, 0.0)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// In two dimensions a symmetric matrix is positive definite iff its
    /// determinant and trace are both positive.
    pub fn is_positive_definite(&self) -> bool {
        self.det() > 0.0 && self.trace() > 0.0
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * v[0] + self.a12 * v[1],
            self.a12 * v[0] + self.a22 * v[1],
        ]
    }

    /// `self - s I`.
    pub fn shift(&self, s: f64) -> Self {
        Self::new(self.a11 - s, self.a22 - s, self.a12)
    }

    pub fn neg(&self) -> Self {
        Self::new(-self.a11, -self.a22, -self.a12)
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.a22 / d, self.a11 / d, -self.a12 / d)
    }

    /// Frobenius inner product.
    pub fn frobenius(&self, other: &Sym2) -> f64 {
        self.a11 * other.a11 + self.a22 * other.a22 + 2.0 * self.a12 * other.a12
    }

    /// Eigenvalues in ascending order and the rotation angle θ such that
    /// `(cos θ, sin θ)` is the eigenvector of the larger eigenvalue.
    pub fn eigen(&self) -> (f64, f64, f64) {
        let mean = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        let r = half_diff.hypot(self.a12);
        let theta = 0.5 * (2.0 * self.a12).atan2(self.a11 - self.a22);
        (mean - r, mean + r, theta)
    }

    pub fn from_eigen(lo: f64, hi: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        // hi * v vᵀ + lo * w wᵀ with v = (c, s), w = (-s, c)
        Self::new(
            hi * c * c + lo * s * s,
            hi * s * s + lo * c * c,
            (hi - lo) * c * s,
        )
    }
}

/// Nodal symmetric matrix field: the three independent components of a
/// continuous piecewise-bilinear control.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixControlField {
    pub q11: Vec<f64>,
    pub q22: Vec<f64>,
    pub q12: Vec<f64>,
}

impl MatrixControlField {
    pub fn constant(n: usize, m: Sym2) -> Self {
        Self {
            q11: vec![m.a11; n],
            q22: vec![m.a22; n],
            q12: vec![m.a12; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, Sym2::scalar(0.0))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(n, Sym2::scalar(1.0))
    }

    pub fn from_fn(mesh: &StructuredMesh, f: impl Fn(f64, f64) -> Sym2) -> Self {
        let vals: Vec<Sym2> = (0..mesh.num_nodes())
            .map(|k| {
                let [x, y] = mesh.node_coords(k);
                f(x, y)
            })
            .collect();
        Self {
            q11: vals.iter().map(|m| m.a11).collect(),
            q22: vals.iter().map(|m| m.a22).collect(),
            q12: vals.iter().map(|m| m.a12).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.q11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q11.is_empty()
    }

    pub fn at(&self, k: usize) -> Sym2 {
        Sym2::new(self.q11[k], self.q22[k], self.q12[k])
    }

    pub fn set(&mut self, k: usize, m: Sym2) {
        self.q11[k] = m.a11;
        self.q22[k] = m.a22;
        self.q12[k] = m.a12;
    }

    pub fn components(&self) -> [&[f64]; 3] {
        [&self.q11, &self.q22, &self.q12]
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        Self {
            q11: z(&self.q11, &other.q11),
            q22: z(&self.q22, &other.q22),
            q12: z(&self.q12, &other.q12),
        }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + s * b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.zip_with(self, |a, _| s * a)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other)
            .components()
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// Spectral bounds `q_min I ≼ q ≼ q_max I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBounds {
    pub q_min: f64,
    pub q_max: f64,
}

impl SpectralBounds {
    pub fn new(q_min: f64, q_max: f64) -> Self {
        assert!(q_min < q_max, "q_min must be below q_max");
        Self { q_min, q_max }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.q_min + self.q_max)
    }

    /// Lower and upper slack matrices `q - q_min I` and `q_max I - q`.
    pub fn slacks(&self, m: &Sym2) -> (Sym2, Sym2) {
        (m.shift(self.q_min), m.shift(self.q_max).neg())
    }

    /// Smallest of the determinants and traces of both slack matrices.
    pub fn margin(&self, m: &Sym2) -> f64 {
        let (lo, hi) = self.slacks(m);
        lo.det().min(lo.trace()).min(hi.det()).min(hi.trace())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub worst_node: usize,
    pub min_margin: f64,
}

/// Strict membership test via determinant and trace of both slack matrices
/// at every node.
pub fn check_admissible(q: &MatrixControlField, bounds: SpectralBounds) -> AdmissibilityReport {
    let (worst_node, min_margin) = (0..q.len())
        .map(|k| (k, bounds.margin(&q.at(k))))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    AdmissibilityReport {
        admissible: min_margin > 0.0,
        worst_node,
        min_margin,
    }
}

/// Value and L² gradient density of the log-det barrier.
#[derive(Clone, Debug)]
pub struct BarrierEval {
    /// `+∞` when the control is not admissible.
    pub value: f64,
    /// `None` when the control is not admissible.
    pub gradient: Option<MatrixControlField>,
    pub feasible: bool,
}

/// `B(q) = −∫ log det(q − q_min I) + log det(q_max I − q)` with its gradient.
///
/// Infeasible controls yield the `+∞` sentinel rather than an error so that
/// line searches can simply reject the trial point.
pub fn barrier(fe: &FeSpace, q: &MatrixControlField, bounds: SpectralBounds) -> Result<BarrierEval> {
    barrier_impl(fe, q, bounds, true)
}

pub fn barrier_value(fe: &FeSpace, q: &MatrixControlField, bounds: SpectralBounds) -> Result<f64> {
    Ok(barrier_impl(fe, q, bounds, false)?.value)
}

fn barrier_impl(
    fe: &FeSpace,
    q: &MatrixControlField,
    bounds: SpectralBounds,
    with_gradient: bool,
) -> Result<BarrierEval> {
    check_len("control field", fe.num_nodes(), q.len())?;
    if !check_admissible(q, bounds).admissible {
        return Ok(BarrierEval {
            value: f64::INFINITY,
            gradient: None,
            feasible: false,
        });
    }
    let mesh = fe.mesh();
    let e = fe.element();
    let n = fe.num_nodes();
    let mut value = 0.0;
    let mut dual = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for cell in 0..mesh.num_cells() {
        let nodes = mesh.cell_nodes(cell);
        let qp = fe.control_at_qp(q, cell);
        for (k, m) in qp.iter().enumerate() {
            let (lo, hi) = bounds.slacks(m);
            value -= e.weights[k] * (lo.det().ln() + hi.det().ln());
            if with_gradient {
                // d/dq of -log det(q - a) - log det(b - q)
                let li = lo.inverse();
                let hi_inv = hi.inverse();
                let g = Sym2::new(
                    hi_inv.a11 - li.a11,
                    hi_inv.a22 - li.a22,
                    hi_inv.a12 - li.a12,
                );
                let per_comp = [g.a11, g.a22, 2.0 * g.a12];
                for a in 0..4 {
                    let w = e.weights[k] * e.values[k][a];
                    for c in 0..3 {
                        dual[c][nodes[a]] += w * per_comp[c];
                    }
                }
            }
        }
    }
    let gradient = if with_gradient {
        Some(riesz_density(fe, dual)?)
    } else {
        None
    };
    Ok(BarrierEval {
        value,
        gradient,
        feasible: true,
    })
}

/// Clamp the eigenvalues at every node into `[q_min + margin, q_max − margin]`.
///
/// Nodes already inside the band are left bit-for-bit untouched.
pub fn project_spectral(q: &MatrixControlField, bounds: SpectralBounds, margin: f64) -> MatrixControlField {
    let lo_b = bounds.q_min + margin;
    let hi_b = bounds.q_max - margin;
    let mut out = q.clone();
    for k in 0..q.len() {
        let m = q.at(k);
        let (lo, hi, theta) = m.eigen();
        if lo >= lo_b && hi <= hi_b {
            continue;
        }
        out.set(k, Sym2::from_eigen(lo.clamp(lo_b, hi_b), hi.clamp(lo_b, hi_b), theta));
    }
    out
}

/// Component weights of the Frobenius product (the off-diagonal entry
/// appears twice in a symmetric matrix).
pub const COMPONENT_WEIGHTS: [f64; 3] = [1.0, 1.0, 2.0];

/// L² Frobenius inner product of two control fields.
pub fn control_inner(fe: &FeSpace, a: &MatrixControlField, b: &MatrixControlField) -> Result<f64> {
    check_len("control field", fe.num_nodes(), a.len())?;
    check_len("control field", fe.num_nodes(), b.len())?;
    Ok(a
        .components()
        .iter()
        .zip(b.components())
        .zip(COMPONENT_WEIGHTS)
        .map(|((x, y), w)| w * fe.mass().bilinear(x, y))
        .sum())
}

pub fn control_norm(fe: &FeSpace, a: &MatrixControlField) -> Result<f64> {
    Ok(control_inner(fe, a, a)?.max(0.0).sqrt())
}

/// Convert a derivative (dual vectors `∂J/∂q_c` per nodal component) into
/// the gradient density with respect to [`control_inner`].
pub fn riesz_density(fe: &FeSpace, dual: [Vec<f64>; 3]) -> Result<MatrixControlField> {
    let mut out = Vec::with_capacity(3);
    for (g, w) in dual.into_iter().zip(COMPONENT_WEIGHTS) {
        let (x, _) = linalg::pcg(
            fe.mass(),
            &g,
            None,
            PcgOptions {
                tol: MASS_SOLVE_TOL,
                max_iter: None,
            },
            |_, _| {},
        )?;
        out.push(x.into_iter().map(|v| v / w).collect::<Vec<f64>>());
    }
    let q12 = out.pop().unwrap();
    let q22 = out.pop().unwrap();
    let q11 = out.pop().unwrap();
    Ok(MatrixControlField { q11, q22, q12 })
}

/// Inverse of [`riesz_density`]: the pairing `⟨g, δq⟩ = control_inner(g, δq)`
/// expressed as dual vectors.
pub fn dual_of(fe: &FeSpace, g: &MatrixControlField) -> [Vec<f64>; 3] {
    let m = fe.mass();
    [
        m.matvec(&g.q11),
        m.matvec(&g.q22),
        m.matvec(&g.q12).into_iter().map(|v| 2.0 * v).collect(),
    ]
}
