/// Abscissa of the two-point Gauss–Legendre rule on [-1, 1] (weights are 1).
pub const GAUSS2_POINT: f64 = 0.577_350_269_189_625_8;

/// Reference corners of the bilinear element, counter-clockwise from (-1,-1).
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Tabulated bilinear shape functions at the 2×2 Gauss points of a square
/// cell of width `h`. All cells of a structured mesh share one table.
#[derive(Clone, Debug)]
pub struct Q1Element {
    /// Quadrature point offsets from the cell's lower-left corner.
    pub offsets: [[f64; 2]; 4],
    /// Physical quadrature weights (`h² / 4` each).
    pub weights: [f64; 4],
    /// `values[k][a]`: shape function `a` at quadrature point `k`.
    pub values: [[f64; 4]; 4],
    /// `grads[k][a]`: physical gradient of shape function `a` at point `k`.
    pub grads: [[[f64; 2]; 4]; 4],
}

impl Q1Element {
    pub fn new(h: f64) -> Self {
        let g = GAUSS2_POINT;
        let refpts = [[-g, -g], [g, -g], [g, g], [-g, g]];
        let mut offsets = [[0.0; 2]; 4];
        let mut values = [[0.0; 4]; 4];
        let mut grads = [[[0.0; 2]; 4]; 4];
        for (k, &[xi, eta]) in refpts.iter().enumerate() {
            offsets[k] = [0.5 * h * (xi + 1.0), 0.5 * h * (eta + 1.0)];
            for (a, &[xa, ya]) in CORNERS.iter().enumerate() {
                values[k][a] = 0.25 * (1.0 + xa * xi) * (1.0 + ya * eta);
                // d/dx = (2/h) d/dxi
                grads[k][a] = [
                    0.5 * xa * (1.0 + ya * eta) / h,
                    0.5 * ya * (1.0 + xa * xi) / h,
                ];
            }
        }
        Self {
            offsets,
            weights: [0.25 * h * h; 4],
            values,
            grads,
        }
    }

    /// Values of a nodal field at the four quadrature points of a cell.
    pub fn interpolate(&self, local: &[f64; 4]) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|a| self.values[k][a] * local[a]).sum();
        }
        out
    }

    /// Gradients of a nodal field at the four quadrature points of a cell.
    pub fn gradient(&self, local: &[f64; 4]) -> [[f64; 2]; 4] {
        let mut out = [[0.0; 2]; 4];
        for (k, o) in out.iter_mut().enumerate() {
            for a in 0..4 {
                o[0] += self.grads[k][a][0] * local[a];
                o[1] += self.grads[k][a][1] * local[a];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let e = Q1Element::new(0.25);
        for k in 0..4 {
            let s: f64 = e.values[k].iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
            let gx: f64 = e.grads[k].iter().map(|g| g[0]).sum();
            let gy: f64 = e.grads[k].iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
        }
        let area: f64 = e.weights.iter().sum();
        assert!((area - 0.0625).abs() < 1e-16);
    }

    #[test]
    fn reproduces_linear_fields() {
        let h = 0.5;
        let e = Q1Element::new(h);
        // f(x, y) = 2x - 3y + 1 in cell-local coordinates
        let corners = [[0.0, 0.0], [h, 0.0], [h, h], [0.0, h]];
        let local = corners.map(|[x, y]| 2.0 * x - 3.0 * y + 1.0);
        let vals = e.interpolate(&local);
        let grads = e.gradient(&local);
        for k in 0..4 {
            let [x, y] = e.offsets[k];
            assert!((vals[k] - (2.0 * x - 3.0 * y + 1.0)).abs() < 1e-14);
            assert!((grads[k][0] - 2.0).abs() < 1e-13);
            assert!((grads[k][1] + 3.0).abs() < 1e-13);
        }
    }
}
