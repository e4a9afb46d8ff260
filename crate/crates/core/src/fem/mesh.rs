use crate::error::Error;

/// Largest refinement level accepted by [`StructuredMesh::new`].
pub const MAX_LEVEL: u32 = 12;

/// Uniform quadrilateral grid of the square (-1,1)² with `2^level` cells per side.
///
/// Nodes are numbered row-major: node `(i, j)` (column `i`, row `j`) has
/// index `j * (n + 1) + i` and coordinates `(-1 + i h, -1 + j h)`.
/// Cell `(i, j)` owns the nodes `(i,j), (i+1,j), (i+1,j+1), (i,j+1)` in
/// counter-clockwise order.
#[derive(Clone, Debug)]
pub struct StructuredMesh {
    level: u32,
    cells_per_side: usize,
    h: f64,
    boundary: Vec<bool>,
}

impl StructuredMesh {
    pub fn new(level: u32) -> Result<Self, Error> {
        if level > MAX_LEVEL {
            return Err(Error::Capacity { level, max: MAX_LEVEL });
        }
        let n = 1usize << level;
        let h = 2.0 / n as f64;
        let side = n + 1;
        let mut boundary = vec![false; side * side];
        for j in 0..side {
            for i in 0..side {
                boundary[j * side + i] = i == 0 || j == 0 || i == n || j == n;
            }
        }
        Ok(Self {
            level,
            cells_per_side: n,
            h,
            boundary,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn nodes_per_side(&self) -> usize {
        self.cells_per_side + 1
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_side() + i
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let side = self.nodes_per_side();
        let (i, j) = (node % side, node / side);
        [self.coord(i), self.coord(j)]
    }

    /// Grid coordinate of line `i`; exact at both ends of the domain.
    fn coord(&self, i: usize) -> f64 {
        if i == self.cells_per_side {
            1.0
        } else {
            -1.0 + i as f64 * self.h
        }
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 2] {
        let n = self.cells_per_side;
        [self.coord(cell % n), self.coord(cell / n)]
    }

    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        let n = self.cells_per_side;
        let (i, j) = (cell % n, cell / n);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i + 1, j + 1),
            self.node_index(i, j + 1),
        ]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes()).filter(move |&k| !self.boundary[k])
    }

    pub fn num_interior(&self) -> usize {
        let m = self.cells_per_side.saturating_sub(1);
        m * m
    }

    /// Row pointers and column indices of the 9-point nodal coupling pattern.
    pub fn sparsity(&self) -> (Vec<usize>, Vec<usize>) {
        let side = self.nodes_per_side();
        let mut row_ptr = Vec::with_capacity(self.num_nodes() + 1);
        let mut cols = Vec::with_capacity(9 * self.num_nodes());
        row_ptr.push(0);
        for j in 0..side {
            for i in 0..side {
                for jj in j.saturating_sub(1)..=(j + 1).min(side - 1) {
                    for ii in i.saturating_sub(1)..=(i + 1).min(side - 1) {
                        cols.push(self.node_index(ii, jj));
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        (row_ptr, cols)
    }

    /// Nodal interpolant of a pointwise function.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|k| {
                let [x, y] = self.node_coords(k);
                f(x, y)
            })
            .collect()
    }

    /// Zero a nodal vector on the boundary.
    pub fn zero_boundary(&self, v: &mut [f64]) {
        for (x, &b) in v.iter_mut().zip(&self.boundary) {
            if b {
                *x = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = StructuredMesh::new(0).unwrap();
        assert_eq!(m.num_cells(), 1);
        assert_eq!(m.num_nodes(), 4);
        assert!(m.boundary_mask().iter().all(|&b| b));

        let m = StructuredMesh::new(2).unwrap();
        assert_eq!(m.num_cells(), 16);
        assert_eq!(m.num_nodes(), 25);
        assert_eq!(m.interior_nodes().count(), 9);
        assert_eq!(m.num_interior(), 9);

        let m = StructuredMesh::new(5).unwrap();
        assert_eq!(m.num_cells(), 1024);
        assert_eq!(m.num_nodes(), 1089);
        assert_eq!(m.h(), 0.0625);
        assert_eq!(m.h() * m.cells_per_side() as f64, 2.0);
    }

    #[test]
    fn level_guard() {
        assert!(matches!(
            StructuredMesh::new(13),
            Err(Error::Capacity { level: 13, .. })
        ));
    }

    #[test]
    fn boundary_nodes_touch_the_square() {
        for level in 0..5 {
            let m = StructuredMesh::new(level).unwrap();
            for k in 0..m.num_nodes() {
                let [x, y] = m.node_coords(k);
                let on_edge = x.abs() == 1.0 || y.abs() == 1.0;
                assert_eq!(on_edge, m.is_boundary(k), "node {k} at ({x},{y})");
            }
        }
    }

    #[test]
    fn sparsity_is_symmetric() {
        let m = StructuredMesh::new(2).unwrap();
        let (ptr, cols) = m.sparsity();
        for r in 0..m.num_nodes() {
            let row = &cols[ptr[r]..ptr[r + 1]];
            assert!(row.windows(2).all(|w| w[0] < w[1]));
            for &c in row {
                assert!(cols[ptr[c]..ptr[c + 1]].contains(&r));
            }
        }
    }
}
