use std::sync::Arc;

/// Compressed sparse row matrix with a structurally symmetric pattern.
///
/// The pattern is shared between matrices assembled on the same mesh, so
/// sums of operators (stiffness plus penalty mass, say) stay cheap.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Arc<Vec<usize>>,
    cols: Arc<Vec<usize>>,
    values: Vec<f64>,
    dirichlet: Vec<usize>,
}

impl CsrMatrix {
    pub fn zeros_with_pattern(row_ptr: Arc<Vec<usize>>, cols: Arc<Vec<usize>>) -> Self {
        let n = row_ptr.len() - 1;
        let nnz = cols.len();
        Self {
            n,
            row_ptr,
            cols,
            values: vec![0.0; nnz],
            dirichlet: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: Arc::new((0..=n).collect()),
            cols: Arc::new((0..n).collect()),
            values: vec![1.0; n],
            dirichlet: Vec::new(),
        }
    }

    /// Sparse copy of a dense row-major square matrix, dropping exact zeros.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), n * n);
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = dense[i * n + j];
                if v != 0.0 || i == j {
                    cols.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr: Arc::new(row_ptr),
            cols: Arc::new(cols),
            values,
            dirichlet: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[i * self.n + j] += v;
            }
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &Arc<Vec<usize>> {
        &self.row_ptr
    }

    pub fn cols(&self) -> &Arc<Vec<usize>> {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodes whose rows and columns were replaced by the identity.
    pub fn dirichlet_rows(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Add to an existing entry of the pattern.
    ///
    /// Panics if `(i, j)` is outside the sparsity pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[p] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[range.clone()]
                .iter()
                .zip(&self.values[range])
                .map(|(&j, &a)| a * x[j])
                .sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, a)| a * y[j]).sum::<f64>())
            .sum()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, a)| a).sum()).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`; both matrices must share a pattern.
    pub fn add_scaled(&mut self, s: f64, other: &CsrMatrix) {
        assert!(
            Arc::ptr_eq(&self.cols, &other.cols) || self.cols == other.cols,
            "add_scaled requires a common sparsity pattern"
        );
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    /// Largest entry of `|A - Aᵀ|` relative to the largest entry of `|A|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                scale = scale.max(a.abs());
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Symmetric row/column elimination of the masked nodes: their rows and
    /// columns become identity rows, preserving symmetry.
    pub fn with_dirichlet(&self, mask: &[bool]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            for p in range {
                let j = self.cols[p];
                if mask[i] || mask[j] {
                    out.values[p] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        out.dirichlet = (0..self.n).filter(|&i| mask[i]).collect();
        out
    }

    /// Restrict to the unknowns with `free[i] == true`.
    ///
    /// Returns the reduced matrix together with the map from reduced to full
    /// indices. The coupling to fixed unknowns is folded into `rhs` by
    /// [`CsrMatrix::reduce_rhs`].
    pub fn restrict(&self, free: &[bool]) -> (CsrMatrix, Vec<usize>) {
        let mut full_to_red = vec![usize::MAX; self.n];
        let mut red_to_full = Vec::new();
        for (i, &f) in free.iter().enumerate() {
            if f {
                full_to_red[i] = red_to_full.len();
                red_to_full.push(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(red_to_full.len() + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in &red_to_full {
            for (j, a) in self.row(i) {
                if free[j] {
                    cols.push(full_to_red[j]);
                    values.push(a);
                }
            }
            row_ptr.push(cols.len());
        }
        (
            CsrMatrix {
                n: red_to_full.len(),
                row_ptr: Arc::new(row_ptr),
                cols: Arc::new(cols),
                values,
                dirichlet: Vec::new(),
            },
            red_to_full,
        )
    }

    /// Right-hand side of the restricted system: `b_F - A_FC x_C`.
    pub fn reduce_rhs(&self, b: &[f64], x: &[f64], free: &[bool], red_to_full: &[usize]) -> Vec<f64> {
        red_to_full
            .iter()
            .map(|&i| {
                let coupling: f64 = self
                    .row(i)
                    .filter(|&(j, _)| !free[j])
                    .map(|(j, a)| a * x[j])
                    .sum();
                b[i] - coupling
            })
            .collect()
    }
}
