//! Small dense symmetric-matrix kernels for the per-slot Gaussian fits.
//!
//! Matrices are at most 12×12 (16-QAM with two symbols of memory), so a
//! row-major `Vec<f64>` and textbook Cholesky are both simpler and faster
//! than a general linear-algebra dependency.

/// Square row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SquareMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Copy with rows/columns reordered: `out[i][j] = self[p[i]][p[j]]`.
    pub fn permuted(&self, p: &[usize]) -> Self {
        let mut out = SquareMatrix::zeros(p.len());
        for (i, &pi) in p.iter().enumerate() {
            for (j, &pj) in p.iter().enumerate() {
                out.set(i, j, self.get(pi, pj));
            }
        }
        out
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += v;
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Clone, Debug)]
pub(crate) struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix; `None` unless it is numerically positive
    /// definite.
    pub fn new(a: &SquareMatrix) -> Option<Self> {
        let n = a.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { dim: n, l })
    }

    /// ln det A = 2 Σ ln L_ii.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| 2.0 * self.l[i * self.dim + i].ln()).sum()
    }

    /// Forward substitution for rows `from..to` of `L z = v`, in place.
    /// Rows before `from` must already hold their solution.
    pub fn forward_solve_range(&self, v: &mut [f64], from: usize, to: usize) {
        let n = self.dim;
        for i in from..to {
            let mut s = v[i];
            for k in 0..i {
                s -= self.l[i * n + k] * v[k];
            }
            v[i] = s / self.l[i * n + i];
        }
    }

    /// Quadratic form vᵀ A⁻¹ v = |L⁻¹ v|².
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut z = v.to_vec();
        self.forward_solve_range(&mut z, 0, self.dim);
        z.iter().map(|x| x * x).sum()
    }
}

/// Diagonal loading policy: starting at λ = max(floor, relative·tr(A)/dim),
/// escalate ×10 until the Cholesky factorization succeeds.
///
/// Returns the factor and the number of loading escalations beyond the
/// baseline (0 for a well-conditioned matrix).
pub(crate) fn regularized_cholesky(a: &SquareMatrix, floor: f64, relative: f64) -> (Cholesky, usize) {
    let base = (relative * a.trace() / a.dim.max(1) as f64).max(floor);
    let mut lambda = base;
    let mut events = 0;
    loop {
        let mut m = a.clone();
        m.add_diagonal(lambda);
        if let Some(c) = Cholesky::new(&m) {
            return (c, events);
        }
        events += 1;
        lambda *= 10.0;
        // a non-finite matrix never factors; fall back to a scaled identity so
        // callers get a usable (if uninformative) metric
        if events > 60 || !lambda.is_finite() {
            let mut id = SquareMatrix::zeros(a.dim);
            id.add_diagonal(1.0);
            return (Cholesky::new(&id).expect("identity factors"), events);
        }
    }
}
