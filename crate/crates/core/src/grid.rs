//! Image geometry and the finite-difference operators used by the spatial
//! priors and the denoiser. Pixels are stored row-major.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub rows: usize,
    pub cols: usize,
}

impl ImageDims {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n / self.cols, n % self.cols)
    }

    /// 4-connected neighbours of pixel `n`.
    pub fn neighbors(&self, n: usize) -> impl Iterator<Item = usize> {
        let (r, c) = self.coords(n);
        let (rows, cols) = (self.rows, self.cols);
        let up = (r > 0).then(|| n - cols);
        let down = (r + 1 < rows).then(|| n + cols);
        let left = (c > 0).then(|| n - 1);
        let right = (c + 1 < cols).then(|| n + 1);
        [up, down, left, right].into_iter().flatten()
    }

    /// Checkerboard colour (0 or 1). Same-colour pixels share no edge.
    #[inline]
    pub fn color(&self, n: usize) -> usize {
        let (r, c) = self.coords(n);
        (r + c) % 2
    }

    pub fn pixels_of_color(&self, color: usize) -> Vec<usize> {
        (0..self.len()).filter(|&n| self.color(n) == color).collect()
    }
}

/// Forward differences with a zero difference on the last row/column.
/// Returns `(vertical, horizontal)`.
pub fn gradient<F: Real>(dims: ImageDims, x: &[F]) -> (Vec<F>, Vec<F>) {
    let mut dv = vec![F::zero(); x.len()];
    let mut dh = vec![F::zero(); x.len()];
    for r in 0..dims.rows {
        for c in 0..dims.cols {
            let n = dims.index(r, c);
            if r + 1 < dims.rows {
                dv[n] = x[n + dims.cols] - x[n];
            }
            if c + 1 < dims.cols {
                dh[n] = x[n + 1] - x[n];
            }
        }
    }
    (dv, dh)
}

/// Adjoint of [`gradient`]: `D^T (pv, ph)`.
pub fn gradient_adjoint<F: Real>(dims: ImageDims, pv: &[F], ph: &[F]) -> Vec<F> {
    let mut out = vec![F::zero(); pv.len()];
    for r in 0..dims.rows {
        for c in 0..dims.cols {
            let n = dims.index(r, c);
            if r + 1 < dims.rows {
                out[n] -= pv[n];
                out[n + dims.cols] += pv[n];
            }
            if c + 1 < dims.cols {
                out[n] -= ph[n];
                out[n + 1] += ph[n];
            }
        }
    }
    out
}

/// Anisotropic total variation `||D_v x||_1 + ||D_h x||_1`.
pub fn total_variation<F: Real>(dims: ImageDims, x: &[F]) -> F {
    let (dv, dh) = gradient(dims, x);
    dv.iter().chain(&dh).map(|d| d.abs()).sum()
}

/// 5-point Laplacian with replicated-edge (Neumann) boundary:
/// `(L x)_n = sum_{m ~ n} (x_m - x_n)`. The operator is symmetric.
pub fn laplacian<F: Real>(dims: ImageDims, x: &[F]) -> Vec<F> {
    (0..x.len())
        .map(|n| dims.neighbors(n).map(|m| x[m] - x[n]).sum())
        .collect()
}
