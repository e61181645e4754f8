//! Bounds-checked strided GEMM on slices, plus a few vector kernels.

use crate::math::Real;

/// Read-only strided matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, S> {
    data: &'a [S],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, S: Real> MatRef<'a, S> {
    /// Row-major `rows x cols` view of the first `rows * cols` elements.
    pub fn row_major(data: &'a [S], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub fn strided(data: &'a [S], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        let view = MatRef { data, rows, cols, rs, cs };
        assert!(view.span() <= data.len(), "matrix view exceeds buffer");
        view
    }

    /// Transposed view, no copy.
    pub fn t(self) -> Self {
        MatRef { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

/// Mutable strided matrix view.
#[derive(Debug)]
pub struct MatMut<'a, S> {
    data: &'a mut [S],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, S: Real> MatMut<'a, S> {
    pub fn row_major(data: &'a mut [S], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub fn strided(data: &'a mut [S], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        let span = if rows == 0 || cols == 0 { 0 } else { (rows - 1) * rs + (cols - 1) * cs + 1 };
        assert!(span <= data.len(), "matrix view exceeds buffer");
        MatMut { data, rows, cols, rs, cs }
    }
}

const SMALL_M: usize = 4;

/// `c = alpha * a * b + beta * c`.
///
/// Panics on inconsistent shapes. When `beta` is zero the previous contents
/// of `c` are ignored (NaNs included).
pub fn gemm<S: Real>(alpha: S, a: MatRef<'_, S>, b: MatRef<'_, S>, beta: S, c: MatMut<'_, S>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for i in 0..c.rows {
            for j in 0..c.cols {
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == S::ZERO { S::ZERO } else { beta * *v };
            }
        }
        return;
    }
    if a.rows <= SMALL_M && a.cs == 1 && b.rs == 1 {
        // few rows against a transposed row-major matrix: plain dot products
        let k = a.cols;
        for i in 0..c.rows {
            let ar = &a.data[i * a.rs..i * a.rs + k];
            for j in 0..c.cols {
                let d = alpha * dot(ar, &b.data[j * b.cs..j * b.cs + k]);
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == S::ZERO { d } else { d + beta * *v };
            }
        }
        return;
    }
    // SAFETY: every view was checked at construction to address only
    // elements inside its slice, and `c` is borrowed mutably.
    unsafe {
        S::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        )
    }
}

/// Dot product with several independent accumulators so it vectorizes.
#[inline]
pub fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 16;
    let mut acc = [S::ZERO; LANES];
    let chunks = a.len() / LANES;
    for c in 0..chunks {
        let xa = &a[c * LANES..(c + 1) * LANES];
        let xb = &b[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = S::ZERO;
    for i in chunks * LANES..a.len() {
        tail += a[i] * b[i];
    }
    let mut s = S::ZERO;
    for v in acc {
        s += v;
    }
    s + tail
}

/// `y[i] = bias[i] + dot(w[i, ..], x)` for a row-major `w` of shape `y.len() x x.len()`.
pub fn matvec<S: Real>(w: &[S], x: &[S], bias: Option<&[S]>, y: &mut [S]) {
    let n = x.len();
    assert_eq!(w.len(), y.len() * n);
    for (i, out) in y.iter_mut().enumerate() {
        let b = bias.map_or(S::ZERO, |b| b[i]);
        *out = b + dot(&w[i * n..(i + 1) * n], x);
    }
}

/// Euclidean norm accumulated in `f64`.
pub fn norm_sq<S: Real>(v: &[S]) -> f64 {
    v.iter().map(|&x| {
        let x = x.to_f64();
        x * x
    }).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> alloc::vec::Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_including_transposes() {
        let (m, k, n) = (5, 7, 3);
        let a: alloc::vec::Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: alloc::vec::Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(&a, &b, m, k, n);

        let mut c = vec![f64::NAN; m * n];
        gemm(1.0, MatRef::row_major(&a, m, k), MatRef::row_major(&b, k, n), 0.0, MatMut::row_major(&mut c, m, n));
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // (b^T a^T)^T == a b, computed into a column-major output
        let mut ct = vec![0.0; m * n];
        gemm(
            1.0,
            MatRef::row_major(&b, k, n).t(),
            MatRef::row_major(&a, m, k).t(),
            0.0,
            MatMut::strided(&mut ct, n, m, 1, n),
        );
        for (x, y) in ct.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn few_row_path_matches_naive() {
        let (m, k, n) = (3, 37, 5);
        let a: alloc::vec::Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.29).sin()).collect();
        let bt: alloc::vec::Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.07).cos()).collect();
        let mut b = vec![0.0; k * n];
        for j in 0..n {
            for p in 0..k {
                b[p * n + j] = bt[j * k + p];
            }
        }
        let want = naive(&a, &b, m, k, n);
        let mut c = vec![1.0; m * n];
        gemm(2.0, MatRef::row_major(&a, m, k), MatRef::row_major(&bt, n, k).t(), 0.5, MatMut::row_major(&mut c, m, n));
        for (x, y) in c.iter().zip(&want) {
            assert!((x - (2.0 * y + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_handles_tails() {
        let a: alloc::vec::Vec<f32> = (0..37).map(|i| i as f32).collect();
        let b = vec![1.0f32; 37];
        assert_eq!(dot(&a, &b), (0..37).sum::<i32>() as f32);
    }

    #[test]
    #[should_panic(expected = "exceeds buffer")]
    fn oversized_view_panics() {
        let d = [0.0f32; 5];
        let _ = MatRef::row_major(&d, 2, 3);
    }
}
