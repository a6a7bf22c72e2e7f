//! Dense linear algebra and activations with their vector-Jacobian products.
//!
//! Vectors are plain `f64` slices; [`Matrix`] is row-major.

use rand::Rng as _;
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

fn shape_err(what: impl Into<String>) -> KernelError {
    KernelError::Shape(what.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, KernelError> {
        if rows == 0 || cols == 0 {
            return Err(shape_err(format!("{rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(shape_err(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite("matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for (r, row) in self.data.chunks_exact(self.cols).enumerate() {
            for (c, &v) in row.iter().enumerate() {
                t.data[c * self.rows + r] = v;
            }
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, KernelError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(shape_err("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · y`
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// `self += a · bᵀ`
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ai != 0.0 {
                axpy(ai, b, row);
            }
        }
    }
}

/// Dot product over four interleaved partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha · x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `W·x + U·h + b`
pub fn affine(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], b: &[f64]) -> Result<Vec<f64>, KernelError> {
    if w.cols != x.len() || u.cols != h.len() || w.rows != u.rows || w.rows != b.len() {
        return Err(shape_err(format!(
            "affine W {}x{}, x {}, U {}x{}, h {}, b {}",
            w.rows,
            w.cols,
            x.len(),
            u.rows,
            u.cols,
            h.len(),
            b.len()
        )));
    }
    let mut out = b.to_vec();
    w.matvec_acc(x, &mut out);
    u.matvec_acc(h, &mut out);
    Ok(out)
}

/// Gradients of a scalar through `affine`, given the upstream `dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads {
    pub dw: Matrix,
    pub dx: Vec<f64>,
    pub du: Matrix,
    pub dh: Vec<f64>,
    pub db: Vec<f64>,
}

pub fn affine_backward(w: &Matrix, x: &[f64], u: &Matrix, h: &[f64], dy: &[f64]) -> AffineGrads {
    let mut dw = Matrix::zeros(w.rows, w.cols);
    dw.add_outer(dy, x);
    let mut du = Matrix::zeros(u.rows, u.cols);
    du.add_outer(dy, h);
    let mut dx = vec![0.0; x.len()];
    w.matvec_t_acc(dy, &mut dx);
    let mut dh = vec![0.0; h.len()];
    u.matvec_t_acc(dy, &mut dh);
    AffineGrads {
        dw,
        dx,
        du,
        dh,
        db: dy.to_vec(),
    }
}

#[inline]
pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&z| sigmoid_scalar(z)).collect()
}

pub fn tanh(v: &[f64]) -> Vec<f64> {
    v.iter().map(|z| z.tanh()).collect()
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    v.iter().map(|z| z - lse).collect()
}

/// VJP of an element-wise sigmoid expressed through its output `y`.
pub fn sigmoid_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, d)| d * y * (1.0 - y)).collect()
}

/// VJP of an element-wise tanh expressed through its output `y`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect()
}

/// VJP of softmax expressed through its output `p`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(p, d)| p * (d - inner)).collect()
}

/// Cross-entropy `-log softmax(logits)[label]` in log-sum-exp form, with its
/// gradient `softmax(logits) - onehot(label)`.
pub fn cross_entropy_with_logits(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), KernelError> {
    if label >= logits.len() {
        return Err(shape_err(format!("label {label} with {} classes", logits.len())));
    }
    let loss = -log_softmax(logits)[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Glorot/Xavier uniform: entries in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix { rows, cols, data }
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h` for every
/// coordinate of `p`.
pub fn finite_diff_grad<F>(mut f: F, p: &[f64], h: f64) -> Result<Vec<f64>, KernelError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(KernelError::NonFinite(format!("f around coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, floor)`; exactly zero when both are zero.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(floor)
}
