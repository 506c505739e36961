//! Dense layers for the point encoder. Row-major `f64` throughout.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row-major `rows × cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "row of length {} in a {cols}-column matrix",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `y = W x + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f64>,
    bias: Option<Vec<f64>>,
}

impl LinearLayer {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        if weight.len() != in_dim * out_dim {
            return Err(Error::ShapeMismatch(format!(
                "weight has {} values, expected {out_dim}x{in_dim}",
                weight.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != out_dim {
                return Err(Error::ShapeMismatch(format!(
                    "bias has {} values, expected {out_dim}",
                    b.len()
                )));
            }
        }
        Ok(LinearLayer {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, with_bias: bool) -> Self {
        LinearLayer {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: with_bias.then(|| vec![0.0; out_dim]),
        }
    }

    /// Uniform in `±1/√in_dim`, weights row-major first, then the bias.
    pub fn init(in_dim: usize, out_dim: usize, with_bias: bool, rng: &mut Rng) -> Self {
        let k = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.uniform(-k, k)).collect();
        let bias = with_bias.then(|| (0..out_dim).map(|_| rng.uniform(-k, k)).collect());
        LinearLayer {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut [f64]> {
        self.bias.as_deref_mut()
    }

    /// Writes `W x + b` into `out`. Sums run over input index in ascending order.
    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, y) in out.iter_mut().enumerate() {
            let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *y = acc;
        }
    }

    /// Row-batched view with a transposed weight copy.
    pub fn batched(&self) -> BatchedLinear<'_> {
        let (d, c) = (self.in_dim, self.out_dim);
        // full 16-wide output groups first, each stored as d rows of 16,
        // then the leftover outputs as d rows of `c % 16`
        let mut wt = Vec::with_capacity(d * c);
        let full = c - c % LANES;
        for o0 in (0..full).step_by(LANES) {
            for k in 0..d {
                wt.extend((o0..o0 + LANES).map(|o| self.weight[o * d + k]));
            }
        }
        for k in 0..d {
            wt.extend((full..c).map(|o| self.weight[o * d + k]));
        }
        BatchedLinear { layer: self, wt }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_rows(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer expects {} inputs, got {}",
                self.in_dim,
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.out_dim);
        for i in 0..x.rows() {
            self.apply_into(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }
}

const LANES: usize = 16;

/// Applies a [`LinearLayer`] to many rows at once, 16 outputs at a time.
/// Each output element sees the same operation order as
/// [`LinearLayer::apply_into`], so results are bit-identical.
#[derive(Clone, Debug)]
pub struct BatchedLinear<'a> {
    layer: &'a LinearLayer,
    wt: Vec<f64>,
}

impl BatchedLinear<'_> {
    pub fn in_dim(&self) -> usize {
        self.layer.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layer.out_dim
    }

    /// `inputs` holds consecutive `in_dim`-wide rows; the matching
    /// `out_dim`-wide rows are appended to `out`.
    pub fn apply_extend(&self, inputs: &[f64], out: &mut Vec<f64>) {
        out.reserve(inputs.len() / self.in_dim().max(1) * self.out_dim());
        self.dispatch(inputs, |_, y| out.extend_from_slice(y));
    }

    /// Adds the output row of every `in_dim`-wide input row to `sum`, one row
    /// after another.
    pub fn sum_rows_into(&self, inputs: &[f64], sum: &mut [f64]) {
        assert_eq!(sum.len(), self.out_dim(), "sum has the wrong width");
        self.dispatch(inputs, |o0, y| {
            sum[o0..o0 + y.len()].iter_mut().zip(y).for_each(|(s, v)| *s += v);
        });
    }

    fn dispatch<F: FnMut(usize, &[f64])>(&self, inputs: &[f64], mut emit: F) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked just above.
                unsafe { self.rows_avx2(inputs, &mut emit) };
                return;
            }
        }
        self.rows_generic(inputs, &mut emit);
    }

    // Same loop compiled for wider vectors. FMA stays disabled so the
    // rounding matches the scalar path.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn rows_avx2<F: FnMut(usize, &[f64])>(&self, inputs: &[f64], emit: &mut F) {
        self.rows_generic(inputs, emit);
    }

    /// Calls `emit(first_output, values)` for each output group of each row.
    #[inline(always)]
    fn rows_generic<F: FnMut(usize, &[f64])>(&self, inputs: &[f64], emit: &mut F) {
        let (d, c) = (self.layer.in_dim, self.layer.out_dim);
        if d == 0 {
            // row count is not recoverable from an empty input
            return;
        }
        let zeros;
        let bias = match &self.layer.bias {
            Some(b) => b.as_slice(),
            None => {
                zeros = vec![0.0; c];
                &zeros
            }
        };
        let full = c - c % LANES;
        let (groups, tail) = self.wt.split_at(full * d);
        for x in inputs.chunks_exact(d) {
            for (g, (w, b)) in groups.chunks_exact(LANES * d).zip(bias.chunks_exact(LANES)).enumerate() {
                let mut acc: [f64; LANES] = b.try_into().unwrap();
                for (&xk, wk) in x.iter().zip(w.chunks_exact(LANES)) {
                    let wk: &[f64; LANES] = wk.try_into().unwrap();
                    for (a, wo) in acc.iter_mut().zip(wk) {
                        *a += wo * xk;
                    }
                }
                emit(g * LANES, &acc);
            }
            let rest = c - full;
            if rest > 0 {
                let mut acc = [0.0; LANES];
                acc[..rest].copy_from_slice(&bias[full..]);
                for (&xk, wk) in x.iter().zip(tail.chunks_exact(rest)) {
                    for (a, wo) in acc.iter_mut().zip(wk) {
                        *a += wo * xk;
                    }
                }
                emit(full, &acc[..rest]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Biased variance, as in the usual layer normalization.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + self.eps).sqrt();
        for (k, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = (v - mean) * inv * self.gamma[k] + self.beta[k];
        }
    }
}

/// Tanh approximation of GELU:
/// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
