//! Forward definitions of the differentiable operations.
//!
//! Conventions: matrices are rank-2 row-major; "rows" ops act on the
//! leading axis of a matrix, "last-axis" ops act on the trailing axis of
//! any rank.

use crate::error::{Result, TensorError};
use crate::linalg::{gemm, View};
use crate::tape::{Op, Tape, Var};
use crate::tensor::Tensor;

pub const GELU_COEFF: f64 = 0.044_715;

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn invalid(op: &'static str, shape: &[usize], reason: impl Into<String>) -> TensorError {
    TensorError::InvalidShape {
        op,
        shape: shape.to_vec(),
        reason: reason.into(),
    }
}

fn matrix_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(invalid(op, shape, "expected a matrix")),
    }
}

fn last_axis(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape.split_last() {
        Some((&n, rest)) if n > 0 => Ok((rest.iter().product(), n)),
        _ => Err(invalid(op, shape, "expected a non-empty trailing axis")),
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + GELU_COEFF * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let t = (c * (x + GELU_COEFF * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEFF * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bin boundaries of adaptive average pooling: `[floor(i*w/p), ceil((i+1)*w/p))`.
pub(crate) fn pool_bin(i: usize, width: usize, out: usize) -> (usize, usize) {
    let start = i * width / out;
    let end = ((i + 1) * width).div_ceil(out);
    (start, end)
}

impl Tape {
    fn map_unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let src = self.value(x);
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&v| f(v)).collect())?;
        self.push(name, out, op, &[x])
    }

    /// `(m, k) · (k, n) -> (m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k) = matrix_dims("matmul", sa)?;
        let (k2, n) = matrix_dims("matmul", sb)?;
        if k != k2 {
            return Err(mismatch("matmul", sa, sb));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            View::row_major(self.value(a).data(), m, k),
            View::row_major(self.value(b).data(), k, n),
            &mut out,
            0.0,
        );
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    /// Elementwise sum. `b` may also be a vector matching the trailing
    /// axis of `a`, in which case it is broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            return self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b));
        }
        let (_, n) = last_axis("add", &sa)?;
        if sb.len() != 1 || sb[0] != n {
            return Err(mismatch("add", &sa, &sb));
        }
        let bias = self.value(b).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[i % n])
            .collect();
        let value = Tensor::new(sa, data)?;
        self.push("add", value, Op::AddRow(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.map_unary("scale", x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.map_unary("add_scalar", x, |v| v + c, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map_unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    /// `max(0, x)`; the same map as [`Tape::relu`], named for margin losses.
    pub fn hinge(&mut self, x: Var) -> Result<Var> {
        self.relu(x)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map_unary("gelu", x, gelu, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map_unary("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map_unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map_unary("exp", x, f64::exp, Op::Exp(x))
    }

    /// Natural logarithm; non-positive inputs are a non-finite error.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.map_unary("log", x, f64::ln, Op::Log(x))
    }

    /// Softmax over the trailing axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let (rows, n) = last_axis("softmax", src.shape())?;
        let mut out = src.data().to_vec();
        for r in 0..rows {
            softmax_in_place(&mut out[r * n..(r + 1) * n]);
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        self.push("softmax", value, Op::Softmax(x), &[x])
    }

    /// Row-wise softmax of a square score matrix where row `i` only sees
    /// columns `0..=i`; masked entries are exactly zero.
    pub fn causal_softmax(&mut self, x: Var) -> Result<Var> {
        let src = self.value(x);
        let (t, t2) = matrix_dims("causal_softmax", src.shape())?;
        if t != t2 {
            return Err(invalid("causal_softmax", src.shape(), "expected a square matrix"));
        }
        let mut out = vec![0.0; t * t];
        for r in 0..t {
            let row = &mut out[r * t..r * t + r + 1];
            row.copy_from_slice(&src.data()[r * t..r * t + r + 1]);
            softmax_in_place(row);
        }
        let value = Tensor::new(vec![t, t], out)?;
        self.push("causal_softmax", value, Op::CausalSoftmax(x), &[x])
    }

    /// Layer normalization over the trailing axis with affine `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let src = self.value(x);
        let (rows, n) = last_axis("layer_norm", src.shape())?;
        for p in [gamma, beta] {
            if self.shape(p) != [n] {
                return Err(mismatch("layer_norm", src.shape(), self.shape(p)));
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; rows * n];
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &src.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[r * n + j] = (row[j] - mean) * rstd * g[j] + b[j];
            }
            means.push(mean);
            rstds.push(rstd);
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            mean: means,
            rstd: rstds,
        };
        self.push("layer_norm", value, op, &[x, gamma, beta])
    }

    /// Gathers rows of a `(vocab, dim)` table: output `(ids.len(), dim)`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (vocab, dim) = matrix_dims("embedding", t.shape())?;
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    extent: vocab,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(vec![ids.len(), dim], out)?;
        let op = Op::Embedding {
            table,
            ids: ids.to_vec(),
        };
        self.push("embedding", value, op, &[table])
    }

    /// Valid (unpadded) 1-D convolution.
    ///
    /// `x: (batch, in_ch, width)`, `weight: (out_ch, in_ch, kernel)`,
    /// `bias: (out_ch)` → `(batch, out_ch, (width - kernel) / stride + 1)`.
    pub fn conv1d(&mut self, x: Var, weight: Var, bias: Var, stride: usize) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(weight), self.shape(bias));
        let &[batch, cin, width] = sx else {
            return Err(invalid("conv1d", sx, "expected (batch, channels, width)"));
        };
        let &[cout, cin_w, kernel] = sw else {
            return Err(invalid("conv1d", sw, "expected (out, in, kernel) weights"));
        };
        if cin != cin_w || sb != [cout] {
            return Err(mismatch("conv1d", sx, sw));
        }
        if stride == 0 || kernel == 0 || width < kernel {
            return Err(invalid("conv1d", sx, format!("kernel {kernel}, stride {stride}")));
        }
        let wout = (width - kernel) / stride + 1;
        let (xd, wd, bd) = (self.value(x).data(), self.value(weight).data(), self.value(bias).data());
        let mut out = vec![0.0; batch * cout * wout];
        for b in 0..batch {
            for o in 0..cout {
                let dst = &mut out[(b * cout + o) * wout..(b * cout + o + 1) * wout];
                dst.iter_mut().for_each(|v| *v = bd[o]);
                for c in 0..cin {
                    let src = &xd[(b * cin + c) * width..(b * cin + c + 1) * width];
                    let w = &wd[(o * cin + c) * kernel..(o * cin + c + 1) * kernel];
                    for (k, &wk) in w.iter().enumerate() {
                        if stride == 1 {
                            dst.iter_mut().zip(&src[k..]).for_each(|(d, &v)| *d += wk * v);
                        } else {
                            let shifted = src[k..].iter().step_by(stride);
                            dst.iter_mut().zip(shifted).for_each(|(d, &v)| *d += wk * v);
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![batch, cout, wout], out)?;
        let op = Op::Conv1d {
            x,
            weight,
            bias,
            stride,
        };
        self.push("conv1d", value, op, &[x, weight, bias])
    }

    /// Averages the trailing axis of `(batch, channels, width)` into
    /// `out_len` contiguous bins (`out_len <= width`).
    pub fn adaptive_avg_pool1d(&mut self, x: Var, out_len: usize) -> Result<Var> {
        let sx = self.shape(x);
        let &[batch, ch, width] = sx else {
            return Err(invalid("adaptive_avg_pool1d", sx, "expected (batch, channels, width)"));
        };
        if out_len == 0 || out_len > width {
            return Err(invalid("adaptive_avg_pool1d", sx, format!("cannot pool to {out_len}")));
        }
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(batch * ch * out_len);
        for row in xd.chunks(width) {
            for i in 0..out_len {
                let (s, e) = pool_bin(i, width, out_len);
                out.push(row[s..e].iter().sum::<f64>() / (e - s) as f64);
            }
        }
        let value = Tensor::new(vec![batch, ch, out_len], out)?;
        self.push("adaptive_avg_pool1d", value, Op::AdaptiveAvgPool1d(x), &[x])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(invalid("mean", t.shape(), "empty tensor"));
        }
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(x), &[x])
    }

    fn reduce_rows(&mut self, name: &'static str, x: Var, mean: bool) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = matrix_dims(name, t.shape())?;
        if m == 0 {
            return Err(invalid(name, t.shape(), "no rows"));
        }
        let mut out = vec![0.0; n];
        for row in t.data().chunks(n) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        if mean {
            out.iter_mut().for_each(|o| *o /= m as f64);
        }
        let op = if mean { Op::MeanRows(x) } else { Op::SumRows(x) };
        self.push(name, Tensor::from_vec(out), op, &[x])
    }

    /// `(m, n) -> (n)`: column sums.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        self.reduce_rows("sum_rows", x, false)
    }

    /// `(m, n) -> (n)`: column means (pooling over positions).
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        self.reduce_rows("mean_rows", x, true)
    }

    /// Sums the trailing axis: `(.., n) -> (..)`.
    pub fn sum_last(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (_, n) = last_axis("sum_last", t.shape())?;
        let out: Vec<f64> = t.data().chunks(n).map(|c| c.iter().sum()).collect();
        let shape = t.shape()[..t.rank() - 1].to_vec();
        self.push("sum_last", Tensor::new(shape, out)?, Op::SumLast(x), &[x])
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                reason: "no inputs".into(),
            });
        };
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", &base, format!("axis {axis} out of range")));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        self.push("concat", Tensor::new(shape, out)?, op, parts)
    }

    /// Euclidean norm over the trailing axis: `(.., n) -> (..)`.
    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (_, n) = last_axis("l2_norm", t.shape())?;
        let out: Vec<f64> = t.data().chunks(n).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let shape = t.shape()[..t.rank() - 1].to_vec();
        self.push("l2_norm", Tensor::new(shape, out)?, Op::L2Norm(x), &[x])
    }

    /// Scales each trailing-axis vector to unit length. Zero vectors are rejected.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (_, n) = last_axis("normalize_rows", t.shape())?;
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(n) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(TensorError::InvalidArgument {
                    op: "normalize_rows",
                    reason: "zero-norm vector".into(),
                });
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push("normalize_rows", value, Op::NormalizeRows(x), &[x])
    }

    /// Cosine similarity of paired trailing-axis vectors: `(.., n) x (.., n) -> (..)`.
    /// Zero-norm vectors are rejected since the similarity is undefined.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("cosine_similarity", ta.shape(), tb.shape()));
        }
        let (_, n) = last_axis("cosine_similarity", ta.shape())?;
        let mut out = Vec::new();
        for (u, v) in ta.data().chunks(n).zip(tb.data().chunks(n)) {
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu == 0.0 || nv == 0.0 {
                return Err(TensorError::InvalidArgument {
                    op: "cosine_similarity",
                    reason: "zero-norm vector".into(),
                });
            }
            let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            out.push(dot / (nu * nv));
        }
        let shape = ta.shape()[..ta.rank() - 1].to_vec();
        let value = Tensor::new(shape, out)?;
        self.push("cosine_similarity", value, Op::CosineSimilarity(a, b), &[a, b])
    }

    /// Mean softmax cross-entropy of `(m, classes)` logits against class targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (m, c) = matrix_dims("cross_entropy", t.shape())?;
        if targets.len() != m || m == 0 {
            return Err(mismatch("cross_entropy", t.shape(), &[targets.len()]));
        }
        let mut total = 0.0;
        for (row, &y) in t.data().chunks(c).zip(targets) {
            if y >= c {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: y,
                    extent: c,
                });
            }
            total += log_sum_exp(row) - row[y];
        }
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
        };
        self.push("cross_entropy", Tensor::scalar(total / m as f64), op, &[logits])
    }

    /// Mean binary cross-entropy of probabilities against `{0, 1}` labels,
    /// with probabilities clipped to `[clip, 1 - clip]` before the log.
    pub fn binary_cross_entropy(&mut self, probs: Var, labels: &[f64], clip: f64) -> Result<Var> {
        let t = self.value(probs);
        if t.numel() != labels.len() || labels.is_empty() {
            return Err(mismatch("binary_cross_entropy", t.shape(), &[labels.len()]));
        }
        if let Some(bad) = labels.iter().find(|l| **l != 0.0 && **l != 1.0) {
            return Err(TensorError::InvalidArgument {
                op: "binary_cross_entropy",
                reason: format!("label {bad} is not 0 or 1"),
            });
        }
        let n = labels.len() as f64;
        let total: f64 = t
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &l)| {
                let p = p.clamp(clip, 1.0 - clip);
                -(l * p.ln() + (1.0 - l) * (1.0 - p).ln())
            })
            .sum();
        let op = Op::BinaryCrossEntropy {
            probs,
            labels: labels.to_vec(),
            clip,
        };
        self.push("binary_cross_entropy", Tensor::scalar(total / n), op, &[probs])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = matrix_dims("transpose", t.shape())?;
        let d = t.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        self.push("transpose", Tensor::new(vec![n, m], out)?, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// Columns `start..end` of the trailing axis.
    pub fn slice_last(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (_, n) = last_axis("slice_last", t.shape())?;
        if start >= end || end > n {
            return Err(invalid("slice_last", t.shape(), format!("range {start}..{end}")));
        }
        let out: Vec<f64> = t.data().chunks(n).flat_map(|c| c[start..end].iter().copied()).collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        self.push("slice_last", Tensor::new(shape, out)?, Op::Slice { x, start }, &[x])
    }

    /// Gathers rows of a matrix (repeats allowed).
    pub fn index_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = matrix_dims("index_rows", t.shape())?;
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(TensorError::IndexOutOfRange {
                    op: "index_rows",
                    index: r,
                    extent: m,
                });
            }
            out.extend_from_slice(t.row(r));
        }
        let op = Op::IndexRows {
            x,
            rows: rows.to_vec(),
        };
        self.push("index_rows", Tensor::new(vec![rows.len(), n], out)?, op, &[x])
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_vec(vec![0.0; 3]));
        let y = t.softmax(x).unwrap();
        approx(t.value(y).data(), &[1.0 / 3.0; 3], 1e-15);
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::full(&[2, 4], 3.7));
        let g = t.constant(Tensor::full(&[4], 1.0));
        let b = t.constant(Tensor::zeros(&[4]));
        let y = t.layer_norm(x, g, b, 1e-5).unwrap();
        assert!(t.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_of_vector_with_itself_is_one() {
        let mut t = Tape::new();
        let v = t.constant(Tensor::from_vec(vec![0.3, -2.0, 5.5]));
        let c = t.cosine_similarity(v, v).unwrap();
        assert!((t.value(c).item().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_vec(vec![0.0, 0.0]));
        let b = t.constant(Tensor::from_vec(vec![1.0, 0.0]));
        assert!(t.cosine_similarity(a, b).is_err());
    }

    #[test]
    fn matmul_shape_mismatch_names_op_and_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[4, 2]));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn causal_softmax_masks_future_positions() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![3, 3], (0..9).map(f64::from).collect()).unwrap());
        let y = t.causal_softmax(x).unwrap();
        let v = t.value(y);
        assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(v.row(1)[2], 0.0);
        for r in 0..3 {
            assert!((v.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_rejects_out_of_range_id() {
        let mut t = Tape::new();
        let table = t.leaf(Tensor::zeros(&[4, 2]));
        let err = t.embedding(table, &[1, 4]).unwrap_err();
        assert_eq!(err, TensorError::IndexOutOfRange { op: "embedding", index: 4, extent: 4 });
    }

    #[test]
    fn conv1d_matches_hand_computation() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![1, 1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let w = t.constant(Tensor::new(vec![1, 1, 2], vec![1.0, -1.0]).unwrap());
        let b = t.constant(Tensor::from_vec(vec![0.5]));
        let y = t.conv1d(x, w, b, 2).unwrap();
        assert_eq!(t.value(y).shape(), &[1, 1, 2]);
        assert_eq!(t.value(y).data(), &[-0.5, -0.5]);
    }

    #[test]
    fn adaptive_pool_bins_cover_input() {
        for (w, p) in [(10, 3), (7, 7), (100, 64), (5, 1)] {
            let mut covered = vec![false; w];
            for i in 0..p {
                let (s, e) = pool_bin(i, w, p);
                assert!(s < e && e <= w);
                covered[s..e].iter_mut().for_each(|c| *c = true);
            }
            assert!(covered.iter().all(|c| *c));
        }
    }

    #[test]
    fn binary_cross_entropy_clips_and_rejects_bad_labels() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::from_vec(vec![0.5, 0.5]));
        let ce = t.binary_cross_entropy(p, &[1.0, 0.0], 1e-12).unwrap();
        assert!((t.value(ce).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        let perfect = t.constant(Tensor::from_vec(vec![1.0, 0.0]));
        let ce = t.binary_cross_entropy(perfect, &[1.0, 0.0], 1e-12).unwrap();
        assert!((t.value(ce).item().unwrap() - 1e-12).abs() < 1e-15);

        assert!(t.binary_cross_entropy(p, &[1.0, 0.5], 1e-12).is_err());
    }

    #[test]
    fn constant_inputs_record_no_backward_rule() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let b = t.exp(a).unwrap();
        assert!(!t.requires_grad(b));
        assert_eq!(t.recorded_ops(), 0);
        let w = t.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        t.mul(b, w).unwrap();
        assert_eq!(t.recorded_ops(), 1);
    }
}
