//! Backward rules, one arm per recorded operation.

use crate::linalg::{gemm, View};
use crate::ops::{gelu_grad, pool_bin};
use crate::tape::{Op, Tape};

impl Tape {
    /// Pushes the output gradient `g` of node `i` into its inputs.
    pub(crate) fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga, _| {
                    gemm(View::row_major(g, m, n), View::transposed(bv, n, k), ga, 1.0);
                });
                self.accumulate(grads, *b, |gb, _| {
                    gemm(View::transposed(av, k, m), View::row_major(g, m, n), gb, 1.0);
                });
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.accumulate(grads, v, |gv, _| add_into(gv, g));
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, |ga, _| add_into(ga, g));
                self.accumulate(grads, *b, |gb, _| {
                    let n = gb.len();
                    for (j, v) in g.iter().enumerate() {
                        gb[j % n] += v;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga, _| add_into(ga, g));
                self.accumulate(grads, *b, |gb, _| {
                    gb.iter_mut().zip(g).for_each(|(o, v)| *o -= v);
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga, _| {
                    for j in 0..g.len() {
                        ga[j] += g[j] * bv[j];
                    }
                });
                self.accumulate(grads, *b, |gb, _| {
                    for j in 0..g.len() {
                        gb[j] += g[j] * av[j];
                    }
                });
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, *x, |gx, _| {
                    gx.iter_mut().zip(g).for_each(|(o, v)| *o += c * v);
                });
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                self.accumulate(grads, *x, |gx, _| add_into(gx, g));
            }
            Op::Relu(x) => self.accumulate(grads, *x, |gx, xv| {
                for (j, &v) in xv.data().iter().enumerate() {
                    if v > 0.0 {
                        gx[j] += g[j];
                    }
                }
            }),
            Op::Gelu(x) => self.accumulate(grads, *x, |gx, xv| {
                for (j, &v) in xv.data().iter().enumerate() {
                    gx[j] += g[j] * gelu_grad(v);
                }
            }),
            Op::Sigmoid(x) => self.accumulate(grads, *x, |gx, _| {
                for j in 0..g.len() {
                    gx[j] += g[j] * y[j] * (1.0 - y[j]);
                }
            }),
            Op::Tanh(x) => self.accumulate(grads, *x, |gx, _| {
                for j in 0..g.len() {
                    gx[j] += g[j] * (1.0 - y[j] * y[j]);
                }
            }),
            Op::Exp(x) => self.accumulate(grads, *x, |gx, _| {
                for j in 0..g.len() {
                    gx[j] += g[j] * y[j];
                }
            }),
            Op::Log(x) => self.accumulate(grads, *x, |gx, xv| {
                for (j, &v) in xv.data().iter().enumerate() {
                    gx[j] += g[j] / v;
                }
            }),
            Op::Softmax(x) | Op::CausalSoftmax(x) => {
                let n = *node.value.shape().last().unwrap();
                self.accumulate(grads, *x, |gx, _| {
                    for ((gr, yr), dst) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dst[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                mean,
                rstd,
            } => {
                let n = *node.value.shape().last().unwrap();
                let xv = self.value(*x).data();
                let gm = self.value(*gamma).data();
                self.accumulate(grads, *beta, |gb, _| {
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                });
                self.accumulate(grads, *gamma, |gg, _| {
                    for (r, row) in g.chunks(n).enumerate() {
                        for j in 0..n {
                            gg[j] += row[j] * (xv[r * n + j] - mean[r]) * rstd[r];
                        }
                    }
                });
                self.accumulate(grads, *x, |gx, _| {
                    let nf = n as f64;
                    for (r, row) in g.chunks(n).enumerate() {
                        let xs = &xv[r * n..(r + 1) * n];
                        let mut sum_dy = 0.0;
                        let mut sum_dy_xhat = 0.0;
                        for j in 0..n {
                            let dy = row[j] * gm[j];
                            let xhat = (xs[j] - mean[r]) * rstd[r];
                            sum_dy += dy;
                            sum_dy_xhat += dy * xhat;
                        }
                        for j in 0..n {
                            let dy = row[j] * gm[j];
                            let xhat = (xs[j] - mean[r]) * rstd[r];
                            gx[r * n + j] += rstd[r] * (dy - sum_dy / nf - xhat * sum_dy_xhat / nf);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let dim = self.shape(*table)[1];
                self.accumulate(grads, *table, |gt, _| {
                    for (p, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * dim..(id + 1) * dim], &g[p * dim..(p + 1) * dim]);
                    }
                });
            }
            Op::Conv1d {
                x,
                weight,
                bias,
                stride,
            } => {
                let &[batch, cin, width] = self.shape(*x) else { unreachable!() };
                let &[cout, _, kernel] = self.shape(*weight) else { unreachable!() };
                let wout = node.value.shape()[2];
                let (xd, wd) = (self.value(*x).data(), self.value(*weight).data());
                let s = *stride;
                self.accumulate(grads, *bias, |gb, _| {
                    for (r, row) in g.chunks(wout).enumerate() {
                        gb[r % cout] += row.iter().sum::<f64>();
                    }
                });
                self.accumulate(grads, *weight, |gw, _| {
                    for b in 0..batch {
                        for o in 0..cout {
                            let go = &g[(b * cout + o) * wout..(b * cout + o + 1) * wout];
                            for c in 0..cin {
                                let src = &xd[(b * cin + c) * width..(b * cin + c + 1) * width];
                                let dst = &mut gw[(o * cin + c) * kernel..(o * cin + c + 1) * kernel];
                                for (k, d) in dst.iter_mut().enumerate() {
                                    *d += if s == 1 {
                                        go.iter().zip(&src[k..]).map(|(&gv, &v)| gv * v).sum::<f64>()
                                    } else {
                                        go.iter().zip(src[k..].iter().step_by(s)).map(|(&gv, &v)| gv * v).sum::<f64>()
                                    };
                                }
                            }
                        }
                    }
                });
                self.accumulate(grads, *x, |gx, _| {
                    for b in 0..batch {
                        for o in 0..cout {
                            let go = &g[(b * cout + o) * wout..(b * cout + o + 1) * wout];
                            for c in 0..cin {
                                let w = &wd[(o * cin + c) * kernel..(o * cin + c + 1) * kernel];
                                let dst = &mut gx[(b * cin + c) * width..(b * cin + c + 1) * width];
                                for (k, &wk) in w.iter().enumerate() {
                                    let shifted = dst[k..].iter_mut().step_by(s);
                                    shifted.zip(go).for_each(|(d, &gv)| *d += gv * wk);
                                }
                            }
                        }
                    }
                });
            }
            Op::AdaptiveAvgPool1d(x) => {
                let width = self.shape(*x)[2];
                let out_len = node.value.shape()[2];
                self.accumulate(grads, *x, |gx, _| {
                    for (row, grow) in gx.chunks_mut(width).zip(g.chunks(out_len)) {
                        for (i, &gv) in grow.iter().enumerate() {
                            let (s, e) = pool_bin(i, width, out_len);
                            let share = gv / (e - s) as f64;
                            row[s..e].iter_mut().for_each(|v| *v += share);
                        }
                    }
                });
            }
            Op::Sum(x) => self.accumulate(grads, *x, |gx, _| {
                gx.iter_mut().for_each(|v| *v += g[0]);
            }),
            Op::Mean(x) => self.accumulate(grads, *x, |gx, _| {
                let share = g[0] / gx.len() as f64;
                gx.iter_mut().for_each(|v| *v += share);
            }),
            Op::SumRows(x) | Op::MeanRows(x) => {
                let rows = self.shape(*x)[0];
                let factor = if matches!(node.op, Op::MeanRows(_)) { 1.0 / rows as f64 } else { 1.0 };
                self.accumulate(grads, *x, |gx, _| {
                    for row in gx.chunks_mut(g.len()) {
                        row.iter_mut().zip(g).for_each(|(o, v)| *o += factor * v);
                    }
                });
            }
            Op::SumLast(x) => {
                let n = *self.shape(*x).last().unwrap();
                self.accumulate(grads, *x, |gx, _| {
                    for (row, gv) in gx.chunks_mut(n).zip(g) {
                        row.iter_mut().for_each(|o| *o += gv);
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let shape = node.value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.shape(p)[*axis] * inner;
                    self.accumulate(grads, p, |gp, _| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            add_into(&mut gp[o * chunk..(o + 1) * chunk], src);
                        }
                    });
                    offset += chunk;
                }
            }
            Op::L2Norm(x) => {
                let n = *self.shape(*x).last().unwrap();
                self.accumulate(grads, *x, |gx, xv| {
                    for (r, (row, src)) in gx.chunks_mut(n).zip(xv.data().chunks(n)).enumerate() {
                        if y[r] > 0.0 {
                            let f = g[r] / y[r];
                            row.iter_mut().zip(src).for_each(|(o, v)| *o += f * v);
                        }
                    }
                });
            }
            Op::NormalizeRows(x) => {
                let n = *self.shape(*x).last().unwrap();
                self.accumulate(grads, *x, |gx, xv| {
                    for r in 0..gx.len() / n {
                        let src = &xv.data()[r * n..(r + 1) * n];
                        let norm = src.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            gx[r * n + j] += (gr[j] - yr[j] * dot) / norm;
                        }
                    }
                });
            }
            Op::CosineSimilarity(a, b) => {
                let n = *self.shape(*a).last().unwrap();
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let pair_grad = |gdst: &mut [f64], u: &[f64], v: &[f64]| {
                    for r in 0..g.len() {
                        let (ur, vr) = (&u[r * n..(r + 1) * n], &v[r * n..(r + 1) * n]);
                        let nu2: f64 = ur.iter().map(|x| x * x).sum();
                        let nv2: f64 = vr.iter().map(|x| x * x).sum();
                        let inv = 1.0 / (nu2 * nv2).sqrt();
                        for j in 0..n {
                            gdst[r * n + j] += g[r] * (vr[j] * inv - y[r] * ur[j] / nu2);
                        }
                    }
                };
                self.accumulate(grads, *a, |ga, _| pair_grad(ga, av, bv));
                self.accumulate(grads, *b, |gb, _| pair_grad(gb, bv, av));
            }
            Op::CrossEntropy { logits, targets } => {
                let c = self.shape(*logits)[1];
                let m = targets.len() as f64;
                self.accumulate(grads, *logits, |gl, lv| {
                    for (r, (row, &t)) in lv.data().chunks(c).zip(targets).enumerate() {
                        let mut p = row.to_vec();
                        crate::ops::softmax_in_place(&mut p);
                        p[t] -= 1.0;
                        for j in 0..c {
                            gl[r * c + j] += g[0] * p[j] / m;
                        }
                    }
                });
            }
            Op::BinaryCrossEntropy {
                probs,
                labels,
                clip,
            } => {
                let n = labels.len() as f64;
                self.accumulate(grads, *probs, |gp, pv| {
                    for (j, (&p, &l)) in pv.data().iter().zip(labels).enumerate() {
                        if p > *clip && p < 1.0 - clip {
                            gp[j] += g[0] * (-l / p + (1.0 - l) / (1.0 - p)) / n;
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (m, n) = (self.shape(*x)[0], self.shape(*x)[1]);
                self.accumulate(grads, *x, |gx, _| {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::Slice { x, start } => {
                let n = *self.shape(*x).last().unwrap();
                let w = *node.value.shape().last().unwrap();
                self.accumulate(grads, *x, |gx, _| {
                    for (row, src) in gx.chunks_mut(n).zip(g.chunks(w)) {
                        add_into(&mut row[*start..start + w], src);
                    }
                });
            }
            Op::IndexRows { x, rows } => {
                let n = self.shape(*x)[1];
                self.accumulate(grads, *x, |gx, _| {
                    for (p, &r) in rows.iter().enumerate() {
                        add_into(&mut gx[r * n..(r + 1) * n], &g[p * n..(p + 1) * n]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
