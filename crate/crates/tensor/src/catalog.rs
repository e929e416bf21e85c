//! Randomized finite-difference checks for every differentiable operation.
//!
//! Each case draws fresh random inputs from its seed, applies the
//! operation, and reduces the output to a scalar through a fixed random
//! weighting so every output coordinate contributes to the gradient.

use rand::Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use crate::rng::{self, StreamRng};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub struct OpCase {
    pub name: &'static str,
    pub run: fn(u64) -> Result<GradCheckReport>,
}

fn uniform(rng: &mut StreamRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Inputs bounded away from zero, so kinked ops are checked away from the kink.
fn away_from_zero(rng: &mut StreamRng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape, 0.1, 1.5);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(weights.clone().reshaped(shape)?);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn check<F>(seed: u64, inputs: Vec<Tensor>, out_numel: usize, op: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = rng::stream(seed, "op-weights");
    let weights = uniform(&mut rng, &[out_numel], -1.0, 1.0);
    grad_check(
        |t, p| {
            let out = op(t, p)?;
            weighted_sum(t, out, &weights)
        },
        &inputs,
        GradCheckOptions {
            seed,
            ..GradCheckOptions::default()
        },
    )
}

macro_rules! case {
    ($name:literal, $body:expr) => {
        OpCase { name: $name, run: $body }
    };
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case!("matmul", |s| {
            let mut r = rng::stream(s, "matmul");
            check(s, vec![uniform(&mut r, &[3, 4], -1.0, 1.0), uniform(&mut r, &[4, 2], -1.0, 1.0)], 6, |t, p| t.matmul(p[0], p[1]))
        }),
        case!("add", |s| {
            let mut r = rng::stream(s, "add");
            check(s, vec![uniform(&mut r, &[2, 3], -1.0, 1.0), uniform(&mut r, &[2, 3], -1.0, 1.0)], 6, |t, p| t.add(p[0], p[1]))
        }),
        case!("add_row_broadcast", |s| {
            let mut r = rng::stream(s, "add_row");
            check(s, vec![uniform(&mut r, &[3, 4], -1.0, 1.0), uniform(&mut r, &[4], -1.0, 1.0)], 12, |t, p| t.add(p[0], p[1]))
        }),
        case!("sub", |s| {
            let mut r = rng::stream(s, "sub");
            check(s, vec![uniform(&mut r, &[5], -1.0, 1.0), uniform(&mut r, &[5], -1.0, 1.0)], 5, |t, p| t.sub(p[0], p[1]))
        }),
        case!("mul", |s| {
            let mut r = rng::stream(s, "mul");
            check(s, vec![uniform(&mut r, &[2, 3], -1.0, 1.0), uniform(&mut r, &[2, 3], -1.0, 1.0)], 6, |t, p| t.mul(p[0], p[1]))
        }),
        case!("scale_add_scalar", |s| {
            let mut r = rng::stream(s, "scale");
            check(s, vec![uniform(&mut r, &[4], -1.0, 1.0)], 4, |t, p| {
                let y = t.scale(p[0], -1.7)?;
                t.add_scalar(y, 0.3)
            })
        }),
        case!("relu", |s| {
            let mut r = rng::stream(s, "relu");
            check(s, vec![away_from_zero(&mut r, &[6])], 6, |t, p| t.relu(p[0]))
        }),
        case!("gelu", |s| {
            let mut r = rng::stream(s, "gelu");
            check(s, vec![uniform(&mut r, &[6], -3.0, 3.0)], 6, |t, p| t.gelu(p[0]))
        }),
        case!("sigmoid", |s| {
            let mut r = rng::stream(s, "sigmoid");
            check(s, vec![uniform(&mut r, &[6], -4.0, 4.0)], 6, |t, p| t.sigmoid(p[0]))
        }),
        case!("tanh", |s| {
            let mut r = rng::stream(s, "tanh");
            check(s, vec![uniform(&mut r, &[6], -2.0, 2.0)], 6, |t, p| t.tanh(p[0]))
        }),
        case!("exp", |s| {
            let mut r = rng::stream(s, "exp");
            check(s, vec![uniform(&mut r, &[6], -2.0, 2.0)], 6, |t, p| t.exp(p[0]))
        }),
        case!("log", |s| {
            let mut r = rng::stream(s, "log");
            check(s, vec![uniform(&mut r, &[6], 0.2, 3.0)], 6, |t, p| t.log(p[0]))
        }),
        case!("softmax", |s| {
            let mut r = rng::stream(s, "softmax");
            check(s, vec![uniform(&mut r, &[3, 5], -2.0, 2.0)], 15, |t, p| t.softmax(p[0]))
        }),
        case!("causal_softmax", |s| {
            let mut r = rng::stream(s, "causal_softmax");
            check(s, vec![uniform(&mut r, &[4, 4], -2.0, 2.0)], 16, |t, p| t.causal_softmax(p[0]))
        }),
        case!("layer_norm", |s| {
            let mut r = rng::stream(s, "layer_norm");
            let inputs = vec![
                uniform(&mut r, &[3, 6], -2.0, 2.0),
                uniform(&mut r, &[6], 0.5, 1.5),
                uniform(&mut r, &[6], -0.5, 0.5),
            ];
            check(s, inputs, 18, |t, p| t.layer_norm(p[0], p[1], p[2], 1e-5))
        }),
        case!("embedding", |s| {
            let mut r = rng::stream(s, "embedding");
            let ids: Vec<usize> = (0..5).map(|_| r.random_range(0..6)).collect();
            check(s, vec![uniform(&mut r, &[6, 3], -1.0, 1.0)], 15, move |t, p| t.embedding(p[0], &ids))
        }),
        case!("conv1d", |s| {
            let mut r = rng::stream(s, "conv1d");
            let inputs = vec![
                uniform(&mut r, &[2, 2, 9], -1.0, 1.0),
                uniform(&mut r, &[3, 2, 3], -1.0, 1.0),
                uniform(&mut r, &[3], -1.0, 1.0),
            ];
            // width 9, kernel 3, stride 2 -> 4 outputs per channel
            check(s, inputs, 2 * 3 * 4, |t, p| t.conv1d(p[0], p[1], p[2], 2))
        }),
        case!("adaptive_avg_pool1d", |s| {
            let mut r = rng::stream(s, "pool");
            check(s, vec![uniform(&mut r, &[2, 2, 11], -1.0, 1.0)], 2 * 2 * 4, |t, p| t.adaptive_avg_pool1d(p[0], 4))
        }),
        case!("sum_mean", |s| {
            let mut r = rng::stream(s, "sum_mean");
            check(s, vec![uniform(&mut r, &[2, 3], -1.0, 1.0)], 1, |t, p| {
                let a = t.sum(p[0])?;
                let b = t.mean(p[0])?;
                let b = t.scale(b, 3.0)?;
                let ab = t.mul(a, b)?;
                t.add(ab, a)
            })
        }),
        case!("sum_rows_mean_rows", |s| {
            let mut r = rng::stream(s, "rows");
            check(s, vec![uniform(&mut r, &[4, 3], -1.0, 1.0)], 3, |t, p| {
                let a = t.sum_rows(p[0])?;
                let b = t.mean_rows(p[0])?;
                t.mul(a, b)
            })
        }),
        case!("sum_last", |s| {
            let mut r = rng::stream(s, "sum_last");
            check(s, vec![uniform(&mut r, &[3, 4], -1.0, 1.0)], 3, |t, p| {
                let sq = t.mul(p[0], p[0])?;
                t.sum_last(sq)
            })
        }),
        case!("concat", |s| {
            let mut r = rng::stream(s, "concat");
            let inputs = vec![uniform(&mut r, &[2, 3], -1.0, 1.0), uniform(&mut r, &[2, 2], -1.0, 1.0)];
            check(s, inputs, 10, |t, p| {
                let c = t.concat(&[p[0], p[1]], 1)?;
                t.mul(c, c)
            })
        }),
        case!("l2_norm", |s| {
            let mut r = rng::stream(s, "l2_norm");
            check(s, vec![away_from_zero(&mut r, &[3, 4])], 3, |t, p| t.l2_norm(p[0]))
        }),
        case!("normalize_rows", |s| {
            let mut r = rng::stream(s, "normalize_rows");
            check(s, vec![away_from_zero(&mut r, &[3, 4])], 12, |t, p| t.normalize_rows(p[0]))
        }),
        case!("cosine_similarity", |s| {
            let mut r = rng::stream(s, "cosine");
            let inputs = vec![away_from_zero(&mut r, &[3, 5]), away_from_zero(&mut r, &[3, 5])];
            check(s, inputs, 3, |t, p| t.cosine_similarity(p[0], p[1]))
        }),
        case!("hinge", |s| {
            let mut r = rng::stream(s, "hinge");
            check(s, vec![away_from_zero(&mut r, &[6])], 6, |t, p| {
                let m = t.scale(p[0], -1.0)?;
                let m = t.add_scalar(m, 0.05)?;
                t.hinge(m)
            })
        }),
        case!("cross_entropy", |s| {
            let mut r = rng::stream(s, "cross_entropy");
            let targets: Vec<usize> = (0..4).map(|_| r.random_range(0..3)).collect();
            check(s, vec![uniform(&mut r, &[4, 3], -2.0, 2.0)], 1, move |t, p| t.cross_entropy(p[0], &targets))
        }),
        case!("binary_cross_entropy", |s| {
            let mut r = rng::stream(s, "bce");
            let labels: Vec<f64> = (0..5).map(|_| f64::from(r.random_range(0..2u8))).collect();
            check(s, vec![uniform(&mut r, &[5], 0.05, 0.95)], 1, move |t, p| t.binary_cross_entropy(p[0], &labels, 1e-12))
        }),
        case!("transpose", |s| {
            let mut r = rng::stream(s, "transpose");
            check(s, vec![uniform(&mut r, &[2, 5], -1.0, 1.0), uniform(&mut r, &[2, 3], -1.0, 1.0)], 15, |t, p| {
                let tr = t.transpose(p[0])?;
                t.matmul(tr, p[1])
            })
        }),
        case!("reshape", |s| {
            let mut r = rng::stream(s, "reshape");
            check(s, vec![uniform(&mut r, &[2, 6], -1.0, 1.0)], 12, |t, p| {
                let y = t.reshape(p[0], &[3, 4])?;
                t.mul(y, y)
            })
        }),
        case!("slice_last", |s| {
            let mut r = rng::stream(s, "slice");
            check(s, vec![uniform(&mut r, &[3, 6], -1.0, 1.0)], 6, |t, p| {
                let y = t.slice_last(p[0], 2, 4)?;
                t.mul(y, y)
            })
        }),
        case!("index_rows", |s| {
            let mut r = rng::stream(s, "index_rows");
            check(s, vec![uniform(&mut r, &[4, 3], -1.0, 1.0)], 15, |t, p| {
                let y = t.index_rows(p[0], &[3, 0, 3, 1, 2])?;
                t.mul(y, y)
            })
        }),
    ]
}
