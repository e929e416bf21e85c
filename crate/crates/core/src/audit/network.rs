//! Small dense building blocks shared by the audit model and the
//! black-box baseline.

use tensor::rng::{self, StreamRng};
use tensor::{Tape, Tensor, Var};

use crate::error::Result;

pub(crate) const WEIGHT_STD: f64 = 0.02;

/// `(in, out)` weight and `(out)` bias.
pub(crate) fn dense(rng: &mut StreamRng, inputs: usize, outputs: usize) -> [Tensor; 2] {
    [rng::normal(rng, &[inputs, outputs], WEIGHT_STD), Tensor::zeros(&[outputs])]
}

pub(crate) fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add(y, b)?)
}

/// `sigmoid(relu(x W1 + b1) W2 + b2)` from params `[W1, b1, W2, b2]`.
pub(crate) fn classifier_head(tape: &mut Tape, x: Var, p: &[Var]) -> Result<Var> {
    let h = linear(tape, x, p[0], p[1])?;
    let h = tape.relu(h)?;
    let logit = linear(tape, h, p[2], p[3])?;
    Ok(tape.sigmoid(logit)?)
}

/// Row-stacks equally wide vectors.
pub(crate) fn stack<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, width: usize) -> Result<Tensor> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        if r.len() != width {
            return Err(crate::error::Error::Layout(format!("expected width {width}, got {}", r.len())));
        }
        data.extend_from_slice(r);
    }
    Ok(Tensor::new(vec![n, width], data)?)
}
