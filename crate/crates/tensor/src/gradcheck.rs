//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;

use crate::error::{Result, TensorError};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step `h`.
    pub step: f64,
    /// Checks at most this many coordinates per parameter, chosen at
    /// random; `None` checks every coordinate.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

fn scalar_value(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    match t.item() {
        Some(x) if x.is_finite() => Ok(x),
        Some(_) => Err(TensorError::NonFinite { op: "grad_check" }),
        None => Err(TensorError::NonScalarLoss {
            shape: t.shape().to_vec(),
        }),
    }
}

/// Compares reverse-mode gradients of the scalar function `f` at `params`
/// against central differences.
///
/// The reported error is `max |autodiff - fd| / max(|fd|, 1e-8)` over the
/// checked coordinates.
pub fn grad_check<F>(f: F, params: &[Tensor], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = evaluate(&f, params)?;
    scalar_value(&tape, out)?;
    let grads = tape.backward(out)?;

    let mut rng = rng::stream(opts.seed, "grad-check");
    let mut perturbed = params.to_vec();
    let mut max_rel_error: f64 = 0.0;
    let mut coords_checked = 0;
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf gradients are always present").to_vec();
        let n = params[pi].numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for j in coords {
            let original = params[pi].data()[j];
            perturbed[pi].data_mut()[j] = original + opts.step;
            let (t, _, o) = evaluate(&f, &perturbed)?;
            let plus = scalar_value(&t, o)?;
            perturbed[pi].data_mut()[j] = original - opts.step;
            let (t, _, o) = evaluate(&f, &perturbed)?;
            let minus = scalar_value(&t, o)?;
            perturbed[pi].data_mut()[j] = original;

            let fd = (plus - minus) / (2.0 * opts.step);
            let rel = (analytic[j] - fd).abs() / fd.abs().max(1e-8);
            max_rel_error = max_rel_error.max(rel);
            coords_checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        coords_checked,
    })
}
