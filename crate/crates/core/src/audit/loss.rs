//! The asymmetric contrastive objective. Distances are cosine distances,
//! `d(u, v) = 1 - cos(u, v)`.

use tensor::{Tape, Tensor, Var};

use crate::error::Result;

/// Concentration weight `mu0 * exp(-k * t)` at audit optimizer step `t`.
pub fn mu(t: u64, mu0: f64, k: f64) -> f64 {
    mu0 * (-k * t as f64).exp()
}

/// Mean of `max(0, margin - d)` over member/non-member distances.
pub fn difference_from_distances(distances: &[f64], margin: f64) -> f64 {
    distances.iter().map(|d| (margin - d).max(0.0)).sum::<f64>() / distances.len() as f64
}

/// Mean of the given pairwise member distances.
pub fn concentration_from_distances(distances: &[f64]) -> f64 {
    if distances.is_empty() {
        return 0.0;
    }
    distances.iter().sum::<f64>() / distances.len() as f64
}

/// Difference loss over paired rows of `members` and `non_members`
/// (both `(groups, width)`).
pub fn loss_d(tape: &mut Tape, members: Var, non_members: Var, margin: f64) -> Result<Var> {
    let cos = tape.cosine_similarity(members, non_members)?;
    // margin - (1 - cos)
    let slack = tape.add_scalar(cos, margin - 1.0)?;
    let h = tape.hinge(slack)?;
    Ok(tape.mean(h)?)
}

/// Concentration loss: mean cosine distance over unordered member pairs.
/// Fewer than two members give a constant zero.
pub fn loss_s(tape: &mut Tape, members: Var) -> Result<Var> {
    let g = tape.shape(members)[0];
    if g < 2 {
        log::warn!("concentration loss over {g} member embedding(s) is degenerate; using 0");
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let u = tape.normalize_rows(members)?;
    let ut = tape.transpose(u)?;
    let sim = tape.matmul(u, ut)?;
    let mut mask = vec![0.0; g * g];
    for i in 0..g {
        for j in i + 1..g {
            mask[i * g + j] = 1.0;
        }
    }
    let mask = tape.constant(Tensor::new(vec![g, g], mask)?);
    let upper = tape.mul(sim, mask)?;
    let total = tape.sum(upper)?;
    let pairs = (g * (g - 1) / 2) as f64;
    let mean_sim = tape.scale(total, 1.0 / pairs)?;
    let neg = tape.scale(mean_sim, -1.0)?;
    Ok(tape.add_scalar(neg, 1.0)?)
}

/// `L_d + mu(t) * L_s`.
pub fn combined_loss(tape: &mut Tape, members: Var, non_members: Var, margin: f64, mu_t: f64) -> Result<Var> {
    let d = loss_d(tape, members, non_members, margin)?;
    if mu_t == 0.0 {
        return Ok(d);
    }
    let s = loss_s(tape, members)?;
    let s = tape.scale(s, mu_t)?;
    Ok(tape.add(d, s)?)
}

fn rows(tape: &mut Tape, v: &[Vec<f64>]) -> Result<Var> {
    Ok(tape.constant(Tensor::from_rows(v)?))
}

/// [`loss_d`] on plain embeddings.
pub fn loss_d_value(members: &[Vec<f64>], non_members: &[Vec<f64>], margin: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let (m, n) = (rows(&mut tape, members)?, rows(&mut tape, non_members)?);
    let l = loss_d(&mut tape, m, n, margin)?;
    Ok(tape.value(l).item().expect("scalar"))
}

/// [`loss_s`] on plain embeddings.
pub fn loss_s_value(members: &[Vec<f64>]) -> Result<f64> {
    if members.len() < 2 {
        log::warn!("concentration loss over {} member embedding(s) is degenerate; using 0", members.len());
        return Ok(0.0);
    }
    let mut tape = Tape::new();
    let m = rows(&mut tape, members)?;
    let l = loss_s(&mut tape, m)?;
    Ok(tape.value(l).item().expect("scalar"))
}

/// [`combined_loss`] on plain embeddings.
pub fn combined_loss_value(members: &[Vec<f64>], non_members: &[Vec<f64>], margin: f64, mu_t: f64) -> Result<f64> {
    Ok(loss_d_value(members, non_members, margin)? + mu_t * loss_s_value(members)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_examples() {
        assert_eq!(difference_from_distances(&[0.8], 0.5), 0.0);
        assert_eq!(difference_from_distances(&[0.0], 0.5), 0.5);
        assert!((difference_from_distances(&[0.2, 0.8], 0.5) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn identical_pair_hits_hinge_maximum() {
        let v = vec![vec![1.0, 2.0, 3.0]];
        assert!((loss_d_value(&v, &v, 0.5).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn concentration_examples() {
        let same = vec![vec![1.0, 2.0]; 4];
        assert!(loss_s_value(&same).unwrap().abs() < 1e-12);
        let ortho = vec![vec![1.0, 0.0], vec![0.0, 3.0]];
        assert!((loss_s_value(&ortho).unwrap() - 1.0).abs() < 1e-12);
        assert!((concentration_from_distances(&[0.2, 0.4, 0.6]) - 0.4).abs() < 1e-12);
        assert_eq!(loss_s_value(&[vec![1.0]]).unwrap(), 0.0);
    }

    #[test]
    fn mu_schedule() {
        assert_eq!(mu(0, 0.4, 5e-3), 0.4);
        assert!((mu(200, 0.5, 5e-3) - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((mu(200, 0.5, 5e-3) - 0.18394).abs() < 1e-5);
        assert_eq!(mu(12345, 0.3, 0.0), 0.3);
    }

    #[test]
    fn zero_norm_embedding_is_rejected() {
        assert!(loss_d_value(&[vec![0.0, 0.0]], &[vec![1.0, 0.0]], 0.5).is_err());
    }
}
