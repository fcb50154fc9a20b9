//! Best-student election, the mutual-learning loss, and the multi-student
//! training loop.

mod election;
pub mod samples;
pub mod train;

pub use election::{elect, find_peaks, foreground_probability, persuasive_value, ElectionResult, StudentConfidence, RATIO_FLOOR};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Mutual-learning loss `(1/u) * sum_i MSE(best, others[i])`.
///
/// `best` enters the graph detached, so the elected student gets no gradient
/// from this term. With `divide_by_peers` the sum is divided by `u - 1`.
pub fn loss_ml(g: &mut Graph, best: Var, others: &[Var], u: usize, divide_by_peers: bool) -> Result<Var> {
    if u < 2 || others.len() != u - 1 {
        return Err(Error::domain(
            "loss_ml",
            format!("expected {} peer maps for u = {u}, got {}", u.saturating_sub(1), others.len()),
        ));
    }
    let target = g.detach(best);
    let mut acc: Option<Var> = None;
    for &o in others {
        let term = g.mse(o, target)?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    let n = if divide_by_peers { u - 1 } else { u };
    Ok(g.scale(acc.expect("at least one peer"), 1.0 / n as f64))
}

/// One student's share of the mutual-learning loss: `(1/u) * MSE(best, own)`.
/// Summing this over the non-elected students gives [`loss_ml`].
pub fn ml_term(g: &mut Graph, best: &crate::Tensor, own: Var, u: usize, divide_by_peers: bool) -> Result<Var> {
    if u < 2 {
        return Err(Error::domain("ml_term", format!("need u >= 2, got {u}")));
    }
    let target = g.constant(best.clone());
    let d = g.mse(own, target)?;
    let n = if divide_by_peers { u - 1 } else { u };
    Ok(g.scale(d, 1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn hand_example_is_one_third() {
        let mut g = Graph::new();
        let best = g.param(Tensor::vector(&[1.0, 1.0]));
        let a = g.param(Tensor::vector(&[0.0, 1.0]));
        let b = g.param(Tensor::vector(&[1.0, 0.0]));
        let l = loss_ml(&mut g, best, &[a, b], 3, false).unwrap();
        assert!((g.value(l).item().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        g.backward(l).unwrap();
        assert!(g.grad(best).map_or(true, |t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.grad(a).is_some());
    }

    #[test]
    fn peers_override_and_identical_maps() {
        let mut g = Graph::new();
        let best = g.param(Tensor::vector(&[1.0, 1.0]));
        let a = g.param(Tensor::vector(&[0.0, 1.0]));
        let b = g.param(Tensor::vector(&[1.0, 0.0]));
        let l = loss_ml(&mut g, best, &[a, b], 3, true).unwrap();
        assert!((g.value(l).item().unwrap() - 0.5).abs() < 1e-15);
        let same = g.param(Tensor::vector(&[1.0, 1.0]));
        let z = loss_ml(&mut g, best, &[same], 2, false).unwrap();
        assert_eq!(g.value(z).item().unwrap(), 0.0);
    }

    #[test]
    fn count_and_shape_mismatches_fail() {
        let mut g = Graph::new();
        let best = g.param(Tensor::vector(&[1.0, 1.0]));
        let a = g.param(Tensor::vector(&[0.0, 1.0]));
        let c = g.param(Tensor::vector(&[0.0, 1.0, 2.0]));
        assert!(loss_ml(&mut g, best, &[a], 3, false).is_err());
        assert!(loss_ml(&mut g, best, &[c], 2, false).is_err());
    }

    #[test]
    fn per_student_terms_sum_to_the_loss() {
        let mut g = Graph::new();
        let best_t = Tensor::vector(&[0.3, -1.0, 2.0]);
        let best = g.constant(best_t.clone());
        let a = g.param(Tensor::vector(&[0.0, 1.0, 1.0]));
        let b = g.param(Tensor::vector(&[1.0, 0.5, -2.0]));
        let full = loss_ml(&mut g, best, &[a, b], 3, false).unwrap();
        let ta = ml_term(&mut g, &best_t, a, 3, false).unwrap();
        let tb = ml_term(&mut g, &best_t, b, 3, false).unwrap();
        let sum = g.value(ta).item().unwrap() + g.value(tb).item().unwrap();
        assert!((g.value(full).item().unwrap() - sum).abs() < 1e-14);
    }
}
