//! Central finite-difference checks of analytic gradients.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub pass: bool,
    pub analytic: Tensor,
    pub numeric: Tensor,
}

/// Relative error of two gradient entries: `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn eval_scalar<F>(f: &F, point: &Tensor, requires_grad: bool) -> Result<(Graph, Var, Var)>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.leaf(point.clone(), requires_grad);
    let y = f(&mut g, x)?;
    if !g.value(y).is_scalar() {
        return Err(Error::domain(
            "grad_check",
            format!("function must be scalar-valued, got shape {:?}", g.value(y).shape()),
        ));
    }
    Ok((g, x, y))
}

/// Compares the analytic gradient of `f` at `point` with central differences
/// of step `eps`. Passes iff the largest elementwise [`rel_err`] is `<= tol`.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let (mut g, x, y) = eval_scalar(&f, point, true)?;
    g.backward(y)?;
    let analytic = g.grad(x).cloned().unwrap_or_else(|| Tensor::zeros(point.shape()));

    let mut numeric = Tensor::zeros(point.shape());
    let mut probe = point.clone();
    for i in 0..point.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (g_plus, _, y_plus) = eval_scalar(&f, &probe, false)?;
        probe.data_mut()[i] = orig - eps;
        let (g_minus, _, y_minus) = eval_scalar(&f, &probe, false)?;
        probe.data_mut()[i] = orig;
        numeric.data_mut()[i] = (g_plus.value(y_plus).data()[0] - g_minus.value(y_minus).data()[0]) / (2.0 * eps);
    }

    let max_rel_err = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_err,
        pass: max_rel_err <= tol,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_passes() {
        let report = grad_check(
            |g, x| {
                let sq = g.mul(x, x)?;
                Ok(g.sum(sq))
            },
            &Tensor::vector(&[1.0, 2.0, 3.0]),
            1e-3,
            1e-4,
        )
        .unwrap();
        assert!(report.pass);
        assert!(report.max_rel_err < 1e-6, "{}", report.max_rel_err);
        assert_eq!(report.analytic.data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let report = grad_check(
            |g, _x| Ok(g.constant(Tensor::scalar(3.0))),
            &Tensor::vector(&[0.3, -0.7]),
            1e-3,
            1e-4,
        )
        .unwrap();
        assert!(report.pass);
        assert_eq!(report.analytic.data(), &[0.0, 0.0]);
        assert_eq!(report.numeric.data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_function_is_rejected() {
        let err = grad_check(|g, x| Ok(g.relu(x)), &Tensor::vector(&[1.0, 2.0]), 1e-3, 1e-4);
        assert!(err.is_err());
    }
}
