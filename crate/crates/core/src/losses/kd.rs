use super::{KlDirection, LossWeights};
use crate::autodiff::{softmax_tensor, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// KL between tempered softmaxes of student logits (graph) and teacher logits
/// (constant) along `axis`, divided by `groups` and optionally scaled by `tau^2`.
fn tempered_kl(
    g: &mut Graph,
    op: &'static str,
    student: Var,
    teacher: &Tensor,
    axis: usize,
    groups: usize,
    w: &LossWeights,
) -> Result<Var> {
    if g.value(student).shape() != teacher.shape() {
        return Err(Error::shape(op, g.value(student).shape(), teacher.shape()));
    }
    let q = g.softmax(student, axis, w.tau)?;
    let p = g.constant(softmax_tensor(teacher, axis, w.tau, false)?);
    let kl = match w.kl_direction {
        KlDirection::TeacherToStudent => g.kl_div(p, q)?,
        KlDirection::StudentToTeacher => g.kl_div(q, p)?,
    };
    let scale = if w.kl_tau_squared { w.tau * w.tau } else { 1.0 };
    Ok(g.scale(kl, scale / groups as f64))
}

/// Classification distillation: per-position softmax over the class channels
/// of `[2, H, W]` logits, KL averaged over positions.
pub fn loss_kdc(g: &mut Graph, student_cls: Var, teacher_cls: &Tensor, w: &LossWeights) -> Result<Var> {
    let s = teacher_cls.shape();
    if s.len() != 3 {
        return Err(Error::shape("loss_kdc", g.value(student_cls).shape(), s));
    }
    tempered_kl(g, "loss_kdc", student_cls, teacher_cls, 0, s[1] * s[2], w)
}

/// Regression distillation: each of the 4 edge channels of `[4, H, W]` logits
/// becomes a distribution over the flattened grid; KL averaged over channels.
pub fn loss_kdr(g: &mut Graph, student_reg: Var, teacher_reg: &Tensor, w: &LossWeights) -> Result<Var> {
    let (ss, ts) = (g.value(student_reg).shape().to_vec(), teacher_reg.shape());
    if ss != ts || ss.len() != 3 {
        return Err(Error::shape("loss_kdr", &ss, ts));
    }
    let (c, m) = (ss[0], ss[1] * ss[2]);
    let flat = g.reshape(student_reg, &[c, m])?;
    let teacher_flat = teacher_reg.reshape(&[c, m])?;
    tempered_kl(g, "loss_kdr", flat, &teacher_flat, 1, c, w)
}
