//! Correlation-map losses. Each student is paired with one of these by name;
//! the choice of loss is what makes the students learn different things from
//! the same teacher.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::LossWeights;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A differentiable distance between a student correlation map (graph
/// variable) and a teacher correlation map (constant), both `[C, H, W]`.
pub trait CorrelationLoss: Send + Sync {
    fn name(&self) -> &'static str;

    fn loss(&self, g: &mut Graph, student: Var, teacher: &Tensor) -> Result<Var>;
}

impl fmt::Debug for dyn CorrelationLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CorrelationLoss({})", self.name())
    }
}

fn check_pair(op: &'static str, g: &Graph, student: Var, teacher: &Tensor) -> Result<(usize, usize, usize)> {
    let s = g.value(student).shape();
    if s != teacher.shape() || s.len() != 3 {
        return Err(Error::shape(op, s, teacher.shape()));
    }
    Ok((s[0], s[1], s[2]))
}

/// Mean squared error over all elements.
#[derive(Clone, Copy, Debug, Default)]
pub struct L2Loss;

impl CorrelationLoss for L2Loss {
    fn name(&self) -> &'static str {
        "l2"
    }

    fn loss(&self, g: &mut Graph, student: Var, teacher: &Tensor) -> Result<Var> {
        check_pair("loss_crl_l2", g, student, teacher)?;
        let t = g.constant(teacher.clone());
        g.mse(student, t)
    }
}

/// `deg(i) * P_i - sum of the 4-neighbors of i` as a matrix over the
/// row-major flattened `h x w` grid. Out-of-grid neighbors are skipped.
pub fn neighbor_gap_matrix(h: usize, w: usize) -> Tensor {
    let m = h * w;
    let mut a = Tensor::zeros(&[m, m]);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let neighbors = [
                (r > 0).then(|| i - w),
                (r + 1 < h).then(|| i + w),
                (c > 0).then(|| i - 1),
                (c + 1 < w).then(|| i + 1),
            ];
            for j in neighbors.into_iter().flatten() {
                a.data_mut()[i * m + i] += 1.0;
                a.data_mut()[i * m + j] -= 1.0;
            }
        }
    }
    a
}

/// Spatial consistency: each channel is softmax-normalized over its grid,
/// then the summed gap between every pixel and its 4-neighbors is compared.
#[derive(Clone, Copy, Debug, Default)]
pub struct SpatialConsistencyLoss;

impl SpatialConsistencyLoss {
    fn gaps(g: &mut Graph, map: Var, c: usize, h: usize, w: usize) -> Result<Var> {
        let flat = g.reshape(map, &[c, h * w])?;
        let p = g.softmax(flat, 1, 1.0)?;
        // the gap matrix is symmetric, so P · Aᵀ = P · A
        let a = g.constant(neighbor_gap_matrix(h, w));
        g.matmul(p, a)
    }
}

impl CorrelationLoss for SpatialConsistencyLoss {
    fn name(&self) -> &'static str {
        "spatial"
    }

    fn loss(&self, g: &mut Graph, student: Var, teacher: &Tensor) -> Result<Var> {
        let (c, h, w) = check_pair("loss_crl_spatial", g, student, teacher)?;
        let ns = Self::gaps(g, student, c, h, w)?;
        let mut tg = Graph::new();
        let tv = tg.constant(teacher.clone());
        let nt = Self::gaps(&mut tg, tv, c, h, w)?;
        let nt = g.constant(tg.value(nt).clone());
        g.mse(ns, nt)
    }
}

/// Response threshold: each channel is binarized against its own mean
/// (`P_i > mean`, ties give 0). The student uses the sigmoid surrogate
/// `σ(beta (P_i - mean))` so that gradients exist.
#[derive(Clone, Copy, Debug)]
pub struct ResponseThresholdLoss {
    pub beta: f64,
}

impl ResponseThresholdLoss {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::domain("loss_crl_response", format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { beta })
    }
}

/// Hard mean-threshold bits of every channel of a `[C, H, W]` map.
pub fn hard_bits(map: &Tensor) -> Tensor {
    let c = map.shape()[0];
    let m = map.numel() / c;
    let mut out = Tensor::zeros(map.shape());
    for (src, dst) in map.data().chunks(m).zip(out.data_mut().chunks_mut(m)) {
        let mean = src.iter().sum::<f64>() / m as f64;
        for (s, d) in src.iter().zip(dst) {
            *d = if *s > mean { 1.0 } else { 0.0 };
        }
    }
    out
}

/// Signed mean of `B_S - B_T` over hard bits, averaged over channels. Can be
/// negative, so it is reported but never trained on.
pub fn response_signed_diagnostic(student: &Tensor, teacher: &Tensor) -> Result<f64> {
    if student.shape() != teacher.shape() || student.rank() != 3 {
        return Err(Error::shape("response_signed_diagnostic", student.shape(), teacher.shape()));
    }
    let (bs, bt) = (hard_bits(student), hard_bits(teacher));
    Ok(bs.data().iter().zip(bt.data()).map(|(s, t)| s - t).sum::<f64>() / student.numel() as f64)
}

/// Mean of `(B_S - B_T)^2` over hard bits, averaged over channels.
pub fn response_hard_squared(student: &Tensor, teacher: &Tensor) -> Result<f64> {
    if student.shape() != teacher.shape() || student.rank() != 3 {
        return Err(Error::shape("response_hard_squared", student.shape(), teacher.shape()));
    }
    let (bs, bt) = (hard_bits(student), hard_bits(teacher));
    Ok(bs.data().iter().zip(bt.data()).map(|(s, t)| (s - t) * (s - t)).sum::<f64>() / student.numel() as f64)
}

impl CorrelationLoss for ResponseThresholdLoss {
    fn name(&self) -> &'static str {
        "response"
    }

    fn loss(&self, g: &mut Graph, student: Var, teacher: &Tensor) -> Result<Var> {
        let (c, h, w) = check_pair("loss_crl_response", g, student, teacher)?;
        let m = h * w;
        let flat = g.reshape(student, &[c, m])?;
        let centering = Tensor::from_fn(&[m, m], |k| {
            let diag = if k / m == k % m { 1.0 } else { 0.0 };
            diag - 1.0 / m as f64
        });
        let centering = g.constant(centering);
        let centered = g.matmul(flat, centering)?;
        let sharp = g.scale(centered, self.beta);
        let soft = g.sigmoid(sharp);
        let target = g.constant(hard_bits(teacher).reshape(&[c, m])?);
        g.mse(soft, target)
    }
}

/// Placeholder strategy for students trained without a correlation loss.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoCorrelationLoss;

impl CorrelationLoss for NoCorrelationLoss {
    fn name(&self) -> &'static str {
        "none"
    }

    fn loss(&self, g: &mut Graph, student: Var, teacher: &Tensor) -> Result<Var> {
        check_pair("loss_crl_none", g, student, teacher)?;
        Ok(g.constant(Tensor::scalar(0.0)))
    }
}

type Factory = Arc<dyn Fn(&LossWeights) -> Result<Arc<dyn CorrelationLoss>> + Send + Sync>;

/// Correlation losses by name.
#[derive(Clone)]
pub struct CorrelationLossRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for CorrelationLossRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for CorrelationLossRegistry {
    /// `l2`, `spatial`, `response` and `none`.
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("l2", |_| Ok(Arc::new(L2Loss)));
        r.register("spatial", |_| Ok(Arc::new(SpatialConsistencyLoss)));
        r.register("response", |w| Ok(Arc::new(ResponseThresholdLoss::new(w.soft_binarize_beta)?)));
        r.register("none", |_| Ok(Arc::new(NoCorrelationLoss)));
        r
    }
}

impl CorrelationLossRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Adds or replaces the loss registered under `name`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&LossWeights) -> Result<Arc<dyn CorrelationLoss>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, weights: &LossWeights) -> Result<Arc<dyn CorrelationLoss>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::config(
                "loss_kind",
                format!("unknown correlation loss `{name}` (registered: {})", self.names().join(", ")),
            )
        })?;
        factory(weights)
    }
}
