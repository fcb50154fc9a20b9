//! Supervised, distillation, correlation and combined training losses.
//!
//! Every loss takes student quantities as graph variables and teacher
//! quantities as plain tensors, so no gradient can reach the teacher.

pub mod correlation;
mod hard;
mod kd;

use serde::{Deserialize, Serialize};

pub use correlation::{CorrelationLoss, CorrelationLossRegistry};
pub use hard::{edge_targets, loss_hard, positive_cells, HardLosses, REG_SMOOTH_L1_BETA};
pub use kd::{loss_kdc, loss_kdr};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Which way the distillation KL divergence points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(teacher || student)`: the teacher defines the target distribution.
    #[default]
    TeacherToStudent,
    StudentToTeacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the supervised classification + regression terms.
    pub lambda_supervised: f64,
    /// Weight of the classification + regression distillation terms.
    pub lambda_kd: f64,
    /// Weight of the per-student correlation loss.
    pub lambda_crl: f64,
    /// Weight of the mutual-learning loss.
    pub lambda_ml: f64,
    /// Distillation temperature.
    pub tau: f64,
    /// Multiply the distillation terms by `tau^2`.
    pub kl_tau_squared: bool,
    pub kl_direction: KlDirection,
    /// Sigmoid sharpness of the response-threshold surrogate.
    pub soft_binarize_beta: f64,
    /// Normalize the mutual-learning sum by `u - 1` peers instead of `u` students.
    pub ml_divide_by_peers: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_supervised: 1.0,
            lambda_kd: 1000.0,
            lambda_crl: 0.2,
            lambda_ml: 20.0,
            tau: 4.0,
            kl_tau_squared: true,
            kl_direction: KlDirection::TeacherToStudent,
            soft_binarize_beta: 50.0,
            ml_divide_by_peers: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("lambda_supervised", self.lambda_supervised),
            ("lambda_kd", self.lambda_kd),
            ("lambda_crl", self.lambda_crl),
            ("lambda_ml", self.lambda_ml),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("loss.{field}"), format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("loss.tau", format!("must be > 0, got {}", self.tau)));
        }
        if !(self.soft_binarize_beta > 0.0 && self.soft_binarize_beta.is_finite()) {
            return Err(Error::config(
                "loss.soft_binarize_beta",
                format!("must be > 0, got {}", self.soft_binarize_beta),
            ));
        }
        Ok(())
    }
}

/// The six loss terms of one student on one sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub cls: f64,
    pub reg: f64,
    pub kdc: f64,
    pub kdr: f64,
    pub crl: f64,
    pub ml: f64,
}

impl LossComponents {
    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("cls", self.cls),
            ("reg", self.reg),
            ("kdc", self.kdc),
            ("kdr", self.kdr),
            ("crl", self.crl),
            ("ml", self.ml),
        ]
    }

    /// `λ1 (cls + reg) + λ2 (kdc + kdr) + λ3 crl + λ4 ml`.
    pub fn total(&self, w: &LossWeights) -> Result<f64> {
        self.check_finite(0)?;
        Ok(w.lambda_supervised * (self.cls + self.reg)
            + w.lambda_kd * (self.kdc + self.kdr)
            + w.lambda_crl * self.crl
            + w.lambda_ml * self.ml)
    }

    /// Errors on the first non-finite term, naming it and `student`.
    pub fn check_finite(&self, student: usize) -> Result<()> {
        match self.named().into_iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::NonFinite {
                component: name.to_string(),
                student,
            }),
            None => Ok(()),
        }
    }

    pub fn add(&mut self, other: &LossComponents) {
        self.cls += other.cls;
        self.reg += other.reg;
        self.kdc += other.kdc;
        self.kdr += other.kdr;
        self.crl += other.crl;
        self.ml += other.ml;
    }

    pub fn scaled(&self, k: f64) -> LossComponents {
        LossComponents {
            cls: self.cls * k,
            reg: self.reg * k,
            kdc: self.kdc * k,
            kdr: self.kdr * k,
            crl: self.crl * k,
            ml: self.ml * k,
        }
    }
}

/// Graph handles of the loss terms; `None` marks a term that is switched off.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossVars {
    pub cls: Option<Var>,
    pub reg: Option<Var>,
    pub kdc: Option<Var>,
    pub kdr: Option<Var>,
    pub crl: Option<Var>,
    pub ml: Option<Var>,
}

impl LossVars {
    pub fn values(&self, g: &Graph) -> LossComponents {
        let v = |x: Option<Var>| x.map_or(0.0, |x| g.value(x).data()[0]);
        LossComponents {
            cls: v(self.cls),
            reg: v(self.reg),
            kdc: v(self.kdc),
            kdr: v(self.kdr),
            crl: v(self.crl),
            ml: v(self.ml),
        }
    }

    /// Records the weighted total on `g`. Terms with zero weight are skipped.
    pub fn total(&self, g: &mut Graph, w: &LossWeights) -> Result<Var> {
        let terms = [
            (self.cls, w.lambda_supervised),
            (self.reg, w.lambda_supervised),
            (self.kdc, w.lambda_kd),
            (self.kdr, w.lambda_kd),
            (self.crl, w.lambda_crl),
            (self.ml, w.lambda_ml),
        ];
        let mut acc: Option<Var> = None;
        for (var, weight) in terms {
            let Some(var) = var else { continue };
            if weight == 0.0 {
                continue;
            }
            let term = g.scale(var, weight);
            acc = Some(match acc {
                Some(a) => g.add(a, term)?,
                None => term,
            });
        }
        Ok(acc.unwrap_or_else(|| g.constant(crate::Tensor::scalar(0.0))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_total_matches_arithmetic() {
        let c = LossComponents {
            cls: 1.0,
            reg: 1.0,
            kdc: 0.001,
            kdr: 0.001,
            crl: 5.0,
            ml: 0.1,
        };
        let w = LossWeights::default();
        assert!((c.total(&w).unwrap() - 7.0).abs() < 1e-12);

        let off = LossWeights {
            lambda_supervised: 0.0,
            lambda_kd: 0.0,
            lambda_crl: 0.0,
            lambda_ml: 0.0,
            ..Default::default()
        };
        assert_eq!(c.total(&off).unwrap(), 0.0);

        let baseline = LossWeights {
            lambda_kd: 0.0,
            lambda_crl: 0.0,
            lambda_ml: 0.0,
            ..Default::default()
        };
        assert_eq!(c.total(&baseline).unwrap(), c.cls + c.reg);
    }

    #[test]
    fn non_finite_component_is_named() {
        let c = LossComponents {
            kdr: f64::NAN,
            ..Default::default()
        };
        let err = c.check_finite(2).unwrap_err();
        assert!(matches!(&err, Error::NonFinite { component, student: 2 } if component == "kdr"));
        assert!(c.total(&LossWeights::default()).is_err());
    }

    #[test]
    fn graph_total_matches_plain_total() {
        let mut g = Graph::new();
        let vals = [0.3, 0.2, 0.004, 0.002, 1.5, 0.25];
        let vars: Vec<Var> = vals.iter().map(|&v| g.param(crate::Tensor::scalar(v))).collect();
        let lv = LossVars {
            cls: Some(vars[0]),
            reg: Some(vars[1]),
            kdc: Some(vars[2]),
            kdr: Some(vars[3]),
            crl: Some(vars[4]),
            ml: Some(vars[5]),
        };
        let w = LossWeights::default();
        let t = lv.total(&mut g, &w).unwrap();
        let expected = lv.values(&g).total(&w).unwrap();
        assert!((g.value(t).data()[0] - expected).abs() < 1e-12);
        g.backward(t).unwrap();
        assert_eq!(g.grad(vars[2]).unwrap().data(), &[1000.0]);
    }

    #[test]
    fn validation_rejects_bad_values() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            tau: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("tau"));
        let bad = LossWeights {
            lambda_ml: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
