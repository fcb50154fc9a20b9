//! Teacher pre-training and the multi-student distillation loop.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::samples::{epoch_plan, materialize, SampleSpec, TrainingSample};
use super::{elect, foreground_probability, ml_term, ElectionResult};
use crate::autodiff::{Graph, Var};
use crate::data::Sequence;
use crate::error::{Error, Result};
use crate::losses::{loss_hard, loss_kdc, loss_kdr, CorrelationLoss, CorrelationLossRegistry, LossComponents, LossVars, LossWeights};
use crate::optim::Sgd;
use crate::tensor::Tensor;
use crate::tracker::{checkpoint, TrackerModel, TrackerVars, BACKBONE_PARAMS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    TeacherPretrain,
    StudentNoCrl,
    StudentsIndependent,
    StudentsMutual,
}

impl TrainMode {
    pub const ALL: [TrainMode; 4] = [
        TrainMode::TeacherPretrain,
        TrainMode::StudentNoCrl,
        TrainMode::StudentsIndependent,
        TrainMode::StudentsMutual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::TeacherPretrain => "teacher-pretrain",
            TrainMode::StudentNoCrl => "student-no-crl",
            TrainMode::StudentsIndependent => "students-independent",
            TrainMode::StudentsMutual => "students-mutual",
        }
    }

    pub fn needs_teacher(self) -> bool {
        self != TrainMode::TeacherPretrain
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "teacher" {
            return Ok(TrainMode::TeacherPretrain);
        }
        TrainMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = TrainMode::ALL.iter().map(|m| m.name()).collect();
            Error::config("mode", format!("unknown mode `{s}` (expected teacher or one of {})", names.join(", ")))
        })
    }
}

/// One student of a cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentSpec {
    /// 1-based.
    pub id: usize,
    pub loss_kind: String,
    pub model: TrackerModel,
}

impl StudentSpec {
    /// A copy of the teacher's tracker with trainable backbone and frozen heads.
    pub fn from_teacher(id: usize, loss_kind: &str, teacher: &TrackerModel) -> Self {
        let mut model = teacher.clone();
        model.unfreeze_all();
        model.freeze_heads();
        Self {
            id,
            loss_kind: loss_kind.to_string(),
            model,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudentStep {
    pub id: usize,
    pub components: LossComponents,
    pub total: f64,
}

/// Batch-mean losses of one optimizer step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub students: Vec<StudentStep>,
    /// Elected id per sample; empty without mutual learning.
    pub elected: Vec<usize>,
}

/// Losses and parameter gradients of every student on one sample.
#[derive(Clone, Debug)]
pub struct SampleGradients {
    pub components: Vec<LossComponents>,
    pub totals: Vec<f64>,
    /// Per student, one slot per parameter; `None` for frozen parameters.
    pub grads: Vec<Vec<Option<Tensor>>>,
    pub election: Option<ElectionResult>,
}

struct Live {
    g: Graph,
    bound: Vec<Var>,
    out: TrackerVars,
}

fn check_cohort(teacher: &TrackerModel, students: &[StudentSpec], losses: &[Arc<dyn CorrelationLoss>], mutual: bool) -> Result<()> {
    if !teacher.is_fully_frozen() {
        return Err(Error::domain("distill_step", "teacher parameters must be frozen"));
    }
    if students.is_empty() || losses.len() != students.len() {
        return Err(Error::domain(
            "distill_step",
            format!("{} students but {} correlation losses", students.len(), losses.len()),
        ));
    }
    if mutual && students.len() < 2 {
        return Err(Error::domain("distill_step", "mutual learning needs at least 2 students"));
    }
    for (k, s) in students.iter().enumerate() {
        if s.id != k + 1 {
            return Err(Error::domain("distill_step", format!("student ids must be 1..=u in order, found {} at {}", s.id, k + 1)));
        }
        if s.model.params[BACKBONE_PARAMS..].iter().any(|p| !p.frozen) {
            return Err(Error::domain("distill_step", format!("student {} has trainable head parameters", s.id)));
        }
    }
    Ok(())
}

fn finish(live: &mut Live, vars: &LossVars, w: &LossWeights, student: usize) -> Result<(LossComponents, f64, Vec<Option<Tensor>>)> {
    let components = vars.values(&live.g);
    components.check_finite(student)?;
    let total = vars.total(&mut live.g, w)?;
    let total_value = live.g.value(total).item()?;
    if !total_value.is_finite() {
        return Err(Error::NonFinite {
            component: "total".into(),
            student,
        });
    }
    live.g.backward(total)?;
    let grads = live.bound.iter().map(|&v| live.g.grad(v).cloned()).collect();
    Ok((components, total_value, grads))
}

/// Forward and backward passes of every student on one sample. The teacher
/// sees the enhanced crops, students the dark ones. With `mutual`, the
/// student whose foreground map is most persuasive is elected and its
/// correlation map becomes a constant target for the others; the elected
/// student gets no mutual-learning term.
pub fn sample_gradients(
    teacher: &TrackerModel,
    students: &[StudentSpec],
    losses: &[Arc<dyn CorrelationLoss>],
    sample: &TrainingSample,
    w: &LossWeights,
    mutual: bool,
) -> Result<SampleGradients> {
    check_cohort(teacher, students, losses, mutual)?;
    let t = teacher.forward(&sample.template_enhanced, &sample.search_enhanced)?;
    let mut live = students
        .iter()
        .map(|s| {
            let mut g = Graph::new();
            let bound = s.model.bind(&mut g);
            let z = g.constant(sample.template_dark.clone());
            let x = g.constant(sample.search_dark.clone());
            let out = s.model.forward_graph(&mut g, &bound, z, x)?;
            Ok(Live { g, bound, out })
        })
        .collect::<Result<Vec<_>>>()?;

    let election = if mutual {
        let maps = live
            .iter()
            .map(|l| foreground_probability(l.g.value(l.out.cls)))
            .collect::<Result<Vec<_>>>()?;
        Some(elect(&maps)?)
    } else {
        None
    };
    let best = election.as_ref().map(|e| (e.best_id, live[e.best_id - 1].g.value(live[e.best_id - 1].out.corr).clone()));

    let u = students.len();
    let mut components = Vec::with_capacity(u);
    let mut totals = Vec::with_capacity(u);
    let mut grads = Vec::with_capacity(u);
    for ((l, s), crl) in live.iter_mut().zip(students).zip(losses) {
        let g = &mut l.g;
        let hard = loss_hard(g, l.out.cls, l.out.reg, &sample.gt)?;
        let mut vars = LossVars {
            cls: Some(hard.cls),
            reg: Some(hard.reg),
            kdc: Some(loss_kdc(g, l.out.cls, &t.cls, w)?),
            kdr: Some(loss_kdr(g, l.out.reg, &t.reg, w)?),
            crl: Some(crl.loss(g, l.out.corr, &t.corr)?),
            ml: None,
        };
        if let Some((best_id, best_corr)) = &best {
            if *best_id != s.id {
                vars.ml = Some(ml_term(g, best_corr, l.out.corr, u, w.ml_divide_by_peers)?);
            }
        }
        let (c, total, gr) = finish(l, &vars, w, s.id)?;
        components.push(c);
        totals.push(total);
        grads.push(gr);
    }
    Ok(SampleGradients {
        components,
        totals,
        grads,
        election,
    })
}

/// Supervised loss and gradients of a tracker on one sample. `enhanced`
/// selects the enhanced crops, as used for the teacher.
pub fn supervised_gradients(
    model: &TrackerModel,
    sample: &TrainingSample,
    w: &LossWeights,
    enhanced: bool,
) -> Result<(LossComponents, f64, Vec<Option<Tensor>>)> {
    let (z, x) = if enhanced {
        (&sample.template_enhanced, &sample.search_enhanced)
    } else {
        (&sample.template_dark, &sample.search_dark)
    };
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let zv = g.constant(z.clone());
    let xv = g.constant(x.clone());
    let out = model.forward_graph(&mut g, &bound, zv, xv)?;
    let hard = loss_hard(&mut g, out.cls, out.reg, &sample.gt)?;
    let vars = LossVars {
        cls: Some(hard.cls),
        reg: Some(hard.reg),
        ..LossVars::default()
    };
    let mut live = Live { g, bound, out };
    finish(&mut live, &vars, w, 0)
}

fn mean_grads<'a>(per_sample: impl Iterator<Item = &'a [Option<Tensor>]>, n: usize) -> Vec<Option<Tensor>> {
    let mut acc: Vec<Option<Tensor>> = Vec::new();
    for grads in per_sample {
        if acc.is_empty() {
            acc = vec![None; grads.len()];
        }
        for (a, g) in acc.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            match a {
                Some(a) => a.add_assign(g),
                None => *a = Some(g.clone()),
            }
        }
    }
    let k = 1.0 / n as f64;
    acc.into_iter().map(|a| a.map(|t| t.map(|v| v * k))).collect()
}

fn mean_components<'a>(items: impl Iterator<Item = (&'a LossComponents, f64)>, n: usize) -> (LossComponents, f64) {
    let mut c = LossComponents::default();
    let mut t = 0.0;
    for (x, total) in items {
        c.add(x);
        t += total;
    }
    (c.scaled(1.0 / n as f64), t / n as f64)
}

/// One optimizer step for every student on `batch`. Samples are processed
/// in parallel and reduced in batch order, so results do not depend on the
/// thread count.
pub fn distill_step(
    teacher: &TrackerModel,
    students: &mut [StudentSpec],
    losses: &[Arc<dyn CorrelationLoss>],
    batch: &[TrainingSample],
    w: &LossWeights,
    mutual: bool,
    sgd: &Sgd,
) -> Result<StepReport> {
    check_cohort(teacher, students, losses, mutual)?;
    if batch.is_empty() {
        return Err(Error::domain("distill_step", "empty batch"));
    }
    let frozen: &[StudentSpec] = students;
    let outs = batch
        .par_iter()
        .map(|s| sample_gradients(teacher, frozen, losses, s, w, mutual))
        .collect::<Result<Vec<_>>>()?;
    let n = batch.len();
    let mut report = StepReport {
        elected: outs.iter().filter_map(|o| o.election.as_ref().map(|e| e.best_id)).collect(),
        ..StepReport::default()
    };
    for (k, student) in students.iter_mut().enumerate() {
        let (components, total) = mean_components(outs.iter().map(|o| (&o.components[k], o.totals[k])), n);
        let grads = mean_grads(outs.iter().map(|o| o.grads[k].as_slice()), n);
        sgd.step(&mut student.model, &grads)?;
        report.students.push(StudentStep {
            id: student.id,
            components,
            total,
        });
    }
    Ok(report)
}

/// One supervised optimizer step of a tracker on the enhanced crops of `batch`.
pub fn supervised_step(model: &mut TrackerModel, batch: &[TrainingSample], w: &LossWeights, sgd: &Sgd) -> Result<StudentStep> {
    if batch.is_empty() {
        return Err(Error::domain("supervised_step", "empty batch"));
    }
    let frozen: &TrackerModel = model;
    let outs = batch
        .par_iter()
        .map(|s| supervised_gradients(frozen, s, w, true))
        .collect::<Result<Vec<_>>>()?;
    let n = batch.len();
    let (components, total) = mean_components(outs.iter().map(|o| (&o.0, o.1)), n);
    let grads = mean_grads(outs.iter().map(|o| o.2.as_slice()), n);
    sgd.step(model, &grads)?;
    Ok(StudentStep { id: 0, components, total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    /// Student epochs.
    pub epochs: usize,
    pub teacher_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub teacher_lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub samples_per_epoch: usize,
    pub sampling: SampleSpec,
    /// Correlation loss of each student, student 1 first.
    pub loss_kinds: Vec<String>,
    /// Continue from the last completed epoch found in the output directory.
    pub resume: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 10,
            teacher_epochs: 10,
            batch_size: 16,
            lr: 0.005,
            teacher_lr: 0.05,
            max_grad_norm: Some(5.0),
            samples_per_epoch: 2400,
            sampling: SampleSpec::default(),
            loss_kinds: vec!["l2".into(), "spatial".into(), "response".into()],
            resume: false,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self, registry: &CorrelationLossRegistry) -> Result<()> {
        for (field, v) in [
            ("train.epochs", self.epochs),
            ("train.teacher_epochs", self.teacher_epochs),
            ("train.batch_size", self.batch_size),
            ("train.samples_per_epoch", self.samples_per_epoch),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        for (field, v) in [("train.lr", self.lr), ("train.teacher_lr", self.teacher_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        if let Some(m) = self.max_grad_norm {
            if !(m > 0.0) {
                return Err(Error::config("train.max_grad_norm", format!("must be > 0, got {m}")));
            }
        }
        if self.loss_kinds.len() < 2 {
            return Err(Error::config("train.loss_kinds", "need at least 2 students"));
        }
        if let Some(k) = self.loss_kinds.iter().find(|k| !registry.contains(k)) {
            return Err(Error::config(
                "train.loss_kinds",
                format!("unknown correlation loss `{k}` (registered: {})", registry.names().join(", ")),
            ));
        }
        self.sampling.validate()
    }
}

/// What [`run_training`] needs besides the options.
#[derive(Clone, Copy)]
pub struct TrainRequest<'a> {
    pub mode: TrainMode,
    pub data: &'a [Sequence],
    /// Required by every mode except teacher pre-training.
    pub teacher: Option<&'a TrackerModel>,
    pub weights: &'a LossWeights,
    pub options: &'a TrainOptions,
    pub registry: &'a CorrelationLossRegistry,
    pub seed: u64,
    /// Receives checkpoints and the NDJSON log when set.
    pub out_dir: Option<&'a Path>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    /// Checkpoint stem, e.g. `student2_spatial`.
    pub name: String,
    /// 0 for the teacher.
    pub id: usize,
    pub loss_kind: String,
    pub model: TrackerModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub students: Vec<StudentStep>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub mode: TrainMode,
    pub models: Vec<TrainedModel>,
    /// Times each student was elected; all zeros without mutual learning.
    pub election_histogram: Vec<u64>,
    pub epochs: Vec<EpochSummary>,
}

/// Checkpoint stem of every model a mode produces.
pub fn model_names(mode: TrainMode, loss_kinds: &[String]) -> Vec<String> {
    match mode {
        TrainMode::TeacherPretrain => vec!["teacher".into()],
        TrainMode::StudentNoCrl => vec!["student_no_crl".into()],
        TrainMode::StudentsIndependent => loss_kinds.iter().enumerate().map(|(i, k)| format!("student{}_{k}", i + 1)).collect(),
        TrainMode::StudentsMutual => loss_kinds.iter().enumerate().map(|(i, k)| format!("mutual{}_{k}", i + 1)).collect(),
    }
}

struct Cohort {
    names: Vec<String>,
    students: Vec<StudentSpec>,
    teacher: Option<TrackerModel>,
    losses: Vec<Arc<dyn CorrelationLoss>>,
    weights: LossWeights,
    mutual: bool,
}

fn build_cohort(req: &TrainRequest) -> Result<Cohort> {
    let opts = req.options;
    if req.mode == TrainMode::TeacherPretrain {
        return Ok(Cohort {
            names: vec!["teacher".into()],
            students: vec![StudentSpec {
                id: 0,
                loss_kind: "supervised".into(),
                model: TrackerModel::new(req.seed),
            }],
            teacher: None,
            losses: Vec::new(),
            weights: req.weights.clone(),
            mutual: false,
        });
    }
    let mut teacher = req
        .teacher
        .ok_or_else(|| Error::config("teacher", format!("mode {} needs a trained teacher", req.mode)))?
        .clone();
    teacher.freeze_all();
    let mut weights = req.weights.clone();
    let kinds: Vec<String> = if req.mode == TrainMode::StudentNoCrl {
        weights.lambda_crl = 0.0;
        weights.lambda_ml = 0.0;
        vec!["none".into()]
    } else {
        opts.loss_kinds.clone()
    };
    let names = model_names(req.mode, &kinds);
    let losses = kinds.iter().map(|k| req.registry.build(k, &weights)).collect::<Result<Vec<_>>>()?;
    let students = kinds.iter().enumerate().map(|(i, k)| StudentSpec::from_teacher(i + 1, k, &teacher)).collect();
    Ok(Cohort {
        names,
        students,
        teacher: Some(teacher),
        losses,
        weights,
        mutual: req.mode == TrainMode::StudentsMutual,
    })
}

pub fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.ckpt"))
}

/// Completed epochs and election histogram stored with the last checkpoints,
/// if every model of the cohort has one from the same epoch.
fn find_resume_point(dir: &Path, cohort: &mut Cohort, mode: TrainMode, seed: u64) -> Result<Option<(usize, Vec<u64>)>> {
    let mut found: Option<(usize, Vec<u64>)> = None;
    for (name, m) in cohort.names.iter().zip(&mut cohort.students) {
        let path = checkpoint_path(dir, name);
        if !path.exists() {
            return Ok(None);
        }
        let (model, meta) = checkpoint::load(&path)?;
        let same_run = meta["mode"] == mode.name() && meta["seed"] == seed;
        let Some(epoch) = meta["epoch"].as_u64().filter(|_| same_run) else {
            return Ok(None);
        };
        let hist: Vec<u64> = serde_json::from_value(meta["election_histogram"].clone()).unwrap_or_default();
        if found.as_ref().is_some_and(|(e, _)| *e != epoch as usize) {
            return Ok(None);
        }
        found = Some((epoch as usize, hist));
        m.model = model;
    }
    Ok(found)
}

fn open_log(dir: &Path, mode: TrainMode, append: bool) -> Result<BufWriter<File>> {
    let path = dir.join(format!("train_{}.ndjson", mode.name()));
    let file = if append {
        OpenOptions::new().create(true).append(true).open(&path)
    } else {
        File::create(&path)
    }
    .map_err(|e| Error::io(&path, e))?;
    Ok(BufWriter::new(file))
}

/// Runs every epoch of one training mode.
///
/// Students start as copies of the teacher with frozen heads. The sample plan
/// of an epoch depends only on `(seed, epoch)`, so the same request always
/// yields the same parameters, and a resumed run matches an uninterrupted one.
pub fn run_training(req: &TrainRequest) -> Result<TrainOutcome> {
    let opts = req.options;
    opts.validate(req.registry)?;
    req.weights.validate()?;
    if req.mode == TrainMode::TeacherPretrain && req.teacher.is_some() {
        return Err(Error::config("teacher", "teacher-pretrain trains a new teacher; none may be given"));
    }
    let mut cohort = build_cohort(req)?;
    let u = cohort.students.len();
    let (epochs, lr) = if req.mode == TrainMode::TeacherPretrain {
        (opts.teacher_epochs, opts.teacher_lr)
    } else {
        (opts.epochs, opts.lr)
    };
    let sgd = Sgd {
        lr,
        max_grad_norm: opts.max_grad_norm,
    };

    let mut start = 0;
    let mut histogram = vec![0u64; u];
    if let (true, Some(dir)) = (opts.resume, req.out_dir) {
        if let Some((done, hist)) = find_resume_point(dir, &mut cohort, req.mode, req.seed)? {
            log::info!("{}: resuming after epoch {done}", req.mode);
            start = done;
            if hist.len() == u {
                histogram = hist;
            }
        }
    }
    let mut log_file = match req.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(open_log(dir, req.mode, start > 0)?)
        }
        None => None,
    };

    let mut summaries = Vec::new();
    let mut step = start * opts.samples_per_epoch.div_ceil(opts.batch_size);
    for epoch in start..epochs {
        let plan = epoch_plan(req.data, req.seed, epoch, opts.samples_per_epoch, &opts.sampling)?;
        let mut sums = vec![StudentStep::default(); u];
        let mut batches = 0usize;
        for refs in plan.chunks(opts.batch_size) {
            let batch: Vec<TrainingSample> = refs.par_iter().map(|r| materialize(req.data, r)).collect();
            let report = match &cohort.teacher {
                None => {
                    let s = supervised_step(&mut cohort.students[0].model, &batch, &cohort.weights, &sgd)?;
                    StepReport {
                        students: vec![s],
                        elected: Vec::new(),
                    }
                }
                Some(teacher) => distill_step(
                    teacher,
                    &mut cohort.students,
                    &cohort.losses,
                    &batch,
                    &cohort.weights,
                    cohort.mutual,
                    &sgd,
                )?,
            };
            for &id in &report.elected {
                histogram[id - 1] += 1;
            }
            if let Some(w) = log_file.as_mut() {
                for s in &report.students {
                    let rec = json!({
                        "epoch": epoch + 1,
                        "step": step + 1,
                        "student_id": s.id,
                        "cls": s.components.cls,
                        "reg": s.components.reg,
                        "kdc": s.components.kdc,
                        "kdr": s.components.kdr,
                        "crl": s.components.crl,
                        "ml": s.components.ml,
                        "total": s.total,
                        "elected_ids": report.elected,
                    });
                    writeln!(w, "{rec}").map_err(|e| Error::io("train log", e))?;
                }
            }
            for (acc, s) in sums.iter_mut().zip(&report.students) {
                acc.id = s.id;
                acc.components.add(&s.components);
                acc.total += s.total;
            }
            batches += 1;
            step += 1;
        }
        let students: Vec<StudentStep> = sums
            .into_iter()
            .map(|s| StudentStep {
                id: s.id,
                components: s.components.scaled(1.0 / batches as f64),
                total: s.total / batches as f64,
            })
            .collect();
        for s in &students {
            log::info!("{} epoch {}/{} student {}: total {:.5}", req.mode, epoch + 1, epochs, s.id, s.total);
        }
        summaries.push(EpochSummary {
            epoch: epoch + 1,
            students,
        });
        if let Some(w) = log_file.as_mut() {
            w.flush().map_err(|e| Error::io("train log", e))?;
        }
        if let Some(dir) = req.out_dir {
            for (name, m) in cohort.names.iter().zip(&cohort.students) {
                let meta = json!({
                    "mode": req.mode.name(),
                    "epoch": epoch + 1,
                    "epochs": epochs,
                    "seed": req.seed,
                    "student_id": m.id,
                    "loss_kind": m.loss_kind,
                    "election_histogram": histogram,
                });
                checkpoint::save(&checkpoint_path(dir, name), &m.model, meta)?;
            }
        }
    }
    Ok(TrainOutcome {
        mode: req.mode,
        models: cohort
            .names
            .into_iter()
            .zip(cohort.students)
            .map(|(name, s)| TrainedModel {
                name,
                id: s.id,
                loss_kind: s.loss_kind,
                model: s.model,
            })
            .collect(),
        election_histogram: histogram,
        epochs: summaries,
    })
}
