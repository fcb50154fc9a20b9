//! The four commands: data generation, training, evaluation, and the full
//! ablation. Each writes its resolved configuration into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::data::io::{read_dataset, write_dataset};
use crate::data::{generate, GenConfig, Sequence};
use crate::error::{Error, Result};
use crate::eval::{compare, evaluate, run_model, write_predictions, write_reports, CompareTable, EvalReport};
use crate::losses::CorrelationLossRegistry;
use crate::mutual::train::{checkpoint_path, run_training, TrainMode, TrainOutcome, TrainRequest};
use crate::tracker::{checkpoint, TrackerModel};

pub const ABLATION_ROWS: [&str; 6] = ["Teacher", "Student w/o CRL", "Student 1", "Student 2", "Student 3", "MLKD-Track"];

/// Daytime and darkened renditions of one generated set.
#[derive(Clone, Debug)]
pub struct Renditions {
    pub day: Vec<Sequence>,
    pub night: Vec<Sequence>,
}

pub fn render(gen: &GenConfig, cfg: &RunConfig) -> Result<Renditions> {
    let day = generate(gen)?;
    let night = day.iter().map(|s| s.darkened(&cfg.data.dark_model)).collect();
    Ok(Renditions { day, night })
}

fn data_root(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("data")
}

#[derive(Clone, Debug, Serialize)]
pub struct GenSummary {
    pub root: PathBuf,
    pub train_sequences: usize,
    pub train_frames: usize,
    pub eval_sequences: usize,
    pub eval_frames: usize,
}

/// Writes `<out>/data/{train,eval}/{day,night}/<sequence>/`.
pub fn cmd_gen_data(cfg: &RunConfig) -> Result<GenSummary> {
    cfg.write_resolved(&cfg.out_dir)?;
    let root = data_root(cfg);
    let mut counts = Vec::new();
    for (split, gen) in [("train", &cfg.data.train), ("eval", &cfg.data.eval)] {
        let r = render(gen, cfg)?;
        write_dataset(&root.join(split).join("day"), &r.day)?;
        write_dataset(&root.join(split).join("night"), &r.night)?;
        counts.push((r.night.len(), r.night.iter().map(Sequence::len).sum::<usize>()));
    }
    Ok(GenSummary {
        root,
        train_sequences: counts[0].0,
        train_frames: counts[0].1,
        eval_sequences: counts[1].0,
        eval_frames: counts[1].1,
    })
}

/// Nighttime sequences of a split: the configured directory, else the
/// output directory's generated data, else generated in memory.
fn night_split(cfg: &RunConfig, explicit: Option<&Path>, split: &str, gen: &GenConfig) -> Result<Vec<Sequence>> {
    if let Some(dir) = explicit {
        if !dir.is_dir() {
            return Err(Error::config(format!("data.{split}_dir"), format!("{} is not a directory", dir.display())));
        }
        return read_dataset(dir);
    }
    let generated = data_root(cfg).join(split).join("night");
    if generated.is_dir() {
        return read_dataset(&generated);
    }
    Ok(render(gen, cfg)?.night)
}

pub fn train_data(cfg: &RunConfig) -> Result<Vec<Sequence>> {
    night_split(cfg, cfg.data.train_dir.as_deref(), "train", &cfg.data.train)
}

pub fn eval_data(cfg: &RunConfig) -> Result<Vec<Sequence>> {
    night_split(cfg, cfg.data.eval_dir.as_deref(), "eval", &cfg.data.eval)
}

pub fn load_teacher(path: &Path) -> Result<TrackerModel> {
    if !path.exists() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: "teacher checkpoint not found; train the teacher first".into(),
        });
    }
    Ok(checkpoint::load(path)?.0)
}

fn train_mode(cfg: &RunConfig, mode: TrainMode, data: &[Sequence], teacher: Option<&TrackerModel>, registry: &CorrelationLossRegistry) -> Result<TrainOutcome> {
    let dir = cfg.checkpoint_dir();
    run_training(&TrainRequest {
        mode,
        data,
        teacher,
        weights: &cfg.loss,
        options: &cfg.train,
        registry,
        seed: cfg.seed,
        out_dir: Some(&dir),
    })
}

/// Trains the configured mode; distillation modes read the teacher checkpoint.
pub fn cmd_train(cfg: &RunConfig, registry: &CorrelationLossRegistry) -> Result<TrainOutcome> {
    let teacher = if cfg.mode.needs_teacher() {
        Some(load_teacher(&cfg.teacher_path())?)
    } else {
        None
    };
    cfg.write_resolved(&cfg.out_dir)?;
    let data = train_data(cfg)?;
    train_mode(cfg, cfg.mode, &data, teacher.as_ref(), registry)
}

/// A checkpoint to evaluate and how it was produced.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub name: String,
    pub model: TrackerModel,
    pub is_teacher: bool,
    pub mode: Option<TrainMode>,
}

pub fn load_candidate(path: &Path) -> Result<Candidate> {
    let (model, meta) = checkpoint::load(path)?;
    let mode = meta["mode"].as_str().and_then(|m| m.parse().ok());
    let name = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    Ok(Candidate {
        is_teacher: mode == Some(TrainMode::TeacherPretrain),
        name,
        model,
        mode,
    })
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub reports: Vec<(String, EvalReport)>,
    pub table: CompareTable,
    /// Best mutual-learning student by success AUC, if any was evaluated.
    pub mlkd_track: Option<String>,
}

/// Evaluates candidates on `seqs` and writes reports, predictions and the
/// comparison table to `dir`.
pub fn evaluate_candidates(cfg: &RunConfig, candidates: &[Candidate], seqs: &[Sequence], dir: &Path) -> Result<EvalSummary> {
    let mut reports = Vec::new();
    for c in candidates {
        let enhance = c.is_teacher && cfg.eval.teacher_enhancer;
        let run = run_model(&c.model, seqs, enhance, cfg.eval.timing_runs)?;
        write_predictions(&dir.join("predictions"), &c.name, &run)?;
        let report = evaluate(&run.sequences, run.fps, cfg.eval.attributes.as_deref())?;
        log::info!("{}: success {:.4} at {:.1} fps", c.name, report.overall.success_auc, report.fps);
        reports.push((c.name.clone(), report));
    }
    let table = compare(&reports.iter().map(|(n, r)| (n.clone(), r)).collect::<Vec<_>>())?;
    write_reports(dir, &reports, &table)?;
    let mlkd_track = best_of(&reports, |n| {
        candidates.iter().any(|c| &c.name == n && c.mode == Some(TrainMode::StudentsMutual))
    });
    Ok(EvalSummary {
        reports,
        table,
        mlkd_track,
    })
}

/// Highest success AUC among reports accepted by `keep`; earlier name on ties.
fn best_of(reports: &[(String, EvalReport)], keep: impl Fn(&String) -> bool) -> Option<String> {
    reports
        .iter()
        .filter(|(n, _)| keep(n))
        .max_by(|(na, a), (nb, b)| a.overall.success_auc.total_cmp(&b.overall.success_auc).then_with(|| nb.cmp(na)))
        .map(|(n, _)| n.clone())
}

/// Evaluates the given checkpoints, or every checkpoint of the run when none are given.
pub fn cmd_eval(cfg: &RunConfig, models: &[PathBuf]) -> Result<EvalSummary> {
    let paths: Vec<PathBuf> = if models.is_empty() {
        let dir = cfg.checkpoint_dir();
        let mut found: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .collect();
        found.sort();
        found
    } else {
        models.to_vec()
    };
    if paths.len() < 2 {
        return Err(Error::config("models", format!("need at least 2 checkpoints to compare, found {}", paths.len())));
    }
    let candidates = paths.iter().map(|p| load_candidate(p)).collect::<Result<Vec<_>>>()?;
    cfg.write_resolved(&cfg.out_dir)?;
    let seqs = eval_data(cfg)?;
    evaluate_candidates(cfg, &candidates, &seqs, &cfg.out_dir.join("eval"))
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    /// Rows named as in [`ABLATION_ROWS`].
    pub table: CompareTable,
    /// Checkpoint stem of the mutual student chosen as MLKD-Track.
    pub mlkd_track: String,
    pub election_histogram: Vec<u64>,
    pub evaluation: EvalSummary,
    pub csv_path: PathBuf,
}

/// Trains every variant, evaluates all of them, and writes the ablation table
/// (`ablation.csv`, `ablation.txt`) with MLKD-Track being the mutual student
/// with the best success AUC on the evaluation set.
pub fn cmd_ablate(cfg: &RunConfig, registry: &CorrelationLossRegistry) -> Result<AblationResult> {
    if cfg.train.loss_kinds.len() != 3 {
        return Err(Error::config(
            "train.loss_kinds",
            format!("the ablation table has 3 student rows, got {} loss kinds", cfg.train.loss_kinds.len()),
        ));
    }
    cfg.write_resolved(&cfg.out_dir)?;
    let train = train_data(cfg)?;
    let seqs = eval_data(cfg)?;

    let teacher = train_mode(cfg, TrainMode::TeacherPretrain, &train, None, registry)?;
    let teacher_model = teacher.models[0].model.clone();
    let mut outcomes = vec![teacher];
    for mode in [TrainMode::StudentNoCrl, TrainMode::StudentsIndependent, TrainMode::StudentsMutual] {
        outcomes.push(train_mode(cfg, mode, &train, Some(&teacher_model), registry)?);
    }
    let histogram = outcomes[3].election_histogram.clone();
    let candidates: Vec<Candidate> = outcomes
        .iter()
        .flat_map(|o| {
            o.models.iter().map(|m| Candidate {
                name: m.name.clone(),
                model: m.model.clone(),
                is_teacher: o.mode == TrainMode::TeacherPretrain,
                mode: Some(o.mode),
            })
        })
        .collect();
    let evaluation = evaluate_candidates(cfg, &candidates, &seqs, &cfg.out_dir.join("eval"))?;
    let mlkd = evaluation
        .mlkd_track
        .clone()
        .ok_or_else(|| Error::domain("ablate", "no mutual-learning student was evaluated"))?;

    let report = |name: &str| &evaluation.reports.iter().find(|(n, _)| n == name).expect("evaluated model").1;
    let sources: Vec<String> = [&outcomes[0].models[0].name, &outcomes[1].models[0].name]
        .into_iter()
        .chain(outcomes[2].models.iter().map(|m| &m.name))
        .chain([&mlkd])
        .cloned()
        .collect();
    let rows: Vec<(String, &EvalReport)> = ABLATION_ROWS
        .iter()
        .zip(&sources)
        .map(|(row, src)| (row.to_string(), report(src)))
        .collect();
    let table = compare(&rows)?;
    let csv_path = cfg.out_dir.join("ablation.csv");
    let write = |p: &Path, s: String| fs::write(p, s).map_err(|e| Error::io(p, e));
    write(&csv_path, table.to_csv())?;
    write(
        &cfg.out_dir.join("ablation.txt"),
        format!(
            "{}\nMLKD-Track = {mlkd}\nelection histogram = {:?}\n",
            table.to_text(),
            histogram
        ),
    )?;
    Ok(AblationResult {
        table,
        mlkd_track: mlkd,
        election_histogram: histogram,
        evaluation,
        csv_path,
    })
}

/// Checkpoint path of a model produced by `run_training` in this run.
pub fn model_checkpoint(cfg: &RunConfig, name: &str) -> PathBuf {
    checkpoint_path(&cfg.checkpoint_dir(), name)
}
