use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use super::{CompareTable, EvalReport, TrackedSequence};
use crate::data::{io::write_boxes, Sequence};
use crate::error::{Error, Result};
use crate::tracker::{track_sequence, TrackerModel};

/// Predictions of one model over an evaluation set, with its throughput.
#[derive(Clone, Debug)]
pub struct ModelRun {
    pub sequences: Vec<TrackedSequence>,
    /// Median over the timing runs of frames per second of tracking time.
    pub fps: f64,
    pub fps_runs: Vec<f64>,
}

/// Tracks every sequence `timing_runs` times (at least once). Predictions
/// are deterministic, so the first run's are kept; only the timing varies.
/// Sequences run in parallel and each frame is timed on its own thread, so
/// the frame rate is that of a single tracking stream.
pub fn run_model(model: &TrackerModel, seqs: &[Sequence], use_enhancer: bool, timing_runs: usize) -> Result<ModelRun> {
    let mut sequences = Vec::new();
    let mut fps_runs = Vec::new();
    for run in 0..timing_runs.max(1) {
        let results = seqs
            .par_iter()
            .map(|s| track_sequence(model, s, use_enhancer))
            .collect::<Result<Vec<_>>>()?;
        let frames: usize = results.iter().map(|r| r.boxes.len()).sum();
        let seconds: f64 = results.iter().map(|r| r.total_seconds()).sum();
        fps_runs.push(frames as f64 / seconds.max(1e-12));
        if run == 0 {
            sequences = results
                .into_iter()
                .zip(seqs)
                .map(|(r, s)| TrackedSequence {
                    name: s.name.clone(),
                    attributes: s.attributes.clone(),
                    predictions: r.boxes,
                    ground_truth: s.boxes.clone(),
                })
                .collect();
        }
    }
    let mut sorted = fps_runs.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ModelRun {
        sequences,
        fps: sorted[sorted.len() / 2],
        fps_runs,
    })
}

/// `dir/<model>/<sequence>.txt`, one `x,y,w,h` line per frame.
pub fn write_predictions(dir: &Path, model: &str, run: &ModelRun) -> Result<()> {
    let sub = dir.join(model);
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    for s in &run.sequences {
        write_boxes(&sub.join(format!("{}.txt", s.name)), &s.predictions)?;
    }
    Ok(())
}

/// Writes `report.json` (full curves), `report.csv` (one summary row per
/// model), and the comparison table as `compare.csv` and `compare.txt`.
pub fn write_reports(dir: &Path, reports: &[(String, EvalReport)], table: &CompareTable) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let models: serde_json::Map<String, serde_json::Value> = reports
        .iter()
        .map(|(n, r)| Ok((n.clone(), serde_json::to_value(r)?)))
        .collect::<Result<_>>()?;
    let doc = json!({ "models": models, "compare": table });
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("report.json", serde_json::to_string_pretty(&doc)? + "\n")?;
    let mut csv = String::from("model,success_auc,norm_precision,precision_at_20,fps\n");
    for (n, r) in reports {
        csv.push_str(&format!(
            "{n},{:.6},{:.6},{:.6},{:.1}\n",
            r.overall.success_auc, r.overall.norm_precision, r.overall.precision_at_20, r.fps
        ));
    }
    write("report.csv", csv)?;
    write("compare.csv", table.to_csv())?;
    write("compare.txt", table.to_text())
}
