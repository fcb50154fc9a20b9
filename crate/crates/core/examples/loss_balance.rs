//! Reports how strongly each weighted loss term pulls on a trained cohort.
//!
//! Usage: `cargo run --release -p mlkd --example loss_balance -- <run dir> [mutual|student] [seed]`
//!
//! The run directory must hold `checkpoints/teacher.ckpt` and the three
//! students written by `mlkd ablate` or `mlkd train`. For each term the mean
//! backbone gradient norm per student is printed over 32 training samples,
//! followed by the largest parameter difference between students.

use std::path::Path;
use std::sync::Arc;

use mlkd::config::RunConfig;
use mlkd::losses::{CorrelationLoss, CorrelationLossRegistry, LossWeights};
use mlkd::mutual::samples::{epoch_plan, materialize, SampleSpec};
use mlkd::mutual::train::{sample_gradients, StudentSpec};
use mlkd::pipeline::train_data;
use mlkd::tracker::{checkpoint, TrackerModel};

fn only(term: &str, base: &LossWeights) -> LossWeights {
    let keep = |name: &str, v: f64| if name == term { v } else { 0.0 };
    LossWeights {
        lambda_supervised: keep("supervised", base.lambda_supervised),
        lambda_kd: keep("kd", base.lambda_kd),
        lambda_crl: keep("crl", base.lambda_crl),
        lambda_ml: keep("ml", base.lambda_ml),
        ..base.clone()
    }
}

fn max_param_diff(a: &TrackerModel, b: &TrackerModel) -> mlkd::Result<f64> {
    a.params
        .iter()
        .zip(&b.params)
        .try_fold(0.0f64, |m, (x, y)| Ok(m.max(x.value.max_abs_diff(&y.value)?)))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let run = args.next().ok_or("usage: loss_balance <run dir> [mutual|student] [seed]")?;
    let prefix = args.next().unwrap_or_else(|| "mutual".into());
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let registry = CorrelationLossRegistry::default();
    let cfg = RunConfig {
        seed,
        out_dir: run.clone().into(),
        ..RunConfig::default()
    }
    .resolve(&registry)?;
    let data = train_data(&cfg)?;
    let dir = Path::new(&run).join("checkpoints");
    let (mut teacher, _) = checkpoint::load(&dir.join("teacher.ckpt"))?;
    teacher.freeze_all();

    let kinds = &cfg.train.loss_kinds;
    let students = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| {
            let (model, _) = checkpoint::load(&dir.join(format!("{prefix}{}_{kind}.ckpt", i + 1)))?;
            Ok(StudentSpec::from_teacher(i + 1, kind, &model))
        })
        .collect::<mlkd::Result<Vec<_>>>()?;

    let plan = epoch_plan(&data, seed, 0, 32, &SampleSpec::default())?;
    let samples: Vec<_> = plan.iter().map(|r| materialize(&data, r)).collect();
    for term in ["supervised", "kd", "crl", "ml"] {
        let w = only(term, &cfg.loss);
        let losses = kinds
            .iter()
            .map(|k| registry.build(k, &w))
            .collect::<mlkd::Result<Vec<Arc<dyn CorrelationLoss>>>>()?;
        let mut norms = vec![0.0; students.len()];
        for s in &samples {
            let out = sample_gradients(&teacher, &students, &losses, s, &w, true)?;
            for (n, grads) in norms.iter_mut().zip(&out.grads) {
                *n += grads.iter().flatten().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
            }
        }
        let line: Vec<String> = norms.iter().map(|n| format!("{:.3e}", n / samples.len() as f64)).collect();
        println!("{term:>10}: {}", line.join("  "));
    }
    for a in 0..students.len() {
        for b in a + 1..students.len() {
            println!("max |param {} - param {}| = {:.3e}", a + 1, b + 1, max_param_diff(&students[a].model, &students[b].model)?);
        }
    }
    Ok(())
}
