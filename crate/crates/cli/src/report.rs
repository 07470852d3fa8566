//! Small controlled experiments on freshly generated correlated data. Each
//! writes one long-format CSV.

use std::fmt::Write as _;
use std::path::PathBuf;

use sisvae::datagen::{correlated_preset, SynthConfig};
use sisvae::evalkit::{evaluate, ha_baseline};
use sisvae::scoring::score_series;
use sisvae::training::{make_windows, normalize, train};
use sisvae::{
    Criterion, EvalReport, LabeledScores, ModelConfig, Regularizer, ScoreMatrix, SeriesMatrix,
    TrainConfig,
};

use crate::args::{ReportArgs, ReportKind};
use crate::commands::Outcome;
use crate::failure::{Failure, BAD_ARGS};
use crate::manifest::{sibling, write_atomic};

struct Ctx<'a> {
    a: &'a ReportArgs,
    seed: u64,
    data: SeriesMatrix,
}

impl Ctx<'_> {
    fn train_config(&self, lambda: f64, regularizer: Regularizer) -> TrainConfig {
        TrainConfig {
            window_w: self.a.window,
            step_s: self.a.window,
            batch_size: self.a.batch_size,
            epochs: self.a.epochs,
            lr: self.a.lr,
            lambda,
            seed: self.seed,
            regularizer,
            ..TrainConfig::default()
        }
    }

    fn model(&self) -> ModelConfig {
        ModelConfig::new(self.a.m, self.a.h_dim, self.a.z_dim)
    }

    fn metrics(&self, sm: &ScoreMatrix) -> Result<EvalReport, Failure> {
        let labels = self.data.labels_or_zeros();
        Ok(evaluate(
            &LabeledScores::from_matrix(sm, labels.view())?,
            &[],
        )?)
    }

    fn train_and_eval(&self, lambda: f64) -> Result<EvalReport, Failure> {
        let chunks = make_windows(&self.data, self.a.window, self.a.window)?;
        let (params, _) = train(
            &chunks,
            &self.train_config(lambda, Regularizer::Kl),
            self.model(),
        )?;
        let sm = score_series(
            &params,
            self.data.values().view(),
            self.a.window,
            Criterion::Prob,
            self.a.passes,
            self.seed,
        )?;
        self.metrics(&sm)
    }
}

fn dataset(a: &ReportArgs, seed: u64, prob: f64) -> Result<SeriesMatrix, Failure> {
    let raw = correlated_preset(&SynthConfig {
        m: a.m,
        t: a.t,
        anomaly_prob: prob,
        seed,
        ..SynthConfig::default()
    })?;
    Ok(normalize(&raw)?.0)
}

fn row(out: &mut String, head: String, r: &EvalReport) {
    writeln!(out, "{head},{},{},{}", r.auroc, r.auprc, r.best_f1).unwrap();
}

pub fn run(a: &ReportArgs) -> Result<Outcome, Failure> {
    if a.seeds.is_empty() {
        return Err(Failure::new(
            BAD_ARGS,
            "--seeds must list at least one seed",
        ));
    }
    if a.window > a.t {
        return Err(Failure::new(
            BAD_ARGS,
            format!("window {} exceeds t {}", a.window, a.t),
        ));
    }
    let kind = match a.kind {
        ReportKind::LambdaSweep => "lambda-sweep",
        ReportKind::AnomalyProportion => "anomaly-proportion",
        ReportKind::Convergence => "convergence",
    };
    let path = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{kind}.csv")));
    let mut out = String::new();
    let mut rows = 0;
    match a.kind {
        ReportKind::LambdaSweep => {
            out.push_str("seed,lambda,auroc,auprc,best_f1\n");
            for &seed in &a.seeds {
                let ctx = Ctx {
                    a,
                    seed,
                    data: dataset(a, seed, a.anomaly_prob)?,
                };
                for &lambda in &a.lambdas {
                    row(
                        &mut out,
                        format!("{seed},{lambda}"),
                        &ctx.train_and_eval(lambda)?,
                    );
                    rows += 1;
                }
            }
        }
        ReportKind::AnomalyProportion => {
            out.push_str("seed,anomaly_prob,method,auroc,auprc,best_f1\n");
            for &seed in &a.seeds {
                for &prob in &a.probs {
                    let ctx = Ctx {
                        a,
                        seed,
                        data: dataset(a, seed, prob)?,
                    };
                    row(
                        &mut out,
                        format!("{seed},{prob},sisvae-p"),
                        &ctx.train_and_eval(a.lambda)?,
                    );
                    row(
                        &mut out,
                        format!("{seed},{prob},sisvae-0"),
                        &ctx.train_and_eval(0.0)?,
                    );
                    let ha = ha_baseline(ctx.data.values().view(), false);
                    row(&mut out, format!("{seed},{prob},ha"), &ctx.metrics(&ha)?);
                    rows += 3;
                }
            }
        }
        ReportKind::Convergence => {
            out.push_str("seed,regularizer,epoch,inference_kl,neg_loglik,smooth,total\n");
            for &seed in &a.seeds {
                let ctx = Ctx {
                    a,
                    seed,
                    data: dataset(a, seed, a.anomaly_prob)?,
                };
                let chunks = make_windows(&ctx.data, a.window, a.window)?;
                for reg in [Regularizer::Kl, Regularizer::Mean] {
                    let (_, history) =
                        train(&chunks, &ctx.train_config(a.lambda, reg), ctx.model())?;
                    for r in &history.records {
                        writeln!(
                            out,
                            "{seed},{reg},{},{},{},{},{}",
                            r.epoch, r.inference_kl, r.neg_loglik, r.smooth, r.total
                        )
                        .unwrap();
                        rows += 1;
                    }
                }
            }
        }
    }
    write_atomic(&path, out.as_bytes())?;
    Ok(Outcome {
        summary: format!("report {kind}: {rows} rows -> {}", path.display()),
        seed: a.seeds[0],
        inputs: vec![],
        manifest: sibling(&path, "manifest.json"),
        outputs: vec![path],
    })
}
