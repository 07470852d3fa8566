use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use sisvae::datagen::{self, load_csv, save_csv, MackeyConfig, MackeyPreset, SynthConfig};
use sisvae::evalkit::{evaluate, pr_curve_and_auprc, roc_curve, write_pr_csv, write_roc_csv};
use sisvae::scoring::{read_scores_csv, score_series, write_detections_csv, write_scores_csv};
use sisvae::training::{make_windows, normalize, train_from, AdamState};
use sisvae::{Checkpoint, LabeledScores, ModelConfig, ModelParams, SeriesMatrix, TrainConfig};

use crate::args::*;
use crate::failure::{Failure, BAD_ARGS, DIM_MISMATCH, EVAL_INPUT};
use crate::manifest::{sibling, write_atomic, Manifest};
use crate::report;

/// What a finished command reports back.
pub struct Outcome {
    pub summary: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Runs `command` and writes its manifest. `args` is the expanded argv
/// without the program name. Returns the stdout summary line.
pub fn run(command: Command, args: &[String]) -> Result<String, Failure> {
    if let Command::Replay(r) = &command {
        return replay(&r.manifest);
    }
    let started = Instant::now();
    let name = command.name();
    let config =
        serde_json::to_value(&command).map_err(|e| Failure::new(BAD_ARGS, e.to_string()))?;
    let outcome = match command {
        Command::Synth(a) => synth(&a)?,
        Command::Train(a) => train(&a)?,
        Command::Score(a) => score(&a)?,
        Command::Eval(a) => eval(&a)?,
        Command::Report(a) => report::run(&a)?,
        Command::Replay(_) => unreachable!(),
    };
    let manifest = Manifest {
        command: name.to_string(),
        args: args.to_vec(),
        config: config.get(name).cloned().unwrap_or(config),
        seed: outcome.seed,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&outcome.manifest, json.as_bytes())?;
    Ok(outcome.summary)
}

fn replay(path: &Path) -> Result<String, Failure> {
    use clap::Parser;
    let manifest = Manifest::load(path)?;
    let argv = std::iter::once("sisvae".to_string()).chain(manifest.args.iter().cloned());
    let cli = crate::args::Cli::try_parse_from(argv).map_err(|e| {
        Failure::new(
            BAD_ARGS,
            format!("{}: stored args do not parse: {e}", path.display()),
        )
    })?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::new(
            BAD_ARGS,
            "a manifest cannot replay another replay",
        ));
    }
    run(cli.command, &manifest.args)
}

fn synth(a: &SynthArgs) -> Result<Outcome, Failure> {
    let series = match a.preset {
        Preset::Correlated => datagen::correlated_preset(&SynthConfig {
            m: a.m,
            t: a.t,
            anomaly_prob: a.anomaly_prob,
            kernel_lengthscale: a.lengthscale,
            noise_base: a.noise_base,
            seed: a.seed,
        })?,
        Preset::Mackey => datagen::mackey_preset(&MackeyPreset {
            system: MackeyConfig {
                n: a.n,
                tau: a.tau,
                x0: a.x0,
                ..MackeyConfig::default()
            },
            point_rate: a.point_rate,
            subseq_count: a.subseq_count,
            subseq_len_min: a.subseq_len_min,
            subseq_len_max: a.subseq_len_max,
            seed: a.seed,
        })?,
    };
    let stem = a
        .name
        .clone()
        .unwrap_or_else(|| format!("{:?}", a.preset).to_lowercase());
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::io(a.out_dir.display(), e))?;
    let data = a.out_dir.join(format!("{stem}.csv"));
    save_csv(&series, &data)?;
    let labels = datagen::label_path_for(&data);
    Ok(Outcome {
        summary: format!(
            "synth: {}x{} with {} anomalous positions -> {}",
            series.n_series(),
            series.len(),
            series.anomaly_count(),
            data.display()
        ),
        seed: a.seed,
        inputs: vec![],
        manifest: a.out_dir.join(format!("{stem}.manifest.json")),
        outputs: vec![data, labels],
    })
}

fn load_input(path: &Path, normalize_rows: bool) -> Result<SeriesMatrix, Failure> {
    let series = load_csv(path).map_err(|e| Failure::at(path)(e.into()))?;
    if normalize_rows {
        Ok(normalize(&series)?.0)
    } else {
        Ok(series)
    }
}

fn check_dims(
    model: &ModelConfig,
    data: &SeriesMatrix,
    ckpt: &Path,
    input: &Path,
) -> Result<(), Failure> {
    if model.x_dim != data.n_series() {
        return Err(Failure::new(
            DIM_MISMATCH,
            format!(
                "{} expects {} series, {} has {}",
                ckpt.display(),
                model.x_dim,
                input.display(),
                data.n_series()
            ),
        ));
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<Outcome, Failure> {
    let data = load_input(&a.data, !a.no_normalize)?;
    let config = TrainConfig {
        window_w: a.window,
        step_s: a.step.unwrap_or(a.window),
        batch_size: a.batch_size,
        epochs: a.epochs,
        lr: a.lr,
        lambda: a.lambda,
        seed: a.seed,
        regularizer: a.regularizer,
        clip_norm: a.clip_norm,
        ..TrainConfig::default()
    };
    config.validate()?;
    if a.window > data.len() {
        return Err(Failure::new(
            BAD_ARGS,
            format!("window {} exceeds series length {}", a.window, data.len()),
        ));
    }
    let chunks = make_windows(&data, config.window_w, config.step_s)?;
    let mut inputs = vec![a.data.clone()];
    let (params, optimizer) = match &a.resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path).map_err(|e| Failure::at(path)(e.into()))?;
            let params = ckpt.to_params()?;
            check_dims(params.config(), &data, path, &a.data)?;
            let optimizer = match &ckpt.trainer_state {
                Some(state) => AdamState::from_trainer_state(state, &params)?,
                None => AdamState::zeros(&params),
            };
            inputs.push(path.clone());
            (params, optimizer)
        }
        None => {
            let model = ModelConfig {
                x_dim: data.n_series(),
                h_dim: a.model.h_dim,
                z_dim: a.model.z_dim,
                feat_dim: a.model.feat_dim.unwrap_or(a.model.h_dim),
                sigma_floor: a.model.sigma_floor,
            };
            let params = ModelParams::init(model, a.seed)?;
            let optimizer = AdamState::zeros(&params);
            (params, optimizer)
        }
    };
    let run = train_from(params, optimizer, &chunks, &config)?;
    Checkpoint::from_params(&run.params, Some(run.optimizer.to_trainer_state())).save(&a.out)?;
    let history = a
        .history
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "history.csv"));
    run.history.write_csv(&history)?;
    let last = run
        .history
        .records
        .last()
        .map(|r| r.total)
        .unwrap_or(f64::NAN);
    Ok(Outcome {
        summary: format!(
            "train: {} epochs on {} chunks, final loss {last:.6} -> {}",
            run.history.len(),
            chunks.len(),
            a.out.display()
        ),
        seed: a.seed,
        inputs,
        manifest: sibling(&a.out, "manifest.json"),
        outputs: vec![a.out.clone(), history],
    })
}

fn score(a: &ScoreArgs) -> Result<Outcome, Failure> {
    let params = Checkpoint::load(&a.checkpoint)
        .map_err(|e| Failure::at(&a.checkpoint)(e.into()))?
        .to_params()?;
    let data = load_input(&a.data, !a.no_normalize)?;
    check_dims(params.config(), &data, &a.checkpoint, &a.data)?;
    let sm = score_series(
        &params,
        data.values().view(),
        a.window,
        a.criterion,
        a.passes,
        a.seed,
    )?;
    write_scores_csv(&sm, data.series_ids(), &a.out)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(alpha) = a.alpha {
        let path = sibling(&a.out, "detections.csv");
        write_detections_csv(&sm, data.series_ids(), alpha, &path)?;
        outputs.push(path);
    }
    let mean = sm.scores.mean().unwrap_or(f64::NAN);
    Ok(Outcome {
        summary: format!(
            "score: {} {}x{} positions, mean score {mean:.6} -> {}",
            a.criterion,
            sm.dim().0,
            sm.dim().1,
            a.out.display()
        ),
        seed: a.seed,
        inputs: vec![a.checkpoint.clone(), a.data.clone()],
        manifest: sibling(&a.out, "manifest.json"),
        outputs,
    })
}

fn load_labels(path: &Path) -> Result<Array2<u8>, Failure> {
    let raw = load_csv(path).map_err(|e| Failure::at(path)(e.into()))?;
    let mut labels = Array2::zeros(raw.values().dim());
    for ((i, t), &v) in raw.values().indexed_iter() {
        labels[[i, t]] = match v {
            0.0 => 0,
            1.0 => 1,
            other => {
                return Err(Failure::new(
                    EVAL_INPUT,
                    format!(
                        "{}: label {other} at series {i}, t {t} is not 0 or 1",
                        path.display()
                    ),
                ))
            }
        };
    }
    Ok(labels)
}

fn eval(a: &EvalArgs) -> Result<Outcome, Failure> {
    let (sm, _) = read_scores_csv(&a.scores).map_err(|e| Failure::at(&a.scores)(e.into()))?;
    let labels = load_labels(&a.labels)?;
    if sm.dim() != labels.dim() {
        return Err(Failure::new(
            EVAL_INPUT,
            format!(
                "scores are {}x{} but labels are {}x{}",
                sm.dim().0,
                sm.dim().1,
                labels.dim().0,
                labels.dim().1
            ),
        ));
    }
    let data = LabeledScores::from_matrix(&sm, labels.view())?;
    let report = evaluate(&data, &a.ks)?;
    let roc = sibling(&a.out, "roc.csv");
    let pr = sibling(&a.out, "pr.csv");
    write_roc_csv(&roc_curve(&data)?, &roc)?;
    write_pr_csv(&pr_curve_and_auprc(&data)?.curve, &pr)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(&a.out, json.as_bytes())?;
    Ok(Outcome {
        summary: format!(
            "eval: auroc {:.6} auprc {:.6} best_f1 {:.6} over {} positions -> {}",
            report.auroc,
            report.auprc,
            report.best_f1,
            data.len(),
            a.out.display()
        ),
        seed: 0,
        inputs: vec![a.scores.clone(), a.labels.clone()],
        manifest: sibling(&a.out, "manifest.json"),
        outputs: vec![a.out.clone(), roc, pr],
    })
}
