use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use llmembed_core::classifier::{
    evaluate, predict_bundle, read_checkpoint, train, write_checkpoint, Checkpoint,
};
use llmembed_core::cost::{
    compare_report, electricity_bill, parse_duration, Comparison, CostReport, PhaseTiming,
    PowerProfile, DEFAULT_TARIFF, DEFAULT_TOKEN_PRICE, DOWNSTREAM_PHASES, EXTRACT_PHASES,
};
use llmembed_core::store::{generate_synthetic, load_bundle, write_bundle};
use llmembed_core::{DatasetBundle, Error, FusionStrategy, SourceShape};
use serde::Serialize;

use crate::args::{CostArgs, EvalArgs, PredictArgs, SynthArgs, TrainArgs};
use crate::config::{
    read_config, resolve_strategy, synth_spec, train_plan, SynthFile, TrainFile, TrainRun,
    DEFAULT_OUT,
};

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn shapes_of(bundle: &DatasetBundle) -> Vec<SourceShape> {
    bundle
        .sources()
        .iter()
        .map(|m| SourceShape::new(m.source_name(), m.n_depths(), m.dim()))
        .collect()
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let file: SynthFile = read_config(args.config.as_deref())?;
    let out = args
        .out
        .out
        .clone()
        .or(file.out.clone())
        .unwrap_or_else(|| DEFAULT_OUT.into());
    let spec = synth_spec(&args, file)?;
    let (train_set, test_set) = generate_synthetic(&spec)?;
    create_dir(&out)?;
    let train_manifest = write_bundle(&train_set, &out, "train")?;
    let test_manifest = write_bundle(&test_set, &out, "test")?;
    write_json(&out.join("config.json"), &spec)?;
    println!("{}", train_manifest.display());
    println!("{}", test_manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    strategy: u8,
    operator: &'a str,
    train_accuracy: f64,
    test_accuracy: f64,
    final_loss: Option<f64>,
    out: &'a Path,
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let file: TrainFile = read_config(args.config.as_deref())?;
    let plan = train_plan(&args, file)?;
    let train_set = load_bundle(&plan.manifest)?;
    let test_set = load_bundle(&plan.test_manifest)?;
    let strategy =
        resolve_strategy(&plan.strategy_text, plan.sigma, plan.projection_dim, &train_set)?;
    let run = TrainRun {
        command: "train",
        manifest: plan.manifest.clone(),
        test_manifest: plan.test_manifest.clone(),
        strategy: strategy.index(),
        operator: strategy.operator_name(),
        sigma: strategy.sigma,
        projection_dim: strategy.projection_dim,
        train: plan.config.clone(),
        out: plan.out.clone(),
    };

    let outcome = train(&train_set, &test_set, &strategy, &plan.config)?;
    let sources = shapes_of(&train_set)
        .into_iter()
        .filter(|s| strategy.required_sources().contains(&s.name.as_str()))
        .collect();
    let ckpt = Checkpoint {
        strategy,
        sources,
        model: outcome.model,
    };
    let report = outcome.report;

    let out = &plan.out;
    create_dir(out)?;
    write_json(&out.join("config.json"), &run)?;
    write_checkpoint(&ckpt, &out.join("checkpoint.llmc"))?;
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("loss_curve.txt"), &report.loss_curve())?;
    write_json(&out.join("timings.json"), &report.timings)?;

    let summary = TrainSummary {
        strategy: report.strategy,
        operator: &report.operator,
        train_accuracy: report.train_accuracy,
        test_accuracy: report.test_accuracy,
        final_loss: report.epoch_losses.last().copied(),
        out,
    };
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

/// Loads checkpoint and bundle and checks they belong together.
fn open_model(args: &EvalArgs) -> Result<(Checkpoint, DatasetBundle)> {
    let ckpt = read_checkpoint(&args.checkpoint)?;
    if let Some(text) = &args.strategy {
        let asked = FusionStrategy::parse(text)?;
        if asked.index() != ckpt.strategy.index() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was trained with strategy {} ({}) but strategy {} ({}) was requested",
                ckpt.strategy.index(),
                ckpt.strategy.operator_name(),
                asked.index(),
                asked.operator_name()
            ))
            .into());
        }
    }
    let bundle = load_bundle(&args.manifest)?;
    ckpt.check_compatible(&shapes_of(&bundle))?;
    if bundle.n_classes() != ckpt.n_classes() {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint predicts {} classes but the bundle has {}",
            ckpt.n_classes(),
            bundle.n_classes()
        ))
        .into());
    }
    Ok((ckpt, bundle))
}

#[derive(Serialize)]
struct EvalRun<'a> {
    command: &'static str,
    checkpoint: &'a Path,
    manifest: &'a Path,
    strategy: u8,
    out: &'a Path,
}

fn echo_config(command: &'static str, args: &EvalArgs, ckpt: &Checkpoint, out: &Path) -> Result<()> {
    create_dir(out)?;
    let run = EvalRun {
        command,
        checkpoint: &args.checkpoint,
        manifest: &args.manifest,
        strategy: ckpt.strategy.index(),
        out,
    };
    write_json(&out.join("config.json"), &run)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalResult {
    strategy: u8,
    n_rows: usize,
    accuracy: f64,
}

pub fn eval_cmd(args: EvalArgs) -> Result<()> {
    let (ckpt, bundle) = open_model(&args)?;
    let start = Instant::now();
    let accuracy = evaluate(
        &ckpt.model.head,
        &ckpt.model.projections,
        &bundle,
        &ckpt.strategy,
    )?;
    let timing = PhaseTiming::new("eval", start.elapsed().as_secs_f64())?;
    let result = EvalResult {
        strategy: ckpt.strategy.index(),
        n_rows: bundle.n_rows(),
        accuracy,
    };
    if let Some(out) = &args.out.out {
        echo_config("eval", &args, &ckpt, out)?;
        write_json(&out.join("eval.json"), &result)?;
        write_json(&out.join("timings.json"), &[timing])?;
    }
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    row: usize,
    class: &'a str,
    probabilities: &'a [f64],
}

pub fn predict_cmd(args: PredictArgs) -> Result<()> {
    let args = args.common;
    let (ckpt, bundle) = open_model(&args)?;
    let start = Instant::now();
    let preds = predict_bundle(
        &ckpt.model.head,
        &ckpt.model.projections,
        &bundle,
        &ckpt.strategy,
    )?;
    let timing = PhaseTiming::new("predict", start.elapsed().as_secs_f64())?;
    let mut text = String::new();
    for (row, p) in preds.iter().enumerate() {
        let line = PredictionLine {
            row,
            class: &bundle.class_names()[p.class],
            probabilities: &p.probabilities,
        };
        text.push_str(&serde_json::to_string(&line)?);
        text.push('\n');
    }
    match &args.out.out {
        Some(out) => {
            echo_config("predict", &args, &ckpt, out)?;
            write_text(&out.join("predictions.jsonl"), &text)?;
            write_json(&out.join("timings.json"), &[timing])?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn split_pair<'a>(text: &'a str, what: &str) -> Result<(&'a str, &'a str), Error> {
    text.split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::Validation(format!("expected NAME=VALUE for {what}, got `{text}`")))
}

#[derive(Serialize)]
struct CostSummary {
    local: CostReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    remote: Option<CostReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

#[derive(Serialize)]
struct CostRun<'a> {
    command: &'static str,
    timings: &'a [PathBuf],
    phases: &'a [PhaseTiming],
    kwh: Option<f64>,
    watts: &'a PowerProfile,
    tariff: f64,
    tokens: Option<u64>,
    token_price: Option<f64>,
}

fn local_report(args: &CostArgs, timings: &[PhaseTiming], profile: &PowerProfile, tariff: f64) -> Result<CostReport, Error> {
    match args.kwh {
        Some(kwh) => {
            if !timings.is_empty() {
                return Err(Error::Validation(
                    "`--kwh` cannot be combined with phase timings".into(),
                ));
            }
            Ok(CostReport {
                label: args.label.clone(),
                phases: Vec::new(),
                total_kwh: kwh,
                tariff_per_kwh: tariff,
                bill: electricity_bill(kwh, tariff)?,
                tokens: None,
            })
        }
        None => CostReport::electricity(&args.label, timings, profile, tariff),
    }
}

pub fn report_cost(args: CostArgs) -> Result<()> {
    let mut timings: Vec<PhaseTiming> = Vec::new();
    for path in &args.timings {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let parsed: Vec<PhaseTiming> = serde_json::from_str(&text).map_err(Error::from)?;
        for t in &parsed {
            t.validate()?;
        }
        timings.extend(parsed);
    }
    for p in &args.phases {
        let (name, value) = split_pair(p, "--phase")?;
        timings.push(PhaseTiming::new(name, parse_duration(value)?)?);
    }

    let mut profile = PowerProfile::default();
    if let Some(w) = args.watts_extract {
        for p in EXTRACT_PHASES {
            profile.set(p, w)?;
        }
    }
    if let Some(w) = args.watts_train {
        for p in DOWNSTREAM_PHASES {
            profile.set(p, w)?;
        }
    }
    for w in &args.watts {
        let (name, value) = split_pair(w, "--watts")?;
        let watts: f64 = value
            .parse()
            .map_err(|_| Error::Validation(format!("bad wattage `{value}` for `{name}`")))?;
        profile.set(name, watts)?;
    }

    let tariff = args.tariff.unwrap_or(DEFAULT_TARIFF);
    let local = local_report(&args, &timings, &profile, tariff)?;
    let remote = match (args.tokens, args.token_price) {
        (Some(tokens), price) => Some(CostReport::tokens(
            &args.remote_label,
            tokens,
            price.unwrap_or(DEFAULT_TOKEN_PRICE),
        )?),
        (None, Some(_)) => {
            return Err(Error::Validation("`--token-price` needs `--tokens`".into()).into())
        }
        (None, None) => None,
    };
    let comparison = remote.as_ref().map(|r| compare_report(&local, r));

    let mut text = local.to_table();
    if let Some(r) = &remote {
        text.push('\n');
        text.push_str(&r.to_table());
    }
    if let Some(c) = &comparison {
        text.push('\n');
        text.push_str(&c.to_table());
    }

    if let Some(out) = &args.out.out {
        create_dir(out)?;
        let run = CostRun {
            command: "report-cost",
            timings: &args.timings,
            phases: &timings,
            kwh: args.kwh,
            watts: &profile,
            tariff,
            tokens: args.tokens,
            token_price: args.tokens.map(|_| args.token_price.unwrap_or(DEFAULT_TOKEN_PRICE)),
        };
        write_json(&out.join("config.json"), &run)?;
        let summary = CostSummary {
            local,
            remote,
            comparison,
        };
        write_json(&out.join("cost.json"), &summary)?;
        write_text(&out.join("cost.txt"), &text)?;
    }
    print!("{text}");
    Ok(())
}
