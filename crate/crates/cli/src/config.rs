//! Layering of flags over an optional JSON config file over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use llmembed_core::classifier::{Activation, AdamConfig, HiddenSpec, TrainConfig};
use llmembed_core::fusion::{FusionStrategy, BERT_SOURCE, DEFAULT_PROJECTION_DIM, DEFAULT_SIGMA};
use llmembed_core::store::{SyntheticSource, SyntheticSpec};
use llmembed_core::{DatasetBundle, Error};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{SynthArgs, TrainArgs};

/// Output root when neither `--out` nor `LLMEMBED_OUT` is set.
pub const DEFAULT_OUT: &str = "llmembed-out";

pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    let cfg = serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("reading config {}", path.display()))?;
    Ok(cfg)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthFile {
    pub n_rows: Option<usize>,
    pub n_test_rows: Option<usize>,
    pub n_classes: Option<usize>,
    pub sources: Option<Vec<SyntheticSource>>,
    pub separation: Option<f64>,
    pub noise: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn parse_source(text: &str) -> Result<SyntheticSource, Error> {
    let bad = || Error::Validation(format!("expected NAME:DEPTHS:DIM, got `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    let [name, depths, dim] = parts[..] else {
        return Err(bad());
    };
    Ok(SyntheticSource::new(
        name,
        depths.parse().map_err(|_| bad())?,
        dim.parse().map_err(|_| bad())?,
    ))
}

pub fn synth_spec(args: &SynthArgs, file: SynthFile) -> Result<SyntheticSpec, Error> {
    let d = SyntheticSpec::default();
    let sources = if args.sources.is_empty() {
        file.sources.unwrap_or(d.sources)
    } else {
        args.sources.iter().map(|s| parse_source(s)).collect::<Result<_, _>>()?
    };
    let spec = SyntheticSpec {
        n_rows: args.n_rows.or(file.n_rows).unwrap_or(d.n_rows),
        n_test_rows: args.n_test_rows.or(file.n_test_rows).unwrap_or(d.n_test_rows),
        n_classes: args.n_classes.or(file.n_classes).unwrap_or(d.n_classes),
        sources,
        separation: args.separation.or(file.separation).unwrap_or(d.separation),
        noise: args.noise.or(file.noise).unwrap_or(d.noise),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub strategy: Option<serde_json::Value>,
    pub sigma: Option<f64>,
    pub projection_dim: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub deterministic: Option<bool>,
    pub eval_every: Option<usize>,
    pub hidden: Option<usize>,
    pub activation: Option<Activation>,
    pub out: Option<PathBuf>,
}

/// Everything a `train` run used, echoed to `config.json`.
#[derive(Debug, Clone, Serialize)]
pub struct TrainRun {
    pub command: &'static str,
    pub manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub strategy: u8,
    pub operator: &'static str,
    pub sigma: f64,
    pub projection_dim: usize,
    pub train: TrainConfig,
    pub out: PathBuf,
}

pub struct TrainPlan {
    pub manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub strategy_text: String,
    pub sigma: f64,
    pub projection_dim: Option<usize>,
    pub config: TrainConfig,
    pub out: PathBuf,
}

fn strategy_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn train_plan(args: &TrainArgs, file: TrainFile) -> Result<TrainPlan> {
    let missing = |flag: &str| Error::Validation(format!("`--{flag}` is required"));
    let manifest = args.manifest.clone().or(file.manifest).ok_or_else(|| missing("manifest"))?;
    let test_manifest = args
        .test_manifest
        .clone()
        .or(file.test_manifest)
        .ok_or_else(|| missing("test-manifest"))?;
    let d = TrainConfig::default();
    let od = AdamConfig::default();
    let hidden = match args.hidden.or(file.hidden) {
        Some(0) | None => None,
        Some(width) => Some(HiddenSpec {
            width,
            activation: args.activation.or(file.activation).unwrap_or(Activation::Relu),
        }),
    };
    let config = TrainConfig {
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(d.batch_size),
        epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
        optimizer: AdamConfig {
            learning_rate: args.lr.or(file.lr).unwrap_or(od.learning_rate),
            beta1: file.beta1.unwrap_or(od.beta1),
            beta2: file.beta2.unwrap_or(od.beta2),
            epsilon: file.epsilon.unwrap_or(od.epsilon),
        },
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        deterministic: args.deterministic || file.deterministic.unwrap_or(d.deterministic),
        threads: args.threads.or(file.threads).unwrap_or(d.threads),
        eval_every: args.eval_every.or(file.eval_every).unwrap_or(d.eval_every),
        hidden,
    };
    config.validate()?;
    let strategy_text = args
        .strategy
        .clone()
        .or(file.strategy.as_ref().map(strategy_text))
        .unwrap_or_else(|| "1".to_owned());
    Ok(TrainPlan {
        manifest,
        test_manifest,
        strategy_text,
        sigma: args.sigma.or(file.sigma).unwrap_or(DEFAULT_SIGMA),
        projection_dim: args.projection_dim.or(file.projection_dim),
        config,
        out: args.out.out.clone().or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
    })
}

/// Resolves the strategy, inferring the projection width from the `bert`
/// source when it was not given.
pub fn resolve_strategy(
    text: &str,
    sigma: f64,
    projection_dim: Option<usize>,
    bundle: &DatasetBundle,
) -> Result<FusionStrategy, Error> {
    let dim = projection_dim
        .or_else(|| bundle.source(BERT_SOURCE).map(|m| m.dim()))
        .unwrap_or(DEFAULT_PROJECTION_DIM);
    FusionStrategy::parse(text)?.with_sigma(sigma)?.with_projection_dim(dim)
}
