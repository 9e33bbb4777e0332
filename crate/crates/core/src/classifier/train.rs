//! Mini-batch training of the classifier head (and, for co-occurrence
//! strategies, the alignment projections) on frozen embeddings.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::eval::evaluate;
use super::head::{backward, forward_with_cache, ClassifierGrads, ClassifierParams, HiddenSpec};
use super::loss::softmax_cross_entropy;
use crate::cost::{PhaseClock, PhaseTiming};
use crate::error::{Error, Result};
use crate::fusion::{
    fuse, fuse_backward, FuseInput, FusionStrategy, ProjectionGrads, ProjectionParams,
    SourceShape,
};
use crate::store::DatasetBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
    /// Single-threaded, fixed-order gradient reduction.
    pub deterministic: bool,
    pub threads: usize,
    /// Evaluate on the test bundle every this many epochs; 0 disables.
    pub eval_every: usize,
    pub hidden: Option<HiddenSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            epochs: 100,
            optimizer: AdamConfig::default(),
            seed: 0,
            deterministic: false,
            threads: 1,
            eval_every: 0,
            hidden: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Validation("threads must be at least 1".into()));
        }
        Adam::new(self.optimizer).map(|_| ())
    }

    pub fn effective_threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads
        }
    }
}

/// Everything that is learned.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub head: ClassifierParams,
    pub projections: ProjectionParams,
}

impl ModelParams {
    pub fn init(
        strategy: &FusionStrategy,
        shapes: &[SourceShape],
        n_classes: usize,
        hidden: Option<HiddenSpec>,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fused_dim = strategy.fused_dim(shapes)?;
        let projections = ProjectionParams::init(strategy, shapes, &mut rng)?;
        let head = ClassifierParams::init(fused_dim, n_classes, hidden, &mut rng)?;
        Ok(ModelParams { head, projections })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub head: ClassifierGrads,
    pub projections: ProjectionGrads,
}

/// Mean cross-entropy over `input` and its gradients.
pub fn loss_and_gradients(
    model: &ModelParams,
    strategy: &FusionStrategy,
    input: &FuseInput,
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    let fused = fuse(input, strategy, &model.projections)?;
    let (logits, cache) = forward_with_cache(&model.head, &fused.vectors)?;
    let (loss, grad_logits) = softmax_cross_entropy(&logits, labels)?;
    let (head, grad_fused) = backward(&model.head, &cache, &fused.vectors, &grad_logits)?;
    let projections = fuse_backward(&fused, &grad_fused, &model.projections)?;
    Ok((loss, Gradients { head, projections }))
}

/// Same as [`loss_and_gradients`] but splits the rows over `threads` shards
/// and sums shard results in shard order.
pub fn sharded_loss_and_gradients(
    model: &ModelParams,
    strategy: &FusionStrategy,
    input: &FuseInput,
    labels: &[usize],
    threads: usize,
) -> Result<(f64, Gradients)> {
    let n = input.batch_size();
    let shards = shard_ranges(n, threads);
    if shards.len() <= 1 {
        return loss_and_gradients(model, strategy, input, labels);
    }
    let parts = std::thread::scope(|scope| {
        let handles: Vec<_> = shards
            .iter()
            .map(|r| {
                let r = r.clone();
                scope.spawn(move || {
                    let sub = input.select(r.clone());
                    loss_and_gradients(model, strategy, &sub, &labels[r])
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gradient worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut loss = 0.0;
    let mut total: Option<Gradients> = None;
    for (r, (l, mut g)) in shards.iter().zip(parts) {
        let w = r.len() as f64 / n as f64;
        loss += w * l;
        g.head.scale(w);
        for s in g.projections.slices_mut() {
            s.iter_mut().for_each(|v| *v *= w);
        }
        match &mut total {
            None => total = Some(g),
            Some(t) => {
                t.head.add_assign(&g.head);
                t.projections.add_assign(&g.projections)?;
            }
        }
    }
    Ok((loss, total.expect("at least one shard")))
}

pub(crate) fn shard_ranges(n: usize, threads: usize) -> Vec<Range<usize>> {
    let k = threads.clamp(1, n.max(1));
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Applies one optimizer step to every learnable parameter.
pub fn apply_step(model: &mut ModelParams, grads: &Gradients, opt: &mut Adam) -> Result<()> {
    let mut params = model.head.slices_mut();
    params.extend(model.projections.slices_mut());
    let mut g = grads.head.slices();
    g.extend(grads.projections.slices());
    opt.step(params, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub epoch: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub strategy: u8,
    pub operator: String,
    pub sigma: f64,
    pub projection_dim: usize,
    pub fused_dim: usize,
    pub n_params: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub config: TrainConfig,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub evaluations: Vec<EvalPoint>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub timings: Vec<PhaseTiming>,
}

impl TrainReport {
    /// One `epoch loss` line per epoch, epochs counted from 1.
    pub fn loss_curve(&self) -> String {
        let mut out = String::new();
        for (i, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{} {}\n", i + 1, l));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub report: TrainReport,
}

/// Checks that `bundle` carries every source of `strategy` with the given shapes.
pub(crate) fn check_sources(
    bundle: &DatasetBundle,
    strategy: &FusionStrategy,
    expected: &[SourceShape],
) -> Result<()> {
    for name in strategy.required_sources() {
        let m = bundle.source(name).ok_or_else(|| Error::MissingSource {
            strategy: strategy.index(),
            source_name: name.to_owned(),
        })?;
        if let Some(want) = expected.iter().find(|s| s.name == name) {
            if m.n_depths() != want.depths || m.dim() != want.dim {
                return Err(Error::Shape(format!(
                    "source `{name}` is {}x{} but {}x{} was expected",
                    m.n_depths(),
                    m.dim(),
                    want.depths,
                    want.dim
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn bundle_shapes(bundle: &DatasetBundle, strategy: &FusionStrategy) -> Vec<SourceShape> {
    strategy
        .required_sources()
        .into_iter()
        .filter_map(|n| bundle.source(n))
        .map(|m| SourceShape::new(m.source_name(), m.n_depths(), m.dim()))
        .collect()
}

pub fn train(
    train_set: &DatasetBundle,
    test_set: &DatasetBundle,
    strategy: &FusionStrategy,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_sources(train_set, strategy, &[])?;
    let shapes = bundle_shapes(train_set, strategy);
    check_sources(test_set, strategy, &shapes)?;
    if test_set.n_classes() != train_set.n_classes() {
        return Err(Error::Shape(format!(
            "train bundle has {} classes, test bundle {}",
            train_set.n_classes(),
            test_set.n_classes()
        )));
    }
    let fused_dim = strategy.fused_dim(&shapes)?;
    let mut model = ModelParams::init(
        strategy,
        &shapes,
        train_set.n_classes(),
        config.hidden,
        config.seed,
    )?;
    let mut opt = Adam::new(config.optimizer)?;
    let threads = config.effective_threads();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train_set.n_rows()).collect();
    let mut clock = PhaseClock::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut evaluations = Vec::new();

    let train_start = std::time::Instant::now();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (batch_idx, rows) in order.chunks(config.batch_size).enumerate() {
            let input = FuseInput::from_bundle(train_set, rows);
            let labels: Vec<usize> = rows.iter().map(|&r| train_set.labels()[r]).collect();
            let (loss, grads) =
                sharded_loss_and_gradients(&model, strategy, &input, &labels, threads)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss,
                });
            }
            weighted += loss * rows.len() as f64;
            apply_step(&mut model, &grads, &mut opt)?;
        }
        epoch_losses.push(weighted / train_set.n_rows() as f64);
        if config.eval_every > 0 && epoch % config.eval_every == 0 {
            evaluations.push(EvalPoint {
                epoch,
                test_accuracy: evaluate(&model.head, &model.projections, test_set, strategy)?,
            });
        }
    }
    clock.record("train", train_start.elapsed());

    let (train_accuracy, test_accuracy) = clock.time("eval", || -> Result<(f64, f64)> {
        Ok((
            evaluate(&model.head, &model.projections, train_set, strategy)?,
            evaluate(&model.head, &model.projections, test_set, strategy)?,
        ))
    })?;

    let report = TrainReport {
        strategy: strategy.index(),
        operator: strategy.operator_name().to_owned(),
        sigma: strategy.sigma,
        projection_dim: strategy.projection_dim,
        fused_dim,
        n_params: model.head.num_params() + model.projections.num_params(),
        n_train: train_set.n_rows(),
        n_test: test_set.n_rows(),
        config: config.clone(),
        epoch_losses,
        evaluations,
        train_accuracy,
        test_accuracy,
        timings: clock.into_timings(),
    };
    Ok(TrainOutcome { model, report })
}
