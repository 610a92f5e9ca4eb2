//! Pool-batched partial-label training with per-epoch validation and
//! best-epoch selection.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{interleave_by_class, ImagePool, Normalization, PatchSample, Transform, DEFAULT_BATCH_SIZE};
use crate::error::{bail, Error, Result};
use crate::evaluation::{evaluate, EvalOptions, ModelSegmenter};
use crate::loss::{loss_and_grad, LossKind};
use crate::network::DynamicHeadNet;
use crate::optim::{LrSchedule, Optimizer, OptimizerConfig};
use crate::taxonomy::{ClassSet, Taxonomy};

pub const DEFAULT_EPOCHS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub flip: bool,
    pub rotate90: bool,
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation { flip: true, rotate90: true }
    }
}

impl Augmentation {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Transform {
        // Always consume the same number of draws so toggles do not shift the stream.
        let (h, v, r) = (rng.random::<bool>(), rng.random::<bool>(), rng.random_range(0..4u8));
        Transform {
            flip_horizontal: self.flip && h,
            flip_vertical: self.flip && v,
            rotations: if self.rotate90 { r } else { 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub seed: u64,
    /// Input statistics; computed from the training images when absent.
    pub normalization: Option<Normalization>,
    pub augmentation: Augmentation,
    pub drop_last: bool,
    pub eval: EvalOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            loss: LossKind::DiceBce,
            optimizer: OptimizerConfig::default(),
            schedule: LrSchedule::Poly,
            seed: 0,
            normalization: None,
            augmentation: Augmentation::default(),
            drop_last: false,
            eval: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub lr: f64,
    pub steps: usize,
    /// `(class, Dice)` on the validation set, registry order.
    pub val_dice: Vec<(usize, f64)>,
    pub mean_val_dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub best_val_dice: f64,
    pub best_epoch: usize,
    /// Reference returned by the observer when the best epoch was saved.
    pub best_checkpoint: Option<String>,
    pub normalization: Normalization,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// Per-epoch table: epoch, loss, lr, mean val Dice, then one column per class.
    pub fn history_table(&self) -> String {
        let tax = Taxonomy::canonical();
        let mut out = String::from("epoch\tloss\tlr\tval_dice");
        if let Some(first) = self.history.first() {
            for (c, _) in &first.val_dice {
                out.push('\t');
                out.push_str(tax.code(*c));
            }
        }
        out.push('\n');
        for r in &self.history {
            out.push_str(&format!("{}\t{:.6}\t{:.6e}\t{:.6}", r.epoch, r.train_loss, r.lr, r.mean_val_dice));
            for (_, d) in &r.val_dice {
                out.push_str(&format!("\t{d:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Hook called after every epoch.
pub trait TrainObserver {
    /// `improved` is true when this epoch set a new best validation Dice.
    /// A returned string becomes the best-checkpoint reference.
    fn on_epoch(&mut self, record: &EpochRecord, model: &DynamicHeadNet<f32>, improved: bool) -> Result<Option<String>>;
}

/// Discards everything.
pub struct NoObserver;

impl TrainObserver for NoObserver {
    fn on_epoch(&mut self, _: &EpochRecord, _: &DynamicHeadNet<f32>, _: bool) -> Result<Option<String>> {
        Ok(None)
    }
}

/// Keeps the parameters of the best epoch in memory.
#[derive(Debug, Default)]
pub struct KeepBest {
    pub epoch: usize,
    pub params: Option<Vec<f32>>,
}

impl TrainObserver for KeepBest {
    fn on_epoch(&mut self, record: &EpochRecord, model: &DynamicHeadNet<f32>, improved: bool) -> Result<Option<String>> {
        if improved {
            self.epoch = record.epoch;
            self.params = Some(model.params().to_vec());
            return Ok(Some(format!("memory:epoch-{}", record.epoch)));
        }
        Ok(None)
    }
}

impl KeepBest {
    /// Load the best parameters back into `model`.
    pub fn restore(&self, model: &mut DynamicHeadNet<f32>) {
        if let Some(p) = &self.params {
            model.params_mut().copy_from_slice(p);
        }
    }
}

/// Epoch with the highest mean validation Dice; ties go to the earliest.
pub fn select_best(history: &[EpochRecord]) -> Result<usize> {
    let mut best: Option<&EpochRecord> = None;
    for r in history {
        if best.is_none_or(|b| r.mean_val_dice > b.mean_val_dice) {
            best = Some(r);
        }
    }
    best.map(|r| r.epoch).ok_or_else(|| Error::InvalidArgument("empty training history".into()))
}

/// Mean loss over `batch` and the accumulated parameter gradient.
pub fn batch_gradient(
    model: &DynamicHeadNet<f32>,
    batch: &[(&PatchSample, Transform)],
    normalization: &Normalization,
    loss: LossKind,
) -> Result<(f64, Vec<f32>)> {
    let tax = Taxonomy::canonical();
    let mut grads = vec![0f32; model.params().len()];
    let scale = 1.0 / batch.len().max(1) as f32;
    let mut total = 0.0;
    for (sample, t) in batch {
        let image = sample.image.transformed(*t);
        let mask = sample.mask.transformed(*t);
        let x = image.to_input::<f32>(normalization);
        let (pred, cache) = model.forward_train(&x, &tax.encode(sample.task)?)?;
        let (terms, mut d_logits) = loss_and_grad(pred.logits(), mask.as_bytes(), loss)?;
        total += terms.total(loss);
        for g in d_logits.data_mut() {
            *g *= scale;
        }
        model.backward(&cache, &d_logits, &mut grads);
    }
    Ok((total / batch.len().max(1) as f64, grads))
}

fn task_set(samples: &[PatchSample]) -> ClassSet {
    samples.iter().fold(ClassSet::empty(), |mut s, x| {
        s.insert(x.task);
        s
    })
}

pub fn train(
    model: &mut DynamicHeadNet<f32>,
    train_set: &[PatchSample],
    val_set: &[PatchSample],
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    if train_set.is_empty() {
        bail!(InvalidArgument, "training set is empty");
    }
    if val_set.is_empty() {
        bail!(InvalidArgument, "validation set is empty");
    }
    if config.epochs == 0 || config.batch_size == 0 {
        bail!(InvalidArgument, "epochs and batch size must be positive");
    }
    let size = model.input_size();
    for s in train_set.iter().chain(val_set) {
        s.validate(Some(size))?;
    }
    let normalization = config.normalization.unwrap_or_else(|| Normalization::from_images(train_set.iter().map(|s| &s.image)));
    let active = task_set(train_set);
    let capacity = active.len().max(config.batch_size + 1);
    let val_classes = task_set(val_set);

    let n = train_set.len();
    let per_epoch = if config.drop_last { n / config.batch_size } else { n.div_ceil(config.batch_size) };
    let total_steps = per_epoch * config.epochs;
    let mut optimizer = Optimizer::new(config.optimizer, model.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState {
        epoch: 0,
        best_val_dice: f64::NEG_INFINITY,
        best_epoch: 0,
        best_checkpoint: None,
        normalization,
        history: Vec::with_capacity(config.epochs),
    };
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        let stream = interleave_by_class((0..n).map(|i| (train_set[i].task, i)).collect(), &mut rng);
        let mut pool = ImagePool::new(capacity, active, config.batch_size, rng.random())?.with_drop_last(config.drop_last);
        let mut batches = Vec::with_capacity(per_epoch);
        for (task, i) in stream {
            batches.extend(pool.push(task, i)?);
        }
        batches.extend(pool.flush());

        let (mut loss_sum, mut lr) = (0.0, config.optimizer.lr);
        for (k, batch) in batches.iter().enumerate() {
            lr = config.schedule.lr(config.optimizer.lr, step, total_steps);
            let items: Vec<(&PatchSample, Transform)> =
                batch.iter().map(|&i| (&train_set[i], config.augmentation.draw(&mut rng))).collect();
            let (loss, grads) = batch_gradient(model, &items, &normalization, config.loss)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step: k + 1, lr });
            }
            optimizer.step(model.params_mut(), &grads, lr);
            loss_sum += loss;
            step += 1;
        }

        let report = evaluate(&ModelSegmenter::new(model, normalization), val_set, val_classes, config.eval)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len().max(1) as f64,
            lr,
            steps: batches.len(),
            val_dice: report.rows.iter().map(|r| (r.task, r.dice)).collect(),
            mean_val_dice: report.average,
        };
        let improved = record.mean_val_dice > state.best_val_dice;
        if improved {
            state.best_val_dice = record.mean_val_dice;
            state.best_epoch = epoch;
        }
        let reference = observer.on_epoch(&record, model, improved)?;
        if improved {
            state.best_checkpoint = reference;
        }
        state.epoch = epoch;
        state.history.push(record);
    }
    Ok(state)
}
