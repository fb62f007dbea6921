//! Two-stage training, evaluation, and the ablation harness.
//!
//! Stage 1 trains the encoder, a per-frame FC surrogate, the head and the
//! lifter on independent frames. Stage 2 copies every persisting layer,
//! freezes the encoder, and trains the full variant on whole `V×T` clips
//! from cached embeddings.

pub mod experiment;
pub mod losses;
pub mod metrics;

use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::KvConfig;
use crate::encoder::{frames_to_tensor, PREFIX as ENCODER_PREFIX};
use crate::error::{Error, Result};
use crate::hand::JOINTS;
use crate::handgen::Dataset;
use crate::pipeline::Checkpoint;
use crate::pipeline::{Mode, Model, ModelConfig, Variant};
use crate::tensor::rng::{derive_seed, rng_for};
use crate::tensor::{AdamConfig, Tape, Tensor, Var};

pub use losses::{loss_stage1, loss_stage2};
pub use metrics::{compute_epe, compute_pck_auc, EvalReport};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub stage: u32,
    /// Weight of the 2D term in the Stage 1 loss.
    pub alpha: f64,
    /// Frames in Stage 1, clips in Stage 2.
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub decay_period: usize,
    pub decay_factor: f64,
    pub epochs: usize,
    pub seed: u64,
}

const TRAIN_KEYS: &[&str] = &["alpha", "batch", "lr", "weight_decay", "decay_period", "decay_factor", "epochs", "seed"];

impl TrainingConfig {
    /// Desk-scale Stage 1: 60 epochs, decay every 12.
    pub fn stage1() -> Self {
        TrainingConfig {
            stage: 1,
            alpha: 0.01,
            batch: 64,
            lr: 0.001,
            weight_decay: 0.1,
            decay_period: 12,
            decay_factor: 0.1,
            epochs: 60,
            seed: 1,
        }
    }

    /// Desk-scale Stage 2: 40 epochs, decay every 10.
    pub fn stage2() -> Self {
        TrainingConfig {
            stage: 2,
            batch: 8,
            lr: 0.006,
            weight_decay: 0.07,
            decay_period: 10,
            epochs: 40,
            ..Self::stage1()
        }
    }

    /// Full-length schedules: 500 / 400 epochs, decay every 100.
    pub fn full_length(stage: u32) -> Self {
        let base = if stage == 1 { Self::stage1() } else { Self::stage2() };
        TrainingConfig { epochs: if stage == 1 { 500 } else { 400 }, decay_period: 100, ..base }
    }

    pub fn for_stage(stage: u32) -> Result<Self> {
        match stage {
            1 => Ok(Self::stage1()),
            2 => Ok(Self::stage2()),
            _ => Err(Error::config(format!("training stage must be 1 or 2, got {stage}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.stage) {
            return Err(Error::config(format!("training stage must be 1 or 2, got {}", self.stage)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        let rates = [self.lr, self.weight_decay, self.decay_factor];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::config("learning rate, weight decay and decay factor must be positive"));
        }
        if self.batch == 0 || self.decay_period == 0 {
            return Err(Error::config("batch size and decay period must be positive"));
        }
        Ok(())
    }

    /// Step decay: `lr · factor^⌊epoch / period⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay_factor.powi((epoch / self.decay_period) as i32)
    }

    pub fn adam(&self, epoch: usize) -> AdamConfig {
        AdamConfig { lr: self.lr_at(epoch), weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    fn section(stage: u32) -> String {
        format!("stage{stage}")
    }

    pub fn to_kv(&self) -> KvConfig {
        let s = Self::section(self.stage);
        let mut kv = KvConfig::new();
        kv.set(&format!("{s}.alpha"), self.alpha);
        kv.set(&format!("{s}.batch"), self.batch);
        kv.set(&format!("{s}.lr"), self.lr);
        kv.set(&format!("{s}.weight_decay"), self.weight_decay);
        kv.set(&format!("{s}.decay_period"), self.decay_period);
        kv.set(&format!("{s}.decay_factor"), self.decay_factor);
        kv.set(&format!("{s}.epochs"), self.epochs);
        kv.set(&format!("{s}.seed"), self.seed);
        kv
    }

    /// Reads `stage{n}.*` keys over the desk-scale defaults.
    pub fn from_kv(kv: &KvConfig, stage: u32) -> Result<Self> {
        let d = Self::for_stage(stage)?;
        let sec = kv.section(&Self::section(stage));
        sec.check_keys(TRAIN_KEYS)?;
        let cfg = TrainingConfig {
            stage,
            alpha: sec.get_or("alpha", d.alpha)?,
            batch: sec.get_or("batch", d.batch)?,
            lr: sec.get_or("lr", d.lr)?,
            weight_decay: sec.get_or("weight_decay", d.weight_decay)?,
            decay_period: sec.get_or("decay_period", d.decay_period)?,
            decay_factor: sec.get_or("decay_factor", d.decay_factor)?,
            epochs: sec.get_or("epochs", d.epochs)?,
            seed: sec.get_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One training-log line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub stage: u32,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} stage={} lr={:e} loss={:.6}", self.epoch, self.stage, self.lr, self.loss)
    }
}

pub fn format_log(log: &[EpochLog]) -> String {
    log.iter().map(|l| format!("{l}\n")).collect()
}

/// Indices, within a stored clip, of the frames making up the model's
/// `(view, time)` grid: the first `views` cameras and first `window` steps.
pub fn grid_frames(data: &Dataset, model: &ModelConfig) -> Result<Vec<usize>> {
    let d = &data.config;
    if model.views > d.views.len() || model.window > d.window {
        return Err(Error::config(format!(
            "model grid {}x{} exceeds the dataset's {}x{} clips",
            model.views,
            model.window,
            d.views.len(),
            d.window
        )));
    }
    if model.encoder.resolution != d.resolution {
        return Err(Error::config(format!(
            "model resolution {} differs from the dataset's {}",
            model.encoder.resolution, d.resolution
        )));
    }
    Ok((0..model.views).flat_map(|v| (0..model.window).map(move |t| v * d.window + t)).collect())
}

fn check_clips(data: &Dataset, clips: &[usize]) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Contract("no clips selected".into()));
    }
    if let Some(&c) = clips.iter().find(|&&c| c >= data.clips.len()) {
        return Err(Error::Contract(format!("clip {c} outside the dataset's {}", data.clips.len())));
    }
    Ok(())
}

/// Stacked frames `[n,3,H,W]`, pixel 2D labels and millimetre camera-frame
/// 3D labels for `(clip, frame)` pairs.
fn frame_batch(data: &Dataset, items: &[(usize, usize)]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let res = data.config.resolution;
    let images: Vec<&[f32]> = items.iter().map(|&(c, f)| data.clips[c].image(f)).collect();
    let frames = frames_to_tensor(&images, res)?;
    let p2: Vec<f32> = items.iter().flat_map(|&(c, f)| data.clips[c].frame_pose2d(f).to_vec()).collect();
    let p3: Vec<f32> = items.iter().flat_map(|&(c, f)| data.clips[c].frame_cam3d(f).to_vec()).collect();
    let n = items.len();
    Ok((frames, Tensor::new(&[n, JOINTS, 2], p2)?, Tensor::new(&[n, JOINTS, 3], p3)?))
}

fn pixels(tape: &mut Tape<f32>, normalized: Var, resolution: usize) -> Result<Var> {
    let shifted = tape.add_scalar(normalized, 1.0)?;
    tape.scale(shifted, resolution as f64 / 2.0)
}

/// The Stage 1 network matching `target`: same encoder and lifter, FC surrogate
/// in place of the learners, one shared lifter.
pub fn surrogate_config(target: &ModelConfig) -> ModelConfig {
    let mut cfg = target.clone();
    cfg.variant = Variant::Stage1Surrogate;
    cfg.untied_lifter = false;
    cfg.lifter.kind = target.lifter.kind;
    cfg
}

fn shuffled<T: Clone>(items: &[T], seed: u64, stage: u32, epoch: usize) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut rng_for(seed, &format!("stage{stage}.shuffle.{epoch}")));
    v
}

fn meta_for(cfgs: &[&TrainingConfig]) -> KvConfig {
    let mut kv = KvConfig::new();
    for c in cfgs {
        kv.merge(&c.to_kv());
    }
    kv
}

/// Stage 1 on every grid frame of `clips`.
pub fn train_stage1(
    target: &ModelConfig,
    data: &Dataset,
    clips: &[usize],
    cfg: &TrainingConfig,
) -> Result<(Checkpoint<f32>, Vec<EpochLog>)> {
    cfg.validate()?;
    if cfg.stage != 1 {
        return Err(Error::config("train_stage1 needs a stage 1 training config"));
    }
    check_clips(data, clips)?;
    let mcfg = surrogate_config(target);
    let frames = grid_frames(data, &mcfg)?;
    let mut model = Model::<f32>::new(mcfg, cfg.seed)?;
    let samples: Vec<(usize, usize)> = clips.iter().flat_map(|&c| frames.iter().map(move |&f| (c, f))).collect();
    let res = data.config.resolution;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let adam = cfg.adam(epoch);
        let order = shuffled(&samples, cfg.seed, 1, epoch);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let (x, gt2, gt3) = frame_batch(data, chunk)?;
            let mut tape = Tape::new();
            let x = tape.constant(x)?;
            let gt2 = tape.constant(gt2)?;
            let gt3 = tape.constant(gt3)?;
            let mode = Mode::train(derive_seed(cfg.seed, &format!("stage1.dropout.{step}")));
            let out = model.forward_frames(&mut tape, x, mode)?;
            let p2 = pixels(&mut tape, out.pose2d, res)?;
            let loss = loss_stage1(&mut tape, p2, gt2, out.pose3d, gt3, cfg.alpha)?;
            total += tape.value(loss)[0] as f64 * chunk.len() as f64;
            tape.backward_into(loss, &mut model.store)?;
            model.store.adam_step(&adam)?;
            step += 1;
        }
        log.push(EpochLog { stage: 1, epoch, lr: adam.lr, loss: total / samples.len() as f64 });
    }
    let mut ck = Checkpoint::new(model, 1, cfg.epochs as u32, cfg.seed);
    ck.meta = meta_for(&[cfg]);
    Ok((ck, log))
}

/// Copies the Stage 1 lifter into every lifter slot and every other Stage 1
/// parameter whose name and shape match (encoder, head layers that persist
/// across stages), then freezes the encoder.
pub fn transfer_stage1(model: &mut Model<f32>, stage1: &Checkpoint<f32>) -> Result<()> {
    let src = &stage1.model;
    if stage1.stage != 1 || src.config.variant != Variant::Stage1Surrogate {
        return Err(Error::Workflow(format!(
            "stage 2 needs a stage 1 surrogate checkpoint, got stage {} `{}`",
            stage1.stage, src.config.variant
        )));
    }
    if src.config.encoder != model.config.encoder || src.config.lifter != model.config.lifter {
        return Err(Error::config("stage 1 checkpoint encoder or lifter differs from the stage 2 model"));
    }
    let enc = format!("{ENCODER_PREFIX}.");
    for (name, t) in src.store.iter().filter(|(n, _)| !n.starts_with("lifter.")) {
        if let Some(dst) = model.store.get_mut(name) {
            if dst.shape() == t.shape() {
                dst.data_mut().copy_from_slice(t.data());
            }
        }
    }
    for prefix in model.config.lifter_prefixes() {
        let from = "lifter.";
        for (name, t) in src.store.iter().filter(|(n, _)| n.starts_with(from)) {
            let dst = format!("{prefix}.{}", &name[from.len()..]);
            let slot = model
                .store
                .get_mut(&dst)
                .ok_or_else(|| Error::Consistency(format!("stage 2 model lacks `{dst}`")))?;
            slot.data_mut().copy_from_slice(t.data());
        }
    }
    model.store.freeze_prefix(&enc)?;
    Ok(())
}

/// Frozen-encoder embeddings `[V·T, embedding]` of each clip's grid, in parallel.
pub fn cache_embeddings(model: &Model<f32>, data: &Dataset, clips: &[usize]) -> Result<Vec<Tensor<f32>>> {
    let frames = grid_frames(data, &model.config)?;
    clips
        .par_iter()
        .map(|&c| {
            let items: Vec<(usize, usize)> = frames.iter().map(|&f| (c, f)).collect();
            let (x, _, _) = frame_batch(data, &items)?;
            let mut tape = Tape::new();
            let x = tape.constant(x)?;
            let e = model.embed(&mut tape, x)?;
            Ok(tape.tensor(e))
        })
        .collect()
}

fn clip_targets(data: &Dataset, frames: &[usize], c: usize) -> Vec<f32> {
    frames.iter().flat_map(|&f| data.clips[c].frame_cam3d(f).to_vec()).collect()
}

fn stack_rows(parts: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let width = parts[0].shape()[1];
    let rows: usize = parts.iter().map(|t| t.shape()[0]).sum();
    let data: Vec<f32> = parts.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::new(&[rows, width], data)
}

/// Stage 2: requires the Stage 1 checkpoint.
pub fn train_stage2(
    target: &ModelConfig,
    stage1: Option<&Checkpoint<f32>>,
    data: &Dataset,
    clips: &[usize],
    cfg: &TrainingConfig,
) -> Result<(Checkpoint<f32>, Vec<EpochLog>)> {
    let stage1 = stage1.ok_or_else(|| Error::Workflow("stage 2 requested without a stage 1 checkpoint".into()))?;
    cfg.validate()?;
    if cfg.stage != 2 {
        return Err(Error::config("train_stage2 needs a stage 2 training config"));
    }
    check_clips(data, clips)?;
    let frames = grid_frames(data, target)?;
    let mut model = Model::<f32>::new(target.clone(), cfg.seed)?;
    transfer_stage1(&mut model, stage1)?;
    let cache = cache_embeddings(&model, data, clips)?;
    let targets: Vec<Vec<f32>> = clips.iter().map(|&c| clip_targets(data, &frames, c)).collect();
    let slots: Vec<usize> = (0..clips.len()).collect();
    let grid = frames.len();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let adam = cfg.adam(epoch);
        let mut total = 0.0;
        for chunk in shuffled(&slots, cfg.seed, 2, epoch).chunks(cfg.batch) {
            let emb = stack_rows(&chunk.iter().map(|&i| &cache[i]).collect::<Vec<_>>())?;
            let gt: Vec<f32> = chunk.iter().flat_map(|&i| targets[i].iter().copied()).collect();
            let mut tape = Tape::new();
            let e = tape.constant(emb)?;
            let gt = tape.constant(Tensor::new(&[chunk.len() * grid, JOINTS, 3], gt)?)?;
            let mode = Mode::train(derive_seed(cfg.seed, &format!("stage2.dropout.{step}")));
            let out = model.forward_embeddings(&mut tape, e, mode)?;
            let loss = loss_stage2(&mut tape, out.pose3d, gt, grid)?;
            total += tape.value(loss)[0] as f64 * chunk.len() as f64;
            tape.backward_into(loss, &mut model.store)?;
            model.store.adam_step(&adam)?;
            step += 1;
        }
        log.push(EpochLog { stage: 2, epoch, lr: adam.lr, loss: total / clips.len() as f64 });
    }
    let enc = format!("{ENCODER_PREFIX}.");
    for (name, t) in model.store.iter().filter(|(n, _)| n.starts_with(&enc)) {
        let before = stage1.model.store.get(name).expect("transferred above");
        if t.data().iter().zip(before.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(Error::Consistency(format!("frozen encoder parameter `{name}` changed in stage 2")));
        }
    }
    let mut ck = Checkpoint::new(model, 2, cfg.epochs as u32, cfg.seed);
    ck.meta = meta_for(&[cfg]);
    Ok((ck, log))
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub stage1: Checkpoint<f32>,
    pub stage2: Checkpoint<f32>,
    pub log: Vec<EpochLog>,
}

pub fn train_two_stage(
    target: &ModelConfig,
    data: &Dataset,
    clips: &[usize],
    s1: &TrainingConfig,
    s2: &TrainingConfig,
) -> Result<TwoStageOutcome> {
    let (stage1, mut log) = train_stage1(target, data, clips, s1)?;
    let (mut stage2, log2) = train_stage2(target, Some(&stage1), data, clips, s2)?;
    stage2.meta = meta_for(&[s1, s2]);
    log.extend(log2);
    Ok(TwoStageOutcome { stage1, stage2, log })
}

/// Predicted and ground-truth camera-frame joints, flat `[frames·21·3]`, for
/// the grid frames of `clips` in clip order. Clips are evaluated in parallel.
pub fn predict_clips(model: &Model<f32>, data: &Dataset, clips: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_clips(data, clips)?;
    let frames = grid_frames(data, &model.config)?;
    let parts = clips
        .par_iter()
        .map(|&c| {
            let items: Vec<(usize, usize)> = frames.iter().map(|&f| (c, f)).collect();
            let (x, _, gt) = frame_batch(data, &items)?;
            let (_, p3) = model.predict(&x)?;
            Ok((p3.to_f64(), gt.to_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for (p, g) in parts {
        pred.extend(p);
        gt.extend(g);
    }
    Ok((pred, gt))
}

pub fn evaluate(model: &Model<f32>, data: &Dataset, clips: &[usize]) -> Result<EvalReport> {
    let (pred, gt) = predict_clips(model, data, clips)?;
    EvalReport::from_predictions(&pred, &gt)
}

/// Report on the dataset's own labels (prediction = ground truth).
pub fn evaluate_ground_truth(data: &Dataset, clips: &[usize], views: usize, window: usize) -> Result<EvalReport> {
    check_clips(data, clips)?;
    let cfg = ModelConfig { views, window, ..ModelConfig::default() };
    let mut cfg = cfg;
    cfg.encoder.resolution = data.config.resolution;
    let frames = grid_frames(data, &cfg)?;
    let gt: Vec<f64> = clips
        .iter()
        .flat_map(|&c| frames.iter().flat_map(move |&f| data.clips[c].frame_cam3d(f).iter().map(|&x| x as f64)))
        .collect();
    EvalReport::from_predictions(&gt, &gt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_decay_schedule() {
        let p = TrainingConfig::full_length(1);
        assert!((p.lr_at(100) - 0.1 * p.lr).abs() < 1e-15);
        assert_eq!(p.lr_at(99), p.lr);
        let d = TrainingConfig::stage2();
        assert!((d.lr_at(25) - d.lr * 0.01).abs() < 1e-15);
    }

    #[test]
    fn kv_round_trip_and_validation() {
        for c in [TrainingConfig::stage1(), TrainingConfig::stage2()] {
            assert_eq!(TrainingConfig::from_kv(&c.to_kv(), c.stage).unwrap(), c);
        }
        let mut kv = KvConfig::new();
        kv.set("stage1.lr", -1.0);
        assert!(matches!(TrainingConfig::from_kv(&kv, 1), Err(Error::Config(_))));
        assert!(TrainingConfig::for_stage(3).is_err());
    }

    #[test]
    fn log_line_format() {
        let l = EpochLog { stage: 2, epoch: 3, lr: 0.006, loss: 1.5 };
        assert_eq!(l.to_string(), "epoch=3 stage=2 lr=6e-3 loss=1.500000");
    }
}
