//! The assembled network: encoder → temporal/angular learners → FC 2D head →
//! lifter, plus every ablation variant and checkpoint serialization.
//!
//! Frames of a batch of clips are laid out as rows ordered `(clip, view, time)`,
//! i.e. row `(b·V + v)·T + t`.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::config::{join_list, KvConfig};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::{LifterConfig, LifterKind};
use crate::hand::JOINTS;
use crate::recurrent::{run_learner, Axis, CellKind, SequenceLearnerConfig};
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

pub const HEAD_OUT: usize = JOINTS * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    Baseline1,
    Baseline2,
    Baseline3,
    GruBoth,
    LstmVGruT,
    LstmTGruV,
    AutoEncLifter,
    GcnOnlyLifter,
    Stage1Surrogate,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Full,
        Variant::Baseline1,
        Variant::Baseline2,
        Variant::Baseline3,
        Variant::GruBoth,
        Variant::LstmVGruT,
        Variant::LstmTGruV,
        Variant::AutoEncLifter,
        Variant::GcnOnlyLifter,
        Variant::Stage1Surrogate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Baseline1 => "baseline1-no-temporal",
            Variant::Baseline2 => "baseline2-no-angular",
            Variant::Baseline3 => "baseline3-single-frame",
            Variant::GruBoth => "gru-both",
            Variant::LstmVGruT => "lstm_v-gru_t",
            Variant::LstmTGruV => "lstm_t-gru_v",
            Variant::AutoEncLifter => "autoenc-lifter",
            Variant::GcnOnlyLifter => "gcn-only-lifter",
            Variant::Stage1Surrogate => "stage1-surrogate",
        }
    }

    pub fn temporal_cell(self) -> Option<CellKind> {
        match self {
            Variant::Full | Variant::Baseline2 | Variant::LstmTGruV | Variant::AutoEncLifter | Variant::GcnOnlyLifter => {
                Some(CellKind::Lstm)
            }
            Variant::GruBoth | Variant::LstmVGruT => Some(CellKind::Gru),
            Variant::Baseline1 | Variant::Baseline3 | Variant::Stage1Surrogate => None,
        }
    }

    pub fn angular_cell(self) -> Option<CellKind> {
        match self {
            Variant::Full | Variant::Baseline1 | Variant::LstmVGruT | Variant::AutoEncLifter | Variant::GcnOnlyLifter => {
                Some(CellKind::Lstm)
            }
            Variant::GruBoth | Variant::LstmTGruV => Some(CellKind::Gru),
            Variant::Baseline2 | Variant::Baseline3 | Variant::Stage1Surrogate => None,
        }
    }

    /// Lifter kind the variant is defined by, if any.
    pub fn required_lifter(self) -> Option<LifterKind> {
        match self {
            Variant::AutoEncLifter => Some(LifterKind::AutoEnc),
            Variant::GcnOnlyLifter => Some(LifterKind::GcnOnly),
            Variant::Baseline3 | Variant::Stage1Surrogate => None,
            _ => Some(LifterKind::UNet),
        }
    }

    /// Whether frames of a clip interact, so inputs must be whole `V×T` grids.
    pub fn is_sequential(self) -> bool {
        self.temporal_cell().is_some() || self.angular_cell().is_some()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown variant `{s}`")))
    }
}

fn lifter_kind_name(k: LifterKind) -> &'static str {
    match k {
        LifterKind::UNet => "unet",
        LifterKind::AutoEnc => "autoenc",
        LifterKind::GcnOnly => "gcn-only",
    }
}

fn parse_lifter_kind(s: &str) -> Result<LifterKind> {
    match s {
        "unet" => Ok(LifterKind::UNet),
        "autoenc" => Ok(LifterKind::AutoEnc),
        "gcn-only" => Ok(LifterKind::GcnOnly),
        _ => Err(Error::config(format!("unknown lifter kind `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub views: usize,
    pub window: usize,
    pub encoder: EncoderConfig,
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
    /// Width of the per-frame FC layer that replaces both learners in the
    /// Stage 1 surrogate and in baseline 3.
    pub surrogate_hidden: usize,
    pub dropout: f64,
    pub lifter: LifterConfig,
    /// One lifter per `(view, time)` slot instead of one shared lifter.
    pub untied_lifter: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Full,
            views: 3,
            window: 5,
            encoder: EncoderConfig::default(),
            hidden: 128,
            layers: 2,
            head_hidden: 128,
            surrogate_hidden: 256,
            dropout: 0.25,
            lifter: LifterConfig::default(),
            untied_lifter: false,
        }
    }
}

const MODEL_KEYS: &[&str] = &[
    "variant",
    "views",
    "window",
    "resolution",
    "encoder.channels",
    "embedding",
    "hidden",
    "layers",
    "head_hidden",
    "surrogate_hidden",
    "dropout",
    "lifter.kind",
    "lifter.adjacency",
    "lifter.schedule",
    "lifter.widths",
    "lifter.gcn_width",
    "lifter.fc_widths",
    "lifter.out_scale",
    "lifter.depth_init",
    "lifter.untied",
];

impl ModelConfig {
    /// Defaults for `variant`, with the lifter kind it requires.
    pub fn for_variant(variant: Variant) -> Self {
        let mut cfg = ModelConfig { variant, ..Default::default() };
        if let Some(kind) = variant.required_lifter() {
            cfg.lifter.kind = kind;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 || self.window == 0 {
            return Err(Error::config("views and window must be at least 1"));
        }
        if self.hidden == 0 || self.layers == 0 || self.head_hidden == 0 || self.surrogate_hidden == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if let Some(kind) = self.variant.required_lifter() {
            if kind != self.lifter.kind {
                return Err(Error::config(format!(
                    "variant `{}` requires the {} lifter, config has {}",
                    self.variant,
                    lifter_kind_name(kind),
                    lifter_kind_name(self.lifter.kind)
                )));
            }
        }
        self.encoder.validate()?;
        self.lifter.validate()
    }

    pub fn head_input(&self) -> usize {
        match (self.variant.temporal_cell(), self.variant.angular_cell()) {
            (Some(_), Some(_)) => 2 * self.hidden,
            (Some(_), None) | (None, Some(_)) => self.hidden,
            (None, None) => self.surrogate_hidden,
        }
    }

    fn learner(&self, axis: Axis, cell: CellKind) -> SequenceLearnerConfig {
        SequenceLearnerConfig {
            axis,
            seq_len: match axis {
                Axis::Temporal => self.window,
                Axis::Angular => self.views,
            },
            num_layers: self.layers,
            hidden: self.hidden,
            input: self.encoder.embedding,
            cell,
        }
    }

    pub fn temporal(&self) -> Option<SequenceLearnerConfig> {
        self.variant.temporal_cell().map(|c| self.learner(Axis::Temporal, c))
    }

    pub fn angular(&self) -> Option<SequenceLearnerConfig> {
        self.variant.angular_cell().map(|c| self.learner(Axis::Angular, c))
    }

    /// Lifter parameter prefixes in `(view, time)` order.
    pub fn lifter_prefixes(&self) -> Vec<String> {
        if self.untied_lifter {
            (0..self.views)
                .flat_map(|v| (0..self.window).map(move |t| format!("lifter.{v}_{t}")))
                .collect()
        } else {
            vec!["lifter".to_string()]
        }
    }

    /// Writes every field under `model.`.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        let l = &self.lifter;
        let pairs: Vec<(&str, String)> = vec![
            ("variant", self.variant.to_string()),
            ("views", self.views.to_string()),
            ("window", self.window.to_string()),
            ("resolution", self.encoder.resolution.to_string()),
            ("encoder.channels", join_list(&self.encoder.channels)),
            ("embedding", self.encoder.embedding.to_string()),
            ("hidden", self.hidden.to_string()),
            ("layers", self.layers.to_string()),
            ("head_hidden", self.head_hidden.to_string()),
            ("surrogate_hidden", self.surrogate_hidden.to_string()),
            ("dropout", self.dropout.to_string()),
            ("lifter.kind", lifter_kind_name(l.kind).to_string()),
            ("lifter.adjacency", l.adjacency.to_string()),
            ("lifter.schedule", join_list(&l.schedule)),
            ("lifter.widths", join_list(&l.widths)),
            ("lifter.gcn_width", l.gcn_width.to_string()),
            ("lifter.fc_widths", join_list(&l.fc_widths)),
            ("lifter.out_scale", l.out_scale.to_string()),
            ("lifter.depth_init", l.depth_init.to_string()),
            ("lifter.untied", self.untied_lifter.to_string()),
        ];
        for (k, v) in pairs {
            kv.set(&format!("model.{k}"), v);
        }
        kv
    }

    /// Reads `model.*` keys; absent keys keep the variant's defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let s = kv.section("model");
        s.check_keys(MODEL_KEYS)?;
        let variant: Variant = s.get_or("variant", Variant::Full)?;
        let mut c = ModelConfig::for_variant(variant);
        c.views = s.get_or("views", c.views)?;
        c.window = s.get_or("window", c.window)?;
        c.encoder.resolution = s.get_or("resolution", c.encoder.resolution)?;
        if let Some(ch) = s.get_list("encoder.channels")? {
            c.encoder.channels = ch;
        }
        c.encoder.embedding = s.get_or("embedding", c.encoder.embedding)?;
        c.hidden = s.get_or("hidden", c.hidden)?;
        c.layers = s.get_or("layers", c.layers)?;
        c.head_hidden = s.get_or("head_hidden", c.head_hidden)?;
        c.surrogate_hidden = s.get_or("surrogate_hidden", c.surrogate_hidden)?;
        c.dropout = s.get_or("dropout", c.dropout)?;
        if let Some(k) = s.raw("lifter.kind") {
            c.lifter.kind = parse_lifter_kind(k)?;
        }
        c.lifter.adjacency = s.get_or("lifter.adjacency", c.lifter.adjacency)?;
        if let Some(v) = s.get_list("lifter.schedule")? {
            c.lifter.schedule = v;
        }
        if let Some(v) = s.get_list("lifter.widths")? {
            c.lifter.widths = v;
        }
        c.lifter.gcn_width = s.get_or("lifter.gcn_width", c.lifter.gcn_width)?;
        if let Some(v) = s.get_list("lifter.fc_widths")? {
            c.lifter.fc_widths = v;
        }
        c.lifter.out_scale = s.get_or("lifter.out_scale", c.lifter.out_scale)?;
        c.lifter.depth_init = s.get_or("lifter.depth_init", c.lifter.depth_init)?;
        c.untied_lifter = s.get_or("lifter.untied", c.untied_lifter)?;
        c.validate()?;
        Ok(c)
    }
}

/// Training-time behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub training: bool,
    pub dropout_seed: u64,
}

impl Mode {
    pub const INFERENCE: Mode = Mode { training: false, dropout_seed: 0 };

    pub fn train(dropout_seed: u64) -> Self {
        Mode { training: true, dropout_seed }
    }
}

/// Tape handles of one forward pass, rows in `(clip, view, time)` order.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    /// Normalized 2D joints `[R,21,2]`; pixel = `res/2 · (1 + y)`.
    pub pose2d: Var,
    /// Camera-frame 3D joints in millimetres, `[R,21,3]`.
    pub pose3d: Var,
    /// Temporal learner outputs `[R,hidden]`, when present.
    pub temporal: Option<Var>,
    /// Angular learner outputs `[R,hidden]`, when present.
    pub angular: Option<Var>,
}

/// A configured network and its parameters.
#[derive(Debug, Clone)]
pub struct Model<S: Real> {
    pub config: ModelConfig,
    pub store: ParamStore<S>,
}

/// Row permutation from `(clip, view, time)` to `(clip, time, view)` order.
pub fn view_major_to_time_major(clips: usize, views: usize, window: usize) -> Vec<usize> {
    let mut rows = Vec::with_capacity(clips * views * window);
    for b in 0..clips {
        for t in 0..window {
            for v in 0..views {
                rows.push((b * views + v) * window + t);
            }
        }
    }
    rows
}

fn inverse_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

impl<S: Real> Model<S> {
    /// Builds the variant described by `config` with freshly initialized parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        config.encoder.init(&mut store, seed)?;
        if let Some(t) = config.temporal() {
            t.init(&mut store, "temporal", seed)?;
        }
        if let Some(a) = config.angular() {
            a.init(&mut store, "angular", seed)?;
        }
        if !config.variant.is_sequential() {
            let (e, h) = (config.encoder.embedding, config.surrogate_hidden);
            store.init_relu("frame.fc0.weight", &[e, h], e, seed)?;
            store.init_zeros("frame.fc0.bias", &[h])?;
        }
        let (hin, hh) = (config.head_input(), config.head_hidden);
        store.init_relu("head.fc0.weight", &[hin, hh], hin, seed)?;
        store.init_zeros("head.fc0.bias", &[hh])?;
        store.init_uniform("head.fc1.weight", &[hh, HEAD_OUT], hh, seed)?;
        store.init_zeros("head.fc1.bias", &[HEAD_OUT])?;
        for prefix in config.lifter_prefixes() {
            config.lifter.init(&mut store, &prefix, seed)?;
        }
        Ok(Model { config, store })
    }

    pub fn param_count(&self) -> usize {
        self.store.numel()
    }

    /// Parameters belonging to the recurrent learners.
    pub fn recurrent_param_count(&self) -> usize {
        self.store
            .iter()
            .filter(|(n, _)| n.starts_with("temporal.") || n.starts_with("angular."))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn graph_conv_layers(&self) -> usize {
        self.config.lifter.graph_layers("lifter").len()
    }

    /// Per-frame embeddings `[R,embedding]` of frames `[R,3,H,W]`.
    pub fn embed(&self, tape: &mut Tape<S>, frames: Var) -> Result<Var> {
        self.config.encoder.encode(tape, &self.store, frames)
    }

    pub fn forward_frames(&self, tape: &mut Tape<S>, frames: Var, mode: Mode) -> Result<ForwardOutput> {
        let emb = self.embed(tape, frames)?;
        self.forward_embeddings(tape, emb, mode)
    }

    /// Runs everything after the encoder on embeddings `[R,embedding]`.
    pub fn forward_embeddings(&self, tape: &mut Tape<S>, emb: Var, mode: Mode) -> Result<ForwardOutput> {
        let c = &self.config;
        let shape = tape.shape(emb).to_vec();
        if shape.len() != 2 || shape[1] != c.encoder.embedding {
            return Err(Error::dim(
                "forward",
                format!("embeddings {shape:?}, expected [_, {}]", c.encoder.embedding),
            ));
        }
        let rows = shape[0];
        let grid = c.views * c.window;
        if (c.variant.is_sequential() || c.untied_lifter) && rows % grid != 0 {
            return Err(Error::dim(
                "forward",
                format!("{rows} frames do not form whole {}x{} clips", c.views, c.window),
            ));
        }
        let clips = rows / grid;
        let temporal = match c.temporal() {
            Some(cfg) => Some(run_learner(tape, &self.store, &cfg, "temporal", emb)?),
            None => None,
        };
        let angular = match c.angular() {
            Some(cfg) => {
                let order = view_major_to_time_major(clips, c.views, c.window);
                let back = inverse_permutation(&order);
                let x = tape.gather_rows(emb, order)?;
                let y = run_learner(tape, &self.store, &cfg, "angular", x)?;
                Some(tape.gather_rows(y, back)?)
            }
            None => None,
        };
        let mut z = match (temporal, angular) {
            (Some(x), Some(y)) => tape.concat(&[x, y], 1)?,
            (Some(x), None) => x,
            (None, Some(y)) => y,
            (None, None) => {
                let w = tape.param(&self.store, "frame.fc0.weight")?;
                let b = tape.param(&self.store, "frame.fc0.bias")?;
                let h = tape.linear(emb, w, b)?;
                tape.relu(h)?
            }
        };
        if c.variant != Variant::Stage1Surrogate && c.dropout > 0.0 {
            z = tape.dropout(z, 1.0 - c.dropout, mode.dropout_seed, mode.training)?;
        }
        let w0 = tape.param(&self.store, "head.fc0.weight")?;
        let b0 = tape.param(&self.store, "head.fc0.bias")?;
        let h = tape.linear(z, w0, b0)?;
        let h = tape.relu(h)?;
        let w1 = tape.param(&self.store, "head.fc1.weight")?;
        let b1 = tape.param(&self.store, "head.fc1.bias")?;
        let flat = tape.linear(h, w1, b1)?;
        let pose2d = tape.reshape(flat, &[rows, JOINTS, 2])?;
        let pose3d = self.lift(tape, pose2d, clips)?;
        Ok(ForwardOutput { pose2d, pose3d, temporal, angular })
    }

    fn lift(&self, tape: &mut Tape<S>, pose2d: Var, clips: usize) -> Result<Var> {
        let c = &self.config;
        if !c.untied_lifter {
            return c.lifter.lift(tape, &self.store, "lifter", pose2d);
        }
        let grid = c.views * c.window;
        let mut parts = Vec::with_capacity(grid);
        for (slot, prefix) in c.lifter_prefixes().iter().enumerate() {
            let rows: Vec<usize> = (0..clips).map(|b| b * grid + slot).collect();
            let x = tape.gather_rows(pose2d, rows)?;
            parts.push(c.lifter.lift(tape, &self.store, prefix, x)?);
        }
        // parts are slot-major; restore (clip, slot) row order
        let stacked = tape.concat(&parts, 0)?;
        let order: Vec<usize> = (0..clips * grid).map(|r| (r % grid) * clips + r / grid).collect();
        tape.gather_rows(stacked, order)
    }

    /// Inference on frames `[R,3,H,W]`; returns normalized 2D and 3D poses.
    pub fn predict(&self, frames: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let mut tape = Tape::new();
        let x = tape.constant(frames.clone())?;
        let out = self.forward_frames(&mut tape, x, Mode::INFERENCE)?;
        Ok((tape.tensor(out.pose2d), tape.tensor(out.pose3d)))
    }

    /// Inference from precomputed embeddings `[R,embedding]`.
    pub fn predict_embeddings(&self, emb: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let mut tape = Tape::new();
        let x = tape.constant(emb.clone())?;
        let out = self.forward_embeddings(&mut tape, x, Mode::INFERENCE)?;
        Ok((tape.tensor(out.pose2d), tape.tensor(out.pose3d)))
    }
}

/// Normalized head coordinate to pixels.
pub fn to_pixels(y: f64, resolution: usize) -> f64 {
    resolution as f64 / 2.0 * (1.0 + y)
}

/// Pixels to the normalized head coordinate.
pub fn from_pixels(px: f64, resolution: usize) -> f64 {
    px / (resolution as f64 / 2.0) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AdjacencyMode;

    fn small(variant: Variant) -> ModelConfig {
        let mut c = ModelConfig::for_variant(variant);
        c.encoder = EncoderConfig { resolution: 16, channels: vec![4, 8], embedding: 16 };
        c.hidden = 8;
        c.head_hidden = 8;
        c.surrogate_hidden = 8;
        c.lifter.widths = vec![8, 8, 8];
        c.lifter.gcn_width = 8;
        c.lifter.fc_widths = vec![8];
        c
    }

    #[test]
    fn default_clip_gives_three_by_five_poses() {
        let cfg = ModelConfig { encoder: EncoderConfig { resolution: 16, channels: vec![4, 4], embedding: 512 }, ..Default::default() };
        let m = Model::<f32>::new(cfg, 1).unwrap();
        let (p2, p3) = m.predict(&Tensor::full(&[15, 3, 16, 16], 0.5)).unwrap();
        assert_eq!(p3.shape(), &[15, 21, 3]);
        assert_eq!(p2.shape(), &[15, 21, 2]);
    }

    #[test]
    fn baseline3_has_no_recurrent_parameters_and_fewer_overall() {
        let b3 = Model::<f32>::new(ModelConfig::for_variant(Variant::Baseline3), 1).unwrap();
        let full = Model::<f32>::new(ModelConfig::default(), 1).unwrap();
        assert_eq!(b3.recurrent_param_count(), 0);
        assert!(b3.param_count() < full.param_count());
        let (_, p3) = b3.predict(&Tensor::full(&[1, 3, 64, 64], 0.2)).unwrap();
        assert_eq!(p3.shape(), &[1, 21, 3]);
    }

    #[test]
    fn variant_parameter_sets() {
        let ae = Model::<f32>::new(small(Variant::AutoEncLifter), 1).unwrap();
        assert!(!ae.store.names().any(|n| n.contains(".adj")));
        let gcn = Model::<f32>::new(small(Variant::GcnOnlyLifter), 1).unwrap();
        assert_eq!(gcn.graph_conv_layers(), 3);
        let s1 = Model::<f32>::new(small(Variant::Stage1Surrogate), 1).unwrap();
        assert_eq!(s1.recurrent_param_count(), 0);
        assert!(s1.store.contains("frame.fc0.weight"));
        let gru = Model::<f32>::new(small(Variant::GruBoth), 1).unwrap();
        assert!(gru.store.contains("temporal.l1.w_updatex"));
    }

    #[test]
    fn inconsistent_lifter_is_config_error() {
        let mut c = ModelConfig::for_variant(Variant::AutoEncLifter);
        c.lifter.kind = LifterKind::UNet;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_kv() {
        for v in Variant::ALL {
            let mut c = small(v);
            c.lifter.adjacency = AdjacencyMode::Random(3);
            let back = ModelConfig::from_kv(&c.to_kv()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn head_width_is_42_everywhere() {
        for v in Variant::ALL {
            let m = Model::<f32>::new(small(v), 2).unwrap();
            assert_eq!(m.store.get("head.fc1.weight").unwrap().shape()[1], 42);
        }
    }

    #[test]
    fn untied_lifter_matches_per_slot_lifts() {
        let mut c = small(Variant::Full);
        c.views = 2;
        c.window = 2;
        c.untied_lifter = true;
        let m = Model::<f64>::new(c, 4).unwrap();
        assert!(m.store.contains("lifter.1_1.out.bias"));
        let emb = Tensor::from_f64(&[8, 16], &(0..128).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>()).unwrap();
        let (p2, p3) = m.predict_embeddings(&emb).unwrap();
        // row 5 = clip 1, slot 1 (view 0, time 1)
        let mut t = Tape::new();
        let row = t.constant(Tensor::new(&[1, 21, 2], p2.data()[5 * 42..6 * 42].to_vec()).unwrap()).unwrap();
        let lifted = m.config.lifter.lift(&mut t, &m.store, "lifter.0_1", row).unwrap();
        assert_eq!(t.value(lifted), &p3.data()[5 * 63..6 * 63]);
    }
}
