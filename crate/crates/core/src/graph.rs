//! Graph convolution over the hand graph with symmetric normalized adjacency,
//! dense trainable pooling/unpooling, and the 2D→3D lifters built from them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hand::{self, JOINTS};
use crate::tensor::rng::rng_for;
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

/// Degree epsilon inside the square root for learned adjacency.
pub const LEARNED_EPS: f64 = 1e-8;
/// Offset added to the raw learned adjacency at initialization, so that
/// `softplus(raw)` starts small and the normalized graph starts near identity.
const LEARNED_INIT_OFFSET: f64 = -3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyMode {
    Learned,
    HandSkeleton,
    /// Fixed symmetric binary graph drawn from the given seed.
    Random(u64),
}

impl fmt::Display for AdjacencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdjacencyMode::Learned => f.write_str("learned"),
            AdjacencyMode::HandSkeleton => f.write_str("hand-skeleton"),
            AdjacencyMode::Random(s) => write!(f, "random-{s}"),
        }
    }
}

impl FromStr for AdjacencyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(AdjacencyMode::Learned),
            "hand-skeleton" => Ok(AdjacencyMode::HandSkeleton),
            _ => s
                .strip_prefix("random-")
                .and_then(|n| n.parse().ok())
                .map(AdjacencyMode::Random)
                .ok_or_else(|| Error::config(format!("unknown adjacency mode `{s}`"))),
        }
    }
}

/// `Ā = D^{-1/2} Â D^{-1/2}` with `Â = g(A) + I`, where `g` is softplus when
/// `softplus` is set and the identity otherwise. Differentiable in `a`.
pub fn normalize_adjacency<S: Real>(tape: &mut Tape<S>, a: Var, softplus: bool, eps: f64) -> Result<Var> {
    let shape = tape.shape(a).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::dim("normalize_adjacency", format!("adjacency {shape:?} is not square")));
    }
    let n = shape[0];
    let pos = if softplus { tape.softplus(a)? } else { a };
    let eye = tape.constant(Tensor::identity(n))?;
    let a_hat = tape.add(pos, eye)?;
    let ones = tape.constant(Tensor::full(&[n, 1], S::one()))?;
    let deg = tape.matmul(a_hat, ones)?;
    if let Some(i) = tape.value(deg).iter().position(|&d| d <= S::zero()) {
        return Err(Error::Numeric {
            op: "normalize_adjacency",
            detail: format!("node {i} has non-positive degree"),
        });
    }
    let d = tape.rsqrt(deg, eps)?;
    let dt = tape.transpose(d)?;
    let outer = tape.matmul(d, dt)?;
    tape.mul(a_hat, outer)
}

/// Binary skeleton adjacency over the 21 joints (20 bones, symmetric).
pub fn skeleton_adjacency<S: Real>() -> Tensor<S> {
    let mut t = Tensor::zeros(&[JOINTS, JOINTS]);
    for (p, c) in hand::bones() {
        t.set(&[p, c], S::one());
        t.set(&[c, p], S::one());
    }
    t
}

/// Symmetric binary graph with zero diagonal; each edge present with probability 1/2.
pub fn random_adjacency<S: Real>(n: usize, seed: u64, label: &str) -> Tensor<S> {
    let mut rng = rng_for(seed, label);
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.5) {
                t.set(&[i, j], S::one());
                t.set(&[j, i], S::one());
            }
        }
    }
    t
}

/// Contiguous partition: node `i` of `n_in` belongs to group `i·n_out/n_in`.
pub fn pool_groups(n_in: usize, n_out: usize) -> Vec<usize> {
    (0..n_in).map(|i| i * n_out / n_in).collect()
}

/// Skeleton graph coarsened by [`pool_groups`]: two groups are adjacent when
/// a bone joins them.
fn coarse_skeleton<S: Real>(nodes: usize) -> Tensor<S> {
    if nodes == JOINTS {
        return skeleton_adjacency();
    }
    let g = pool_groups(JOINTS, nodes);
    let mut t = Tensor::zeros(&[nodes, nodes]);
    for (p, c) in hand::bones() {
        let (a, b) = (g[p], g[c]);
        if a != b {
            t.set(&[a, b], S::one());
            t.set(&[b, a], S::one());
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvLayer {
    pub name: String,
    pub nodes: usize,
    pub fin: usize,
    pub fout: usize,
    pub activation: Activation,
    pub adjacency: AdjacencyMode,
}

impl GraphConvLayer {
    pub fn init<S: Real>(&self, store: &mut ParamStore<S>, seed: u64) -> Result<()> {
        let w = format!("{}.weight", self.name);
        match self.activation {
            Activation::Relu => store.init_relu(&w, &[self.fin, self.fout], self.fin, seed)?,
            Activation::Identity => store.init_uniform(&w, &[self.fin, self.fout], self.fin, seed)?,
        }
        if self.adjacency == AdjacencyMode::Learned {
            let n = self.nodes;
            store.init_range(
                &format!("{}.adj", self.name),
                &[n, n],
                LEARNED_INIT_OFFSET - 0.5,
                LEARNED_INIT_OFFSET + 0.5,
                seed,
            )?;
        }
        Ok(())
    }

    /// The normalized adjacency `Ā` this layer multiplies by.
    pub fn normalized<S: Real>(&self, tape: &mut Tape<S>, store: &ParamStore<S>) -> Result<Var> {
        match self.adjacency {
            AdjacencyMode::Learned => {
                let a = tape.param(store, &format!("{}.adj", self.name))?;
                normalize_adjacency(tape, a, true, LEARNED_EPS)
            }
            AdjacencyMode::HandSkeleton => {
                let a = tape.constant(coarse_skeleton(self.nodes))?;
                normalize_adjacency(tape, a, false, 0.0)
            }
            AdjacencyMode::Random(seed) => {
                let a = tape.constant(random_adjacency(self.nodes, seed, &self.name))?;
                normalize_adjacency(tape, a, false, 0.0)
            }
        }
    }

    /// `σ(Ā X W)` on `x [B,N,F_in]`.
    pub fn forward<S: Real>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[1] != self.nodes || shape[2] != self.fin {
            return Err(Error::dim(
                "graph_conv",
                format!("input {shape:?} vs layer `{}` [_, {}, {}]", self.name, self.nodes, self.fin),
            ));
        }
        let b = shape[0];
        let a = self.normalized(tape, store)?;
        let ax = tape.left_bmm(a, x)?;
        let flat = tape.reshape(ax, &[b * self.nodes, self.fin])?;
        let w = tape.param(store, &format!("{}.weight", self.name))?;
        let y = tape.matmul(flat, w)?;
        let y = tape.reshape(y, &[b, self.nodes, self.fout])?;
        match self.activation {
            Activation::Relu => tape.relu(y),
            Activation::Identity => Ok(y),
        }
    }
}

/// Trainable `n_out × n_in` pooling and `n_in × n_out` unpooling matrices,
/// initialized to group averaging and group copy.
pub fn init_pool_pair<S: Real>(store: &mut ParamStore<S>, pool: &str, unpool: &str, n_in: usize, n_out: usize) -> Result<()> {
    let groups = pool_groups(n_in, n_out);
    let mut sizes = vec![0usize; n_out];
    for &g in &groups {
        sizes[g] += 1;
    }
    let mut p = Tensor::zeros(&[n_out, n_in]);
    let mut u = Tensor::zeros(&[n_in, n_out]);
    for (i, &g) in groups.iter().enumerate() {
        p.set(&[g, i], S::of(1.0 / sizes[g] as f64));
        u.set(&[i, g], S::one());
    }
    store.insert(pool, p)?;
    store.insert(unpool, u)
}

/// Applies a pooling or unpooling matrix `[N_out, N_in]` to `x [B,N_in,F]`.
pub fn apply_node_map<S: Real>(tape: &mut Tape<S>, store: &ParamStore<S>, name: &str, x: Var) -> Result<Var> {
    let m = tape.param(store, name)?;
    let (ms, xs) = (tape.shape(m).to_vec(), tape.shape(x).to_vec());
    if xs.len() != 3 || xs[1] != ms[1] {
        return Err(Error::dim("graph_pool", format!("`{name}` {ms:?} cannot map nodes of {xs:?}")));
    }
    tape.left_bmm(m, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifterKind {
    UNet,
    AutoEnc,
    GcnOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifterConfig {
    pub kind: LifterKind,
    pub adjacency: AdjacencyMode,
    /// Encoder node counts, starting at 21 and ending at the bottleneck.
    pub schedule: Vec<usize>,
    /// Encoder widths per level; the decoder mirrors them.
    pub widths: Vec<usize>,
    /// Hidden width of the GCN-only lifter.
    pub gcn_width: usize,
    /// FC widths of the AutoEnc lifter between 42 and 63.
    pub fc_widths: Vec<usize>,
    /// Millimetres per unit of raw network output.
    pub out_scale: f64,
    /// Initial depth of the output offset, in millimetres.
    pub depth_init: f64,
}

impl Default for LifterConfig {
    fn default() -> Self {
        LifterConfig {
            kind: LifterKind::UNet,
            adjacency: AdjacencyMode::Learned,
            schedule: vec![21, 10, 4, 1],
            widths: vec![64, 128, 256],
            gcn_width: 128,
            fc_widths: vec![256, 128, 64, 128, 256],
            out_scale: 100.0,
            depth_init: 400.0,
        }
    }
}

impl LifterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == LifterKind::UNet {
            let s = &self.schedule;
            if s.first() != Some(&JOINTS) || s.len() != self.widths.len() + 1 {
                return Err(Error::config(format!(
                    "lifter schedule {s:?} must start at {JOINTS} and have one more level than widths {:?}",
                    self.widths
                )));
            }
            if s.windows(2).any(|w| w[1] == 0 || w[1] >= w[0]) {
                return Err(Error::config(format!("lifter schedule {s:?} must strictly decrease")));
            }
        }
        if self.widths.contains(&0) || self.fc_widths.contains(&0) || self.gcn_width == 0 {
            return Err(Error::config("lifter widths must be positive"));
        }
        Ok(())
    }

    /// Full node schedule, e.g. `21 → 10 → 4 → 1 → 4 → 10 → 21`.
    pub fn node_schedule(&self) -> Vec<usize> {
        let mut s = self.schedule.clone();
        s.extend(self.schedule.iter().rev().skip(1));
        s
    }

    /// Graph-conv layers in forward order.
    pub fn graph_layers(&self, prefix: &str) -> Vec<GraphConvLayer> {
        let layer = |i: usize, nodes, fin, fout, act| GraphConvLayer {
            name: format!("{prefix}.g{i}"),
            nodes,
            fin,
            fout,
            activation: act,
            adjacency: self.adjacency,
        };
        match self.kind {
            LifterKind::AutoEnc => Vec::new(),
            LifterKind::GcnOnly => vec![
                layer(0, JOINTS, 2, self.gcn_width, Activation::Relu),
                layer(1, JOINTS, self.gcn_width, self.gcn_width, Activation::Relu),
                layer(2, JOINTS, self.gcn_width, 3, Activation::Identity),
            ],
            LifterKind::UNet => {
                let (s, w) = (&self.schedule, &self.widths);
                let levels = w.len();
                let mut out = Vec::new();
                let mut fin = 2;
                for l in 0..levels {
                    out.push(layer(l, s[l], fin, w[l], Activation::Relu));
                    fin = w[l];
                }
                // decoder level l consumes unpooled features concatenated with skip l
                for (k, l) in (0..levels).rev().enumerate() {
                    let fout = if l == 0 { 3 } else { w[l - 1] };
                    let act = if l == 0 { Activation::Identity } else { Activation::Relu };
                    out.push(layer(levels + k, s[l], fin + w[l], fout, act));
                    fin = fout;
                }
                out
            }
        }
    }

    pub fn init<S: Real>(&self, store: &mut ParamStore<S>, prefix: &str, seed: u64) -> Result<()> {
        self.validate()?;
        for layer in self.graph_layers(prefix) {
            layer.init(store, seed)?;
        }
        match self.kind {
            LifterKind::UNet => {
                for l in 0..self.widths.len() {
                    init_pool_pair(
                        store,
                        &format!("{prefix}.pool{l}"),
                        &format!("{prefix}.unpool{l}"),
                        self.schedule[l],
                        self.schedule[l + 1],
                    )?;
                }
            }
            LifterKind::AutoEnc => {
                let mut fin = JOINTS * 2;
                let hidden = self.fc_widths.len();
                for (i, &w) in self.fc_widths.iter().chain(std::iter::once(&(JOINTS * 3))).enumerate() {
                    let name = format!("{prefix}.fc{i}.weight");
                    if i < hidden {
                        store.init_relu(&name, &[fin, w], fin, seed)?;
                    } else {
                        store.init_uniform(&name, &[fin, w], fin, seed)?;
                    }
                    store.init_zeros(&format!("{prefix}.fc{i}.bias"), &[w])?;
                    fin = w;
                }
            }
            LifterKind::GcnOnly => {}
        }
        store.insert(
            &format!("{prefix}.out.bias"),
            Tensor::from_f64(&[3], &[0.0, 0.0, self.depth_init])?,
        )
    }

    /// Lifts normalized 2D joints `[B,21,2]` to camera-frame millimetres `[B,21,3]`.
    pub fn lift<S: Real>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, prefix: &str, w: Var) -> Result<Var> {
        let shape = tape.shape(w).to_vec();
        if shape.len() != 3 || shape[1] != JOINTS || shape[2] != 2 {
            return Err(Error::dim("lift", format!("2D joints {shape:?}, expected [B, {JOINTS}, 2]")));
        }
        let b = shape[0];
        let layers = self.graph_layers(prefix);
        let raw = match self.kind {
            LifterKind::GcnOnly => {
                let mut x = w;
                for layer in &layers {
                    x = layer.forward(tape, store, x)?;
                }
                x
            }
            LifterKind::AutoEnc => {
                let mut x = tape.reshape(w, &[b, JOINTS * 2])?;
                let n = self.fc_widths.len() + 1;
                for i in 0..n {
                    let wt = tape.param(store, &format!("{prefix}.fc{i}.weight"))?;
                    let bi = tape.param(store, &format!("{prefix}.fc{i}.bias"))?;
                    x = tape.linear(x, wt, bi)?;
                    if i + 1 < n {
                        x = tape.relu(x)?;
                    }
                }
                tape.reshape(x, &[b, JOINTS, 3])?
            }
            LifterKind::UNet => {
                let levels = self.widths.len();
                let mut skips = Vec::with_capacity(levels);
                let mut x = w;
                for (l, layer) in layers[..levels].iter().enumerate() {
                    x = layer.forward(tape, store, x)?;
                    skips.push(x);
                    x = apply_node_map(tape, store, &format!("{prefix}.pool{l}"), x)?;
                }
                for (k, l) in (0..levels).rev().enumerate() {
                    x = apply_node_map(tape, store, &format!("{prefix}.unpool{l}"), x)?;
                    x = tape.concat(&[x, skips[l]], 2)?;
                    x = layers[levels + k].forward(tape, store, x)?;
                }
                x
            }
        };
        let scaled = tape.scale(raw, self.out_scale)?;
        let bias = tape.param(store, &format!("{prefix}.out.bias"))?;
        tape.add_bias(scaled, bias)
    }
}
