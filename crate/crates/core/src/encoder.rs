//! Per-frame image encoder: per-frame standardization, stride-2 `3×3`
//! convolution + relu stages, global average pooling, and a linear map to the
//! embedding width.

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

pub const PREFIX: &str = "encoder";
/// Variance floor of the per-frame standardization.
pub const STANDARDIZE_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Square input side in pixels.
    pub resolution: usize,
    /// Output channels of each stride-2 stage.
    pub channels: Vec<usize>,
    pub embedding: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            resolution: 64,
            channels: vec![8, 16, 32, 32, 64, 64],
            embedding: 512,
        }
    }
}

impl EncoderConfig {
    pub fn stages(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding == 0 {
            return Err(Error::config("encoder embedding size must be positive"));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::config("encoder needs at least one stage with positive width"));
        }
        let div = 1usize << self.stages();
        if self.resolution == 0 || self.resolution % div != 0 {
            return Err(Error::config(format!(
                "resolution {} is not divisible by 2^{} ",
                self.resolution,
                self.stages()
            )));
        }
        Ok(())
    }

    pub fn init<S: Real>(&self, store: &mut ParamStore<S>, seed: u64) -> Result<()> {
        self.validate()?;
        let mut cin = 3;
        for (i, &cout) in self.channels.iter().enumerate() {
            store.init_relu(&format!("{PREFIX}.conv{i}.weight"), &[cout, cin, 3, 3], cin * 9, seed)?;
            store.init_zeros(&format!("{PREFIX}.conv{i}.bias"), &[cout])?;
            cin = cout;
        }
        store.init_uniform(&format!("{PREFIX}.proj.weight"), &[cin, self.embedding], cin, seed)?;
        store.init_zeros(&format!("{PREFIX}.proj.bias"), &[self.embedding])?;
        Ok(())
    }

    /// Encodes a batch `[B,3,H,W]` into embeddings `[B,embedding]`.
    pub fn encode<S: Real>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, frames: Var) -> Result<Var> {
        let shape = tape.shape(frames).to_vec();
        if shape.len() != 4 || shape[1] != 3 || shape[2] != self.resolution || shape[3] != self.resolution {
            return Err(Error::dim(
                "encode",
                format!("frames {shape:?} do not match resolution {}", self.resolution),
            ));
        }
        let mut x = standardize(tape, frames)?;
        for i in 0..self.stages() {
            let w = tape.param(store, &format!("{PREFIX}.conv{i}.weight"))?;
            let b = tape.param(store, &format!("{PREFIX}.conv{i}.bias"))?;
            x = tape.conv2d(x, w, b, 2, 1)?;
            x = tape.relu(x)?;
        }
        let pooled = tape.global_avg_pool(x)?;
        let w = tape.param(store, &format!("{PREFIX}.proj.weight"))?;
        let b = tape.param(store, &format!("{PREFIX}.proj.bias"))?;
        tape.linear(pooled, w, b)
    }
}

/// Zero mean, unit variance per frame; a global brightness factor cancels out.
pub fn standardize<S: Real>(tape: &mut Tape<S>, frames: Var) -> Result<Var> {
    let shape = tape.shape(frames).to_vec();
    let (b, n) = (shape[0], shape[1..].iter().product::<usize>());
    let flat = tape.reshape(frames, &[b, n])?;
    let avg = tape.constant(Tensor::full(&[n, 1], S::of(1.0 / n as f64)))?;
    let spread = tape.constant(Tensor::full(&[1, n], S::one()))?;
    let mean = tape.matmul(flat, avg)?;
    let mean_b = tape.matmul(mean, spread)?;
    let centered = tape.sub(flat, mean_b)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.matmul(sq, avg)?;
    let inv = tape.rsqrt(var, STANDARDIZE_EPS)?;
    let inv_b = tape.matmul(inv, spread)?;
    let out = tape.mul(centered, inv_b)?;
    tape.reshape(out, &shape)
}

/// Packs HWC frames (values in `[0,1]`) into a `[B,3,H,W]` tensor.
pub fn frames_to_tensor<S: Real>(frames: &[&[f32]], resolution: usize) -> Result<Tensor<S>> {
    let hw = resolution * resolution;
    let mut data = Vec::with_capacity(frames.len() * 3 * hw);
    for f in frames {
        if f.len() != hw * 3 {
            return Err(Error::dim(
                "frames_to_tensor",
                format!("frame of {} values, expected {}x{}x3", f.len(), resolution, resolution),
            ));
        }
        for c in 0..3 {
            data.extend((0..hw).map(|p| S::of(f[p * 3 + c] as f64)));
        }
    }
    Tensor::new(&[frames.len(), 3, resolution, resolution], data)
}
