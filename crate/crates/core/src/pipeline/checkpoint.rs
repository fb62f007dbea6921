use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Real, Tensor};

pub const CHECKPOINT_MAGIC: &str = "HANDPOSE-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model state: config, parameters, freezing, Adam moments, and
/// where in training it was taken.
#[derive(Debug, Clone)]
pub struct Checkpoint<S: Real> {
    pub model: Model<S>,
    pub stage: u32,
    pub epoch: u32,
    pub seed: u64,
    /// Non-model settings recorded alongside (e.g. the training config).
    pub meta: KvConfig,
}

fn put<S: Real>(out: &mut Vec<u8>, values: &[S]) {
    for &v in values {
        if S::NAME == "f32" {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("checkpoint truncated (missing line)"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| Error::format("checkpoint header is not UTF-8"))
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| Error::format(format!("expected `{key}=` in checkpoint, found `{line}`")))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        v.parse().map_err(|_| Error::format(format!("checkpoint field `{key}` has bad value `{v}`")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format("checkpoint truncated (array data)"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn values<S: Real>(&mut self, n: usize) -> Result<Vec<S>> {
        let width = if S::NAME == "f32" { 4 } else { 8 };
        let raw = self.take(n * width)?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| {
                if width == 4 {
                    S::of(f32::from_le_bytes(c.try_into().unwrap()) as f64)
                } else {
                    S::of(f64::from_le_bytes(c.try_into().unwrap()))
                }
            })
            .collect())
    }
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

impl<S: Real> Checkpoint<S> {
    pub fn new(model: Model<S>, stage: u32, epoch: u32, seed: u64) -> Self {
        Checkpoint { model, stage, epoch, seed, meta: KvConfig::new() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let store = &self.model.store;
        let mut cfg = self.meta.clone();
        cfg.merge(&self.model.config.to_kv());
        let cfg_text = cfg.to_canonical();
        let frozen: Vec<&str> = store.frozen().collect();
        let moments: Vec<_> = store.optimizer_state().collect();
        let mut out = Vec::new();
        let header = format!(
            "{CHECKPOINT_MAGIC}\nversion={CHECKPOINT_VERSION}\ndtype={}\nstage={}\nepoch={}\nseed={}\nadam_step={}\nfrozen={}\nconfig_bytes={}\n",
            S::NAME,
            self.stage,
            self.epoch,
            self.seed,
            store.step_count(),
            frozen.join(","),
            cfg_text.len()
        );
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(cfg_text.as_bytes());
        out.extend_from_slice(format!("arrays={}\n", store.len() + 2 * moments.len()).as_bytes());
        for (name, t) in store.iter() {
            out.extend_from_slice(format!("param {name} {}\n", shape_text(t.shape())).as_bytes());
            put(&mut out, t.data());
        }
        for (name, m, v) in moments {
            out.extend_from_slice(format!("adam_m {name} {}\n", m.len()).as_bytes());
            put(&mut out, m);
            out.extend_from_slice(format!("adam_v {name} {}\n", v.len()).as_bytes());
            put(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.line()?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(format!("not a checkpoint (magic `{magic}`)")));
        }
        let version: u32 = r.parse("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "checkpoint format version {version}, this build reads version {CHECKPOINT_VERSION}"
            )));
        }
        let dtype = r.field("dtype")?;
        if dtype != S::NAME {
            return Err(Error::format(format!("checkpoint holds {dtype} values, expected {}", S::NAME)));
        }
        let stage = r.parse("stage")?;
        let epoch = r.parse("epoch")?;
        let seed = r.parse("seed")?;
        let adam_step: u64 = r.parse("adam_step")?;
        let frozen: Vec<String> = r
            .field("frozen")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let cfg_len: usize = r.parse("config_bytes")?;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?).map_err(|_| Error::format("config block is not UTF-8"))?;
        let cfg = KvConfig::parse(cfg_text).map_err(|e| Error::format(format!("config block: {e}")))?;
        let config = ModelConfig::from_kv(&cfg)?;
        let mut meta = KvConfig::new();
        for k in cfg.keys().filter(|k| !k.starts_with("model.")) {
            meta.set(k, cfg.raw(k).unwrap());
        }

        let template = Model::<S>::new(config.clone(), 0)?;
        let count: usize = r.parse("arrays")?;
        let mut store = ParamStore::new();
        let mut moments: Vec<(String, Vec<S>, Vec<S>)> = Vec::new();
        for _ in 0..count {
            let line = r.line()?;
            let parts: Vec<&str> = line.split(' ').collect();
            if parts.len() != 3 {
                return Err(Error::format(format!("bad array header `{line}`")));
            }
            let (kind, name) = (parts[0], parts[1]);
            let shape: Vec<usize> = parts[2]
                .split('x')
                .map(|d| d.parse().map_err(|_| Error::format(format!("bad shape in `{line}`"))))
                .collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let values = r.values::<S>(n)?;
            match kind {
                "param" => {
                    let expected = template
                        .store
                        .get(name)
                        .ok_or_else(|| Error::format(format!("parameter `{name}` does not belong to this model")))?;
                    if expected.shape() != shape.as_slice() {
                        return Err(Error::format(format!(
                            "parameter `{name}` has shape {shape:?}, model expects {:?}",
                            expected.shape()
                        )));
                    }
                    store.insert(name, Tensor::new(&shape, values)?)?;
                }
                "adam_m" => moments.push((name.to_string(), values, Vec::new())),
                "adam_v" => match moments.last_mut() {
                    Some(last) if last.0 == name && last.2.is_empty() => last.2 = values,
                    _ => return Err(Error::format(format!("adam_v for `{name}` without matching adam_m"))),
                },
                _ => return Err(Error::format(format!("unknown array kind `{kind}`"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after checkpoint arrays"));
        }
        if store.len() != template.store.len() {
            return Err(Error::format(format!(
                "checkpoint has {} parameters, model expects {}",
                store.len(),
                template.store.len()
            )));
        }
        for f in &frozen {
            store.freeze(f).map_err(|_| Error::format(format!("frozen name `{f}` is not a parameter")))?;
        }
        store.restore_optimizer_state(adam_step, moments)?;
        Ok(Checkpoint { model: Model { config, store }, stage, epoch, seed, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Loads and requires the stored model config to equal `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        if ck.model.config.variant != expected.variant {
            return Err(Error::config(format!(
                "checkpoint holds variant `{}`, expected `{}`",
                ck.model.config.variant, expected.variant
            )));
        }
        if &ck.model.config != expected {
            return Err(Error::config("checkpoint model config differs from the requested config"));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::pipeline::Variant;
    use crate::tensor::AdamConfig;

    fn tiny(variant: Variant) -> ModelConfig {
        let mut c = ModelConfig::for_variant(variant);
        c.views = 2;
        c.window = 2;
        c.encoder = EncoderConfig { resolution: 8, channels: vec![2], embedding: 4 };
        c.hidden = 3;
        c.head_hidden = 4;
        c.lifter.widths = vec![4, 4, 4];
        c.lifter.fc_widths = vec![4];
        c
    }

    #[test]
    fn round_trip_is_bit_identical_including_optimizer() {
        let mut m = Model::<f32>::new(tiny(Variant::Full), 7).unwrap();
        m.store.freeze_prefix("encoder").unwrap();
        for (name, t) in m.store.clone().iter() {
            if !m.store.is_frozen(name) {
                m.store.get_mut(name).unwrap().set_grad(vec![0.1; t.len()]).unwrap();
            }
        }
        m.store.adam_step(&AdamConfig::default()).unwrap();
        let ck = Checkpoint::new(m, 2, 9, 42);
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!((back.stage, back.epoch, back.seed), (2, 9, 42));
        assert!(back.model.store.is_frozen("encoder.conv0.weight"));
        for (name, t) in ck.model.store.iter() {
            assert_eq!(back.model.store.get(name).unwrap().data(), t.data());
        }
    }

    #[test]
    fn truncation_and_version_are_format_errors() {
        let ck = Checkpoint::new(Model::<f32>::new(tiny(Variant::Baseline3), 1).unwrap(), 1, 0, 1);
        let bytes = ck.to_bytes();
        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
        let text = String::from_utf8_lossy(&bytes).replacen("version=1", "version=7", 1);
        match Checkpoint::<f32>::from_bytes(text.as_bytes()) {
            Err(Error::Format(msg)) => assert!(msg.contains('7') && msg.contains('1')),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Checkpoint::<f64>::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_variant_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b1.ckpt");
        Checkpoint::new(Model::<f32>::new(tiny(Variant::Baseline1), 1).unwrap(), 2, 0, 1)
            .save(&path)
            .unwrap();
        assert!(matches!(
            Checkpoint::<f32>::load_expecting(&path, &tiny(Variant::Full)),
            Err(Error::Config(_))
        ));
        assert!(Checkpoint::<f32>::load_expecting(&path, &tiny(Variant::Baseline1)).is_ok());
    }
}
