//! Effective configuration: defaults, then the config file, then `--set`
//! overrides, then subcommand flags.

use std::fs;
use std::path::{Path, PathBuf};

use handpose::config::{join_list, KvConfig};
use handpose::error::{Error, Result};
use handpose::handgen::{GenConfig, Protocol};
use handpose::pipeline::ModelConfig;
use handpose::trainer::experiment::Grid;
use handpose::trainer::TrainingConfig;

pub const ECHO_FILE: &str = "config.txt";

const SECTIONS: &[&str] = &["data", "model", "stage1", "stage2", "run"];
const RUN_KEYS: &[&str] =
    &["data", "checkpoint", "stage1_checkpoint", "protocol", "side", "stages", "grid", "seeds", "ground_truth"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Train,
    Test,
    All,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::Train => "train",
            Side::Test => "test",
            Side::All => "all",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Side::Train),
            "test" => Ok(Side::Test),
            "all" => Ok(Side::All),
            _ => Err(Error::Config(format!("run.side must be train, test or all, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stages {
    Both,
    One,
    Two,
}

impl Stages {
    fn name(self) -> &'static str {
        match self {
            Stages::Both => "both",
            Stages::One => "1",
            Stages::Two => "2",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Stages::Both),
            "1" => Ok(Stages::One),
            "2" => Ok(Stages::Two),
            _ => Err(Error::Config(format!("run.stages must be both, 1 or 2, got `{s}`"))),
        }
    }

    pub fn numbers(self) -> &'static [u32] {
        match self {
            Stages::Both => &[1, 2],
            Stages::One => &[1],
            Stages::Two => &[2],
        }
    }
}

/// Workflow settings of one invocation (`run.*`).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub stage1_checkpoint: Option<PathBuf>,
    /// `None` selects every clip.
    pub protocol: Option<Protocol>,
    pub side: Side,
    pub stages: Stages,
    pub grid: Grid,
    pub grid_name: String,
    pub seeds: Vec<u64>,
    pub ground_truth: bool,
}

impl RunConfig {
    fn from_kv(kv: &KvConfig) -> Result<Self> {
        let s = kv.section("run");
        s.check_keys(RUN_KEYS)?;
        let protocol = match s.raw("protocol").unwrap_or("all") {
            "all" => None,
            p => Some(p.parse()?),
        };
        let grid_name = s.raw("grid").unwrap_or("ablation-baselines").to_string();
        let seeds = s.get_list("seeds")?.unwrap_or_else(|| vec![1]);
        if seeds.is_empty() {
            return Err(Error::Config("run.seeds is empty".into()));
        }
        Ok(RunConfig {
            data: s.raw("data").map(PathBuf::from),
            checkpoint: s.raw("checkpoint").map(PathBuf::from),
            stage1_checkpoint: s.raw("stage1_checkpoint").map(PathBuf::from),
            protocol,
            side: Side::parse(s.raw("side").unwrap_or("test"))?,
            stages: Stages::parse(s.raw("stages").unwrap_or("both"))?,
            grid: grid_name.parse()?,
            grid_name,
            seeds,
            ground_truth: s.get_or("ground_truth", false)?,
        })
    }

    fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        for (k, v) in [("data", path(&self.data)), ("checkpoint", path(&self.checkpoint))] {
            if let Some(v) = v {
                kv.set(&format!("run.{k}"), v);
            }
        }
        if let Some(p) = path(&self.stage1_checkpoint) {
            kv.set("run.stage1_checkpoint", p);
        }
        kv.set("run.protocol", self.protocol.map_or("all", Protocol::name));
        kv.set("run.side", self.side.name());
        kv.set("run.stages", self.stages.name());
        kv.set("run.grid", &self.grid_name);
        kv.set("run.seeds", join_list(&self.seeds));
        kv.set("run.ground_truth", self.ground_truth);
        kv
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| Error::Config("no dataset given (--data or run.data)".into()))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub data: GenConfig,
    pub model: ModelConfig,
    pub stage1: TrainingConfig,
    pub stage2: TrainingConfig,
    pub run: RunConfig,
}

impl Settings {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        for k in kv.keys() {
            let section = k.split('.').next().unwrap_or("");
            if !SECTIONS.contains(&section) || !k.contains('.') {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        Ok(Settings {
            data: GenConfig::from_kv(kv)?,
            model: ModelConfig::from_kv(kv)?,
            stage1: TrainingConfig::from_kv(kv, 1)?,
            stage2: TrainingConfig::from_kv(kv, 2)?,
            run: RunConfig::from_kv(kv)?,
        })
    }

    /// Every setting, defaults included, as canonical text.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = self.data.to_kv();
        kv.merge(&self.model.to_kv());
        kv.merge(&self.stage1.to_kv());
        kv.merge(&self.stage2.to_kv());
        kv.merge(&self.run.to_kv());
        kv
    }

    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(ECHO_FILE), self.to_kv().to_canonical())?;
        Ok(())
    }
}

/// Config file pairs, then `--set` overrides, then `flags` (already `key=value`).
pub fn layered(config: Option<&Path>, overrides: &[String], flags: &[String]) -> Result<KvConfig> {
    let mut kv = match config {
        Some(p) => KvConfig::parse(&fs::read_to_string(p)?)?,
        None => KvConfig::new(),
    };
    for pair in overrides.iter().chain(flags) {
        kv.apply_override(pair)?;
    }
    Ok(kv)
}
