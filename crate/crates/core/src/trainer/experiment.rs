//! Ablation grids: one two-stage run per configuration and seed, reported as
//! an aligned table plus one PCK curve file per run.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::metrics::EvalReport;
use super::{evaluate, surrogate_config, train_stage1, train_stage2, TrainingConfig};
use crate::error::{Error, Result};
use crate::graph::AdjacencyMode;
use crate::handgen::{Dataset, Protocol};
use crate::pipeline::Checkpoint;
use crate::pipeline::{ModelConfig, Variant};

pub const WINDOW_SIZES: [usize; 5] = [3, 5, 7, 9, 11];

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    WindowSizes(Vec<usize>),
    Adjacency(Vec<AdjacencyMode>),
    Baselines,
    Recurrent,
}

impl Grid {
    pub fn name(&self) -> &'static str {
        match self {
            Grid::WindowSizes(_) => "window-sizes",
            Grid::Adjacency(_) => "adjacency-modes",
            Grid::Baselines => "ablation-baselines",
            Grid::Recurrent => "recurrent-variants",
        }
    }

    pub fn window_sizes() -> Self {
        Grid::WindowSizes(WINDOW_SIZES.to_vec())
    }

    pub fn adjacency_modes() -> Self {
        Grid::Adjacency(vec![
            AdjacencyMode::Random(1),
            AdjacencyMode::Random(2),
            AdjacencyMode::Random(3),
            AdjacencyMode::HandSkeleton,
            AdjacencyMode::Learned,
        ])
    }

    /// Labeled model configs derived from `base`.
    pub fn configurations(&self, base: &ModelConfig) -> Result<Vec<(String, ModelConfig)>> {
        let with_variant = |v: Variant| {
            let mut c = base.clone();
            c.variant = v;
            if let Some(k) = v.required_lifter() {
                c.lifter.kind = k;
            }
            (v.name().to_string(), c)
        };
        let out = match self {
            Grid::WindowSizes(ts) => {
                if ts.is_empty() {
                    return Err(Error::config("window-size grid is empty"));
                }
                ts.iter()
                    .map(|&t| {
                        if !WINDOW_SIZES.contains(&t) {
                            return Err(Error::config(format!("window size {t} not in {WINDOW_SIZES:?}")));
                        }
                        Ok((format!("T={t}"), ModelConfig { window: t, ..base.clone() }))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Grid::Adjacency(modes) => {
                if modes.is_empty() {
                    return Err(Error::config("adjacency grid is empty"));
                }
                modes
                    .iter()
                    .map(|&m| {
                        let mut c = base.clone();
                        c.lifter.adjacency = m;
                        (m.to_string(), c)
                    })
                    .collect()
            }
            Grid::Baselines => [Variant::Baseline1, Variant::Baseline2, Variant::Baseline3, Variant::Full]
                .into_iter()
                .map(with_variant)
                .collect(),
            Grid::Recurrent => [
                Variant::Full,
                Variant::GruBoth,
                Variant::LstmVGruT,
                Variant::LstmTGruV,
                Variant::AutoEncLifter,
                Variant::GcnOnlyLifter,
            ]
            .into_iter()
            .map(with_variant)
            .collect(),
        };
        for (_, c) in &out {
            c.validate()?;
        }
        Ok(out)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window-sizes" => Ok(Grid::window_sizes()),
            "adjacency-modes" => Ok(Grid::adjacency_modes()),
            "ablation-baselines" => Ok(Grid::Baselines),
            "recurrent-variants" => Ok(Grid::Recurrent),
            _ => Err(Error::config(format!("unknown experiment grid `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub grid: Grid,
    pub model: ModelConfig,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub stage1: TrainingConfig,
    pub stage2: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub label: String,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub grid: String,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn header() -> Vec<String> {
        let mut h = vec!["config".to_string(), "seed".into()];
        h.extend(EvalReport::columns());
        h
    }

    /// Whitespace-aligned table, one row per configuration per seed.
    pub fn table(&self) -> String {
        let mut cells = vec![Self::header()];
        for r in &self.rows {
            let mut line = vec![r.label.clone(), r.seed.to_string()];
            line.extend(r.report.row().iter().map(|v| format!("{v:.3}")));
            cells.push(line);
        }
        let widths: Vec<usize> =
            (0..cells[0].len()).map(|i| cells.iter().map(|l| l[i].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for line in &cells {
            let padded: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn curve_file_name(&self, row: &ExperimentRow) -> String {
        let label: String =
            row.label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        format!("{}_{label}_seed{}.csv", self.grid, row.seed)
    }

    /// Writes `<grid>.txt` and one curve file per row into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.txt", self.grid)), self.table())?;
        for r in &self.rows {
            fs::write(dir.join(self.curve_file_name(r)), r.report.curve_csv())?;
        }
        Ok(())
    }
}

/// Trains and evaluates every configuration of the grid for every seed.
/// Stage 1 runs are shared between configurations that agree on the surrogate.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentReport> {
    if cfg.seeds.is_empty() {
        return Err(Error::config("experiment needs at least one seed"));
    }
    let configs = cfg.grid.configurations(&cfg.model)?;
    let (train, test) = data.split(cfg.protocol);
    if train.is_empty() || test.is_empty() {
        return Err(Error::config(format!(
            "protocol {} leaves an empty train or test side on this dataset",
            cfg.protocol.name()
        )));
    }
    let mut stage1_cache: HashMap<String, Checkpoint<f32>> = HashMap::new();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let s1 = TrainingConfig { seed, ..cfg.stage1.clone() };
        let s2 = TrainingConfig { seed, ..cfg.stage2.clone() };
        for (label, model) in &configs {
            let key = format!("{seed}\n{}", surrogate_config(model).to_kv().to_canonical());
            if !stage1_cache.contains_key(&key) {
                let (ck, _) = train_stage1(model, data, &train, &s1)?;
                stage1_cache.insert(key.clone(), ck);
            }
            let (ck, _) = train_stage2(model, stage1_cache.get(&key), data, &train, &s2)?;
            let report = evaluate(&ck.model, data, &test)?;
            rows.push(ExperimentRow { label: label.clone(), seed, report });
        }
    }
    Ok(ExperimentReport { grid: cfg.grid.name().to_string(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let base = ModelConfig::default();
        assert_eq!(Grid::window_sizes().configurations(&base).unwrap().len(), 5);
        assert_eq!(Grid::adjacency_modes().configurations(&base).unwrap().len(), 5);
        assert_eq!(Grid::Baselines.configurations(&base).unwrap().len(), 4);
        assert_eq!(Grid::Recurrent.configurations(&base).unwrap().len(), 6);
    }

    #[test]
    fn invalid_window_is_config_error() {
        let r = Grid::WindowSizes(vec![4]).configurations(&ModelConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(matches!("tables".parse::<Grid>(), Err(Error::Config(_))));
    }
}
