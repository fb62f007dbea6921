use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use handpose::error::{Error, Result};
use handpose::gradcheck::{check_all_modules, check_all_primitives, check_all_primitives_f32, CheckResult};
use handpose::handgen::{Dataset, DATASET_MAGIC};
use handpose::pipeline::{Checkpoint, CHECKPOINT_MAGIC};
use handpose::trainer::experiment::{run_experiment, ExperimentConfig};
use handpose::trainer::{
    evaluate, evaluate_ground_truth, format_log, train_stage1, train_stage2, EpochLog, EvalReport,
};

use crate::args::{AblateArgs, Cli, Command, EvalArgs, GradcheckArgs, InspectArgs, StageFlags, TrainArgs};
use crate::settings::{layered, Settings, Side};

pub const DATASET_FILE: &str = "dataset.bin";
pub const LOG_FILE: &str = "train.log";
pub const TIMING_FILE: &str = "train.timing";
pub const REPORT_FILE: &str = "report.txt";
pub const CURVE_FILE: &str = "pck.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.txt";

pub fn dispatch(cli: &Cli) -> Result<()> {
    let flags = match &cli.command {
        Command::Train(a) => train_flags(a, &cli.common.overrides, cli.common.config.as_deref())?,
        Command::Eval(a) => eval_flags(a),
        Command::Ablate(a) => ablate_flags(a),
        _ => Vec::new(),
    };
    let kv = layered(cli.common.config.as_deref(), &cli.common.overrides, &flags)?;
    let settings = Settings::from_kv(&kv)?;
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::Generate => generate(settings, need_out(out)?),
        Command::Train(_) => train(settings, need_out(out)?),
        Command::Eval(_) => eval(settings, need_out(out)?),
        Command::Ablate(_) => ablate(settings, need_out(out)?),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Inspect(a) => inspect(a),
    }
}

fn need_out(out: Option<&Path>) -> Result<&Path> {
    let dir = out.ok_or_else(|| Error::Config("this subcommand needs an output directory (--out)".into()))?;
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn path_flag(key: &str, p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| format!("{key}={}", p.display()))
}

fn str_flag(key: &str, v: &Option<String>) -> Option<String> {
    v.as_ref().map(|v| format!("{key}={v}"))
}

fn stage_flags(f: &StageFlags, stage: u32) -> Vec<String> {
    let s = format!("stage{stage}");
    let pairs = [
        ("alpha", f.alpha.map(|v| v.to_string())),
        ("batch", f.batch.map(|v| v.to_string())),
        ("lr", f.lr.map(|v| v.to_string())),
        ("weight_decay", f.weight_decay.map(|v| v.to_string())),
        ("decay_period", f.decay_period.map(|v| v.to_string())),
        ("decay_factor", f.decay_factor.map(|v| v.to_string())),
        ("epochs", f.epochs.map(|v| v.to_string())),
        ("seed", f.seed.map(|v| v.to_string())),
    ];
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| format!("{s}.{k}={v}"))).collect()
}

fn train_flags(a: &TrainArgs, overrides: &[String], config: Option<&Path>) -> Result<Vec<String>> {
    let mut flags: Vec<String> = [
        path_flag("run.data", &a.data),
        str_flag("run.stages", &a.stages),
        path_flag("run.stage1_checkpoint", &a.stage1_checkpoint),
        str_flag("run.protocol", &a.protocol),
        str_flag("model.variant", &a.variant),
    ]
    .into_iter()
    .flatten()
    .collect();
    // stage flags follow whichever stages this run trains
    let kv = layered(config, overrides, &flags)?;
    let stages = Settings::from_kv(&kv)?.run.stages;
    for &n in stages.numbers() {
        flags.extend(stage_flags(&a.stage, n));
    }
    Ok(flags)
}

fn eval_flags(a: &EvalArgs) -> Vec<String> {
    let mut flags: Vec<String> = [
        path_flag("run.data", &a.data),
        path_flag("run.checkpoint", &a.checkpoint),
        str_flag("run.protocol", &a.protocol),
        str_flag("run.side", &a.side),
    ]
    .into_iter()
    .flatten()
    .collect();
    if a.ground_truth {
        flags.push("run.ground_truth=true".into());
    }
    flags
}

fn ablate_flags(a: &AblateArgs) -> Vec<String> {
    [
        path_flag("run.data", &a.data),
        str_flag("run.grid", &a.grid),
        str_flag("run.seeds", &a.seeds),
        str_flag("run.protocol", &a.protocol),
    ]
    .into_iter()
    .flatten()
    .collect()
}

fn generate(settings: Settings, out: &Path) -> Result<()> {
    let data = Dataset::generate(&settings.data)?;
    let path = out.join(DATASET_FILE);
    data.write(&path)?;
    settings.echo(out)?;
    println!("wrote {} ({} clips, {} frames)", path.display(), data.clips.len(), settings.data.frame_count());
    Ok(())
}

/// Loads the run's dataset and records its generation config in the echo.
fn load_data(settings: &mut Settings) -> Result<Dataset> {
    let data = Dataset::read(settings.run.require_data()?)?;
    settings.data = data.config.clone();
    Ok(data)
}

fn selected_clips(settings: &Settings, data: &Dataset, side: Side) -> Vec<usize> {
    match settings.run.protocol {
        None => (0..data.clips.len()).collect(),
        Some(p) => {
            let (train, test) = data.split(p);
            match side {
                Side::Train => train,
                Side::Test => test,
                Side::All => (0..data.clips.len()).collect(),
            }
        }
    }
}

fn train(mut settings: Settings, out: &Path) -> Result<()> {
    let data = load_data(&mut settings)?;
    let clips = selected_clips(&settings, &data, Side::Train);
    let start = Instant::now();
    let mut log: Vec<EpochLog> = Vec::new();
    let stage1 = match settings.run.stages.numbers() {
        [1, ..] => {
            let (ck, l) = train_stage1(&settings.model, &data, &clips, &settings.stage1)?;
            ck.save(&out.join("stage1.ckpt"))?;
            log.extend(l);
            Some(ck)
        }
        _ => match &settings.run.stage1_checkpoint {
            Some(p) => Some(Checkpoint::<f32>::load(p)?),
            None => None,
        },
    };
    if settings.run.stages.numbers().contains(&2) {
        let (mut ck, l) = train_stage2(&settings.model, stage1.as_ref(), &data, &clips, &settings.stage2)?;
        if let Some(s1) = &stage1 {
            ck.meta.merge(&s1.meta);
        }
        ck.save(&out.join("stage2.ckpt"))?;
        log.extend(l);
    }
    fs::write(out.join(LOG_FILE), format_log(&log))?;
    fs::write(out.join(TIMING_FILE), format!("seconds={:.3}\n", start.elapsed().as_secs_f64()))?;
    settings.echo(out)?;
    if let Some(last) = log.last() {
        println!("{last}");
    }
    Ok(())
}

fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    fs::write(out.join(REPORT_FILE), report.to_text())?;
    fs::write(out.join(CURVE_FILE), report.curve_csv())?;
    print!("{}", report.to_text());
    Ok(())
}

fn eval(mut settings: Settings, out: &Path) -> Result<()> {
    let data = load_data(&mut settings)?;
    let clips = selected_clips(&settings, &data, settings.run.side);
    let report = if settings.run.ground_truth {
        evaluate_ground_truth(&data, &clips, settings.model.views, settings.model.window)?
    } else {
        let path = settings
            .run
            .checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("eval needs --checkpoint or --ground-truth".into()))?;
        let ck = Checkpoint::<f32>::load(path)?;
        settings.model = ck.model.config.clone();
        evaluate(&ck.model, &data, &clips)?
    };
    write_report(&report, out)?;
    settings.echo(out)
}

fn ablate(mut settings: Settings, out: &Path) -> Result<()> {
    let data = load_data(&mut settings)?;
    let protocol = settings
        .run
        .protocol
        .ok_or_else(|| Error::Config("ablate needs a split protocol (--protocol)".into()))?;
    let cfg = ExperimentConfig {
        grid: settings.run.grid.clone(),
        model: settings.model.clone(),
        protocol,
        seeds: settings.run.seeds.clone(),
        stage1: settings.stage1.clone(),
        stage2: settings.stage2.clone(),
    };
    let report = run_experiment(&cfg, &data)?;
    report.write(out)?;
    settings.echo(out)?;
    print!("{}", report.table());
    Ok(())
}

fn listing(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        s.push_str(&format!(
            "{:<width$}  checked={:<5} max_rel_error={:.3e}  tolerance={:.0e}  {}\n",
            r.name,
            r.checked,
            r.max_rel_error,
            r.tolerance,
            if r.passed() { "PASS" } else { "FAIL" }
        ));
    }
    s
}

fn gradcheck(a: &GradcheckArgs, out: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let primitives = check_all_primitives(a.trials, a.seed)?;
    let primitives32 = check_all_primitives_f32(a.trials, a.seed)?;
    let modules = check_all_modules(a.seed)?;
    let mut text = listing(&primitives);
    text.push_str(&listing(&primitives32));
    text.push_str(&listing(&modules));
    let all: Vec<&CheckResult> = primitives.iter().chain(&primitives32).chain(&modules).collect();
    let failed = all.iter().filter(|r| !r.passed()).count();
    text.push_str(&format!(
        "{} checks, {failed} failed, {:.1} s\n",
        all.len(),
        start.elapsed().as_secs_f64()
    ));
    print!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(GRADCHECK_FILE), &text)?;
    }
    if failed > 0 {
        return Err(Error::Numeric { op: "gradcheck", detail: format!("{failed} checks above tolerance") });
    }
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<()> {
    let bytes = fs::read(&a.path)?;
    let text = if bytes.starts_with(CHECKPOINT_MAGIC.as_bytes()) {
        let raw = String::from_utf8_lossy(&bytes);
        let header = raw.split("arrays=").next().unwrap_or("").to_string();
        let params = if header.contains("dtype=f64") {
            params_text(&Checkpoint::<f64>::from_bytes(&bytes)?)
        } else {
            params_text(&Checkpoint::<f32>::from_bytes(&bytes)?)
        };
        header + &params
    } else if bytes.starts_with(DATASET_MAGIC.as_bytes()) {
        Dataset::from_bytes(&bytes)?.manifest()
    } else {
        return Err(Error::Format(format!("{} is neither a dataset nor a checkpoint", a.path.display())));
    };
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().write_all(text.as_bytes());
    Ok(())
}

fn params_text<S: handpose::tensor::Real>(ck: &Checkpoint<S>) -> String {
    let store = &ck.model.store;
    let mut s = format!("parameters={} values={}\n", store.len(), store.numel());
    for (name, t) in store.iter() {
        let frozen = if store.is_frozen(name) { " frozen" } else { "" };
        s.push_str(&format!("  {name} {:?}{frozen}\n", t.shape()));
    }
    s
}
