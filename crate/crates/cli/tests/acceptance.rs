//! End-to-end acceptance run: one line per criterion, non-zero exit if any
//! fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::fs;
use std::io::Write;
use std::panic;
use std::time::Instant;

use common::{code, handpose, path, stdout, write_config, TINY};
use handpose::gradcheck::tiny_model_config;
use handpose::graph::{normalize_adjacency, random_adjacency};
use handpose::hand::{bones, JOINTS};
use handpose::handgen::skeleton::Subject;
use handpose::handgen::{generate_clip, Dataset, GenConfig, Protocol};
use handpose::pipeline::{Checkpoint, Model, ModelConfig, Variant};
use handpose::tensor::rng::rng_for;
use handpose::tensor::{Tape, Tensor};
use handpose::trainer::metrics::{compute_epe, compute_pck_auc, pck_thresholds};
use handpose::trainer::{evaluate, train_stage1, train_stage2, TrainingConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn gradient_integrity() -> Outcome {
    let toy = tiny_model_config(Variant::Full);
    check(toy.views == 2 && toy.window == 3 && toy.encoder.resolution == 16, "toy clip is not 2x3 at 16x16")?;
    let start = Instant::now();
    let out = handpose(&["gradcheck"]);
    let secs = start.elapsed().as_secs_f64();
    let text = stdout(&out);
    check(code(&out) == 0, format!("gradcheck exit {}", code(&out)))?;
    let lines: Vec<&str> = text.lines().filter(|l| l.contains("max_rel_error=")).collect();
    check(lines.iter().all(|l| l.ends_with("PASS")), "a check is above tolerance")?;
    let f64_prims = lines.iter().filter(|l| l.starts_with("primitive/")).count();
    let f32_prims = lines.iter().filter(|l| l.starts_with("primitive-f32/")).count();
    check(f64_prims > 0 && f64_prims == f32_prims, "primitive listing incomplete")?;
    for name in [
        "module/lstm-cell",
        "module/gru-cell",
        "module/adjacency-normalization",
        "module/graph-conv",
        "module/lifter-unet",
        "model/full",
        "model-f32/full",
    ] {
        check(lines.iter().any(|l| l.starts_with(&format!("{name} "))), format!("{name} missing"))?;
    }
    for (prefix, tol) in [("primitive/", "1e-6"), ("primitive-f32/", "1e-4"), ("model-f32/", "1e-4"), ("model/", "1e-6")] {
        let ok = lines.iter().filter(|l| l.starts_with(prefix)).all(|l| l.contains(&format!("tolerance={tol}")));
        check(ok, format!("{prefix} checks not at {tol}"))?;
    }
    check(secs < 120.0, format!("{secs:.1} s"))?;
    Ok(format!("{} checks pass, {secs:.1} s", lines.len()))
}

fn errors_along_random_directions(pool: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_for(seed, "acceptance-pool");
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    for &e in pool {
        let g: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-200.0..200.0));
        let d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
        gt.extend(g);
        pred.extend((0..3).map(|k| g[k] + d[k] * e / n));
    }
    (pred, gt)
}

fn metric_oracles() -> Outcome {
    let mut rng = rng_for(77, "acceptance-metrics");
    for p in 0..1000u64 {
        let n = rng.gen_range(1..100);
        let pool: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..65.0)).collect();
        let (pred, gt) = errors_along_random_directions(&pool, p);
        let errs: Vec<f64> = pred
            .chunks(3)
            .zip(gt.chunks(3))
            .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt())
            .collect();
        let mut sorted = errs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        let mean = errs.iter().sum::<f64>() / n as f64;
        let pck: Vec<f64> = (0..=50).map(|s| errs.iter().filter(|&&e| e <= s as f64).count() as f64 / n as f64).collect();
        let auc = (0..50).map(|i| (pck[i] + pck[i + 1]) / 2.0).sum::<f64>() / 50.0;
        let (m, md) = compute_epe(&pred, &gt).map_err(|e| e.to_string())?;
        let (curve, a) = compute_pck_auc(&pred, &gt, &pck_thresholds()).map_err(|e| e.to_string())?;
        check((m - mean).abs() < 1e-9 && (md - median).abs() < 1e-9, format!("pool {p}: EPE"))?;
        check(curve.iter().zip(&pck).all(|((_, v), b)| (v - b).abs() < 1e-9), format!("pool {p}: PCK"))?;
        check((a - auc).abs() < 1e-9, format!("pool {p}: AUC"))?;
    }
    let (same, _) = errors_along_random_directions(&[0.0; 21], 1);
    check(compute_epe(&same, &same).unwrap() == (0.0, 0.0), "identity EPE")?;
    check(compute_pck_auc(&same, &same, &pck_thresholds()).unwrap().1 == 1.0, "identity AUC")?;
    let (p25, g25) = errors_along_random_directions(&[25.0; 21], 2);
    let exact: Vec<f64> = g25.iter().enumerate().map(|(i, g)| if i % 3 == 0 { g + 25.0 } else { *g }).collect();
    let (_, a25) = compute_pck_auc(&exact, &g25, &pck_thresholds()).unwrap();
    let step: Vec<f64> = (0..=50).map(|s| if s >= 25 { 1.0 } else { 0.0 }).collect();
    let oracle = (0..50).map(|i| (step[i] + step[i + 1]) / 2.0).sum::<f64>() / 50.0;
    check(a25 == oracle, format!("all-25 mm AUC {a25} vs {oracle}"))?;
    check(p25.len() == exact.len(), "pool size")?;
    Ok(format!("1000 pools agree to 1e-9; all-25 mm AUC = {oracle}"))
}

fn normalized(a: &Tensor<f64>) -> Vec<f64> {
    let mut t = Tape::new();
    let v = t.constant(a.clone()).unwrap();
    let out = normalize_adjacency(&mut t, v, false, 0.0).unwrap();
    t.value(out).to_vec()
}

fn jacobi_radius(m: &[f64], n: usize) -> f64 {
    let mut a = m.to_vec();
    for _ in 0..100 {
        for p in 0..n {
            for q in p + 1..n {
                if a[p * n + q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
                let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * x - s * y;
                    a[k * n + q] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * x - s * y;
                    a[q * n + k] = s * x + c * y;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max)
}

fn regular_graphs() -> Vec<(usize, usize, Tensor<f64>)> {
    let mut out = Vec::new();
    for n in 3..=8 {
        let mut a = Tensor::zeros(&[n, n]);
        for i in 0..n {
            a.set(&[i, (i + 1) % n], 1.0);
            a.set(&[(i + 1) % n, i], 1.0);
        }
        out.push((n, 2, a));
        let mut k = Tensor::full(&[n, n], 1.0);
        for i in 0..n {
            k.set(&[i, i], 0.0);
        }
        out.push((n, n - 1, k));
    }
    let mut cube = Tensor::zeros(&[8, 8]);
    for i in 0..8usize {
        for b in 0..3 {
            cube.set(&[i, i ^ (1 << b)], 1.0);
        }
    }
    out.push((8, 3, cube));
    out
}

fn adjacency_algebra() -> Outcome {
    for n in 1..=8 {
        check(normalized(&Tensor::zeros(&[n, n])) == Tensor::<f64>::identity(n).data(), format!("A=0, n={n}"))?;
    }
    let pair = Tensor::from_f64(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap();
    check(normalized(&pair).iter().all(|&v| (v - 0.5).abs() < 1e-15), "complete pair")?;
    let graphs = regular_graphs();
    for (n, d, a) in &graphs {
        let bar = normalized(a);
        for i in 0..*n {
            for j in 0..*n {
                let hat = a.data()[i * n + j] + if i == j { 1.0 } else { 0.0 };
                check((bar[i * n + j] - hat / (*d as f64 + 1.0)).abs() < 1e-14, format!("{d}-regular n={n}"))?;
            }
        }
    }
    let mut worst = 0.0f64;
    for trial in 0..100u64 {
        let n = 2 + (trial as usize % 12);
        let bar = normalized(&random_adjacency::<f64>(n, trial, "acceptance"));
        for i in 0..n {
            for j in 0..n {
                check((bar[i * n + j] - bar[j * n + i]).abs() < 1e-15, format!("asymmetric output, trial {trial}"))?;
            }
        }
        worst = worst.max(jacobi_radius(&bar, n));
    }
    check(worst <= 1.0 + 1e-6, format!("spectral radius {worst}"))?;
    Ok(format!("{} regular graphs exact; max spectral radius {worst:.9}", graphs.len()))
}

fn dataset_integrity() -> Outcome {
    let cfg = GenConfig::default();
    let start = Instant::now();
    let data = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let frames = data.clips.len() * data.frames_per_clip();
    check(frames == 720, format!("{frames} frames"))?;
    let (mut sim, mut bone, mut reproj, mut stored) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, (s, a, c)) in cfg.clip_ids().into_iter().enumerate() {
        let clip = generate_clip(&cfg, s, a, c).map_err(|e| e.to_string())?;
        let subject = Subject::new(s).unwrap();
        for t in 0..cfg.window {
            for (p, ch) in bones() {
                let w = &clip.world3d[t];
                let len = (0..3).map(|k| (w[ch][k] - w[p][k]).powi(2)).sum::<f64>().sqrt();
                bone = bone.max((len - subject.bone_length(ch)).abs());
            }
            for v in 0..cfg.views.len() {
                let e = &clip.extrinsics[v][t];
                let k = &clip.cameras[v].intrinsics;
                for j in 0..JOINTS {
                    let p = clip.cam3d[v][t][j];
                    // x = Rᵀ p + c
                    let x: Vec<f64> = (0..3).map(|i| e.center[i] + (0..3).map(|r| e.rotation[r][i] * p[r]).sum::<f64>()).collect();
                    sim = sim.max((0..3).map(|i| (x[i] - clip.world3d[t][j][i]).abs()).fold(0.0, f64::max));
                    let uv = [k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy];
                    let l = clip.pose2d[v][t][j];
                    reproj = reproj.max((uv[0] - l[0]).abs().max((uv[1] - l[1]).abs()));
                }
            }
        }
        let sc = &data.clips[i];
        for f in 0..sc.frames() {
            let k = &sc.intrinsics[f * 4..f * 4 + 4];
            for j in 0..JOINTS {
                let p = &sc.frame_cam3d(f)[j * 3..j * 3 + 3];
                let l = &sc.frame_pose2d(f)[j * 2..j * 2 + 2];
                let u = k[0] as f64 * p[0] as f64 / p[2] as f64 + k[2] as f64;
                let v = k[1] as f64 * p[1] as f64 / p[2] as f64 + k[3] as f64;
                stored = stored.max((u - l[0] as f64).abs().max((v - l[1] as f64).abs()));
            }
        }
    }
    check(reproj < 1e-4 && stored < 1e-4, format!("label error {reproj:e} px (stored {stored:e})"))?;
    check(sim < 1e-6, format!("view disagreement {sim:e} mm"))?;
    check(bone < 1e-6, format!("bone deviation {bone:e} mm"))?;
    let mut splits = 0;
    for p in [Protocol::CrossSubject, Protocol::CrossActivity, Protocol::HeldOutClip] {
        let (train, test) = data.split(p);
        check(train.iter().all(|i| !test.contains(i)), format!("{} sides overlap", p.name()))?;
        check(train.len() + test.len() == data.clips.len(), format!("{} drops clips", p.name()))?;
        splits += 1;
    }
    let again = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
    check(again.to_bytes() == data.to_bytes(), "regeneration differs")?;
    check(secs < 60.0, format!("generation took {secs:.1} s"))?;
    Ok(format!(
        "720 frames in {secs:.2} s; label {reproj:.1e}/{stored:.1e} px, views {sim:.1e} mm, bones {bone:.1e} mm, {splits} splits disjoint"
    ))
}

/// Per-pass minibatches for an 8-clip set: 4 frames in Stage 1, 1 clip in Stage 2.
fn overfit_schedules(seed: u64) -> (TrainingConfig, TrainingConfig) {
    (
        TrainingConfig { seed, batch: 4, ..TrainingConfig::stage1() },
        TrainingConfig { seed, batch: 1, ..TrainingConfig::stage2() },
    )
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let data = Dataset::generate(&GenConfig::default()).map_err(|e| e.to_string())?;
    let clips: Vec<usize> = (0..8).collect();
    let cfg = ModelConfig::default();
    check(cfg.views == 3 && cfg.window == 5 && cfg.encoder.resolution == 64, "model grid")?;
    let untrained = evaluate(&Model::<f32>::new(cfg.clone(), 1).unwrap(), &data, &clips).map_err(|e| e.to_string())?;
    let (s1, s2) = overfit_schedules(1);
    let (ck1, _) = train_stage1(&cfg, &data, &clips, &s1).map_err(|e| e.to_string())?;
    let (ck2, _) = train_stage2(&cfg, Some(&ck1), &data, &clips, &s2).map_err(|e| e.to_string())?;
    let trained = evaluate(&ck2.model, &data, &clips).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let frozen = ck1.model.store.iter().filter(|(n, _)| n.starts_with("encoder.")).all(|(n, t)| {
        let after = ck2.model.store.get(n).unwrap();
        t.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits())
    });
    let ratio = trained.epe_mean / untrained.epe_mean;
    let detail = format!(
        "EPE {:.2} mm -> {:.2} mm, ratio {ratio:.3} (limit 0.25), {secs:.0} s, encoder frozen {frozen}",
        untrained.epe_mean, trained.epe_mean
    );
    check(frozen, detail.clone())?;
    check(secs < 900.0, detail.clone())?;
    check(ratio <= 0.25, detail.clone())?;
    Ok(detail)
}

fn ablation_direction() -> Outcome {
    let data = Dataset::generate(&GenConfig { occlusion: 0.3, ..GenConfig::default() }).map_err(|e| e.to_string())?;
    let (train, test) = data.split(Protocol::HeldOutClip);
    let full = ModelConfig::for_variant(Variant::Full);
    let single = ModelConfig::for_variant(Variant::Baseline3);
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=5u64 {
        let s1 = TrainingConfig { seed, ..TrainingConfig::stage1() };
        let s2 = TrainingConfig { seed, ..TrainingConfig::stage2() };
        let (ck1, _) = train_stage1(&full, &data, &train, &s1).map_err(|e| e.to_string())?;
        let (f, _) = train_stage2(&full, Some(&ck1), &data, &train, &s2).map_err(|e| e.to_string())?;
        let (b, _) = train_stage2(&single, Some(&ck1), &data, &train, &s2).map_err(|e| e.to_string())?;
        let ef = evaluate(&f.model, &data, &test).map_err(|e| e.to_string())?.epe_mean;
        let eb = evaluate(&b.model, &data, &test).map_err(|e| e.to_string())?.epe_mean;
        if ef <= eb {
            wins += 1;
        }
        pairs.push(format!("{ef:.1}/{eb:.1}"));
    }
    let detail = format!("full <= baseline3 in {wins}/5 seeds (test EPE full/b3 mm: {})", pairs.join(", "));
    check(wins >= 4, detail.clone())?;
    Ok(detail)
}

fn harness_shape() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("data.window=3", "data.window=11").replace("stage1.epochs=2", "stage1.epochs=1").replace("stage2.epochs=2", "stage2.epochs=1");
    let cfg = write_config(dir.path(), "tiny.cfg", &text);
    check(code(&handpose(&["--config", &cfg, "generate", "--out", &path(dir.path(), "g")])) == 0, "generate")?;
    let data = path(dir.path(), "g/dataset.bin");
    let expected_cols = [
        "config", "seed", "EPE_mean", "EPE_median", "AUC", "Wrist", "MCP", "PIP", "DIP", "TIP", "Thumb", "Index", "Middle", "Ring", "Pinkie",
    ];
    let mut curves = 0;
    for (grid, labels) in [
        ("window-sizes", vec!["T=3", "T=5", "T=7", "T=9", "T=11"]),
        ("adjacency-modes", vec!["random-1", "random-2", "random-3", "hand-skeleton", "learned"]),
        ("ablation-baselines", vec!["baseline1-no-temporal", "baseline2-no-angular", "baseline3-single-frame", "full"]),
    ] {
        let out_dir = dir.path().join(grid);
        let run = handpose(&[
            "--config", &cfg, "ablate", "--grid", grid, "--data", &data, "--protocol", "heldout", "--out", &out_dir.display().to_string(),
        ]);
        check(code(&run) == 0, format!("{grid}: {}", String::from_utf8_lossy(&run.stderr)))?;
        let table = fs::read_to_string(out_dir.join(format!("{grid}.txt"))).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split_whitespace().collect()).collect();
        check(rows[0] == expected_cols, format!("{grid}: header {:?}", rows[0]))?;
        check(rows.len() == labels.len() + 1, format!("{grid}: {} rows", rows.len() - 1))?;
        for (row, want) in rows[1..].iter().zip(&labels) {
            check(row.len() == expected_cols.len() && row[0] == *want, format!("{grid}: row {row:?}, want {want}"))?;
        }
        for entry in fs::read_dir(&out_dir).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                let body = fs::read_to_string(&p).unwrap();
                let samples: Vec<(f64, f64)> = body
                    .lines()
                    .skip(1)
                    .map(|l| {
                        let (a, b) = l.split_once(',').unwrap();
                        (a.parse().unwrap(), b.parse().unwrap())
                    })
                    .collect();
                check(samples.len() == 51, format!("{}: {} samples", p.display(), samples.len()))?;
                check(samples.iter().enumerate().all(|(i, s)| s.0 == i as f64), "thresholds")?;
                check(samples.windows(2).all(|w| w[0].1 <= w[1].1), format!("{}: not monotone", p.display()))?;
                curves += 1;
            }
        }
    }
    check(curves == 14, format!("{curves} curve files"))?;
    Ok("window 5 rows, adjacency 5 rows, baselines 4 rows; 14 curve files of 51 monotone samples".into())
}

fn round_trips() -> Outcome {
    let cfg = tiny_model_config(Variant::Full);
    let model = Model::<f32>::new(cfg.clone(), 3).unwrap();
    let res = cfg.encoder.resolution;
    let mut rng = rng_for(3, "acceptance-frames");
    let n = cfg.views * cfg.window * 3 * res * res;
    let frames = Tensor::new(&[cfg.views * cfg.window, 3, res, res], (0..n).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ck_path = dir.path().join("m.ckpt");
    let before = model.predict(&frames).unwrap();
    Checkpoint::new(model, 2, 1, 3).save(&ck_path).map_err(|e| e.to_string())?;
    let after = Checkpoint::<f32>::load(&ck_path).map_err(|e| e.to_string())?.model.predict(&frames).unwrap();
    let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    check(bits(&before.0) == bits(&after.0) && bits(&before.1) == bits(&after.1), "checkpoint forward differs")?;

    let tiny = write_config(dir.path(), "tiny.cfg", TINY);
    let gen = |threads: &str, out: &str| code(&handpose(&["--threads", threads, "--config", &tiny, "generate", "--out", &path(dir.path(), out)]));
    check(gen("1", "g1") == 0 && gen("4", "g4") == 0, "generate")?;
    let (b1, b4) = (fs::read(dir.path().join("g1/dataset.bin")).unwrap(), fs::read(dir.path().join("g4/dataset.bin")).unwrap());
    check(b1 == b4, "generation differs between 1 and 4 threads")?;
    let data = Dataset::read(&dir.path().join("g1/dataset.bin")).map_err(|e| e.to_string())?;
    let regenerated = Dataset::generate(&data.config).map_err(|e| e.to_string())?;
    check(data == regenerated, "dataset read differs from the generated one")?;

    let data_path = path(dir.path(), "g1/dataset.bin");
    let train = handpose(&["--config", &tiny, "--set", "stage1.seed=5", "train", "--data", &data_path, "--out", &path(dir.path(), "a")]);
    check(code(&train) == 0, "train")?;
    let echo = path(dir.path(), "a/config.txt");
    check(code(&handpose(&["--config", &echo, "train", "--out", &path(dir.path(), "b")])) == 0, "train from echo")?;
    for f in ["stage1.ckpt", "stage2.ckpt", "train.log", "config.txt"] {
        check(fs::read(dir.path().join("a").join(f)).unwrap() == fs::read(dir.path().join("b").join(f)).unwrap(), format!("echo rerun: {f} differs"))?;
    }
    let ck = path(dir.path(), "a/stage2.ckpt");
    for threads in ["1", "4"] {
        let out = handpose(&["--threads", threads, "eval", "--data", &data_path, "--checkpoint", &ck, "--out", &path(dir.path(), &format!("e{threads}"))]);
        check(code(&out) == 0, "eval")?;
    }
    for f in ["report.txt", "pck.csv"] {
        check(fs::read(dir.path().join("e1").join(f)).unwrap() == fs::read(dir.path().join("e4").join(f)).unwrap(), format!("eval {f} differs across threads"))?;
    }
    Ok("checkpoint outputs bit-identical; dataset, echo and 1-vs-4-thread artifacts byte-identical".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient integrity", gradient_integrity),
        ("metric oracles", metric_oracles),
        ("adjacency algebra", adjacency_algebra),
        ("dataset integrity", dataset_integrity),
        ("overfit check", overfit),
        ("ablation direction", ablation_direction),
        ("harness shape", harness_shape),
        ("round trips", round_trips),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut stdout = std::io::stdout();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(d) => format!("criterion {n} {name}: PASS ({d}) [{secs:.1} s]\n"),
            Err(d) => {
                failed += 1;
                format!("criterion {n} {name}: FAIL ({d}) [{secs:.1} s]\n")
            }
        };
        let _ = stdout.write_all(line.as_bytes());
        let _ = stdout.flush();
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
