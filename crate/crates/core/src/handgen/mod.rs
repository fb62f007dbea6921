//! Procedural multi-view hand video: kinematic hand, camera ring, projection,
//! rasterized frames, and the dataset container with its split manifest.

pub mod camera;
pub mod render;
pub mod skeleton;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::config::{join_list, KvConfig};
use crate::error::{Error, Result};
use crate::hand::{self, FINGERS, JOINTS};
use crate::tensor::rng::{derive_seed, rng_for};
use camera::{Camera, Extrinsics, Intrinsics};
use render::{Occluder, Rgb, Scene};
use skeleton::{Subject, Vec3};

pub const DATASET_MAGIC: &str = "HANDGEN-DATASET";
pub const DATASET_VERSION: u32 = 1;

pub const CROSS_SUBJECT_TEST: [usize; 3] = [1, 2, 10];
pub const CROSS_ACTIVITY_TEST: [usize; 2] = [8, 19];

/// Per-finger bone colors; the palm bones use the subject's skin tone.
const FINGER_TINTS: [Rgb; FINGERS] = [
    [1.0, 0.35, 0.3],
    [0.35, 1.0, 0.4],
    [0.35, 0.5, 1.0],
    [1.0, 0.95, 0.3],
    [0.95, 0.4, 1.0],
];

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub subjects: Vec<usize>,
    pub activities: Vec<usize>,
    pub clips_per_pair: usize,
    /// Camera ids (1–12), in angular-sequence order.
    pub views: Vec<usize>,
    pub window: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Probability that a frame of a view receives an occluder patch.
    pub occlusion: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            subjects: vec![1, 3, 4],
            activities: vec![1, 2, 8, 9],
            clips_per_pair: 4,
            views: vec![7, 8, 9],
            window: 5,
            resolution: 64,
            seed: 1,
            occlusion: 0.0,
        }
    }
}

const DATA_KEYS: &[&str] = &["subjects", "activities", "clips", "views", "window", "resolution", "seed", "occlusion"];

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects.is_empty() || self.activities.is_empty() || self.views.is_empty() {
            return Err(Error::config("subjects, activities and views must be non-empty"));
        }
        for &s in &self.subjects {
            Subject::new(s)?;
        }
        for &a in &self.activities {
            skeleton::Activity::new(a)?;
        }
        for &v in &self.views {
            Camera::new(v, 1)?;
        }
        if self.clips_per_pair == 0 || self.window == 0 || self.resolution < 8 {
            return Err(Error::config("clips, window must be positive and resolution at least 8"));
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return Err(Error::config(format!("occlusion probability {} outside [0, 1]", self.occlusion)));
        }
        Ok(())
    }

    pub fn clip_count(&self) -> usize {
        self.subjects.len() * self.activities.len() * self.clips_per_pair
    }

    pub fn frame_count(&self) -> usize {
        self.clip_count() * self.views.len() * self.window
    }

    /// `(subject, activity, clip)` triples in file order.
    pub fn clip_ids(&self) -> Vec<(usize, usize, usize)> {
        let mut ids = Vec::with_capacity(self.clip_count());
        for &s in &self.subjects {
            for &a in &self.activities {
                for c in 0..self.clips_per_pair {
                    ids.push((s, a, c));
                }
            }
        }
        ids
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("data.subjects", join_list(&self.subjects));
        kv.set("data.activities", join_list(&self.activities));
        kv.set("data.clips", self.clips_per_pair);
        kv.set("data.views", join_list(&self.views));
        kv.set("data.window", self.window);
        kv.set("data.resolution", self.resolution);
        kv.set("data.seed", self.seed);
        kv.set("data.occlusion", self.occlusion);
        kv
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let s = kv.section("data");
        s.check_keys(DATA_KEYS)?;
        let d = GenConfig::default();
        let c = GenConfig {
            subjects: s.get_list("subjects")?.unwrap_or(d.subjects),
            activities: s.get_list("activities")?.unwrap_or(d.activities),
            clips_per_pair: s.get_or("clips", d.clips_per_pair)?,
            views: s.get_list("views")?.unwrap_or(d.views),
            window: s.get_or("window", d.window)?,
            resolution: s.get_or("resolution", d.resolution)?,
            seed: s.get_or("seed", d.seed)?,
            occlusion: s.get_or("occlusion", d.occlusion)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn record_floats(&self) -> usize {
        let vt = self.views.len() * self.window;
        let r = self.resolution;
        vt * (r * r * 3 + JOINTS * 2 + JOINTS * 3 * 2 + 4 + 12) + self.window + 4
    }
}

/// One generated clip with full-precision labels.
#[derive(Debug, Clone)]
pub struct ClipData {
    pub subject: usize,
    pub activity: usize,
    pub clip: usize,
    pub cameras: Vec<Camera>,
    /// `images[v][t]`, `H×W×3` in `[0,1]`.
    pub images: Vec<Vec<Vec<f32>>>,
    pub pose2d: Vec<Vec<[[f64; 2]; JOINTS]>>,
    pub cam3d: Vec<Vec<[Vec3; JOINTS]>>,
    /// World joints per frame (shared by all views).
    pub world3d: Vec<[Vec3; JOINTS]>,
    pub extrinsics: Vec<Vec<Extrinsics>>,
    pub lighting: Vec<f64>,
    /// Joint projections falling outside the image, over all frames.
    pub truncated: usize,
}

fn lighting_trajectory(rng: &mut impl Rng, window: usize) -> Vec<f64> {
    let start: f64 = rng.gen_range(0.3..0.8);
    let end = (start + rng.gen_range(0.1..0.4)).min(1.0);
    (0..window)
        .map(|t| {
            let f = if window > 1 { t as f64 / (window - 1) as f64 } else { 0.0 };
            (start + (end - start) * f).clamp(0.2, 1.0)
        })
        .collect()
}

fn scene_colors(subject: &Subject) -> (Vec<Rgb>, Vec<Rgb>) {
    let tone = subject.tone as f32;
    let skin: Rgb = [0.95 * tone, 0.78 * tone, 0.66 * tone];
    let bones = hand::bones()
        .into_iter()
        .map(|(p, c)| {
            if p == 0 {
                skin
            } else {
                let t = FINGER_TINTS[hand::finger_of(c).unwrap()];
                [t[0] * (0.6 + 0.4 * tone), t[1] * (0.6 + 0.4 * tone), t[2] * (0.6 + 0.4 * tone)]
            }
        })
        .collect();
    let joints = (0..JOINTS)
        .map(|j| match hand::finger_of(j) {
            None => [1.0, 1.0, 1.0],
            Some(f) => {
                let t = FINGER_TINTS[f];
                [(t[0] + 0.3).min(1.0), (t[1] + 0.3).min(1.0), (t[2] + 0.3).min(1.0)]
            }
        })
        .collect();
    (bones, joints)
}

/// Generates one clip: poses, all views, labels and frames.
pub fn generate_clip(cfg: &GenConfig, subject_id: usize, activity: usize, clip: usize) -> Result<ClipData> {
    let subject = Subject::new(subject_id)?;
    let clip_seed = derive_seed(cfg.seed, &format!("clip-{subject_id}-{activity}-{clip}"));
    let mut rng = rng_for(clip_seed, "appearance");
    let world3d = (0..cfg.window)
        .map(|t| skeleton::sample_pose(cfg.seed, subject_id, activity, clip, t))
        .collect::<Result<Vec<_>>>()?;
    let lighting = lighting_trajectory(&mut rng, cfg.window);
    let (bone_colors, joint_colors) = scene_colors(&subject);
    let res = cfg.resolution;
    let mut out = ClipData {
        subject: subject_id,
        activity,
        clip,
        cameras: Vec::new(),
        images: Vec::new(),
        pose2d: Vec::new(),
        cam3d: Vec::new(),
        world3d: world3d.clone(),
        extrinsics: Vec::new(),
        lighting: lighting.clone(),
        truncated: 0,
    };
    for (vi, &id) in cfg.views.iter().enumerate() {
        let mut cam = Camera::new(id, res)?;
        let (extr, projected) = loop {
            let extr: Vec<Extrinsics> = world3d.iter().map(|w| cam.extrinsics(w[0])).collect();
            let attempt: Result<Vec<_>> = world3d
                .iter()
                .zip(&extr)
                .map(|(w, e)| camera::project(w, e, &cam.intrinsics))
                .collect();
            match attempt {
                Ok(p) => break (extr, p),
                Err(Error::Visibility(_)) if cam.radius < 4000.0 => cam = cam.with_radius(cam.radius * 1.25),
                Err(e) => return Err(e),
            }
        };
        let bg = render::background(res, derive_seed(clip_seed, &format!("view-{vi}")));
        let mut images = Vec::with_capacity(cfg.window);
        let mut p2 = Vec::with_capacity(cfg.window);
        let mut p3 = Vec::with_capacity(cfg.window);
        for (t, (cam_pts, px)) in projected.into_iter().enumerate() {
            out.truncated += px
                .iter()
                .filter(|p| p[0] < 0.0 || p[1] < 0.0 || p[0] >= res as f64 || p[1] >= res as f64)
                .count();
            let scene = Scene {
                joints: px.clone(),
                depths: cam_pts.iter().map(|p| p[2]).collect(),
                bones: hand::bones(),
                bone_colors: bone_colors.clone(),
                joint_colors: joint_colors.clone(),
                bone_radius: res as f64 / 45.0,
                joint_radius: res as f64 / 32.0,
            };
            let mut occluders = Vec::new();
            if rng.gen_bool(cfg.occlusion) {
                let j = rng.gen_range(1..JOINTS);
                let radius = res as f64 / 8.0 * rng.gen_range(0.7..1.3);
                occluders.push(Occluder { center: px[j], radius });
            }
            images.push(render::render(&scene, &bg, &occluders, lighting[t] as f32, res));
            p2.push(<[[f64; 2]; JOINTS]>::try_from(px).unwrap());
            p3.push(<[Vec3; JOINTS]>::try_from(cam_pts).unwrap());
        }
        out.cameras.push(cam);
        out.images.push(images);
        out.pose2d.push(p2);
        out.cam3d.push(p3);
        out.extrinsics.push(extr);
    }
    Ok(out)
}

/// Largest disagreement of world joints recovered from each view (mm),
/// largest bone-length deviation from the subject table (mm), and largest
/// reprojection error of the 2D labels (px), all in full precision.
pub fn audit_clip(clip: &ClipData) -> Result<(f64, f64, f64)> {
    let subject = Subject::new(clip.subject)?;
    let (mut sim, mut bone, mut reproj) = (0.0f64, 0.0f64, 0.0f64);
    for (t, world) in clip.world3d.iter().enumerate() {
        for (p, c) in hand::bones() {
            let l = skeleton::norm(skeleton::sub(world[c], world[p]));
            bone = bone.max((l - subject.bone_length(c)).abs());
        }
        for v in 0..clip.cameras.len() {
            let e = &clip.extrinsics[v][t];
            let k = &clip.cameras[v].intrinsics;
            for j in 0..JOINTS {
                let back = e.to_world(clip.cam3d[v][t][j]);
                sim = sim.max(skeleton::norm(skeleton::sub(back, world[j])));
                let px = k.project(clip.cam3d[v][t][j]);
                let lab = clip.pose2d[v][t][j];
                reproj = reproj.max((px[0] - lab[0]).abs().max((px[1] - lab[1]).abs()));
            }
        }
    }
    Ok((sim, bone, reproj))
}

/// A clip as stored on disk: flat 32-bit arrays, frames in `(view, time)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredClip {
    pub subject: usize,
    pub activity: usize,
    pub clip: usize,
    pub truncated: usize,
    pub images: Vec<f32>,
    pub pose2d: Vec<f32>,
    pub cam3d: Vec<f32>,
    pub world3d: Vec<f32>,
    pub intrinsics: Vec<f32>,
    pub extrinsics: Vec<f32>,
    pub lighting: Vec<f32>,
}

impl StoredClip {
    pub fn from_clip(c: &ClipData) -> Self {
        let mut s = StoredClip {
            subject: c.subject,
            activity: c.activity,
            clip: c.clip,
            truncated: c.truncated,
            images: Vec::new(),
            pose2d: Vec::new(),
            cam3d: Vec::new(),
            world3d: Vec::new(),
            intrinsics: Vec::new(),
            extrinsics: Vec::new(),
            lighting: c.lighting.iter().map(|&l| l as f32).collect(),
        };
        for v in 0..c.cameras.len() {
            for t in 0..c.world3d.len() {
                s.images.extend_from_slice(&c.images[v][t]);
                s.pose2d.extend(c.pose2d[v][t].iter().flatten().map(|&x| x as f32));
                s.cam3d.extend(c.cam3d[v][t].iter().flatten().map(|&x| x as f32));
                s.world3d.extend(c.world3d[t].iter().flatten().map(|&x| x as f32));
                s.intrinsics.extend(c.cameras[v].intrinsics.to_array().iter().map(|&x| x as f32));
                s.extrinsics.extend(c.extrinsics[v][t].to_array().iter().map(|&x| x as f32));
            }
        }
        s
    }

    pub fn frames(&self) -> usize {
        self.pose2d.len() / (JOINTS * 2)
    }

    pub fn image(&self, frame: usize) -> &[f32] {
        let n = self.images.len() / self.frames();
        &self.images[frame * n..(frame + 1) * n]
    }

    pub fn frame_pose2d(&self, frame: usize) -> &[f32] {
        &self.pose2d[frame * JOINTS * 2..(frame + 1) * JOINTS * 2]
    }

    pub fn frame_cam3d(&self, frame: usize) -> &[f32] {
        &self.cam3d[frame * JOINTS * 3..(frame + 1) * JOINTS * 3]
    }

    /// Largest pixel error of the stored 2D labels against the stored
    /// camera-frame joints projected through the stored intrinsics.
    pub fn label_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for f in 0..self.frames() {
            let k = &self.intrinsics[f * 4..f * 4 + 4];
            let k = Intrinsics { fx: k[0] as f64, fy: k[1] as f64, cx: k[2] as f64, cy: k[3] as f64 };
            let p3 = self.frame_cam3d(f);
            let p2 = self.frame_pose2d(f);
            for j in 0..JOINTS {
                let px = k.project([p3[j * 3] as f64, p3[j * 3 + 1] as f64, p3[j * 3 + 2] as f64]);
                worst = worst.max((px[0] - p2[j * 2] as f64).abs()).max((px[1] - p2[j * 2 + 1] as f64).abs());
            }
        }
        worst
    }

    fn write(&self, out: &mut Vec<u8>) {
        let meta = [self.subject as f32, self.activity as f32, self.clip as f32, self.truncated as f32];
        for arr in [
            &self.images,
            &self.pose2d,
            &self.cam3d,
            &self.world3d,
            &self.intrinsics,
            &self.extrinsics,
            &self.lighting,
            &meta.to_vec(),
        ] {
            for v in arr.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    fn read(cfg: &GenConfig, bytes: &[u8]) -> Result<Self> {
        let vt = cfg.views.len() * cfg.window;
        let r = cfg.resolution;
        let sizes = [vt * r * r * 3, vt * JOINTS * 2, vt * JOINTS * 3, vt * JOINTS * 3, vt * 4, vt * 12, cfg.window, 4];
        let total: usize = sizes.iter().sum();
        if bytes.len() != total * 4 {
            return Err(Error::format(format!("clip record of {} bytes, expected {}", bytes.len(), total * 4)));
        }
        let floats: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let mut parts = Vec::new();
        let mut at = 0;
        for s in sizes {
            parts.push(floats[at..at + s].to_vec());
            at += s;
        }
        let meta = parts.pop().unwrap();
        let lighting = parts.pop().unwrap();
        let extrinsics = parts.pop().unwrap();
        let intrinsics = parts.pop().unwrap();
        let world3d = parts.pop().unwrap();
        let cam3d = parts.pop().unwrap();
        let pose2d = parts.pop().unwrap();
        let images = parts.pop().unwrap();
        Ok(StoredClip {
            subject: meta[0] as usize,
            activity: meta[1] as usize,
            clip: meta[2] as usize,
            truncated: meta[3] as usize,
            images,
            pose2d,
            cam3d,
            world3d,
            intrinsics,
            extrinsics,
            lighting,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    CrossSubject,
    CrossActivity,
    /// The last clip of every (subject, activity) pair is held out.
    HeldOutClip,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::CrossSubject => "cross_subject",
            Protocol::CrossActivity => "cross_activity",
            Protocol::HeldOutClip => "heldout",
        }
    }

    pub fn is_test(self, cfg: &GenConfig, subject: usize, activity: usize, clip: usize) -> bool {
        match self {
            Protocol::CrossSubject => CROSS_SUBJECT_TEST.contains(&subject),
            Protocol::CrossActivity => CROSS_ACTIVITY_TEST.contains(&activity),
            Protocol::HeldOutClip => cfg.clips_per_pair > 1 && clip + 1 == cfg.clips_per_pair,
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Protocol::CrossSubject, Protocol::CrossActivity, Protocol::HeldOutClip]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown split protocol `{s}`")))
    }
}

/// A dataset loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenConfig,
    pub clips: Vec<StoredClip>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn header_line(cfg: &GenConfig) -> String {
    let mut kv = cfg.to_kv();
    kv.set("version", DATASET_VERSION);
    kv.set("clip_count", cfg.clip_count());
    kv.set("frames", cfg.frame_count());
    let pairs: Vec<String> = kv.to_canonical().lines().map(str::to_string).collect();
    format!("{DATASET_MAGIC} {}\n", pairs.join(" "))
}

impl Dataset {
    /// Generates every clip (in parallel, collected in file order) and
    /// verifies labels before returning.
    pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
        cfg.validate()?;
        let clips = cfg
            .clip_ids()
            .into_par_iter()
            .map(|(s, a, c)| {
                let clip = generate_clip(cfg, s, a, c)?;
                let (sim, bone, reproj) = audit_clip(&clip)?;
                if sim >= 1e-6 || bone >= 1e-6 || reproj >= 1e-4 {
                    return Err(Error::Consistency(format!(
                        "clip ({s},{a},{c}): view disagreement {sim:e} mm, bone deviation {bone:e} mm, reprojection {reproj:e} px"
                    )));
                }
                let stored = StoredClip::from_clip(&clip);
                let err = stored.label_error();
                if err >= 1e-4 {
                    return Err(Error::Consistency(format!(
                        "clip ({s},{a},{c}): stored 2D labels off by {err:e} px from stored 3D"
                    )));
                }
                Ok(stored)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { config: cfg.clone(), clips })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = header_line(&self.config).into_bytes();
        for c in &self.clips {
            c.write(&mut out);
        }
        out
    }

    pub fn manifest(&self) -> String {
        let cfg = &self.config;
        let header = header_line(cfg).len();
        let record = cfg.record_floats() * 4;
        let mut kv = cfg.to_kv();
        kv.set("version", DATASET_VERSION);
        kv.set("clip_count", cfg.clip_count());
        kv.set("frames", cfg.frame_count());
        kv.set("record_bytes", record);
        let mut out = kv.to_canonical();
        for (i, c) in self.clips.iter().enumerate() {
            let split = |p: Protocol| if p.is_test(cfg, c.subject, c.activity, c.clip) { "test" } else { "train" };
            out.push_str(&format!(
                "clip index={i} offset={} subject={} activity={} clip={} cross_subject={} cross_activity={} heldout={}\n",
                header + i * record,
                c.subject,
                c.activity,
                c.clip,
                split(Protocol::CrossSubject),
                split(Protocol::CrossActivity),
                split(Protocol::HeldOutClip)
            ));
        }
        out
    }

    /// Writes the container and its sibling manifest.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::File::create(path)?.write_all(&self.to_bytes())?;
        fs::write(manifest_path(path), self.manifest())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("dataset header line missing"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format("dataset header is not UTF-8"))?;
        let rest = header
            .strip_prefix(DATASET_MAGIC)
            .ok_or_else(|| Error::format("not a dataset container"))?;
        let kv = KvConfig::parse(&rest.split_whitespace().collect::<Vec<_>>().join("\n"))
            .map_err(|e| Error::format(format!("dataset header: {e}")))?;
        let version: u32 = kv.require("version").map_err(|e| Error::format(e.to_string()))?;
        if version != DATASET_VERSION {
            return Err(Error::format(format!(
                "dataset format version {version}, this build reads version {DATASET_VERSION}"
            )));
        }
        let mut data = KvConfig::new();
        for k in kv.keys().filter(|k| k.starts_with("data.")) {
            data.set(k, kv.raw(k).unwrap());
        }
        let cfg = GenConfig::from_kv(&data)?;
        let record = cfg.record_floats() * 4;
        let body = &bytes[nl + 1..];
        if body.len() != record * cfg.clip_count() {
            return Err(Error::format(format!(
                "dataset body has {} bytes, expected {} clips of {record}",
                body.len(),
                cfg.clip_count()
            )));
        }
        let clips = body
            .chunks_exact(record)
            .map(|r| StoredClip::read(&cfg, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { config: cfg, clips })
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Clip indices of the train and test sides of `protocol`.
    pub fn split(&self, protocol: Protocol) -> (Vec<usize>, Vec<usize>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, c) in self.clips.iter().enumerate() {
            if protocol.is_test(&self.config, c.subject, c.activity, c.clip) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn frames_per_clip(&self) -> usize {
        self.config.views.len() * self.config.window
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            subjects: vec![1, 5],
            activities: vec![2, 8],
            clips_per_pair: 1,
            views: vec![7, 8, 9],
            window: 5,
            resolution: 16,
            seed: 3,
            occlusion: 0.3,
        }
    }

    #[test]
    fn counts_match_config() {
        let d = Dataset::generate(&small()).unwrap();
        assert_eq!(d.clips.len() * d.frames_per_clip(), 60);
        assert_eq!(small().frame_count(), 60);
    }

    #[test]
    fn write_read_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
        let d = Dataset::generate(&small()).unwrap();
        d.write(&p1).unwrap();
        Dataset::generate(&small()).unwrap().write(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(fs::read(manifest_path(&p1)).unwrap(), fs::read(manifest_path(&p2)).unwrap());
        assert_eq!(Dataset::read(&p1).unwrap(), d);
    }

    #[test]
    fn full_subject_split_holds_out_subjects_1_2_and_10() {
        let cfg = GenConfig { subjects: (1..=10).collect(), ..small() };
        let test: Vec<usize> = (1..=10).filter(|&s| Protocol::CrossSubject.is_test(&cfg, s, 1, 0)).collect();
        assert_eq!(test, vec![1, 2, 10]);
    }

    #[test]
    fn truncated_or_bad_containers_are_format_errors() {
        let bytes = Dataset::generate(&small()).unwrap().to_bytes();
        assert!(matches!(Dataset::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(Dataset::from_bytes(b"junk\n"), Err(Error::Format(_))));
    }
}
