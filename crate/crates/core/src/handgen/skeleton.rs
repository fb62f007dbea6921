//! Forward kinematics of a right hand with per-subject bone tables and
//! procedural per-activity motion programs.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hand::{self, FINGERS, JOINTS};
use crate::tensor::rng::{derive_seed, rng_for};

pub type Vec3 = [f64; 3];

pub const SUBJECTS: usize = 10;
pub const ACTIVITIES: usize = 19;

/// Seed of the fixed subject and activity tables (independent of dataset seeds).
const TABLE_SEED: u64 = 0x4d75_5669_4861_6e64;

/// Base bone lengths in millimetres per finger: metacarpal, proximal, middle, distal.
const BASE_LENGTHS: [[f64; 4]; FINGERS] = [
    [38.0, 36.0, 30.0, 25.0],
    [80.0, 42.0, 25.0, 21.0],
    [78.0, 45.0, 28.0, 22.0],
    [74.0, 42.0, 27.0, 22.0],
    [70.0, 33.0, 20.0, 20.0],
];

/// Metacarpal directions in the palm plane, degrees from the finger axis
/// toward the thumb side; the thumb also leaves the palm plane.
const SPLAY_DEG: [f64; FINGERS] = [52.0, 10.0, 0.0, -10.0, -20.0];
const THUMB_LIFT_DEG: f64 = 25.0;

/// Flexion limits (degrees) at full curl for MCP, PIP, DIP.
const CURL_DEG: [f64; 3] = [75.0, 95.0, 65.0];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}
pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Rodrigues rotation of `v` about unit `axis`.
fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    let k = cross(axis, v);
    let kd = dot(axis, v) * (1.0 - c);
    [
        v[0] * c + k[0] * s + axis[0] * kd,
        v[1] * c + k[1] * s + axis[1] * kd,
        v[2] * c + k[2] * s + axis[2] * kd,
    ]
}

fn mat_vec(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// `yaw` about y, `pitch` about x, `roll` about z (applied roll, pitch, yaw).
fn euler(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    let rz = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&ry, &mat_mul(&rx, &rz))
}

/// Bone lengths and appearance of one synthetic subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: usize,
    /// `lengths[f][k]`: bone `k` of finger `f` (0 = metacarpal).
    pub lengths: [[f64; 4]; FINGERS],
    /// Skin tone multiplier in `(0,1]`.
    pub tone: f64,
}

impl Subject {
    pub fn new(id: usize) -> Result<Self> {
        if !(1..=SUBJECTS).contains(&id) {
            return Err(Error::config(format!("subject id {id} outside 1..={SUBJECTS}")));
        }
        let mut rng = rng_for(TABLE_SEED, &format!("subject-{id}"));
        let s = rng.gen_range(0.88..1.12);
        let mut lengths = BASE_LENGTHS;
        for row in lengths.iter_mut() {
            for l in row.iter_mut() {
                *l *= s * rng.gen_range(0.95..1.05);
            }
        }
        Ok(Subject { id, lengths, tone: rng.gen_range(0.6..1.0) })
    }

    /// Length of the bone ending at joint `child`.
    pub fn bone_length(&self, child: usize) -> f64 {
        let f = hand::finger_of(child).expect("wrist has no parent bone");
        self.lengths[f][(child - 1) % 4]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FingerAngles {
    /// Sideways rotation in the palm plane, radians.
    pub abduction: f64,
    pub mcp: f64,
    pub pip: f64,
    pub dip: f64,
}

/// Every degree of freedom of the hand at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HandAngles {
    pub fingers: [FingerAngles; FINGERS],
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Wrist position in world millimetres.
    pub wrist: Vec3,
}

/// Forward kinematics: world-frame joints for `subject` in posture `angles`.
///
/// In the hand frame fingers extend along +y, the thumb sits on +x and the
/// palm faces +z; zero angles give a flat open hand.
pub fn forward_kinematics(subject: &Subject, angles: &HandAngles) -> [Vec3; JOINTS] {
    let palm_normal = [0.0, 0.0, 1.0];
    let mut local = [[0.0; 3]; JOINTS];
    for f in 0..FINGERS {
        let splay = SPLAY_DEG[f].to_radians();
        let mut meta = [splay.sin(), splay.cos(), 0.0];
        if f == 0 {
            let lift = THUMB_LIFT_DEG.to_radians();
            meta = normalize([meta[0] * lift.cos(), meta[1] * lift.cos(), lift.sin()]);
        }
        let a = angles.fingers[f];
        let mcp_pos = scale(meta, subject.lengths[f][0]);
        local[hand::joint(f, 0)] = mcp_pos;
        let d0 = normalize(rotate(meta, palm_normal, a.abduction));
        let axis = normalize(cross(d0, palm_normal));
        let mut pos = mcp_pos;
        let mut flex = 0.0;
        for (k, theta) in [a.mcp, a.pip, a.dip].into_iter().enumerate() {
            flex += theta;
            let dir = normalize(rotate(d0, axis, flex));
            pos = add(pos, scale(dir, subject.lengths[f][k + 1]));
            local[hand::joint(f, k + 1)] = pos;
        }
    }
    let r = euler(angles.yaw, angles.pitch, angles.roll);
    let mut world = [[0.0; 3]; JOINTS];
    for j in 0..JOINTS {
        world[j] = add(angles.wrist, mat_vec(&r, local[j]));
    }
    world
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    base: f64,
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Wave {
    fn at(&self, tau: f64) -> f64 {
        self.base + self.amp * (2.0 * PI * self.freq * tau + self.phase).sin()
    }
}

/// A procedural motion program: smooth sinusoidal trajectories for every DOF.
#[derive(Debug, Clone)]
pub struct Activity {
    pub id: usize,
    curls: [Wave; FINGERS],
    spread: Wave,
    yaw: Wave,
    pitch: Wave,
    roll: Wave,
    shift: [Wave; 3],
}

impl Activity {
    pub fn new(id: usize) -> Result<Self> {
        if !(1..=ACTIVITIES).contains(&id) {
            return Err(Error::config(format!("activity id {id} outside 1..={ACTIVITIES}")));
        }
        let mut rng = rng_for(TABLE_SEED, &format!("activity-{id}"));
        let mut wave = |base: (f64, f64), amp: (f64, f64), freq: (f64, f64)| Wave {
            base: rng.gen_range(base.0..base.1),
            amp: rng.gen_range(amp.0..amp.1),
            freq: rng.gen_range(freq.0..freq.1),
            phase: rng.gen_range(0.0..2.0 * PI),
        };
        let curl_base = (0.1, 0.8);
        let curls = [(); FINGERS].map(|_| wave(curl_base, (0.1, 0.5), (0.3, 1.2)));
        let spread = wave((0.3, 0.9), (0.1, 0.4), (0.2, 0.8));
        let yaw = wave((-0.3, 0.3), (0.05, 0.6), (0.1, 0.5));
        let pitch = wave((-0.2, 0.2), (0.05, 0.4), (0.1, 0.5));
        let roll = wave((-0.2, 0.2), (0.05, 0.4), (0.1, 0.5));
        let shift = [(); 3].map(|_| wave((-10.0, 10.0), (5.0, 35.0), (0.1, 0.6)));
        Ok(Activity { id, curls, spread, yaw, pitch, roll, shift })
    }

    /// Joint angles at time `tau` seconds.
    pub fn angles(&self, tau: f64) -> HandAngles {
        let spread = self.spread.at(tau).clamp(0.0, 1.0);
        let abd_deg = [10.0, 12.0, 3.0, -8.0, -15.0];
        let mut fingers = [FingerAngles::default(); FINGERS];
        for f in 0..FINGERS {
            let c = self.curls[f].at(tau).clamp(0.0, 1.0);
            fingers[f] = FingerAngles {
                abduction: (abd_deg[f] * spread * (1.0 - c)).to_radians(),
                mcp: (CURL_DEG[0] * c).to_radians(),
                pip: (CURL_DEG[1] * c).to_radians(),
                dip: (CURL_DEG[2] * c).to_radians(),
            };
        }
        HandAngles {
            fingers,
            yaw: self.yaw.at(tau),
            pitch: self.pitch.at(tau),
            roll: self.roll.at(tau),
            wrist: [self.shift[0].at(tau), self.shift[1].at(tau), self.shift[2].at(tau)],
        }
    }
}

/// Seconds between consecutive frames.
pub const FRAME_DT: f64 = 1.0 / 15.0;

/// Start time of a clip, drawn from `(seed, subject, activity, clip)`.
pub fn clip_start(seed: u64, subject: usize, activity: usize, clip: usize) -> f64 {
    let mut rng = rng_for(derive_seed(seed, &format!("clip-{subject}-{activity}-{clip}")), "start");
    rng.gen_range(0.0..20.0)
}

/// World-frame joints of frame `t` of a clip.
pub fn sample_pose(seed: u64, subject: usize, activity: usize, clip: usize, t: usize) -> Result<[Vec3; JOINTS]> {
    let s = Subject::new(subject)?;
    let a = Activity::new(activity)?;
    let tau = clip_start(seed, subject, activity, clip) + t as f64 * FRAME_DT;
    Ok(forward_kinematics(&s, &a.angles(tau)))
}
