//! Skeleton rasterization: anti-aliased bone segments and joint discs over a
//! value-noise background, optional background-colored occluder patches,
//! and a global brightness multiplier. Images are `H×W×3`, row-major.

use rand::Rng;

use crate::tensor::rng::rng_for;

pub type Rgb = [f32; 3];

/// Hand geometry in pixel space.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub joints: Vec<[f64; 2]>,
    /// Camera depth of each joint; farther primitives are painted first.
    pub depths: Vec<f64>,
    pub bones: Vec<(usize, usize)>,
    pub bone_colors: Vec<Rgb>,
    pub joint_colors: Vec<Rgb>,
    pub bone_radius: f64,
    pub joint_radius: f64,
}

/// Disc of background pixels painted over the hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occluder {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Smooth colored noise from a coarse random grid, bilinearly interpolated,
/// plus fine per-pixel grain. Values stay in `[0.05, 0.5]`.
pub fn background(resolution: usize, seed: u64) -> Vec<f32> {
    let mut rng = rng_for(seed, "background");
    let cells = 6;
    let tint: Rgb = [rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)];
    let grid: Vec<f32> = (0..(cells + 1) * (cells + 1)).map(|_| rng.gen_range(0.1..0.42)).collect();
    let mut img = vec![0.0f32; resolution * resolution * 3];
    let step = resolution as f32 / cells as f32;
    for y in 0..resolution {
        for x in 0..resolution {
            let gx = x as f32 / step;
            let gy = y as f32 / step;
            let (ix, iy) = ((gx as usize).min(cells - 1), (gy as usize).min(cells - 1));
            let (fx, fy) = (gx - ix as f32, gy - iy as f32);
            let at = |i: usize, j: usize| grid[j * (cells + 1) + i];
            let v = at(ix, iy) * (1.0 - fx) * (1.0 - fy)
                + at(ix + 1, iy) * fx * (1.0 - fy)
                + at(ix, iy + 1) * (1.0 - fx) * fy
                + at(ix + 1, iy + 1) * fx * fy;
            for c in 0..3 {
                let grain: f32 = rng.gen_range(-0.04..0.04);
                img[(y * resolution + x) * 3 + c] = (v * tint[c] + grain).clamp(0.05, 0.5);
            }
        }
    }
    img
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

/// Blends `color` into `img` with coverage `clamp(radius + 0.5 − d, 0, 1)`,
/// where `d` is the pixel-center distance returned by `dist`.
fn paint(img: &mut [f32], res: usize, bbox: [f64; 4], radius: f64, color: Rgb, dist: impl Fn([f64; 2]) -> f64) {
    let lo_x = (bbox[0] - radius - 1.0).floor().max(0.0) as usize;
    let lo_y = (bbox[1] - radius - 1.0).floor().max(0.0) as usize;
    let hi_x = ((bbox[2] + radius + 1.0).ceil().max(0.0) as usize).min(res);
    let hi_y = ((bbox[3] + radius + 1.0).ceil().max(0.0) as usize).min(res);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let d = dist([x as f64 + 0.5, y as f64 + 0.5]);
            let a = (radius + 0.5 - d).clamp(0.0, 1.0) as f32;
            if a > 0.0 {
                let px = &mut img[(y * res + x) * 3..(y * res + x) * 3 + 3];
                for c in 0..3 {
                    px[c] = (1.0 - a) * px[c] + a * color[c];
                }
            }
        }
    }
}

/// Renders the scene over `background`, restores background inside
/// occluders, then multiplies every value by `lighting`.
pub fn render(scene: &Scene, background: &[f32], occluders: &[Occluder], lighting: f32, resolution: usize) -> Vec<f32> {
    let mut img = background.to_vec();
    enum Item {
        Bone(usize),
        Joint(usize),
    }
    let mut items: Vec<(f64, Item)> = Vec::new();
    for (i, &(a, b)) in scene.bones.iter().enumerate() {
        items.push(((scene.depths[a] + scene.depths[b]) / 2.0, Item::Bone(i)));
    }
    for j in 0..scene.joints.len() {
        items.push((scene.depths[j], Item::Joint(j)));
    }
    // far to near; ties keep declaration order
    items.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (_, item) in items {
        match item {
            Item::Bone(i) => {
                let (a, b) = scene.bones[i];
                let (pa, pb) = (scene.joints[a], scene.joints[b]);
                let bbox = [pa[0].min(pb[0]), pa[1].min(pb[1]), pa[0].max(pb[0]), pa[1].max(pb[1])];
                paint(&mut img, resolution, bbox, scene.bone_radius, scene.bone_colors[i], |p| {
                    segment_distance(p, pa, pb)
                });
            }
            Item::Joint(j) => {
                let c = scene.joints[j];
                let bbox = [c[0], c[1], c[0], c[1]];
                paint(&mut img, resolution, bbox, scene.joint_radius, scene.joint_colors[j], |p| {
                    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
                });
            }
        }
    }
    for o in occluders {
        let lo_y = (o.center[1] - o.radius).floor().max(0.0) as usize;
        let hi_y = ((o.center[1] + o.radius).ceil().max(0.0) as usize).min(resolution);
        let lo_x = (o.center[0] - o.radius).floor().max(0.0) as usize;
        let hi_x = ((o.center[0] + o.radius).ceil().max(0.0) as usize).min(resolution);
        for y in lo_y..hi_y {
            for x in lo_x..hi_x {
                let (dx, dy) = (x as f64 + 0.5 - o.center[0], y as f64 + 0.5 - o.center[1]);
                if dx * dx + dy * dy <= o.radius * o.radius {
                    let i = (y * resolution + x) * 3;
                    img[i..i + 3].copy_from_slice(&background[i..i + 3]);
                }
            }
        }
    }
    for v in img.iter_mut() {
        *v *= lighting;
    }
    img
}
