//! Losses: mean over joints of per-joint Euclidean distance, averaged over frames.

use crate::error::{Error, Result};
use crate::hand::JOINTS;
use crate::tensor::{Real, Tape, Var};

/// Per-joint distances `[R·21]` between `pred` and `gt`, both `[R,21,k]`.
pub fn joint_distances<S: Real>(tape: &mut Tape<S>, pred: Var, gt: Var) -> Result<Var> {
    let (ps, gs) = (tape.shape(pred).to_vec(), tape.shape(gt).to_vec());
    if ps != gs || ps.len() != 3 || ps[1] != JOINTS {
        return Err(Error::dim("joint_distances", format!("prediction {ps:?} vs ground truth {gs:?}")));
    }
    let d = tape.sub(pred, gt)?;
    let flat = tape.reshape(d, &[ps[0] * JOINTS, ps[2]])?;
    tape.row_norm(flat)
}

/// Mean per-joint Euclidean distance over every frame and joint.
pub fn mean_joint_distance<S: Real>(tape: &mut Tape<S>, pred: Var, gt: Var) -> Result<Var> {
    let d = joint_distances(tape, pred, gt)?;
    tape.mean(d)
}

/// `α · L2D + L3D` on pixel-space 2D and millimetre 3D joints.
pub fn loss_stage1<S: Real>(
    tape: &mut Tape<S>,
    pred2d: Var,
    gt2d: Var,
    pred3d: Var,
    gt3d: Var,
    alpha: f64,
) -> Result<Var> {
    let l2 = mean_joint_distance(tape, pred2d, gt2d)?;
    let l3 = mean_joint_distance(tape, pred3d, gt3d)?;
    let weighted = tape.scale(l2, alpha)?;
    tape.add(weighted, l3)
}

/// Mean over the `V×T` grid of per-frame 3D losses; `pred`, `gt` are `[R,21,3]`
/// holding whole clips. With equal joint counts per frame this equals the
/// pooled mean.
pub fn loss_stage2<S: Real>(tape: &mut Tape<S>, pred: Var, gt: Var, grid: usize) -> Result<Var> {
    let rows = tape.shape(pred)[0];
    if grid == 0 || rows % grid != 0 {
        return Err(Error::dim("loss_stage2", format!("{rows} frames do not form whole grids of {grid}")));
    }
    mean_joint_distance(tape, pred, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn pose(tape: &mut Tape<f64>, k: usize, f: impl Fn(usize) -> f64) -> Var {
        let data: Vec<f64> = (0..JOINTS * k).map(f).collect();
        tape.constant(Tensor::from_f64(&[1, JOINTS, k], &data).unwrap()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let mut t = Tape::new();
        let a = pose(&mut t, 2, |i| i as f64);
        let b = pose(&mut t, 3, |i| i as f64 * 0.5);
        let l = loss_stage1(&mut t, a, a, b, b, 0.01).unwrap();
        assert_eq!(t.value(l), &[0.0]);
    }

    #[test]
    fn single_joint_pythagorean_example() {
        // one joint off by (3,4) in 2D; all others exact; 3D exact
        let mut t = Tape::new();
        let gt2 = pose(&mut t, 2, |_| 10.0);
        let p2 = pose(&mut t, 2, |i| match i {
            0 => 13.0,
            1 => 14.0,
            _ => 10.0,
        });
        let p3 = pose(&mut t, 3, |_| 1.0);
        let l = loss_stage1(&mut t, p2, gt2, p3, p3, 0.01).unwrap();
        assert!((t.value(l)[0] - 0.01 * 5.0 / JOINTS as f64).abs() < 1e-15);
    }

    #[test]
    fn single_joint_pose_gives_hand_example() {
        // with a single-joint pose the mean over joints is that joint's error
        let mut t = Tape::<f64>::new();
        let p = t.constant(Tensor::from_f64(&[1, 2], &[3.0, 4.0]).unwrap()).unwrap();
        let z = t.constant(Tensor::zeros(&[1, 2])).unwrap();
        let d = t.sub(p, z).unwrap();
        let n = t.row_norm(d).unwrap();
        let m = t.mean(n).unwrap();
        let l = t.scale(m, 0.01).unwrap();
        assert!((t.value(l)[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut t = Tape::new();
        let a = pose(&mut t, 2, |_| 0.0);
        let b = pose(&mut t, 3, |_| 0.0);
        assert!(matches!(mean_joint_distance(&mut t, a, b), Err(Error::Dimension { .. })));
    }
}
