//! Endpoint error, PCK over 0–50 mm and its AUC, with per-joint-class and
//! per-finger breakdowns. All reductions run in fixed order.

use crate::error::{Error, Result};
use crate::hand::{finger_of, joint_class, JointClass, FINGERS, FINGER_NAMES, JOINTS};

pub const PCK_MAX_MM: f64 = 50.0;
pub const PCK_STEP_MM: f64 = 1.0;

/// The inclusive 0..50 mm grid, 51 samples.
pub fn pck_thresholds() -> Vec<f64> {
    let n = (PCK_MAX_MM / PCK_STEP_MM).round() as usize;
    (0..=n).map(|i| i as f64 * PCK_STEP_MM).collect()
}

/// Euclidean error per joint for flat `[.., 3]` arrays.
pub fn joint_errors(pred: &[f64], gt: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() || pred.len() % 3 != 0 {
        return Err(Error::dim("joint_errors", format!("{} vs {} values", pred.len(), gt.len())));
    }
    Ok(pred
        .chunks_exact(3)
        .zip(gt.chunks_exact(3))
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt())
        .collect())
}

/// Mean and median of a pooled error distribution.
pub fn epe_of_pool(pool: &[f64]) -> Result<(f64, f64)> {
    if pool.is_empty() {
        return Err(Error::Contract("EPE of an empty evaluation set".into()));
    }
    let mean = pool.iter().sum::<f64>() / pool.len() as f64;
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    Ok((mean, median))
}

pub fn compute_epe(pred: &[f64], gt: &[f64]) -> Result<(f64, f64)> {
    epe_of_pool(&joint_errors(pred, gt)?)
}

/// PCK samples `(threshold, fraction ≤ threshold)` and the trapezoidal AUC
/// normalized by the grid span.
pub fn pck_auc_of_pool(pool: &[f64], thresholds: &[f64]) -> Result<(Vec<(f64, f64)>, f64)> {
    if thresholds.is_empty() {
        return Err(Error::Contract("PCK needs at least one threshold".into()));
    }
    if pool.is_empty() {
        return Err(Error::Contract("PCK of an empty evaluation set".into()));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&s| (s, sorted.partition_point(|&e| e <= s) as f64 / n))
        .collect();
    let span = thresholds[thresholds.len() - 1] - thresholds[0];
    let auc = if span > 0.0 {
        curve.windows(2).map(|w| (w[0].1 + w[1].1) / 2.0 * (w[1].0 - w[0].0)).sum::<f64>() / span
    } else {
        curve[0].1
    };
    Ok((curve, auc))
}

pub fn compute_pck_auc(pred: &[f64], gt: &[f64], thresholds: &[f64]) -> Result<(Vec<(f64, f64)>, f64)> {
    pck_auc_of_pool(&joint_errors(pred, gt)?, thresholds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub frames: usize,
    pub epe_mean: f64,
    pub epe_median: f64,
    pub auc: f64,
    pub pck: Vec<(f64, f64)>,
    /// Wrist, MCP, PIP, DIP, TIP.
    pub per_class: [f64; 5],
    /// Thumb to pinkie, over each finger's four joints.
    pub per_finger: [f64; FINGERS],
}

impl EvalReport {
    /// Evaluates flat `[frames, 21, 3]` predictions against ground truth.
    pub fn from_predictions(pred: &[f64], gt: &[f64]) -> Result<Self> {
        let pool = joint_errors(pred, gt)?;
        if pool.len() % JOINTS != 0 {
            return Err(Error::dim("evaluate", format!("{} joints is not whole frames", pool.len())));
        }
        let (epe_mean, epe_median) = epe_of_pool(&pool)?;
        let (pck, auc) = pck_auc_of_pool(&pool, &pck_thresholds())?;
        let mut class_sum = [0.0; 5];
        let mut class_n = [0usize; 5];
        let mut finger_sum = [0.0; FINGERS];
        let mut finger_n = [0usize; FINGERS];
        for (i, &e) in pool.iter().enumerate() {
            let j = i % JOINTS;
            let c = JointClass::ALL.iter().position(|&k| k == joint_class(j)).unwrap();
            class_sum[c] += e;
            class_n[c] += 1;
            if let Some(f) = finger_of(j) {
                finger_sum[f] += e;
                finger_n[f] += 1;
            }
        }
        let per_class = std::array::from_fn(|c| class_sum[c] / class_n[c] as f64);
        let per_finger = std::array::from_fn(|f| finger_sum[f] / finger_n[f] as f64);
        Ok(EvalReport { frames: pool.len() / JOINTS, epe_mean, epe_median, auc, pck, per_class, per_finger })
    }

    /// Column names matching [`EvalReport::row`].
    pub fn columns() -> Vec<String> {
        let mut c = vec!["EPE_mean".to_string(), "EPE_median".into(), "AUC".into()];
        c.extend(JointClass::ALL.iter().map(|k| k.name().to_string()));
        c.extend(FINGER_NAMES.iter().map(|s| s.to_string()));
        c
    }

    pub fn row(&self) -> Vec<f64> {
        let mut r = vec![self.epe_mean, self.epe_median, self.auc];
        r.extend_from_slice(&self.per_class);
        r.extend_from_slice(&self.per_finger);
        r
    }

    /// `threshold_mm,pck` lines with a header.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold_mm,pck\n");
        for (t, p) in &self.pck {
            s.push_str(&format!("{t},{p}\n"));
        }
        s
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut s = format!("frames={}\n", self.frames);
        for (name, v) in Self::columns().iter().zip(self.row()) {
            s.push_str(&format!("{name}={v:.6}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offsets(pool: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gt: Vec<f64> = (0..pool.len() * 3).map(|i| i as f64 * 0.37).collect();
        let mut pred = gt.clone();
        for (i, &e) in pool.iter().enumerate() {
            pred[i * 3 + 2] += e;
        }
        (pred, gt)
    }

    #[test]
    fn pythagorean_offset() {
        let gt = vec![1.0; 21 * 3];
        let pred: Vec<f64> = gt.iter().enumerate().map(|(i, g)| g + [3.0, 4.0, 0.0][i % 3]).collect();
        let (m, med) = compute_epe(&pred, &gt).unwrap();
        assert!((m - 5.0).abs() < 1e-12 && (med - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_median_convention() {
        let (p, g) = offsets(&[0.0, 0.0, 0.0, 100.0]);
        let (m, med) = compute_epe(&p, &g).unwrap();
        assert!((m - 25.0).abs() < 1e-12);
        assert_eq!(med, 0.0);
    }

    #[test]
    fn identity_gives_perfect_curve() {
        let (p, g) = offsets(&[0.0; 42]);
        let (curve, auc) = compute_pck_auc(&p, &g, &pck_thresholds()).unwrap();
        assert_eq!(curve.len(), 51);
        assert!(curve.iter().all(|&(_, v)| v == 1.0));
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn far_errors_give_zero() {
        let (p, g) = offsets(&[51.0, 80.0]);
        let (curve, auc) = compute_pck_auc(&p, &g, &pck_thresholds()).unwrap();
        assert!(curve.iter().all(|&(_, v)| v == 0.0));
        assert_eq!(auc, 0.0);
    }

    #[test]
    fn empty_inputs_are_contract_errors() {
        assert!(matches!(compute_epe(&[], &[]), Err(Error::Contract(_))));
        let (p, g) = offsets(&[1.0]);
        assert!(matches!(compute_pck_auc(&p, &g, &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn report_layout() {
        let (p, g) = offsets(&[2.0; 42]);
        let r = EvalReport::from_predictions(&p, &g).unwrap();
        assert_eq!(r.frames, 2);
        assert_eq!(EvalReport::columns().len(), r.row().len());
        assert_eq!(r.curve_csv().lines().count(), 52);
        assert!(r.per_class.iter().chain(&r.per_finger).all(|&e| (e - 2.0).abs() < 1e-12));
    }
}
