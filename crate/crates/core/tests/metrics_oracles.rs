use handpose::hand::{joint_class, JointClass, JOINTS};
use handpose::tensor::rng::rng_for;
use handpose::tensor::{Tape, Tensor};
use handpose::trainer::losses::{loss_stage1, loss_stage2, mean_joint_distance};
use handpose::trainer::metrics::{compute_epe, compute_pck_auc, pck_thresholds, EvalReport};
use proptest::prelude::*;
use rand::Rng;

/// Places each pooled error along a random unit direction from a random ground truth.
fn arrays_with_errors(errors: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_for(seed, "arrays");
    let mut pred = Vec::with_capacity(errors.len() * 3);
    let mut gt = Vec::with_capacity(errors.len() * 3);
    for &e in errors {
        let g: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-300.0..300.0));
        let mut d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
        for x in &mut d {
            *x *= e / n;
        }
        gt.extend_from_slice(&g);
        pred.extend((0..3).map(|k| g[k] + d[k]));
    }
    (pred, gt)
}

fn brute_errors(pred: &[f64], gt: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < pred.len() {
        let mut s = 0.0;
        for k in 0..3 {
            s += (pred[i + k] - gt[i + k]) * (pred[i + k] - gt[i + k]);
        }
        out.push(s.sqrt());
        i += 3;
    }
    out
}

/// Median by rank counting, without sorting.
fn brute_median(pool: &[f64]) -> f64 {
    let n = pool.len();
    let kth = |k: usize| -> f64 {
        *pool
            .iter()
            .find(|&&x| {
                let below = pool.iter().filter(|&&y| y < x).count();
                let equal = pool.iter().filter(|&&y| y == x).count();
                below <= k && k < below + equal
            })
            .unwrap()
    };
    if n % 2 == 1 {
        kth(n / 2)
    } else {
        (kth(n / 2 - 1) + kth(n / 2)) / 2.0
    }
}

fn brute_pck_auc(pool: &[f64]) -> (Vec<f64>, f64) {
    let pck: Vec<f64> = (0..=50)
        .map(|s| pool.iter().filter(|&&e| e <= s as f64).count() as f64 / pool.len() as f64)
        .collect();
    let mut area = 0.0;
    for i in 0..50 {
        area += 0.5 * (pck[i] + pck[i + 1]);
    }
    (pck, area / 50.0)
}

#[test]
fn thousand_random_pools_match_brute_force() {
    let mut rng = rng_for(2024, "pools");
    for p in 0..1000u64 {
        let n = rng.gen_range(1..120);
        let pool: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.1) { rng.gen_range(0..60) as f64 } else { rng.gen_range(0.0..70.0) })
            .collect();
        let (pred, gt) = arrays_with_errors(&pool, p);
        let errors = brute_errors(&pred, &gt);
        let (mean, median) = compute_epe(&pred, &gt).unwrap();
        let bmean = errors.iter().sum::<f64>() / errors.len() as f64;
        assert!((mean - bmean).abs() < 1e-9, "pool {p}");
        assert!((median - brute_median(&errors)).abs() < 1e-9, "pool {p}");
        let (curve, auc) = compute_pck_auc(&pred, &gt, &pck_thresholds()).unwrap();
        let (bpck, bauc) = brute_pck_auc(&errors);
        assert_eq!(curve.len(), 51);
        for (i, ((s, v), b)) in curve.iter().zip(&bpck).enumerate() {
            assert_eq!(*s, i as f64);
            assert!((v - b).abs() < 1e-9, "pool {p} threshold {s}");
        }
        assert!((auc - bauc).abs() < 1e-9, "pool {p}");
    }
}

#[test]
fn identity_predictions_are_perfect() {
    let (p, _) = arrays_with_errors(&[0.0; 63], 1);
    assert_eq!(compute_epe(&p, &p).unwrap(), (0.0, 0.0));
    assert_eq!(compute_pck_auc(&p, &p, &pck_thresholds()).unwrap().1, 1.0);
}

#[test]
fn all_25mm_pool_matches_trapezoid_oracle() {
    // exact 25 mm offsets along the z axis
    let gt: Vec<f64> = (0..42 * 3).map(|i| i as f64).collect();
    let pred: Vec<f64> = gt.iter().enumerate().map(|(i, g)| if i % 3 == 2 { g + 25.0 } else { *g }).collect();
    let (curve, auc) = compute_pck_auc(&pred, &gt, &pck_thresholds()).unwrap();
    for (s, v) in &curve {
        assert_eq!(*v, if *s < 25.0 { 0.0 } else { 1.0 });
    }
    let (_, oracle) = brute_pck_auc(&[25.0; 42]);
    assert_eq!(auc, oracle);
    // half a unit on [24, 25], then 25 full units, over 50
    assert!((auc - 25.5 / 50.0).abs() < 1e-15);
}

#[test]
fn class_weighted_joint_classes_average_to_the_mean() {
    let mut rng = rng_for(5, "classes");
    let pool: Vec<f64> = (0..JOINTS * 7).map(|_| rng.gen_range(0.0..40.0)).collect();
    let (pred, gt) = arrays_with_errors(&pool, 5);
    let r = EvalReport::from_predictions(&pred, &gt).unwrap();
    let counts: Vec<f64> = JointClass::ALL
        .iter()
        .map(|&c| (0..JOINTS).filter(|&j| joint_class(j) == c).count() as f64)
        .collect();
    assert_eq!(counts, vec![1.0, 5.0, 5.0, 5.0, 5.0]);
    let weighted: f64 = r.per_class.iter().zip(&counts).map(|(e, n)| e * n).sum::<f64>() / JOINTS as f64;
    assert!((weighted - r.epe_mean).abs() < 1e-9);
}

#[test]
fn deterministic_report() {
    let mut rng = rng_for(8, "det");
    let pool: Vec<f64> = (0..JOINTS * 4).map(|_| rng.gen_range(0.0..80.0)).collect();
    let (pred, gt) = arrays_with_errors(&pool, 8);
    assert_eq!(EvalReport::from_predictions(&pred, &gt).unwrap(), EvalReport::from_predictions(&pred, &gt).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pck_is_monotone_and_bounded(pool in prop::collection::vec(0.0f64..90.0, 1..80)) {
        let (pred, gt) = arrays_with_errors(&pool, 3);
        let (curve, auc) = compute_pck_auc(&pred, &gt, &pck_thresholds()).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!(curve.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)));
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn auc_is_one_only_for_zero_errors(pool in prop::collection::vec(0.0f64..3.0, 1..40), zero in any::<bool>()) {
        let pool: Vec<f64> = if zero { vec![0.0; pool.len()] } else { pool };
        let (pred, gt) = arrays_with_errors(&pool, 4);
        let (_, auc) = compute_pck_auc(&pred, &gt, &pck_thresholds()).unwrap();
        let all_zero = brute_errors(&pred, &gt).iter().all(|&e| e == 0.0);
        prop_assert_eq!(auc == 1.0, all_zero);
    }
}

fn frames(tape: &mut Tape<f64>, rows: usize, k: usize, f: impl Fn(usize, usize) -> f64) -> handpose::tensor::Var {
    let data: Vec<f64> = (0..rows * JOINTS * k).map(|i| f(i / (JOINTS * k), i % (JOINTS * k))).collect();
    tape.constant(Tensor::from_f64(&[rows, JOINTS, k], &data).unwrap()).unwrap()
}

#[test]
fn stage2_grid_of_frame_losses_one_to_four_averages_to_two_and_a_half() {
    let mut t = Tape::new();
    let gt = frames(&mut t, 4, 3, |_, i| i as f64);
    // frame r shifts every joint by r+1 mm along x
    let pred = frames(&mut t, 4, 3, |r, i| i as f64 + if i % 3 == 0 { (r + 1) as f64 } else { 0.0 });
    let l = loss_stage2(&mut t, pred, gt, 4).unwrap();
    assert!((t.value(l)[0] - 2.5).abs() < 1e-12);
}

#[test]
fn stage2_on_a_single_frame_equals_the_stage1_3d_term() {
    let mut t = Tape::new();
    let gt = frames(&mut t, 1, 3, |_, i| (i as f64 * 0.7).sin() * 100.0);
    let pred = frames(&mut t, 1, 3, |_, i| (i as f64 * 1.3).cos() * 90.0);
    let l2 = loss_stage2(&mut t, pred, gt, 1).unwrap();
    let z = frames(&mut t, 1, 2, |_, _| 0.0);
    let l1 = loss_stage1(&mut t, z, z, pred, gt, 0.01).unwrap();
    let l3 = mean_joint_distance(&mut t, pred, gt).unwrap();
    assert!((t.value(l2)[0] - t.value(l1)[0]).abs() < 1e-9);
    assert!((t.value(l2)[0] - t.value(l3)[0]).abs() < 1e-9);
}

#[test]
fn doubling_alpha_doubles_the_2d_contribution() {
    let mut t = Tape::new();
    let g2 = frames(&mut t, 2, 2, |_, i| i as f64);
    let p2 = frames(&mut t, 2, 2, |r, i| i as f64 + (r as f64 + 1.0) * 3.0);
    let g3 = frames(&mut t, 2, 3, |_, i| i as f64);
    let p3 = frames(&mut t, 2, 3, |_, i| i as f64 * 1.1);
    let l3 = mean_joint_distance(&mut t, p3, g3).unwrap();
    let a = loss_stage1(&mut t, p2, g2, p3, g3, 0.01).unwrap();
    let b = loss_stage1(&mut t, p2, g2, p3, g3, 0.02).unwrap();
    let (l3, a, b) = (t.value(l3)[0], t.value(a)[0], t.value(b)[0]);
    assert!(((b - l3) - 2.0 * (a - l3)).abs() < 1e-12);
}

#[test]
fn empty_threshold_grid_is_rejected() {
    let (p, g) = arrays_with_errors(&[1.0], 0);
    assert!(compute_pck_auc(&p, &g, &[]).is_err());
}
