use handpose::error::Error;
use handpose::gradcheck::{check_inputs, check_params, random_projection, TOL_F64};
use handpose::recurrent::{gru_cell_step, init_gru, init_lstm, lstm_cell_step, run_learner, Axis, CellKind, SequenceLearnerConfig};
use handpose::tensor::rng::rng_for;
use handpose::tensor::{ParamStore, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = rng_for(seed, "inputs");
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Parameters scaled up so gates spread over their range.
fn lstm_store(input: usize, hidden: usize, seed: u64, gain: f64) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    init_lstm(&mut s, "cell", input, hidden, seed).unwrap();
    let names: Vec<String> = s.names().map(str::to_string).collect();
    let mut rng = rng_for(seed, "gain");
    for n in names {
        for v in s.get_mut(&n).unwrap().data_mut() {
            *v = *v * gain + rng.gen_range(-0.5..0.5);
        }
    }
    s
}

fn learner(cell: CellKind, seq_len: usize) -> SequenceLearnerConfig {
    SequenceLearnerConfig { axis: Axis::Temporal, seq_len, num_layers: 2, hidden: 6, input: 4, cell }
}

fn run(cfg: &SequenceLearnerConfig, store: &ParamStore<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let mut t = Tape::new();
    let v = t.constant(x.clone()).unwrap();
    let y = run_learner(&mut t, store, cfg, "seq", v).unwrap();
    t.value(y).to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_stay_in_range_and_h_is_o_times_tanh_c(seed in any::<u64>(), gain in 0.5f64..3.0) {
        let (b, input, hidden) = (3, 4, 5);
        let store = lstm_store(input, hidden, seed, gain);
        let mut t = Tape::new();
        let x = t.constant(random(&[b, input], seed, 3.0)).unwrap();
        let h0 = t.constant(random(&[b, hidden], seed ^ 1, 1.0)).unwrap();
        let c0 = t.constant(random(&[b, hidden], seed ^ 2, 2.0)).unwrap();
        let st = lstm_cell_step(&mut t, &store, "cell", x, h0, c0).unwrap();
        for g in [st.input_gate, st.forget_gate, st.output_gate] {
            prop_assert!(t.value(g).iter().all(|&v| v > 0.0 && v < 1.0));
        }
        prop_assert!(t.value(st.candidate).iter().all(|&v| v > -1.0 && v < 1.0));
        let (o, c, h) = (t.value(st.output_gate), t.value(st.c), t.value(st.h));
        for i in 0..h.len() {
            prop_assert_eq!(h[i], o[i] * c[i].tanh());
        }
    }

    #[test]
    fn later_inputs_never_change_earlier_outputs(seed in any::<u64>(), k in 0usize..5, gru in any::<bool>()) {
        let cfg = learner(if gru { CellKind::Gru } else { CellKind::Lstm }, 5);
        let mut store = ParamStore::new();
        cfg.init(&mut store, "seq", seed).unwrap();
        let x = random(&[2 * 5, 4], seed, 1.0);
        let mut y = x.clone();
        for s in 0..2 {
            for f in 0..4 {
                y.data_mut()[(s * 5 + k) * 4 + f] += 0.75;
            }
        }
        let (a, b) = (run(&cfg, &store, &x), run(&cfg, &store, &y));
        for s in 0..2 {
            for pos in 0..5 {
                let row = |v: &[f64]| v[(s * 5 + pos) * 6..(s * 5 + pos + 1) * 6].to_vec();
                if pos < k {
                    prop_assert_eq!(row(&a), row(&b));
                } else if pos == k {
                    prop_assert_ne!(row(&a), row(&b));
                }
            }
        }
    }
}

#[test]
fn reordering_independent_sequences_reorders_outputs_exactly() {
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let cfg = learner(cell, 5);
        let mut store = ParamStore::new();
        cfg.init(&mut store, "seq", 4).unwrap();
        let x = random(&[3 * 5, 4], 4, 1.0);
        let perm = [2usize, 0, 1];
        let mut xp = Tensor::zeros(&[15, 4]);
        for (dst, &src) in perm.iter().enumerate() {
            xp.data_mut()[dst * 20..(dst + 1) * 20].copy_from_slice(&x.data()[src * 20..(src + 1) * 20]);
        }
        let (a, b) = (run(&cfg, &store, &x), run(&cfg, &store, &xp));
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(a[src * 30..(src + 1) * 30], b[dst * 30..(dst + 1) * 30]);
        }
    }
}

#[test]
fn default_temporal_learner_gives_five_outputs_of_width_128() {
    let cfg = SequenceLearnerConfig::new(Axis::Temporal, 5, 16);
    let mut store = ParamStore::<f32>::new();
    cfg.init(&mut store, "t", 1).unwrap();
    let mut t = Tape::new();
    let x = t.constant(Tensor::full(&[5, 16], 0.1f32)).unwrap();
    let y = run_learner(&mut t, &store, &cfg, "t", x).unwrap();
    assert_eq!(t.shape(y), &[5, 128]);
}

#[test]
fn empty_sequence_is_a_contract_error() {
    let cfg = learner(CellKind::Lstm, 5);
    let mut store = ParamStore::<f64>::new();
    cfg.init(&mut store, "seq", 1).unwrap();
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(&[0, 4])).unwrap();
    assert!(matches!(run_learner(&mut t, &store, &cfg, "seq", x), Err(Error::Contract(_))));
}

#[test]
fn gru_runs_are_repeatable_and_zero_parameters_stay_zero() {
    let mut store = ParamStore::<f64>::new();
    init_gru(&mut store, "g", 3, 4, 2).unwrap();
    let step = |s: &ParamStore<f64>| {
        let mut t = Tape::new();
        let x = t.constant(random(&[2, 3], 9, 1.0)).unwrap();
        let h = t.constant(random(&[2, 4], 10, 1.0)).unwrap();
        let out = gru_cell_step(&mut t, s, "g", x, h).unwrap();
        t.value(out).to_vec()
    };
    assert_eq!(step(&store), step(&store));
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for n in names {
        store.get_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let mut t = Tape::new();
    let x = t.constant(random(&[2, 3], 9, 1.0)).unwrap();
    let h = t.constant(Tensor::zeros(&[2, 4])).unwrap();
    let out = gru_cell_step(&mut t, &store, "g", x, h).unwrap();
    assert!(t.value(out).iter().all(|&v| v == 0.0));
}

#[test]
fn gradients_through_a_length_five_learner() {
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let cfg = learner(cell, 5);
        let mut store = ParamStore::new();
        cfg.init(&mut store, "seq", 6).unwrap();
        let x = random(&[2 * 5, 4], 6, 1.0);
        let p = check_params("learner", &store, 8, 6, |t, s| {
            let v = t.constant(x.clone())?;
            let y = run_learner(t, s, &cfg, "seq", v)?;
            random_projection(t, y, 6)
        })
        .unwrap();
        let i = check_inputs("learner", &[x.clone()], |t, v| {
            let y = run_learner(t, &store, &cfg, "seq", v[0])?;
            random_projection(t, y, 6)
        })
        .unwrap();
        assert_eq!(p.tolerance, TOL_F64);
        assert!(p.passed() && i.passed(), "{cell:?}: {} / {}", p.max_rel_error, i.max_rel_error);
    }
}
