//! Central-difference gradient checks.
//!
//! The numeric side only ever evaluates forward passes, so it stays
//! independent of every backward rule it verifies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::graph::{
    apply_node_map, init_pool_pair, normalize_adjacency, Activation, AdjacencyMode, GraphConvLayer, LifterConfig,
    LifterKind, LEARNED_EPS,
};
use crate::hand::JOINTS;
use crate::pipeline::{Mode, Model, ModelConfig, Variant};
use crate::recurrent::{gru_cell_step, init_gru, init_lstm, lstm_cell_step, run_learner, Axis, CellKind, SequenceLearnerConfig};
use crate::trainer::losses::loss_stage2;
use crate::tensor::rng::rng_for;
use crate::tensor::{ParamStore, Primitive, Real, Tape, Tensor, Var};

/// Tolerance for 64-bit checks.
pub const TOL_F64: f64 = 1e-6;
/// Tolerance for 32-bit checks.
pub const TOL_F32: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Finite-difference step for a coordinate with value `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Richardson-extrapolated central difference of `f` at `x`, restoring `f(x)`
/// before returning. Two extrapolations on nested stencils must agree; when
/// they do not, `f` is not smooth over the stencil (a ReLU kink inside it),
/// so the step shrinks and the best-agreeing estimate is kept.
pub fn numeric_derivative(x: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let central = |f: &mut dyn FnMut(f64) -> Result<f64>, h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    let mut h = fd_step(x);
    let (mut estimate, mut spread) = (0.0, f64::INFINITY);
    for _ in 0..3 {
        let d1 = central(&mut f, h)?;
        let d2 = central(&mut f, h / 2.0)?;
        let d4 = central(&mut f, h / 4.0)?;
        let (coarse, fine) = ((4.0 * d2 - d1) / 3.0, (4.0 * d4 - d2) / 3.0);
        let s = (coarse - fine).abs() / fine.abs().max(1.0);
        if s < spread {
            (estimate, spread) = (fine, s);
        }
        if spread <= 1e-8 {
            break;
        }
        h /= 10.0;
    }
    f(x)?;
    Ok(estimate)
}

/// `|a - n| / max(1, |a|, |n|)`: relative for gradients above one, absolute below.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

fn merge(name: &str, tol: f64, parts: impl IntoIterator<Item = (usize, f64)>) -> CheckResult {
    let (checked, max_rel_error) = parts
        .into_iter()
        .fold((0, 0.0f64), |(c, m), (k, e)| (c + k, m.max(e)));
    CheckResult {
        name: name.to_string(),
        checked,
        max_rel_error,
        tolerance: tol,
    }
}

/// Checks `d f / d inputs` where `f` builds a scalar from the input vars.
pub fn check_inputs<F>(name: &str, inputs: &[Tensor<f64>], f: F) -> Result<CheckResult>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)[0])
    };
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        for i in 0..inputs[k].len() {
            let x = inputs[k].data()[i];
            let numeric = numeric_derivative(x, |v| {
                probe[k].data_mut()[i] = v;
                eval(&probe)
            })?;
            worst = worst.max(rel_error(analytic[i], numeric));
            checked += 1;
        }
    }
    Ok(merge(name, TOL_F64, [(checked, worst)]))
}

/// Checks parameter gradients of `f`, probing at most `per_param` entries of
/// each non-frozen tensor (chosen by `seed`).
pub fn check_params<F>(name: &str, store: &ParamStore<f64>, per_param: usize, seed: u64, f: F) -> Result<CheckResult>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    let grads = tape.backward(loss)?;
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let out = f(&mut t, s)?;
        Ok(t.value(out)[0])
    };
    compare_params(name, TOL_F64, store, per_param, seed, &|n| grads.param(n), &eval)
}

fn compare_params(
    name: &str,
    tol: f64,
    store: &ParamStore<f64>,
    per_param: usize,
    seed: u64,
    analytic: &dyn Fn(&str) -> Option<Vec<f64>>,
    eval: &dyn Fn(&ParamStore<f64>) -> Result<f64>,
) -> Result<CheckResult> {
    let mut probe = store.clone();
    let mut parts = Vec::new();
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for pname in names.iter().filter(|n| !store.is_frozen(n)) {
        let len = store.get(pname).unwrap().len();
        let analytic = analytic(pname).unwrap_or_else(|| vec![0.0; len]);
        let mut rng = rng_for(seed, pname);
        let picks: Vec<usize> = if len <= per_param {
            (0..len).collect()
        } else {
            (0..per_param).map(|_| rng.gen_range(0..len)).collect()
        };
        let mut worst = 0.0f64;
        for &i in &picks {
            let x = store.get(pname).unwrap().data()[i];
            let numeric = numeric_derivative(x, |v| {
                probe.get_mut(pname).unwrap().data_mut()[i] = v;
                eval(&probe)
            })?;
            worst = worst.max(rel_error(analytic[i], numeric));
        }
        parts.push((picks.len(), worst));
    }
    Ok(merge(name, tol, parts))
}

/// A scalar objective that can be built at either precision.
pub trait Objective {
    fn build<S: Real>(&self, tape: &mut Tape<S>, store: &ParamStore<S>) -> Result<Var>;
}

pub fn cast_store<S: Real, T: Real>(store: &ParamStore<S>) -> Result<ParamStore<T>> {
    let mut out = ParamStore::new();
    for (name, t) in store.iter() {
        out.insert(name, t.cast())?;
    }
    for name in store.frozen() {
        out.freeze(name)?;
    }
    Ok(out)
}

/// 32-bit analytic parameter gradients against 64-bit central differences,
/// both taken at the f32-rounded parameter values.
pub fn check_params_f32<O: Objective>(name: &str, store: &ParamStore<f64>, per_param: usize, seed: u64, obj: &O) -> Result<CheckResult> {
    let store32: ParamStore<f32> = cast_store(store)?;
    let rounded: ParamStore<f64> = cast_store(&store32)?;
    let mut tape = Tape::new();
    let loss = obj.build(&mut tape, &store32)?;
    let grads = tape.backward(loss)?;
    let analytic = |n: &str| grads.param(n).map(|g| g.iter().map(|&v| v as f64).collect());
    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let out = obj.build(&mut t, s)?;
        Ok(t.value(out)[0])
    };
    compare_params(name, TOL_F32, &rounded, per_param, seed, &analytic, &eval)
}

/// Contracts `out` with fixed random weights so every output element
/// contributes to the scalar.
pub fn random_projection<S: Real>(tape: &mut Tape<S>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = rng_for(seed, "projection");
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w = Tensor::from_f64(&shape, &w)?;
    let w = tape.constant(w)?;
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, for kinked or singular primitives.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = rand_tensor(rng, shape, 0.1, 2.0);
    for v in t.data_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn ri(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

fn rand_shape(rng: &mut ChaCha8Rng, max_rank: usize) -> Vec<usize> {
    let rank = rng.gen_range(1..=max_rank);
    (0..rank).map(|_| rng.gen_range(1..=4)).collect()
}

/// Random primitive instance and inputs for trial `trial`.
fn primitive_case(kind: &str, rng: &mut ChaCha8Rng, trial: u64) -> (Primitive, Vec<Tensor<f64>>) {
    match kind {
        "matmul" => {
            let (m, k, n) = (ri(rng, 1, 5), ri(rng, 1, 5), ri(rng, 1, 5));
            (Primitive::MatMul, vec![rand_tensor(rng, &[m, k], -1.0, 1.0), rand_tensor(rng, &[k, n], -1.0, 1.0)])
        }
        "add" | "sub" | "mul" => {
            let s = rand_shape(rng, 3);
            let p = match kind {
                "add" => Primitive::Add,
                "sub" => Primitive::Sub,
                _ => Primitive::Mul,
            };
            (p, vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, -1.0, 1.0)])
        }
        "add_bias" => {
            let (m, n) = (ri(rng, 1, 5), ri(rng, 1, 5));
            (Primitive::AddBias, vec![rand_tensor(rng, &[m, n], -1.0, 1.0), rand_tensor(rng, &[n], -1.0, 1.0)])
        }
        "scale" => {
            let c = rng.gen_range(-2.0..2.0);
            let s = rand_shape(rng, 3);
            (Primitive::Scale(c), vec![rand_tensor(rng, &s, -1.0, 1.0)])
        }
        "add_scalar" => {
            let s = rand_shape(rng, 3);
            (Primitive::AddScalar(0.7), vec![rand_tensor(rng, &s, -1.0, 1.0)])
        }
        "sigmoid" | "tanh" | "softplus" => {
            let s = rand_shape(rng, 3);
            let p = match kind {
                "sigmoid" => Primitive::Sigmoid,
                "tanh" => Primitive::Tanh,
                _ => Primitive::Softplus,
            };
            (p, vec![rand_tensor(rng, &s, -3.0, 3.0)])
        }
        "relu" => {
            let s = rand_shape(rng, 3);
            (Primitive::Relu, vec![rand_away_from_zero(rng, &s)])
        }
        "rsqrt" => {
            let s = rand_shape(rng, 2);
            (Primitive::Rsqrt { eps: 1e-8 }, vec![rand_tensor(rng, &s, 1.0, 2.0)])
        }
        "concat" => {
            let axis = ri(rng, 0, 1);
            let other = ri(rng, 1, 4);
            let parts = ri(rng, 2, 3);
            let ins = (0..parts)
                .map(|_| {
                    let a = rng.gen_range(1..=4);
                    let shape = if axis == 0 { [a, other] } else { [other, a] };
                    rand_tensor(rng, &shape, -1.0, 1.0)
                })
                .collect();
            (Primitive::Concat { axis }, ins)
        }
        "conv2d" => {
            let (b, c, o, k) = (ri(rng, 1, 2), ri(rng, 1, 3), ri(rng, 1, 3), ri(rng, 1, 3));
            let (h, w) = (ri(rng, k, 6), ri(rng, k, 6));
            let (stride, pad) = (ri(rng, 1, 2), ri(rng, 0, 1));
            (
                Primitive::Conv2d { stride, pad },
                vec![
                    rand_tensor(rng, &[b, c, h, w], -1.0, 1.0),
                    rand_tensor(rng, &[o, c, k, k], -1.0, 1.0),
                    rand_tensor(rng, &[o], -1.0, 1.0),
                ],
            )
        }
        "avg_pool2d" => {
            let k = ri(rng, 1, 2);
            let shape = [ri(rng, 1, 2), ri(rng, 1, 3), k * ri(rng, 1, 3), k * ri(rng, 1, 3)];
            (Primitive::AvgPool2d { kernel: k }, vec![rand_tensor(rng, &shape, -1.0, 1.0)])
        }
        "global_avg_pool" => {
            let shape = [ri(rng, 1, 2), ri(rng, 1, 3), ri(rng, 1, 4), ri(rng, 1, 4)];
            (Primitive::GlobalAvgPool, vec![rand_tensor(rng, &shape, -1.0, 1.0)])
        }
        "dropout" => {
            let s = rand_shape(rng, 3);
            (Primitive::Dropout { keep: 0.75, seed: trial, training: true }, vec![rand_tensor(rng, &s, -1.0, 1.0)])
        }
        "mean" | "sum" => {
            let s = rand_shape(rng, 3);
            let p = if kind == "mean" { Primitive::Mean } else { Primitive::Sum };
            (p, vec![rand_tensor(rng, &s, -1.0, 1.0)])
        }
        "reshape" => {
            let (a, b) = (ri(rng, 1, 4), ri(rng, 1, 4));
            (Primitive::Reshape(vec![b, a]), vec![rand_tensor(rng, &[a, b], -1.0, 1.0)])
        }
        "transpose" => {
            let (a, b) = (ri(rng, 1, 4), ri(rng, 1, 4));
            (Primitive::Transpose, vec![rand_tensor(rng, &[a, b], -1.0, 1.0)])
        }
        "row_norm" => {
            let (a, b) = (ri(rng, 1, 4), ri(rng, 1, 4));
            (Primitive::RowNorm, vec![rand_away_from_zero(rng, &[a, b])])
        }
        "left_bmm" => {
            let (p, n, f, b) = (ri(rng, 1, 4), ri(rng, 1, 4), ri(rng, 1, 4), ri(rng, 1, 3));
            (Primitive::LeftBmm, vec![rand_tensor(rng, &[p, n], -1.0, 1.0), rand_tensor(rng, &[b, n, f], -1.0, 1.0)])
        }
        "gather_rows" => {
            let (rows, cols) = (ri(rng, 1, 4), ri(rng, 1, 3));
            let picks = (0..ri(rng, 1, 6)).map(|_| rng.gen_range(0..rows)).collect();
            (Primitive::GatherRows(picks), vec![rand_tensor(rng, &[rows, cols], -1.0, 1.0)])
        }
        other => panic!("no gradient case for primitive `{other}`"),
    }
}

/// Every primitive with a backward rule.
pub const PRIMITIVES: &[&str] = &[
    "matmul", "add", "add_bias", "sub", "mul", "scale", "add_scalar", "sigmoid", "tanh", "relu", "softplus",
    "rsqrt", "concat", "conv2d", "avg_pool2d", "global_avg_pool", "dropout", "mean", "sum", "reshape",
    "transpose", "row_norm", "left_bmm", "gather_rows",
];

/// Finite-difference check of one primitive over `trials` random shapes.
pub fn check_primitive(kind: &str, trials: u64, seed: u64) -> Result<CheckResult> {
    let mut parts = Vec::new();
    for trial in 0..trials {
        let mut rng = rng_for(seed ^ trial, kind);
        let (prim, inputs) = primitive_case(kind, &mut rng, trial);
        let res = check_inputs(kind, &inputs, |tape, vars| {
            let out = tape.apply(prim.clone(), vars)?;
            random_projection(tape, out, trial)
        })?;
        parts.push((res.checked, res.max_rel_error));
    }
    Ok(merge(&format!("primitive/{kind}"), TOL_F64, parts))
}

pub fn check_all_primitives(trials: u64, seed: u64) -> Result<Vec<CheckResult>> {
    PRIMITIVES.iter().map(|k| check_primitive(k, trials, seed)).collect()
}

/// 32-bit analytic input gradients of one primitive against 64-bit central
/// differences at the same rounded inputs.
pub fn check_primitive_f32(kind: &str, trials: u64, seed: u64) -> Result<CheckResult> {
    let mut parts = Vec::new();
    for trial in 0..trials {
        let mut rng = rng_for(seed ^ trial, kind);
        let (prim, inputs) = primitive_case(kind, &mut rng, trial);
        let rounded: Vec<Tensor<f64>> = inputs.iter().map(|t| t.cast::<f32>().cast()).collect();
        let mut tape = Tape::<f32>::new();
        let vars = rounded.iter().map(|t| tape.leaf(t.cast(), true)).collect::<Result<Vec<_>>>()?;
        let out = tape.apply(prim.clone(), &vars)?;
        let loss = random_projection(&mut tape, out, trial)?;
        let grads = tape.backward(loss)?;
        let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| grads.wrt(v).iter().map(|&g| g as f64).collect()).collect();
        let numeric = numeric_inputs(&rounded, |t, v| {
            let out = t.apply(prim.clone(), v)?;
            random_projection(t, out, trial)
        })?;
        let worst = analytic
            .iter()
            .flatten()
            .zip(numeric.iter().flatten())
            .fold(0.0f64, |m, (&a, &n)| m.max(rel_error(a, n)));
        parts.push((numeric.iter().map(Vec::len).sum(), worst));
    }
    Ok(merge(&format!("primitive-f32/{kind}"), TOL_F32, parts))
}

fn numeric_inputs<F>(inputs: &[Tensor<f64>], f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = values.iter().map(|t| tape.constant(t.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out)[0])
    };
    let mut probe = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Vec::with_capacity(inputs[k].len());
        for i in 0..inputs[k].len() {
            let x = inputs[k].data()[i];
            g.push(numeric_derivative(x, |v| {
                probe[k].data_mut()[i] = v;
                eval(&probe)
            })?);
        }
        out.push(g);
    }
    Ok(out)
}

pub fn check_all_primitives_f32(trials: u64, seed: u64) -> Result<Vec<CheckResult>> {
    PRIMITIVES.iter().map(|k| check_primitive_f32(k, trials, seed)).collect()
}

/// Replaces exact zeros (bias initializations) with small signed values so
/// no ReLU input sits exactly on its kink at the check point.
pub fn jitter_zeros(store: &mut ParamStore<f64>, seed: u64) {
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for n in names {
        let mut rng = rng_for(seed, &format!("jitter.{n}"));
        for v in store.get_mut(&n).unwrap().data_mut() {
            if *v == 0.0 {
                *v = rng.gen_range(0.05..0.2) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
        }
    }
}

fn combine(name: &str, results: &[CheckResult]) -> CheckResult {
    let tol = results.iter().map(|r| r.tolerance).fold(f64::INFINITY, f64::min);
    merge(name, tol, results.iter().map(|r| (r.checked, r.max_rel_error)))
}

fn lstm_cell_check(seed: u64) -> Result<CheckResult> {
    let (b, input, hidden) = (2, 3, 4);
    let mut store = ParamStore::new();
    init_lstm(&mut store, "cell", input, hidden, seed)?;
    jitter_zeros(&mut store, seed);
    let mut rng = rng_for(seed, "lstm-cell");
    let inputs = vec![
        rand_tensor(&mut rng, &[b, input], -1.0, 1.0),
        rand_tensor(&mut rng, &[b, hidden], -1.0, 1.0),
        rand_tensor(&mut rng, &[b, hidden], -1.0, 1.0),
    ];
    let objective = |t: &mut Tape<f64>, s: &ParamStore<f64>, v: &[Var]| -> Result<Var> {
        let step = lstm_cell_step(t, s, "cell", v[0], v[1], v[2])?;
        let both = t.concat(&[step.h, step.c], 1)?;
        random_projection(t, both, seed)
    };
    let p = check_params("lstm-cell", &store, usize::MAX, seed, |t, s| {
        let v = inputs.iter().map(|x| t.constant(x.clone())).collect::<Result<Vec<_>>>()?;
        objective(t, s, &v)
    })?;
    let i = check_inputs("lstm-cell", &inputs, |t, v| objective(t, &store, v))?;
    Ok(combine("module/lstm-cell", &[p, i]))
}

fn gru_cell_check(seed: u64) -> Result<CheckResult> {
    let (b, input, hidden) = (2, 3, 4);
    let mut store = ParamStore::new();
    init_gru(&mut store, "cell", input, hidden, seed)?;
    jitter_zeros(&mut store, seed);
    let mut rng = rng_for(seed, "gru-cell");
    let inputs = vec![rand_tensor(&mut rng, &[b, input], -1.0, 1.0), rand_tensor(&mut rng, &[b, hidden], -1.0, 1.0)];
    let objective = |t: &mut Tape<f64>, s: &ParamStore<f64>, v: &[Var]| -> Result<Var> {
        let h = gru_cell_step(t, s, "cell", v[0], v[1])?;
        random_projection(t, h, seed)
    };
    let p = check_params("gru-cell", &store, usize::MAX, seed, |t, s| {
        let v = inputs.iter().map(|x| t.constant(x.clone())).collect::<Result<Vec<_>>>()?;
        objective(t, s, &v)
    })?;
    let i = check_inputs("gru-cell", &inputs, |t, v| objective(t, &store, v))?;
    Ok(combine("module/gru-cell", &[p, i]))
}

/// Stacked two-layer learner over length-5 sequences.
fn learner_check(cell: CellKind, seed: u64) -> Result<CheckResult> {
    let cfg = SequenceLearnerConfig { axis: Axis::Temporal, seq_len: 5, num_layers: 2, hidden: 4, input: 3, cell };
    let mut store = ParamStore::new();
    cfg.init(&mut store, "seq", seed)?;
    jitter_zeros(&mut store, seed);
    let mut rng = rng_for(seed, "learner");
    let x = rand_tensor(&mut rng, &[2 * cfg.seq_len, cfg.input], -1.0, 1.0);
    let p = check_params("learner", &store, 6, seed, |t, s| {
        let v = t.constant(x.clone())?;
        let out = run_learner(t, s, &cfg, "seq", v)?;
        random_projection(t, out, seed)
    })?;
    let i = check_inputs("learner", &[x.clone()], |t, v| {
        let out = run_learner(t, &store, &cfg, "seq", v[0])?;
        random_projection(t, out, seed)
    })?;
    let kind = match cell {
        CellKind::Lstm => "lstm",
        CellKind::Gru => "gru",
    };
    Ok(combine(&format!("module/{kind}-learner-len5"), &[p, i]))
}

fn normalization_check(seed: u64) -> Result<CheckResult> {
    let mut rng = rng_for(seed, "normalize");
    let raw = rand_tensor(&mut rng, &[6, 6], -2.0, 2.0);
    let learned = check_inputs("normalize", &[raw], |t, v| {
        let a = normalize_adjacency(t, v[0], true, LEARNED_EPS)?;
        random_projection(t, a, seed)
    })?;
    let pos = rand_tensor(&mut rng, &[6, 6], 0.2, 1.5);
    let fixed = check_inputs("normalize", &[pos], |t, v| {
        let a = normalize_adjacency(t, v[0], false, 0.0)?;
        random_projection(t, a, seed)
    })?;
    Ok(combine("module/adjacency-normalization", &[learned, fixed]))
}

fn graph_conv_check(seed: u64) -> Result<CheckResult> {
    let mut results = Vec::new();
    for (activation, adjacency) in [
        (Activation::Relu, AdjacencyMode::Learned),
        (Activation::Identity, AdjacencyMode::Learned),
        (Activation::Relu, AdjacencyMode::HandSkeleton),
    ] {
        let layer = GraphConvLayer { name: "gc".into(), nodes: JOINTS, fin: 3, fout: 4, activation, adjacency };
        let mut store = ParamStore::new();
        layer.init(&mut store, seed)?;
        let mut rng = rng_for(seed, "graph-conv");
        let x = rand_tensor(&mut rng, &[2, JOINTS, 3], -1.0, 1.0);
        results.push(check_params("graph-conv", &store, 12, seed, |t, s| {
            let v = t.constant(x.clone())?;
            let y = layer.forward(t, s, v)?;
            random_projection(t, y, seed)
        })?);
        results.push(check_inputs("graph-conv", &[x.clone()], |t, v| {
            let y = layer.forward(t, &store, v[0])?;
            random_projection(t, y, seed)
        })?);
    }
    Ok(combine("module/graph-conv", &results))
}

fn pool_unpool_check(seed: u64) -> Result<CheckResult> {
    let mut store = ParamStore::new();
    init_pool_pair(&mut store, "pool", "unpool", JOINTS, 10)?;
    let mut rng = rng_for(seed, "pool");
    let x = rand_tensor(&mut rng, &[2, JOINTS, 3], -1.0, 1.0);
    let objective = |t: &mut Tape<f64>, s: &ParamStore<f64>, v: Var| -> Result<Var> {
        let down = apply_node_map(t, s, "pool", v)?;
        let up = apply_node_map(t, s, "unpool", down)?;
        random_projection(t, up, seed)
    };
    let p = check_params("pool-unpool", &store, 16, seed, |t, s| {
        let v = t.constant(x.clone())?;
        objective(t, s, v)
    })?;
    let i = check_inputs("pool-unpool", &[x.clone()], |t, v| objective(t, &store, v[0]))?;
    Ok(combine("module/pool-unpool", &[p, i]))
}

fn tiny_lifter(kind: LifterKind) -> LifterConfig {
    LifterConfig { kind, widths: vec![4, 4, 4], gcn_width: 4, fc_widths: vec![6, 5, 6], ..LifterConfig::default() }
}

fn lifter_check(kind: LifterKind, seed: u64) -> Result<CheckResult> {
    let cfg = tiny_lifter(kind);
    let mut store = ParamStore::new();
    cfg.init(&mut store, "lifter", seed)?;
    jitter_zeros(&mut store, seed);
    let mut rng = rng_for(seed, "lifter");
    let w = rand_tensor(&mut rng, &[2, JOINTS, 2], -1.0, 1.0);
    let p = check_params("lifter", &store, 6, seed, |t, s| {
        let v = t.constant(w.clone())?;
        let y = cfg.lift(t, s, "lifter", v)?;
        random_projection(t, y, seed)
    })?;
    let i = check_inputs("lifter", &[w.clone()], |t, v| {
        let y = cfg.lift(t, &store, "lifter", v[0])?;
        random_projection(t, y, seed)
    })?;
    let name = match kind {
        LifterKind::UNet => "unet",
        LifterKind::AutoEnc => "autoenc",
        LifterKind::GcnOnly => "gcn-only",
    };
    Ok(combine(&format!("module/lifter-{name}"), &[p, i]))
}

/// Encoder, standardization included, on two 8×8 frames.
fn encoder_check(seed: u64) -> Result<CheckResult> {
    let cfg = EncoderConfig { resolution: 8, channels: vec![2, 3, 4], embedding: 5 };
    let mut store = ParamStore::new();
    cfg.init(&mut store, seed)?;
    jitter_zeros(&mut store, seed);
    let mut rng = rng_for(seed, "encoder");
    let frames = rand_tensor(&mut rng, &[2, 3, 8, 8], 0.0, 1.0);
    let p = check_params("encoder", &store, 6, seed, |t, s| {
        let v = t.constant(frames.clone())?;
        let e = cfg.encode(t, s, v)?;
        random_projection(t, e, seed)
    })?;
    let i = check_inputs("encoder", &[frames.clone()], |t, v| {
        let e = cfg.encode(t, &store, v[0])?;
        random_projection(t, e, seed)
    })?;
    Ok(combine("module/encoder-8x8", &[p, i]))
}

/// Two-view, three-frame 16×16 clip through a tiny model of `variant`.
pub fn tiny_model_config(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::for_variant(variant);
    c.views = 2;
    c.window = 3;
    c.encoder = EncoderConfig { resolution: 16, channels: vec![2, 3], embedding: 6 };
    c.hidden = 4;
    c.head_hidden = 5;
    c.surrogate_hidden = 5;
    c.lifter = LifterConfig { kind: c.lifter.kind, ..tiny_lifter(c.lifter.kind) };
    c
}

/// Training-mode forward pass on a fixed clip: a projection of the 2D output
/// plus the clip's 3D loss against fixed targets.
pub struct ClipObjective {
    pub config: ModelConfig,
    pub frames: Tensor<f64>,
    pub gt3d: Tensor<f64>,
    pub dropout_seed: u64,
}

impl ClipObjective {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let rows = config.views * config.window;
        let res = config.encoder.resolution;
        let mut rng = rng_for(seed, "clip-objective");
        ClipObjective {
            frames: rand_tensor(&mut rng, &[rows, 3, res, res], 0.0, 1.0),
            gt3d: rand_tensor(&mut rng, &[rows, JOINTS, 3], -50.0, 450.0),
            dropout_seed: seed,
            config,
        }
    }
}

impl Objective for ClipObjective {
    fn build<S: Real>(&self, tape: &mut Tape<S>, store: &ParamStore<S>) -> Result<Var> {
        let model = Model { config: self.config.clone(), store: store.clone() };
        let frames = tape.constant(self.frames.cast())?;
        let out = model.forward_frames(tape, frames, Mode::train(self.dropout_seed))?;
        let p2 = random_projection(tape, out.pose2d, self.dropout_seed)?;
        let gt = tape.constant(self.gt3d.cast())?;
        let l3 = loss_stage2(tape, out.pose3d, gt, self.config.views * self.config.window)?;
        tape.add(p2, l3)
    }
}

fn model_check(variant: Variant, seed: u64) -> Result<CheckResult> {
    let cfg = tiny_model_config(variant);
    let mut model = Model::<f64>::new(cfg.clone(), seed)?;
    jitter_zeros(&mut model.store, seed);
    let obj = ClipObjective::new(cfg, seed);
    let mut r = check_params("model", &model.store, 3, seed, |t, s| obj.build(t, s))?;
    r.name = format!("model/{}", variant.name());
    Ok(r)
}

fn model_check_f32(variant: Variant, seed: u64) -> Result<CheckResult> {
    let cfg = tiny_model_config(variant);
    let mut model = Model::<f64>::new(cfg.clone(), seed)?;
    jitter_zeros(&mut model.store, seed);
    let obj = ClipObjective::new(cfg, seed);
    let mut r = check_params_f32("model", &model.store, 3, seed, &obj)?;
    r.name = format!("model-f32/{}", variant.name());
    Ok(r)
}

/// Cells, learners, graph layers, lifters, the encoder and every model
/// variant, in 64-bit, plus the full model in 32-bit.
pub fn check_all_modules(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        lstm_cell_check(seed)?,
        gru_cell_check(seed)?,
        learner_check(CellKind::Lstm, seed)?,
        learner_check(CellKind::Gru, seed)?,
        normalization_check(seed)?,
        graph_conv_check(seed)?,
        pool_unpool_check(seed)?,
        lifter_check(LifterKind::UNet, seed)?,
        lifter_check(LifterKind::AutoEnc, seed)?,
        lifter_check(LifterKind::GcnOnly, seed)?,
        encoder_check(seed)?,
    ];
    for v in Variant::ALL {
        out.push(model_check(v, seed)?);
    }
    out.push(model_check_f32(Variant::Full, seed)?);
    Ok(out)
}

/// Every primitive at both precisions over `trials` shapes, then every module.
pub fn check_everything(trials: u64, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = check_all_primitives(trials, seed)?;
    out.extend(check_all_primitives_f32(trials, seed)?);
    out.extend(check_all_modules(seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_passes_on_twenty_shapes() {
        for res in check_all_primitives(20, 11).unwrap() {
            assert!(res.passed(), "{} max rel error {}", res.name, res.max_rel_error);
            assert!(res.checked > 0);
        }
    }

    #[test]
    fn every_primitive_passes_in_f32() {
        for res in check_all_primitives_f32(5, 12).unwrap() {
            assert!(res.passed(), "{} max rel error {}", res.name, res.max_rel_error);
        }
    }

    #[test]
    fn every_module_passes() {
        let results = check_all_modules(3).unwrap();
        assert_eq!(results.len(), 11 + Variant::ALL.len() + 1);
        for res in results {
            assert!(res.passed(), "{} max rel error {}", res.name, res.max_rel_error);
            assert!(res.checked > 0, "{}", res.name);
        }
    }

    #[test]
    fn a_wrong_gradient_is_detected() {
        // The analytic pass sees sum(x); the numeric pass (constant inputs) sees 2·sum(x).
        let x = Tensor::from_f64(&[3], &[0.5, -0.2, 1.0]).unwrap();
        let res = check_inputs("mismatch", &[x], |tape, v| {
            let s = tape.sum(v[0])?;
            if tape.requires_grad(v[0]) {
                Ok(s)
            } else {
                tape.scale(s, 2.0)
            }
        })
        .unwrap();
        assert!(!res.passed());
    }
}
