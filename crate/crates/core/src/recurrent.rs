//! LSTM and GRU cells and the stacked sequence learners that run them along
//! the temporal (frames of one view) or angular (views at one instant) axis.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Real, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            _ => Err(Error::config(format!("unknown cell kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Temporal,
    Angular,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLearnerConfig {
    pub axis: Axis,
    pub seq_len: usize,
    pub num_layers: usize,
    pub hidden: usize,
    pub input: usize,
    pub cell: CellKind,
}

impl SequenceLearnerConfig {
    pub fn new(axis: Axis, seq_len: usize, input: usize) -> Self {
        SequenceLearnerConfig {
            axis,
            seq_len,
            num_layers: 2,
            hidden: 128,
            input,
            cell: CellKind::Lstm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.num_layers == 0 || self.hidden == 0 || self.input == 0 {
            return Err(Error::config(format!("invalid sequence learner config {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    pub fn init<S: Real>(&self, store: &mut ParamStore<S>, prefix: &str, seed: u64) -> Result<()> {
        self.validate()?;
        for layer in 0..self.num_layers {
            let p = format!("{prefix}.l{layer}");
            match self.cell {
                CellKind::Lstm => init_lstm(store, &p, self.layer_input(layer), self.hidden, seed)?,
                CellKind::Gru => init_gru(store, &p, self.layer_input(layer), self.hidden, seed)?,
            }
        }
        Ok(())
    }
}

const LSTM_GATES: [&str; 4] = ["r", "f", "o", "c"];
const GRU_GATES: [&str; 3] = ["update", "reset", "cand"];

/// Gate weight names: `w_{g}x` (`hidden × input`), `w_{g}h` (`hidden × hidden`), `b_{g}`.
pub fn init_lstm<S: Real>(store: &mut ParamStore<S>, prefix: &str, input: usize, hidden: usize, seed: u64) -> Result<()> {
    init_gates(store, prefix, &LSTM_GATES, input, hidden, seed)
}

pub fn init_gru<S: Real>(store: &mut ParamStore<S>, prefix: &str, input: usize, hidden: usize, seed: u64) -> Result<()> {
    init_gates(store, prefix, &GRU_GATES, input, hidden, seed)
}

fn init_gates<S: Real>(store: &mut ParamStore<S>, prefix: &str, gates: &[&str], input: usize, hidden: usize, seed: u64) -> Result<()> {
    for g in gates {
        store.init_uniform(&format!("{prefix}.w_{g}x"), &[hidden, input], input, seed)?;
        store.init_uniform(&format!("{prefix}.w_{g}h"), &[hidden, hidden], hidden, seed)?;
        store.init_zeros(&format!("{prefix}.b_{g}"), &[hidden])?;
    }
    Ok(())
}

/// Transposed gate weights bound on one tape, reused across every step.
struct GateWeights {
    wx_t: Var,
    wh_t: Var,
    b: Var,
}

fn bind_gate<S: Real>(tape: &mut Tape<S>, store: &ParamStore<S>, prefix: &str, g: &str) -> Result<GateWeights> {
    let wx = tape.param(store, &format!("{prefix}.w_{g}x"))?;
    let wh = tape.param(store, &format!("{prefix}.w_{g}h"))?;
    let b = tape.param(store, &format!("{prefix}.b_{g}"))?;
    Ok(GateWeights {
        wx_t: tape.transpose(wx)?,
        wh_t: tape.transpose(wh)?,
        b,
    })
}

/// Everything computed in one LSTM step, rows = batch.
#[derive(Debug, Clone, Copy)]
pub struct LstmStep {
    pub input_gate: Var,
    pub forget_gate: Var,
    pub output_gate: Var,
    pub candidate: Var,
    pub c: Var,
    pub h: Var,
}

fn gate_preact<S: Real>(tape: &mut Tape<S>, g: &GateWeights, x_part: Option<Var>, x: Var, h_prev: Var) -> Result<Var> {
    let xp = match x_part {
        Some(p) => p,
        None => {
            let xw = tape.matmul(x, g.wx_t)?;
            tape.add_bias(xw, g.b)?
        }
    };
    let hw = tape.matmul(h_prev, g.wh_t)?;
    tape.add(xp, hw)
}

fn check_step_shapes<S: Real>(tape: &Tape<S>, store: &ParamStore<S>, prefix: &str, gate: &str, x: Var, states: &[Var]) -> Result<()> {
    let wx = store
        .get(&format!("{prefix}.w_{gate}x"))
        .ok_or_else(|| Error::Contract(format!("missing cell parameters under `{prefix}`")))?;
    let (hidden, input) = (wx.shape()[0], wx.shape()[1]);
    let xs = tape.shape(x);
    if xs.len() != 2 || xs[1] != input {
        return Err(Error::dim("cell_step", format!("input {xs:?} vs cell input size {input}")));
    }
    for &s in states {
        let ss = tape.shape(s);
        if ss != [xs[0], hidden] {
            return Err(Error::dim("cell_step", format!("state {ss:?} vs [{}, {hidden}]", xs[0])));
        }
    }
    Ok(())
}

/// One LSTM step on a batch `x [B,input]`, `h_prev, c_prev [B,hidden]`.
pub fn lstm_cell_step<S: Real>(tape: &mut Tape<S>, store: &ParamStore<S>, prefix: &str, x: Var, h_prev: Var, c_prev: Var) -> Result<LstmStep> {
    check_step_shapes(tape, store, prefix, "r", x, &[h_prev, c_prev])?;
    let gates = LSTM_GATES
        .iter()
        .map(|g| bind_gate(tape, store, prefix, g))
        .collect::<Result<Vec<_>>>()?;
    lstm_step_bound(tape, &gates, [None; 4], x, h_prev, c_prev)
}

fn lstm_step_bound<S: Real>(tape: &mut Tape<S>, gates: &[GateWeights], x_parts: [Option<Var>; 4], x: Var, h_prev: Var, c_prev: Var) -> Result<LstmStep> {
    let r = gate_preact(tape, &gates[0], x_parts[0], x, h_prev)?;
    let r = tape.sigmoid(r)?;
    let f = gate_preact(tape, &gates[1], x_parts[1], x, h_prev)?;
    let f = tape.sigmoid(f)?;
    let o = gate_preact(tape, &gates[2], x_parts[2], x, h_prev)?;
    let o = tape.sigmoid(o)?;
    let cand = gate_preact(tape, &gates[3], x_parts[3], x, h_prev)?;
    let cand = tape.tanh(cand)?;
    let rc = tape.mul(r, cand)?;
    let fc = tape.mul(f, c_prev)?;
    let c = tape.add(rc, fc)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmStep {
        input_gate: r,
        forget_gate: f,
        output_gate: o,
        candidate: cand,
        c,
        h,
    })
}

/// One GRU step; returns the new hidden state.
///
/// `h = z ⊙ h_prev + (1 − z) ⊙ n` with `n = tanh(W_n x + r ⊙ (U_n h_prev) + b_n)`.
pub fn gru_cell_step<S: Real>(tape: &mut Tape<S>, store: &ParamStore<S>, prefix: &str, x: Var, h_prev: Var) -> Result<Var> {
    check_step_shapes(tape, store, prefix, "update", x, &[h_prev])?;
    let gates = GRU_GATES
        .iter()
        .map(|g| bind_gate(tape, store, prefix, g))
        .collect::<Result<Vec<_>>>()?;
    gru_step_bound(tape, &gates, [None; 3], x, h_prev)
}

fn gru_step_bound<S: Real>(tape: &mut Tape<S>, gates: &[GateWeights], x_parts: [Option<Var>; 3], x: Var, h_prev: Var) -> Result<Var> {
    let z = gate_preact(tape, &gates[0], x_parts[0], x, h_prev)?;
    let z = tape.sigmoid(z)?;
    let r = gate_preact(tape, &gates[1], x_parts[1], x, h_prev)?;
    let r = tape.sigmoid(r)?;
    let xn = match x_parts[2] {
        Some(p) => p,
        None => {
            let xw = tape.matmul(x, gates[2].wx_t)?;
            tape.add_bias(xw, gates[2].b)?
        }
    };
    let hn = tape.matmul(h_prev, gates[2].wh_t)?;
    let rhn = tape.mul(r, hn)?;
    let n = tape.add(xn, rhn)?;
    let n = tape.tanh(n)?;
    let keep = tape.mul(z, h_prev)?;
    let one_minus_z = tape.scale(z, -1.0)?;
    let one_minus_z = tape.add_scalar(one_minus_z, 1.0)?;
    let fresh = tape.mul(one_minus_z, n)?;
    tape.add(keep, fresh)
}

/// Runs a stacked learner over `sequences` sequences of `config.seq_len`
/// positions. `inputs` is `[sequences·seq_len, input]`, rows ordered
/// sequence-major; the output has the same row order with width `hidden`.
/// Initial states are zero.
pub fn run_learner<S: Real>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    config: &SequenceLearnerConfig,
    prefix: &str,
    inputs: Var,
) -> Result<Var> {
    config.validate()?;
    let shape = tape.shape(inputs).to_vec();
    let len = config.seq_len;
    if shape.len() != 2 || shape[1] != config.input {
        return Err(Error::dim(
            "run_learner",
            format!("inputs {shape:?} vs input size {}", config.input),
        ));
    }
    if shape[0] == 0 {
        return Err(Error::Contract("run_learner on an empty sequence".into()));
    }
    if shape[0] % len != 0 {
        return Err(Error::dim(
            "run_learner",
            format!("{} rows is not a multiple of sequence length {len}", shape[0]),
        ));
    }
    let nseq = shape[0] / len;
    let mut layer_in = inputs;
    for layer in 0..config.num_layers {
        let p = format!("{prefix}.l{layer}");
        let names: &[&str] = match config.cell {
            CellKind::Lstm => &LSTM_GATES,
            CellKind::Gru => &GRU_GATES,
        };
        let gates = names
            .iter()
            .map(|g| bind_gate(tape, store, &p, g))
            .collect::<Result<Vec<_>>>()?;
        // input contributions for every position at once
        let x_all = gates
            .iter()
            .map(|g| {
                let xw = tape.matmul(layer_in, g.wx_t)?;
                tape.add_bias(xw, g.b)
            })
            .collect::<Result<Vec<_>>>()?;
        let zeros = tape.constant(crate::tensor::Tensor::zeros(&[nseq, config.hidden]))?;
        let (mut h, mut c) = (zeros, zeros);
        let mut outs = Vec::with_capacity(len);
        for k in 0..len {
            let rows: Vec<usize> = (0..nseq).map(|s| s * len + k).collect();
            let parts = x_all
                .iter()
                .map(|&xa| tape.gather_rows(xa, rows.clone()))
                .collect::<Result<Vec<_>>>()?;
            match config.cell {
                CellKind::Lstm => {
                    let st = lstm_step_bound(tape, &gates, [Some(parts[0]), Some(parts[1]), Some(parts[2]), Some(parts[3])], layer_in, h, c)?;
                    h = st.h;
                    c = st.c;
                }
                CellKind::Gru => {
                    h = gru_step_bound(tape, &gates, [Some(parts[0]), Some(parts[1]), Some(parts[2])], layer_in, h)?;
                }
            }
            outs.push(h);
        }
        // rows come out position-major; restore sequence-major order
        let stacked = tape.concat(&outs, 0)?;
        let order: Vec<usize> = (0..nseq * len).map(|r| (r % len) * nseq + r / len).collect();
        layer_in = tape.gather_rows(stacked, order)?;
    }
    Ok(layer_in)
}
