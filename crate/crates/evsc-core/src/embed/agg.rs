//! Sequence aggregators that collapse per-frame state rows into one motion
//! embedding: a parameter-free temporal mean, or a single-layer LSTM whose
//! final hidden state is the embedding.

use crate::tensor::{ParamStore, Tape, TensorId, TensorResult};

use super::{EmbedError, EmbedResult};

/// How a per-frame state sequence is collapsed to a single vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggMode {
    Mean,
    Lstm,
}

impl AggMode {
    pub fn name(self) -> &'static str {
        match self {
            AggMode::Mean => "mean",
            AggMode::Lstm => "lstm",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mean" => Some(AggMode::Mean),
            "lstm" => Some(AggMode::Lstm),
            _ => None,
        }
    }
}

/// Registers LSTM parameters for one aggregator instance. Input and hidden
/// widths are both `dim`, so the gate blocks stack to `[dim, 4 * dim]`.
pub fn register_lstm_params(store: &mut ParamStore, prefix: &str, dim: usize) -> TensorResult<()> {
    store.init_xavier(&format!("{prefix}.w_ih"), dim, 4 * dim)?;
    store.init_xavier(&format!("{prefix}.w_hh"), dim, 4 * dim)?;
    store.init_zeros(&format!("{prefix}.b"), vec![4 * dim])?;
    Ok(())
}

/// One aggregator slot: a mode plus the parameter prefix its LSTM weights
/// live under (unused in mean mode).
#[derive(Debug, Clone)]
pub struct Aggregator {
    pub mode: AggMode,
    pub prefix: String,
}

impl Aggregator {
    pub fn new(mode: AggMode, prefix: impl Into<String>) -> Self {
        Aggregator {
            mode,
            prefix: prefix.into(),
        }
    }

    /// Collapses `states` of shape `[T, D]` to `[1, D]`.
    pub fn apply(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        states: TensorId,
    ) -> EmbedResult<TensorId> {
        let shape = tape.shape(states).to_vec();
        if shape.len() != 2 || shape[0] == 0 {
            return Err(EmbedError::EmptySeq);
        }
        match self.mode {
            AggMode::Mean => {
                let mean = tape.mean_axis(states, 0)?;
                Ok(tape.reshape(mean, vec![1, shape[1]])?)
            }
            AggMode::Lstm => self.run_lstm(tape, store, states, shape[0], shape[1]),
        }
    }

    fn run_lstm(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        states: TensorId,
        steps: usize,
        dim: usize,
    ) -> EmbedResult<TensorId> {
        let w_ih = tape.param(store, &format!("{}.w_ih", self.prefix))?;
        let w_hh = tape.param(store, &format!("{}.w_hh", self.prefix))?;
        let bias = tape.param(store, &format!("{}.b", self.prefix))?;
        let mut h = tape.constant(vec![1, dim], vec![0.0; dim])?;
        let mut c = tape.constant(vec![1, dim], vec![0.0; dim])?;
        for t in 0..steps {
            let x = tape.slice(states, 0, t, 1)?;
            let xz = tape.matmul(x, w_ih)?;
            let hz = tape.matmul(h, w_hh)?;
            let z = tape.add(xz, hz)?;
            let z = tape.add(z, bias)?;
            let zi = tape.slice(z, 1, 0, dim)?;
            let zf = tape.slice(z, 1, dim, dim)?;
            let zg = tape.slice(z, 1, 2 * dim, dim)?;
            let zo = tape.slice(z, 1, 3 * dim, dim)?;
            let gate_i = tape.sigmoid(zi)?;
            let gate_f = tape.sigmoid(zf)?;
            let gate_g = tape.tanh(zg)?;
            let gate_o = tape.sigmoid(zo)?;
            let keep = tape.mul(gate_f, c)?;
            let write = tape.mul(gate_i, gate_g)?;
            c = tape.add(keep, write)?;
            let squashed = tape.tanh(c)?;
            h = tape.mul(gate_o, squashed)?;
        }
        Ok(h)
    }
}
