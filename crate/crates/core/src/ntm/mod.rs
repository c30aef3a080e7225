//! Neural Turing Machine with one read and one write head over an `N × W`
//! memory, driven by an LSTM controller. The final step's output is a
//! distribution over the answer vocabulary.

pub mod addressing;

use crate::corpus::PAD;
use crate::model::{as_training, ModelError, Result};
use crate::nn::{init_params, minimize, Embedding, LayerSpec, Linear, LstmCell, ParamStore, RecurrentState, TrainSettings};
use crate::tensor::{Tape, Tensor, Var};

use addressing::{address_on, read_on, write_on, HeadParams};

/// Constant every memory cell starts from.
pub const MEMORY_INIT: f64 = 1e-6;

const SHIFTS: usize = 3;
/// key, beta, gate, shift, gamma.
const fn head_width(w: usize) -> usize {
    w + 3 + SHIFTS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NtmLoss {
    /// Softmax cross-entropy on the single answer word.
    Softmax,
    /// Independent sigmoid per answer word, for multi-word answers.
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NtmConfig {
    pub vocab_size: usize,
    pub answer_size: usize,
    pub embed_dim: usize,
    pub controller_dim: usize,
    pub memory_rows: usize,
    pub memory_width: usize,
    pub loss: NtmLoss,
    /// Relative threshold for multi-word answers.
    pub threshold: f64,
    pub seed: u64,
}

impl NtmConfig {
    pub fn new(vocab_size: usize, answer_size: usize) -> Self {
        NtmConfig {
            vocab_size,
            answer_size,
            embed_dim: 32,
            controller_dim: 64,
            memory_rows: 64,
            memory_width: 20,
            loss: NtmLoss::Softmax,
            threshold: 0.5,
            seed: 1,
        }
    }
}

/// Addressing parameters and resulting weighting of one head at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadState {
    pub w: Tensor,
    pub k: Tensor,
    pub beta: f64,
    pub g: f64,
    pub s: Tensor,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NtmState {
    pub controller: RecurrentState,
    pub memory: Tensor,
    pub read_w: Tensor,
    pub write_w: Tensor,
    pub last_read: Tensor,
}

#[derive(Clone, Copy, Debug)]
struct TapeState {
    h: Var,
    c: Var,
    memory: Var,
    read_w: Var,
    write_w: Var,
    last_read: Var,
}

#[derive(Clone, Copy, Debug)]
struct StepHeads {
    read: HeadParams,
    write: HeadParams,
}

#[derive(Clone, Debug)]
pub struct Ntm {
    cfg: NtmConfig,
    store: ParamStore,
    embed: Embedding,
    controller: LstmCell,
    read_head: Linear,
    write_head: Linear,
    out: Linear,
}

impl Ntm {
    pub fn param_specs(cfg: &NtmConfig) -> Vec<LayerSpec> {
        let (e, h, w) = (cfg.embed_dim, cfg.controller_dim, cfg.memory_width);
        vec![
            LayerSpec::embedding("embed", cfg.vocab_size, e),
            LayerSpec::lstm("controller", e + w, h),
            LayerSpec::linear("read_head", h, head_width(w)),
            LayerSpec::linear("write_head", h, head_width(w) + 2 * w),
            LayerSpec::linear("out", h + w, cfg.answer_size),
        ]
    }

    pub fn new(cfg: NtmConfig) -> Result<Self> {
        if cfg.answer_size == 0 {
            return Err(ModelError::Config("answer vocabulary is empty".into()));
        }
        if cfg.memory_rows < SHIFTS {
            return Err(ModelError::Config(format!("memory needs at least {SHIFTS} rows")));
        }
        if !(cfg.threshold > 0.0 && cfg.threshold <= 1.0) {
            return Err(ModelError::Config("threshold must lie in (0, 1]".into()));
        }
        let store = init_params(&Self::param_specs(&cfg), cfg.seed)?;
        Self::from_store(cfg, store)
    }

    pub fn from_store(cfg: NtmConfig, store: ParamStore) -> Result<Self> {
        Ok(Ntm {
            embed: Embedding::bind(&store, "embed")?,
            controller: LstmCell::bind(&store, "controller")?,
            read_head: Linear::bind(&store, "read_head")?,
            write_head: Linear::bind(&store, "write_head")?,
            out: Linear::bind(&store, "out")?,
            cfg,
            store,
        })
    }

    pub fn config(&self) -> &NtmConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Fresh state: constant memory, both heads on row 0, zero read vector.
    pub fn initial_state(&self) -> NtmState {
        let (n, w) = (self.cfg.memory_rows, self.cfg.memory_width);
        let mut one_hot = Tensor::zeros(&[n]);
        one_hot.data_mut()[0] = 1.0;
        NtmState {
            controller: RecurrentState::zeros_lstm(self.cfg.controller_dim),
            memory: Tensor::filled(&[n, w], MEMORY_INIT),
            read_w: one_hot.clone(),
            write_w: one_hot,
            last_read: Tensor::zeros(&[w]),
        }
    }

    fn load_state(tape: &Tape, st: &NtmState) -> TapeState {
        TapeState {
            h: tape.leaf(st.controller.hidden.clone()),
            c: tape.leaf(
                st.controller
                    .cell
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(st.controller.hidden.shape())),
            ),
            memory: tape.leaf(st.memory.clone()),
            read_w: tape.leaf(st.read_w.clone()),
            write_w: tape.leaf(st.write_w.clone()),
            last_read: tape.leaf(st.last_read.clone()),
        }
    }

    fn head_params(&self, tape: &Tape, raw: Var) -> Result<HeadParams> {
        let w = self.cfg.memory_width;
        Ok(HeadParams {
            key: tape.tanh(tape.slice(raw, 0, w)?)?,
            beta: tape.softplus(tape.slice(raw, w, 1)?)?,
            gate: tape.sigmoid(tape.slice(raw, w + 1, 1)?)?,
            shift: tape.softmax(tape.slice(raw, w + 2, SHIFTS)?)?,
            gamma: tape.affine(tape.softplus(tape.slice(raw, w + 2 + SHIFTS, 1)?)?, 1.0, 1.0)?,
        })
    }

    fn step_on(&self, tape: &Tape, token: usize, st: TapeState) -> Result<(Var, TapeState, StepHeads)> {
        if token >= self.cfg.vocab_size {
            return Err(ModelError::Vocabulary(format!("token ID {token} outside vocabulary")));
        }
        let store = &self.store;
        let w = self.cfg.memory_width;
        let x = tape.concat(&[self.embed.lookup(tape, store, token)?, st.last_read])?;
        let (h, c) = self.controller.step(tape, store, x, st.h, st.c)?;

        let raw_w = self.write_head.forward(tape, store, h)?;
        let write = self.head_params(tape, raw_w)?;
        let hw = head_width(w);
        let erase = tape.sigmoid(tape.slice(raw_w, hw, w)?)?;
        let add = tape.tanh(tape.slice(raw_w, hw + w, w)?)?;
        let write_w = address_on(tape, st.memory, st.write_w, &write)?;
        let memory = write_on(tape, st.memory, write_w, erase, add)?;

        let read = self.head_params(tape, self.read_head.forward(tape, store, h)?)?;
        let read_w = address_on(tape, memory, st.read_w, &read)?;
        let r = read_on(tape, memory, read_w)?;

        let logits = self.out.forward(tape, store, tape.concat(&[h, r])?)?;
        let next = TapeState {
            h,
            c,
            memory,
            read_w,
            write_w,
            last_read: r,
        };
        Ok((logits, next, StepHeads { read, write }))
    }

    /// Runs the whole sequence from a fresh state and returns the final logits.
    /// PAD tokens are skipped.
    fn run_on(&self, tape: &Tape, ids: &[usize]) -> Result<Var> {
        let mut st = Self::load_state(tape, &self.initial_state());
        let mut logits = None;
        for &t in ids.iter().filter(|&&t| t != PAD) {
            let (l, next, _) = self.step_on(tape, t, st)?;
            logits = Some(l);
            st = next;
        }
        logits.ok_or_else(|| ModelError::Data("empty input sequence".into()))
    }

    /// One step from an explicit state. Returns the logits, the next state and
    /// the (read, write) head states.
    pub fn ntm_step(&self, token: usize, state: &NtmState) -> Result<(Tensor, NtmState, [HeadState; 2])> {
        let tape = Tape::new();
        let st = Self::load_state(&tape, state);
        let (logits, next, heads) = self.step_on(&tape, token, st)?;
        let head = |p: &HeadParams, w: Var| HeadState {
            w: tape.value(w),
            k: tape.value(p.key),
            beta: tape.scalar(p.beta),
            g: tape.scalar(p.gate),
            s: tape.value(p.shift),
            gamma: tape.scalar(p.gamma),
        };
        let heads = [head(&heads.read, next.read_w), head(&heads.write, next.write_w)];
        let state = NtmState {
            controller: RecurrentState {
                hidden: tape.value(next.h),
                cell: Some(tape.value(next.c)),
            },
            memory: tape.value(next.memory),
            read_w: tape.value(next.read_w),
            write_w: tape.value(next.write_w),
            last_read: tape.value(next.last_read),
        };
        Ok((tape.value(logits), state, heads))
    }

    /// Loss for one story: `answers` are answer-vocabulary indices.
    pub fn loss_on(&self, tape: &Tape, ids: &[usize], answers: &[usize]) -> Result<Var> {
        Ok(self.objective_on(tape, ids, answers)?.0)
    }

    /// Loss and final logits.
    fn objective_on(&self, tape: &Tape, ids: &[usize], answers: &[usize]) -> Result<(Var, Var)> {
        if answers.is_empty() {
            return Err(ModelError::Data("story has no answer".into()));
        }
        if let Some(&bad) = answers.iter().find(|&&a| a >= self.cfg.answer_size) {
            return Err(ModelError::Vocabulary(format!("answer index {bad} outside answer vocabulary")));
        }
        let logits = self.run_on(tape, ids)?;
        match self.cfg.loss {
            NtmLoss::Softmax => {
                if answers.len() != 1 {
                    return Err(ModelError::Data("softmax loss needs exactly one answer".into()));
                }
                Ok((tape.cross_entropy(logits, answers[0])?, logits))
            }
            NtmLoss::Binary => {
                let mut targets = vec![0.0; self.cfg.answer_size];
                for &a in answers {
                    targets[a] = 1.0;
                }
                Ok((tape.bce_with_logits(logits, &targets)?, logits))
            }
        }
    }

    pub fn loss(&self, ids: &[usize], answers: &[usize]) -> Result<f64> {
        let tape = Tape::new();
        let l = self.loss_on(&tape, ids, answers)?;
        Ok(tape.scalar(l))
    }

    /// One Adam step. Returns the loss and the answer distribution, both
    /// from before the update.
    pub fn train_step(
        &mut self,
        ids: &[usize],
        answers: &[usize],
        settings: &TrainSettings,
    ) -> Result<(f64, Vec<f64>)> {
        let tape = Tape::new();
        let (loss, logits) = self.objective_on(&tape, ids, answers).map_err(as_training)?;
        let mut dist = tape.value(logits).into_data();
        crate::tensor::softmax_in_place(&mut dist);
        let value = minimize(&mut self.store, &tape, loss, settings).map_err(|e| as_training(e.into()))?;
        Ok((value, dist))
    }

    /// Softmax over the final logits.
    pub fn distribution(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let logits = self.run_on(&tape, ids)?;
        Ok(tape.value(tape.softmax(logits)?).into_data())
    }

    /// Answer indices for a sequence, in ascending index order.
    pub fn answer(&self, ids: &[usize], n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(ModelError::Config("n must be at least 1".into()));
        }
        Ok(select_answers(&self.distribution(ids)?, n, self.cfg.threshold))
    }
}

/// Indices with probability at least `tau` times the maximum, the `n` most
/// probable kept (ties to the lowest index), returned in ascending order.
pub fn select_answers(probs: &[f64], n: usize, tau: f64) -> Vec<usize> {
    let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ranked: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] >= tau * max).collect();
    ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    ranked.truncate(n);
    ranked.sort_unstable();
    ranked
}
