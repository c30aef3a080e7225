//! Attention-based encoder-decoder.
//!
//! A bidirectional GRU reads the encoded passage and question; a GRU decoder
//! attends over the concatenated annotations at every output step and emits
//! answer tokens until EOS.

use crate::corpus::{BOS, EOS, PAD};
use crate::model::{argmax, as_training, ModelError, Result};
use crate::nn::{init_params, minimize, Embedding, GruCell, LayerSpec, Linear, ParamId, ParamStore, TrainSettings};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmtConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub seed: u64,
}

impl NmtConfig {
    pub fn new(vocab_size: usize) -> Self {
        NmtConfig {
            vocab_size,
            embed_dim: 32,
            hidden_dim: 48,
            attention_dim: 32,
            seed: 1,
        }
    }
}

/// Per-position `[forward; backward]` encoder states.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderAnnotations {
    /// `[T × 2H]`.
    pub h: Tensor,
    pub token_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionContext {
    pub alpha: Tensor,
    pub c: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub s: Tensor,
    pub y_prev: usize,
}

/// Tape handles for one encoded input.
#[derive(Clone, Debug)]
pub struct TapeAnnotations {
    /// `[T × 2H]` annotation matrix.
    pub h: Var,
    /// `[T × A]` key projections `U·h_j`.
    pub keys: Var,
    /// Initial decoder state.
    pub s0: Var,
}

#[derive(Clone, Debug)]
pub struct Nmt {
    cfg: NmtConfig,
    store: ParamStore,
    enc_embed: Embedding,
    dec_embed: Embedding,
    fwd: GruCell,
    bwd: GruCell,
    init: Linear,
    att_w: ParamId,
    att_u: ParamId,
    att_v: ParamId,
    dec: GruCell,
    out: Linear,
}

impl Nmt {
    pub fn param_specs(cfg: &NmtConfig) -> Vec<LayerSpec> {
        let (v, e, h, a) = (cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.attention_dim);
        vec![
            LayerSpec::embedding("enc_embed", v, e),
            LayerSpec::embedding("dec_embed", v, e),
            LayerSpec::gru("enc_fwd", e, h),
            LayerSpec::gru("enc_bwd", e, h),
            LayerSpec::linear("dec_init", h, h),
            LayerSpec::matrix("att.w", h, a),
            LayerSpec::matrix("att.u", 2 * h, a),
            LayerSpec::uniform_vector("att.v", a),
            LayerSpec::gru("dec", e + 2 * h, h),
            LayerSpec::linear("out", h + e + 2 * h, v),
        ]
    }

    pub fn new(cfg: NmtConfig) -> Result<Self> {
        if cfg.vocab_size <= EOS {
            return Err(ModelError::Config("vocabulary must include the markers".into()));
        }
        let store = init_params(&Self::param_specs(&cfg), cfg.seed)?;
        Self::from_store(cfg, store)
    }

    pub fn from_store(cfg: NmtConfig, store: ParamStore) -> Result<Self> {
        Ok(Nmt {
            enc_embed: Embedding::bind(&store, "enc_embed")?,
            dec_embed: Embedding::bind(&store, "dec_embed")?,
            fwd: GruCell::bind(&store, "enc_fwd")?,
            bwd: GruCell::bind(&store, "enc_bwd")?,
            init: Linear::bind(&store, "dec_init")?,
            att_w: store.id("att.w")?,
            att_u: store.id("att.u")?,
            att_v: store.id("att.v")?,
            dec: GruCell::bind(&store, "dec")?,
            out: Linear::bind(&store, "out")?,
            cfg,
            store,
        })
    }

    pub fn config(&self) -> &NmtConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_ids(&self, ids: &[usize]) -> Result<Vec<usize>> {
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.cfg.vocab_size) {
            return Err(ModelError::Vocabulary(format!("token ID {bad} outside vocabulary")));
        }
        let kept: Vec<usize> = ids.iter().copied().filter(|&t| t != PAD).collect();
        if kept.is_empty() {
            return Err(ModelError::Data("empty input sequence".into()));
        }
        Ok(kept)
    }

    /// Runs both encoder directions. PAD tokens are skipped.
    pub fn encode_on(&self, tape: &Tape, ids: &[usize]) -> Result<TapeAnnotations> {
        let ids = self.check_ids(ids)?;
        let st = &self.store;
        let hdim = self.cfg.hidden_dim;
        let embeds: Vec<Var> = ids
            .iter()
            .map(|&t| self.enc_embed.lookup(tape, st, t))
            .collect::<std::result::Result<_, _>>()?;

        let mut h = tape.leaf(Tensor::zeros(&[hdim]));
        let mut fwd = Vec::with_capacity(ids.len());
        for &x in &embeds {
            h = self.fwd.step(tape, st, x, h)?;
            fwd.push(h);
        }
        let mut h = tape.leaf(Tensor::zeros(&[hdim]));
        let mut bwd = vec![h; ids.len()];
        for j in (0..ids.len()).rev() {
            h = self.bwd.step(tape, st, embeds[j], h)?;
            bwd[j] = h;
        }
        let rows: Vec<Var> = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat(&[f, b]))
            .collect::<std::result::Result<_, _>>()?;
        let ann = tape.stack(&rows)?;
        let keys = tape.matmul(ann, st.var(tape, self.att_u))?;
        let s0 = tape.tanh(self.init.forward(tape, st, bwd[0])?)?;
        Ok(TapeAnnotations { h: ann, keys, s0 })
    }

    /// Returns `(alpha, c)` for decoder state `s_prev`.
    pub fn attend_on(&self, tape: &Tape, s_prev: Var, keys: Var, values: Var) -> Result<(Var, Var)> {
        let ws = tape.vecmat(s_prev, self.store.var(tape, self.att_w))?;
        let e = tape.tanh(tape.add_rows(keys, ws)?)?;
        let scores = tape.matvec(e, self.store.var(tape, self.att_v))?;
        let alpha = tape.softmax(scores)?;
        let c = tape.vecmat(alpha, values)?;
        Ok((alpha, c))
    }

    /// One decoder step: returns the new state and the output logits.
    pub fn step_on(&self, tape: &Tape, s_prev: Var, y_prev: usize, c: Var) -> Result<(Var, Var)> {
        let st = &self.store;
        let y = self.dec_embed.lookup(tape, st, y_prev)?;
        let s = self.dec.step(tape, st, tape.concat(&[y, c])?, s_prev)?;
        let logits = self.out.forward(tape, st, tape.concat(&[s, y, c])?)?;
        Ok((s, logits))
    }

    /// Teacher-forced summed cross-entropy. Also returns whether the argmax at
    /// every position matched the target.
    pub fn loss_on(&self, tape: &Tape, input: &[usize], target: &[usize]) -> Result<(Var, bool)> {
        if target.last() != Some(&EOS) {
            return Err(ModelError::Data("target must end with EOS".into()));
        }
        if let Some(&bad) = target.iter().find(|&&t| t >= self.cfg.vocab_size) {
            return Err(ModelError::Vocabulary(format!("token ID {bad} outside vocabulary")));
        }
        let ann = self.encode_on(tape, input)?;
        let mut s = ann.s0;
        let mut y_prev = BOS;
        let mut terms = Vec::with_capacity(target.len());
        let mut exact = true;
        for &y in target {
            let (_, c) = self.attend_on(tape, s, ann.keys, ann.h)?;
            let (s_next, logits) = self.step_on(tape, s, y_prev, c)?;
            exact &= argmax(tape.value_ref(logits).data()) == y;
            terms.push(tape.cross_entropy(logits, y)?);
            s = s_next;
            y_prev = y;
        }
        let total = tape.sum(tape.concat(&terms)?)?;
        Ok((total, exact))
    }

    /// One Adam step on a single sample. Returns the loss before the update
    /// and whether teacher-forced argmax decoding was exact.
    pub fn train_step(&mut self, input: &[usize], target: &[usize], settings: &TrainSettings) -> Result<(f64, bool)> {
        let tape = Tape::new();
        let (loss, exact) = self.loss_on(&tape, input, target).map_err(as_training)?;
        let value = minimize(&mut self.store, &tape, loss, settings).map_err(|e| as_training(e.into()))?;
        Ok((value, exact))
    }

    pub fn loss(&self, input: &[usize], target: &[usize]) -> Result<f64> {
        let tape = Tape::new();
        let (loss, _) = self.loss_on(&tape, input, target)?;
        Ok(tape.scalar(loss))
    }

    /// Greedy decoding from BOS until EOS or `max_len` tokens. PAD and BOS
    /// are never emitted; EOS is not included in the output.
    pub fn generate(&self, input: &[usize], max_len: usize) -> Result<Vec<usize>> {
        if max_len == 0 {
            return Err(ModelError::Config("max_len must be at least 1".into()));
        }
        let tape = Tape::new();
        let ann = self.encode_on(&tape, input)?;
        let mut s = ann.s0;
        let mut y_prev = BOS;
        let mut out = Vec::new();
        while out.len() < max_len {
            let (_, c) = self.attend_on(&tape, s, ann.keys, ann.h)?;
            let (s_next, logits) = self.step_on(&tape, s, y_prev, c)?;
            let mut scores = tape.value(logits).into_data();
            scores[PAD] = f64::NEG_INFINITY;
            scores[BOS] = f64::NEG_INFINITY;
            let y = argmax(&scores);
            if y == EOS {
                break;
            }
            out.push(y);
            s = s_next;
            y_prev = y;
        }
        Ok(out)
    }

    pub fn encode(&self, ids: &[usize]) -> Result<EncoderAnnotations> {
        let tape = Tape::new();
        let ann = self.encode_on(&tape, ids)?;
        Ok(EncoderAnnotations {
            h: tape.value(ann.h),
            token_ids: self.check_ids(ids)?,
        })
    }

    /// Initial decoder state for an input.
    pub fn initial_state(&self, ids: &[usize]) -> Result<DecoderState> {
        let tape = Tape::new();
        let ann = self.encode_on(&tape, ids)?;
        Ok(DecoderState {
            s: tape.value(ann.s0),
            y_prev: BOS,
        })
    }

    pub fn attend(&self, state: &DecoderState, ann: &EncoderAnnotations) -> Result<AttentionContext> {
        let tape = Tape::new();
        let h = tape.leaf(ann.h.clone());
        let keys = tape.matmul(h, self.store.var(&tape, self.att_u))?;
        let s = tape.leaf(state.s.clone());
        let (alpha, c) = self.attend_on(&tape, s, keys, h)?;
        Ok(AttentionContext {
            alpha: tape.value(alpha),
            c: tape.value(c),
        })
    }

    /// Attention with keys computed from `key_source` and the weighted sum
    /// taken over `values`.
    pub fn attend_split(&self, s_prev: &Tensor, key_source: &Tensor, values: &Tensor) -> Result<AttentionContext> {
        let tape = Tape::new();
        let keys = tape.matmul(tape.leaf(key_source.clone()), self.store.var(&tape, self.att_u))?;
        let (alpha, c) = self.attend_on(&tape, tape.leaf(s_prev.clone()), keys, tape.leaf(values.clone()))?;
        Ok(AttentionContext {
            alpha: tape.value(alpha),
            c: tape.value(c),
        })
    }

    /// Returns the new decoder state and the output distribution.
    pub fn decode_step(&self, state: &DecoderState, ctx: &AttentionContext) -> Result<(Tensor, Vec<f64>)> {
        if state.y_prev >= self.cfg.vocab_size {
            return Err(ModelError::Vocabulary(format!("token ID {} outside vocabulary", state.y_prev)));
        }
        let tape = Tape::new();
        let s = tape.leaf(state.s.clone());
        let c = tape.leaf(ctx.c.clone());
        let (s_next, logits) = self.step_on(&tape, s, state.y_prev, c)?;
        let dist = tape.value(tape.softmax(logits)?).into_data();
        Ok((tape.value(s_next), dist))
    }
}
