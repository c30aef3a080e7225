//! Memory Network split into a supporting-fact searcher (MemNN-S) and an
//! answer-word responder (MemNN-R).
//!
//! Inputs are bags of words placed in one of three blocks of a `3·|V|`
//! feature vector: the question, facts already selected, and the candidate
//! being scored. Both halves score pairs as `(U·x)ᵀ(U·y)` and train with a
//! margin ranking loss against every wrong candidate.

use crate::corpus::{Story, Vocabulary};
use crate::model::{argmax, as_training, ModelError, Result};
use crate::nn::{init_params, minimize, LayerSpec, ParamId, ParamStore, TrainSettings};
use crate::tensor::{Tape, Tensor, Var};

/// Number of distinct recency buckets; older facts share the last bucket.
pub const AGE_BUCKETS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Question,
    Selected,
    Candidate,
}

impl Region {
    fn offset(self, vocab_size: usize) -> usize {
        match self {
            Region::Question => 0,
            Region::Selected => vocab_size,
            Region::Candidate => 2 * vocab_size,
        }
    }
}

/// Bag-of-words counts in the block for `region`.
pub fn phi(tokens: &[usize], region: Region, vocab_size: usize) -> Result<Tensor> {
    let mut out = Tensor::zeros(&[3 * vocab_size]);
    let off = region.offset(vocab_size);
    for &t in tokens {
        if t >= vocab_size {
            return Err(ModelError::Vocabulary(format!("token ID {t} outside vocabulary")));
        }
        out.data_mut()[off + t] += 1.0;
    }
    Ok(out)
}

/// `(U·x)ᵀ(U·y)`.
pub fn score(x: &Tensor, y: &Tensor, u: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let uv = tape.leaf(u.clone());
    let ux = tape.matvec(uv, tape.leaf(x.clone()))?;
    let uy = tape.matvec(uv, tape.leaf(y.clone()))?;
    Ok(tape.scalar(tape.dot(ux, uy)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub id: u32,
    pub tokens: Vec<usize>,
}

/// One slot per statement, appended in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactMemory {
    slots: Vec<Slot>,
}

impl FactMemory {
    pub fn new() -> Self {
        FactMemory { slots: Vec::new() }
    }

    pub fn write(&mut self, id: u32, tokens: Vec<usize>) -> Result<()> {
        if let Some(last) = self.slots.last() {
            if id <= last.id {
                return Err(ModelError::Data(format!("fact {id} does not follow fact {}", last.id)));
            }
        }
        self.slots.push(Slot { id, tokens });
        Ok(())
    }

    pub fn from_story(story: &Story, vocab: &Vocabulary) -> Result<Self> {
        let mut m = FactMemory::new();
        for st in &story.statements {
            m.write(st.id, vocab.encode_tokens(&st.tokens)?)?;
        }
        Ok(m)
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn position(&self, id: u32) -> Option<usize> {
        self.slots.iter().position(|s| s.id == id)
    }

    /// Recency bucket of slot `i`: 0 for the newest fact.
    pub fn age(&self, i: usize) -> usize {
        (self.slots.len() - 1 - i).min(AGE_BUCKETS - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Selected fact IDs in hop order.
    pub ids: Vec<u32>,
    /// Score of the winning candidate at each hop, including a final STOP.
    pub scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemnnConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub margin: f64,
    pub max_hops: usize,
    pub seed: u64,
}

impl MemnnConfig {
    pub fn new(vocab_size: usize) -> Self {
        MemnnConfig {
            vocab_size,
            embed_dim: 32,
            margin: 0.1,
            max_hops: 3,
            seed: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.max_hops == 0 {
            return Err(ModelError::Config("vocab_size, embed_dim and max_hops must be positive".into()));
        }
        if !(self.margin > 0.0) {
            return Err(ModelError::Config("margin must be positive".into()));
        }
        Ok(())
    }
}

/// `Σ max(0, γ − s_gold + s_neg)` over `negatives`, all indices into `scores`.
fn hinge_on(tape: &Tape, scores: Var, gold: usize, negatives: &[usize], margin: f64) -> Result<Option<Var>> {
    if negatives.is_empty() {
        return Ok(None);
    }
    let g = tape.slice(scores, gold, 1)?;
    let terms: Vec<Var> = negatives
        .iter()
        .map(|&n| {
            let gap = tape.sub(tape.slice(scores, n, 1)?, g)?;
            tape.relu(tape.affine(gap, 1.0, margin)?)
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(Some(tape.sum(tape.concat(&terms)?)?))
}

fn total(tape: &Tape, parts: Vec<Var>) -> Result<Var> {
    if parts.is_empty() {
        return Ok(tape.leaf(Tensor::scalar(0.0)));
    }
    Ok(tape.sum(tape.concat(&parts)?)?)
}

/// Supporting-fact searcher.
#[derive(Clone, Debug)]
pub struct MemnnS {
    cfg: MemnnConfig,
    store: ParamStore,
    u: ParamId,
    stop: ParamId,
    age_bias: ParamId,
}

impl MemnnS {
    pub fn param_specs(cfg: &MemnnConfig) -> Vec<LayerSpec> {
        vec![
            LayerSpec::matrix("u_o", cfg.embed_dim, 3 * cfg.vocab_size),
            LayerSpec::uniform_vector("u_stop", cfg.embed_dim),
            LayerSpec::vector("age_bias", AGE_BUCKETS),
        ]
    }

    pub fn new(cfg: MemnnConfig) -> Result<Self> {
        cfg.validate()?;
        let store = init_params(&Self::param_specs(&cfg), cfg.seed)?;
        Self::from_store(cfg, store)
    }

    pub fn from_store(cfg: MemnnConfig, store: ParamStore) -> Result<Self> {
        Ok(MemnnS {
            u: store.id("u_o")?,
            stop: store.id("u_stop")?,
            age_bias: store.id("age_bias")?,
            cfg,
            store,
        })
    }

    pub fn config(&self) -> &MemnnConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Scores of every slot followed by the STOP score, for a query made of
    /// the question and the already selected slots.
    fn scores_on(&self, tape: &Tape, question: &[usize], memory: &FactMemory, selected: &[usize]) -> Result<Var> {
        let v = self.cfg.vocab_size;
        let u = self.store.var(tape, self.u);
        let mut x = phi(question, Region::Question, v)?;
        for &i in selected {
            let f = phi(&memory.slots[i].tokens, Region::Selected, v)?;
            x.data_mut().iter_mut().zip(f.data()).for_each(|(a, b)| *a += b);
        }
        let ux = tape.matvec(u, tape.leaf(x))?;
        let rows: Vec<Var> = memory
            .slots
            .iter()
            .map(|s| tape.matvec(u, tape.leaf(phi(&s.tokens, Region::Candidate, v)?)).map_err(ModelError::from))
            .collect::<Result<_>>()?;
        let content = tape.matvec(tape.stack(&rows)?, ux)?;
        let mut ages = Tensor::zeros(&[memory.len(), AGE_BUCKETS]);
        for i in 0..memory.len() {
            ages.data_mut()[i * AGE_BUCKETS + memory.age(i)] = 1.0;
        }
        let bias = tape.matvec(tape.leaf(ages), self.store.var(tape, self.age_bias))?;
        let facts = tape.add(content, bias)?;
        let stop = tape.dot(ux, self.store.var(tape, self.stop))?;
        Ok(tape.concat(&[facts, stop])?)
    }

    /// Ranking loss over the hops of a gold chain, followed by a STOP hop
    /// when the chain is shorter than `max_hops`.
    pub fn loss_on(&self, tape: &Tape, question: &[usize], memory: &FactMemory, gold: &[u32]) -> Result<Var> {
        if memory.is_empty() {
            return Err(ModelError::Search("empty memory".into()));
        }
        if gold.is_empty() || gold.len() > self.cfg.max_hops {
            return Err(ModelError::Data(format!(
                "gold chain of length {} does not fit {} hops",
                gold.len(),
                self.cfg.max_hops
            )));
        }
        let gold_pos: Vec<usize> = gold
            .iter()
            .map(|&id| {
                memory
                    .position(id)
                    .ok_or_else(|| ModelError::Data(format!("gold fact {id} is not in memory")))
            })
            .collect::<Result<_>>()?;
        let n = memory.len();
        let stop = n;
        let mut parts = Vec::new();
        for hop in 0..=gold_pos.len() {
            if hop == self.cfg.max_hops {
                break;
            }
            let selected = &gold_pos[..hop];
            let scores = self.scores_on(tape, question, memory, selected)?;
            let mut candidates: Vec<usize> = (0..n).filter(|i| !selected.contains(i)).collect();
            if hop > 0 {
                candidates.push(stop);
            }
            let target = gold_pos.get(hop).copied().unwrap_or(stop);
            let negatives: Vec<usize> = candidates.into_iter().filter(|&c| c != target).collect();
            if let Some(h) = hinge_on(tape, scores, target, &negatives, self.cfg.margin)? {
                parts.push(h);
            }
        }
        total(tape, parts)
    }

    pub fn loss(&self, question: &[usize], memory: &FactMemory, gold: &[u32]) -> Result<f64> {
        let tape = Tape::new();
        let l = self.loss_on(&tape, question, memory, gold)?;
        Ok(tape.scalar(l))
    }

    pub fn train_step(
        &mut self,
        question: &[usize],
        memory: &FactMemory,
        gold: &[u32],
        settings: &TrainSettings,
    ) -> Result<f64> {
        let tape = Tape::new();
        let loss = self.loss_on(&tape, question, memory, gold).map_err(as_training)?;
        minimize(&mut self.store, &tape, loss, settings).map_err(|e| as_training(e.into()))
    }

    /// Greedy hop-by-hop selection. From the second hop on a STOP candidate
    /// competes with the remaining facts; ties go to the earliest fact, and a
    /// fact tied with STOP wins.
    pub fn search_facts(&self, question: &[usize], memory: &FactMemory, max_hops: usize) -> Result<SearchResult> {
        if memory.is_empty() {
            return Err(ModelError::Search("empty memory".into()));
        }
        if max_hops == 0 {
            return Err(ModelError::Config("max_hops must be at least 1".into()));
        }
        let n = memory.len();
        let mut selected: Vec<usize> = Vec::new();
        let mut scores_out = Vec::new();
        for hop in 0..max_hops {
            if selected.len() == n {
                break;
            }
            let tape = Tape::new();
            let scores = tape.value(self.scores_on(&tape, question, memory, &selected)?).into_data();
            let mut masked = scores.clone();
            for &i in &selected {
                masked[i] = f64::NEG_INFINITY;
            }
            if hop == 0 {
                masked[n] = f64::NEG_INFINITY;
            }
            let best = argmax(&masked);
            scores_out.push(masked[best]);
            if best == n {
                break;
            }
            selected.push(best);
        }
        Ok(SearchResult {
            ids: selected.iter().map(|&i| memory.slots[i].id).collect(),
            scores: scores_out,
        })
    }

    /// Softmax over the first-hop fact scores.
    pub fn predict_support_probability(&self, question: &[usize], memory: &FactMemory) -> Result<Vec<f64>> {
        if memory.is_empty() {
            return Err(ModelError::Search("empty memory".into()));
        }
        let tape = Tape::new();
        let scores = self.scores_on(&tape, question, memory, &[])?;
        let facts = tape.slice(scores, 0, memory.len())?;
        Ok(tape.value(tape.softmax(facts)?).into_data())
    }
}

/// Answer-word responder.
#[derive(Clone, Debug)]
pub struct MemnnR {
    cfg: MemnnConfig,
    store: ParamStore,
    u: ParamId,
    answer_ids: Vec<usize>,
}

impl MemnnR {
    pub fn param_specs(cfg: &MemnnConfig) -> Vec<LayerSpec> {
        vec![LayerSpec::matrix("u_r", cfg.embed_dim, 3 * cfg.vocab_size)]
    }

    /// `answer_ids` are the vocabulary IDs of the candidate answer words, in
    /// answer-index order.
    pub fn new(cfg: MemnnConfig, answer_ids: Vec<usize>) -> Result<Self> {
        cfg.validate()?;
        let store = init_params(&Self::param_specs(&cfg), cfg.seed)?;
        Self::from_store(cfg, store, answer_ids)
    }

    pub fn from_store(cfg: MemnnConfig, store: ParamStore, answer_ids: Vec<usize>) -> Result<Self> {
        if answer_ids.is_empty() {
            return Err(ModelError::Config("answer vocabulary is empty".into()));
        }
        if let Some(&bad) = answer_ids.iter().find(|&&a| a >= cfg.vocab_size) {
            return Err(ModelError::Vocabulary(format!("answer token {bad} outside vocabulary")));
        }
        Ok(MemnnR {
            u: store.id("u_r")?,
            cfg,
            store,
            answer_ids,
        })
    }

    pub fn config(&self) -> &MemnnConfig {
        &self.cfg
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn scores_on(&self, tape: &Tape, question: &[usize], facts: &[Vec<usize>]) -> Result<Var> {
        if facts.is_empty() {
            return Err(ModelError::Data("responder needs at least one fact".into()));
        }
        let v = self.cfg.vocab_size;
        let u = self.store.var(tape, self.u);
        let mut x = phi(question, Region::Question, v)?;
        for f in facts {
            let p = phi(f, Region::Selected, v)?;
            x.data_mut().iter_mut().zip(p.data()).for_each(|(a, b)| *a += b);
        }
        let ux = tape.matvec(u, tape.leaf(x))?;
        let rows: Vec<Var> = self
            .answer_ids
            .iter()
            .map(|&w| tape.matvec(u, tape.leaf(phi(&[w], Region::Candidate, v)?)).map_err(ModelError::from))
            .collect::<Result<_>>()?;
        Ok(tape.matvec(tape.stack(&rows)?, ux)?)
    }

    pub fn loss_on(&self, tape: &Tape, question: &[usize], facts: &[Vec<usize>], answer: usize) -> Result<Var> {
        if answer >= self.answer_ids.len() {
            return Err(ModelError::Vocabulary(format!("answer index {answer} outside answer vocabulary")));
        }
        let scores = self.scores_on(tape, question, facts)?;
        let negatives: Vec<usize> = (0..self.answer_ids.len()).filter(|&a| a != answer).collect();
        let parts = hinge_on(tape, scores, answer, &negatives, self.cfg.margin)?;
        total(tape, parts.into_iter().collect())
    }

    pub fn loss(&self, question: &[usize], facts: &[Vec<usize>], answer: usize) -> Result<f64> {
        let tape = Tape::new();
        let l = self.loss_on(&tape, question, facts, answer)?;
        Ok(tape.scalar(l))
    }

    pub fn train_step(
        &mut self,
        question: &[usize],
        facts: &[Vec<usize>],
        answer: usize,
        settings: &TrainSettings,
    ) -> Result<f64> {
        let tape = Tape::new();
        let loss = self.loss_on(&tape, question, facts, answer).map_err(as_training)?;
        minimize(&mut self.store, &tape, loss, settings).map_err(|e| as_training(e.into()))
    }

    /// Answer index with the highest score; ties go to the lowest index.
    pub fn respond(&self, question: &[usize], facts: &[Vec<usize>]) -> Result<usize> {
        let tape = Tape::new();
        let scores = self.scores_on(&tape, question, facts)?;
        let best = argmax(tape.value_ref(scores).data());
        Ok(best)
    }
}
