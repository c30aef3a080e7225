use super::{ParamId, ParamStore, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Affine map `W·x + b`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn bind(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Linear {
            w: store.id(&format!("{name}.w"))?,
            b: store.id(&format!("{name}.b"))?,
        })
    }

    pub fn forward(&self, tape: &Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let wx = tape.matvec(store.var(tape, self.w), x)?;
        Ok(tape.add(wx, store.var(tape, self.b))?)
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Embedding {
    table: ParamId,
}

impl Embedding {
    pub fn bind(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Embedding {
            table: store.id(&format!("{name}.table"))?,
        })
    }

    pub fn lookup(&self, tape: &Tape, store: &ParamStore, id: usize) -> Result<Var> {
        Ok(tape.gather(store.var(tape, self.table), id)?)
    }

    pub fn vocab(&self, store: &ParamStore) -> usize {
        store.get(self.table).rows()
    }
}

/// Hidden (and, for LSTM, cell) vectors carried between recurrent steps.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub hidden: Tensor,
    pub cell: Option<Tensor>,
}

impl RecurrentState {
    pub fn zeros_lstm(hidden: usize) -> Self {
        RecurrentState {
            hidden: Tensor::zeros(&[hidden]),
            cell: Some(Tensor::zeros(&[hidden])),
        }
    }

    pub fn zeros_gru(hidden: usize) -> Self {
        RecurrentState {
            hidden: Tensor::zeros(&[hidden]),
            cell: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    w: ParamId,
    b: ParamId,
    hidden: usize,
}

impl LstmCell {
    pub fn bind(store: &ParamStore, name: &str) -> Result<Self> {
        let w = store.id(&format!("{name}.w"))?;
        let b = store.id(&format!("{name}.b"))?;
        let hidden = store.get(b).numel() / 4;
        Ok(LstmCell { w, b, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step on the tape. Returns `(h', c')`.
    pub fn step(&self, tape: &Tape, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hs = self.hidden;
        let xh = tape.concat(&[x, h])?;
        let pre = tape.matvec(store.var(tape, self.w), xh)?;
        let pre = tape.add(pre, store.var(tape, self.b))?;
        let i = tape.sigmoid(tape.slice(pre, 0, hs)?)?;
        let f = tape.sigmoid(tape.slice(pre, hs, hs)?)?;
        let g = tape.tanh(tape.slice(pre, 2 * hs, hs)?)?;
        let o = tape.sigmoid(tape.slice(pre, 3 * hs, hs)?)?;
        let c_next = tape.add(tape.mul(f, c)?, tape.mul(i, g)?)?;
        let h_next = tape.mul(o, tape.tanh(c_next)?)?;
        Ok((h_next, c_next))
    }

    pub fn lstm_step(&self, store: &ParamStore, x: &Tensor, state: &RecurrentState) -> Result<RecurrentState> {
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let hv = tape.leaf(state.hidden.clone());
        let cell = state.cell.clone().unwrap_or_else(|| Tensor::zeros(&[self.hidden]));
        let cv = tape.leaf(cell);
        let (h, c) = self.step(&tape, store, xv, hv, cv)?;
        Ok(RecurrentState {
            hidden: tape.value(h),
            cell: Some(tape.value(c)),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    wx: ParamId,
    wh: ParamId,
    wn: ParamId,
    b: ParamId,
    hidden: usize,
}

impl GruCell {
    pub fn bind(store: &ParamStore, name: &str) -> Result<Self> {
        let b = store.id(&format!("{name}.b"))?;
        Ok(GruCell {
            wx: store.id(&format!("{name}.wx"))?,
            wh: store.id(&format!("{name}.wh"))?,
            wn: store.id(&format!("{name}.wn"))?,
            b,
            hidden: store.get(b).numel() / 3,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// `h' = (1 − z)⊙h + z⊙h̃` with update gate `z`, reset gate `r` and
    /// candidate `h̃ = tanh(W_n x + U_n (r⊙h) + b_n)`.
    pub fn step(&self, tape: &Tape, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden;
        let gx = tape.matvec(store.var(tape, self.wx), x)?;
        let gx = tape.add(gx, store.var(tape, self.b))?;
        let gh = tape.matvec(store.var(tape, self.wh), h)?;
        let z = tape.sigmoid(tape.add(tape.slice(gx, 0, hs)?, tape.slice(gh, 0, hs)?)?)?;
        let r = tape.sigmoid(tape.add(tape.slice(gx, hs, hs)?, tape.slice(gh, hs, hs)?)?)?;
        let rh = tape.mul(r, h)?;
        let cand_pre = tape.add(tape.slice(gx, 2 * hs, hs)?, tape.matvec(store.var(tape, self.wn), rh)?)?;
        let cand = tape.tanh(cand_pre)?;
        let delta = tape.mul(z, tape.sub(cand, h)?)?;
        Ok(tape.add(h, delta)?)
    }

    pub fn gru_step(&self, store: &ParamStore, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let hv = tape.leaf(h.clone());
        let out = self.step(&tape, store, xv, hv)?;
        Ok(tape.value(out))
    }
}
