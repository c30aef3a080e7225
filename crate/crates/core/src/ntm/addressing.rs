//! Head addressing and memory access, both on the tape and as plain tensor
//! functions. The tensor versions run the tape versions on a throwaway tape.

use crate::model::{ModelError, Result};
use crate::tensor::{Tape, Tensor, Var};

/// `softmax(beta · cos(k, M_i))` over rows.
pub fn content_address_on(tape: &Tape, memory: Var, key: Var, beta: Var) -> Result<Var> {
    let sims = tape.cosine_rows(memory, key)?;
    Ok(tape.softmax(tape.scale_by(beta, sims)?)?)
}

/// `g·w_c + (1−g)·w_prev`.
pub fn interpolate_on(tape: &Tape, w_c: Var, w_prev: Var, g: Var) -> Result<Var> {
    let keep = tape.affine(g, -1.0, 1.0)?;
    Ok(tape.add(tape.scale_by(g, w_c)?, tape.scale_by(keep, w_prev)?)?)
}

/// Circular convolution with a 3-way shift distribution over offsets −1, 0, +1.
pub fn shift_on(tape: &Tape, w_g: Var, s: Var) -> Result<Var> {
    Ok(tape.circular_convolve(w_g, s)?)
}

/// `w_s^gamma` renormalised.
pub fn sharpen_on(tape: &Tape, w_s: Var, gamma: Var) -> Result<Var> {
    if tape.value_ref(w_s).data().iter().all(|&v| v <= 0.0) {
        return Err(ModelError::Addressing("cannot sharpen an all-zero weighting".into()));
    }
    let p = tape.power(w_s, gamma)?;
    let total = tape.sum(p)?;
    if tape.scalar(total) <= 0.0 {
        return Err(ModelError::Addressing("sharpened weighting underflowed to zero".into()));
    }
    Ok(tape.div_by(p, total)?)
}

/// Full addressing cycle: content, interpolation, shift, sharpening.
pub fn address_on(tape: &Tape, memory: Var, w_prev: Var, p: &HeadParams) -> Result<Var> {
    let w_c = content_address_on(tape, memory, p.key, p.beta)?;
    let w_g = interpolate_on(tape, w_c, w_prev, p.gate)?;
    let w_s = shift_on(tape, w_g, p.shift)?;
    sharpen_on(tape, w_s, p.gamma)
}

/// `Σ_i w_i·M_i`.
pub fn read_on(tape: &Tape, memory: Var, w: Var) -> Result<Var> {
    Ok(tape.vecmat(w, memory)?)
}

/// `M_i ⊙ (1 − w_i·e) + w_i·a`.
pub fn write_on(tape: &Tape, memory: Var, w: Var, erase: Var, add: Var) -> Result<Var> {
    let keep = tape.affine(tape.outer(w, erase)?, -1.0, 1.0)?;
    Ok(tape.add(tape.mul(memory, keep)?, tape.outer(w, add)?)?)
}

/// Addressing parameters of one head, already squashed into their ranges.
#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub key: Var,
    pub beta: Var,
    pub gate: Var,
    pub shift: Var,
    pub gamma: Var,
}

fn run1(input: &[&Tensor], f: impl FnOnce(&Tape, &[Var]) -> Result<Var>) -> Result<Tensor> {
    let tape = Tape::new();
    let vars: Vec<Var> = input.iter().map(|t| tape.leaf((*t).clone())).collect();
    let out = f(&tape, &vars)?;
    Ok(tape.value(out))
}

pub fn content_address(memory: &Tensor, key: &Tensor, beta: f64) -> Result<Tensor> {
    if beta < 0.0 {
        return Err(ModelError::Addressing("key strength must be non-negative".into()));
    }
    let b = Tensor::scalar(beta);
    run1(&[memory, key, &b], |t, v| content_address_on(t, v[0], v[1], v[2]))
}

pub fn interpolate(w_c: &Tensor, w_prev: &Tensor, g: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&g) {
        return Err(ModelError::Addressing("gate must lie in [0, 1]".into()));
    }
    let g = Tensor::scalar(g);
    run1(&[w_c, w_prev, &g], |t, v| interpolate_on(t, v[0], v[1], v[2]))
}

pub fn shift(w_g: &Tensor, s: &Tensor) -> Result<Tensor> {
    run1(&[w_g, s], |t, v| shift_on(t, v[0], v[1]))
}

pub fn sharpen(w_s: &Tensor, gamma: f64) -> Result<Tensor> {
    if gamma < 1.0 {
        return Err(ModelError::Addressing("sharpening exponent must be at least 1".into()));
    }
    let g = Tensor::scalar(gamma);
    run1(&[w_s, &g], |t, v| sharpen_on(t, v[0], v[1]))
}

pub fn read(memory: &Tensor, w: &Tensor) -> Result<Tensor> {
    run1(&[memory, w], |t, v| read_on(t, v[0], v[1]))
}

pub fn write(memory: &Tensor, w: &Tensor, erase: &Tensor, add: &Tensor) -> Result<Tensor> {
    run1(&[memory, w, erase, add], |t, v| write_on(t, v[0], v[1], v[2], v[3]))
}
