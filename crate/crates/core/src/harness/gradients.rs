use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Result;
use crate::corpus::EOS;
use crate::gradcheck::{check_params, primitive_suite, CheckResult};
use crate::memnn::{FactMemory, MemnnConfig, MemnnR, MemnnS};
use crate::model::ModelError;
use crate::nmt::{Nmt, NmtConfig};
use crate::nn::{init_params, GruCell, LayerSpec, LstmCell, ParamStore};
use crate::ntm::{Ntm, NtmConfig, NtmLoss};
use crate::tensor::Tensor;

fn randomized(specs: &[LayerSpec], seed: u64) -> Result<ParamStore> {
    let mut store = init_params(specs, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    Ok(store)
}

fn named(name: &str, err: f64) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        trials: 1,
        max_rel_error: err,
    }
}

fn lstm_check(seed: u64) -> Result<f64> {
    let store = randomized(&[LayerSpec::lstm("ctl", 3, 4)], seed)?;
    let cell = LstmCell::bind(&store, "ctl")?;
    Ok(check_params(&store, |tape, store| -> std::result::Result<_, ModelError> {
        let mut h = tape.leaf(Tensor::zeros(&[4]));
        let mut c = tape.leaf(Tensor::zeros(&[4]));
        for x in [[0.5, -1.0, 0.2], [1.5, 0.3, -0.7], [-0.2, 0.9, 1.1]] {
            let xv = tape.leaf(Tensor::vector(x.to_vec()));
            (h, c) = cell.step(tape, store, xv, h, c)?;
        }
        let both = tape.concat(&[h, c])?;
        let dir = tape.leaf(Tensor::vector(vec![1.0, -2.0, 0.5, 1.5, -1.0, 0.3, 0.7, -0.4]));
        Ok(tape.dot(both, dir)?)
    })?)
}

fn gru_check(seed: u64) -> Result<f64> {
    let store = randomized(&[LayerSpec::gru("enc", 3, 4)], seed)?;
    let cell = GruCell::bind(&store, "enc")?;
    Ok(check_params(&store, |tape, store| -> std::result::Result<_, ModelError> {
        let mut h = tape.leaf(Tensor::zeros(&[4]));
        for x in [[0.3, -0.8, 1.2], [-1.0, 0.5, 0.1], [0.4, 0.4, -0.9]] {
            let xv = tape.leaf(Tensor::vector(x.to_vec()));
            h = cell.step(tape, store, xv, h)?;
        }
        let dir = tape.leaf(Tensor::vector(vec![1.0, -0.5, 2.0, 0.7]));
        Ok(tape.dot(h, dir)?)
    })?)
}

fn nmt_check(seed: u64) -> Result<f64> {
    let m = Nmt::new(NmtConfig {
        vocab_size: 12,
        embed_dim: 4,
        hidden_dim: 5,
        attention_dim: 3,
        seed,
    })?;
    let (input, target) = ([7, 8, 9, 3, 10, 11], [9, EOS]);
    Ok(check_params(m.store(), |tape, store| {
        let model = Nmt::from_store(*m.config(), store.clone())?;
        Ok::<_, ModelError>(model.loss_on(tape, &input, &target)?.0)
    })?)
}

fn ntm_check(loss: NtmLoss, seed: u64) -> Result<f64> {
    let m = Ntm::new(NtmConfig {
        vocab_size: 10,
        answer_size: 4,
        embed_dim: 4,
        controller_dim: 5,
        memory_rows: 8,
        memory_width: 6,
        loss,
        threshold: 0.5,
        seed,
    })?;
    let answers: &[usize] = if loss == NtmLoss::Softmax { &[2] } else { &[1, 3] };
    Ok(check_params(m.store(), |tape, store| {
        Ntm::from_store(*m.config(), store.clone())?.loss_on(tape, &[7, 8, 9, 3, 6], answers)
    })?)
}

fn memnn_checks(seed: u64) -> Result<(f64, f64)> {
    let cfg = MemnnConfig {
        vocab_size: 8,
        embed_dim: 6,
        margin: 0.1,
        max_hops: 3,
        seed,
    };
    let mut mem = FactMemory::new();
    for (i, tokens) in [vec![3, 4], vec![5, 6, 4], vec![7, 3], vec![6]].into_iter().enumerate() {
        mem.write(i as u32 + 1, tokens)?;
    }
    let s = MemnnS::new(cfg)?;
    let search = check_params(s.store(), |tape, store| {
        MemnnS::from_store(cfg, store.clone())?.loss_on(tape, &[3, 5], &mem, &[3, 2])
    })?;
    let r = MemnnR::new(cfg, vec![4, 5, 6])?;
    let respond = check_params(r.store(), |tape, store| {
        MemnnR::from_store(cfg, store.clone(), vec![4, 5, 6])?.loss_on(tape, &[3, 7], &[vec![5, 6]], 1)
    })?;
    Ok((search, respond))
}

/// Finite-difference checks of every tape primitive (`trials` random cases
/// each) followed by the recurrent cells and each full model's loss.
pub fn gradient_suite(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = primitive_suite(trials, seed).map_err(ModelError::from)?;
    out.push(named("lstm (3 steps)", lstm_check(seed)?));
    out.push(named("gru (3 steps)", gru_check(seed)?));
    out.push(named("nmt (6-token passage)", nmt_check(seed)?));
    out.push(named("ntm softmax (5 steps)", ntm_check(NtmLoss::Softmax, seed)?));
    out.push(named("ntm binary (5 steps)", ntm_check(NtmLoss::Binary, seed)?));
    let (search, respond) = memnn_checks(seed)?;
    out.push(named("memnn_s hinge", search));
    out.push(named("memnn_r hinge", respond));
    Ok(out)
}
