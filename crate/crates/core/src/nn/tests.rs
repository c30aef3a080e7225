use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradcheck::check_params;

fn lstm_store(input: usize, hidden: usize, seed: u64) -> ParamStore {
    init_params(&[LayerSpec::lstm("ctl", input, hidden)], seed).unwrap()
}

fn gru_store(input: usize, hidden: usize, seed: u64) -> ParamStore {
    init_params(&[LayerSpec::gru("enc", input, hidden)], seed).unwrap()
}

fn randomize(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
}

#[test]
fn init_is_deterministic() {
    let specs = [
        LayerSpec::embedding("emb", 10, 4),
        LayerSpec::lstm("ctl", 4, 3),
        LayerSpec::linear("out", 3, 5),
    ];
    let a = init_params(&specs, 42).unwrap();
    let b = init_params(&specs, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, init_params(&specs, 43).unwrap());
}

#[test]
fn biases_are_zero_except_forget_gate() {
    let store = init_params(&[LayerSpec::lstm("ctl", 2, 3), LayerSpec::linear("out", 3, 2)], 0).unwrap();
    let b = store.by_name("ctl.b").unwrap().data().to_vec();
    assert_eq!(b, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(store.by_name("out.b").unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_dimension_is_rejected() {
    let err = init_params(&[LayerSpec::linear("out", 0, 2)], 0).unwrap_err();
    assert!(matches!(err, NnError::Config(_)));
}

#[test]
fn duplicate_names_are_rejected() {
    let err = init_params(&[LayerSpec::vector("v", 2), LayerSpec::vector("v", 2)], 0).unwrap_err();
    assert!(matches!(err, NnError::Config(_)));
}

#[test]
fn glorot_sample_statistics() {
    let store = init_params(&[LayerSpec::matrix("m", 100, 100)], 9).unwrap();
    let w = store.by_name("m").unwrap();
    let limit = glorot_limit(100, 100);
    assert!(w.data().iter().all(|v| v.abs() <= limit));
    let mean = w.sum() / w.numel() as f64;
    let sigma = limit / 3f64.sqrt();
    assert!(mean.abs() < 3.0 * sigma / 100.0, "mean {mean}");
}

#[test]
fn lstm_all_zero_case() {
    let mut store = lstm_store(3, 2, 0);
    let w = store.id("ctl.w").unwrap();
    store.get_mut(w).data_mut().fill(0.0);
    let cell = LstmCell::bind(&store, "ctl").unwrap();
    let next = cell
        .lstm_step(&store, &Tensor::zeros(&[3]), &RecurrentState::zeros_lstm(2))
        .unwrap();
    // i = o = 0.5, f = sigmoid(1), g = tanh(0) = 0, so c' = f*0 + 0.5*0 = 0.
    assert_eq!(next.cell.unwrap().data(), &[0.0, 0.0]);
    assert_eq!(next.hidden.data(), &[0.0, 0.0]);
}

#[test]
fn lstm_saturated_gates_carry_memory() {
    let mut store = lstm_store(2, 2, 0);
    let w = store.id("ctl.w").unwrap();
    store.get_mut(w).data_mut().fill(0.0);
    let b = store.id("ctl.b").unwrap();
    // input gate -> 0, forget gate -> 1
    store.get_mut(b).data_mut().copy_from_slice(&[-60.0, -60.0, 60.0, 60.0, 0.3, 0.3, 0.0, 0.0]);
    let cell = LstmCell::bind(&store, "ctl").unwrap();
    let state = RecurrentState {
        hidden: Tensor::vector(vec![0.2, -0.4]),
        cell: Some(Tensor::vector(vec![0.7, -1.3])),
    };
    let next = cell.lstm_step(&store, &Tensor::vector(vec![1.0, -1.0]), &state).unwrap();
    let c = next.cell.unwrap();
    assert!(c.max_abs_diff(&Tensor::vector(vec![0.7, -1.3])) < 1e-15);
    assert!(next.hidden.data().iter().all(|h| h.abs() <= 1.0));
}

#[test]
fn lstm_shape_mismatch_is_dimension_error() {
    let store = lstm_store(3, 2, 0);
    let cell = LstmCell::bind(&store, "ctl").unwrap();
    let err = cell
        .lstm_step(&store, &Tensor::zeros(&[4]), &RecurrentState::zeros_lstm(2))
        .unwrap_err();
    assert!(matches!(err, NnError::Tensor(crate::tensor::TensorError::Dimension { .. })));
}

#[test]
fn lstm_three_steps_match_finite_differences() {
    let mut store = lstm_store(3, 4, 1);
    randomize(&mut store, 2);
    let cell = LstmCell::bind(&store, "ctl").unwrap();
    let xs = [vec![0.5, -1.0, 0.2], vec![1.5, 0.3, -0.7], vec![-0.2, 0.9, 1.1]];
    let err = check_params(&store, |tape, store| -> Result<_> {
        let mut h = tape.leaf(Tensor::zeros(&[4]));
        let mut c = tape.leaf(Tensor::vector(vec![0.1, -0.2, 0.3, 0.0]));
        for x in &xs {
            let xv = tape.leaf(Tensor::vector(x.clone()));
            (h, c) = cell.step(tape, store, xv, h, c)?;
        }
        let both = tape.concat(&[h, c])?;
        let dir = tape.leaf(Tensor::vector(vec![1.0, -2.0, 0.5, 1.5, -1.0, 0.3, 0.7, -0.4]));
        Ok(tape.dot(both, dir)?)
    })
    .unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn gru_update_gate_extremes() {
    let mut store = gru_store(2, 3, 4);
    randomize(&mut store, 5);
    let b = store.id("enc.b").unwrap();
    let wx = store.id("enc.wx").unwrap();
    let wh = store.id("enc.wh").unwrap();
    // Zero the update-gate rows so that z is set by its bias alone.
    for r in 0..3 {
        for c in 0..2 {
            store.get_mut(wx).data_mut()[r * 2 + c] = 0.0;
        }
        for c in 0..3 {
            store.get_mut(wh).data_mut()[r * 3 + c] = 0.0;
        }
    }
    let h = Tensor::vector(vec![0.3, -0.5, 0.9]);
    let x = Tensor::vector(vec![1.0, -2.0]);

    store.get_mut(b).data_mut()[..3].fill(-60.0);
    let cell = GruCell::bind(&store, "enc").unwrap();
    let carried = cell.gru_step(&store, &x, &h).unwrap();
    assert!(carried.max_abs_diff(&h) < 1e-12);

    store.get_mut(b).data_mut()[..3].fill(60.0);
    let replaced = cell.gru_step(&store, &x, &h).unwrap();
    // Candidate computed directly from the gate formulas.
    let p = |name: &str| store.by_name(name).unwrap().clone();
    let (wx, wh, wn, bias) = (p("enc.wx"), p("enc.wh"), p("enc.wn"), p("enc.b"));
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut cand = vec![0.0; 3];
    let r: Vec<f64> = (0..3)
        .map(|i| {
            let mut a = bias.data()[3 + i];
            for c in 0..2 {
                a += wx.at(3 + i, c) * x.data()[c];
            }
            for c in 0..3 {
                a += wh.at(3 + i, c) * h.data()[c];
            }
            sig(a)
        })
        .collect();
    for (i, out) in cand.iter_mut().enumerate() {
        let mut a = bias.data()[6 + i];
        for c in 0..2 {
            a += wx.at(6 + i, c) * x.data()[c];
        }
        for c in 0..3 {
            a += wn.at(i, c) * r[c] * h.data()[c];
        }
        *out = a.tanh();
    }
    assert!(replaced.max_abs_diff(&Tensor::vector(cand)) < 1e-12);
}

#[test]
fn gru_matches_finite_differences() {
    let mut store = gru_store(3, 4, 6);
    randomize(&mut store, 7);
    let cell = GruCell::bind(&store, "enc").unwrap();
    let err = check_params(&store, |tape, store| -> Result<_> {
        let mut h = tape.leaf(Tensor::vector(vec![0.2, -0.1, 0.4, 0.0]));
        for x in [[0.3, -0.8, 1.2], [-1.0, 0.5, 0.1]] {
            let xv = tape.leaf(Tensor::vector(x.to_vec()));
            h = cell.step(tape, store, xv, h)?;
        }
        let dir = tape.leaf(Tensor::vector(vec![1.0, -0.5, 2.0, 0.7]));
        Ok(tape.dot(h, dir)?)
    })
    .unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

/// Scalar Adam written out independently of the store-based implementation.
fn scalar_adam(theta: f64, grads: &[f64], cfg: &AdamConfig) -> Vec<f64> {
    let (mut m, mut v, mut th) = (0.0, 0.0, theta);
    let mut trace = Vec::new();
    for (t, g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let mh = m / (1.0 - cfg.beta1.powi(t));
        let vh = v / (1.0 - cfg.beta2.powi(t));
        th -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        trace.push(th);
    }
    trace
}

fn one_param(value: f64) -> (ParamStore, ParamId) {
    let mut s = ParamStore::new();
    let id = s.insert("p", Tensor::vector(vec![value])).unwrap();
    (s, id)
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let (mut s, id) = one_param(0.5);
    let mut g = Grads::empty(&s);
    g.set(id, Tensor::vector(vec![0.0]));
    adam_update(&mut s, &g, &AdamConfig::default()).unwrap();
    assert_eq!(s.get(id).data(), &[0.5]);
}

#[test]
fn adam_absent_gradient_is_untouched() {
    let mut s = ParamStore::new();
    let a = s.insert("a", Tensor::vector(vec![1.0])).unwrap();
    let b = s.insert("b", Tensor::vector(vec![2.0])).unwrap();
    let mut g = Grads::empty(&s);
    g.set(a, Tensor::vector(vec![1.0]));
    adam_update(&mut s, &g, &AdamConfig::default()).unwrap();
    assert_eq!(s.get(b).data(), &[2.0]);
    assert_eq!(s.step(), 1);
}

#[test]
fn adam_first_step_matches_formula() {
    let cfg = AdamConfig::default();
    let (mut s, id) = one_param(0.0);
    let mut g = Grads::empty(&s);
    g.set(id, Tensor::vector(vec![1.0]));
    adam_update(&mut s, &g, &cfg).unwrap();
    let want = -cfg.lr / (1.0 + cfg.eps);
    assert!((s.get(id).data()[0] - want).abs() < 1e-18);
    assert!((s.get(id).data()[0] - scalar_adam(0.0, &[1.0], &cfg)[0]).abs() < 1e-18);
}

#[test]
fn adam_sequence_matches_scalar_oracle() {
    let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
    let seq = [1.0, 1.0, 0.5, -2.0, 0.25];
    let oracle = scalar_adam(0.3, &seq, &cfg);
    let (mut s, id) = one_param(0.3);
    for (g, want) in seq.iter().zip(&oracle) {
        let mut grads = Grads::empty(&s);
        grads.set(id, Tensor::vector(vec![*g]));
        adam_update(&mut s, &grads, &cfg).unwrap();
        assert!((s.get(id).data()[0] - want).abs() < 1e-15);
    }
    // Two identical unit gradients give equal bias-corrected steps.
    let d1 = oracle[0] - 0.3;
    let d2 = oracle[1] - oracle[0];
    assert!((d1 - d2).abs() < 1e-12);
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let (mut s, id) = one_param(0.0);
    let mut g = Grads::empty(&s);
    g.set(id, Tensor::vector(vec![f64::NAN]));
    match adam_update(&mut s, &g, &AdamConfig::default()) {
        Err(NnError::NonFiniteGradient { param }) => assert_eq!(param, "p"),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(s.step(), 0);
}

fn grads_of(values: &[&[f64]]) -> Grads {
    let mut s = ParamStore::new();
    let mut ids = Vec::new();
    for (i, v) in values.iter().enumerate() {
        ids.push(s.insert(&format!("p{i}"), Tensor::vector(v.to_vec())).unwrap());
    }
    let mut g = Grads::empty(&s);
    for (id, v) in ids.into_iter().zip(values) {
        g.set(id, Tensor::vector(v.to_vec()));
    }
    g
}

#[test]
fn clip_below_threshold_is_identity() {
    let mut g = grads_of(&[&[3.0], &[0.0]]);
    let before = g.clone();
    assert_eq!(clip_gradients(&mut g, 5.0), 3.0);
    assert_eq!(g, before);
}

#[test]
fn clip_above_threshold_halves() {
    let mut g = grads_of(&[&[6.0], &[8.0]]);
    assert_eq!(clip_gradients(&mut g, 5.0), 10.0);
    let vals: Vec<f64> = g.iter().flat_map(|(_, t)| t.data().to_vec()).collect();
    assert_eq!(vals, vec![3.0, 4.0]);
}

#[test]
fn checkpoint_layout_is_exact() {
    let records = vec![("ab".to_string(), Tensor::matrix(1, 2, vec![1.0, -2.5]).unwrap())];
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &records).unwrap();
    let mut want = b"QAM1".to_vec();
    want.extend(1u32.to_le_bytes());
    want.extend(2u32.to_le_bytes());
    want.extend(b"ab");
    want.extend(2u32.to_le_bytes());
    want.extend(1u32.to_le_bytes());
    want.extend(2u32.to_le_bytes());
    want.extend(1.0f64.to_le_bytes());
    want.extend((-2.5f64).to_le_bytes());
    assert_eq!(bytes, want);
    assert_eq!(read_checkpoint(&bytes[..]).unwrap(), records);
}

#[test]
fn checkpoint_errors() {
    assert!(matches!(read_checkpoint(&b"QAM2\x01\0\0\0"[..]), Err(NnError::Checkpoint(_))));
    assert!(matches!(read_checkpoint(&b"QAM1\x02\0\0\0"[..]), Err(NnError::Checkpoint(_))));
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &[("x".into(), Tensor::vector(vec![1.0, 2.0]))]).unwrap();
    bytes.pop();
    assert!(matches!(read_checkpoint(&bytes[..]), Err(NnError::Checkpoint(_))));
}

#[test]
fn store_round_trips_through_checkpoint() {
    let store = init_params(&[LayerSpec::gru("enc", 3, 2), LayerSpec::embedding("emb", 5, 3)], 3).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, &store.records()).unwrap();
    let mut fresh = init_params(&[LayerSpec::gru("enc", 3, 2), LayerSpec::embedding("emb", 5, 3)], 99).unwrap();
    fresh.load(&read_checkpoint(&bytes[..]).unwrap()).unwrap();
    assert_eq!(fresh.records(), store.records());

    let mut wrong = init_params(&[LayerSpec::gru("enc", 3, 4), LayerSpec::embedding("emb", 5, 3)], 0).unwrap();
    assert!(wrong.load(&store.records()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn post_clip_norm_is_bounded(vals in prop::collection::vec(-100.0f64..100.0, 1..30), max in 0.1f64..20.0) {
        let mut g = grads_of(&[&vals]);
        clip_gradients(&mut g, max);
        prop_assert!(global_norm(&g) <= max + 1e-9);
    }

    #[test]
    fn adam_stays_finite(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let id = s.insert("p", Tensor::vector(vec![0.0; 4])).unwrap();
        for _ in 0..1000 {
            let mut g = Grads::empty(&s);
            let scale = 10f64.powi(rng.gen_range(-8..8));
            g.set(id, Tensor::vector((0..4).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()));
            adam_update(&mut s, &g, &AdamConfig::default()).unwrap();
            prop_assert!(s.get(id).is_finite());
        }
    }
}
