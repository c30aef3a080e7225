use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn triple_loop(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at(i, p) * b.at(p, j);
            }
            out[i * n + j] = acc;
        }
    }
    out
}

fn run_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let (va, vb) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
    let out = tape.matmul(va, vb)?;
    Ok(tape.value(out))
}

fn run_unary(x: Vec<f64>, f: impl Fn(&Tape, Var) -> Result<Var>) -> Result<Tensor> {
    let tape = Tape::new();
    let v = tape.leaf(Tensor::vector(x));
    let out = f(&tape, v)?;
    Ok(tape.value(out))
}

fn conv(w: Vec<f64>, s: Vec<f64>) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let (vw, vs) = (tape.leaf(Tensor::vector(w)), tape.leaf(Tensor::vector(s)));
    let out = tape.circular_convolve(vw, vs)?;
    Ok(tape.value(out).into_data())
}

fn cos(u: Vec<f64>, v: Vec<f64>) -> Result<f64> {
    let tape = Tape::new();
    let (a, b) = (tape.leaf(Tensor::vector(u)), tape.leaf(Tensor::vector(v)));
    let c = tape.cosine_similarity(a, b)?;
    Ok(tape.scalar(c))
}

#[test]
fn matmul_identity_and_hand_case() {
    let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(run_matmul(&eye, &m).unwrap(), m);

    let a = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let b = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
    assert_eq!(run_matmul(&a, &b).unwrap().data(), &[11.0]);
}

#[test]
fn matmul_random_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&mut rng, &[4, 5]);
    let b = random(&mut rng, &[5, 3]);
    let got = run_matmul(&a, &b).unwrap();
    assert_eq!(got.shape(), &[4, 3]);
    let want = triple_loop(&a, &b);
    for (g, w) in got.data().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let err = run_matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
    assert_eq!(
        err,
        TensorError::Dimension {
            op: "matmul",
            lhs: vec![2, 3],
            rhs: vec![2, 3]
        }
    );
    assert!(err.to_string().contains("[2, 3] vs [2, 3]"));
}

#[test]
fn softmax_cases() {
    let u = run_unary(vec![0.0, 0.0, 0.0], |t, v| t.softmax(v)).unwrap();
    for p in u.data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = run_unary(vec![1000.0, 0.0], |t, v| t.softmax(v)).unwrap();
    assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1].abs() < 1e-12);

    let d = run_unary(vec![1.0, 2.0, 3.0], |t, v| t.softmax(v)).unwrap();
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
    for (p, x) in d.data().iter().zip([1.0f64, 2.0, 3.0]) {
        assert!((p - x.exp() / z).abs() < 1e-15);
    }
    assert!(matches!(
        run_unary(vec![], |t, v| t.softmax(v)),
        Err(TensorError::Dimension { .. })
    ));
}

#[test]
fn cosine_cases() {
    assert!((cos(vec![0.3, -1.2, 2.0], vec![0.3, -1.2, 2.0]).unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(cos(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap(), 0.0);
    assert_eq!(cos(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 0.0);
    assert!(matches!(
        cos(vec![1.0], vec![1.0, 2.0]),
        Err(TensorError::Dimension { .. })
    ));
}

#[test]
fn circular_convolve_cases() {
    assert_eq!(conv(vec![0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
    // Index-loop oracle: out[i] = sum_j w[(i - (j - 1)) mod 3] s[j].
    let (w, s) = (vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]);
    let mut want = vec![0.0; 3];
    for (i, o) in want.iter_mut().enumerate() {
        for (j, sj) in s.iter().enumerate() {
            let offset = j as i64 - 1;
            let src = (i as i64 - offset).rem_euclid(3) as usize;
            *o += w[src] * sj;
        }
    }
    assert_eq!(want, vec![0.0, 0.0, 1.0]);
    assert_eq!(conv(w, s).unwrap(), want);

    assert!(matches!(
        conv(vec![1.0, 0.0, 0.0], vec![0.5, 0.5]),
        Err(TensorError::Config { .. })
    ));
    assert!(matches!(
        conv(vec![1.0, 0.0, 0.0], vec![0.2; 5]),
        Err(TensorError::Config { .. })
    ));
}

#[test]
fn backward_product_rule() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(2.0));
    let y = tape.leaf(Tensor::scalar(3.0));
    let loss = tape.mul(x, y).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.0]);
    assert_eq!(g.get(y).unwrap().data(), &[2.0]);
}

#[test]
fn backward_cross_entropy_is_p_minus_onehot() {
    let tape = Tape::new();
    let logits = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let loss = tape.cross_entropy(logits, 0).unwrap();
    let g = tape.backward(loss).unwrap();
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
    let want = [1.0f64.exp() / z - 1.0, 2.0f64.exp() / z, 3.0f64.exp() / z];
    for (a, b) in g.get(logits).unwrap().data().iter().zip(want) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!((tape.scalar(loss) - (z.ln() - 1.0)).abs() < 1e-14);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let tape = Tape::new();
    let v = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    let out = tape.tanh(v).unwrap();
    assert!(matches!(tape.backward(out), Err(TensorError::Contract(_))));
}

#[test]
fn every_reachable_node_gets_a_same_shaped_gradient() {
    let tape = Tape::new();
    let m = tape.leaf(Tensor::filled(&[3, 2], 0.5));
    let x = tape.leaf(Tensor::vector(vec![1.0, -1.0]));
    let y = tape.matvec(m, x).unwrap();
    let z = tape.tanh(y).unwrap();
    let unused = tape.leaf(Tensor::zeros(&[4]));
    let loss = tape.sum(z).unwrap();
    let g = tape.backward(loss).unwrap();
    for v in [m, x, y, z, loss] {
        assert_eq!(g.get(v).unwrap().shape(), tape.shape(v).as_slice());
    }
    assert!(g.get(unused).is_none());
}

#[test]
fn non_finite_forward_is_an_error() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0]));
    let zero = tape.leaf(Tensor::scalar(0.0));
    assert_eq!(tape.div_by(x, zero), Err(TensorError::NonFinite { op: "div_by" }));
}

#[test]
fn activations_saturate_without_overflow() {
    let s = run_unary(vec![-1e4, 1e4], |t, v| t.sigmoid(v)).unwrap();
    assert!(s.data()[0] > 0.0 && s.data()[0] < 1e-20);
    assert!((s.data()[1] - 1.0).abs() < 1e-15);
    let t = run_unary(vec![-1e4, 1e4], |t, v| t.tanh(v)).unwrap();
    assert_eq!(t.data(), &[-1.0, 1.0]);
}

#[test]
fn tape_is_deterministic() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tape = Tape::new();
        let w = tape.leaf(random(&mut rng, &[4, 3]));
        let x = tape.leaf(random(&mut rng, &[3]));
        let h = tape.matvec(w, x).unwrap();
        let p = tape.softmax(h).unwrap();
        let loss = tape.cross_entropy(p, 1).unwrap();
        let g = tape.backward(loss).unwrap();
        (tape.scalar(loss).to_bits(), g.get(w).unwrap().clone())
    };
    let (l1, g1) = build();
    let (l2, g2) = build();
    assert_eq!(l1, l2);
    assert!(g1.data().iter().zip(g2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn primitives_pass_finite_differences() {
    for r in crate::gradcheck::primitive_suite(10, 3).unwrap() {
        assert!(r.passed(1e-4), "{} rel error {}", r.name, r.max_rel_error);
    }
}

proptest! {
    #[test]
    fn matmul_matches_oracle_up_to_16(m in 1usize..=16, k in 1usize..=16, n in 1usize..=16, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[m, k]);
        let b = random(&mut rng, &[k, n]);
        let got = run_matmul(&a, &b).unwrap();
        for (g, w) in got.data().iter().zip(triple_loop(&a, &b)) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_normalised_and_shift_invariant(x in prop::collection::vec(-30.0f64..30.0, 1..12), c in -100.0f64..100.0) {
        let p = run_unary(x.clone(), |t, v| t.softmax(v)).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.data().iter().all(|&v| v >= 0.0));
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let q = run_unary(shifted, |t, v| t.softmax(v)).unwrap();
        prop_assert!(p.max_abs_diff(&q) < 1e-12);
    }

    #[test]
    fn identity_kernel_is_exact_identity(w in prop::collection::vec(-5.0f64..5.0, 3..20)) {
        prop_assert_eq!(conv(w.clone(), vec![0.0, 1.0, 0.0]).unwrap(), w);
    }

    #[test]
    fn convolution_sum_is_product_of_sums(w in prop::collection::vec(0.0f64..1.0, 3..20), s in prop::collection::vec(0.0f64..1.0, 3)) {
        let out = conv(w.clone(), s.clone()).unwrap();
        let want = w.iter().sum::<f64>() * s.iter().sum::<f64>();
        prop_assert!((out.iter().sum::<f64>() - want).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_bounded(u in prop::collection::vec(-3.0f64..3.0, 4), v in prop::collection::vec(-3.0f64..3.0, 4)) {
        let c = cos(u, v).unwrap();
        prop_assert!(c.abs() <= 1.0 + 1e-12);
    }
}
