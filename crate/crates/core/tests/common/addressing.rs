//! Random addressing cases and the invariants every case must satisfy.

use memqa_core::ntm::addressing::{content_address, interpolate, sharpen, shift, write};
use memqa_core::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SUM_TOL: f64 = 1e-9;

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn normalized(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let raw = uniform(rng, n, 0.0, 1.0);
    let total: f64 = raw.iter().sum();
    Tensor::vector(raw.into_iter().map(|v| v / total).collect())
}

fn check_distribution(stage: &str, w: &Tensor) -> Result<(), String> {
    if let Some(v) = w.data().iter().find(|&&v| v < 0.0) {
        return Err(format!("{stage}: negative weight {v}"));
    }
    let total: f64 = w.data().iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(format!("{stage}: weights sum to {total}"));
    }
    Ok(())
}

/// Draws one random memory and head parameterization and checks
/// non-negativity and normalization after each addressing stage, shift-sum
/// preservation, and memory conservation under a null write.
pub fn check_random_case(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(3..=24);
    let width = rng.gen_range(1..=12);
    let memory = Tensor::matrix(n, width, uniform(rng, n * width, -2.0, 2.0)).unwrap();
    let key = Tensor::vector(uniform(rng, width, -1.0, 1.0));
    let beta = rng.gen_range(0.0..30.0);
    let gate = rng.gen_range(0.0..=1.0);
    let gamma = rng.gen_range(1.0..25.0);
    let s = normalized(rng, 3);
    let w_prev = normalized(rng, n);
    let err = |e: memqa_core::model::ModelError| e.to_string();

    let w_c = content_address(&memory, &key, beta).map_err(err)?;
    check_distribution("content", &w_c)?;
    let w_g = interpolate(&w_c, &w_prev, gate).map_err(err)?;
    check_distribution("interpolate", &w_g)?;
    let w_s = shift(&w_g, &s).map_err(err)?;
    check_distribution("shift", &w_s)?;
    let w = sharpen(&w_s, gamma).map_err(err)?;
    check_distribution("sharpen", &w)?;

    // Shifting redistributes mass without creating or destroying it, for
    // any non-negative input.
    let loose = Tensor::vector(uniform(rng, n, 0.0, 5.0));
    let shifted = shift(&loose, &s).map_err(err)?;
    let (before, after) = (loose.data().iter().sum::<f64>(), shifted.data().iter().sum::<f64>());
    if (before - after).abs() > SUM_TOL * before.max(1.0) {
        return Err(format!("shift changed total mass {before} -> {after}"));
    }

    let erase = Tensor::vector(uniform(rng, width, 0.0, 1.0));
    let add = Tensor::vector(uniform(rng, width, -1.0, 1.0));
    let untouched = write(&memory, &Tensor::zeros(&[n]), &erase, &add).map_err(err)?;
    if untouched.data() != memory.data() {
        return Err("null write changed memory".into());
    }
    Ok(())
}
