//! Central finite-difference checks against tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{Grads, ParamStore};
use crate::tensor::{Result, Tape, Tensor, Var};

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Gradient magnitudes below this floor are compared absolutely rather than
/// relatively; central differences cannot resolve them at fp64.
pub const REL_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Maximum relative error between the tape gradient of `f` with respect to
/// every element of every input and its central-difference estimate.
pub fn check_inputs<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for idx in 0..input.numel() {
            let base = input.data()[idx];
            work[which].data_mut()[idx] = base + FD_STEP;
            let up = eval(&work)?;
            work[which].data_mut()[idx] = base - FD_STEP;
            let down = eval(&work)?;
            work[which].data_mut()[idx] = base;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[which].data()[idx], numeric));
        }
    }
    Ok(worst)
}

/// Outcome of one named finite-difference check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Contracts a non-scalar output against a fixed random direction so that the
/// check exercises the whole Jacobian.
fn project(tape: &Tape, out: Var, dir_seed: u64) -> Result<Var> {
    let shape = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(dir_seed);
    let dir = tape.leaf(uniform(&mut rng, &shape));
    let prod = tape.mul(out, dir)?;
    tape.sum(prod)
}

type Primitive = fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Box<dyn Fn(&Tape, &[Var]) -> Result<Var>>);

fn primitives() -> Vec<(&'static str, Primitive)> {
    vec![
        ("add", |r| {
            (vec![uniform(r, &[5]), uniform(r, &[5])], Box::new(|t, v| {
                let o = t.add(v[0], v[1])?;
                project(t, o, 1)
            }))
        }),
        ("sub", |r| {
            (vec![uniform(r, &[5]), uniform(r, &[5])], Box::new(|t, v| {
                let o = t.sub(v[0], v[1])?;
                project(t, o, 2)
            }))
        }),
        ("mul", |r| {
            (vec![uniform(r, &[5]), uniform(r, &[5])], Box::new(|t, v| {
                let o = t.mul(v[0], v[1])?;
                project(t, o, 3)
            }))
        }),
        ("affine", |r| {
            (vec![uniform(r, &[4])], Box::new(|t, v| {
                let o = t.affine(v[0], -1.5, 0.25)?;
                project(t, o, 4)
            }))
        }),
        ("scale_by", |r| {
            let s = Tensor::scalar(r.gen_range(-2.0..2.0));
            (vec![s, uniform(r, &[4])], Box::new(|t, v| {
                let o = t.scale_by(v[0], v[1])?;
                project(t, o, 5)
            }))
        }),
        ("div_by", |r| {
            let mag: f64 = r.gen_range(0.5..2.0);
            let s = Tensor::scalar(if r.gen_bool(0.5) { mag } else { -mag });
            (vec![uniform(r, &[4]), s], Box::new(|t, v| {
                let o = t.div_by(v[0], v[1])?;
                project(t, o, 6)
            }))
        }),
        ("matmul", |r| {
            (vec![uniform(r, &[3, 4]), uniform(r, &[4, 2])], Box::new(|t, v| {
                let o = t.matmul(v[0], v[1])?;
                project(t, o, 7)
            }))
        }),
        ("matvec", |r| {
            (vec![uniform(r, &[3, 4]), uniform(r, &[4])], Box::new(|t, v| {
                let o = t.matvec(v[0], v[1])?;
                project(t, o, 8)
            }))
        }),
        ("vecmat", |r| {
            (vec![uniform(r, &[3]), uniform(r, &[3, 4])], Box::new(|t, v| {
                let o = t.vecmat(v[0], v[1])?;
                project(t, o, 9)
            }))
        }),
        ("outer", |r| {
            (vec![uniform(r, &[3]), uniform(r, &[2])], Box::new(|t, v| {
                let o = t.outer(v[0], v[1])?;
                project(t, o, 10)
            }))
        }),
        ("add_rows", |r| {
            (vec![uniform(r, &[3, 2]), uniform(r, &[2])], Box::new(|t, v| {
                let o = t.add_rows(v[0], v[1])?;
                project(t, o, 11)
            }))
        }),
        ("sigmoid", |r| {
            (vec![uniform(r, &[5])], Box::new(|t, v| {
                let o = t.sigmoid(v[0])?;
                project(t, o, 12)
            }))
        }),
        ("tanh", |r| {
            (vec![uniform(r, &[5])], Box::new(|t, v| {
                let o = t.tanh(v[0])?;
                project(t, o, 13)
            }))
        }),
        ("softplus", |r| {
            (vec![uniform(r, &[5])], Box::new(|t, v| {
                let o = t.softplus(v[0])?;
                project(t, o, 14)
            }))
        }),
        ("relu", |r| {
            (vec![uniform(r, &[5])], Box::new(|t, v| {
                let o = t.relu(v[0])?;
                project(t, o, 15)
            }))
        }),
        ("power", |r| {
            let base = Tensor::vector((0..4).map(|_| r.gen_range(0.1..2.0)).collect());
            let gamma = Tensor::scalar(r.gen_range(1.0..3.0));
            (vec![base, gamma], Box::new(|t, v| {
                let o = t.power(v[0], v[1])?;
                project(t, o, 16)
            }))
        }),
        ("concat", |r| {
            (vec![uniform(r, &[2]), uniform(r, &[3])], Box::new(|t, v| {
                let o = t.concat(&[v[0], v[1], v[0]])?;
                project(t, o, 17)
            }))
        }),
        ("slice", |r| {
            (vec![uniform(r, &[6])], Box::new(|t, v| {
                let o = t.slice(v[0], 2, 3)?;
                project(t, o, 18)
            }))
        }),
        ("stack", |r| {
            (vec![uniform(r, &[3]), uniform(r, &[3])], Box::new(|t, v| {
                let o = t.stack(&[v[0], v[1]])?;
                project(t, o, 19)
            }))
        }),
        ("gather", |r| {
            (vec![uniform(r, &[4, 3])], Box::new(|t, v| {
                let a = t.gather(v[0], 2)?;
                let b = t.gather(v[0], 0)?;
                let c = t.gather(v[0], 2)?;
                let o = t.concat(&[a, b, c])?;
                project(t, o, 20)
            }))
        }),
        ("sum", |r| {
            (vec![uniform(r, &[2, 3])], Box::new(|t, v| {
                let s = t.sum(v[0])?;
                t.mul(s, s)
            }))
        }),
        ("mean", |r| {
            (vec![uniform(r, &[2, 3])], Box::new(|t, v| {
                let s = t.mean(v[0])?;
                t.mul(s, s)
            }))
        }),
        ("dot", |r| {
            (vec![uniform(r, &[4]), uniform(r, &[4])], Box::new(|t, v| t.dot(v[0], v[1])))
        }),
        ("softmax", |r| {
            (vec![uniform(r, &[5])], Box::new(|t, v| {
                let o = t.softmax(v[0])?;
                project(t, o, 21)
            }))
        }),
        ("cross_entropy", |r| {
            let target = r.gen_range(0..5);
            (vec![uniform(r, &[5])], Box::new(move |t, v| t.cross_entropy(v[0], target)))
        }),
        ("bce_with_logits", |r| {
            let targets: Vec<f64> = (0..5).map(|_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
            (vec![uniform(r, &[5])], Box::new(move |t, v| t.bce_with_logits(v[0], &targets)))
        }),
        ("cosine_similarity", |r| {
            (vec![uniform(r, &[4]), uniform(r, &[4])], Box::new(|t, v| {
                let c = t.cosine_similarity(v[0], v[1])?;
                t.affine(c, 3.0, 0.0)
            }))
        }),
        ("cosine_rows", |r| {
            (vec![uniform(r, &[3, 4]), uniform(r, &[4])], Box::new(|t, v| {
                let o = t.cosine_rows(v[0], v[1])?;
                project(t, o, 22)
            }))
        }),
        ("circular_convolve", |r| {
            (vec![uniform(r, &[5]), uniform(r, &[3])], Box::new(|t, v| {
                let o = t.circular_convolve(v[0], v[1])?;
                project(t, o, 23)
            }))
        }),
    ]
}

/// Names of every primitive covered by [`primitive_suite`].
pub fn primitive_names() -> Vec<&'static str> {
    primitives().into_iter().map(|(n, _)| n).collect()
}

/// Runs `trials` random finite-difference checks of every tape primitive with
/// inputs drawn from [-2, 2].
pub fn primitive_suite(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, make) in primitives() {
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (inputs, f) = make(&mut rng);
            worst = worst.max(check_inputs(&inputs, |t, v| f(t, v))?);
        }
        out.push(CheckResult {
            name: name.to_string(),
            trials,
            max_rel_error: worst,
        });
    }
    Ok(out)
}

/// Maximum relative error between tape gradients of a loss built from a
/// parameter store and central differences over every parameter entry.
pub fn check_params<F, E>(store: &ParamStore, f: F) -> std::result::Result<f64, E>
where
    F: Fn(&Tape, &ParamStore) -> std::result::Result<Var, E>,
    E: From<crate::tensor::TensorError>,
{
    let tape = Tape::new();
    let loss = f(&tape, store)?;
    let grads = Grads::collect(&tape.backward(loss)?, store);

    let mut work = store.clone();
    let mut worst = 0.0f64;
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for k in 0..store.get(id).numel() {
            let base = store.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = base + FD_STEP;
            let up = eval_store(&work, &f)?;
            work.get_mut(id).data_mut()[k] = base - FD_STEP;
            let down = eval_store(&work, &f)?;
            work.get_mut(id).data_mut()[k] = base;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

fn eval_store<F, E>(store: &ParamStore, f: &F) -> std::result::Result<f64, E>
where
    F: Fn(&Tape, &ParamStore) -> std::result::Result<Var, E>,
{
    let tape = Tape::new();
    let loss = f(&tape, store)?;
    Ok(tape.scalar(loss))
}
