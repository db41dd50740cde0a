use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bench::{ComparatorSpec, Stream, StreamSource};
use crate::error::{Error, Result};
use crate::learners::{make_lower_bound_pool, FixedPool, FunctionPool, LowerBoundPool, PoolFunction};
use crate::losses::LossFamily;
use crate::primitives::{Example, FeatureId, Prediction};
use crate::rng::{child_seed, rng};

const LABEL_SEED: u64 = 1;
const NOISE_SEED: u64 = 2;
const POOL_SEED: u64 = 3;
const INPUT_SEED: u64 = 4;

/// `rounds` unlabeled points drawn uniformly from `[-1, 1]^dim` (dense ids
/// `1..=dim`).
pub fn uniform_inputs(dim: usize, rounds: usize, seed: u64) -> Vec<Example> {
    let mut r = rng(child_seed(seed, INPUT_SEED));
    (0..rounds)
        .map(|t| {
            let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            Example::dense(t as u64, &v, None).expect("finite inputs")
        })
        .collect()
}

/// A pool over `[-1, 1]^dim` alternating `tanh` ridges and axis stumps,
/// every member bounded by 1.
pub fn random_pool(dim: usize, size: usize, seed: u64) -> Result<FixedPool> {
    if dim == 0 || size == 0 {
        return Err(Error::invalid("pool", "needs a positive dimension and size"));
    }
    let mut r = rng(child_seed(seed, POOL_SEED));
    let scale = 1.5 / (dim as f64).sqrt();
    let functions = (0..size)
        .map(|k| {
            if k % 2 == 0 {
                PoolFunction::Ridge {
                    weights: (0..dim)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut r);
                            scale * z
                        })
                        .collect(),
                    bias: r.random_range(-0.5..0.5),
                    amplitude: 1.0,
                }
            } else {
                PoolFunction::Stump {
                    feature: r.random_range(1..=dim as u32),
                    threshold: r.random_range(-0.5..0.5),
                    low: r.random_range(-1.0..1.0),
                    high: r.random_range(-1.0..1.0),
                }
            }
        })
        .collect();
    FixedPool::new(functions, 1.0)
}

fn label_inputs(
    inputs: Vec<Example>,
    labels: impl Iterator<Item = f64>,
    family: LossFamily,
    source: StreamSource,
) -> Result<Stream> {
    let examples = inputs
        .into_iter()
        .zip(labels)
        .map(|(x, y)| x.with_label(Prediction::scalar(y)))
        .collect::<Result<Vec<_>>>()?;
    Stream::new(source, family, examples)
}

/// Labels `y*_t = sum_g w_g g(x_t) + N(0, noise^2)` clipped to `[-1, 1]`,
/// squared loss. The comparator is the planted `f` with
/// `W = max(1, sum |w_g|)`.
pub fn planted_span_stream<P: FunctionPool>(
    pool: &P,
    coefficients: &[f64],
    noise: f64,
    inputs: Vec<Example>,
    seed: u64,
) -> Result<(Stream, ComparatorSpec)> {
    if coefficients.len() != pool.len() {
        return Err(Error::DimensionMismatch {
            expected: pool.len(),
            actual: coefficients.len(),
        });
    }
    if coefficients.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("planted coefficients"));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut r = rng(child_seed(seed, NOISE_SEED));
    let mut vals = Vec::with_capacity(pool.len());
    let labels: Vec<f64> = inputs
        .iter()
        .map(|x| {
            pool.eval_all(x, &mut vals);
            let f: f64 = coefficients.iter().zip(&vals).map(|(w, v)| w * v).sum();
            let e = if noise > 0.0 { normal.sample(&mut r) } else { 0.0 };
            (f + e).clamp(-1.0, 1.0)
        })
        .collect();
    let norm = coefficients.iter().map(|w| w.abs()).sum::<f64>().max(1.0);
    let stream = label_inputs(
        inputs,
        labels.into_iter(),
        LossFamily::Squared,
        StreamSource::Synthetic {
            generator: "planted_span".into(),
            seed,
        },
    )?;
    Ok((
        stream,
        ComparatorSpec::PlantedSpan {
            coefficients: coefficients.to_vec(),
            norm,
        },
    ))
}

/// [`planted_span_stream`] restricted to weights on the simplex.
pub fn planted_ch_stream<P: FunctionPool>(
    pool: &P,
    weights: &[f64],
    noise: f64,
    inputs: Vec<Example>,
    seed: u64,
) -> Result<Stream> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights", "must be non-negative and sum to 1"));
    }
    Ok(planted_span_stream(pool, weights, noise, inputs, seed)?.0)
}

/// Additive stump regression problem.
///
/// Raw variables `u_1..u_k` are uniform on `[0, 1]` and reach the learner
/// through thermometer features `1[u_j > b / bins]` (`b = 1..bins-1`) plus
/// an always-on bias feature (id 0). The target is
/// `sum_j a_j (1[u_j > theta_j] - 1/2)` with thresholds on the bin grid,
/// so each component is one feature and the sum needs all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveStumpSpec {
    pub components: usize,
    pub bins: usize,
    /// `sum_j |a_j|`.
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for AdditiveStumpSpec {
    fn default() -> Self {
        AdditiveStumpSpec {
            components: 5,
            bins: 8,
            amplitude: 1.6,
            noise: 0.1,
        }
    }
}

impl AdditiveStumpSpec {
    fn feature(&self, j: usize, b: usize) -> FeatureId {
        FeatureId((1 + j * (self.bins - 1) + (b - 1)) as u32)
    }
}

pub fn additive_stump_stream(spec: &AdditiveStumpSpec, rounds: usize, seed: u64) -> Result<Stream> {
    if spec.components == 0 || spec.bins < 2 {
        return Err(Error::invalid("spec", "needs at least one component and two bins"));
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude <= 2.0) {
        return Err(Error::invalid(
            "amplitude",
            "must lie in [0, 2] to keep labels in [-1, 1]",
        ));
    }
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid("noise", e.to_string()))?;
    let mut shape = rng(child_seed(seed, POOL_SEED));
    let raw: Vec<f64> = (0..spec.components).map(|_| shape.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let amps: Vec<f64> = raw
        .iter()
        .map(|a| {
            let sign = if shape.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * a * spec.amplitude / total
        })
        .collect();
    let cuts: Vec<usize> = (0..spec.components).map(|_| shape.random_range(1..spec.bins)).collect();

    let mut r = rng(child_seed(seed, INPUT_SEED));
    let mut noise = rng(child_seed(seed, NOISE_SEED));
    let examples = (0..rounds)
        .map(|t| {
            let mut feats = vec![(FeatureId(0), 1.0)];
            let mut y = 0.0;
            for j in 0..spec.components {
                let u: f64 = r.random();
                let bin = ((u * spec.bins as f64) as usize).min(spec.bins - 1);
                feats.extend((1..=bin).map(|b| (spec.feature(j, b), 1.0)));
                y += amps[j] * (if bin >= cuts[j] { 0.5 } else { -0.5 });
            }
            let e = if spec.noise > 0.0 {
                normal.sample(&mut noise)
            } else {
                0.0
            };
            Example::new(t as u64, feats, Some(Prediction::scalar((y + e).clamp(-1.0, 1.0))))
        })
        .collect::<Result<Vec<_>>>()?;
    Stream::new(
        StreamSource::Synthetic {
            generator: "additive_stumps".into(),
            seed,
        },
        LossFamily::Squared,
        examples,
    )
}

/// The adversarial stream of the boosting lower bound together with its
/// Bernoulli pool.
#[derive(Debug, Clone)]
pub struct LowerBoundSetup {
    pub stream: Stream,
    pub pool: LowerBoundPool,
    pub epsilon: f64,
    /// Pool size `M = N / c`.
    pub pool_size: usize,
}

/// `x_t = t` with `y*_t` drawn uniformly from `{1/2 + eps, 1/2 - eps}`,
/// `eps = 1 / (10 sqrt(N))`, squared loss. Requires `T >= 12 M`.
pub fn make_lower_bound_stream(stages: usize, rounds: usize, seed: u64, scale_c: f64) -> Result<LowerBoundSetup> {
    if stages == 0 {
        return Err(Error::invalid("stages", "need at least one stage"));
    }
    let epsilon = 1.0 / (10.0 * (stages as f64).sqrt());
    let mut r = rng(child_seed(seed, LABEL_SEED));
    let labels: Vec<f64> = (0..rounds)
        .map(|_| {
            if r.random_bool(0.5) {
                0.5 + epsilon
            } else {
                0.5 - epsilon
            }
        })
        .collect();
    let labels = Arc::new(labels);
    let pool = make_lower_bound_pool(stages, scale_c, child_seed(seed, POOL_SEED), Arc::clone(&labels))?;
    let m = pool.len();
    if rounds < 12 * m {
        return Err(Error::invalid(
            "rounds",
            format!("T = {rounds} is below the 12M = {} threshold (M = {m})", 12 * m),
        ));
    }
    let examples = labels
        .iter()
        .enumerate()
        .map(|(t, y)| Example::new(t as u64, [], Some(Prediction::scalar(*y))))
        .collect::<Result<Vec<_>>>()?;
    let stream = Stream::new(
        StreamSource::Synthetic {
            generator: "lower_bound".into(),
            seed,
        },
        LossFamily::Squared,
        examples,
    )?;
    Ok(LowerBoundSetup {
        stream,
        pool,
        epsilon,
        pool_size: m,
    })
}
