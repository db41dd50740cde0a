use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::check_bound;
use crate::primitives::{Example, FeatureId};
use crate::rng::unit_hash;

/// Default `c` of the lower-bound construction: the pool holds `M = N / c`
/// functions.
pub const LOWER_BOUND_SCALE_C: f64 = 1.0 / 4000.0;

/// A finite set of scalar functions `f_1..f_M`, each bounded by
/// [`FunctionPool::bound`] in absolute value.
///
/// Stochastic pools must be consistent: evaluating the same `(i, x)` twice
/// gives the same value.
pub trait FunctionPool: Send + Sync {
    fn len(&self) -> usize;

    fn eval(&self, i: usize, x: &Example) -> f64;

    fn bound(&self) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eval_all(&self, x: &Example, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.len()).map(|i| self.eval(i, x)));
    }
}

impl<P: FunctionPool + ?Sized> FunctionPool for Arc<P> {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn eval(&self, i: usize, x: &Example) -> f64 {
        (**self).eval(i, x)
    }

    fn bound(&self) -> f64 {
        (**self).bound()
    }

    fn eval_all(&self, x: &Example, out: &mut Vec<f64>) {
        (**self).eval_all(x, out)
    }
}

/// Deterministic functions used by the synthetic streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PoolFunction {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * tanh(weights . x + bias)` over dense ids `1..=k`.
    Ridge {
        weights: Vec<f64>,
        bias: f64,
        amplitude: f64,
    },
    /// `low` if `x_feature <= threshold`, else `high`.
    Stump {
        feature: u32,
        threshold: f64,
        low: f64,
        high: f64,
    },
    Neg {
        inner: Box<PoolFunction>,
    },
}

impl PoolFunction {
    pub fn eval(&self, x: &Example) -> f64 {
        match self {
            PoolFunction::Zero => 0.0,
            PoolFunction::Constant { value } => *value,
            PoolFunction::Ridge {
                weights,
                bias,
                amplitude,
            } => {
                let z: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * x.value(FeatureId(j as u32 + 1)))
                    .sum();
                amplitude * (z + bias).tanh()
            }
            PoolFunction::Stump {
                feature,
                threshold,
                low,
                high,
            } => {
                if x.value(FeatureId(*feature)) <= *threshold {
                    *low
                } else {
                    *high
                }
            }
            PoolFunction::Neg { inner } => -inner.eval(x),
        }
    }

    /// Largest absolute value the function can take.
    pub fn sup_norm(&self) -> f64 {
        match self {
            PoolFunction::Zero => 0.0,
            PoolFunction::Constant { value } => value.abs(),
            PoolFunction::Ridge { amplitude, .. } => amplitude.abs(),
            PoolFunction::Stump { low, high, .. } => low.abs().max(high.abs()),
            PoolFunction::Neg { inner } => inner.sup_norm(),
        }
    }

    pub fn negated(&self) -> PoolFunction {
        match self {
            PoolFunction::Zero => PoolFunction::Zero,
            PoolFunction::Neg { inner } => (**inner).clone(),
            f => PoolFunction::Neg {
                inner: Box::new(f.clone()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPool {
    functions: Vec<PoolFunction>,
    bound: f64,
}

impl FixedPool {
    pub fn new(functions: Vec<PoolFunction>, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        if functions.is_empty() {
            return Err(Error::invalid("pool", "needs at least one function"));
        }
        if let Some((i, f)) = functions
            .iter()
            .enumerate()
            .find(|(_, f)| f.sup_norm() > bound * (1.0 + 1e-12))
        {
            return Err(Error::invalid(
                "pool",
                format!("function {i} reaches {} > bound {bound}", f.sup_norm()),
            ));
        }
        Ok(FixedPool { functions, bound })
    }

    pub fn functions(&self) -> &[PoolFunction] {
        &self.functions
    }

    /// The pool extended with `-f` for every member and the zero function,
    /// skipping members already present.
    pub fn symmetric_closure(&self) -> FixedPool {
        let mut out = self.functions.clone();
        for f in &self.functions {
            let n = f.negated();
            if !out.contains(&n) {
                out.push(n);
            }
        }
        if !out.contains(&PoolFunction::Zero) {
            out.push(PoolFunction::Zero);
        }
        FixedPool {
            functions: out,
            bound: self.bound,
        }
    }
}

impl FunctionPool for FixedPool {
    fn len(&self) -> usize {
        self.functions.len()
    }

    fn eval(&self, i: usize, x: &Example) -> f64 {
        self.functions[i].eval(x)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// The adversarial pool of the boosting lower bound.
///
/// The domain is the naturals (`x_t = t`, read from [`Example::index`]) and
/// `f_i(x_t)` is an independent `Bernoulli(y*_t)` draw. Draws come from
/// [`unit_hash`] keyed by `(seed, i, t)`, so every query of the same pair
/// returns the same value without storing anything.
#[derive(Debug, Clone)]
pub struct LowerBoundPool {
    m: usize,
    seed: u64,
    labels: Arc<Vec<f64>>,
}

impl LowerBoundPool {
    pub fn new(m: usize, seed: u64, labels: Arc<Vec<f64>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("M", "pool needs at least one function"));
        }
        if let Some(p) = labels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid("labels", format!("Bernoulli mean {p} outside [0, 1]")));
        }
        Ok(LowerBoundPool { m, seed, labels })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// `(1/M) sum_i f_i(x)`, the uniform comparator.
    pub fn mean(&self, x: &Example) -> f64 {
        (0..self.m).map(|i| self.eval(i, x)).sum::<f64>() / self.m as f64
    }
}

impl FunctionPool for LowerBoundPool {
    fn len(&self) -> usize {
        self.m
    }

    fn eval(&self, i: usize, x: &Example) -> f64 {
        let t = x.index as usize;
        let p = self.labels.get(t).copied().unwrap_or(0.0);
        if unit_hash(self.seed, i as u64, x.index) < p {
            1.0
        } else {
            0.0
        }
    }

    fn bound(&self) -> f64 {
        1.0
    }
}

/// Pool of `M = round(N / c)` Bernoulli functions over the given label
/// sequence (`labels[t]` is `y*_t`).
pub fn make_lower_bound_pool(stages: usize, scale_c: f64, seed: u64, labels: Arc<Vec<f64>>) -> Result<LowerBoundPool> {
    if stages == 0 {
        return Err(Error::invalid("stages", "need at least one stage"));
    }
    if !(scale_c > 0.0 && scale_c <= 1.0) {
        return Err(Error::invalid("scale_c", format!("must lie in (0, 1], got {scale_c}")));
    }
    let m = (stages as f64 / scale_c).round() as usize;
    LowerBoundPool::new(m, seed, labels)
}
