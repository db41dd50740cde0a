use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{BaseLearner, FunctionPool, StageFeedback};
use crate::primitives::{Example, Prediction};
use crate::rng::unit_hash;

/// Learning-rate policy for exponential weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HedgeRate {
    /// Known horizon `T`: `eps = sqrt(8 ln M / T)`.
    Horizon { rounds: u64 },
    /// Doubling trick: epochs of length 1, 2, 4, ..., each restarted with
    /// the horizon rate for its length.
    Doubling,
}

/// How the weight vector becomes a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HedgeOutput {
    /// Weighted average of the pool outputs (deterministic).
    Mixture,
    /// One pool member drawn per round with probability proportional to its
    /// weight; the draw is keyed by `(seed, round)`.
    Sampled { seed: u64 },
}

/// Exponential weights over a finite scalar [`FunctionPool`].
///
/// The linear loss `g f_i(x)` of each member is rescaled to `[0, 1]` as
/// `(g f_i(x) + D) / (2D)` before the multiplicative update, and weights
/// are updated after the round's loss is observed.
#[derive(Debug, Clone)]
pub struct HedgeLearner<P> {
    pool: P,
    rate: HedgeRate,
    output: HedgeOutput,
    log_weights: Vec<f64>,
    round: u64,
    epoch_start: u64,
    epoch_len: u64,
    cache_index: Option<u64>,
    cache: Vec<f64>,
}

impl<P: FunctionPool> HedgeLearner<P> {
    pub fn new(pool: P, rate: HedgeRate, output: HedgeOutput) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::invalid("pool", "needs at least one function"));
        }
        if let HedgeRate::Horizon { rounds: 0 } = rate {
            return Err(Error::invalid("rounds", "horizon must be positive"));
        }
        let m = pool.len();
        Ok(HedgeLearner {
            pool,
            rate,
            output,
            log_weights: vec![0.0; m],
            round: 0,
            epoch_start: 0,
            epoch_len: 1,
            cache_index: None,
            cache: Vec::with_capacity(m),
        })
    }

    pub fn pool(&self) -> &P {
        &self.pool
    }

    /// Normalized weights.
    pub fn weights(&self) -> Vec<f64> {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }

    fn values(&mut self, x: &Example) -> &[f64] {
        if self.cache_index != Some(x.index) || self.cache.len() != self.pool.len() {
            self.pool.eval_all(x, &mut self.cache);
            self.cache_index = Some(x.index);
        }
        &self.cache
    }

    fn epsilon(&self) -> f64 {
        let ln_m = (self.pool.len() as f64).ln();
        let horizon = match self.rate {
            HedgeRate::Horizon { rounds } => rounds,
            HedgeRate::Doubling => self.epoch_len,
        };
        (8.0 * ln_m / horizon as f64).sqrt()
    }
}

impl<P: FunctionPool> BaseLearner for HedgeLearner<P> {
    fn predict(&mut self, x: &Example, _offset: Option<&Prediction>) -> Result<Prediction> {
        let w = self.weights();
        let output = self.output;
        let round = self.round;
        let vals = self.values(x);
        let y = match output {
            HedgeOutput::Mixture => w.iter().zip(vals).map(|(w, v)| w * v).sum(),
            HedgeOutput::Sampled { seed } => {
                let u = unit_hash(seed, round, 0);
                let mut acc = 0.0;
                let mut pick = vals.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    acc += wi;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                vals[pick]
            }
        };
        Ok(Prediction::scalar(y))
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        feedback.linear.validate()?;
        let g = match feedback.linear.gradient.as_slice() {
            [g] => *g,
            other => {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    actual: other.len(),
                })
            }
        };
        if let HedgeRate::Doubling = self.rate {
            if self.round - self.epoch_start >= self.epoch_len {
                self.epoch_start = self.round;
                self.epoch_len *= 2;
                self.log_weights.iter_mut().for_each(|l| *l = 0.0);
            }
        }
        let eps = self.epsilon();
        let d = self.pool.bound();
        self.values(x);
        for (l, v) in self.log_weights.iter_mut().zip(&self.cache) {
            *l -= eps * (g * v + d) / (2.0 * d);
        }
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max < -500.0 {
            self.log_weights.iter_mut().for_each(|l| *l -= max);
        }
        self.round += 1;
        Ok(())
    }

    fn output_bound(&self) -> f64 {
        self.pool.bound()
    }

    fn is_deterministic(&self) -> bool {
        matches!(self.output, HedgeOutput::Mixture)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{FixedPool, PoolFunction};
    use crate::rng;
    use rand::Rng;

    fn fb(g: f64) -> StageFeedback<'static> {
        StageFeedback::linear(Prediction::scalar(g))
    }

    fn at(t: u64) -> Example {
        Example::new(t, [], None).unwrap()
    }

    fn constants(vals: &[f64]) -> FixedPool {
        FixedPool::new(vals.iter().map(|v| PoolFunction::Constant { value: *v }).collect(), 1.0).unwrap()
    }

    #[test]
    fn symmetric_pool_uniform_mixture_is_zero() {
        let mut h = HedgeLearner::new(constants(&[0.7, -0.7]), HedgeRate::Doubling, HedgeOutput::Mixture).unwrap();
        assert_eq!(h.predict(&at(0), None).unwrap(), Prediction::scalar(0.0));
    }

    #[test]
    fn equal_losses_keep_weights_uniform() {
        let mut h = HedgeLearner::new(
            constants(&[0.5, 0.5]),
            HedgeRate::Horizon { rounds: 100 },
            HedgeOutput::Mixture,
        )
        .unwrap();
        for t in 0..50 {
            h.update(&at(t), &fb(if t % 2 == 0 { 1.0 } else { -0.3 })).unwrap();
        }
        assert_eq!(h.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn no_regret_against_best_arm() {
        let m = 8;
        let t_max = 5000u64;
        for seed in 0..5u64 {
            let mut r = rng::rng(seed);
            let arm_vals: Vec<Vec<f64>> = (0..t_max)
                .map(|_| (0..m).map(|_| r.random_range(-1.0..1.0)).collect())
                .collect();
            let gs: Vec<f64> = (0..t_max)
                .map(|t| ((t as f64) * 0.01).sin().signum() * r.random_range(0.2..1.0))
                .collect();
            struct Table(Vec<Vec<f64>>);
            impl FunctionPool for Table {
                fn len(&self) -> usize {
                    self.0[0].len()
                }
                fn eval(&self, i: usize, x: &Example) -> f64 {
                    self.0[x.index as usize][i]
                }
                fn bound(&self) -> f64 {
                    1.0
                }
            }
            for rate in [HedgeRate::Horizon { rounds: t_max }, HedgeRate::Doubling] {
                let mut h = HedgeLearner::new(Table(arm_vals.clone()), rate, HedgeOutput::Mixture).unwrap();
                let mut loss = 0.0;
                let mut arm_loss = vec![0.0; m];
                for t in 0..t_max {
                    let x = at(t);
                    let y = h.predict(&x, None).unwrap().first();
                    loss += gs[t as usize] * y;
                    for (a, v) in arm_loss.iter_mut().zip(&arm_vals[t as usize]) {
                        *a += gs[t as usize] * v;
                    }
                    h.update(&x, &fb(gs[t as usize])).unwrap();
                }
                let best = arm_loss.iter().cloned().fold(f64::INFINITY, f64::min);
                let cap = 2.0 * (t_max as f64 * (m as f64).ln()).sqrt();
                // The doubling trick costs a factor sqrt(2) / (sqrt(2) - 1).
                let slack = if rate == HedgeRate::Doubling {
                    2f64.sqrt() / (2f64.sqrt() - 1.0)
                } else {
                    1.0
                };
                assert!(
                    loss <= best + slack * cap,
                    "seed {seed} {rate:?}: {loss} > {best} + {cap}"
                );
            }
        }
    }

    #[test]
    fn sampled_output_is_a_pool_value_and_repeatable() {
        let pool = constants(&[0.1, 0.2, 0.3]);
        let mut a = HedgeLearner::new(pool.clone(), HedgeRate::Doubling, HedgeOutput::Sampled { seed: 4 }).unwrap();
        let mut b = HedgeLearner::new(pool, HedgeRate::Doubling, HedgeOutput::Sampled { seed: 4 }).unwrap();
        assert!(!a.is_deterministic());
        for t in 0..100 {
            let ya = a.predict(&at(t), None).unwrap().first();
            assert!([0.1, 0.2, 0.3].contains(&ya));
            assert_eq!(ya, a.predict(&at(t), None).unwrap().first());
            assert_eq!(ya, b.predict(&at(t), None).unwrap().first());
            a.update(&at(t), &fb(1.0)).unwrap();
            b.update(&at(t), &fb(1.0)).unwrap();
        }
    }

    #[test]
    fn rejects_oversized_feedback() {
        let mut h = HedgeLearner::new(constants(&[0.1]), HedgeRate::Doubling, HedgeOutput::Mixture).unwrap();
        assert!(h.update(&at(0), &fb(-1.01)).is_err());
    }
}
