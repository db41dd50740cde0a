use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{check_bound, BaseLearner, FunctionPool, HedgeRate, StageFeedback, FEEDBACK_TOLERANCE};
use crate::losses::{LossFamily, LossInstance};
use crate::primitives::{Example, Prediction};

/// A base learner that fits the true loss around an offset: in each round it
/// sees `x` and an offset `y'`, predicts `A(x)` with `||A(x)|| <= D`, and is
/// charged `loss(y' + alpha A(x))`.
pub trait GreedyBaseLearner: Send {
    fn predict(&mut self, x: &Example, offset: &Prediction) -> Result<Prediction>;

    fn update(&mut self, x: &Example, offset: &Prediction, step: f64, loss: &LossInstance) -> Result<()>;

    fn output_bound(&self) -> f64;
}

/// Which regret assumption fixes the step size `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// `R(T)` independent of `alpha`: `alpha = sqrt(2 R(T) / (beta D^2 T))`.
    #[default]
    Sqrt,
    /// `R(T) = alpha R'(T)`: `alpha = 2 R'(T) / (beta D^2 T)`.
    AlphaLinear,
}

/// `R(T) = coefficient * T^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretModel {
    pub coefficient: f64,
    pub exponent: f64,
}

impl RegretModel {
    pub fn sqrt() -> Self {
        RegretModel {
            coefficient: 1.0,
            exponent: 0.5,
        }
    }

    pub fn eval(&self, rounds: u64) -> f64 {
        self.coefficient * (rounds as f64).powf(self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub horizon: u64,
    pub regret: RegretModel,
    pub rule: StepRule,
    /// `beta_{B'}`, smoothness of the loss on the ball containing every
    /// `y' + alpha A(x)`.
    pub smoothness: f64,
    /// `B`, the bound on offsets.
    pub offset_bound: f64,
    /// `D`, the bound on the inner learner's outputs.
    pub output_bound: f64,
}

impl GreedyConfig {
    /// Config for a loss family. `beta_{B'}` depends on `B' = B + alpha D`,
    /// which depends on `alpha`; `alpha` is computed at `beta_B`, then again
    /// at `beta` of the resulting (larger) `B'`. Since `beta_b` is
    /// nondecreasing, the second `alpha` is no larger than the first and the
    /// smoothness used upper-bounds the one at its own `B'`.
    pub fn for_loss(
        family: LossFamily,
        offset_bound: f64,
        output_bound: f64,
        horizon: u64,
        regret: RegretModel,
        rule: StepRule,
    ) -> Result<Self> {
        let mut cfg = GreedyConfig {
            horizon,
            regret,
            rule,
            smoothness: family.ball_params(offset_bound)?.smoothness,
            offset_bound,
            output_bound,
        };
        let alpha0 = cfg.step_size()?;
        cfg.smoothness = family.ball_params(offset_bound + alpha0 * output_bound)?.smoothness;
        cfg.step_size()?;
        Ok(cfg)
    }

    pub fn step_size(&self) -> Result<f64> {
        self.validate()?;
        let r = self.regret.eval(self.horizon);
        let denom = self.smoothness * self.output_bound * self.output_bound * self.horizon as f64;
        Ok(match self.rule {
            StepRule::Sqrt => (2.0 * r / denom).sqrt(),
            StepRule::AlphaLinear => 2.0 * r / denom,
        })
    }

    /// Excess linear regret of the adapted learner over `horizon` rounds.
    pub fn excess_bound(&self) -> f64 {
        let r = self.regret.eval(self.horizon);
        match self.rule {
            StepRule::Sqrt => (2.0 * self.smoothness * self.output_bound.powi(2) * self.horizon as f64 * r).sqrt(),
            StepRule::AlphaLinear => 2.0 * r,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be positive"));
        }
        if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
            return Err(Error::invalid(
                "smoothness",
                format!("greedy step size needs beta > 0, got {}", self.smoothness),
            ));
        }
        if !(self.regret.coefficient >= 0.0) || !self.regret.exponent.is_finite() {
            return Err(Error::invalid("regret", "coefficient must be non-negative"));
        }
        check_bound(self.offset_bound)?;
        check_bound(self.output_bound)
    }
}

/// Exposes a [`GreedyBaseLearner`] through the [`BaseLearner`] contract.
///
/// The adapter needs the booster to run in greedy-offset mode: predictions
/// require the offset, and updates forward the offset, the fixed step size
/// and the round's true loss. The linear feedback itself is only checked.
#[derive(Debug, Clone)]
pub struct GreedyAdapter<G> {
    inner: G,
    step: f64,
    offset_bound: f64,
}

impl<G: GreedyBaseLearner> GreedyAdapter<G> {
    pub fn new(inner: G, config: &GreedyConfig) -> Result<Self> {
        let step = config.step_size()?;
        Ok(GreedyAdapter {
            inner,
            step,
            offset_bound: config.offset_bound,
        })
    }

    /// Adapter with an explicit step size (`alpha = 0` allowed).
    pub fn with_step(inner: G, step: f64, offset_bound: f64) -> Result<Self> {
        if !(step >= 0.0) || !step.is_finite() {
            return Err(Error::invalid("alpha", format!("must be non-negative, got {step}")));
        }
        check_bound(offset_bound)?;
        Ok(GreedyAdapter {
            inner,
            step,
            offset_bound,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn inner(&self) -> &G {
        &self.inner
    }

    fn check_offset<'a>(&self, offset: Option<&'a Prediction>) -> Result<&'a Prediction> {
        let offset = offset
            .ok_or_else(|| Error::Contract("greedy base learner needs an offset; enable greedy offsets".into()))?;
        if offset.norm() > self.offset_bound * (1.0 + FEEDBACK_TOLERANCE) {
            return Err(Error::Contract(format!(
                "offset norm {} exceeds declared bound {}",
                offset.norm(),
                self.offset_bound
            )));
        }
        Ok(offset)
    }
}

impl<G: GreedyBaseLearner> BaseLearner for GreedyAdapter<G> {
    fn predict(&mut self, x: &Example, offset: Option<&Prediction>) -> Result<Prediction> {
        let offset = self.check_offset(offset)?;
        self.inner.predict(x, offset)
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        feedback.linear.validate()?;
        let offset = self.check_offset(feedback.offset)?;
        let loss = feedback
            .loss
            .ok_or_else(|| Error::Contract("greedy base learner needs the round's loss".into()))?;
        self.inner.update(x, offset, self.step, loss)
    }

    fn output_bound(&self) -> f64 {
        self.inner.output_bound()
    }
}

/// Greedy fitting over a finite pool by exponential weights on the true
/// losses `loss(y' + alpha f_i(x))`.
///
/// Losses are centred at `loss(y')` and scaled by `L alpha D`, where `L` is
/// a Lipschitz constant of the loss on the ball holding `y' + alpha f(x)`,
/// which maps every round's losses into `[0, 1]`. The prediction is the
/// weighted mixture of the pool outputs.
#[derive(Debug, Clone)]
pub struct GreedyPoolLearner<P> {
    pool: P,
    lipschitz: f64,
    rate: HedgeRate,
    log_weights: Vec<f64>,
    round: u64,
    epoch_start: u64,
    epoch_len: u64,
    values: Vec<f64>,
}

impl<P: FunctionPool> GreedyPoolLearner<P> {
    pub fn new(pool: P, lipschitz: f64, rate: HedgeRate) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::invalid("pool", "needs at least one function"));
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::invalid(
                "lipschitz",
                format!("must be positive, got {lipschitz}"),
            ));
        }
        let m = pool.len();
        Ok(GreedyPoolLearner {
            pool,
            lipschitz,
            rate,
            log_weights: vec![0.0; m],
            round: 0,
            epoch_start: 0,
            epoch_len: 1,
            values: Vec::with_capacity(m),
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|v| v / z).collect()
    }
}

impl<P: FunctionPool> GreedyBaseLearner for GreedyPoolLearner<P> {
    fn predict(&mut self, x: &Example, _offset: &Prediction) -> Result<Prediction> {
        self.pool.eval_all(x, &mut self.values);
        let y = self.weights().iter().zip(&self.values).map(|(w, v)| w * v).sum();
        Ok(Prediction::scalar(y))
    }

    fn update(&mut self, x: &Example, offset: &Prediction, step: f64, loss: &LossInstance) -> Result<()> {
        if offset.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: offset.dim(),
            });
        }
        if let HedgeRate::Doubling = self.rate {
            if self.round - self.epoch_start >= self.epoch_len {
                self.epoch_start = self.round;
                self.epoch_len *= 2;
                self.log_weights.iter_mut().for_each(|l| *l = 0.0);
            }
        }
        self.round += 1;
        let scale = self.lipschitz * step * self.pool.bound();
        if scale == 0.0 {
            return Ok(());
        }
        let horizon = match self.rate {
            HedgeRate::Horizon { rounds } => rounds,
            HedgeRate::Doubling => self.epoch_len,
        };
        let eps = (8.0 * (self.pool.len() as f64).ln() / horizon as f64).sqrt();
        let base = loss.evaluate(offset);
        let y0 = offset.first();
        self.pool.eval_all(x, &mut self.values);
        for (l, v) in self.log_weights.iter_mut().zip(&self.values) {
            let li = loss.evaluate(&Prediction::scalar(y0 + step * v));
            let normalized = ((li - base) / scale + 1.0) / 2.0;
            *l -= eps * normalized.clamp(0.0, 1.0);
        }
        Ok(())
    }

    fn output_bound(&self) -> f64 {
        self.pool.bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{FixedPool, PoolFunction};
    use crate::rng;
    use rand::Rng;

    fn hand_config(rule: StepRule) -> GreedyConfig {
        GreedyConfig {
            horizon: 10_000,
            regret: RegretModel::sqrt(),
            rule,
            smoothness: 1.0,
            offset_bound: 1.0,
            output_bound: 1.0,
        }
    }

    #[test]
    fn step_sizes_match_hand_evaluation() {
        let a = hand_config(StepRule::Sqrt).step_size().unwrap();
        assert!((a - (2.0f64 * 100.0 / 10_000.0).sqrt()).abs() < 1e-12);
        assert!((a - 0.141_421_356_237).abs() < 1e-9);
        let b = hand_config(StepRule::AlphaLinear).step_size().unwrap();
        assert!((b - 0.02).abs() < 1e-12);
    }

    #[test]
    fn excess_bounds() {
        // sqrt(2 * 1 * 1 * 10^4 * 100) and 2 * 100.
        assert!((hand_config(StepRule::Sqrt).excess_bound() - 2_000_000f64.sqrt()).abs() < 1e-9);
        assert_eq!(hand_config(StepRule::AlphaLinear).excess_bound(), 200.0);
    }

    #[test]
    fn linear_loss_has_no_greedy_step() {
        let mut cfg = hand_config(StepRule::Sqrt);
        cfg.smoothness = 0.0;
        assert!(cfg.step_size().is_err());
    }

    fn small_pool() -> FixedPool {
        FixedPool::new(
            vec![
                PoolFunction::Constant { value: 1.0 },
                PoolFunction::Constant { value: -1.0 },
                PoolFunction::Stump {
                    feature: 1,
                    threshold: 0.0,
                    low: -1.0,
                    high: 1.0,
                },
                PoolFunction::Zero,
            ],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_step_sees_constant_loss() {
        let inner = GreedyPoolLearner::new(small_pool(), 2.0, HedgeRate::Doubling).unwrap();
        let mut a = GreedyAdapter::with_step(inner, 0.0, 1.0).unwrap();
        let loss = LossFamily::Squared.instance(Prediction::scalar(0.3)).unwrap();
        let offset = Prediction::scalar(0.5);
        for t in 0..200 {
            let x = Example::dense(t, &[if t % 2 == 0 { 1.0 } else { -1.0 }], None).unwrap();
            let y = a.predict(&x, Some(&offset)).unwrap();
            assert!(y.norm() <= 1.0);
            let fb = StageFeedback {
                linear: crate::learners::LinearFeedback::new(Prediction::scalar(0.1)),
                offset: Some(&offset),
                loss: Some(&loss),
            };
            a.update(&x, &fb).unwrap();
        }
        assert_eq!(a.inner().weights(), vec![0.25; 4]);
    }

    #[test]
    fn adapter_rejects_missing_or_large_offsets() {
        let inner = GreedyPoolLearner::new(small_pool(), 2.0, HedgeRate::Doubling).unwrap();
        let mut a = GreedyAdapter::with_step(inner, 0.1, 1.0).unwrap();
        let x = Example::dense(0, &[1.0], None).unwrap();
        assert!(a.predict(&x, None).is_err());
        assert!(a.predict(&x, Some(&Prediction::scalar(1.5))).is_err());
        assert!(a.predict(&x, Some(&Prediction::scalar(-1.0))).is_ok());
        let fb = StageFeedback::linear(Prediction::scalar(0.2));
        assert!(a.update(&x, &fb).is_err());
    }

    #[test]
    fn adapted_linear_regret_within_bound() {
        // Squared loss, offsets in [-1, 1], labels in [-1, 1]. On the ball of
        // radius B' = 1 + alpha the loss is (2 + alpha)-Lipschitz, so the
        // pool learner's true-loss regret is alpha * R'(T) with
        // R'(T) = 2 L D sqrt(T ln M / 2).
        let pool = small_pool();
        let m = pool.len() as f64;
        for seed in 0..5u64 {
            let t_max = 6000u64;
            let lipschitz = 2.2;
            let r_prime = 2.0 * lipschitz * (t_max as f64 * m.ln() / 2.0).sqrt();
            let cfg = GreedyConfig {
                horizon: t_max,
                regret: RegretModel {
                    coefficient: r_prime / (t_max as f64).sqrt(),
                    exponent: 0.5,
                },
                rule: StepRule::AlphaLinear,
                smoothness: 1.0,
                offset_bound: 1.0,
                output_bound: 1.0,
            };
            let alpha = cfg.step_size().unwrap();
            assert!(alpha <= 0.2);
            let inner = GreedyPoolLearner::new(pool.clone(), lipschitz, HedgeRate::Horizon { rounds: t_max }).unwrap();
            let mut a = GreedyAdapter::new(inner, &cfg).unwrap();
            let mut r = rng::rng(seed);
            let mut lin = 0.0;
            let mut per_fn = vec![0.0; pool.len()];
            for t in 0..t_max {
                let xv: f64 = r.random_range(-1.0..1.0);
                let x = Example::dense(t, &[xv], None).unwrap();
                let label = (0.6 * xv.signum() + r.random_range(-0.3..0.3)).clamp(-1.0, 1.0);
                let loss = LossFamily::Squared.instance(Prediction::scalar(label)).unwrap();
                let offset = Prediction::scalar(r.random_range(-1.0..1.0));
                let y = a.predict(&x, Some(&offset)).unwrap();
                let grad = loss.gradient(&offset);
                lin += grad.dot(&y).unwrap();
                for (i, c) in per_fn.iter_mut().enumerate() {
                    *c += grad.first() * pool.eval(i, &x);
                }
                let fb = StageFeedback {
                    linear: crate::learners::LinearFeedback::new(grad.scaled(1.0 / 3.0)),
                    offset: Some(&offset),
                    loss: Some(&loss),
                };
                a.update(&x, &fb).unwrap();
            }
            let best = per_fn.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(
                lin <= best + cfg.excess_bound(),
                "seed {seed}: {lin} > {best} + {}",
                cfg.excess_bound()
            );
        }
    }
}
