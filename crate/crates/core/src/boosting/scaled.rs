use crate::error::{Error, Result};
use crate::learners::{BaseLearner, StageFeedback};
use crate::primitives::{Example, Prediction};

/// A learner for `lambda F`: predictions multiplied by `lambda`, feedback
/// passed through unchanged. Its linear regret is `lambda` times the
/// inner learner's.
#[derive(Debug, Clone)]
pub struct Scaled<L> {
    inner: L,
    lambda: f64,
}

pub fn scale_wrap<L: BaseLearner>(inner: L, lambda: f64) -> Result<Scaled<L>> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::invalid("scale", format!("lambda must be >= 1, got {lambda}")));
    }
    Ok(Scaled { inner, lambda })
}

impl<L> Scaled<L> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: BaseLearner> BaseLearner for Scaled<L> {
    fn predict(&mut self, x: &Example, offset: Option<&Prediction>) -> Result<Prediction> {
        let y = self.inner.predict(x, offset)?;
        Ok(if self.lambda == 1.0 { y } else { y.scaled(self.lambda) })
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        self.inner.update(x, feedback)
    }

    fn output_bound(&self) -> f64 {
        self.lambda * self.inner.output_bound()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{FixedPool, HedgeLearner, HedgeOutput, HedgeRate, LearningRate, OgdLearner, PoolFunction};
    use crate::rng;
    use rand::Rng;

    fn fb(g: f64) -> StageFeedback<'static> {
        StageFeedback::linear(Prediction::scalar(g))
    }

    #[test]
    fn rejects_shrinking() {
        let l = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        assert!(scale_wrap(l.clone(), 0.5).is_err());
        assert!(scale_wrap(l, f64::NAN).is_err());
    }

    #[test]
    fn unit_scale_is_transparent() {
        let l = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let mut a = l.clone();
        let mut s = scale_wrap(l, 1.0).unwrap();
        assert_eq!(s.output_bound(), 1.0);
        for t in 0..300 {
            let ex = Example::dense(t, &[(t as f64).sin(), 0.5], None).unwrap();
            assert_eq!(a.predict(&ex, None).unwrap(), s.predict(&ex, None).unwrap());
            let g = (t as f64 * 0.3).cos();
            a.update(&ex, &fb(g)).unwrap();
            s.update(&ex, &fb(g)).unwrap();
        }
    }

    #[test]
    fn scales_predictions() {
        let pool = FixedPool::new(vec![PoolFunction::Constant { value: 0.4 }], 1.0).unwrap();
        let h = HedgeLearner::new(pool, HedgeRate::Doubling, HedgeOutput::Mixture).unwrap();
        let mut s = scale_wrap(h, 3.0).unwrap();
        let ex = Example::dense(0, &[1.0], None).unwrap();
        assert!((s.predict(&ex, None).unwrap().first() - 1.2).abs() < 1e-15);
        assert_eq!(s.output_bound(), 3.0);
    }

    #[test]
    fn regret_scales_with_lambda() {
        let values = [0.9, -0.2, 0.5, -0.7];
        let pool = FixedPool::new(
            values.iter().map(|v| PoolFunction::Constant { value: *v }).collect(),
            1.0,
        )
        .unwrap();
        let lambda = 2.5;
        let t_max = 4000u64;
        for seed in 0..4u64 {
            let mut r = rng::rng(seed);
            let h =
                HedgeLearner::new(pool.clone(), HedgeRate::Horizon { rounds: t_max }, HedgeOutput::Mixture).unwrap();
            let mut s = scale_wrap(h, lambda).unwrap();
            let bias = r.random_range(-0.5..0.5);
            let mut loss = 0.0;
            let mut sum_g = 0.0;
            for t in 0..t_max {
                let ex = Example::new(t, [], None).unwrap();
                let g = (bias + r.random_range(-0.5..0.5f64)).clamp(-1.0, 1.0);
                loss += g * s.predict(&ex, None).unwrap().first();
                sum_g += g;
                s.update(&ex, &fb(g)).unwrap();
            }
            let best = values.iter().map(|v| lambda * v * sum_g).fold(f64::INFINITY, f64::min);
            let inner_regret = 2.0 * (t_max as f64 * (values.len() as f64).ln()).sqrt();
            assert!(loss <= best + lambda * inner_regret, "seed {seed}");
        }
    }
}
