use std::collections::BTreeMap;

use crate::error::Result;
use crate::learners::{check_bound, BaseLearner, LearningRate, StageFeedback};
use crate::primitives::{project, Example, FeatureId, Prediction};

#[derive(Debug, Clone)]
struct FeatureModel {
    weight: Vec<f64>,
    rounds: u64,
    max_abs: f64,
    cum_loss: f64,
}

/// Online regression stumps.
///
/// Each feature `j` carries its own scalar online gradient descent model
/// `x -> w_j x_j`. The learner predicts with the model of the feature, among
/// those present in the example, whose cumulative linear loss so far is
/// lowest (ties go to the smaller id). An example with no non-zero features
/// gets `0`.
///
/// Every present feature is charged the linear loss of its own prediction
/// and takes one projected gradient step, with `|w_j| <= D / G_j` where
/// `G_j` is the largest `|x_j|` seen.
#[derive(Debug, Clone)]
pub struct StumpLearner {
    dim: usize,
    bound: f64,
    rate: LearningRate,
    models: BTreeMap<FeatureId, FeatureModel>,
}

impl StumpLearner {
    pub fn new(dim: usize, bound: f64, rate: LearningRate) -> Result<Self> {
        check_bound(bound)?;
        Ok(StumpLearner {
            dim,
            bound,
            rate,
            models: BTreeMap::new(),
        })
    }

    /// Feature the next prediction on `x` would use.
    pub fn leader(&self, x: &Example) -> Option<FeatureId> {
        let mut best: Option<(FeatureId, f64)> = None;
        for f in x.features() {
            let loss = self.models.get(&f.id).map_or(0.0, |m| m.cum_loss);
            if best.is_none_or(|(_, l)| loss < l) {
                best = Some((f.id, loss));
            }
        }
        best.map(|(id, _)| id)
    }

    pub fn cumulative_loss(&self, id: FeatureId) -> f64 {
        self.models.get(&id).map_or(0.0, |m| m.cum_loss)
    }

    fn feature_output(&self, id: FeatureId, value: f64) -> Result<Prediction> {
        match self.models.get(&id) {
            Some(m) => project(
                &Prediction::from_vec(m.weight.iter().map(|w| w * value).collect()),
                self.bound,
            ),
            None => Ok(Prediction::zeros(self.dim)),
        }
    }
}

impl BaseLearner for StumpLearner {
    fn predict(&mut self, x: &Example, _offset: Option<&Prediction>) -> Result<Prediction> {
        match self.leader(x) {
            Some(id) => self.feature_output(id, x.value(id)),
            None => Ok(Prediction::zeros(self.dim)),
        }
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        feedback.linear.validate()?;
        let g = feedback.linear.gradient.as_slice();
        for f in x.features() {
            let out = self.feature_output(f.id, f.value)?;
            let loss = feedback.linear.loss(&out);
            let dim = self.dim;
            let m = self.models.entry(f.id).or_insert_with(|| FeatureModel {
                weight: vec![0.0; dim],
                rounds: 0,
                max_abs: 0.0,
                cum_loss: 0.0,
            });
            m.cum_loss += loss;
            m.rounds += 1;
            m.max_abs = m.max_abs.max(f.value.abs());
            let radius = self.bound / m.max_abs;
            let eta = self.rate.step(radius, m.max_abs, m.rounds);
            for (w, gk) in m.weight.iter_mut().zip(g) {
                *w -= eta * gk * f.value;
            }
            let n = crate::primitives::norm(&m.weight);
            if n > radius {
                let s = radius / n;
                m.weight.iter_mut().for_each(|w| *w *= s);
            }
        }
        Ok(())
    }

    fn output_bound(&self) -> f64 {
        self.bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn fb(g: f64) -> StageFeedback<'static> {
        StageFeedback::linear(Prediction::scalar(g))
    }

    #[test]
    fn empty_example_predicts_zero() {
        let mut l = StumpLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let x = Example::dense(0, &[0.0, 0.0], None).unwrap();
        l.update(&Example::dense(1, &[1.0], None).unwrap(), &fb(-1.0)).unwrap();
        assert_eq!(l.predict(&x, None).unwrap(), Prediction::scalar(0.0));
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let l = StumpLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let x = Example::dense(0, &[0.0, 2.0, 3.0], None).unwrap();
        assert_eq!(l.leader(&x), Some(FeatureId(2)));
    }

    #[test]
    fn picks_feature_with_lowest_cumulative_loss() {
        let mut l = StumpLearner::new(1, 1.0, LearningRate::Constant { eta: 0.5 }).unwrap();
        // Feature 1 learns a positive weight, so it earns negative loss while
        // the feedback keeps pointing down; feature 2 only appears later.
        for t in 0..5 {
            l.update(&Example::dense(t, &[1.0], None).unwrap(), &fb(-1.0)).unwrap();
        }
        let both = Example::dense(9, &[1.0, 1.0], None).unwrap();
        assert!(l.cumulative_loss(FeatureId(1)) < 0.0);
        assert_eq!(l.leader(&both), Some(FeatureId(1)));
        assert_eq!(l.predict(&both, None).unwrap(), Prediction::scalar(1.0));
    }

    #[test]
    fn outputs_stay_bounded() {
        let mut r = rng::rng(3);
        let mut l = StumpLearner::new(1, 0.7, LearningRate::Constant { eta: 3.0 }).unwrap();
        for t in 0..2000 {
            let x: Vec<f64> = (0..6).map(|_| r.random_range(-4.0..4.0)).collect();
            let ex = Example::dense(t, &x, None).unwrap();
            assert!(l.predict(&ex, None).unwrap().norm() <= 0.7 + 1e-12);
            l.update(&ex, &fb(r.random_range(-1.0..1.0))).unwrap();
        }
    }

    #[test]
    fn within_regret_sum_of_zero_predictor() {
        // The zero predictor's linear loss is 0; the stump learner may not
        // trail it by more than the sum of per-feature OGD regret caps.
        for seed in 0..6u64 {
            let mut r = rng::rng(seed);
            let k = 5;
            let mut l = StumpLearner::new(1, 1.0, LearningRate::default()).unwrap();
            let mut loss = 0.0;
            let mut seen = vec![0u64; k];
            let mut g_max = vec![0.0f64; k];
            let drift: Vec<f64> = (0..k).map(|_| r.random_range(-0.6..0.6)).collect();
            for t in 0..5000 {
                let x: Vec<f64> = (0..k)
                    .map(|_| {
                        if r.random_bool(0.5) {
                            r.random_range(-1.0..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let ex = Example::dense(t, &x, None).unwrap();
                let y = l.predict(&ex, None).unwrap().first();
                let lead = l.leader(&ex).map(|id| id.0 as usize - 1);
                let g = (lead.map_or(0.0, |j| drift[j]) + r.random_range(-0.5..0.5f64)).clamp(-1.0, 1.0);
                loss += g * y;
                for (j, v) in x.iter().enumerate() {
                    if *v != 0.0 {
                        seen[j] += 1;
                        g_max[j] = g_max[j].max(v.abs());
                    }
                }
                l.update(&ex, &fb(g)).unwrap();
            }
            let cap: f64 = (0..k).map(|j| 1.5 * 2.0 * (seen[j] as f64).sqrt()).sum();
            assert!(loss <= cap, "seed {seed}: {loss} > {cap}");
        }
    }
}
