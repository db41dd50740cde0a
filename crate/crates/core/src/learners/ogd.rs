use std::collections::BTreeMap;

use crate::error::Result;
use crate::learners::{check_bound, BaseLearner, LearningRate, StageFeedback};
use crate::primitives::{project, Example, FeatureId, Prediction};

/// Projected online gradient descent over linear maps `x -> W x`, with the
/// Frobenius norm of `W` kept within `D`.
///
/// The linear loss `g . (W x)` has gradient `g x^T`, so one step is
/// `W <- Pi_D(W - eta_t g x^T)` with `eta_t = D / (G sqrt(t))` by default,
/// `G` the largest `||x_t||` seen (an upper bound on `||g x^T||`). Outputs are additionally projected onto
/// the radius-`D` ball so the prediction bound holds for unnormalized
/// features too.
#[derive(Debug, Clone)]
pub struct OgdLearner {
    dim: usize,
    bound: f64,
    rate: LearningRate,
    weights: BTreeMap<FeatureId, Vec<f64>>,
    t: u64,
    max_grad: f64,
}

impl OgdLearner {
    pub fn new(dim: usize, bound: f64, rate: LearningRate) -> Result<Self> {
        check_bound(bound)?;
        Ok(OgdLearner {
            dim,
            bound,
            rate,
            weights: BTreeMap::new(),
            t: 0,
            max_grad: 0.0,
        })
    }

    pub fn weight(&self, id: FeatureId) -> Option<&[f64]> {
        self.weights.get(&id).map(Vec::as_slice)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights
            .values()
            .flat_map(|w| w.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn raw_output(&self, x: &Example) -> Prediction {
        let mut out = vec![0.0; self.dim];
        for f in x.features() {
            if let Some(w) = self.weights.get(&f.id) {
                for (o, wk) in out.iter_mut().zip(w) {
                    *o += wk * f.value;
                }
            }
        }
        Prediction::from_vec(out)
    }
}

impl BaseLearner for OgdLearner {
    fn predict(&mut self, x: &Example, _offset: Option<&Prediction>) -> Result<Prediction> {
        project(&self.raw_output(x), self.bound)
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        feedback.linear.validate()?;
        let g = feedback.linear.gradient.as_slice();
        self.t += 1;
        self.max_grad = self.max_grad.max(x.norm());
        let eta = self.rate.step(self.bound, self.max_grad, self.t);
        if eta == 0.0 || g.iter().all(|v| *v == 0.0) {
            return Ok(());
        }
        for f in x.features() {
            let w = self.weights.entry(f.id).or_insert_with(|| vec![0.0; g.len()]);
            for (wk, gk) in w.iter_mut().zip(g) {
                *wk -= eta * gk * f.value;
            }
        }
        let n = self.weight_norm();
        if n > self.bound {
            let s = self.bound / n;
            self.weights
                .values_mut()
                .flat_map(|w| w.iter_mut())
                .for_each(|v| *v *= s);
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
    use crate::learners::LinearFeedback;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn fb(g: f64) -> StageFeedback<'static> {
        StageFeedback::linear(Prediction::scalar(g))
    }

    #[test]
    fn zero_weights_predict_zero() {
        let mut l = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let x = Example::dense(0, &[0.3, -2.0], None).unwrap();
        assert_eq!(l.predict(&x, None).unwrap(), Prediction::scalar(0.0));
    }

    #[test]
    fn single_step_inside_ball() {
        let mut l = OgdLearner::new(1, 1.0, LearningRate::Constant { eta: 0.1 }).unwrap();
        let x = Example::dense(0, &[1.0], None).unwrap();
        l.update(&x, &fb(-1.0)).unwrap();
        assert_eq!(l.weight(FeatureId(1)).unwrap(), &[0.1]);
    }

    #[test]
    fn outward_step_is_projected_to_boundary() {
        let mut l = OgdLearner::new(1, 1.0, LearningRate::Constant { eta: 0.5 }).unwrap();
        let x = Example::dense(0, &[0.6, 0.8], None).unwrap();
        // Two steps along x: 0.5 x then 1.0 x, the second leaves the ball.
        l.update(&x, &fb(-1.0)).unwrap();
        assert!((l.weight_norm() - 0.5).abs() < 1e-15);
        l.update(&x, &fb(-1.0)).unwrap();
        assert!((l.weight_norm() - 1.0).abs() < 1e-12);
        // Direction is preserved by the projection.
        let w1 = l.weight(FeatureId(1)).unwrap()[0];
        let w2 = l.weight(FeatureId(2)).unwrap()[0];
        assert!((w1 - 0.6).abs() < 1e-12 && (w2 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn rejects_oversized_feedback() {
        let mut l = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let x = Example::dense(0, &[1.0], None).unwrap();
        assert!(l.update(&x, &fb(1.5)).is_err());
        assert!(l.update(&x, &fb(1.0 + 1e-12)).is_ok());
    }

    /// Offline best comparator for linear losses over the Frobenius ball:
    /// `W* = -D S / ||S||` with `S = sum_t g_t x_t^T`, loss `-D ||S||`.
    fn best_fixed_loss(stream: &[(Vec<f64>, f64)], bound: f64) -> f64 {
        let k = stream[0].0.len();
        let mut s = vec![0.0; k];
        for (x, g) in stream {
            for (sj, xj) in s.iter_mut().zip(x) {
                *sj += g * xj;
            }
        }
        -bound * s.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn no_regret_on_random_streams() {
        for seed in 0..8u64 {
            let mut r = rng::rng(seed);
            let t_max = 4000;
            let bias: f64 = r.random_range(-0.5..0.5);
            let stream: Vec<(Vec<f64>, f64)> = (0..t_max)
                .map(|_| {
                    let x: Vec<f64> = (0..4).map(|_| r.random_range(-0.5..0.5)).collect();
                    let g = (bias + r.random_range(-1.0..1.0f64)).clamp(-1.0, 1.0);
                    (x, g)
                })
                .collect();
            let bound = 1.0;
            let mut l = OgdLearner::new(1, bound, LearningRate::default()).unwrap();
            let mut loss = 0.0;
            let mut g_max: f64 = 0.0;
            for (i, (x, g)) in stream.iter().enumerate() {
                let ex = Example::dense(i as u64, x, None).unwrap();
                let y = l.predict(&ex, None).unwrap();
                loss += g * y.first();
                g_max = g_max.max(ex.norm() * g.abs());
                l.update(&ex, &fb(*g)).unwrap();
            }
            let best = best_fixed_loss(&stream, bound);
            let cap = 1.5 * bound * g_max * (t_max as f64).sqrt();
            assert!(loss <= best + cap, "seed {seed}: {loss} > {best} + {cap}");
        }
    }

    proptest! {
        #[test]
        fn predictions_stay_bounded(
            steps in prop::collection::vec((prop::collection::vec(-5.0..5.0f64, 3), -1.0..1.0f64), 1..60),
            bound in 0.1..3.0f64,
        ) {
            let mut l = OgdLearner::new(1, bound, LearningRate::Constant { eta: 2.0 }).unwrap();
            for (i, (x, g)) in steps.iter().enumerate() {
                let ex = Example::dense(i as u64, x, None).unwrap();
                let y = l.predict(&ex, None).unwrap();
                prop_assert!(y.norm() <= bound + 1e-9);
                l.update(&ex, &StageFeedback { linear: LinearFeedback::new((*g).into()), offset: None, loss: None }).unwrap();
                prop_assert!(l.weight_norm() <= bound * (1.0 + 1e-12));
            }
        }
    }
}
