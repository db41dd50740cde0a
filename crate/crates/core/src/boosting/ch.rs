use serde::{Deserialize, Serialize};

use crate::boosting::{checked_output, common_bound, take_pending, OnlineRegressor, RoundRecord, RoundTrace};
use crate::error::{Error, Result};
use crate::learners::{BaseLearner, LinearFeedback, StageFeedback};
use crate::losses::{BallParams, LossFamily, LossInstance};
use crate::primitives::{Example, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChConfig {
    pub stages: usize,
    pub loss: LossFamily,
    /// Pass `y^{i-1}` and the true loss to stage `i` (greedy base learners).
    pub greedy_offsets: bool,
    pub dim: usize,
}

impl ChConfig {
    pub fn new(stages: usize, loss: LossFamily) -> Self {
        ChConfig {
            stages,
            loss,
            greedy_offsets: false,
            dim: 1,
        }
    }
}

/// The convex-hull booster: online Frank-Wolfe with step sizes
/// `eta_i = 2 / (i + 1)`.
///
/// Since `eta_1 = 1`, `y^1` is exactly `A^1(x)`; with a single stage the
/// booster is the base learner trained on `grad l(0) / L_D`. Every partial
/// sum is a convex combination of stage outputs and stays within `D`.
#[derive(Debug, Clone)]
pub struct ChBooster<L> {
    config: ChConfig,
    learners: Vec<L>,
    bound: f64,
    params: BallParams,
    round: u64,
    pending: Option<RoundTrace>,
}

impl<L: BaseLearner> ChBooster<L> {
    pub fn new(config: ChConfig, learners: Vec<L>) -> Result<Self> {
        if learners.len() != config.stages {
            return Err(Error::invalid(
                "stages",
                format!("{} learners supplied for N = {}", learners.len(), config.stages),
            ));
        }
        if config.dim == 0 {
            return Err(Error::invalid("dim", "prediction dimension must be positive"));
        }
        let bound = common_bound(&learners)?;
        let params = config.loss.ball_params(bound)?;
        if !(params.lipschitz > 0.0) {
            return Err(Error::invalid(
                "loss",
                format!("{} has L_D = 0 at D = {bound}", config.loss),
            ));
        }
        Ok(ChBooster {
            config,
            learners,
            bound,
            params,
            round: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &ChConfig {
        &self.config
    }

    pub fn output_bound(&self) -> f64 {
        self.bound
    }

    /// Loss parameters at radius `D`.
    pub fn ball_params(&self) -> BallParams {
        self.params
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub fn learners(&self) -> &[L] {
        &self.learners
    }

    /// `eta_i` for the 1-based stage `i`.
    pub fn stage_step(i: usize) -> f64 {
        2.0 / (i as f64 + 1.0)
    }

    pub fn predict_traced(&mut self, x: &Example) -> Result<RoundTrace> {
        let n = self.config.stages;
        let mut partial_sums = Vec::with_capacity(n + 1);
        let mut base_outputs = Vec::with_capacity(n);
        partial_sums.push(Prediction::zeros(self.config.dim));
        for i in 0..n {
            let prev = &partial_sums[i];
            let offset = self.config.greedy_offsets.then_some(prev);
            let a = checked_output(&mut self.learners[i], x, offset, self.config.dim)?;
            let y = if i == 0 {
                a.clone()
            } else {
                let eta = Self::stage_step(i + 1);
                let mut y = prev.scaled(1.0 - eta);
                y.add_scaled(eta, &a);
                y
            };
            partial_sums.push(y);
            base_outputs.push(a);
        }
        let trace = RoundTrace {
            index: x.index,
            partial_sums,
            base_outputs,
        };
        self.pending = Some(trace.clone());
        Ok(trace)
    }

    pub fn update_traced(&mut self, x: &Example, loss: &LossInstance) -> Result<RoundRecord> {
        let trace = take_pending(&mut self.pending, x)?;
        if loss.target().dim() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                actual: loss.target().dim(),
            });
        }
        self.round += 1;
        let ld = self.params.lipschitz;
        let mut feedbacks = Vec::with_capacity(self.config.stages);
        for (i, learner) in self.learners.iter_mut().enumerate() {
            let prev = &trace.partial_sums[i];
            let fb = LinearFeedback::new(loss.gradient(prev).scaled(1.0 / ld));
            let stage = StageFeedback {
                linear: fb.clone(),
                offset: self.config.greedy_offsets.then_some(prev),
                loss: self.config.greedy_offsets.then_some(loss),
            };
            learner.update(x, &stage)?;
            feedbacks.push(fb);
        }
        Ok(RoundRecord { trace, feedbacks })
    }
}

impl<L: BaseLearner> OnlineRegressor for ChBooster<L> {
    fn predict(&mut self, x: &Example) -> Result<Prediction> {
        Ok(self.predict_traced(x)?.prediction().clone())
    }

    fn update(&mut self, x: &Example, loss: &LossInstance) -> Result<()> {
        self.update_traced(x, loss).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::ZeroAnchored;
    use crate::learners::{LearningRate, OgdLearner};
    use crate::rng;
    use rand::Rng;

    #[derive(Debug, Clone)]
    struct Fixed(f64);

    impl BaseLearner for Fixed {
        fn predict(&mut self, _x: &Example, _o: Option<&Prediction>) -> Result<Prediction> {
            Ok(Prediction::scalar(self.0))
        }
        fn update(&mut self, _x: &Example, fb: &StageFeedback<'_>) -> Result<()> {
            fb.linear.validate()
        }
        fn output_bound(&self) -> f64 {
            1.0
        }
    }

    fn x(t: u64) -> Example {
        Example::dense(t, &[1.0], None).unwrap()
    }

    #[test]
    fn two_stage_weights() {
        let (a, b) = (0.3, -0.9);
        let mut ch = ChBooster::new(ChConfig::new(2, LossFamily::Squared), vec![Fixed(a), Fixed(b)]).unwrap();
        let y = ch.predict(&x(0)).unwrap().first();
        assert!((y - (a / 3.0 + 2.0 * b / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_arms_are_a_fixed_point() {
        let mut ch = ChBooster::new(ChConfig::new(7, LossFamily::Squared), vec![Fixed(0.37); 7]).unwrap();
        let y = ch.predict(&x(0)).unwrap().first();
        assert!((y - 0.37).abs() < 1e-15);
    }

    #[test]
    fn three_stage_unroll() {
        let mut ch = ChBooster::new(
            ChConfig::new(3, LossFamily::Squared),
            vec![Fixed(1.0), Fixed(0.0), Fixed(1.0)],
        )
        .unwrap();
        let t = ch.predict_traced(&x(0)).unwrap();
        assert_eq!(t.partial_sums[1].first(), 1.0);
        assert!((t.partial_sums[2].first() - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.partial_sums[3].first() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn first_feedback_is_scaled_gradient_at_zero() {
        let mut ch = ChBooster::new(ChConfig::new(2, LossFamily::Squared), vec![Fixed(0.5); 2]).unwrap();
        let ld = ch.ball_params().lipschitz;
        assert_eq!(ld, 2.0);
        ch.predict(&x(0)).unwrap();
        let loss = LossFamily::Squared.instance(Prediction::scalar(1.0)).unwrap();
        let rec = ch.update_traced(&x(0), &loss).unwrap();
        assert_eq!(rec.feedbacks[0].gradient.first(), -1.0 / ld);
        assert_eq!(rec.feedbacks[1].gradient.first(), (0.5 - 1.0) / ld);
    }

    #[test]
    fn zero_gradients_are_zero_feedback() {
        let mut ch = ChBooster::new(ChConfig::new(3, LossFamily::Linear), vec![Fixed(0.5); 3]).unwrap();
        ch.predict(&x(0)).unwrap();
        let loss = LossFamily::Linear.instance(Prediction::scalar(0.0)).unwrap();
        let rec = ch.update_traced(&x(0), &loss).unwrap();
        assert!(rec.feedbacks.iter().all(|f| f.norm() == 0.0));
    }

    #[test]
    fn single_stage_matches_zero_anchored_learner() {
        let ogd = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let mut ch = ChBooster::new(ChConfig::new(1, LossFamily::Squared), vec![ogd.clone()]).unwrap();
        let mut bare = ZeroAnchored::new(ogd, LossFamily::Squared).unwrap();
        let mut r = rng::rng(8);
        for t in 0..2000 {
            let ex = Example::dense(t, &[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)], None).unwrap();
            let a = ch.predict(&ex).unwrap();
            let b = bare.predict(&ex).unwrap();
            assert_eq!(a.first().to_bits(), b.first().to_bits());
            let loss = LossFamily::Squared
                .instance(Prediction::scalar(r.random_range(-1.0..1.0)))
                .unwrap();
            ch.update(&ex, &loss).unwrap();
            bare.update(&ex, &loss).unwrap();
        }
    }

    #[test]
    fn feedback_norms_stay_within_one() {
        for family in [
            LossFamily::Squared,
            LossFamily::Logistic,
            LossFamily::ModifiedLeastSquares,
            LossFamily::PNorm { p: 3.0 },
        ] {
            let learners: Vec<OgdLearner> = (0..6)
                .map(|_| OgdLearner::new(1, 1.0, LearningRate::Constant { eta: 0.7 }).unwrap())
                .collect();
            let mut ch = ChBooster::new(ChConfig::new(6, family), learners).unwrap();
            let mut r = rng::rng(2);
            for t in 0..3000 {
                let ex = Example::dense(t, &[r.random_range(-2.0..2.0), 1.0], None).unwrap();
                let tr = ch.predict_traced(&ex).unwrap();
                assert!(tr.partial_sums.iter().all(|y| y.norm() <= 1.0 + 1e-9));
                let loss = family.instance(Prediction::scalar(r.random_range(-1.0..1.0))).unwrap();
                let rec = ch.update_traced(&ex, &loss).unwrap();
                assert!(rec.feedbacks.iter().all(|f| f.norm() <= 1.0 + 1e-9));
            }
        }
    }
}
