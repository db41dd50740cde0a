use crate::boosting::OnlineRegressor;
use crate::error::{Error, Result};
use crate::learners::{BaseLearner, LinearFeedback, StageFeedback};
use crate::losses::{LossFamily, LossInstance};
use crate::primitives::{Example, Prediction};

fn lipschitz_at_bound(family: LossFamily, bound: f64) -> Result<f64> {
    let l = family.ball_params(bound)?.lipschitz;
    if !(l > 0.0) {
        return Err(Error::invalid("loss", format!("{family} has L_D = 0 at D = {bound}")));
    }
    Ok(l)
}

/// A single base learner used directly as a regressor, trained on the
/// linearization of the loss at its own prediction, `grad l(y) / L_D`.
#[derive(Debug, Clone)]
pub struct Standalone<L> {
    learner: L,
    lipschitz: f64,
    pending: Option<(u64, Prediction)>,
}

impl<L: BaseLearner> Standalone<L> {
    pub fn new(learner: L, family: LossFamily) -> Result<Self> {
        let lipschitz = lipschitz_at_bound(family, learner.output_bound())?;
        Ok(Standalone {
            learner,
            lipschitz,
            pending: None,
        })
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }
}

impl<L: BaseLearner> OnlineRegressor for Standalone<L> {
    fn predict(&mut self, x: &Example) -> Result<Prediction> {
        let y = self.learner.predict(x, None)?;
        self.pending = Some((x.index, y.clone()));
        Ok(y)
    }

    fn update(&mut self, x: &Example, loss: &LossInstance) -> Result<()> {
        let y = match self.pending.take() {
            Some((idx, y)) if idx == x.index => y,
            _ => return Err(Error::Protocol("update called without a matching predict")),
        };
        let g = LinearFeedback::new(loss.gradient(&y).scaled(1.0 / self.lipschitz));
        self.learner.update(
            x,
            &StageFeedback {
                linear: g,
                offset: None,
                loss: None,
            },
        )
    }
}

/// A single base learner trained on `grad l(0) / L_D` every round: exactly
/// what the first stage of the convex-hull booster sees.
#[derive(Debug, Clone)]
pub struct ZeroAnchored<L> {
    learner: L,
    lipschitz: f64,
}

impl<L: BaseLearner> ZeroAnchored<L> {
    pub fn new(learner: L, family: LossFamily) -> Result<Self> {
        let lipschitz = lipschitz_at_bound(family, learner.output_bound())?;
        Ok(ZeroAnchored { learner, lipschitz })
    }
}

impl<L: BaseLearner> OnlineRegressor for ZeroAnchored<L> {
    fn predict(&mut self, x: &Example) -> Result<Prediction> {
        self.learner.predict(x, None)
    }

    fn update(&mut self, x: &Example, loss: &LossInstance) -> Result<()> {
        let zero = Prediction::zeros(loss.target().dim());
        let g = LinearFeedback::new(loss.gradient(&zero).scaled(1.0 / self.lipschitz));
        self.learner.update(
            x,
            &StageFeedback {
                linear: g,
                offset: None,
                loss: None,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LearningRate, OgdLearner};

    #[test]
    fn standalone_learns_a_constant() {
        let ogd = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let mut s = Standalone::new(ogd, LossFamily::Squared).unwrap();
        let mut last = 0.0;
        for t in 0..5000 {
            let ex = Example::dense(t, &[1.0], None).unwrap();
            last = s.predict(&ex).unwrap().first();
            let loss = LossFamily::Squared.instance(Prediction::scalar(0.6)).unwrap();
            s.update(&ex, &loss).unwrap();
        }
        assert!((last - 0.6).abs() < 0.05, "{last}");
    }

    #[test]
    fn standalone_requires_predict_first() {
        let ogd = OgdLearner::new(1, 1.0, LearningRate::default()).unwrap();
        let mut s = Standalone::new(ogd, LossFamily::Squared).unwrap();
        let ex = Example::dense(0, &[1.0], None).unwrap();
        let loss = LossFamily::Squared.instance(Prediction::scalar(0.6)).unwrap();
        assert!(s.update(&ex, &loss).is_err());
    }
}
