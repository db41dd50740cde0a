use crate::error::{Error, Result};
use crate::learners::{BaseLearner, HedgeRate, StageFeedback};
use crate::primitives::{Example, Prediction};

/// A learner for `F`, a copy run on `-F`, and the zero function, mixed by
/// exponential weights.
///
/// The second copy is fed the negated feedback and its output negated, so
/// the composite competes with `F u -F u {0}`. The output is the weighted
/// convex combination of the three arms, so it stays within `D` and is
/// deterministic whenever the inner learner is.
#[derive(Debug, Clone)]
pub struct Symmetrized<L> {
    plus: L,
    minus: L,
    rate: HedgeRate,
    log_weights: [f64; 3],
    round: u64,
    epoch_start: u64,
    epoch_len: u64,
    arms: Option<(u64, [Prediction; 3])>,
}

/// Wraps a fresh learner; the copy for `-F` is cloned from it.
pub fn symmetrize<L: BaseLearner + Clone>(learner: L, rate: HedgeRate) -> Result<Symmetrized<L>> {
    if let HedgeRate::Horizon { rounds: 0 } = rate {
        return Err(Error::invalid("rounds", "horizon must be positive"));
    }
    Ok(Symmetrized {
        minus: learner.clone(),
        plus: learner,
        rate,
        log_weights: [0.0; 3],
        round: 0,
        epoch_start: 0,
        epoch_len: 1,
        arms: None,
    })
}

impl<L: BaseLearner> Symmetrized<L> {
    /// Mixing weights of (learner, negated copy, zero).
    pub fn weights(&self) -> [f64; 3] {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w = self.log_weights.map(|l| (l - max).exp());
        let z: f64 = w.iter().sum();
        w.map(|v| v / z)
    }

    fn arm_outputs(&mut self, x: &Example, offset: Option<&Prediction>) -> Result<[Prediction; 3]> {
        if let Some((idx, arms)) = &self.arms {
            if *idx == x.index {
                return Ok(arms.clone());
            }
        }
        let a = self.plus.predict(x, offset)?;
        let b = self.minus.predict(x, offset)?.scaled(-1.0);
        let zero = Prediction::zeros(a.dim());
        let arms = [a, b, zero];
        self.arms = Some((x.index, arms.clone()));
        Ok(arms)
    }
}

impl<L: BaseLearner> BaseLearner for Symmetrized<L> {
    fn predict(&mut self, x: &Example, offset: Option<&Prediction>) -> Result<Prediction> {
        let arms = self.arm_outputs(x, offset)?;
        let w = self.weights();
        let mut y = Prediction::zeros(arms[0].dim());
        for (wi, arm) in w.iter().zip(&arms) {
            y.add_scaled(*wi, arm);
        }
        Ok(y)
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        feedback.linear.validate()?;
        let arms = self.arm_outputs(x, feedback.offset)?;
        self.arms = None;

        if let HedgeRate::Doubling = self.rate {
            if self.round - self.epoch_start >= self.epoch_len {
                self.epoch_start = self.round;
                self.epoch_len *= 2;
                self.log_weights = [0.0; 3];
            }
        }
        let horizon = match self.rate {
            HedgeRate::Horizon { rounds } => rounds,
            HedgeRate::Doubling => self.epoch_len,
        };
        let eps = (8.0 * 3f64.ln() / horizon as f64).sqrt();
        let d = self.output_bound();
        for (l, arm) in self.log_weights.iter_mut().zip(&arms) {
            *l -= eps * (feedback.linear.loss(arm) + d) / (2.0 * d);
        }
        self.round += 1;

        self.plus.update(x, feedback)?;
        let negated = StageFeedback {
            linear: feedback.linear.negated(),
            offset: feedback.offset,
            loss: feedback.loss,
        };
        self.minus.update(x, &negated)
    }

    fn output_bound(&self) -> f64 {
        self.plus.output_bound()
    }

    fn is_deterministic(&self) -> bool {
        self.plus.is_deterministic()
    }
}
