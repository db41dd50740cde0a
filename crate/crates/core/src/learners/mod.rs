//! Online linear base learners.
//!
//! A base learner predicts a point of norm at most `D` for each example and
//! is then charged a linear loss `y -> g . y` with `||g|| <= 1`. Boosters
//! keep one learner per stage, so every learner here is cheap to construct
//! and owns all of its state.
//!
//! Implementations:
//!
//! * [`OgdLearner`]: projected online gradient descent over sparse linear
//!   regressors.
//! * [`StumpLearner`]: one scalar OGD model per feature, predicting with
//!   the best-so-far feature present in the example.
//! * [`HedgeLearner`]: exponential weights over a finite [`FunctionPool`].
//! * [`Symmetrized`]: mixes a learner, a copy trained on negated feedback
//!   and the zero function.
//! * [`GreedyAdapter`]: runs a greedy-fitting learner (one that sees an
//!   offset and the true loss) behind the linear contract.

mod greedy;
mod hedge;
mod ogd;
mod pool;
mod stump;
mod symmetrize;

pub use greedy::{GreedyAdapter, GreedyBaseLearner, GreedyConfig, GreedyPoolLearner, RegretModel, StepRule};
pub use hedge::{HedgeLearner, HedgeOutput, HedgeRate};
pub use ogd::OgdLearner;
pub use pool::{make_lower_bound_pool, FixedPool, FunctionPool, LowerBoundPool, PoolFunction, LOWER_BOUND_SCALE_C};
pub use stump::StumpLearner;
pub use symmetrize::{symmetrize, Symmetrized};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossInstance;
use crate::primitives::{Example, Prediction};

/// Slack allowed on `||g|| <= 1` for rounding in the booster's rescaling.
pub const FEEDBACK_TOLERANCE: f64 = 1e-9;

/// A linear loss `y -> g . y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeedback {
    pub gradient: Prediction,
}

impl LinearFeedback {
    pub fn new(gradient: Prediction) -> Self {
        LinearFeedback { gradient }
    }

    pub fn norm(&self) -> f64 {
        self.gradient.norm()
    }

    pub fn negated(&self) -> Self {
        LinearFeedback::new(self.gradient.scaled(-1.0))
    }

    /// Linear loss charged to prediction `y`.
    pub fn loss(&self, y: &Prediction) -> f64 {
        self.gradient.dot(y).expect("feedback and prediction dimensions agree")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gradient.is_finite() {
            return Err(Error::NonFinite("linear feedback"));
        }
        let n = self.norm();
        if n > 1.0 + FEEDBACK_TOLERANCE {
            return Err(Error::Contract(format!("linear feedback norm {n} exceeds 1")));
        }
        Ok(())
    }
}

/// Everything a stage learner is told after a round.
///
/// `offset` and `loss` are only populated when the booster runs in
/// greedy-offset mode; plain linear learners ignore them.
#[derive(Debug, Clone)]
pub struct StageFeedback<'a> {
    pub linear: LinearFeedback,
    pub offset: Option<&'a Prediction>,
    pub loss: Option<&'a LossInstance>,
}

impl StageFeedback<'_> {
    pub fn linear(gradient: Prediction) -> StageFeedback<'static> {
        StageFeedback {
            linear: LinearFeedback::new(gradient),
            offset: None,
            loss: None,
        }
    }
}

pub trait BaseLearner: Send {
    /// Prediction for `x`; `offset` is the booster's partial sum when greedy
    /// offsets are enabled. Must satisfy `||result|| <= output_bound()`.
    fn predict(&mut self, x: &Example, offset: Option<&Prediction>) -> Result<Prediction>;

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()>;

    /// `D`, the bound on every prediction.
    fn output_bound(&self) -> f64;

    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<L: BaseLearner + ?Sized> BaseLearner for Box<L> {
    fn predict(&mut self, x: &Example, offset: Option<&Prediction>) -> Result<Prediction> {
        (**self).predict(x, offset)
    }

    fn update(&mut self, x: &Example, feedback: &StageFeedback<'_>) -> Result<()> {
        (**self).update(x, feedback)
    }

    fn output_bound(&self) -> f64 {
        (**self).output_bound()
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

/// Step-size schedule for the gradient-descent learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LearningRate {
    /// `eta_t = scale * D / (G sqrt(t))`, `G` the largest gradient norm seen.
    InvSqrt {
        scale: f64,
    },
    Constant {
        eta: f64,
    },
}

impl Default for LearningRate {
    fn default() -> Self {
        LearningRate::InvSqrt { scale: 1.0 }
    }
}

impl LearningRate {
    pub(crate) fn step(self, bound: f64, max_grad: f64, t: u64) -> f64 {
        match self {
            LearningRate::InvSqrt { scale } => {
                if max_grad <= 0.0 {
                    0.0
                } else {
                    scale * bound / (max_grad * (t as f64).sqrt())
                }
            }
            LearningRate::Constant { eta } => eta,
        }
    }
}

pub(crate) fn check_bound(bound: f64) -> Result<()> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::invalid(
            "D",
            format!("output bound must be positive, got {bound}"),
        ));
    }
    Ok(())
}
