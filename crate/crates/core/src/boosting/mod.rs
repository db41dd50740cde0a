//! The two online boosters, the scaling wrapper and single-learner
//! baselines.
//!
//! Both boosters keep `N` base-learner copies and build their prediction
//! stage by stage from `y^0 = 0`:
//!
//! * [`ChBooster`] (convex hull): `y^i = (1 - eta_i) y^{i-1} + eta_i A^i(x)`
//!   with `eta_i = 2 / (i + 1)`; stage `i` is trained on the linear loss
//!   `grad l(y^{i-1}) / L_D`.
//! * [`SpanBooster`] (span): `y^i = Pi_B((1 - sigma^i eta) y^{i-1} + eta A^i(x))`
//!   with a learned shrinkage `sigma^i` per stage; stage `i` is trained on
//!   `grad l(y^{i-1}) / L_B`.
//!
//! Prediction and update are separate calls so a harness can score a round
//! before training on it. `predict` records the partial sums of the round
//! and `update` consumes them; calling them out of order is an error.

mod baseline;
mod ch;
mod scaled;
mod span;

pub use baseline::{Standalone, ZeroAnchored};
pub use ch::{ChBooster, ChConfig};
pub use scaled::{scale_wrap, Scaled};
pub use span::{SpanBooster, SpanConfig, StepSize};

use crate::error::{Error, Result};
use crate::learners::{BaseLearner, LinearFeedback, FEEDBACK_TOLERANCE};
use crate::losses::LossInstance;
use crate::primitives::{Example, Prediction};

/// A strong online learner: predict, then learn from the revealed loss.
pub trait OnlineRegressor {
    fn predict(&mut self, x: &Example) -> Result<Prediction>;

    fn update(&mut self, x: &Example, loss: &LossInstance) -> Result<()>;
}

impl<R: OnlineRegressor + ?Sized> OnlineRegressor for Box<R> {
    fn predict(&mut self, x: &Example) -> Result<Prediction> {
        (**self).predict(x)
    }

    fn update(&mut self, x: &Example, loss: &LossInstance) -> Result<()> {
        (**self).update(x, loss)
    }
}

/// Everything computed for one example during `predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub index: u64,
    /// `y^0, ..., y^N`.
    pub partial_sums: Vec<Prediction>,
    /// `A^1(x), ..., A^N(x)`.
    pub base_outputs: Vec<Prediction>,
}

impl RoundTrace {
    pub fn prediction(&self) -> &Prediction {
        self.partial_sums.last().expect("trace holds y^0")
    }
}

/// A completed round: the trace plus the linear feedback each stage got.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub trace: RoundTrace,
    pub feedbacks: Vec<LinearFeedback>,
}

pub(crate) fn take_pending(pending: &mut Option<RoundTrace>, x: &Example) -> Result<RoundTrace> {
    match pending.take() {
        Some(trace) if trace.index == x.index => Ok(trace),
        Some(trace) => {
            *pending = Some(trace);
            Err(Error::Protocol(
                "update called for a different example than the last predict",
            ))
        }
        None => Err(Error::Protocol("update called without a pending predict")),
    }
}

pub(crate) fn checked_output<L: BaseLearner>(
    learner: &mut L,
    x: &Example,
    offset: Option<&Prediction>,
    dim: usize,
) -> Result<Prediction> {
    let a = learner.predict(x, offset)?;
    if a.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: a.dim(),
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("base learner output"));
    }
    let d = learner.output_bound();
    if a.norm() > d * (1.0 + FEEDBACK_TOLERANCE) {
        return Err(Error::Contract(format!(
            "base learner output norm {} exceeds its bound {d}",
            a.norm()
        )));
    }
    Ok(a)
}

pub(crate) fn common_bound<L: BaseLearner>(learners: &[L]) -> Result<f64> {
    let d = learners
        .first()
        .ok_or_else(|| Error::invalid("stages", "need at least one stage"))?
        .output_bound();
    if learners.iter().any(|l| l.output_bound() != d) {
        return Err(Error::invalid("learners", "all stages must share one output bound D"));
    }
    Ok(d)
}
