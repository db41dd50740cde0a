use serde::{Deserialize, Serialize};

use crate::boosting::RoundRecord;
use crate::error::{Error, Result};
use crate::learners::FunctionPool;
use crate::primitives::Example;

/// Measured regret next to the bound it should respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl RegretReport {
    pub fn new(measured: f64, bound: f64) -> Self {
        RegretReport {
            measured,
            bound,
            ratio: measured / bound,
            pass: measured <= bound,
        }
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Inputs of the span booster's regret bound against a comparator `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanBoundInputs {
    pub eta: f64,
    pub stages: usize,
    /// `B`.
    pub radius: f64,
    /// `L_B`.
    pub lipschitz: f64,
    /// `beta_B`.
    pub smoothness: f64,
    /// `||f||_1` (at least 1).
    pub comparator_norm: f64,
    pub rounds: u64,
    /// `Delta_0 = sum_t l_t(0) - l_t(f(x_t))`.
    pub delta0: f64,
    /// Base learners' linear regret `R(T)`.
    pub base_regret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanBoundTerms {
    /// `(1 - eta/W)^N Delta_0`
    pub contraction: f64,
    /// `3 eta beta_B B^2 W T`
    pub smoothing: f64,
    /// `L_B W R(T)`
    pub base: f64,
    /// `2 L_B B W sqrt(T)`
    pub shrinkage: f64,
    pub total: f64,
}

pub fn span_regret_bound(i: &SpanBoundInputs) -> Result<SpanBoundTerms> {
    if !(i.comparator_norm >= 1.0) {
        return Err(Error::invalid(
            "comparator_norm",
            format!("must be >= 1, got {}", i.comparator_norm),
        ));
    }
    let w = i.comparator_norm;
    let t = i.rounds as f64;
    let contraction = (1.0 - i.eta / w).powi(i.stages as i32) * i.delta0;
    let smoothing = 3.0 * i.eta * i.smoothness * i.radius * i.radius * w * t;
    let base = i.lipschitz * w * i.base_regret;
    let shrinkage = 2.0 * i.lipschitz * i.radius * w * t.sqrt();
    Ok(SpanBoundTerms {
        contraction,
        smoothing,
        base,
        shrinkage,
        total: contraction + smoothing + base + shrinkage,
    })
}

/// Inputs of the convex-hull booster's regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullBoundInputs {
    pub stages: usize,
    /// `D`.
    pub bound: f64,
    /// `beta_D`.
    pub smoothness: f64,
    /// `L_D`.
    pub lipschitz: f64,
    pub rounds: u64,
    pub base_regret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullBoundTerms {
    /// `8 beta_D D^2 T / N`
    pub approximation: f64,
    /// `L_D R(T)`
    pub base: f64,
    pub total: f64,
}

pub fn hull_regret_bound(i: &HullBoundInputs) -> Result<HullBoundTerms> {
    if i.stages == 0 {
        return Err(Error::invalid("stages", "need at least one stage"));
    }
    let approximation = 8.0 * i.smoothness * i.bound * i.bound * i.rounds as f64 / i.stages as f64;
    let base = i.lipschitz * i.base_regret;
    Ok(HullBoundTerms {
        approximation,
        base,
        total: approximation + base,
    })
}

/// Realized linear regret of every stage against every pool member.
///
/// Stage `i` is charged `g^i_t . A^i(x_t)` per round, and pool member `k`
/// `g^i_t f_k(x_t)`; the regret of the stage is the difference to the best
/// member.
#[derive(Debug, Clone)]
pub struct StageRegretTracker<P> {
    pool: P,
    learner_loss: Vec<f64>,
    pool_loss: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl<P: FunctionPool> StageRegretTracker<P> {
    pub fn new(stages: usize, pool: P) -> Self {
        let k = pool.len();
        StageRegretTracker {
            pool,
            learner_loss: vec![0.0; stages],
            pool_loss: vec![vec![0.0; k]; stages],
            values: Vec::with_capacity(k),
        }
    }

    pub fn observe(&mut self, x: &Example, record: &RoundRecord) -> Result<()> {
        let stages = self.learner_loss.len();
        if record.feedbacks.len() != stages || record.trace.base_outputs.len() != stages {
            return Err(Error::DimensionMismatch {
                expected: stages,
                actual: record.feedbacks.len(),
            });
        }
        self.pool.eval_all(x, &mut self.values);
        for i in 0..stages {
            let g = record.feedbacks[i].gradient.first();
            self.learner_loss[i] += g * record.trace.base_outputs[i].first();
            for (acc, v) in self.pool_loss[i].iter_mut().zip(&self.values) {
                *acc += g * v;
            }
        }
        Ok(())
    }

    pub fn stage_regrets(&self) -> Vec<f64> {
        self.learner_loss
            .iter()
            .zip(&self.pool_loss)
            .map(|(l, p)| l - p.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// `R_measured`: the largest stage regret.
    pub fn max_regret(&self) -> f64 {
        self.stage_regrets().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}
