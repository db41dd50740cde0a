use serde::{Deserialize, Serialize};

use crate::boosting::{checked_output, common_bound, take_pending, OnlineRegressor, RoundRecord, RoundTrace};
use crate::error::{Error, Result};
use crate::learners::{BaseLearner, LinearFeedback, StageFeedback};
use crate::losses::{BallParams, LossFamily, LossInstance};
use crate::primitives::{clip_unit_interval, project, Example, Prediction};

/// Step size `eta` of the span booster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StepSize {
    /// `ln(N) / N`, raised to `1/N` for `N < 3` where the log rule falls
    /// below the admissible range.
    #[default]
    Auto,
    Fixed(f64),
}

impl StepSize {
    pub fn resolve(self, stages: usize) -> Result<f64> {
        if stages == 0 {
            return Err(Error::invalid("stages", "need at least one stage"));
        }
        let n = stages as f64;
        let eta = match self {
            StepSize::Auto => (n.ln() / n).max(1.0 / n),
            StepSize::Fixed(eta) => eta,
        };
        if !(eta >= 1.0 / n * (1.0 - 1e-12) && eta <= 1.0) {
            return Err(Error::invalid(
                "eta",
                format!("step size must lie in [1/N, 1] = [{}, 1], got {eta}", 1.0 / n),
            ));
        }
        Ok(eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanConfig {
    pub stages: usize,
    pub eta: StepSize,
    pub loss: LossFamily,
    /// Use `B = eta N D` regardless of the loss (requires deterministic
    /// base learners); partial sums then never leave the ball.
    pub corollary_mode: bool,
    /// Pass `y^{i-1}` and the true loss to stage `i` (greedy base learners).
    pub greedy_offsets: bool,
    /// Prediction dimension `d`.
    pub dim: usize,
}

impl SpanConfig {
    pub fn new(stages: usize, loss: LossFamily) -> Self {
        SpanConfig {
            stages,
            eta: StepSize::Auto,
            loss,
            corollary_mode: false,
            greedy_offsets: false,
            dim: 1,
        }
    }
}

/// The span booster.
///
/// Stage outputs are combined as
/// `y^i = Pi_B((1 - sigma^i eta) y^{i-1} + eta A^i(x))`. After the loss is
/// revealed, stage `i` receives `grad l(y^{i-1}) / L_B` and its shrinkage is
/// moved by projected online gradient descent,
/// `sigma^i <- clip(sigma^i + alpha_t grad l(y^{i-1}) . y^{i-1})`, with
/// `alpha_t = 1 / (L_B B sqrt(t))` and `t` the global round count.
///
/// To compete with a scaled class, build the stages with
/// [`crate::boosting::scale_wrap`]: `D` is read from the learners, so the
/// radius becomes the scaled `B'` automatically.
#[derive(Debug, Clone)]
pub struct SpanBooster<L> {
    config: SpanConfig,
    learners: Vec<L>,
    sigma: Vec<f64>,
    eta: f64,
    bound: f64,
    radius: f64,
    params: BallParams,
    round: u64,
    pending: Option<RoundTrace>,
}

impl<L: BaseLearner> SpanBooster<L> {
    pub fn new(config: SpanConfig, learners: Vec<L>) -> Result<Self> {
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
        let eta = config.eta.resolve(config.stages)?;
        let radius = if config.corollary_mode {
            if let Some(i) = learners.iter().position(|l| !l.is_deterministic()) {
                return Err(Error::invalid(
                    "corollary_mode",
                    format!("requires deterministic base learners; stage {} is randomized", i + 1),
                ));
            }
            eta * config.stages as f64 * bound
        } else {
            config.loss.solve_b(eta, config.stages, bound)?
        };
        let params = config.loss.ball_params(radius)?;
        if !(params.lipschitz > 0.0) {
            return Err(Error::invalid(
                "loss",
                format!("{} has L_B = 0 at B = {radius}", config.loss),
            ));
        }
        Ok(SpanBooster {
            sigma: vec![0.0; config.stages],
            config,
            learners,
            eta,
            bound,
            radius,
            params,
            round: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &SpanConfig {
        &self.config
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `D` of the stage learners.
    pub fn output_bound(&self) -> f64 {
        self.bound
    }

    /// `B`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn ball_params(&self) -> BallParams {
        self.params
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub fn learners(&self) -> &[L] {
        &self.learners
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
            let mut y = prev.scaled(1.0 - self.sigma[i] * self.eta);
            y.add_scaled(self.eta, &a);
            let y = project(&y, self.radius)?;
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
        let lb = self.params.lipschitz;
        let alpha = 1.0 / (lb * self.radius * (self.round as f64).sqrt());
        let mut feedbacks = Vec::with_capacity(self.config.stages);
        for (i, learner) in self.learners.iter_mut().enumerate() {
            let prev = &trace.partial_sums[i];
            let grad = loss.gradient(prev);
            let fb = LinearFeedback::new(grad.scaled(1.0 / lb));
            let step = grad.dot(prev)?;
            self.sigma[i] = clip_unit_interval(self.sigma[i] + alpha * step);
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

impl<L: BaseLearner> OnlineRegressor for SpanBooster<L> {
    fn predict(&mut self, x: &Example) -> Result<Prediction> {
        Ok(self.predict_traced(x)?.prediction().clone())
    }

    fn update(&mut self, x: &Example, loss: &LossInstance) -> Result<()> {
        self.update_traced(x, loss).map(|_| ())
    }
}
