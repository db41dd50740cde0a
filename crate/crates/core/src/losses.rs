//! Convex loss families and their per-ball regularity parameters.
//!
//! Every family assumes labels normalized to the unit ball (`|y*| <= 1` in
//! the 1-d case). Under that assumption [`LossFamily::ball_params`] returns,
//! for a radius `b`, a Lipschitz constant `L_b`, a smoothness constant
//! `beta_b` and the projection penalty rate `eps_b`, which bounds how much
//! the loss can grow when a point is pulled back onto the radius-`b` ball.
//!
//! Squared loss `(y - y*)^2 / 2` has no published penalty rate; we use
//! `max(1 - b, 0)`, which is what the supremum evaluates to for labels in
//! `[-1, 1]` (moving from `y > b` to `b` changes the loss by at most
//! `(y* - b) |y - b|`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{dot, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossFamily {
    /// `-y* . y`
    Linear,
    /// `||y* - y||^p` with `p >= 2`
    PNorm { p: f64 },
    /// `max(1 - y* . y, 0)^2 / 2`
    ModifiedLeastSquares,
    /// `ln(1 + exp(-y* . y))`
    Logistic,
    /// `||y - y*||^2 / 2`
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallParams {
    pub radius: f64,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub projection_penalty: f64,
}

impl LossFamily {
    pub fn p_norm(p: f64) -> Result<Self> {
        if !(p >= 2.0) || !p.is_finite() {
            return Err(Error::invalid("p", format!("p-norm loss needs p >= 2, got {p}")));
        }
        Ok(LossFamily::PNorm { p })
    }

    pub fn instance(self, target: Prediction) -> Result<LossInstance> {
        LossInstance::new(self, target)
    }

    pub fn ball_params(self, b: f64) -> Result<BallParams> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::invalid("b", format!("ball radius must be positive, got {b}")));
        }
        let (lipschitz, smoothness, projection_penalty) = match self {
            LossFamily::Linear => (1.0, 0.0, 1.0),
            LossFamily::PNorm { p } => (
                p * (b + 1.0).powf(p - 1.0),
                p * (p - 1.0) * (b + 1.0).powf(p - 2.0),
                if b < 1.0 { p * (1.0 - b).powf(p - 1.0) } else { 0.0 },
            ),
            LossFamily::ModifiedLeastSquares => (b + 1.0, 1.0, (1.0 - b).max(0.0)),
            LossFamily::Logistic => (logistic(b), 0.25, logistic(-b)),
            LossFamily::Squared => (b + 1.0, 1.0, (1.0 - b).max(0.0)),
        };
        Ok(BallParams {
            radius: b,
            lipschitz,
            smoothness,
            projection_penalty,
        })
    }

    /// Working radius `B = min{eta N D, inf{b >= D : eta beta_b b^2 >= eps_b D}}`.
    ///
    /// Uses the published closed form where one exists (linear for any `D`;
    /// p-norm, modified least squares and logistic at `D = 1`), and
    /// [`LossFamily::solve_b_bisection`] otherwise. The logistic closed form
    /// `min{eta N, ln(4/eta)}` is a radius that satisfies the inequality, not
    /// its infimum.
    pub fn solve_b(self, eta: f64, stages: usize, bound: f64) -> Result<f64> {
        validate_b_inputs(eta, stages, bound)?;
        let cap = eta * stages as f64 * bound;
        let closed = match self {
            LossFamily::Linear => Some(cap),
            LossFamily::PNorm { .. } | LossFamily::ModifiedLeastSquares if bound == 1.0 => Some(1.0_f64.min(cap)),
            LossFamily::Logistic if bound == 1.0 => Some(cap.min((4.0 / eta).ln())),
            _ => None,
        };
        match closed {
            Some(b) => Ok(b),
            None => self.solve_b_bisection(eta, stages, bound),
        }
    }

    /// The defining infimum computed numerically: bisection on
    /// `h(b) = eta beta_b b^2 - eps_b D` over `[D, eta N D]` to relative
    /// tolerance 1e-9, falling back to `eta N D` when `h` stays negative.
    pub fn solve_b_bisection(self, eta: f64, stages: usize, bound: f64) -> Result<f64> {
        validate_b_inputs(eta, stages, bound)?;
        let cap = eta * stages as f64 * bound;
        let h = |b: f64| -> Result<f64> {
            let bp = self.ball_params(b)?;
            Ok(eta * bp.smoothness * b * b - bp.projection_penalty * bound)
        };

        // The bisection needs h nondecreasing on the bracket.
        if cap > bound {
            let mut prev = h(bound)?;
            for k in 1..64 {
                let b = bound + (cap - bound) * k as f64 / 63.0;
                let cur = h(b)?;
                if cur < prev - 1e-12 * prev.abs().max(1.0) {
                    return Err(Error::Contract(format!(
                        "{self}: eta*beta_b*b^2 - eps_b*D decreases near b = {b}; bisection unsafe"
                    )));
                }
                prev = cur;
            }
        }

        if h(bound)? >= 0.0 {
            return Ok(bound);
        }
        if h(cap)? < 0.0 {
            return Ok(cap);
        }
        let (mut lo, mut hi) = (bound, cap);
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if h(mid)? >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

fn validate_b_inputs(eta: f64, stages: usize, bound: f64) -> Result<()> {
    if stages == 0 {
        return Err(Error::invalid("stages", "need at least one stage"));
    }
    let lo = 1.0 / stages as f64;
    if !(eta >= lo * (1.0 - 1e-12) && eta <= 1.0) {
        return Err(Error::invalid(
            "eta",
            format!("step size must lie in [1/N, 1] = [{lo}, 1], got {eta}"),
        ));
    }
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::invalid(
            "D",
            format!("output bound must be positive, got {bound}"),
        ));
    }
    Ok(())
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossFamily::Linear => write!(f, "linear"),
            LossFamily::PNorm { p } => write!(f, "p-norm:{p}"),
            LossFamily::ModifiedLeastSquares => write!(f, "mls"),
            LossFamily::Logistic => write!(f, "logistic"),
            LossFamily::Squared => write!(f, "squared"),
        }
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LossFamily::Linear),
            "mls" => Ok(LossFamily::ModifiedLeastSquares),
            "logistic" => Ok(LossFamily::Logistic),
            "squared" => Ok(LossFamily::Squared),
            _ => match s.strip_prefix("p-norm:") {
                Some(p) => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| Error::invalid("loss", format!("bad exponent in `{s}`")))?;
                    LossFamily::p_norm(p)
                }
                None => Err(Error::invalid(
                    "loss",
                    format!("unknown loss `{s}` (expected linear, p-norm:<p>, mls, logistic, squared)"),
                )),
            },
        }
    }
}

/// One round's loss: a family bound to that round's label.
#[derive(Debug, Clone, PartialEq)]
pub struct LossInstance {
    family: LossFamily,
    target: Prediction,
}

impl LossInstance {
    pub fn new(family: LossFamily, target: Prediction) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::NonFinite("loss target"));
        }
        Ok(LossInstance { family, target })
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn target(&self) -> &Prediction {
        &self.target
    }

    pub fn evaluate(&self, y: &Prediction) -> f64 {
        let t = &self.target;
        match self.family {
            LossFamily::Linear => -inner(t, y),
            LossFamily::PNorm { p } => t.sub(y).norm().powf(p),
            LossFamily::ModifiedLeastSquares => {
                let m = (1.0 - inner(t, y)).max(0.0);
                0.5 * m * m
            }
            LossFamily::Logistic => softplus(-inner(t, y)),
            LossFamily::Squared => {
                let r = y.sub(t).norm();
                0.5 * r * r
            }
        }
    }

    pub fn gradient(&self, y: &Prediction) -> Prediction {
        let t = &self.target;
        match self.family {
            LossFamily::Linear => t.scaled(-1.0),
            LossFamily::PNorm { p } => {
                let r = y.sub(t);
                let n = r.norm();
                if n == 0.0 {
                    Prediction::zeros(y.dim())
                } else {
                    r.scaled(p * n.powf(p - 2.0))
                }
            }
            LossFamily::ModifiedLeastSquares => {
                let m = (1.0 - inner(t, y)).max(0.0);
                t.scaled(-m)
            }
            LossFamily::Logistic => t.scaled(-logistic(-inner(t, y))),
            LossFamily::Squared => y.sub(t),
        }
    }
    /// [`LossInstance::evaluate`] at a scalar prediction, for 1-d targets.
    pub fn evaluate_scalar(&self, y: f64) -> f64 {
        let t = self.target.first();
        match self.family {
            LossFamily::Linear => -t * y,
            LossFamily::PNorm { p } => (t - y).abs().powf(p),
            LossFamily::ModifiedLeastSquares => {
                let m = (1.0 - t * y).max(0.0);
                0.5 * m * m
            }
            LossFamily::Logistic => softplus(-t * y),
            LossFamily::Squared => 0.5 * (y - t) * (y - t),
        }
    }

    /// [`LossInstance::gradient`] at a scalar prediction, for 1-d targets.
    pub fn derivative_scalar(&self, y: f64) -> f64 {
        let t = self.target.first();
        match self.family {
            LossFamily::Linear => -t,
            LossFamily::PNorm { p } => {
                let r = y - t;
                if r == 0.0 {
                    0.0
                } else {
                    p * r.abs().powf(p - 2.0) * r
                }
            }
            LossFamily::ModifiedLeastSquares => -t * (1.0 - t * y).max(0.0),
            LossFamily::Logistic => -t * logistic(-t * y),
            LossFamily::Squared => y - t,
        }
    }
}

fn inner(a: &Prediction, b: &Prediction) -> f64 {
    dot(a, b).expect("label and prediction dimensions agree")
}

/// `1 / (1 + e^{-x})`
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
