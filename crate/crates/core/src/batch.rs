//! Batch boosting by greedy stagewise fitting over a finite dictionary.
//!
//! Two update rules share one exact base learner, which returns the
//! dictionary member `g` minimizing `l(f + eta g)`:
//!
//! * [`zy_step`]: `f_i = f_{i-1} + eta_i g_i`.
//! * [`gated_step`]: `f_i = (1 - sigma_i eta_i) f_{i-1} + eta_i g_i`, where
//!   `sigma_i = 1` iff `grad l(f_{i-1}) . f_{i-1} >= 0`.
//!
//! Functions are represented by their values on the batch points. The norm
//! on functions is the RMS over the points, so `l(f) = mean_j l_j(f(x_j))`
//! is `beta`-smooth with `beta` the pointwise smoothness of the loss (1 for
//! squared loss), and the functional gradient pairing is
//! `grad l(f) . g = mean_j l_j'(f(x_j)) g(x_j)`.
//!
//! [`run_batch`] records the optimization error `Delta_i = l(f_i) - l(f)`
//! against a comparator `f` with known `||f||_1` next to the two
//! convergence bounds, with `s_0 = 1`, `s_i = s_{i-1} + eta_i` and
//! `W = ||f||_1`:
//!
//! ```text
//! additive:    Delta_N <= (s_0 + W)/(s_N + W) Delta_0
//!                         + sum_i (s_i + W)/(s_N + W) (beta/2) eta_i^2
//! shrinkage:   Delta_N <= exp(-(s_N - s_0)/W) Delta_0
//!                         + sum_i exp(-(s_N - s_i)/W) (beta/2) eta_i^2 (s_i^2 + 1)
//! ```

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossFamily, LossInstance};
use crate::primitives::Prediction;
use crate::rng::rng;

const NORM_TOLERANCE: f64 = 1e-9;

/// A finite, symmetric dictionary of functions tabulated on the batch
/// points. Always contains the zero function.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    values: Vec<Vec<f64>>,
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

impl Dictionary {
    /// Dictionary made of `base`, every negation and the zero function, in
    /// that order (`base`, then `-base`, then 0).
    pub fn symmetric(base: Vec<Vec<f64>>) -> Result<Self> {
        let m = base.first().map(Vec::len).unwrap_or(0);
        if m == 0 {
            return Err(Error::invalid(
                "dictionary",
                "needs at least one function on at least one point",
            ));
        }
        for (k, g) in base.iter().enumerate() {
            if g.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("dictionary function"));
            }
            if rms(g) > 1.0 + NORM_TOLERANCE {
                return Err(Error::invalid(
                    "dictionary",
                    format!("function {k} has norm {} > 1", rms(g)),
                ));
            }
        }
        let mut values = base.clone();
        values.extend(base.iter().map(|g| g.iter().map(|v| -v).collect::<Vec<_>>()));
        values.push(vec![0.0; m]);
        Ok(Dictionary { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> usize {
        self.values[0].len()
    }

    pub fn function(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

/// `l(f) = mean_j l_j(f(x_j))` for a fixed batch of labels.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchFunctional {
    family: LossFamily,
    losses: Vec<LossInstance>,
    smoothness: f64,
}

impl BatchFunctional {
    /// Families whose smoothness constant does not depend on the radius
    /// (squared, modified least squares, logistic, linear).
    pub fn new(family: LossFamily, labels: &[f64]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("labels", "batch is empty"));
        }
        let smoothness = match family {
            LossFamily::PNorm { .. } => {
                return Err(Error::invalid(
                    "loss",
                    "p-norm loss has no global smoothness constant over the span",
                ))
            }
            f => f.ball_params(1.0)?.smoothness,
        };
        let losses = labels
            .iter()
            .map(|y| family.instance(Prediction::scalar(*y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BatchFunctional {
            family,
            losses,
            smoothness,
        })
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    /// `beta` in the RMS norm.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn points(&self) -> usize {
        self.losses.len()
    }

    pub fn value(&self, f: &[f64]) -> f64 {
        let total: f64 = self.losses.iter().zip(f).map(|(l, v)| l.evaluate_scalar(*v)).sum();
        total / self.losses.len() as f64
    }

    /// `l(f + eta g)` without materializing the sum.
    pub fn value_along(&self, f: &[f64], eta: f64, g: &[f64]) -> f64 {
        let total: f64 = self
            .losses
            .iter()
            .zip(f.iter().zip(g))
            .map(|(l, (a, b))| l.evaluate_scalar(a + eta * b))
            .sum();
        total / self.losses.len() as f64
    }

    /// `grad l(f) . g`.
    pub fn gradient_pairing(&self, f: &[f64], g: &[f64]) -> f64 {
        let total: f64 = self
            .losses
            .iter()
            .zip(f.iter().zip(g))
            .map(|(l, (a, b))| l.derivative_scalar(*a) * b)
            .sum();
        total / self.losses.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchIterate {
    /// Coefficients over the dictionary.
    pub coefficients: Vec<f64>,
    /// Values on the batch points.
    pub values: Vec<f64>,
    /// `s_i`.
    pub step_sum: f64,
    pub stage: usize,
}

impl BatchIterate {
    pub fn zero(dict: &Dictionary) -> Self {
        BatchIterate {
            coefficients: vec![0.0; dict.len()],
            values: vec![0.0; dict.points()],
            step_sum: 1.0,
            stage: 0,
        }
    }

    fn advance(&self, dict: &Dictionary, shrink: f64, eta: f64, k: usize) -> Self {
        let mut coefficients: Vec<f64> = self.coefficients.iter().map(|c| c * shrink).collect();
        coefficients[k] += eta;
        let values = self
            .values
            .iter()
            .zip(dict.function(k))
            .map(|(v, g)| shrink * v + eta * g)
            .collect();
        BatchIterate {
            coefficients,
            values,
            step_sum: self.step_sum + eta,
            stage: self.stage + 1,
        }
    }
}

fn check_compatible(loss: &BatchFunctional, dict: &Dictionary, f: &BatchIterate) -> Result<()> {
    if dict.points() != loss.points() || f.values.len() != loss.points() {
        return Err(Error::DimensionMismatch {
            expected: loss.points(),
            actual: dict.points(),
        });
    }
    Ok(())
}

/// Index of the dictionary member minimizing `l(f + eta g)`; ties go to the
/// lowest index. Candidates are scored in parallel and reduced in index
/// order, so the result does not depend on scheduling.
pub fn base_argmin(loss: &BatchFunctional, dict: &Dictionary, f: &BatchIterate, eta: f64) -> Result<usize> {
    if dict.is_empty() {
        return Err(Error::invalid("dictionary", "is empty"));
    }
    check_compatible(loss, dict, f)?;
    let scores: Vec<f64> = (0..dict.len())
        .into_par_iter()
        .map(|k| loss.value_along(&f.values, eta, dict.function(k)))
        .collect();
    let mut best = 0;
    for (k, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = k;
        }
    }
    Ok(best)
}

pub fn zy_step(loss: &BatchFunctional, dict: &Dictionary, f: &BatchIterate, eta: f64) -> Result<BatchIterate> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::invalid("eta", format!("must be non-negative, got {eta}")));
    }
    let k = base_argmin(loss, dict, f, eta)?;
    Ok(f.advance(dict, 1.0, eta, k))
}

/// One shrinkage-gated step; also returns `sigma_i`.
pub fn gated_step(
    loss: &BatchFunctional,
    dict: &Dictionary,
    f: &BatchIterate,
    eta: f64,
) -> Result<(BatchIterate, f64)> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
    }
    let k = base_argmin(loss, dict, f, eta)?;
    let sigma = if loss.gradient_pairing(&f.values, &f.values) >= 0.0 {
        1.0
    } else {
        0.0
    };
    Ok((f.advance(dict, 1.0 - sigma * eta, eta, k), sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchVariant {
    Zy,
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub stage: usize,
    pub step_sum: f64,
    pub delta: f64,
    pub additive_bound: f64,
    pub shrinkage_bound: f64,
    /// `sigma_i` for gated runs (none at stage 0 or for additive runs).
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace {
    pub variant: BatchVariant,
    pub comparator_loss: f64,
    pub comparator_norm: f64,
    pub smoothness: f64,
    pub rows: Vec<BatchRow>,
    pub final_iterate: BatchIterate,
}

impl BatchTrace {
    /// The bound that applies to this variant at row `i`.
    pub fn own_bound(&self, i: usize) -> f64 {
        match self.variant {
            BatchVariant::Zy => self.rows[i].additive_bound,
            BatchVariant::Gated => self.rows[i].shrinkage_bound,
        }
    }

    /// First stage with `Delta_i <= threshold`, if any.
    pub fn first_crossing(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.delta <= threshold).map(|r| r.stage)
    }
}

/// Both bound curves for a step schedule, one value per stage `0..=N`.
pub fn convergence_bounds(delta0: f64, comparator_norm: f64, smoothness: f64, schedule: &[f64]) -> Vec<(f64, f64)> {
    let w = comparator_norm;
    let mut s = Vec::with_capacity(schedule.len() + 1);
    s.push(1.0);
    for eta in schedule {
        let last = *s.last().expect("s_0 pushed");
        s.push(last + eta);
    }
    (0..=schedule.len())
        .map(|n| {
            let sn = s[n];
            let mut additive = (s[0] + w) / (sn + w) * delta0;
            let mut shrinkage = (-(sn - s[0]) / w).exp() * delta0;
            for i in 1..=n {
                let e2 = 0.5 * smoothness * schedule[i - 1].powi(2);
                additive += (s[i] + w) / (sn + w) * e2;
                shrinkage += (-(sn - s[i]) / w).exp() * e2 * (s[i] * s[i] + 1.0);
            }
            (additive, shrinkage)
        })
        .collect()
}

/// A planted dictionary problem: `atoms` Gaussian functions on `points`
/// batch points, each rescaled to unit RMS, and labels `sum_k w_k g_k` with
/// Gaussian weights rescaled to `sum |w_k| = norm`. Returns the symmetric
/// dictionary and the labels; the planted `f` has `||f||_1 = max(1, norm)`.
pub fn planted_dictionary(atoms: usize, points: usize, norm: f64, seed: u64) -> Result<(Dictionary, Vec<f64>)> {
    if atoms == 0 || points == 0 {
        return Err(Error::invalid("dictionary", "needs at least one atom and one point"));
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid("norm", format!("must be positive, got {norm}")));
    }
    let mut r = rng(seed);
    let base: Vec<Vec<f64>> = (0..atoms)
        .map(|_| {
            let g: Vec<f64> = (0..points).map(|_| StandardNormal.sample(&mut r)).collect();
            let scale = rms(&g);
            g.into_iter().map(|v| v / scale).collect()
        })
        .collect();
    let raw: Vec<f64> = (0..atoms).map(|_| StandardNormal.sample(&mut r)).collect();
    let total: f64 = raw.iter().map(|v: &f64| v.abs()).sum();
    let w: Vec<f64> = raw.iter().map(|v| norm * v / total).collect();
    let labels = (0..points)
        .map(|j| (0..atoms).map(|k| w[k] * base[k][j]).sum())
        .collect();
    Ok((Dictionary::symmetric(base)?, labels))
}

/// Runs `schedule.len()` stages from `f_0 = 0`.
pub fn run_batch(
    loss: &BatchFunctional,
    dict: &Dictionary,
    comparator_loss: f64,
    comparator_norm: f64,
    schedule: &[f64],
    variant: BatchVariant,
) -> Result<BatchTrace> {
    if !(comparator_norm >= 1.0) || !comparator_norm.is_finite() {
        return Err(Error::invalid(
            "comparator_norm",
            format!("||f||_1 must be >= 1, got {comparator_norm}"),
        ));
    }
    let mut f = BatchIterate::zero(dict);
    check_compatible(loss, dict, &f)?;
    let delta0 = loss.value(&f.values) - comparator_loss;
    let bounds = convergence_bounds(delta0, comparator_norm, loss.smoothness(), schedule);
    let mut rows = Vec::with_capacity(schedule.len() + 1);
    rows.push(BatchRow {
        stage: 0,
        step_sum: f.step_sum,
        delta: delta0,
        additive_bound: bounds[0].0,
        shrinkage_bound: bounds[0].1,
        sigma: None,
    });
    for (i, eta) in schedule.iter().enumerate() {
        let sigma = match variant {
            BatchVariant::Zy => {
                f = zy_step(loss, dict, &f, *eta)?;
                None
            }
            BatchVariant::Gated => {
                let (next, sigma) = gated_step(loss, dict, &f, *eta)?;
                f = next;
                Some(sigma)
            }
        };
        rows.push(BatchRow {
            stage: i + 1,
            step_sum: f.step_sum,
            delta: loss.value(&f.values) - comparator_loss,
            additive_bound: bounds[i + 1].0,
            shrinkage_bound: bounds[i + 1].1,
            sigma,
        });
    }
    Ok(BatchTrace {
        variant,
        comparator_loss,
        comparator_norm,
        smoothness: loss.smoothness(),
        rows,
        final_iterate: f,
    })
}
