use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bench::Stream;
use crate::boosting::OnlineRegressor;
use crate::error::{Error, Result};

/// Per-round losses of one progressive-validation run.
///
/// Rounds `0..tune_rounds` form the tuning half and the rest the report
/// half. Comparators are stored as per-round losses under a name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub losses: Vec<f64>,
    pub tune_rounds: usize,
    pub comparators: BTreeMap<String, Vec<f64>>,
}

fn prefix_sums(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl RunMetrics {
    pub fn new(losses: Vec<f64>, split: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&split) {
            return Err(Error::invalid("split", format!("must lie in [0, 1], got {split}")));
        }
        let tune_rounds = (split * losses.len() as f64).floor() as usize;
        Ok(RunMetrics {
            losses,
            tune_rounds,
            comparators: BTreeMap::new(),
        })
    }

    pub fn rounds(&self) -> usize {
        self.losses.len()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        prefix_sums(&self.losses)
    }

    pub fn total(&self) -> f64 {
        self.cumulative().last().copied().unwrap_or(0.0)
    }

    /// Mean loss over the tuning half (NaN if empty).
    pub fn tune_loss(&self) -> f64 {
        mean(&self.losses[..self.tune_rounds])
    }

    /// Mean loss over the report half (NaN if empty).
    pub fn report_loss(&self) -> f64 {
        mean(&self.losses[self.tune_rounds..])
    }

    pub fn add_comparator(&mut self, name: impl Into<String>, losses: Vec<f64>) -> Result<()> {
        if losses.len() != self.losses.len() {
            return Err(Error::DimensionMismatch {
                expected: self.losses.len(),
                actual: losses.len(),
            });
        }
        self.comparators.insert(name.into(), losses);
        Ok(())
    }

    pub fn comparator_total(&self, name: &str) -> Option<f64> {
        self.comparators
            .get(name)
            .map(|c| prefix_sums(c).last().copied().unwrap_or(0.0))
    }

    /// Cumulative regret against a comparator, round by round.
    pub fn regret_trace(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.comparators.get(name)?;
        let diff: Vec<f64> = self.losses.iter().zip(c).map(|(a, b)| a - b).collect();
        Some(prefix_sums(&diff))
    }
}

/// Test-then-train over the stream: each round is scored with the
/// prediction made before the model sees the round's loss.
pub fn progressive_validate<R: OnlineRegressor + ?Sized>(
    stream: &Stream,
    booster: &mut R,
    split: f64,
) -> Result<RunMetrics> {
    let mut losses = Vec::with_capacity(stream.len());
    for (x, loss) in stream.iter() {
        let y = booster.predict(x)?;
        losses.push(loss.evaluate(&y));
        booster.update(x, loss)?;
    }
    RunMetrics::new(losses, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::StreamSource;
    use crate::boosting::Standalone;
    use crate::learners::{LearningRate, OgdLearner};
    use crate::losses::{LossFamily, LossInstance};
    use crate::primitives::{Example, Prediction};

    fn stream(labels: &[f64]) -> Stream {
        let ex = labels
            .iter()
            .enumerate()
            .map(|(t, y)| Example::dense(t as u64, &[1.0, (t as f64).cos()], Some(*y)).unwrap())
            .collect();
        Stream::new(
            StreamSource::Synthetic {
                generator: "t".into(),
                seed: 0,
            },
            LossFamily::Squared,
            ex,
        )
        .unwrap()
    }

    struct Zero;

    impl OnlineRegressor for Zero {
        fn predict(&mut self, _x: &Example) -> Result<Prediction> {
            Ok(Prediction::scalar(0.0))
        }
        fn update(&mut self, _x: &Example, _l: &LossInstance) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn zero_booster_reports_half_square_mean() {
        let labels: Vec<f64> = (0..10).map(|t| t as f64 / 10.0).collect();
        let m = progressive_validate(&stream(&labels), &mut Zero, 0.5).unwrap();
        assert_eq!(m.tune_rounds, 5);
        let expect = labels[5..].iter().map(|y| 0.5 * y * y).sum::<f64>() / 5.0;
        assert!((m.report_loss() - expect).abs() < 1e-15);
        let cum = m.cumulative();
        assert_eq!(cum.len(), 10);
        assert_eq!(*cum.last().unwrap(), m.losses.iter().sum::<f64>());
    }

    #[test]
    fn split_boundaries() {
        let m = RunMetrics::new(vec![1.0; 7], 0.5).unwrap();
        assert_eq!(m.tune_rounds, 3);
        assert!(RunMetrics::new(vec![], 1.5).is_err());
        let m = RunMetrics::new(vec![2.0; 4], 1.0).unwrap();
        assert!(m.report_loss().is_nan());
    }

    /// Passes the real loss through until `from`, then trains on garbage.
    struct Corrupt<R> {
        inner: R,
        from: u64,
    }

    impl<R: OnlineRegressor> OnlineRegressor for Corrupt<R> {
        fn predict(&mut self, x: &Example) -> Result<Prediction> {
            self.inner.predict(x)
        }
        fn update(&mut self, x: &Example, l: &LossInstance) -> Result<()> {
            if x.index >= self.from {
                let junk = LossFamily::Squared.instance(Prediction::scalar(1.0 - l.target().first().abs()))?;
                self.inner.update(x, &junk)
            } else {
                self.inner.update(x, l)
            }
        }
    }

    #[test]
    fn round_t_loss_ignores_round_t_update() {
        let labels: Vec<f64> = (0..200).map(|t| ((t * 37) % 17) as f64 / 17.0 - 0.5).collect();
        let s = stream(&labels);
        let fresh = || {
            Standalone::new(
                OgdLearner::new(1, 1.0, LearningRate::default()).unwrap(),
                LossFamily::Squared,
            )
            .unwrap()
        };
        let clean = progressive_validate(&s, &mut fresh(), 0.5).unwrap();
        for from in [0u64, 50, 199] {
            let mut c = Corrupt { inner: fresh(), from };
            let bad = progressive_validate(&s, &mut c, 0.5).unwrap();
            let k = from as usize;
            assert_eq!(clean.losses[..=k], bad.losses[..=k], "corruption at {from} leaked");
            if k + 1 < labels.len() {
                assert_ne!(clean.losses[k + 1..], bad.losses[k + 1..]);
            }
        }
    }

    #[test]
    fn regret_trace_is_prefix_sum() {
        let mut m = RunMetrics::new(vec![1.0, 2.0, 3.0], 0.5).unwrap();
        m.add_comparator("zero", vec![0.5, 0.5, 0.5]).unwrap();
        assert_eq!(m.regret_trace("zero").unwrap(), vec![0.5, 2.0, 4.5]);
        assert_eq!(m.comparator_total("zero"), Some(1.5));
        assert!(m.add_comparator("bad", vec![0.0]).is_err());
    }
}
