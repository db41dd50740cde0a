use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::RunMetrics;
use crate::error::{Error, Result};

pub const SELECTION_RULE: &str = "lowest tune-half progressive validation loss; ties go to the smaller learning rate";

/// One tuning configuration. `eta = None` means the booster's default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub stages: usize,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChild {
    pub point: GridPoint,
    pub tune_loss: f64,
    pub report_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub children: Vec<GridChild>,
    pub selected: usize,
    pub rule: String,
}

impl GridResult {
    pub fn best(&self) -> &GridChild {
        &self.children[self.selected]
    }
}

/// Runs every point on at most `workers` threads (0 = all cores) and
/// selects by [`SELECTION_RULE`]. Children are independent; results come
/// back in input order regardless of scheduling.
pub fn run_grid<F>(points: &[GridPoint], workers: usize, run: F) -> Result<GridResult>
where
    F: Fn(&GridPoint) -> Result<RunMetrics> + Sync,
{
    if points.is_empty() {
        return Err(Error::invalid("grid", "is empty"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Data(format!("worker pool: {e}")))?;
    let results: Vec<Result<RunMetrics>> = pool.install(|| points.par_iter().map(&run).collect());
    let mut children = Vec::with_capacity(points.len());
    for (p, r) in points.iter().zip(results) {
        let m = r?;
        let tune_loss = m.tune_loss();
        if tune_loss.is_nan() {
            return Err(Error::invalid("split", "tuning half is empty"));
        }
        children.push(GridChild {
            point: *p,
            tune_loss,
            report_loss: m.report_loss(),
        });
    }
    let selected = (0..children.len())
        .min_by(|a, b| {
            let (ca, cb) = (&children[*a], &children[*b]);
            ca.tune_loss
                .total_cmp(&cb.tune_loss)
                .then(ca.point.learning_rate.total_cmp(&cb.point.learning_rate))
                .then(a.cmp(b))
        })
        .expect("non-empty grid");
    Ok(GridResult {
        children,
        selected,
        rule: SELECTION_RULE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(tune: f64, report: f64) -> RunMetrics {
        RunMetrics::new(vec![tune, tune, report, report], 0.5).unwrap()
    }

    #[test]
    fn two_by_two() {
        let points: Vec<GridPoint> = [0.1, 1.0]
            .iter()
            .flat_map(|lr| {
                [4, 8].map(|n| GridPoint {
                    learning_rate: *lr,
                    stages: n,
                    eta: None,
                })
            })
            .collect();
        let r = run_grid(&points, 2, |p| {
            Ok(metrics(p.learning_rate + 1.0 / p.stages as f64, 0.0))
        })
        .unwrap();
        assert_eq!(r.children.len(), 4);
        assert_eq!(
            r.best().point,
            GridPoint {
                learning_rate: 0.1,
                stages: 8,
                eta: None
            }
        );
        assert_eq!(r.rule, SELECTION_RULE);
    }

    #[test]
    fn ties_go_to_smaller_learning_rate() {
        let points = [
            GridPoint {
                learning_rate: 0.5,
                stages: 2,
                eta: None,
            },
            GridPoint {
                learning_rate: 0.2,
                stages: 2,
                eta: None,
            },
            GridPoint {
                learning_rate: 0.9,
                stages: 2,
                eta: None,
            },
        ];
        let r = run_grid(&points, 0, |_| Ok(metrics(1.0, 2.0))).unwrap();
        assert_eq!(r.selected, 1);
    }

    #[test]
    fn child_errors_propagate() {
        let points = [GridPoint {
            learning_rate: 0.5,
            stages: 2,
            eta: None,
        }];
        assert!(run_grid(&points, 1, |_| Err(Error::invalid("x", "boom"))).is_err());
        assert!(run_grid(&[], 1, |_| Ok(metrics(1.0, 1.0))).is_err());
    }
}
