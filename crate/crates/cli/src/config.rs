use std::fmt;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use ogboost::bench::{Format, LabelRange, MAX_ORACLE_POOL};
use ogboost::boosting::StepSize;
use ogboost::LossFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Competes with linear combinations of the base class.
    Span,
    /// Competes with convex combinations of the base class.
    Ch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Base {
    /// Projected online gradient descent over linear regressors.
    Ogd,
    /// Regression stumps: per-feature scalar models.
    Stump,
    /// Exponential weights over a random pool of ridge and stump functions.
    HedgePool,
    /// Greedy fitting over the same pool; needs --greedy-offsets.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Synthetic {
    /// Labels from a planted linear combination of the pool plus noise.
    Planted,
    /// Labels from a planted convex combination of the pool plus noise.
    PlantedCh,
    /// Sum of five step functions, exposed as threshold features.
    AdditiveStumps,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

pub fn parse_eta(s: &str) -> Result<StepSize, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(StepSize::Auto);
    }
    s.parse::<f64>()
        .map(StepSize::Fixed)
        .map_err(|_| format!("`{s}` is neither `auto` nor a number"))
}

fn parse_loss(s: &str) -> Result<LossFamily, String> {
    s.parse().map_err(|e: ogboost::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: ogboost::Error| e.to_string())
}

fn parse_range(s: &str) -> Result<LabelRange, String> {
    s.parse().map_err(|e: ogboost::Error| e.to_string())
}

/// Everything that determines a run. Serialized verbatim into the summary;
/// feeding that back through `--config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Boosting algorithm.
    #[arg(long, value_enum, default_value_t = Algo::Span)]
    pub algo: Algo,

    /// Number of stages N (calls to base learners per round).
    #[arg(long, default_value_t = 10)]
    pub stages: usize,

    /// Span step size: `auto` (ln N / N, at least 1/N) or a value in [1/N, 1].
    #[arg(long, value_parser = parse_eta, default_value = "auto")]
    pub eta: StepSize,

    /// Loss: linear, p-norm:<p>, mls, logistic or squared.
    #[arg(long, value_parser = parse_loss, default_value = "squared")]
    pub loss: LossFamily,

    /// Base learner run at every stage.
    #[arg(long, value_enum, default_value_t = Base::Ogd)]
    pub base: Base,

    /// Mix each base learner with a negated copy and the zero function.
    #[arg(long)]
    pub symmetrize: bool,

    /// Scale lambda >= 1 applied to the base class.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,

    /// Give every stage the partial sum and the true loss (greedy fitting).
    #[arg(long)]
    pub greedy_offsets: bool,

    /// Span only: use B = eta N D so projection never triggers.
    #[arg(long)]
    pub corollary_mode: bool,

    /// Multiplier on the base learners' 1/sqrt(t) step schedule (ogd, stump).
    #[arg(long, default_value_t = 1.0)]
    pub learning_rate: f64,

    /// Dataset to stream (exclusive with --synthetic).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Dataset format: libsvm or csv.
    #[arg(long, value_parser = parse_format, default_value = "libsvm")]
    pub format: Format,

    /// Interval labels are rescaled into: [-1,1] or [0,1].
    #[arg(long, value_parser = parse_range, default_value = "[-1,1]")]
    pub label_range: LabelRange,

    /// Synthetic stream generator (exclusive with --data).
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,

    /// Synthetic stream length T.
    #[arg(long, default_value_t = 10_000)]
    pub rounds: usize,

    /// Input dimension of the planted generators.
    #[arg(long, default_value_t = 5)]
    pub dim: usize,

    /// Size of the random function pool (planted generators, hedge-pool, greedy).
    #[arg(long, default_value_t = 8)]
    pub pool_size: usize,

    /// Sum of |w| of the planted linear combination.
    #[arg(long, default_value_t = 2.0)]
    pub planted_norm: f64,

    /// Standard deviation of the label noise of the planted generators.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,

    /// Seed for every random choice of the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Fraction of rounds in the tuning half of progressive validation.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
}

impl RunConfig {
    /// Every violated constraint, in flag order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.stages == 0 {
            v.push("--stages must be at least 1".to_string());
        }
        if let StepSize::Fixed(eta) = self.eta {
            if self.algo == Algo::Ch {
                v.push("--eta applies to --algo span only (the hull booster uses 2/(i+1))".to_string());
            } else if self.stages > 0 {
                let lo = 1.0 / self.stages as f64;
                if !(eta >= lo && eta <= 1.0) {
                    v.push(format!(
                        "--eta {eta} is outside [1/N, 1] = [{lo}, 1] for N = {}",
                        self.stages
                    ));
                }
            }
        }
        if !(self.scale >= 1.0) || !self.scale.is_finite() {
            v.push(format!("--scale must be a finite value >= 1, got {}", self.scale));
        }
        if self.base == Base::Greedy && !self.greedy_offsets {
            v.push("--base greedy needs --greedy-offsets".to_string());
        }
        if self.greedy_offsets && self.base != Base::Greedy {
            v.push(format!("--greedy-offsets needs --base greedy (got {})", self.base));
        }
        if self.symmetrize && self.base == Base::Greedy {
            v.push("--symmetrize cannot wrap the greedy learner".to_string());
        }
        if self.base == Base::Greedy && self.scale != 1.0 {
            v.push("--scale cannot be combined with --base greedy".to_string());
        }
        if self.corollary_mode && self.algo == Algo::Ch {
            v.push("--corollary-mode applies to --algo span only".to_string());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            v.push(format!("--learning-rate must be positive, got {}", self.learning_rate));
        }
        match (&self.data, self.synthetic) {
            (None, None) => v.push("one of --data or --synthetic is required".to_string()),
            (Some(_), Some(_)) => v.push("--data and --synthetic are exclusive".to_string()),
            _ => {}
        }
        if self.synthetic.is_some() && self.rounds == 0 {
            v.push("--rounds must be at least 1".to_string());
        }
        if self.dim == 0 {
            v.push("--dim must be at least 1".to_string());
        }
        if self.pool_size == 0 {
            v.push("--pool-size must be at least 1".to_string());
        }
        if !(self.planted_norm > 0.0) || !self.planted_norm.is_finite() {
            v.push(format!("--planted-norm must be positive, got {}", self.planted_norm));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            v.push(format!("--noise must be non-negative, got {}", self.noise));
        }
        if !(0.0..=1.0).contains(&self.split) {
            v.push(format!("--split must lie in [0, 1], got {}", self.split));
        }
        v
    }

    /// Why regret bounds cannot be evaluated for this run, if they cannot.
    pub fn bounds_unsupported(&self) -> Option<String> {
        if self.base != Base::HedgePool {
            return Some("needs --base hedge-pool (base regret is measured against the pool)".into());
        }
        if self.symmetrize || self.scale != 1.0 {
            return Some("needs an unwrapped base learner (no --symmetrize, --scale 1)".into());
        }
        match (self.algo, self.synthetic) {
            (Algo::Span, Some(Synthetic::Planted)) => None,
            (Algo::Span, _) => Some("the span bound needs a planted comparator (--synthetic planted)".into()),
            (Algo::Ch, Some(Synthetic::Planted | Synthetic::PlantedCh)) if self.pool_size > MAX_ORACLE_POOL => {
                Some(format!(
                    "the hull oracle handles at most {MAX_ORACLE_POOL} pool functions (--pool-size {})",
                    self.pool_size
                ))
            }
            (Algo::Ch, Some(Synthetic::Planted | Synthetic::PlantedCh)) => None,
            (Algo::Ch, _) => {
                Some("the hull bound needs a pool-generated stream (--synthetic planted or planted-ch)".into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        cfg: RunConfig,
    }

    fn parse(args: &[&str]) -> RunConfig {
        Wrap::parse_from(std::iter::once("x").chain(args.iter().copied())).cfg
    }

    #[test]
    fn defaults_are_valid_with_a_source() {
        assert!(parse(&["--synthetic", "planted"]).violations().is_empty());
    }

    #[test]
    fn every_violation_is_listed() {
        let c = parse(&[
            "--stages", "4", "--eta", "2", "--scale", "0.5", "--base", "greedy", "--split", "2",
        ]);
        let v = c.violations();
        assert_eq!(v.len(), 6, "{v:?}");
        assert!(v[0].contains("[1/N, 1]"));
    }

    #[test]
    fn eta_parser() {
        assert_eq!(parse_eta("auto"), Ok(StepSize::Auto));
        assert_eq!(parse_eta("0.25"), Ok(StepSize::Fixed(0.25)));
        assert!(parse_eta("fast").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = parse(&[
            "--synthetic",
            "planted-ch",
            "--algo",
            "ch",
            "--loss",
            "p-norm:3",
            "--seed",
            "9",
        ]);
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
