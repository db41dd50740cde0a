//! One progressive-validation run: stream, stage learners, booster,
//! baselines and (when measurable) the regret bound.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;

use ogboost::bench::{
    additive_stump_stream, best_convex_hull_oracle, hull_regret_bound, parse_stream, planted_ch_stream,
    planted_span_stream, progressive_validate, random_pool, span_regret_bound, uniform_inputs, AdditiveStumpSpec,
    HullBoundInputs, HullMode, RunMetrics, SpanBoundInputs, StageRegretTracker, Stream,
};
use ogboost::boosting::{
    scale_wrap, ChBooster, ChConfig, RoundRecord, RoundTrace, SpanBooster, SpanConfig, Standalone, ZeroAnchored,
};
use ogboost::learners::{
    symmetrize, BaseLearner, FixedPool, FunctionPool, GreedyAdapter, GreedyConfig, GreedyPoolLearner, HedgeLearner,
    HedgeOutput, HedgeRate, LearningRate, OgdLearner, RegretModel, StepRule, StumpLearner,
};
use ogboost::rng::{child_seed, rng};
use ogboost::{BallParams, Example, LossInstance};

use crate::config::{Algo, Base, RunConfig, Synthetic};

const POOL_SEED: u64 = 1;
const INPUT_SEED: u64 = 2;
const WEIGHT_SEED: u64 = 3;
const NOISE_SEED: u64 = 4;

pub const PLANTED: &str = "planted";
pub const BASE_ALONE: &str = "base_learner";
pub const BASE_ZERO_ANCHORED: &str = "base_learner_zero_anchored";
pub const ZERO: &str = "zero";

/// The stream plus the function pool shared by the planted generators and
/// the pool-based learners.
pub struct Source {
    pub stream: Stream,
    pub pool: Arc<FixedPool>,
    /// Pool plus negations and zero: what span stages compete with.
    pub closure: Arc<FixedPool>,
    pub planted: Option<Vec<f64>>,
}

fn max_feature_id(stream: &Stream) -> usize {
    stream
        .examples()
        .flat_map(|x| x.features().iter().map(|f| f.id.0 as usize))
        .max()
        .unwrap_or(0)
        .max(1)
}

fn planted_weights(cfg: &RunConfig, simplex: bool) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng(child_seed(cfg.seed, WEIGHT_SEED));
    if simplex {
        let e: Vec<f64> = (0..cfg.pool_size).map(|_| -r.random::<f64>().max(1e-12).ln()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    } else {
        let raw: Vec<f64> = (0..cfg.pool_size).map(|_| r.random_range(-1.0..1.0)).collect();
        let s: f64 = raw.iter().map(|v: &f64| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        raw.into_iter().map(|v| v * cfg.planted_norm / s).collect()
    }
}

pub fn load(cfg: &RunConfig) -> Result<Source> {
    let pool_seed = child_seed(cfg.seed, POOL_SEED);
    let (stream, pool, planted) = match (&cfg.data, cfg.synthetic) {
        (Some(path), _) => {
            let stream = parse_stream(path, cfg.format, cfg.label_range, cfg.loss)
                .with_context(|| format!("reading {}", path.display()))?;
            let pool = random_pool(max_feature_id(&stream), cfg.pool_size, pool_seed)?;
            (stream, pool, None)
        }
        (None, Some(Synthetic::AdditiveStumps)) => {
            let stream = additive_stump_stream(&AdditiveStumpSpec::default(), cfg.rounds, cfg.seed)?;
            let pool = random_pool(max_feature_id(&stream), cfg.pool_size, pool_seed)?;
            (stream, pool, None)
        }
        (None, Some(kind)) => {
            let pool = random_pool(cfg.dim, cfg.pool_size, pool_seed)?;
            let inputs = uniform_inputs(cfg.dim, cfg.rounds, child_seed(cfg.seed, INPUT_SEED));
            let noise_seed = child_seed(cfg.seed, NOISE_SEED);
            let (stream, w) = if kind == Synthetic::PlantedCh {
                let w = planted_weights(cfg, true);
                (planted_ch_stream(&pool, &w, cfg.noise, inputs, noise_seed)?, w)
            } else {
                let w = planted_weights(cfg, false);
                (planted_span_stream(&pool, &w, cfg.noise, inputs, noise_seed)?.0, w)
            };
            (stream, pool, Some(w))
        }
        (None, None) => anyhow::bail!("no stream source configured"),
    };
    let stream = if stream.family() == cfg.loss {
        stream
    } else {
        stream.with_family(cfg.loss)?
    };
    Ok(Source {
        stream,
        closure: Arc::new(pool.symmetric_closure()),
        pool: Arc::new(pool),
        planted,
    })
}

/// Step size and working radius, known before any learner is built.
#[derive(Debug, Clone, Copy)]
pub struct Plan {
    pub eta: Option<f64>,
    pub radius: f64,
}

pub fn plan(cfg: &RunConfig) -> Result<Plan> {
    let d = cfg.scale;
    Ok(match cfg.algo {
        Algo::Span => {
            let eta = cfg.eta.resolve(cfg.stages)?;
            let radius = if cfg.corollary_mode {
                eta * cfg.stages as f64 * d
            } else {
                cfg.loss.solve_b(eta, cfg.stages, d)?
            };
            Plan { eta: Some(eta), radius }
        }
        Algo::Ch => Plan { eta: None, radius: d },
    })
}

fn finish<L: BaseLearner + Clone + 'static>(cfg: &RunConfig, learner: L, rounds: u64) -> Result<Box<dyn BaseLearner>> {
    fn scaled<L: BaseLearner + 'static>(cfg: &RunConfig, l: L) -> Result<Box<dyn BaseLearner>> {
        Ok(if cfg.scale != 1.0 {
            Box::new(scale_wrap(l, cfg.scale)?)
        } else {
            Box::new(l)
        })
    }
    if cfg.symmetrize {
        scaled(cfg, symmetrize(learner, HedgeRate::Horizon { rounds })?)
    } else {
        scaled(cfg, learner)
    }
}

/// The pool a hedge-pool stage competes with.
fn stage_pool(cfg: &RunConfig, src: &Source) -> Arc<FixedPool> {
    match cfg.algo {
        Algo::Span => Arc::clone(&src.closure),
        Algo::Ch => Arc::clone(&src.pool),
    }
}

pub fn base_learner(cfg: &RunConfig, src: &Source, plan: &Plan) -> Result<Box<dyn BaseLearner>> {
    let rounds = src.stream.len().max(1) as u64;
    let lr = LearningRate::InvSqrt {
        scale: cfg.learning_rate,
    };
    let rate = HedgeRate::Horizon { rounds };
    match cfg.base {
        Base::Ogd => finish(cfg, OgdLearner::new(1, 1.0, lr)?, rounds),
        Base::Stump => finish(cfg, StumpLearner::new(1, 1.0, lr)?, rounds),
        Base::HedgePool => finish(
            cfg,
            HedgeLearner::new(stage_pool(cfg, src), rate, HedgeOutput::Mixture)?,
            rounds,
        ),
        Base::Greedy => {
            let gcfg = GreedyConfig::for_loss(cfg.loss, plan.radius, 1.0, rounds, RegretModel::sqrt(), StepRule::Sqrt)?;
            let reach = plan.radius + gcfg.step_size()?;
            let inner = GreedyPoolLearner::new(stage_pool(cfg, src), cfg.loss.ball_params(reach)?.lipschitz, rate)?;
            Ok(Box::new(GreedyAdapter::new(inner, &gcfg)?))
        }
    }
}

pub enum Booster {
    Span(SpanBooster<Box<dyn BaseLearner>>),
    Ch(ChBooster<Box<dyn BaseLearner>>),
}

impl Booster {
    pub fn build(cfg: &RunConfig, src: &Source, plan: &Plan) -> Result<Self> {
        let learners = (0..cfg.stages)
            .map(|_| base_learner(cfg, src, plan))
            .collect::<Result<Vec<_>>>()?;
        Ok(match cfg.algo {
            Algo::Span => {
                let mut c = SpanConfig::new(cfg.stages, cfg.loss);
                c.eta = cfg.eta;
                c.corollary_mode = cfg.corollary_mode;
                c.greedy_offsets = cfg.greedy_offsets;
                Booster::Span(SpanBooster::new(c, learners)?)
            }
            Algo::Ch => {
                let mut c = ChConfig::new(cfg.stages, cfg.loss);
                c.greedy_offsets = cfg.greedy_offsets;
                Booster::Ch(ChBooster::new(c, learners)?)
            }
        })
    }

    fn predict_traced(&mut self, x: &Example) -> ogboost::Result<RoundTrace> {
        match self {
            Booster::Span(b) => b.predict_traced(x),
            Booster::Ch(b) => b.predict_traced(x),
        }
    }

    fn update_traced(&mut self, x: &Example, l: &LossInstance) -> ogboost::Result<RoundRecord> {
        match self {
            Booster::Span(b) => b.update_traced(x, l),
            Booster::Ch(b) => b.update_traced(x, l),
        }
    }

    fn ball_params(&self) -> BallParams {
        match self {
            Booster::Span(b) => b.ball_params(),
            Booster::Ch(b) => b.ball_params(),
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Booster::Span(b) => b.radius(),
            Booster::Ch(b) => b.output_bound(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LossSummary {
    pub total: f64,
    pub tune_loss: f64,
    pub report_loss: f64,
}

impl LossSummary {
    fn of(m: &RunMetrics) -> Self {
        LossSummary {
            total: m.total(),
            tune_loss: m.tune_loss(),
            report_loss: m.report_loss(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    /// Booster loss minus comparator loss.
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    /// The bound's inputs and its individual terms.
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub rounds: usize,
    pub eta: Option<f64>,
    pub radius: f64,
    pub booster: LossSummary,
    pub baselines: BTreeMap<String, LossSummary>,
    /// Comparator the TSV's `cum_regret` column is measured against.
    pub regret_reference: Option<String>,
    pub bounds: Vec<BoundCheck>,
    pub bounds_note: Option<String>,
    pub pass: bool,
}

pub struct Execution {
    pub metrics: RunMetrics,
    pub summary: Summary,
}

/// Runs the booster. With `full`, also runs the baselines, the comparators
/// and the bound checks; grid children skip all of that.
pub fn execute(cfg: &RunConfig, full: bool) -> Result<Execution> {
    let src = load(cfg)?;
    let plan = plan(cfg)?;
    let mut booster = Booster::build(cfg, &src, &plan)?;
    let bounds_note = cfg.bounds_unsupported();
    let mut tracker =
        (full && bounds_note.is_none()).then(|| StageRegretTracker::new(cfg.stages, stage_pool(cfg, &src)));

    let stream = &src.stream;
    let mut losses = Vec::with_capacity(stream.len());
    for (x, l) in stream.iter() {
        let trace = booster.predict_traced(x)?;
        losses.push(l.evaluate(trace.prediction()));
        let record = booster.update_traced(x, l)?;
        if let Some(t) = tracker.as_mut() {
            t.observe(x, &record)?;
        }
    }
    let mut metrics = RunMetrics::new(losses, cfg.split)?;
    let mut summary = Summary {
        config: cfg.clone(),
        rounds: stream.len(),
        eta: plan.eta,
        radius: booster.radius(),
        booster: LossSummary::of(&metrics),
        baselines: BTreeMap::new(),
        regret_reference: None,
        bounds: Vec::new(),
        bounds_note,
        pass: true,
    };
    if !full {
        return Ok(Execution { metrics, summary });
    }

    // Greedy learners only work behind a booster that supplies offsets.
    if cfg.base != Base::Greedy {
        let mut alone = Standalone::new(base_learner(cfg, &src, &plan)?, cfg.loss)?;
        let m = progressive_validate(stream, &mut alone, cfg.split)?;
        metrics.add_comparator(BASE_ALONE, m.losses)?;
        let mut anchored = ZeroAnchored::new(base_learner(cfg, &src, &plan)?, cfg.loss)?;
        let m = progressive_validate(stream, &mut anchored, cfg.split)?;
        metrics.add_comparator(BASE_ZERO_ANCHORED, m.losses)?;
    }
    let zero: Vec<f64> = stream.iter().map(|(_, l)| l.evaluate_scalar(0.0)).collect();
    metrics.add_comparator(ZERO, zero)?;
    if let Some(w) = &src.planted {
        let mut vals = Vec::new();
        let planted: Vec<f64> = stream
            .iter()
            .map(|(x, l)| {
                src.pool.eval_all(x, &mut vals);
                l.evaluate_scalar(w.iter().zip(&vals).map(|(a, b)| a * b).sum())
            })
            .collect();
        metrics.add_comparator(PLANTED, planted)?;
    }
    for (name, losses) in &metrics.comparators {
        let m = RunMetrics::new(losses.clone(), cfg.split)?;
        summary.baselines.insert(name.clone(), LossSummary::of(&m));
    }
    summary.regret_reference = [PLANTED, BASE_ALONE, ZERO]
        .into_iter()
        .find(|n| metrics.comparators.contains_key(*n))
        .map(str::to_string);

    if let Some(tracker) = tracker {
        let p = booster.ball_params();
        let total = metrics.total();
        let rounds = stream.len() as u64;
        let check = match cfg.algo {
            Algo::Span => {
                let w = src
                    .planted
                    .as_ref()
                    .context("span bound without a planted comparator")?;
                let planted = metrics.comparator_total(PLANTED).unwrap_or(f64::NAN);
                let inputs = SpanBoundInputs {
                    eta: plan.eta.unwrap_or(f64::NAN),
                    stages: cfg.stages,
                    radius: booster.radius(),
                    lipschitz: p.lipschitz,
                    smoothness: p.smoothness,
                    comparator_norm: w.iter().map(|v| v.abs()).sum::<f64>().max(1.0),
                    rounds,
                    delta0: metrics.comparator_total(ZERO).unwrap_or(f64::NAN) - planted,
                    base_regret: tracker.max_regret(),
                };
                let terms = span_regret_bound(&inputs)?;
                BoundCheck {
                    name: "span regret vs planted comparator".into(),
                    measured: total - planted,
                    bound: terms.total,
                    pass: total - planted <= terms.total,
                    detail: serde_json::json!({ "inputs": inputs, "terms": terms }),
                }
            }
            Algo::Ch => {
                let fit = best_convex_hull_oracle(stream, &*src.pool, HullMode::Optimize)?;
                let inputs = HullBoundInputs {
                    stages: cfg.stages,
                    bound: booster.radius(),
                    smoothness: p.smoothness,
                    lipschitz: p.lipschitz,
                    rounds,
                    base_regret: tracker.max_regret(),
                };
                let terms = hull_regret_bound(&inputs)?;
                let measured = total - fit.lower_bound();
                BoundCheck {
                    name: "hull regret vs best convex combination".into(),
                    measured,
                    bound: terms.total,
                    pass: measured <= terms.total,
                    detail: serde_json::json!({
                        "inputs": inputs,
                        "terms": terms,
                        "oracle_loss": fit.total_loss,
                        "oracle_gap": fit.gap,
                    }),
                }
            }
        };
        summary.pass = check.pass;
        summary.bounds.push(check);
    }
    summary.booster = LossSummary::of(&metrics);
    Ok(Execution { metrics, summary })
}

/// `round, test_loss, cum_loss, cum_regret`, rounds numbered from 1.
pub fn trace_tsv(metrics: &RunMetrics, reference: Option<&str>) -> String {
    let cum = metrics.cumulative();
    let regret = reference.and_then(|r| metrics.regret_trace(r));
    let mut out = String::from("round\ttest_loss\tcum_loss\tcum_regret\n");
    for (t, loss) in metrics.losses.iter().enumerate() {
        let r = regret.as_ref().map_or(f64::NAN, |r| r[t]);
        writeln!(out, "{}\t{loss}\t{}\t{r}", t + 1, cum[t]).expect("write to string");
    }
    out
}
