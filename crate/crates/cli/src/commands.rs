use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use ogboost::batch::{planted_dictionary, run_batch, BatchFunctional, BatchTrace, BatchVariant};
use ogboost::bench::{make_lower_bound_stream, run_grid, GridPoint, GridResult};
use ogboost::boosting::{ChBooster, ChConfig, OnlineRegressor, StepSize};
use ogboost::learners::{HedgeLearner, HedgeOutput, HedgeRate, LOWER_BOUND_SCALE_C};
use ogboost::rng::child_seed;
use ogboost::LossFamily;

use crate::config::RunConfig;
use crate::pipeline;
use crate::ConfigError;

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

// --- batch-compare ---------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BatchSetup {
    pub atoms: usize,
    pub points: usize,
    pub planted_norm: f64,
    pub eta: f64,
    pub stages: usize,
    pub seed: u64,
    pub loss: LossFamily,
}

#[derive(Debug, Serialize)]
struct BatchSummary<'a> {
    setup: &'a BatchSetup,
    delta0: f64,
    /// First stage below `Delta_0 / 2^k`, k = 1..6 (null: never).
    crossings_additive: Vec<Option<usize>>,
    crossings_gated: Vec<Option<usize>>,
    bounds_hold: bool,
}

fn crossings(t: &BatchTrace) -> Vec<Option<usize>> {
    let d0 = t.rows[0].delta;
    (1..=6).map(|k| t.first_crossing(d0 / f64::powi(2.0, k))).collect()
}

/// Returns whether every row respects its own bound.
pub fn batch_compare(setup: &BatchSetup, out: &Path) -> Result<bool> {
    let (dict, labels) = planted_dictionary(setup.atoms, setup.points, setup.planted_norm, setup.seed)?;
    let loss = BatchFunctional::new(setup.loss, &labels)?;
    let comparator = loss.value(&labels);
    let norm = setup.planted_norm.max(1.0);
    let schedule = vec![setup.eta; setup.stages];
    let zy = run_batch(&loss, &dict, comparator, norm, &schedule, BatchVariant::Zy)?;
    let gated = run_batch(&loss, &dict, comparator, norm, &schedule, BatchVariant::Gated)?;

    let mut tsv = String::from("stage\ts_i\tdelta_zy\tbound_additive\tdelta_gated\tbound_shrinkage\tsigma\n");
    let mut hold = true;
    for (a, b) in zy.rows.iter().zip(&gated.rows) {
        hold &= a.delta <= a.additive_bound + 1e-12 && b.delta <= b.shrinkage_bound + 1e-12;
        let sigma = b.sigma.map_or(String::new(), |s| s.to_string());
        writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{sigma}",
            a.stage, a.step_sum, a.delta, a.additive_bound, b.delta, b.shrinkage_bound
        )
        .expect("write to string");
    }
    write(out, "batch.tsv", &tsv)?;
    let summary = BatchSummary {
        setup,
        delta0: zy.rows[0].delta,
        crossings_additive: crossings(&zy),
        crossings_gated: crossings(&gated),
        bounds_hold: hold,
    };
    let show = |v: &[Option<usize>]| {
        v.iter()
            .map(|c| c.map_or("-".into(), |s| s.to_string()))
            .collect::<Vec<String>>()
            .join(" ")
    };
    println!("first stage below Delta_0/2^k, k = 1..6");
    println!("  additive: {}", show(&summary.crossings_additive));
    println!("  gated:    {}", show(&summary.crossings_gated));
    println!("bounds hold at every stage: {hold}");
    write(out, "batch.json", &json(&summary)?)?;
    Ok(hold)
}

// --- lower-bound ----------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundSetup {
    pub stages: usize,
    pub scale_c: f64,
    pub seeds: u64,
    pub seed: u64,
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct SeedResult {
    seed: u64,
    booster_loss: f64,
    uniform_loss: f64,
    regret: f64,
    concentration_ok: bool,
}

#[derive(Debug, Serialize)]
struct LowerBoundSummary<'a> {
    setup: &'a LowerBoundSetup,
    pool_size: usize,
    rounds: usize,
    epsilon: f64,
    /// `c T / N`, the excess loss the construction rules out.
    reference_ct_over_n: f64,
    /// `0.05 T / N`, the directional threshold.
    directional_threshold: f64,
    median_regret: f64,
    seeds_above_threshold: usize,
    seeds_concentrated: usize,
    /// What the construction needs at its original scale `c = 1/4000`.
    original_scale: OriginalScale,
    runs: Vec<SeedResult>,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct OriginalScale {
    scale_c: f64,
    pool_size: usize,
    rounds: usize,
}

fn lower_bound_seed(setup: &LowerBoundSetup, seed: u64) -> ogboost::Result<(SeedResult, usize, usize, f64)> {
    let n = setup.stages;
    let m = (n as f64 / setup.scale_c).round() as usize;
    let t = setup.rounds.unwrap_or(12 * m);
    let lb = make_lower_bound_stream(n, t, seed, setup.scale_c)?;
    let pool = Arc::new(lb.pool);
    let learners = (0..n)
        .map(|i| {
            HedgeLearner::new(
                Arc::clone(&pool),
                HedgeRate::Horizon { rounds: t as u64 },
                HedgeOutput::Sampled {
                    seed: child_seed(seed, 1000 + i as u64),
                },
            )
        })
        .collect::<ogboost::Result<Vec<_>>>()?;
    let mut ch = ChBooster::new(ChConfig::new(n, LossFamily::Squared), learners)?;
    let (mut total, mut uniform) = (0.0, 0.0);
    for (x, l) in lb.stream.iter() {
        total += l.evaluate(&ch.predict(x)?);
        ch.update(x, l)?;
        uniform += l.evaluate_scalar(pool.mean(x));
    }
    let res = SeedResult {
        seed,
        booster_loss: total,
        uniform_loss: uniform,
        regret: total - uniform,
        concentration_ok: uniform <= t as f64 / lb.pool_size as f64,
    };
    Ok((res, lb.pool_size, t, lb.epsilon))
}

/// Returns whether the directional checks hold (at least 80% of seeds
/// above `0.05 T/N`, at least 90% concentrated).
pub fn lower_bound(setup: &LowerBoundSetup, out: &Path) -> Result<bool> {
    if setup.seeds == 0 {
        return Err(ConfigError(vec!["--seeds must be at least 1".into()]).into());
    }
    let results = (setup.seed..setup.seed + setup.seeds)
        .into_par_iter()
        .map(|s| lower_bound_seed(setup, s))
        .collect::<ogboost::Result<Vec<_>>>()?;
    let (pool_size, rounds, epsilon) = (results[0].1, results[0].2, results[0].3);
    let runs: Vec<SeedResult> = results.into_iter().map(|r| r.0).collect();
    let n = setup.stages as f64;
    let threshold = 0.05 * rounds as f64 / n;
    let mut regrets: Vec<f64> = runs.iter().map(|r| r.regret).collect();
    regrets.sort_by(f64::total_cmp);
    let k = regrets.len();
    let median = 0.5 * (regrets[(k - 1) / 2] + regrets[k / 2]);
    let above = runs.iter().filter(|r| r.regret >= threshold).count();
    let conc = runs.iter().filter(|r| r.concentration_ok).count();
    let pass = above * 10 >= 8 * k && conc * 10 >= 9 * k;

    let mut tsv = String::from("seed\tbooster_loss\tuniform_loss\tregret\treference_ct_over_n\tconcentration_ok\n");
    let reference = setup.scale_c * rounds as f64 / n;
    for r in &runs {
        writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{reference}\t{}",
            r.seed, r.booster_loss, r.uniform_loss, r.regret, r.concentration_ok
        )
        .expect("write to string");
    }
    write(out, "lower_bound.tsv", &tsv)?;
    let original_m = setup.stages * 4000;
    let summary = LowerBoundSummary {
        setup,
        pool_size,
        rounds,
        epsilon,
        reference_ct_over_n: reference,
        directional_threshold: threshold,
        median_regret: median,
        seeds_above_threshold: above,
        seeds_concentrated: conc,
        original_scale: OriginalScale {
            scale_c: LOWER_BOUND_SCALE_C,
            pool_size: original_m,
            rounds: 12 * original_m,
        },
        runs,
        pass,
    };
    println!(
        "N = {}, c = {}, M = {pool_size}, T = {rounds}: median regret {median:.2} (cT/N = {reference:.2}, 0.05T/N = {threshold:.2})",
        setup.stages, setup.scale_c
    );
    println!("regret >= 0.05T/N on {above}/{k} seeds; uniform comparator within T/M on {conc}/{k} seeds");
    write(out, "lower_bound.json", &json(&summary)?)?;
    Ok(pass)
}

// --- grid -----------------------------------------------------------------

pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub stages: Vec<usize>,
    pub etas: Vec<StepSize>,
    pub workers: usize,
}

/// `eta = None` (grid value `auto`) keeps the base config's `--eta`.
fn child_config(base: &RunConfig, p: &GridPoint) -> RunConfig {
    let mut c = base.clone();
    c.learning_rate = p.learning_rate;
    c.stages = p.stages;
    if let Some(eta) = p.eta {
        c.eta = StepSize::Fixed(eta);
    }
    c
}

#[derive(Debug, Serialize)]
struct GridSummary<'a> {
    config: &'a RunConfig,
    #[serde(flatten)]
    result: &'a GridResult,
}

pub fn grid(base: &RunConfig, spec: &GridSpec, out: &Path) -> Result<GridResult> {
    let etas: Vec<Option<f64>> = if spec.etas.is_empty() {
        vec![None]
    } else {
        spec.etas
            .iter()
            .map(|e| match e {
                StepSize::Auto => None,
                StepSize::Fixed(v) => Some(*v),
            })
            .collect()
    };
    let mut points = Vec::new();
    for &learning_rate in &spec.learning_rates {
        for &stages in &spec.stages {
            for &eta in &etas {
                points.push(GridPoint {
                    learning_rate,
                    stages,
                    eta,
                });
            }
        }
    }
    let mut violations = Vec::new();
    if points.is_empty() {
        violations.push("the grid is empty (give --learning-rates and --stages-grid)".to_string());
    }
    for p in &points {
        for v in child_config(base, p).violations() {
            let tag = format!("lr={} N={}", p.learning_rate, p.stages);
            let msg = format!("[{tag}] {v}");
            if !violations.contains(&msg) {
                violations.push(msg);
            }
        }
    }
    if !violations.is_empty() {
        return Err(ConfigError(violations).into());
    }
    let result = run_grid(&points, spec.workers, |p| {
        pipeline::execute(&child_config(base, p), false)
            .map(|e| e.metrics)
            .map_err(|e| ogboost::Error::Data(format!("{e:#}")))
    })?;

    let mut tsv = String::from("learning_rate\tstages\teta\ttune_loss\treport_loss\tselected\n");
    for (i, c) in result.children.iter().enumerate() {
        let eta = c.point.eta.map_or("auto".to_string(), |e| e.to_string());
        writeln!(
            tsv,
            "{}\t{}\t{eta}\t{}\t{}\t{}",
            c.point.learning_rate,
            c.point.stages,
            c.tune_loss,
            c.report_loss,
            i == result.selected
        )
        .expect("write to string");
    }
    write(out, "grid.tsv", &tsv)?;
    write(
        out,
        "grid.json",
        &json(&GridSummary {
            config: base,
            result: &result,
        })?,
    )?;
    let best = result.best();
    println!("{} child runs; selection rule: {}", result.children.len(), result.rule);
    println!(
        "selected learning_rate = {}, stages = {}, eta = {}: tune loss {:.6}, report loss {:.6}",
        best.point.learning_rate,
        best.point.stages,
        best.point.eta.map_or("auto".to_string(), |e| e.to_string()),
        best.tune_loss,
        best.report_loss
    );
    Ok(result)
}
