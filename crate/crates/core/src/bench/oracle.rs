//! Offline comparators over a finite pool.

use serde::{Deserialize, Serialize};

use crate::bench::Stream;
use crate::error::{Error, Result};
use crate::learners::FunctionPool;
use crate::losses::{LossFamily, LossInstance};
use crate::primitives::Prediction;

/// Pools larger than this are refused by the optimizing oracle.
pub const MAX_ORACLE_POOL: usize = 64;

/// Relative (per-round) duality gap the Frank-Wolfe oracle must reach.
pub const GAP_PER_ROUND: f64 = 1e-6;

/// Allowed per-round disagreement between the two solvers.
pub const CROSS_CHECK_PER_ROUND: f64 = 1e-5;

const MAX_FW_ITERS: usize = 200_000;
const MAX_PG_ITERS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullMode {
    /// Minimize over the simplex.
    Optimize,
    /// Return the uniform average `(1/M) sum_i f_i` without optimizing.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullFit {
    pub coefficients: Vec<f64>,
    /// Total loss of `coefficients`.
    pub total_loss: f64,
    /// Frank-Wolfe duality gap at `coefficients`; `total_loss - gap` lower
    /// bounds the true minimum.
    pub gap: f64,
    pub iterations: usize,
    /// Total loss reached by the projected-gradient solver.
    pub cross_check_loss: Option<f64>,
}

impl HullFit {
    pub fn lower_bound(&self) -> f64 {
        self.total_loss - self.gap
    }
}

/// Pool values tabulated on the stream, row-major `T x K`.
struct Table<'a> {
    losses: Vec<&'a LossInstance>,
    values: Vec<f64>,
    k: usize,
}

impl<'a> Table<'a> {
    fn new<P: FunctionPool>(stream: &'a Stream, pool: &P) -> Result<Self> {
        if stream.is_empty() {
            return Err(Error::invalid("stream", "is empty"));
        }
        if let Some((_, l)) = stream.iter().find(|(_, l)| l.target().dim() != 1) {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: l.target().dim(),
            });
        }
        let k = pool.len();
        let mut values = Vec::with_capacity(stream.len() * k);
        let mut row = Vec::with_capacity(k);
        for (x, _) in stream.iter() {
            pool.eval_all(x, &mut row);
            values.extend_from_slice(&row);
        }
        Ok(Table {
            losses: stream.iter().map(|(_, l)| l).collect(),
            values,
            k,
        })
    }

    fn rows(&self) -> usize {
        self.losses.len()
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.k..(t + 1) * self.k]
    }

    fn combine(&self, w: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|t| self.row(t).iter().zip(w).map(|(v, w)| v * w).sum())
            .collect()
    }

    fn loss(&self, z: &[f64]) -> f64 {
        self.losses.iter().zip(z).map(|(l, z)| l.evaluate_scalar(*z)).sum()
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.k];
        for (t, (l, z)) in self.losses.iter().zip(z).enumerate() {
            let d = l.derivative_scalar(*z);
            if d != 0.0 {
                for (gk, v) in g.iter_mut().zip(self.row(t)) {
                    *gk += d * v;
                }
            }
        }
        g
    }

    /// `argmin_{gamma in [0, max]} sum_t l_t(z_t + gamma u_t)`.
    fn line_search(&self, z: &[f64], u: &[f64], max: f64) -> f64 {
        let slope = |g: f64| -> f64 {
            self.losses
                .iter()
                .zip(z.iter().zip(u))
                .map(|(l, (z, u))| l.derivative_scalar(z + g * u) * u)
                .sum()
        };
        if slope(0.0) >= 0.0 {
            return 0.0;
        }
        if self.losses[0].family() == LossFamily::Squared {
            let num: f64 = -slope(0.0);
            let den: f64 = u.iter().map(|u| u * u).sum();
            return if den > 0.0 { (num / den).min(max) } else { max };
        }
        if slope(max) <= 0.0 {
            return max;
        }
        let (mut lo, mut hi) = (0.0, max);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, k| if v[k] < v[b] { k } else { b })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Best single pool member: `(index, total loss)`, ties to the lowest index.
pub fn best_single<P: FunctionPool>(stream: &Stream, pool: &P) -> Result<(usize, f64)> {
    let table = Table::new(stream, pool)?;
    let totals: Vec<f64> = (0..table.k)
        .map(|k| {
            table
                .losses
                .iter()
                .enumerate()
                .map(|(t, l)| l.evaluate_scalar(table.row(t)[k]))
                .sum()
        })
        .collect();
    let k = argmin(&totals);
    Ok((k, totals[k]))
}

/// Total loss of the zero predictor.
pub fn zero_comparator_loss(stream: &Stream) -> f64 {
    stream
        .iter()
        .map(|(_, l)| l.evaluate(&Prediction::zeros(l.target().dim())))
        .sum()
}

/// Total loss of the uniform average of the pool.
pub fn uniform_comparator_loss<P: FunctionPool>(stream: &Stream, pool: &P) -> f64 {
    let m = pool.len() as f64;
    let mut row = Vec::with_capacity(pool.len());
    stream
        .iter()
        .map(|(x, l)| {
            pool.eval_all(x, &mut row);
            l.evaluate_scalar(row.iter().sum::<f64>() / m)
        })
        .sum()
}

/// The best convex combination of the pool in hindsight.
///
/// `Optimize` runs Frank-Wolfe with away steps and exact line search until
/// the duality gap is at most `1e-6 T`, then cross-checks the value against
/// accelerated projected gradient (agreement within `1e-5 T`).
pub fn best_convex_hull_oracle<P: FunctionPool>(stream: &Stream, pool: &P, mode: HullMode) -> Result<HullFit> {
    if pool.is_empty() {
        return Err(Error::invalid("pool", "is empty"));
    }
    if mode == HullMode::Uniform {
        let m = pool.len();
        return Ok(HullFit {
            coefficients: vec![1.0 / m as f64; m],
            total_loss: uniform_comparator_loss(stream, pool),
            gap: 0.0,
            iterations: 0,
            cross_check_loss: None,
        });
    }
    if pool.len() > MAX_ORACLE_POOL {
        return Err(Error::invalid(
            "pool",
            format!("{} functions exceed the oracle limit of {MAX_ORACLE_POOL}", pool.len()),
        ));
    }
    let table = Table::new(stream, pool)?;
    let mut fit = frank_wolfe(&table)?;
    let pg = projected_gradient(&table);
    let tol = CROSS_CHECK_PER_ROUND * table.rows() as f64;
    if (pg.total_loss - fit.total_loss).abs() > tol {
        return Err(Error::Contract(format!(
            "hull oracles disagree: Frank-Wolfe {} vs projected gradient {}",
            fit.total_loss, pg.total_loss
        )));
    }
    fit.cross_check_loss = Some(pg.total_loss);
    Ok(fit)
}

fn frank_wolfe(table: &Table<'_>) -> Result<HullFit> {
    let k = table.k;
    let tol = GAP_PER_ROUND * table.rows() as f64;
    // Start at the best vertex.
    let vertex_losses: Vec<f64> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            table.loss(&table.combine(&e))
        })
        .collect();
    let mut w = vec![0.0; k];
    w[argmin(&vertex_losses)] = 1.0;
    let mut z = table.combine(&w);
    let mut u = vec![0.0; table.rows()];
    for it in 0..MAX_FW_ITERS {
        let g = table.gradient(&z);
        let gw = dot(&g, &w);
        let s = argmin(&g);
        let gap = gw - g[s];
        if gap <= tol {
            return Ok(HullFit {
                coefficients: w,
                total_loss: table.loss(&z),
                gap: gap.max(0.0),
                iterations: it,
                cross_check_loss: None,
            });
        }
        let a = (0..k)
            .filter(|j| w[*j] > 0.0)
            .fold(None, |b: Option<usize>, j| match b {
                Some(b) if g[b] >= g[j] => Some(b),
                _ => Some(j),
            })
            .expect("iterate has support");
        let away_gap = g[a] - gw;
        if gap >= away_gap || w[a] >= 1.0 {
            for (t, ut) in u.iter_mut().enumerate() {
                *ut = table.row(t)[s] - z[t];
            }
            let gamma = table.line_search(&z, &u, 1.0);
            for wj in w.iter_mut() {
                *wj *= 1.0 - gamma;
            }
            w[s] += gamma;
            if gamma == 1.0 {
                w.iter_mut().for_each(|v| *v = 0.0);
                w[s] = 1.0;
            }
            z.iter_mut().zip(&u).for_each(|(z, u)| *z += gamma * u);
        } else {
            for (t, ut) in u.iter_mut().enumerate() {
                *ut = z[t] - table.row(t)[a];
            }
            let max = w[a] / (1.0 - w[a]);
            let gamma = table.line_search(&z, &u, max);
            for wj in w.iter_mut() {
                *wj *= 1.0 + gamma;
            }
            w[a] -= gamma;
            if gamma == max {
                w[a] = 0.0;
            }
            z.iter_mut().zip(&u).for_each(|(z, u)| *z += gamma * u);
        }
        // Keep z consistent with w against drift.
        if it % 64 == 63 {
            z = table.combine(&w);
        }
    }
    Err(Error::Contract(format!(
        "Frank-Wolfe did not reach gap {tol} in {MAX_FW_ITERS} iterations"
    )))
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (i as f64 + 1.0);
        if *s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Accelerated projected gradient with backtracking and adaptive restart.
pub fn projected_gradient_hull<P: FunctionPool>(stream: &Stream, pool: &P) -> Result<HullFit> {
    let table = Table::new(stream, pool)?;
    Ok(projected_gradient(&table))
}

fn projected_gradient(table: &Table<'_>) -> HullFit {
    let k = table.k;
    let mut x = vec![1.0 / k as f64; k];
    let mut y = x.clone();
    let mut fx = table.loss(&table.combine(&x));
    let mut momentum: f64 = 1.0;
    let mut step = 1.0 / table.rows() as f64;
    let tol = 0.1 * GAP_PER_ROUND * table.rows() as f64;
    let mut iterations = 0;
    for it in 0..MAX_PG_ITERS {
        iterations = it;
        let zy = table.combine(&y);
        let fy = table.loss(&zy);
        let g = table.gradient(&zy);
        let (next, fnext) = loop {
            let cand = project_simplex(&y.iter().zip(&g).map(|(y, g)| y - step * g).collect::<Vec<_>>());
            let fc = table.loss(&table.combine(&cand));
            let d: Vec<f64> = cand.iter().zip(&y).map(|(c, y)| c - y).collect();
            let model = fy + dot(&g, &d) + dot(&d, &d) / (2.0 * step);
            if fc <= model + 1e-12 * fy.abs().max(1.0) || step < 1e-30 {
                break (cand, fc);
            }
            step *= 0.5;
        };
        let gap = {
            let zn = table.combine(&next);
            let gn = table.gradient(&zn);
            dot(&gn, &next) - gn[argmin(&gn)]
        };
        if fnext > fx {
            // Restart momentum.
            momentum = 1.0;
            y = x.clone();
            continue;
        }
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = next
            .iter()
            .zip(&x)
            .map(|(n, o)| n + (momentum - 1.0) / m_next * (n - o))
            .collect();
        momentum = m_next;
        x = next;
        fx = fnext;
        step *= 1.2;
        if gap <= tol {
            break;
        }
    }
    let z = table.combine(&x);
    let g = table.gradient(&z);
    HullFit {
        gap: (dot(&g, &x) - g[argmin(&g)]).max(0.0),
        total_loss: fx,
        coefficients: x,
        iterations,
        cross_check_loss: None,
    }
}
