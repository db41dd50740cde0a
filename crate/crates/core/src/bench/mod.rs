//! Experiment harness: streams, synthetic generators, offline comparators,
//! progressive validation and regret accounting.

mod grid;
mod oracle;
mod regret;
mod stream;
mod synth;
mod validate;

pub use grid::{run_grid, GridChild, GridPoint, GridResult, SELECTION_RULE};
pub use oracle::{
    best_convex_hull_oracle, best_single, projected_gradient_hull, uniform_comparator_loss, zero_comparator_loss,
    HullFit, HullMode, MAX_ORACLE_POOL,
};
pub use regret::{
    hull_regret_bound, span_regret_bound, HullBoundInputs, HullBoundTerms, RegretReport, SpanBoundInputs,
    SpanBoundTerms, StageRegretTracker,
};
pub use stream::{parse_reader, parse_stream, write_stream, Format, LabelRange};
pub use synth::{
    additive_stump_stream, make_lower_bound_stream, planted_ch_stream, planted_span_stream, random_pool,
    uniform_inputs, AdditiveStumpSpec, LowerBoundSetup,
};
pub use validate::{progressive_validate, RunMetrics};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossFamily, LossInstance};
use crate::primitives::Example;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StreamSource {
    File { path: String },
    Synthetic { generator: String, seed: u64 },
}

/// A replayable sequence of `(x_t, l_t)` pairs.
///
/// Every example carries its label; the loss of round `t` is the stream's
/// family instantiated at that label. Example indices are `0..T` in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    source: StreamSource,
    family: LossFamily,
    rounds: Vec<(Example, LossInstance)>,
}

impl Stream {
    pub fn new(source: StreamSource, family: LossFamily, examples: Vec<Example>) -> Result<Self> {
        let mut rounds = Vec::with_capacity(examples.len());
        for (t, x) in examples.into_iter().enumerate() {
            if x.index != t as u64 {
                return Err(Error::Data(format!("example {t} carries index {}", x.index)));
            }
            let label = x
                .label()
                .cloned()
                .ok_or_else(|| Error::Data(format!("example {t} has no label")))?;
            let loss = family.instance(label)?;
            rounds.push((x, loss));
        }
        Ok(Stream { source, family, rounds })
    }

    pub fn source(&self) -> &StreamSource {
        &self.source
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &(Example, LossInstance)> {
        self.rounds.iter()
    }

    pub fn examples(&self) -> impl ExactSizeIterator<Item = &Example> {
        self.rounds.iter().map(|(x, _)| x)
    }

    /// First label coordinate of every round.
    pub fn labels(&self) -> Vec<f64> {
        self.rounds.iter().map(|(_, l)| l.target().first()).collect()
    }

    /// The same examples under another loss family.
    pub fn with_family(&self, family: LossFamily) -> Result<Stream> {
        Stream::new(self.source.clone(), family, self.examples().cloned().collect())
    }
}

/// The comparator a run is measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ComparatorSpec {
    /// `f = sum_g w_g g` with `norm = max(1, sum |w_g|)`.
    PlantedSpan {
        coefficients: Vec<f64>,
        norm: f64,
    },
    BestConvexHull,
    BestSingle,
    Zero,
}
