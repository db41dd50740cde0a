//! Numeric primitives shared by every other module: dense predictions in
//! `R^d`, the Euclidean ball projection, and the sparse streaming example.
//!
//! Predictions are small dense vectors (`d = 1` for every regression setting
//! in this crate) while features are sparse, keyed by 32-bit ids. Named
//! features (CSV headers) are hashed with FNV-1a; integer ids (libsvm) are
//! used verbatim.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense prediction (or label, or gradient) vector.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction(Vec<f64>);

impl Prediction {
    pub fn zeros(dim: usize) -> Self {
        Prediction(vec![0.0; dim])
    }

    pub fn scalar(value: f64) -> Self {
        Prediction(vec![value])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Prediction(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// First coordinate; the whole value in the 1-d case.
    pub fn first(&self) -> f64 {
        self.0.first().copied().unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Prediction) -> Result<f64> {
        dot(self, other)
    }

    pub fn scaled(&self, factor: f64) -> Prediction {
        Prediction(self.0.iter().map(|v| v * factor).collect())
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &Prediction) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &Prediction) -> Prediction {
        Prediction(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl fmt::Debug for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl From<f64> for Prediction {
    fn from(value: f64) -> Self {
        Prediction::scalar(value)
    }
}

/// Euclidean norm; the absolute value when `d = 1`.
pub fn norm(values: &[f64]) -> f64 {
    match values {
        [v] => v.abs(),
        _ => values.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Projection onto the closed Euclidean ball of radius `radius`.
///
/// Points already inside the ball are returned unchanged (bit for bit);
/// points outside are rescaled onto the sphere.
pub fn project(y: &Prediction, radius: f64) -> Result<Prediction> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid("radius", format!("must be positive, got {radius}")));
    }
    if !y.is_finite() {
        return Err(Error::NonFinite("projection input"));
    }
    let n = y.norm();
    if n <= radius {
        return Ok(y.clone());
    }
    if let [v] = y.as_slice() {
        return Ok(Prediction::scalar(radius.copysign(*v)));
    }
    let mut out = y.scaled(radius / n);
    // Rounding in the rescale can leave the norm a hair above the radius.
    let m = out.norm();
    if m > radius {
        let shrink = radius / m;
        out.as_mut_slice().iter_mut().for_each(|v| *v *= shrink);
    }
    Ok(out)
}

pub fn clip_unit_interval(s: f64) -> f64 {
    s.clamp(0.0, 1.0)
}

pub fn dot(a: &Prediction, b: &Prediction) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

/// 32-bit feature identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureId(pub u32);

impl FeatureId {
    /// Hashes a feature name with 32-bit FNV-1a.
    pub fn hashed(name: &str) -> Self {
        let mut h: u32 = 0x811c_9dc5;
        for b in name.as_bytes() {
            h ^= u32::from(*b);
            h = h.wrapping_mul(0x0100_0193);
        }
        FeatureId(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: FeatureId,
    pub value: f64,
}

/// One stream element: a sparse feature vector plus an optional label.
///
/// Features are kept sorted by id with no explicit zeros. `index` is the
/// element's position in its stream and doubles as the domain point for
/// function pools defined over the naturals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub index: u64,
    features: Vec<Feature>,
    label: Option<Prediction>,
}

impl Example {
    pub fn new(
        index: u64,
        features: impl IntoIterator<Item = (FeatureId, f64)>,
        label: Option<Prediction>,
    ) -> Result<Self> {
        let mut feats: Vec<Feature> = Vec::new();
        for (id, value) in features {
            if !value.is_finite() {
                return Err(Error::NonFinite("feature value"));
            }
            if value != 0.0 {
                feats.push(Feature { id, value });
            }
        }
        feats.sort_by_key(|f| f.id);
        if let Some(w) = feats.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Data(format!("feature {} defined twice", w[0].id.0)));
        }
        if let Some(l) = &label {
            if !l.is_finite() {
                return Err(Error::NonFinite("label"));
            }
        }
        Ok(Example {
            index,
            features: feats,
            label,
        })
    }

    /// Dense helper: feature ids `1..=values.len()`.
    pub fn dense(index: u64, values: &[f64], label: Option<f64>) -> Result<Self> {
        Example::new(
            index,
            values.iter().enumerate().map(|(j, v)| (FeatureId(j as u32 + 1), *v)),
            label.map(Prediction::scalar),
        )
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn label(&self) -> Option<&Prediction> {
        self.label.as_ref()
    }

    pub fn with_label(mut self, label: Prediction) -> Result<Self> {
        if !label.is_finite() {
            return Err(Error::NonFinite("label"));
        }
        self.label = Some(label);
        Ok(self)
    }

    pub fn value(&self, id: FeatureId) -> f64 {
        self.features
            .binary_search_by_key(&id, |f| f.id)
            .map(|i| self.features[i].value)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.features.iter().map(|f| f.value * f.value).sum::<f64>().sqrt()
    }
}
