use serde::{Deserialize, Serialize};

use crate::knowledge::{ConceptSchema, KnowledgeError};

/// Floor applied to every probability before it reaches a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Factorized categorical distribution over concept variables, one factor
/// per schema variable (in schema order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptDistribution {
    pub factors: Vec<Vec<f64>>,
}

impl ConceptDistribution {
    pub fn new(factors: Vec<Vec<f64>>) -> Self {
        Self { factors }
    }

    pub fn uniform(schema: &ConceptSchema) -> Self {
        Self {
            factors: schema
                .sizes()
                .iter()
                .map(|&s| vec![1.0 / s as f64; s])
                .collect(),
        }
    }

    /// Point mass on `assignment`.
    pub fn point_mass(schema: &ConceptSchema, assignment: &[usize]) -> Self {
        Self {
            factors: schema
                .sizes()
                .iter()
                .zip(assignment)
                .map(|(&s, &v)| {
                    let mut f = vec![0.0; s];
                    f[v] = 1.0;
                    f
                })
                .collect(),
        }
    }

    /// Rebuilds a distribution from per-object encoder rows, each holding
    /// the concatenated attribute factors of one object.
    pub fn from_object_rows(schema: &ConceptSchema, rows: &[f64]) -> Self {
        let width = schema.object_width();
        let layout = schema.layout();
        let mut factors = vec![Vec::new(); schema.num_vars()];
        for o in 0..schema.num_objects() {
            let row = &rows[o * width..(o + 1) * width];
            let mut off = 0;
            for (&var, &size) in schema.object_vars(o).iter().zip(&layout) {
                factors[var] = row[off..off + size].to_vec();
                off += size;
            }
        }
        Self { factors }
    }

    /// Inverse of [`from_object_rows`](Self::from_object_rows).
    pub fn to_object_rows(&self, schema: &ConceptSchema) -> Vec<f64> {
        let mut out = Vec::with_capacity(schema.num_objects() * schema.object_width());
        for o in 0..schema.num_objects() {
            for &var in schema.object_vars(o) {
                out.extend_from_slice(&self.factors[var]);
            }
        }
        out
    }

    /// Checks shape against the schema and normalization within `tol`.
    pub fn validate(&self, schema: &ConceptSchema, tol: f64) -> Result<(), KnowledgeError> {
        if self.factors.len() != schema.num_vars() {
            return Err(KnowledgeError::Distribution(format!(
                "{} factors for {} variables",
                self.factors.len(),
                schema.num_vars()
            )));
        }
        for (v, f) in self.factors.iter().enumerate() {
            if f.len() != schema.size(v) {
                return Err(KnowledgeError::Distribution(format!(
                    "factor {v} has {} entries, domain size is {}",
                    f.len(),
                    schema.size(v)
                )));
            }
            if f.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(KnowledgeError::Distribution(format!(
                    "factor {v} has a negative or non-finite entry"
                )));
            }
            let s: f64 = f.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(KnowledgeError::Distribution(format!(
                    "factor {v} sums to {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.factors.iter().map(|f| argmax(f)).collect()
    }

    /// Per-variable uniform mixture of several distributions.
    pub fn mixture(parts: &[ConceptDistribution]) -> Self {
        assert!(!parts.is_empty(), "mixture of zero distributions");
        let k = parts.len() as f64;
        let mut factors: Vec<Vec<f64>> = parts[0]
            .factors
            .iter()
            .map(|f| vec![0.0; f.len()])
            .collect();
        for p in parts {
            for (acc, f) in factors.iter_mut().zip(&p.factors) {
                for (a, x) in acc.iter_mut().zip(f) {
                    *a += x / k;
                }
            }
        }
        Self { factors }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy (nats) with the probability floor applied.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.max(PROB_FLOOR).ln())
        .sum::<f64>()
        + 0.0 // normalizes -0.0
}
