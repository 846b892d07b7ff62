//! The normalized repulsion and entropy terms, as plain functions and as
//! tape ops over per-object probability rows.

use super::BearsError;
use crate::distribution::{ConceptDistribution, PROB_FLOOR};
use crate::nn::{CustomOp, Matrix};

fn repulsion_factor(p: &[f64], rest: &[f64], t: usize) -> f64 {
    let a = (t - 1) as f64;
    let s: f64 = p
        .iter()
        .zip(rest)
        .map(|(&pi, &ri)| {
            // p log(1 + a/p) -> 0 as p -> 0
            if pi <= PROB_FLOOR {
                0.0
            } else {
                pi * (a * ri / pi).ln_1p()
            }
        })
        .sum();
    s / (t as f64).ln()
}

/// `(1/log t) Σ_c p(c) log[1 + (t−1) p_rest(c) / p(c)]` per variable against
/// the per-variable mean of `priors`, averaged over variables. Equals
/// `1 − KL(p ‖ mixture) / log t`, so it lies in `[0, 1]`.
pub fn kl_repulsion(
    p_new: &ConceptDistribution,
    priors: &[ConceptDistribution],
    t: usize,
) -> Result<f64, BearsError> {
    if t < 2 {
        return Err(BearsError::Config(format!("repulsion needs member index t >= 2, got {t}")));
    }
    if priors.is_empty() {
        return Err(BearsError::Config("repulsion needs at least one prior member".into()));
    }
    if priors.iter().any(|q| q.factors.len() != p_new.factors.len()) {
        return Err(BearsError::Config("prior members use a different schema".into()));
    }
    let rest = ConceptDistribution::mixture(priors);
    let n = p_new.factors.len() as f64;
    Ok(p_new
        .factors
        .iter()
        .zip(&rest.factors)
        .map(|(p, r)| repulsion_factor(p, r, t))
        .sum::<f64>()
        / n)
}

/// `1 − H(p) / H_max` with `H` the sum of per-variable entropies and
/// `H_max = Σ_j log |dom_j|`.
pub fn entropy_penalty(p: &ConceptDistribution) -> f64 {
    let h: f64 = p.factors.iter().map(|f| crate::distribution::entropy(f)).sum();
    let hmax: f64 = p.factors.iter().map(|f| (f.len() as f64).ln()).sum();
    1.0 - h / hmax
}

/// Tape op for [`kl_repulsion`] over a batch: input `(B·O) x width`
/// probabilities, constant `p_rest` of the same shape; output is the mean
/// over every (object, attribute) segment.
pub struct KlRepulsion {
    pub rest: Matrix,
    pub layout: Vec<usize>,
    pub t: usize,
}

impl KlRepulsion {
    fn segments(&self, rows: usize) -> f64 {
        (rows * self.layout.len()) as f64
    }
}

impl CustomOp for KlRepulsion {
    fn forward(&self, inputs: &[&Matrix]) -> Matrix {
        let p = inputs[0];
        let mut total = 0.0;
        for r in 0..p.rows {
            let (pr, rr) = (p.row(r), self.rest.row(r));
            let mut off = 0;
            for &n in &self.layout {
                total += repulsion_factor(&pr[off..off + n], &rr[off..off + n], self.t);
                off += n;
            }
        }
        Matrix::scalar(total / self.segments(p.rows))
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad_out: &Matrix) -> Vec<Matrix> {
        let p = inputs[0];
        let a = (self.t - 1) as f64;
        let scale = grad_out.data[0] / ((self.t as f64).ln() * self.segments(p.rows));
        let g = p.zip_map(&self.rest, |pi, ri| {
            if pi <= PROB_FLOOR {
                return 0.0;
            }
            let ar = a * ri;
            scale * ((ar / pi).ln_1p() - ar / (pi + ar))
        });
        vec![g]
    }
}

/// Tape op for [`entropy_penalty`], averaged over examples. Input
/// `(B·O) x width`; `objects` rows make up one example.
pub struct EntropyPenalty {
    pub layout: Vec<usize>,
    pub objects: usize,
}

impl EntropyPenalty {
    fn hmax(&self) -> f64 {
        self.objects as f64 * self.layout.iter().map(|&n| (n as f64).ln()).sum::<f64>()
    }
}

impl CustomOp for EntropyPenalty {
    fn forward(&self, inputs: &[&Matrix]) -> Matrix {
        let p = inputs[0];
        let h: f64 = p
            .data
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| -x * x.max(PROB_FLOOR).ln())
            .sum();
        let examples = (p.rows / self.objects) as f64;
        Matrix::scalar(1.0 - h / (self.hmax() * examples))
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, grad_out: &Matrix) -> Vec<Matrix> {
        let p = inputs[0];
        let examples = (p.rows / self.objects) as f64;
        let scale = grad_out.data[0] / (self.hmax() * examples);
        vec![p.map(|x| scale * (x.max(PROB_FLOOR).ln() + 1.0))]
    }
}
