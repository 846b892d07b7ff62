//! Calibration and accuracy metrics over predicted distributions.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::distribution::argmax;
use crate::knowledge::{ConceptSchema, LabelSpace};
use crate::nesy::Prediction;
use crate::tasks::Split;

pub const DEFAULT_BINS: usize = 10;
const OVA_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no records to evaluate")]
    Empty,
    #[error("bin count must be at least 1")]
    Bins,
    #[error("prediction/ground-truth mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A predicted distribution and its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub probs: Vec<f64>,
    pub truth: usize,
}

impl Record {
    pub fn new(probs: Vec<f64>, truth: usize) -> Self {
        Self { probs, truth }
    }

    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }

    /// Probability of the argmax class.
    pub fn confidence(&self) -> f64 {
        self.probs[self.predicted()]
    }

    pub fn correct(&self) -> bool {
        self.predicted() == self.truth
    }
}

/// Equal-width bin on (0, 1] of `conf`; a value on a boundary goes to the
/// lower bin and 0 goes to the first. Products like `0.3 * 10` are snapped
/// to the boundary they denote.
fn bin_of(conf: f64, m: usize) -> usize {
    let scaled = conf * m as f64;
    let snapped = if (scaled - scaled.round()).abs() < 1e-9 { scaled.round() } else { scaled };
    (snapped.ceil() as usize).clamp(1, m) - 1
}

pub fn ece(records: &[Record], m: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    if m == 0 {
        return Err(MetricsError::Bins);
    }
    let mut count = vec![0usize; m];
    let mut hits = vec![0.0; m];
    let mut conf = vec![0.0; m];
    for r in records {
        let c = r.confidence();
        let b = bin_of(c, m);
        count[b] += 1;
        conf[b] += c;
        if r.correct() {
            hits[b] += 1.0;
        }
    }
    let n = records.len() as f64;
    Ok((0..m)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            (k / n) * (hits[b] / k - conf[b] / k).abs()
        })
        .sum())
}

/// ECE over the pool of every variable's records.
pub fn ece_concepts(per_variable: &[Vec<Record>], m: usize) -> Result<f64, MetricsError> {
    let pool: Vec<Record> = per_variable.iter().flatten().cloned().collect();
    ece(&pool, m)
}

pub fn mece(per_component: &[f64]) -> Result<f64, MetricsError> {
    if per_component.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(per_component.iter().sum::<f64>() / per_component.len() as f64)
}

/// Mean binary entropy of event probabilities, clamped away from 0 and 1.
pub fn ova_entropy(probs: &[f64]) -> Result<f64, MetricsError> {
    if probs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let h: f64 = probs
        .iter()
        .map(|&p| {
            let p = p.clamp(OVA_CLAMP, 1.0 - OVA_CLAMP);
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        })
        .sum();
    Ok(h / probs.len() as f64)
}

pub fn accuracy(records: &[Record]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64)
}

/// Mean over `classes` of per-class F1; precision or recall of 0/0 counts
/// as 0, so a class that never occurs contributes 0.
pub fn macro_f1(records: &[Record], classes: usize) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    if classes == 0 {
        return Err(MetricsError::Shape("zero classes".into()));
    }
    let mut tp = vec![0.0; classes];
    let mut fp = vec![0.0; classes];
    let mut fnn = vec![0.0; classes];
    for r in records {
        let p = r.predicted();
        if p == r.truth {
            tp[p] += 1.0;
        } else {
            fp[p] += 1.0;
            fnn[r.truth] += 1.0;
        }
    }
    let f1: f64 = (0..classes)
        .map(|c| {
            let prec = if tp[c] + fp[c] > 0.0 { tp[c] / (tp[c] + fp[c]) } else { 0.0 };
            let rec = if tp[c] + fnn[c] > 0.0 { tp[c] / (tp[c] + fnn[c]) } else { 0.0 };
            if prec + rec > 0.0 {
                2.0 * prec * rec / (prec + rec)
            } else {
                0.0
            }
        })
        .sum();
    Ok(f1 / classes as f64)
}

/// Mean of per-component macro F1.
pub fn mean_f1(components: &[(Vec<Record>, usize)]) -> Result<f64, MetricsError> {
    let scores: Vec<f64> = components
        .iter()
        .map(|(r, k)| macro_f1(r, *k))
        .collect::<Result<_, _>>()?;
    mece(&scores)
}

/// One evaluation row. `ova` holds `(column, value)` pairs named
/// `ova_<attribute>_<value>`: the mean one-vs-all entropy of that value's
/// probability over objects whose true attribute equals it (`NaN` when no
/// such object exists in the split).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub split: String,
    pub n: usize,
    pub acc_y: f64,
    pub acc_c: f64,
    pub ece_y: f64,
    pub ece_c: f64,
    pub mece_c: f64,
    pub macro_f1: f64,
    pub ova: Vec<(String, f64)>,
}

pub struct EvalContext<'a> {
    pub method: &'a str,
    pub task: &'a str,
    pub seed: u64,
    pub bins: usize,
}

/// Per-component label marginals of a joint label distribution.
fn label_components(space: &LabelSpace, dist: &[f64]) -> Vec<Vec<f64>> {
    let comps = space.components();
    let mut out: Vec<Vec<f64>> = comps.iter().map(|c| vec![0.0; c.cardinality()]).collect();
    for (i, &p) in dist.iter().enumerate() {
        let v = space.value_of(i);
        for (j, c) in comps.iter().enumerate() {
            out[j][(v.0[j] - c.min) as usize] += p;
        }
    }
    out
}

pub fn evaluate(
    ctx: &EvalContext<'_>,
    schema: &ConceptSchema,
    space: &LabelSpace,
    pred: &Prediction,
    split: &Split,
) -> Result<MetricsReport, MetricsError> {
    let n = split.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if pred.concepts.len() != n || pred.labels.len() != n {
        return Err(MetricsError::Shape(format!(
            "{} predictions for {n} examples",
            pred.concepts.len()
        )));
    }
    let label_records: Vec<Record> = pred
        .labels
        .iter()
        .zip(&split.y)
        .map(|(p, &y)| Record::new(p.clone(), y))
        .collect();
    let per_var: Vec<Vec<Record>> = (0..schema.num_vars())
        .map(|j| {
            pred.concepts
                .iter()
                .zip(&split.g)
                .map(|(c, g)| Record::new(c.factors[j].clone(), g[j]))
                .collect()
        })
        .collect();
    let pooled: Vec<Record> = per_var.iter().flatten().cloned().collect();
    let var_ece: Vec<f64> = per_var.iter().map(|r| ece(r, ctx.bins)).collect::<Result<_, _>>()?;

    let comps = space.components();
    let mut comp_records: Vec<(Vec<Record>, usize)> =
        comps.iter().map(|c| (Vec::with_capacity(n), c.cardinality())).collect();
    for (p, &y) in pred.labels.iter().zip(&split.y) {
        let truth = space.value_of(y);
        for (j, marg) in label_components(space, p).into_iter().enumerate() {
            comp_records[j].1 = comps[j].cardinality();
            comp_records[j].0.push(Record::new(marg, (truth.0[j] - comps[j].min) as usize));
        }
    }

    let mut ova = Vec::new();
    let layout = schema.layout();
    for (a, attr) in schema.attributes().iter().enumerate() {
        for v in 0..layout[a] {
            let mut probs = Vec::new();
            for (c, g) in pred.concepts.iter().zip(&split.g) {
                for o in 0..schema.num_objects() {
                    let var = schema.object_vars(o)[a];
                    if g[var] == v {
                        probs.push(c.factors[var][v]);
                    }
                }
            }
            let h = if probs.is_empty() { f64::NAN } else { ova_entropy(&probs)? };
            ova.push((format!("ova_{attr}_{v}"), h));
        }
    }

    Ok(MetricsReport {
        method: ctx.method.to_string(),
        task: ctx.task.to_string(),
        seed: ctx.seed,
        split: split.name.to_string(),
        n,
        acc_y: accuracy(&label_records)?,
        acc_c: accuracy(&pooled)?,
        ece_y: ece(&label_records, ctx.bins)?,
        ece_c: ece(&pooled, ctx.bins)?,
        mece_c: mece(&var_ece)?,
        macro_f1: mean_f1(&comp_records)?,
        ova,
    })
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

/// Writes reports as CSV; all rows must share their OVA columns.
pub fn write_reports(reports: &[MetricsReport], w: impl Write) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = [
        "method", "task", "seed", "split", "n", "acc_y", "acc_c", "ece_y", "ece_c", "mece_c", "macro_f1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Some(first) = reports.first() {
        header.extend(first.ova.iter().map(|(k, _)| k.clone()));
    }
    out.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.method.clone(),
            r.task.clone(),
            r.seed.to_string(),
            r.split.clone(),
            r.n.to_string(),
        ];
        row.extend([r.acc_y, r.acc_c, r.ece_y, r.ece_c, r.mece_c, r.macro_f1].map(fmt_f));
        row.extend(r.ova.iter().map(|(_, v)| fmt_f(*v)));
        if row.len() != header.len() {
            return Err(MetricsError::Shape("reports have different OVA columns".into()));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
