//! NeSy predictors: a shared per-object concept encoder followed by exact
//! reasoning (DPL), optionally with a neural label head trained with a
//! semantic loss (SL).

mod ops;

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{ConceptDistribution, PROB_FLOOR};
use crate::knowledge::{ConceptSchema, KnowledgeError, Reasoner};
use crate::nn::{Adam, Matrix, Mlp, NnError, Tape, Var};
use crate::seed::{self, Rng};

pub use ops::LabelLikelihood;

#[derive(Debug, Error)]
pub enum NesyError {
    #[error("example {example}: label index {label} is not admissible under the knowledge")]
    Inadmissible { example: usize, label: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("predictor kind {0:?} does not support this operation")]
    Kind(PredictorKind),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Dpl,
    Sl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Input width of one object.
    pub object_input: usize,
    pub hidden: usize,
    pub dropout: f64,
    /// Hidden width of the SL label head.
    pub head_hidden: usize,
}

impl ArchConfig {
    pub fn new(object_input: usize) -> Self {
        Self {
            object_input,
            hidden: 64,
            dropout: 0.5,
            head_hidden: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-epoch learning-rate decay.
    pub decay: f64,
    /// Weight of the semantic term for SL.
    pub w_sl: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            decay: 0.95,
            w_sl: 1.0,
            seed: 0,
        }
    }
}

/// Concept annotations on individual objects. Row `r` of `x` is one object's
/// input and `targets[r][a]` the revealed value of attribute `a`, if any.
#[derive(Clone, Debug)]
pub struct ObjectSupervision {
    pub x: Matrix,
    pub targets: Vec<Vec<Option<usize>>>,
    pub weight: f64,
}

impl ObjectSupervision {
    pub fn num_revealed(&self) -> usize {
        self.targets.iter().flatten().filter(|t| t.is_some()).count()
    }
}

/// Extra loss term added to every training batch.
pub trait Regularizer {
    /// `probs` holds per-object concept probabilities, `(B·O) x width`, for
    /// the dataset rows listed in `rows`.
    fn term(&self, tape: &mut Tape, probs: Var, rows: &[usize]) -> Result<Option<Var>, NesyError>;
}

/// Per-example outputs of a forward pass.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub concepts: Vec<ConceptDistribution>,
    pub labels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainStats {
    /// Mean label loss per epoch.
    pub epoch_loss: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NesyPredictor {
    kind: PredictorKind,
    encoder: Mlp,
    head: Option<Mlp>,
    reasoner: Arc<Reasoner>,
    admissible: Arc<Vec<bool>>,
}

/// Which labels have a nonempty preimage under the knowledge. A strictly
/// positive distribution puts positive mass on exactly those labels.
pub fn admissible_labels(reasoner: &Reasoner) -> Vec<bool> {
    let u = ConceptDistribution::uniform(reasoner.knowledge().schema());
    reasoner.label_probs(&u.factors).iter().map(|&p| p > 0.0).collect()
}

impl NesyPredictor {
    pub fn new(
        kind: PredictorKind,
        reasoner: Arc<Reasoner>,
        arch: &ArchConfig,
        seed: u64,
    ) -> Result<Self, NesyError> {
        let admissible = Arc::new(admissible_labels(&reasoner));
        Self::with_admissible(kind, reasoner, admissible, arch, seed)
    }

    pub(crate) fn with_admissible(
        kind: PredictorKind,
        reasoner: Arc<Reasoner>,
        admissible: Arc<Vec<bool>>,
        arch: &ArchConfig,
        seed: u64,
    ) -> Result<Self, NesyError> {
        let schema = reasoner.knowledge().schema();
        let mut rng = seed::rng(seed, "encoder-init");
        let encoder = Mlp::new(
            &[arch.object_input, arch.hidden, schema.object_width()],
            arch.dropout,
            &mut rng,
        )?;
        let head = match kind {
            PredictorKind::Dpl => None,
            PredictorKind::Sl => {
                let mut rng = seed::rng(seed, "head-init");
                Some(Mlp::new(
                    &[
                        schema.num_objects() * schema.object_width(),
                        arch.head_hidden,
                        reasoner.num_labels(),
                    ],
                    0.0,
                    &mut rng,
                )?)
            }
        };
        Ok(Self {
            kind,
            encoder,
            head,
            reasoner,
            admissible,
        })
    }

    /// Rebuilds a predictor from stored networks.
    pub fn from_parts(
        kind: PredictorKind,
        reasoner: Arc<Reasoner>,
        encoder: Mlp,
        head: Option<Mlp>,
    ) -> Result<Self, NesyError> {
        let schema = reasoner.knowledge().schema();
        if encoder.output_dim() != schema.object_width() {
            return Err(NesyError::Shape(format!(
                "encoder emits {} values, object layout needs {}",
                encoder.output_dim(),
                schema.object_width()
            )));
        }
        match (&head, kind) {
            (None, PredictorKind::Dpl) => {}
            (Some(h), PredictorKind::Sl)
                if h.output_dim() == reasoner.num_labels()
                    && h.input_dim() == schema.num_objects() * schema.object_width() => {}
            _ => return Err(NesyError::Shape("label head does not match the predictor".into())),
        }
        let admissible = Arc::new(admissible_labels(&reasoner));
        Ok(Self {
            kind,
            encoder,
            head,
            reasoner,
            admissible,
        })
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn head(&self) -> Option<&Mlp> {
        self.head.as_ref()
    }

    pub fn head_mut(&mut self) -> Option<&mut Mlp> {
        self.head.as_mut()
    }

    pub fn reasoner(&self) -> &Arc<Reasoner> {
        &self.reasoner
    }

    pub fn schema(&self) -> &ConceptSchema {
        self.reasoner.knowledge().schema()
    }

    pub fn admissible(&self) -> &Arc<Vec<bool>> {
        &self.admissible
    }

    /// Input width of one example (all objects concatenated).
    pub fn input_dim(&self) -> usize {
        self.schema().num_objects() * self.encoder.input_dim()
    }

    fn check_batch(&self, x: &Matrix) -> Result<(), NesyError> {
        if x.cols != self.input_dim() {
            return Err(NesyError::Shape(format!(
                "examples have {} values, predictor expects {}",
                x.cols,
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Per-object concept probabilities `(B·O) x width` and logits.
    fn object_outputs(&self, x: &Matrix, rng: Option<&mut Rng>) -> Result<(Matrix, Matrix), NesyError> {
        self.check_batch(x)?;
        let objects = x.clone().reshape(x.rows * self.schema().num_objects(), self.encoder.input_dim());
        let logits = self.encoder.forward(&objects, rng)?;
        let probs = logits.softmax_groups(&self.schema().layout());
        Ok((probs, logits))
    }

    /// Per-object concept probabilities for a matrix of single objects.
    pub fn object_probs(&self, objects: &Matrix, rng: Option<&mut Rng>) -> Result<Matrix, NesyError> {
        let logits = self.encoder.forward(objects, rng)?;
        Ok(logits.softmax_groups(&self.schema().layout()))
    }

    /// Eval-mode concept and label distributions, or train-mode (dropout
    /// active) when `rng` is given.
    pub fn predict(&self, x: &Matrix, mut rng: Option<&mut Rng>) -> Result<Prediction, NesyError> {
        let (probs, logits) = self.object_outputs(x, rng.as_deref_mut())?;
        let schema = self.schema();
        let per = schema.num_objects() * schema.object_width();
        let concepts: Vec<ConceptDistribution> = (0..x.rows)
            .map(|b| ConceptDistribution::from_object_rows(schema, &probs.data[b * per..(b + 1) * per]))
            .collect();
        let labels = match &self.head {
            None => concepts.iter().map(|c| self.reasoner.label_probs(&c.factors)).collect(),
            Some(head) => {
                let h = head.forward(&logits.reshape(x.rows, per), None)?;
                let s = h.softmax_groups(&[h.cols]);
                (0..x.rows).map(|b| s.row(b).to_vec()).collect()
            }
        };
        Ok(Prediction { concepts, labels })
    }

    pub fn concept_probs(&self, x: &[f64]) -> Result<ConceptDistribution, NesyError> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec());
        Ok(self.predict(&m, None)?.concepts.remove(0))
    }

    pub fn check_labels(&self, y: &[usize]) -> Result<(), NesyError> {
        for (example, &label) in y.iter().enumerate() {
            if !self.admissible.get(label).copied().unwrap_or(false) {
                return Err(NesyError::Inadmissible { example, label });
            }
        }
        Ok(())
    }

    /// Records a training-mode forward pass and the label loss on `tape`.
    /// Returns (loss, per-object probabilities, encoder leaves, head leaves).
    fn record(
        &self,
        tape: &mut Tape,
        x: &Matrix,
        y: &[usize],
        w_sl: f64,
        rng: Option<&mut Rng>,
    ) -> Result<Recorded, NesyError> {
        self.check_batch(x)?;
        let schema = self.schema();
        let b = x.rows;
        let o = schema.num_objects();
        let enc = self.encoder.register(tape);
        let head = self.head.as_ref().map(|h| h.register(tape));
        let xin = tape.leaf(x.clone().reshape(b * o, self.encoder.input_dim()));
        let logits = self.encoder.forward_tape(tape, xin, &enc, rng)?;
        let probs = tape.softmax_groups(logits, &schema.layout());

        let lik = tape.custom(
            &[probs],
            Box::new(LabelLikelihood::new(self.reasoner.clone(), y.to_vec())),
        );
        let lik = tape.clamp_min(lik, PROB_FLOOR);
        let ll = tape.log(lik);
        let ll = tape.mean(ll);
        let semantic = tape.scale(ll, -1.0);

        let loss = match (&self.head, &head) {
            (Some(h), Some(hp)) => {
                let flat = tape.reshape(logits, b, o * schema.object_width());
                let out = h.forward_tape(tape, flat, hp, None)?;
                let s = tape.softmax_groups(out, &[self.reasoner.num_labels()]);
                let s = tape.clamp_min(s, PROB_FLOOR);
                let ls = tape.log(s);
                let mut onehot = Matrix::zeros(b, self.reasoner.num_labels());
                for (r, &label) in y.iter().enumerate() {
                    onehot.data[r * onehot.cols + label] = 1.0;
                }
                let picked = tape.mul_const(ls, onehot);
                let total = tape.sum(picked);
                let ce = tape.scale(total, -1.0 / b as f64);
                let sem = tape.scale(semantic, w_sl);
                tape.add(ce, sem)
            }
            _ => semantic,
        };
        Ok(Recorded {
            loss,
            probs,
            enc,
            head: head.unwrap_or_default(),
        })
    }

    /// Mean DPL negative log-likelihood of a batch (eval mode).
    pub fn dpl_nll(&self, x: &Matrix, y: &[usize]) -> Result<f64, NesyError> {
        self.check_labels(y)?;
        let mut tape = Tape::new();
        let r = self.record(&mut tape, x, y, 0.0, None)?;
        let loss = match self.kind {
            PredictorKind::Dpl => r.loss,
            PredictorKind::Sl => return self.semantic_only(x, y),
        };
        Ok(tape.value(loss).data[0])
    }

    fn semantic_only(&self, x: &Matrix, y: &[usize]) -> Result<f64, NesyError> {
        let pred = self.predict(x, None)?;
        let total: f64 = pred
            .concepts
            .iter()
            .zip(y)
            .map(|(c, &label)| {
                let (p, _) = self.reasoner.label_prob_grad(&c.factors, label);
                -p.max(PROB_FLOOR).ln()
            })
            .sum();
        Ok(total / y.len() as f64)
    }

    /// Eval-mode loss for the predictor kind (DPL NLL, or SL cross-entropy
    /// plus `w_sl` times the semantic term) and its gradient with respect
    /// to every parameter block (encoder blocks first, then the head).
    pub fn loss_and_grads(
        &self,
        x: &Matrix,
        y: &[usize],
        w_sl: f64,
    ) -> Result<(f64, Vec<Matrix>), NesyError> {
        self.check_labels(y)?;
        let mut tape = Tape::new();
        let r = self.record(&mut tape, x, y, w_sl, None)?;
        let grads = tape.backward(r.loss)?;
        let blocks = r
            .enc
            .iter()
            .chain(&r.head)
            .map(|&v| {
                grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(tape.value(v).rows, tape.value(v).cols))
            })
            .collect();
        Ok((tape.value(r.loss).data[0], blocks))
    }

    /// Trains in place. Batches are drawn in a seeded shuffled order; dropout
    /// masks come from a separate seeded stream.
    pub fn train(
        &mut self,
        x: &Matrix,
        y: &[usize],
        cfg: &TrainConfig,
        reg: Option<&dyn Regularizer>,
        sup: Option<&ObjectSupervision>,
    ) -> Result<TrainStats, NesyError> {
        if x.rows != y.len() {
            return Err(NesyError::Shape(format!("{} inputs for {} labels", x.rows, y.len())));
        }
        if x.rows == 0 || cfg.batch_size == 0 {
            return Err(NesyError::Shape("empty training set or zero batch size".into()));
        }
        self.check_labels(y)?;
        self.check_batch(x)?;
        if let Some(s) = sup {
            if s.x.cols != self.encoder.input_dim() || s.x.rows != s.targets.len() {
                return Err(NesyError::Shape("supervision objects do not match the encoder".into()));
            }
        }
        let mut shuffle = seed::rng(cfg.seed, "shuffle");
        let mut dropout = seed::rng(cfg.seed, "dropout");
        let mut opt = Adam::new(cfg.lr, cfg.decay);
        let mut order: Vec<usize> = (0..x.rows).collect();
        let mut stats = TrainStats::default();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut shuffle);
            let mut epoch_loss = 0.0;
            for rows in order.chunks(cfg.batch_size) {
                let mut data = Vec::with_capacity(rows.len() * x.cols);
                for &r in rows {
                    data.extend_from_slice(x.row(r));
                }
                let xb = Matrix::from_vec(rows.len(), x.cols, data);
                let yb: Vec<usize> = rows.iter().map(|&r| y[r]).collect();
                let mut tape = Tape::new();
                let rec = self.record(&mut tape, &xb, &yb, cfg.w_sl, Some(&mut dropout))?;
                epoch_loss += tape.value(rec.loss).data[0] * rows.len() as f64;
                let mut loss = rec.loss;
                if let Some(reg) = reg {
                    if let Some(t) = reg.term(&mut tape, rec.probs, rows)? {
                        loss = tape.add(loss, t);
                    }
                }
                if let Some(s) = sup {
                    if let Some(t) = self.supervision_term(&mut tape, &rec.enc, s, Some(&mut dropout))? {
                        loss = tape.add(loss, t);
                    }
                }
                let grads = tape.backward(loss)?;
                let blocks: Vec<Matrix> = rec
                    .enc
                    .iter()
                    .chain(&rec.head)
                    .map(|&v| {
                        grads
                            .get(v)
                            .cloned()
                            .unwrap_or_else(|| Matrix::zeros(tape.value(v).rows, tape.value(v).cols))
                    })
                    .collect();
                let grad_refs: Vec<&Matrix> = blocks.iter().collect();
                let mut params = self.encoder.params_mut();
                if let Some(h) = self.head.as_mut() {
                    params.extend(h.params_mut());
                }
                opt.step(&mut params, &grad_refs)?;
            }
            opt.end_epoch();
            stats.epoch_loss.push(epoch_loss / x.rows as f64);
        }
        Ok(stats)
    }

    fn supervision_term(
        &self,
        tape: &mut Tape,
        enc: &[Var],
        sup: &ObjectSupervision,
        rng: Option<&mut Rng>,
    ) -> Result<Option<Var>, NesyError> {
        let n = sup.num_revealed();
        if n == 0 || sup.weight == 0.0 {
            return Ok(None);
        }
        let layout = self.schema().layout();
        let width = self.schema().object_width();
        let xin = tape.leaf(sup.x.clone());
        let logits = self.encoder.forward_tape(tape, xin, enc, rng)?;
        let probs = tape.softmax_groups(logits, &layout);
        let probs = tape.clamp_min(probs, PROB_FLOOR);
        let logp = tape.log(probs);
        let mut mask = Matrix::zeros(sup.x.rows, width);
        for (r, targets) in sup.targets.iter().enumerate() {
            let mut off = 0;
            for (a, t) in targets.iter().enumerate() {
                if let Some(v) = t {
                    mask.data[r * width + off + v] = 1.0;
                }
                off += layout[a];
            }
        }
        let picked = tape.mul_const(logp, mask);
        let total = tape.sum(picked);
        Ok(Some(tape.scale(total, -sup.weight / n as f64)))
    }

    /// `w_c` times the mean cross-entropy over revealed attributes (eval mode).
    pub fn concept_supervision_loss(&self, sup: &ObjectSupervision) -> Result<f64, NesyError> {
        let mut tape = Tape::new();
        let enc = self.encoder.register(&mut tape);
        Ok(match self.supervision_term(&mut tape, &enc, sup, None)? {
            Some(v) => tape.value(v).data[0],
            None => 0.0,
        })
    }
}

struct Recorded {
    loss: Var,
    probs: Var,
    enc: Vec<Var>,
    head: Vec<Var>,
}
