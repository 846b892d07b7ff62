//! Diversified ensembles: bears, deep ensembles and MC dropout, sharing one
//! inference path and checkpoint format.

mod objective;

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::ConceptDistribution;
use crate::knowledge::Reasoner;
use crate::nesy::{
    admissible_labels, ArchConfig, NesyError, NesyPredictor, ObjectSupervision, Prediction,
    PredictorKind, Regularizer, TrainConfig,
};
use crate::nn::{Matrix, Mlp, NnError, Tape, Var};
use crate::seed;

pub use objective::{entropy_penalty, kl_repulsion, EntropyPenalty, KlRepulsion};

#[derive(Debug, Error)]
pub enum BearsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint was trained on task {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Nesy(#[from] NesyError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dpl,
    Sl,
    Bears,
    De,
    Mcdo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dpl => "dpl",
            Method::Sl => "sl",
            Method::Bears => "bears",
            Method::De => "de",
            Method::Mcdo => "mcdo",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Method::Dpl, Method::Sl, Method::Bears, Method::De, Method::Mcdo]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub method: Method,
    /// Predictor kind of every member (DPL or SL). Ignored for `dpl`/`sl`.
    pub base: PredictorKind,
    pub ensemble_size: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Entropy term applied to every member, the first one included.
    pub entropy_aid: f64,
    pub mc_samples: usize,
    pub arch: ArchConfig,
    /// `train.seed` is the run seed; member seeds derive from it.
    pub train: TrainConfig,
}

impl EnsembleConfig {
    pub fn new(method: Method, arch: ArchConfig, train: TrainConfig) -> Self {
        Self {
            method,
            base: PredictorKind::Dpl,
            ensemble_size: 5,
            gamma1: 0.8,
            gamma2: 0.0,
            entropy_aid: 0.0,
            mc_samples: 30,
            arch,
            train,
        }
    }

    pub fn kind(&self) -> PredictorKind {
        match self.method {
            Method::Dpl | Method::Mcdo => PredictorKind::Dpl,
            Method::Sl => PredictorKind::Sl,
            Method::Bears | Method::De => self.base,
        }
    }

    pub fn num_members(&self) -> usize {
        match self.method {
            Method::Bears | Method::De => self.ensemble_size,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), BearsError> {
        if self.num_members() == 0 {
            return Err(BearsError::Config("ensemble size must be at least 1".into()));
        }
        if [self.gamma1, self.gamma2, self.entropy_aid].iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(BearsError::Config(
                "gamma1, gamma2 and the entropy aid must be finite and non-negative".into(),
            ));
        }
        if self.method == Method::Mcdo && self.mc_samples == 0 {
            return Err(BearsError::Config("mc_samples must be at least 1".into()));
        }
        if !(self.train.decay > 0.0 && self.train.decay <= 1.0) {
            return Err(BearsError::Config("learning-rate decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Seed of member `i`: the run seed itself for the first member, so a
/// one-member ensemble is the plain predictor.
pub fn member_seed(seed: u64, i: usize) -> u64 {
    if i == 0 {
        seed
    } else {
        seed::derive(seed, &format!("member-{i}"))
    }
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub method: Method,
    pub members: Vec<NesyPredictor>,
    pub seeds: Vec<u64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub entropy_aid: f64,
    pub mc_samples: usize,
    /// Final-epoch label loss per member.
    pub train_loss: Vec<f64>,
}

/// Repulsion from the frozen mixture of earlier members, plus the entropy
/// term.
struct Repulsion {
    rest: Option<Matrix>,
    objects: usize,
    layout: Vec<usize>,
    t: usize,
    gamma1: f64,
    gamma2: f64,
}

impl Regularizer for Repulsion {
    fn term(&self, tape: &mut Tape, probs: Var, rows: &[usize]) -> Result<Option<Var>, NesyError> {
        let mut out = None;
        if let (Some(all), true) = (&self.rest, self.gamma1 > 0.0) {
            let width = all.cols;
            let mut data = Vec::with_capacity(rows.len() * self.objects * width);
            for &r in rows {
                data.extend_from_slice(&all.data[r * self.objects * width..(r + 1) * self.objects * width]);
            }
            let rest = Matrix::from_vec(rows.len() * self.objects, width, data);
            let kl = tape.custom(
                &[probs],
                Box::new(KlRepulsion {
                    rest,
                    layout: self.layout.clone(),
                    t: self.t,
                }),
            );
            out = Some(tape.scale(kl, self.gamma1));
        }
        if self.gamma2 > 0.0 {
            let e = tape.custom(
                &[probs],
                Box::new(EntropyPenalty {
                    layout: self.layout.clone(),
                    objects: self.objects,
                }),
            );
            let e = tape.scale(e, self.gamma2);
            out = Some(match out {
                Some(k) => tape.add(k, e),
                None => e,
            });
        }
        Ok(out)
    }
}

fn eval_object_probs(member: &NesyPredictor, x: &Matrix) -> Result<Matrix, NesyError> {
    let o = member.schema().num_objects();
    let objects = x.clone().reshape(x.rows * o, member.encoder().input_dim());
    member.object_probs(&objects, None)
}

/// Trains every member of the configured method on `(x, y)`.
///
/// `warm` provides starting parameters (e.g. the previous active-learning
/// round); otherwise members are freshly initialized from their seeds.
pub fn train_ensemble(
    cfg: &EnsembleConfig,
    reasoner: Arc<Reasoner>,
    x: &Matrix,
    y: &[usize],
    sup: Option<&ObjectSupervision>,
    warm: Option<&Ensemble>,
) -> Result<Ensemble, BearsError> {
    cfg.validate()?;
    let k = cfg.num_members();
    if let Some(w) = warm {
        if w.members.len() != k {
            return Err(BearsError::Config(format!(
                "warm start has {} members, configuration needs {k}",
                w.members.len()
            )));
        }
    }
    let admissible = Arc::new(admissible_labels(&reasoner));
    let seeds: Vec<u64> = (0..k).map(|i| member_seed(cfg.train.seed, i)).collect();
    let init = |i: usize| -> Result<NesyPredictor, BearsError> {
        Ok(match warm {
            Some(w) => w.members[i].clone(),
            None => NesyPredictor::with_admissible(
                cfg.kind(),
                reasoner.clone(),
                admissible.clone(),
                &cfg.arch,
                seeds[i],
            )?,
        })
    };
    let member_cfg = |i: usize| TrainConfig {
        seed: seeds[i],
        ..cfg.train.clone()
    };

    let schema = reasoner.knowledge().schema();
    let reg = |i: usize, rest: Option<Matrix>| -> Option<Repulsion> {
        let later = cfg.method == Method::Bears && i > 0;
        let gamma1 = if later { cfg.gamma1 } else { 0.0 };
        let gamma2 = cfg.entropy_aid + if later { cfg.gamma2 } else { 0.0 };
        (gamma1 > 0.0 || gamma2 > 0.0).then(|| Repulsion {
            rest,
            objects: schema.num_objects(),
            layout: schema.layout(),
            t: i + 1,
            gamma1,
            gamma2,
        })
    };
    let fit = |i: usize, r: Option<Repulsion>| -> Result<(NesyPredictor, f64), BearsError> {
        let mut m = init(i)?;
        let stats = m.train(x, y, &member_cfg(i), r.as_ref().map(|r| r as &dyn Regularizer), sup)?;
        Ok((m, stats.epoch_loss.last().copied().unwrap_or(f64::NAN)))
    };

    let mut members = Vec::with_capacity(k);
    let mut losses = Vec::with_capacity(k);
    if cfg.method == Method::Bears && cfg.gamma1 > 0.0 {
        // each member repels the eval-mode mixture of the earlier ones
        let mut rest_sum: Option<Matrix> = None;
        for i in 0..k {
            let rest = rest_sum.as_ref().map(|s| s.map(|v| v / i as f64));
            let (m, l) = fit(i, reg(i, rest))?;
            if i + 1 < k {
                let probs = eval_object_probs(&m, x)?;
                match rest_sum.as_mut() {
                    Some(s) => s.add_assign(&probs),
                    None => rest_sum = Some(probs),
                }
            }
            members.push(m);
            losses.push(l);
        }
    } else {
        let trained: Vec<Result<(NesyPredictor, f64), BearsError>> =
            (0..k).into_par_iter().map(|i| fit(i, reg(i, None))).collect();
        for r in trained {
            let (m, l) = r?;
            members.push(m);
            losses.push(l);
        }
    }
    Ok(Ensemble {
        method: cfg.method,
        members,
        seeds,
        gamma1: if cfg.method == Method::Bears { cfg.gamma1 } else { 0.0 },
        gamma2: if cfg.method == Method::Bears { cfg.gamma2 } else { 0.0 },
        entropy_aid: cfg.entropy_aid,
        mc_samples: if cfg.method == Method::Mcdo { cfg.mc_samples } else { 0 },
        train_loss: losses,
    })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    method: Method,
    kind: PredictorKind,
    ensemble_size: usize,
    seeds: Vec<u64>,
    gamma1: f64,
    gamma2: f64,
    entropy_aid: f64,
    mc_samples: usize,
    train_loss: Vec<f64>,
    task_hash: String,
}

impl Ensemble {
    fn mc_rng(&self) -> seed::Rng {
        seed::rng(self.seeds[0], "mcdo")
    }

    /// Mixture prediction: uniform average of member concept and label
    /// distributions. MC dropout averages `mc_samples` stochastic passes of
    /// its single member.
    pub fn predict(&self, x: &Matrix) -> Result<Prediction, BearsError> {
        let passes: Vec<Prediction> = if self.method == Method::Mcdo {
            let mut rng = self.mc_rng();
            let m = &self.members[0];
            (0..self.mc_samples)
                .map(|_| m.predict(x, Some(&mut rng)))
                .collect::<Result<_, _>>()?
        } else {
            self.members
                .iter()
                .map(|m| m.predict(x, None))
                .collect::<Result<_, _>>()?
        };
        Ok(average(passes))
    }

    /// Per-member (or per-pass) object probabilities for single objects,
    /// each `rows x width`.
    pub fn object_probs(&self, objects: &Matrix) -> Result<Vec<Matrix>, BearsError> {
        if self.method == Method::Mcdo {
            let mut rng = self.mc_rng();
            let m = &self.members[0];
            return Ok((0..self.mc_samples)
                .map(|_| m.object_probs(objects, Some(&mut rng)))
                .collect::<Result<_, _>>()?);
        }
        Ok(self
            .members
            .iter()
            .map(|m| m.object_probs(objects, None))
            .collect::<Result<_, _>>()?)
    }

    pub fn concept_probs(&self, x: &[f64]) -> Result<ConceptDistribution, BearsError> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec());
        Ok(self.predict(&m)?.concepts.remove(0))
    }

    pub fn save(&self, dir: &Path, task_hash: &str) -> Result<(), BearsError> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: 1,
            method: self.method,
            kind: self.members[0].kind(),
            ensemble_size: self.members.len(),
            seeds: self.seeds.clone(),
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            entropy_aid: self.entropy_aid,
            mc_samples: self.mc_samples,
            train_loss: self.train_loss.clone(),
            task_hash: task_hash.to_string(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        for (i, m) in self.members.iter().enumerate() {
            m.encoder().save(&dir.join(format!("member_{i}.bin")))?;
            if let Some(h) = m.head() {
                h.save(&dir.join(format!("head_{i}.bin")))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path, reasoner: Arc<Reasoner>, task_hash: &str) -> Result<Self, BearsError> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.format != 1 {
            return Err(BearsError::Checkpoint(format!("unsupported format {}", manifest.format)));
        }
        if manifest.task_hash != task_hash {
            return Err(BearsError::HashMismatch {
                expected: task_hash.to_string(),
                found: manifest.task_hash,
            });
        }
        if manifest.ensemble_size == 0 || manifest.seeds.len() != manifest.ensemble_size {
            return Err(BearsError::Checkpoint("manifest member count is inconsistent".into()));
        }
        let mut members = Vec::with_capacity(manifest.ensemble_size);
        for i in 0..manifest.ensemble_size {
            let enc = Mlp::load(&dir.join(format!("member_{i}.bin")))?;
            let head = match manifest.kind {
                PredictorKind::Sl => Some(Mlp::load(&dir.join(format!("head_{i}.bin")))?),
                PredictorKind::Dpl => None,
            };
            members.push(NesyPredictor::from_parts(manifest.kind, reasoner.clone(), enc, head)?);
        }
        Ok(Self {
            method: manifest.method,
            members,
            seeds: manifest.seeds,
            gamma1: manifest.gamma1,
            gamma2: manifest.gamma2,
            entropy_aid: manifest.entropy_aid,
            mc_samples: manifest.mc_samples,
            train_loss: manifest.train_loss,
        })
    }
}

fn average(passes: Vec<Prediction>) -> Prediction {
    let n = passes.len() as f64;
    let mut it = passes.into_iter();
    let mut acc = it.next().expect("at least one pass");
    for p in it {
        for (a, c) in acc.concepts.iter_mut().zip(&p.concepts) {
            for (fa, fc) in a.factors.iter_mut().zip(&c.factors) {
                for (x, y) in fa.iter_mut().zip(fc) {
                    *x += y;
                }
            }
        }
        for (a, l) in acc.labels.iter_mut().zip(&p.labels) {
            for (x, y) in a.iter_mut().zip(l) {
                *x += y;
            }
        }
    }
    if n > 1.0 {
        for c in acc.concepts.iter_mut() {
            c.factors.iter_mut().flatten().for_each(|x| *x /= n);
        }
        acc.labels.iter_mut().flatten().for_each(|x| *x /= n);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{builtin_task, generate_dataset};

    fn small_setup() -> (Arc<Reasoner>, Matrix, Vec<usize>, ArchConfig) {
        let mut spec = builtin_task("mnist_half").unwrap();
        spec.splits.train = 64;
        let d = generate_dataset(&spec, 0).unwrap();
        let r = Arc::new(spec.reasoner().unwrap());
        (r, d.train.x, d.train.y, ArchConfig::new(spec.renderer.dim))
    }

    fn cfg(method: Method, k: usize, g1: f64) -> EnsembleConfig {
        let mut c = EnsembleConfig::new(
            method,
            ArchConfig::new(16),
            TrainConfig {
                epochs: 2,
                batch_size: 16,
                seed: 11,
                ..TrainConfig::default()
            },
        );
        c.ensemble_size = k;
        c.gamma1 = g1;
        c
    }

    #[test]
    fn one_member_bears_is_plain_dpl() {
        let (r, x, y, _) = small_setup();
        let plain = train_ensemble(&cfg(Method::Dpl, 1, 0.0), r.clone(), &x, &y, None, None).unwrap();
        let bears = train_ensemble(&cfg(Method::Bears, 1, 0.8), r.clone(), &x, &y, None, None).unwrap();
        assert_eq!(plain.members[0].encoder(), bears.members[0].encoder());
        let de = train_ensemble(&cfg(Method::De, 3, 0.0), r.clone(), &x, &y, None, None).unwrap();
        let b0 = train_ensemble(&cfg(Method::Bears, 3, 0.0), r, &x, &y, None, None).unwrap();
        for (a, b) in de.members.iter().zip(&b0.members) {
            assert_eq!(a.encoder(), b.encoder());
        }
        assert_ne!(de.members[0].encoder(), de.members[1].encoder());
        assert_eq!(de.members[0].encoder(), plain.members[0].encoder());
    }

    #[test]
    fn training_is_deterministic() {
        let (r, x, y, _) = small_setup();
        let a = train_ensemble(&cfg(Method::Bears, 2, 0.8), r.clone(), &x, &y, None, None).unwrap();
        let b = train_ensemble(&cfg(Method::Bears, 2, 0.8), r, &x, &y, None, None).unwrap();
        for (p, q) in a.members.iter().zip(&b.members) {
            assert_eq!(p.encoder(), q.encoder());
        }
    }

    #[test]
    fn checkpoint_round_trip_and_hash_check() {
        let (r, x, y, _) = small_setup();
        let e = train_ensemble(&cfg(Method::Bears, 2, 0.8), r.clone(), &x, &y, None, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path(), "abc").unwrap();
        let back = Ensemble::load(dir.path(), r.clone(), "abc").unwrap();
        assert_eq!(back.predict(&x).unwrap().labels, e.predict(&x).unwrap().labels);
        assert!(matches!(
            Ensemble::load(dir.path(), r, "xyz"),
            Err(BearsError::HashMismatch { .. })
        ));
    }

    #[test]
    fn mc_dropout_without_dropout_equals_eval() {
        let (r, x, y, _) = small_setup();
        let mut c = cfg(Method::Mcdo, 1, 0.0);
        c.arch.dropout = 0.0;
        c.mc_samples = 4;
        let e = train_ensemble(&c, r, &x, &y, None, None).unwrap();
        let a = e.predict(&x).unwrap();
        let b = e.members[0].predict(&x, None).unwrap();
        for (p, q) in a.concepts.iter().zip(&b.concepts) {
            for (u, v) in p.factors.iter().flatten().zip(q.factors.iter().flatten()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
