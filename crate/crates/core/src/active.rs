//! Entropy-guided acquisition of object-level concept annotations.

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bears::{train_ensemble, BearsError, Ensemble, EnsembleConfig};
use crate::distribution::{argmax, entropy};
use crate::knowledge::Reasoner;
use crate::nesy::ObjectSupervision;
use crate::nn::Matrix;
use crate::seed;
use crate::tasks::{GeneratedDataset, Oracle, Split, TaskError};

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("cannot select {k} objects from a pool of {pool}")]
    PoolTooSmall { k: usize, pool: usize },
    #[error("invalid active-learning setup: {0}")]
    Config(String),
    #[error(transparent)]
    Bears(#[from] BearsError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Entropy,
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Entropy => "entropy",
            Strategy::Random => "random",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "entropy" => Ok(Strategy::Entropy),
            "random" => Ok(Strategy::Random),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Entropy of one object's joint concept distribution. Member rows (one
/// per member, laid out as attribute segments) are averaged per attribute
/// first; the joint is the product of the averaged attributes, so its
/// entropy is the sum of theirs.
pub fn object_entropy(member_rows: &[&[f64]], layout: &[usize]) -> f64 {
    let n = member_rows.len() as f64;
    let mut off = 0;
    let mut h = 0.0;
    for &w in layout {
        let avg: Vec<f64> = (off..off + w)
            .map(|i| member_rows.iter().map(|r| r[i]).sum::<f64>() / n)
            .collect();
        h += entropy(&avg);
        off += w;
    }
    h
}

/// Picks `k` pool entries; `None` scores mark excluded entries. Entropy
/// takes the highest scores (ties to the lowest index); random draws
/// uniformly without replacement from the eligible entries.
pub fn select_queries(
    strategy: Strategy,
    scores: &[Option<f64>],
    k: usize,
    rng: &mut seed::Rng,
) -> Result<Vec<usize>, ActiveError> {
    let eligible: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_some()).collect();
    if k > eligible.len() {
        return Err(ActiveError::PoolTooSmall {
            k,
            pool: eligible.len(),
        });
    }
    Ok(match strategy {
        Strategy::Entropy => {
            let mut idx = eligible;
            idx.sort_by(|&a, &b| {
                let (sa, sb) = (scores[a].unwrap(), scores[b].unwrap());
                sb.total_cmp(&sa).then(a.cmp(&b))
            });
            idx.truncate(k);
            idx
        }
        Strategy::Random => sample(rng, eligible.len(), k).into_iter().map(|i| eligible[i]).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    pub strategy: Strategy,
    /// Total objects queried beyond the initial reveals.
    pub budget: usize,
    pub batch: usize,
    /// Attribute values of the initial objects (e.g. red squares).
    pub init_value: Vec<usize>,
    pub init_count: usize,
    /// Concept supervision weight.
    pub weight: f64,
    /// Retrain each round from fresh initializations instead of the
    /// previous round's parameters.
    pub cold_start: bool,
    /// Epochs of the first round and of every later round.
    pub init_epochs: usize,
    pub round_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub queries: usize,
    pub acc_c: f64,
    pub acc_y: f64,
}

#[derive(Debug)]
pub struct ActiveRun {
    pub curve: Vec<CurvePoint>,
    pub model: Ensemble,
    /// Queried `(example, object)` pairs in order, initial ones first.
    pub queried: Vec<(usize, usize)>,
}

fn objects_of(split: &Split, objects: usize) -> Matrix {
    let dim = split.x.cols / objects;
    split.x.clone().reshape(split.len() * objects, dim)
}

/// Concept and label accuracy of `model` on `split`.
pub fn score(model: &Ensemble, split: &Split) -> Result<(f64, f64), ActiveError> {
    let p = model.predict(&split.x)?;
    let mut hit_c = 0usize;
    let mut total_c = 0usize;
    let mut hit_y = 0usize;
    for i in 0..split.len() {
        for (f, &g) in p.concepts[i].factors.iter().zip(&split.g[i]) {
            hit_c += usize::from(argmax(f) == g);
            total_c += 1;
        }
        hit_y += usize::from(argmax(&p.labels[i]) == split.y[i]);
    }
    Ok((hit_c as f64 / total_c as f64, hit_y as f64 / split.len() as f64))
}

/// Reveal, retrain and score until the budget is spent. Pool entries are
/// the training objects, indexed `example * objects + object`.
pub fn active_loop(
    cfg: &ActiveConfig,
    method: &EnsembleConfig,
    reasoner: Arc<Reasoner>,
    data: &GeneratedDataset,
) -> Result<ActiveRun, ActiveError> {
    if cfg.batch == 0 || cfg.budget % cfg.batch != 0 {
        return Err(ActiveError::Config(format!(
            "budget {} is not a multiple of the batch size {}",
            cfg.budget, cfg.batch
        )));
    }
    let schema = reasoner.knowledge().schema().clone();
    let o = schema.num_objects();
    let layout = schema.layout();
    if cfg.init_value.len() != layout.len() {
        return Err(ActiveError::Config("init value must give every attribute".into()));
    }
    let train = &data.train;
    let pool_x = objects_of(train, o);
    let mut oracle = Oracle::new(schema.clone(), train.g.clone());
    let mut revealed: BTreeSet<usize> = BTreeSet::new();
    let mut queried = Vec::new();
    let mut sup = ObjectSupervision {
        x: Matrix::zeros(0, pool_x.cols),
        targets: Vec::new(),
        weight: cfg.weight,
    };
    let mut reveal = |idx: usize,
                      oracle: &mut Oracle,
                      sup: &mut ObjectSupervision,
                      revealed: &mut BTreeSet<usize>|
     -> Result<(), ActiveError> {
        let (ex, obj) = (idx / o, idx % o);
        let targets = schema
            .object_vars(obj)
            .iter()
            .map(|&v| oracle.reveal_index(ex, v).map(Some))
            .collect::<Result<Vec<_>, _>>()?;
        let mut data = std::mem::take(&mut sup.x.data);
        data.extend_from_slice(pool_x.row(idx));
        sup.x = Matrix::from_vec(sup.x.rows + 1, pool_x.cols, data);
        sup.targets.push(targets);
        revealed.insert(idx);
        queried.push((ex, obj));
        Ok(())
    };

    // initial reveals: the first objects of the requested kind
    let init: Vec<usize> = (0..pool_x.rows)
        .filter(|&idx| {
            let (ex, obj) = (idx / o, idx % o);
            schema
                .object_vars(obj)
                .iter()
                .zip(&cfg.init_value)
                .all(|(&v, &want)| train.g[ex][v] == want)
        })
        .take(cfg.init_count)
        .collect();
    if init.len() < cfg.init_count {
        return Err(ActiveError::Config(format!(
            "only {} training objects match the initial value",
            init.len()
        )));
    }
    for idx in init {
        reveal(idx, &mut oracle, &mut sup, &mut revealed)?;
    }

    let mut round_cfg = method.clone();
    round_cfg.train.epochs = cfg.init_epochs;
    let mut model = train_ensemble(&round_cfg, reasoner.clone(), &train.x, &train.y, Some(&sup), None)?;
    let (acc_c, acc_y) = score(&model, &data.test)?;
    let mut curve = vec![CurvePoint {
        queries: 0,
        acc_c,
        acc_y,
    }];
    let mut rng = seed::rng(method.train.seed, "acquisition");
    for round in 1..=cfg.budget / cfg.batch {
        let scores: Vec<Option<f64>> = match cfg.strategy {
            Strategy::Entropy => {
                let probs = model.object_probs(&pool_x)?;
                (0..pool_x.rows)
                    .map(|i| {
                        (!revealed.contains(&i)).then(|| {
                            let rows: Vec<&[f64]> = probs.iter().map(|m| m.row(i)).collect();
                            object_entropy(&rows, &layout)
                        })
                    })
                    .collect()
            }
            Strategy::Random => (0..pool_x.rows).map(|i| (!revealed.contains(&i)).then_some(0.0)).collect(),
        };
        for idx in select_queries(cfg.strategy, &scores, cfg.batch, &mut rng)? {
            reveal(idx, &mut oracle, &mut sup, &mut revealed)?;
        }
        round_cfg.train.epochs = cfg.round_epochs;
        round_cfg.train.seed = seed::derive(method.train.seed, &format!("round-{round}"));
        let warm = (!cfg.cold_start).then_some(&model);
        model = train_ensemble(&round_cfg, reasoner.clone(), &train.x, &train.y, Some(&sup), warm)?;
        let (acc_c, acc_y) = score(&model, &data.test)?;
        curve.push(CurvePoint {
            queries: round * cfg.batch,
            acc_c,
            acc_y,
        });
    }
    Ok(ActiveRun { curve, model, queried })
}

/// One curve row set per `(strategy, method, seed)`.
pub struct CurveRows<'a> {
    pub strategy: Strategy,
    pub method: &'a str,
    pub seed: u64,
    pub curve: &'a [CurvePoint],
}

pub fn write_curves(runs: &[CurveRows<'_>], w: impl Write) -> Result<(), ActiveError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "method", "seed", "queries", "acc_c", "acc_y"])?;
    for r in runs {
        for p in r.curve {
            out.write_record([
                r.strategy.as_str().to_string(),
                r.method.to_string(),
                r.seed.to_string(),
                p.queries.to_string(),
                format!("{:.6}", p.acc_c),
                format!("{:.6}", p.acc_y),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        let u = [1.0 / 3.0; 6];
        assert!((object_entropy(&[&u], &[3, 3]) - 9f64.ln()).abs() < 1e-12);
        let det = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(object_entropy(&[&det], &[3, 3]), 0.0);
        let half = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 1.0];
        assert!((object_entropy(&[&half], &[3, 3]) - 3f64.ln()).abs() < 1e-12);
        // two confident members that disagree on shape
        let a = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        assert!((object_entropy(&[&a, &b], &[3, 3]) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn selection_rules() {
        let mut rng = seed::rng(0, "t");
        let s = [Some(0.1), Some(2.0), Some(1.0)];
        assert_eq!(select_queries(Strategy::Entropy, &s, 2, &mut rng).unwrap(), vec![1, 2]);
        let tie = [Some(1.0), Some(0.5), Some(1.0), Some(1.0)];
        assert_eq!(select_queries(Strategy::Entropy, &tie, 2, &mut rng).unwrap(), vec![0, 2]);
        let excl = [None, Some(0.5), Some(0.1)];
        assert_eq!(select_queries(Strategy::Entropy, &excl, 1, &mut rng).unwrap(), vec![1]);
        assert!(select_queries(Strategy::Entropy, &excl, 3, &mut rng).is_err());
        let pool = vec![Some(0.0); 50];
        let a = select_queries(Strategy::Random, &pool, 10, &mut seed::rng(3, "r")).unwrap();
        let b = select_queries(Strategy::Random, &pool, 10, &mut seed::rng(3, "r")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), 10);
    }
}
