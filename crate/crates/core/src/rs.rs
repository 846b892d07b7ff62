//! Reasoning-shortcut analysis: per-object value maps that keep every
//! training label intact, their equivalence sets, entropy bounds,
//! max-entropy mixtures and the decomposition of concept tables.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::entropy;
use crate::knowledge::{KnowledgeExpr, LabelValue};
use crate::nesy::Prediction;
use crate::tasks::Split;

pub const DEFAULT_NODE_BUDGET: u64 = 50_000_000;
/// Largest map space the naive and full-map enumerations will visit.
pub const MAX_NAIVE_MAPS: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum RsError {
    #[error("search budget of {budget} nodes exceeded")]
    Budget { budget: u64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("map space of {size} exceeds the enumeration limit {limit}")]
    TooLarge { size: u128, limit: u128 },
}

/// A map over joint object values; `None` marks a value left free because
/// it never occurs in the support.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlphaMap(pub Vec<Option<usize>>);

impl AlphaMap {
    pub fn get(&self, v: usize) -> Option<usize> {
        self.0.get(v).copied().flatten()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(v, a)| a.is_none_or(|a| a == v))
    }

    /// Image of a tuple of object values, if all of them are constrained.
    pub fn apply(&self, values: &[usize]) -> Option<Vec<usize>> {
        values.iter().map(|&v| self.get(v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalMapSet {
    pub maps: Vec<AlphaMap>,
    /// Object domain of the encoder (the map's input range).
    pub domain: usize,
    /// Values a map may take (`>= domain`).
    pub codomain: usize,
    /// Object values that occur in the support.
    pub constrained: Vec<usize>,
    pub free: Vec<usize>,
    /// Support tuples as per-object values.
    pub support: Vec<Vec<usize>>,
}

impl OptimalMapSet {
    /// Number of full maps once free values range over the codomain.
    pub fn count_with_free(&self) -> u128 {
        let per = (self.codomain as u128).checked_pow(self.free.len() as u32).unwrap_or(u128::MAX);
        per.saturating_mul(self.maps.len() as u128)
    }
}

/// Label of the assignment obtained by mapping every object value.
struct Checker<'a> {
    k: &'a KnowledgeExpr,
    single_var: bool,
}

impl Checker<'_> {
    fn label(&self, object_values: &[usize]) -> LabelValue {
        let schema = self.k.schema();
        let assignment: Vec<i64> = if self.single_var {
            let mut out = vec![0i64; schema.num_vars()];
            for (o, &v) in object_values.iter().enumerate() {
                out[schema.object_vars(o)[0]] = v as i64;
            }
            out
        } else {
            schema
                .assignment_from_objects(object_values)
                .into_iter()
                .map(|x| x as i64)
                .collect()
        };
        self.k.eval_unchecked(&assignment)
    }
}

struct Problem<'a> {
    checker: Checker<'a>,
    domain: usize,
    codomain: usize,
    order: Vec<usize>,
    support: Vec<Vec<usize>>,
    targets: Vec<LabelValue>,
    /// Support indices whose last-assigned value sits at each order position.
    checks: Vec<Vec<usize>>,
}

fn setup<'a>(
    k: &'a KnowledgeExpr,
    support: &[Vec<usize>],
    codomain: Option<usize>,
) -> Result<Problem<'a>, RsError> {
    let schema = k.schema();
    let domain = schema.object_domain();
    let codomain = codomain.unwrap_or(domain);
    if codomain < domain {
        return Err(RsError::Invalid(format!("codomain {codomain} is smaller than the domain {domain}")));
    }
    let single_var = schema.layout().len() == 1;
    if codomain > domain && !single_var {
        return Err(RsError::Invalid("an extended codomain needs single-variable objects".into()));
    }
    let mut targets = Vec::with_capacity(support.len());
    let mut obj_support = Vec::with_capacity(support.len());
    for g in support {
        schema
            .check_assignment(g)
            .map_err(|e| RsError::Invalid(format!("support tuple {g:?}: {e}")))?;
        targets.push(k.eval_beta(g).map_err(|e| RsError::Invalid(e.to_string()))?);
        obj_support.push(schema.object_values(g));
    }
    // assign values in order of first occurrence so constraints close early
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    for vals in &obj_support {
        for &v in vals {
            if seen.insert(v) {
                order.push(v);
            }
        }
    }
    let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut checks = vec![Vec::new(); order.len()];
    for (i, vals) in obj_support.iter().enumerate() {
        let last = vals.iter().map(|v| pos[v]).max().expect("objects exist");
        checks[last].push(i);
    }
    Ok(Problem {
        checker: Checker { k, single_var },
        domain,
        codomain,
        order,
        support: obj_support,
        targets,
        checks,
    })
}

impl Problem<'_> {
    fn holds(&self, map: &[Option<usize>], i: usize) -> bool {
        let img: Vec<usize> = self.support[i].iter().map(|&v| map[v].expect("assigned")).collect();
        self.checker.label(&img) == self.targets[i]
    }

    fn into_set(self, mut maps: Vec<AlphaMap>) -> OptimalMapSet {
        maps.sort();
        let constrained: BTreeSet<usize> = self.order.iter().copied().collect();
        OptimalMapSet {
            maps,
            domain: self.domain,
            codomain: self.codomain,
            free: (0..self.domain).filter(|v| !constrained.contains(v)).collect(),
            constrained: constrained.into_iter().collect(),
            support: self.support,
        }
    }
}

/// Every map, restricted to the values occurring in `support`, under which
/// the knowledge gives each support tuple its own label. Depth-first over
/// the constrained values, checking each support tuple as soon as all its
/// values are assigned. `codomain` widens the map's range beyond the
/// object domain (single-variable objects only).
pub fn enumerate_optimal_maps(
    k: &KnowledgeExpr,
    support: &[Vec<usize>],
    codomain: Option<usize>,
    node_budget: u64,
) -> Result<OptimalMapSet, RsError> {
    let p = setup(k, support, codomain)?;
    let mut map = vec![None; p.domain];
    let mut out = Vec::new();
    let mut nodes = 0u64;
    fn dfs(
        p: &Problem<'_>,
        depth: usize,
        map: &mut Vec<Option<usize>>,
        out: &mut Vec<AlphaMap>,
        nodes: &mut u64,
        budget: u64,
    ) -> Result<(), RsError> {
        if depth == p.order.len() {
            out.push(AlphaMap(map.clone()));
            return Ok(());
        }
        let v = p.order[depth];
        for c in 0..p.codomain {
            *nodes += 1;
            if *nodes > budget {
                return Err(RsError::Budget { budget });
            }
            map[v] = Some(c);
            if p.checks[depth].iter().all(|&i| p.holds(map, i)) {
                dfs(p, depth + 1, map, out, nodes, budget)?;
            }
        }
        map[v] = None;
        Ok(())
    }
    dfs(&p, 0, &mut map, &mut out, &mut nodes, node_budget)?;
    Ok(p.into_set(out))
}

fn for_each_map(
    values: &[usize],
    domain: usize,
    codomain: usize,
    mut f: impl FnMut(&[Option<usize>]),
) -> Result<(), RsError> {
    let size = (codomain as u128).checked_pow(values.len() as u32).unwrap_or(u128::MAX);
    if size > MAX_NAIVE_MAPS {
        return Err(RsError::TooLarge {
            size,
            limit: MAX_NAIVE_MAPS,
        });
    }
    let mut map = vec![None; domain];
    for mut code in 0..size {
        for &v in values.iter().rev() {
            map[v] = Some((code % codomain as u128) as usize);
            code /= codomain as u128;
        }
        f(&map);
    }
    Ok(())
}

/// Reference enumeration: tries every map over the constrained values.
pub fn enumerate_optimal_maps_naive(
    k: &KnowledgeExpr,
    support: &[Vec<usize>],
    codomain: Option<usize>,
) -> Result<OptimalMapSet, RsError> {
    let p = setup(k, support, codomain)?;
    let mut values = p.order.clone();
    values.sort();
    let mut out = Vec::new();
    for_each_map(&values, p.domain, p.codomain, |m| {
        if (0..p.support.len()).all(|i| p.holds(m, i)) {
            out.push(AlphaMap(m.to_vec()));
        }
    })?;
    Ok(p.into_set(out))
}

/// All maps over the constrained values, optimal or not.
pub fn all_maps(k: &KnowledgeExpr, support: &[Vec<usize>], codomain: Option<usize>) -> Result<OptimalMapSet, RsError> {
    let p = setup(k, support, codomain)?;
    let mut values = p.order.clone();
    values.sort();
    let mut out = Vec::new();
    for_each_map(&values, p.domain, p.codomain, |m| out.push(AlphaMap(m.to_vec())))?;
    Ok(p.into_set(out))
}

/// `(total optima, shortcuts)`; the identity is the one non-shortcut.
pub fn count_rs(set: &OptimalMapSet) -> (usize, usize) {
    let total = set.maps.len();
    let id = set.maps.iter().any(AlphaMap::is_identity);
    (total, total - usize::from(id))
}

/// Image set of each constrained value across the maps.
pub fn equivalence_sets(set: &OptimalMapSet) -> BTreeMap<usize, BTreeSet<usize>> {
    set.constrained
        .iter()
        .map(|&v| (v, set.maps.iter().filter_map(|m| m.get(v)).collect()))
        .collect()
}

/// `log |E(v)|` per value.
pub fn entropy_bounds(sets: &BTreeMap<usize, BTreeSet<usize>>) -> BTreeMap<usize, f64> {
    sets.iter()
        .map(|(&v, e)| (v, if e.is_empty() { 0.0 } else { (e.len() as f64).ln() }))
        .collect()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|&xi| (xi - theta).max(0.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntropyMixture {
    pub omega: Vec<f64>,
    /// Prior-weighted entropy of the mapped tuples.
    pub objective: f64,
    pub per_support: Vec<f64>,
    /// Entropy of each constrained value's image under the mixture.
    pub per_value: BTreeMap<usize, f64>,
    pub iterations: usize,
}

/// Distribution of `key(map)` under weights `omega`.
fn image_dist<K: Ord>(set: &OptimalMapSet, omega: &[f64], key: impl Fn(&AlphaMap) -> K) -> BTreeMap<K, f64> {
    let mut d = BTreeMap::new();
    for (m, &w) in set.maps.iter().zip(omega) {
        *d.entry(key(m)).or_insert(0.0) += w;
    }
    d
}

fn mixture_objective(set: &OptimalMapSet, prior: &[f64], omega: &[f64]) -> (f64, Vec<f64>) {
    let per: Vec<f64> = set
        .support
        .iter()
        .map(|g| {
            let d = image_dist(set, omega, |m| m.apply(g));
            entropy(&d.into_values().collect::<Vec<_>>())
        })
        .collect();
    (per.iter().zip(prior).map(|(h, p)| h * p).sum(), per)
}

/// Projected gradient ascent on the simplex from uniform weights: step 0.1,
/// stop when an iteration gains less than 1e-9 or after 10,000 iterations.
/// `prior` weighs the support tuples (uniform when `None`).
pub fn max_entropy_mixture(set: &OptimalMapSet, prior: Option<&[f64]>) -> Result<MaxEntropyMixture, RsError> {
    let n = set.maps.len();
    if n == 0 {
        return Err(RsError::Invalid("no optimal maps".into()));
    }
    let prior: Vec<f64> = match prior {
        Some(p) if p.len() == set.support.len() => {
            let s: f64 = p.iter().sum();
            p.iter().map(|x| x / s).collect()
        }
        Some(p) => {
            return Err(RsError::Invalid(format!(
                "prior has {} entries for {} support tuples",
                p.len(),
                set.support.len()
            )))
        }
        None => vec![1.0 / set.support.len().max(1) as f64; set.support.len()],
    };
    let mut omega = vec![1.0 / n as f64; n];
    let (mut best, _) = mixture_objective(set, &prior, &omega);
    let mut iterations = 0;
    while iterations < 10_000 {
        iterations += 1;
        let mut grad = vec![0.0; n];
        for (g, &pg) in set.support.iter().zip(&prior) {
            let d = image_dist(set, &omega, |m| m.apply(g));
            for (a, m) in set.maps.iter().enumerate() {
                let q = d[&m.apply(g)].max(1e-300);
                grad[a] -= pg * (q.ln() + 1.0);
            }
        }
        let next = project_simplex(&omega.iter().zip(&grad).map(|(w, g)| w + 0.1 * g).collect::<Vec<_>>());
        let (val, _) = mixture_objective(set, &prior, &next);
        let gain = val - best;
        if gain > 0.0 {
            omega = next;
            best = val;
        }
        if gain < 1e-9 {
            break;
        }
    }
    let (objective, per_support) = mixture_objective(set, &prior, &omega);
    let per_value = set
        .constrained
        .iter()
        .map(|&v| {
            let d = image_dist(set, &omega, |m| m.get(v));
            (v, entropy(&d.into_values().collect::<Vec<_>>()))
        })
        .collect();
    Ok(MaxEntropyMixture {
        omega,
        objective,
        per_support,
        per_value,
        iterations,
    })
}

/// Per-object-value concept table: row `values[i]` is `p(c | v)` over the
/// object domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptTable {
    pub values: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    /// Constrained values with no examples, omitted from `rows`.
    pub missing: Vec<usize>,
}

impl ConceptTable {
    /// Table induced by mixing `set`'s maps with weights `omega`.
    pub fn from_mixture(set: &OptimalMapSet, omega: &[f64]) -> Self {
        let rows = set
            .constrained
            .iter()
            .map(|&v| {
                let mut row = vec![0.0; set.codomain];
                for (m, &w) in set.maps.iter().zip(omega) {
                    if let Some(c) = m.get(v) {
                        row[c] += w;
                    }
                }
                row
            })
            .collect();
        Self {
            values: set.constrained.clone(),
            rows,
            missing: Vec::new(),
        }
    }

    pub fn validate(&self, tol: f64) -> Result<(), RsError> {
        for (v, r) in self.values.iter().zip(&self.rows) {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > tol || r.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(RsError::Invalid(format!("row {v} is not a distribution (sum {s})")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub omega: Vec<f64>,
    /// Largest absolute gap between the table and the reconstruction.
    pub residual: f64,
}

impl Decomposition {
    pub fn is_exact(&self) -> bool {
        self.residual <= 1e-6
    }
}

/// Least squares fit of `table` by a mixture of `set`'s maps, on the simplex,
/// via projected gradient.
pub fn decompose_table(table: &ConceptTable, set: &OptimalMapSet) -> Result<Decomposition, RsError> {
    table.validate(1e-6)?;
    let n = set.maps.len();
    if n == 0 {
        return Err(RsError::Invalid("no maps".into()));
    }
    let width = table.rows.iter().map(Vec::len).max().unwrap_or(0).max(set.codomain);
    // each (value, concept) cell is one equation
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut target = Vec::new();
    for (v, row) in table.values.iter().zip(&table.rows) {
        let base = target.len();
        target.extend((0..width).map(|c| row.get(c).copied().unwrap_or(0.0)));
        for (a, m) in set.maps.iter().enumerate() {
            if let Some(c) = m.get(*v) {
                cols[a].push(base + c);
            }
        }
    }
    let reconstruct = |omega: &[f64]| {
        let mut r = vec![0.0; target.len()];
        for (col, &w) in cols.iter().zip(omega) {
            for &i in col {
                r[i] += w;
            }
        }
        r
    };
    let grad_at = |w: &[f64]| -> (f64, Vec<f64>) {
        let r = reconstruct(w);
        let loss = r.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0;
        let g = cols.iter().map(|col| col.iter().map(|&i| r[i] - target[i]).sum()).collect();
        (loss, g)
    };
    let step_from = |w: &[f64], g: &[f64], step: f64| {
        project_simplex(&w.iter().zip(g).map(|(w, g)| w - step * g).collect::<Vec<_>>())
    };
    // trace of AᵀA bounds its largest eigenvalue
    let lip: f64 = cols.iter().map(|c| c.len() as f64).sum::<f64>().max(1.0);
    let step = 1.0 / lip;
    let mut omega = vec![1.0 / n as f64; n];
    let mut loss = grad_at(&omega).0;
    let mut y = omega.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let (_, g) = grad_at(&y);
        let next = step_from(&y, &g, step);
        let (next_loss, next_g) = grad_at(&next);
        // stationary: a plain projected step no longer moves the iterate
        let moved = step_from(&next, &next_g, step)
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if next_loss > loss && t > 1.0 {
            // restart the momentum
            y = omega.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next
            .iter()
            .zip(&omega)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        omega = next;
        loss = next_loss;
        t = t_next;
        if moved < 1e-15 {
            break;
        }
    }
    let r = reconstruct(&omega);
    let residual = r.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Decomposition { omega, residual })
}

/// `p̂(c | v)` averaged over every object whose true value is `v`, from
/// per-example concept predictions. Object distributions are products of
/// the attribute factors. Constrained values without examples are listed in
/// `missing`.
pub fn empirical_concept_table(
    k: &KnowledgeExpr,
    pred: &Prediction,
    split: &Split,
    values: &[usize],
) -> Result<ConceptTable, RsError> {
    let schema = k.schema();
    if pred.concepts.len() != split.len() {
        return Err(RsError::Invalid("prediction count does not match the split".into()));
    }
    let domain = schema.object_domain();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (c, g) in pred.concepts.iter().zip(&split.g) {
        for (o, &v) in schema.object_values(g).iter().enumerate() {
            let vars = schema.object_vars(o);
            let entry = sums.entry(v).or_insert_with(|| (vec![0.0; domain], 0));
            for (u, slot) in entry.0.iter_mut().enumerate() {
                let parts = schema.decode_object(u);
                *slot += vars.iter().zip(&parts).map(|(&var, &x)| c.factors[var][x]).product::<f64>();
            }
            entry.1 += 1;
        }
    }
    let mut table = ConceptTable {
        values: Vec::new(),
        rows: Vec::new(),
        missing: Vec::new(),
    };
    for &v in values {
        match sums.get(&v) {
            Some((row, n)) if *n > 0 => {
                let s: f64 = row.iter().sum();
                table.values.push(v);
                table.rows.push(row.iter().map(|x| x / s).collect());
            }
            _ => table.missing.push(v),
        }
    }
    Ok(table)
}

/// Contents of `rs.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsReport {
    pub task: String,
    pub total_optima: usize,
    pub rs_count: usize,
    /// Optima counted with every free value ranging over the codomain.
    pub total_with_free: u128,
    pub domain: usize,
    pub codomain: usize,
    pub free_values: Vec<usize>,
    pub maps: Vec<Vec<Option<usize>>>,
    pub equivalence_sets: BTreeMap<usize, Vec<usize>>,
    pub entropy_bounds: BTreeMap<usize, f64>,
    pub max_entropy: MaxEntropyMixture,
}

pub fn analyze(
    task: &str,
    k: &KnowledgeExpr,
    support: &[Vec<usize>],
    prior: Option<&[f64]>,
    codomain: Option<usize>,
    node_budget: u64,
) -> Result<RsReport, RsError> {
    let set = enumerate_optimal_maps(k, support, codomain, node_budget)?;
    let (total, rs) = count_rs(&set);
    let eq = equivalence_sets(&set);
    let bounds = entropy_bounds(&eq);
    let max_entropy = max_entropy_mixture(&set, prior)?;
    Ok(RsReport {
        task: task.to_string(),
        total_optima: total,
        rs_count: rs,
        total_with_free: set.count_with_free(),
        domain: set.domain,
        codomain: set.codomain,
        free_values: set.free.clone(),
        maps: set.maps.iter().map(|m| m.0.clone()).collect(),
        equivalence_sets: eq.into_iter().map(|(v, e)| (v, e.into_iter().collect())).collect(),
        entropy_bounds: bounds,
        max_entropy,
    })
}
