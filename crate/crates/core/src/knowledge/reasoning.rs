//! Exact probabilistic reasoning: `p(y | x) = Σ_{c : β(c) = y} Π_j p(c_j | x)`.
//!
//! Three evaluators share one contract. `Full` enumerates the joint concept
//! space (refused above [`MAX_FULL_ASSIGNMENTS`]); `Additive` convolves the
//! factors of a single sum label; `FigurePatterns` reduces each figure of
//! three objects to its same/pair/diff flags per attribute and enumerates
//! flag combinations. All of them also return the exact gradient of
//! `p(y | x)` with respect to every factor entry, which is what the training
//! tape uses.

use serde::{Deserialize, Serialize};

use super::expr::{Expr, KnowledgeExpr, LabelValue};
use super::schema::Assignments;
use super::KnowledgeError;
use crate::distribution::{argmax, ConceptDistribution};

/// Largest joint space the full enumerator accepts.
pub const MAX_FULL_ASSIGNMENTS: u128 = 1_000_000;

/// Which evaluator to use, as declared in a task spec.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureDecl {
    /// Pick `additive` when the program is a single sum, else `full`.
    Auto,
    Full,
    Additive,
    /// Figures of exactly three objects; each object lists its attribute
    /// variables (e.g. `[shape, color]`), all with three-value domains. The
    /// knowledge must depend on a figure only through its per-attribute
    /// same/pair/diff flags.
    FigurePatterns { figures: Vec<Vec<Vec<String>>> },
}

impl Default for StructureDecl {
    fn default() -> Self {
        StructureDecl::Auto
    }
}

/// For each label index, the assignments (as lexicographic ranks) mapped to it.
#[derive(Clone, Debug)]
pub struct AdmissibleIndex {
    sizes: Vec<usize>,
    label_of: Vec<u32>,
    per_label: Vec<Vec<u32>>,
}

impl AdmissibleIndex {
    pub fn build(k: &KnowledgeExpr) -> Result<Self, KnowledgeError> {
        let schema = k.schema();
        let total = schema.total_assignments();
        if total > MAX_FULL_ASSIGNMENTS {
            return Err(KnowledgeError::TooLarge {
                assignments: total,
                limit: MAX_FULL_ASSIGNMENTS,
            });
        }
        let sizes = schema.sizes();
        let space = k.label_space();
        let mut per_label = vec![Vec::new(); space.size()];
        let mut label_of = Vec::with_capacity(total as usize);
        for (rank, c) in Assignments::new(&sizes).enumerate() {
            let wide: Vec<i64> = c.iter().map(|&x| x as i64).collect();
            let y = k.eval_unchecked(&wide);
            let idx = space.index_of(&y).ok_or_else(|| {
                KnowledgeError::Label(format!("label {y} outside the label space"))
            })?;
            label_of.push(idx as u32);
            per_label[idx].push(rank as u32);
        }
        Ok(Self {
            sizes,
            label_of,
            per_label,
        })
    }

    pub fn decode(&self, rank: u32) -> Vec<usize> {
        let mut r = rank as usize;
        let mut out = vec![0; self.sizes.len()];
        for (slot, &s) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = r % s;
            r /= s;
        }
        out
    }

    pub fn assignments_for(&self, label: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
        self.per_label[label].iter().map(|&r| self.decode(r))
    }

    pub fn num_labels(&self) -> usize {
        self.per_label.len()
    }
}

#[derive(Clone, Debug)]
struct AdditivePlan {
    vars: Vec<usize>,
}

#[derive(Clone, Debug)]
struct FigurePlan {
    /// figure -> object -> attribute -> variable
    figures: Vec<Vec<Vec<usize>>>,
    attrs: usize,
    /// label index for every combination of per-figure flag states
    combo_label: Vec<u32>,
}

#[derive(Clone, Debug)]
enum Engine {
    Full(AdmissibleIndex),
    Additive(AdditivePlan),
    Figures(FigurePlan),
}

/// Exact reasoning layer for one knowledge program.
#[derive(Clone, Debug)]
pub struct Reasoner {
    knowledge: KnowledgeExpr,
    engine: Engine,
}

impl Reasoner {
    pub fn new(knowledge: KnowledgeExpr, decl: &StructureDecl) -> Result<Self, KnowledgeError> {
        let engine = match decl {
            StructureDecl::Full => Engine::Full(AdmissibleIndex::build(&knowledge)?),
            StructureDecl::Additive => Engine::Additive(additive_plan(&knowledge).ok_or_else(
                || {
                    KnowledgeError::Structure(
                        "additive evaluation needs a single label that sums distinct variables"
                            .into(),
                    )
                },
            )?),
            StructureDecl::Auto => match additive_plan(&knowledge) {
                Some(plan) => Engine::Additive(plan),
                None => Engine::Full(AdmissibleIndex::build(&knowledge)?),
            },
            StructureDecl::FigurePatterns { figures } => {
                Engine::Figures(figure_plan(&knowledge, figures)?)
            }
        };
        Ok(Self { knowledge, engine })
    }

    pub fn full(knowledge: KnowledgeExpr) -> Result<Self, KnowledgeError> {
        Self::new(knowledge, &StructureDecl::Full)
    }

    pub fn knowledge(&self) -> &KnowledgeExpr {
        &self.knowledge
    }

    pub fn num_labels(&self) -> usize {
        self.knowledge.label_space().size()
    }

    pub fn engine_name(&self) -> &'static str {
        match self.engine {
            Engine::Full(_) => "full",
            Engine::Additive(_) => "additive",
            Engine::Figures(_) => "figure_patterns",
        }
    }

    /// Distribution over label indices. Validates `p` first.
    pub fn label_distribution(&self, p: &ConceptDistribution) -> Result<Vec<f64>, KnowledgeError> {
        p.validate(self.knowledge.schema(), 1e-9)?;
        Ok(self.label_probs(&p.factors))
    }

    /// Distribution over label indices without validation.
    pub fn label_probs(&self, factors: &[Vec<f64>]) -> Vec<f64> {
        let n = self.num_labels();
        match &self.engine {
            Engine::Full(index) => {
                let mut out = vec![0.0; n];
                let mut c = vec![0usize; index.sizes.len()];
                for &label in index.label_of.iter() {
                    let prob: f64 = c.iter().enumerate().map(|(j, &v)| factors[j][v]).product();
                    out[label as usize] += prob;
                    advance(&mut c, &index.sizes);
                }
                out
            }
            Engine::Additive(plan) => {
                let conv = plan
                    .vars
                    .iter()
                    .fold(vec![1.0], |acc, &v| convolve(&acc, &factors[v]));
                let mut out = vec![0.0; n];
                out[..conv.len()].copy_from_slice(&conv);
                out
            }
            Engine::Figures(plan) => {
                let states: Vec<Vec<f64>> = plan
                    .figures
                    .iter()
                    .map(|fig| figure_state_probs(fig, plan.attrs, factors))
                    .collect();
                let per_fig = 3usize.pow(plan.attrs as u32);
                let mut out = vec![0.0; n];
                let mut combo = vec![0usize; plan.figures.len()];
                let sizes = vec![per_fig; plan.figures.len()];
                for &label in &plan.combo_label {
                    let prob: f64 = combo.iter().enumerate().map(|(f, &s)| states[f][s]).product();
                    out[label as usize] += prob;
                    advance(&mut combo, &sizes);
                }
                out
            }
        }
    }

    /// `p(y)` and its gradient with respect to every factor entry.
    pub fn label_prob_grad(&self, factors: &[Vec<f64>], y: usize) -> (f64, Vec<Vec<f64>>) {
        let mut grad: Vec<Vec<f64>> = factors.iter().map(|f| vec![0.0; f.len()]).collect();
        let prob = match &self.engine {
            Engine::Full(index) => {
                let nv = index.sizes.len();
                let mut prefix = vec![1.0; nv + 1];
                let mut suffix = vec![1.0; nv + 1];
                let mut total = 0.0;
                for c in index.assignments_for(y) {
                    for j in 0..nv {
                        prefix[j + 1] = prefix[j] * factors[j][c[j]];
                    }
                    for j in (0..nv).rev() {
                        suffix[j] = suffix[j + 1] * factors[j][c[j]];
                    }
                    total += prefix[nv];
                    for j in 0..nv {
                        grad[j][c[j]] += prefix[j] * suffix[j + 1];
                    }
                }
                total
            }
            Engine::Additive(plan) => {
                let m = plan.vars.len();
                let mut prefix = vec![vec![1.0]];
                for &v in &plan.vars {
                    let next = convolve(prefix.last().unwrap(), &factors[v]);
                    prefix.push(next);
                }
                let mut suffix = vec![vec![1.0]; m + 1];
                for k in (0..m).rev() {
                    suffix[k] = convolve(&suffix[k + 1], &factors[plan.vars[k]]);
                }
                let total = prefix[m].get(y).copied().unwrap_or(0.0);
                for (k, &v) in plan.vars.iter().enumerate() {
                    let others = convolve(&prefix[k], &suffix[k + 1]);
                    for (val, g) in grad[v].iter_mut().enumerate() {
                        if y >= val {
                            *g = others.get(y - val).copied().unwrap_or(0.0);
                        }
                    }
                }
                total
            }
            Engine::Figures(plan) => figure_grad(plan, factors, y, &mut grad),
        };
        (prob, grad)
    }

    /// Most probable label; ties go to the lowest label index.
    pub fn map_predict(&self, p: &ConceptDistribution) -> Result<LabelValue, KnowledgeError> {
        let dist = self.label_distribution(p)?;
        Ok(self.knowledge.label_space().value_of(argmax(&dist)))
    }
}

fn advance(c: &mut [usize], sizes: &[usize]) {
    for i in (0..c.len()).rev() {
        c[i] += 1;
        if c[i] < sizes[i] {
            return;
        }
        c[i] = 0;
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn additive_plan(k: &KnowledgeExpr) -> Option<AdditivePlan> {
    if k.labels().len() != 1 {
        return None;
    }
    let vars = match &k.labels()[0].expr {
        Expr::Var(v) => vec![*v],
        Expr::Add(terms) => {
            let mut vars = Vec::new();
            for t in terms {
                match t {
                    Expr::Var(v) if !vars.contains(v) => vars.push(*v),
                    _ => return None,
                }
            }
            vars
        }
        _ => return None,
    };
    // Every variable must appear, otherwise the label is not a function of
    // the convolved factors alone (unreferenced variables are fine: they
    // marginalize to one).
    Some(AdditivePlan { vars })
}

/// Flag of three values: 0 = same, 1 = pair, 2 = all different.
fn flag_of(a: usize, b: usize, c: usize) -> usize {
    if a == b && b == c {
        0
    } else if a != b && b != c && a != c {
        2
    } else {
        1
    }
}

const CANONICAL: [[usize; 3]; 3] = [[0, 0, 0], [0, 0, 1], [0, 1, 2]];

fn figure_plan(
    k: &KnowledgeExpr,
    figures: &[Vec<Vec<String>>],
) -> Result<FigurePlan, KnowledgeError> {
    let schema = k.schema();
    let mut covered = vec![false; schema.num_vars()];
    let mut resolved = Vec::new();
    let mut attrs = None;
    for (f, fig) in figures.iter().enumerate() {
        if fig.len() != 3 {
            return Err(KnowledgeError::Structure(format!(
                "figure {f} has {} objects, expected 3",
                fig.len()
            )));
        }
        let mut objs = Vec::new();
        for obj in fig {
            if *attrs.get_or_insert(obj.len()) != obj.len() || obj.is_empty() {
                return Err(KnowledgeError::Structure(
                    "figure objects must list the same number of attributes".into(),
                ));
            }
            let mut ids = Vec::new();
            for name in obj {
                let id = schema.index_of(name).ok_or_else(|| {
                    KnowledgeError::Structure(format!("unknown variable `{name}` in figure {f}"))
                })?;
                if schema.size(id) != 3 {
                    return Err(KnowledgeError::Structure(format!(
                        "figure variable `{name}` must have 3 values"
                    )));
                }
                if std::mem::replace(&mut covered[id], true) {
                    return Err(KnowledgeError::Structure(format!(
                        "variable `{name}` appears in two figure slots"
                    )));
                }
                ids.push(id);
            }
            objs.push(ids);
        }
        resolved.push(objs);
    }
    if covered.iter().any(|c| !c) {
        return Err(KnowledgeError::Structure(
            "every schema variable must belong to a figure".into(),
        ));
    }
    let attrs = attrs.ok_or_else(|| KnowledgeError::Structure("no figures declared".into()))?;
    let per_fig = 3usize.pow(attrs as u32);
    let n_combos = (per_fig as u128).pow(resolved.len() as u32);
    if n_combos > MAX_FULL_ASSIGNMENTS {
        return Err(KnowledgeError::TooLarge {
            assignments: n_combos,
            limit: MAX_FULL_ASSIGNMENTS,
        });
    }
    let space = k.label_space();
    let mut combo_label = Vec::with_capacity(n_combos as usize);
    let sizes = vec![per_fig; resolved.len()];
    for combo in Assignments::new(&sizes) {
        let mut c = vec![0i64; schema.num_vars()];
        for (fig, &state) in resolved.iter().zip(&combo) {
            let flags = state_flags(state, attrs);
            for (a, &flag) in flags.iter().enumerate() {
                for (o, obj) in fig.iter().enumerate() {
                    c[obj[a]] = CANONICAL[flag][o] as i64;
                }
            }
        }
        let y = k.eval_unchecked(&c);
        let idx = space
            .index_of(&y)
            .ok_or_else(|| KnowledgeError::Label(format!("label {y} outside the label space")))?;
        combo_label.push(idx as u32);
    }
    Ok(FigurePlan {
        figures: resolved,
        attrs,
        combo_label,
    })
}

/// Per-attribute flags of a figure state, first attribute most significant.
fn state_flags(mut state: usize, attrs: usize) -> Vec<usize> {
    let mut out = vec![0; attrs];
    for slot in out.iter_mut().rev() {
        *slot = state % 3;
        state /= 3;
    }
    out
}

/// Flag distribution of one attribute across a figure's three objects, plus
/// `d[flag][object][value]` = derivative of that flag's probability with
/// respect to the object's factor entry.
fn attribute_flags(p: [&[f64]; 3]) -> ([f64; 3], [[[f64; 3]; 3]; 3]) {
    let mut q = [0.0; 3];
    let mut d = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let f = flag_of(a, b, c);
                q[f] += p[0][a] * p[1][b] * p[2][c];
                d[f][0][a] += p[1][b] * p[2][c];
                d[f][1][b] += p[0][a] * p[2][c];
                d[f][2][c] += p[0][a] * p[1][b];
            }
        }
    }
    (q, d)
}

fn figure_state_probs(fig: &[Vec<usize>], attrs: usize, factors: &[Vec<f64>]) -> Vec<f64> {
    let qs: Vec<[f64; 3]> = (0..attrs)
        .map(|a| {
            attribute_flags([
                &factors[fig[0][a]],
                &factors[fig[1][a]],
                &factors[fig[2][a]],
            ])
            .0
        })
        .collect();
    (0..3usize.pow(attrs as u32))
        .map(|s| {
            state_flags(s, attrs)
                .iter()
                .enumerate()
                .map(|(a, &f)| qs[a][f])
                .product()
        })
        .collect()
}

fn figure_grad(plan: &FigurePlan, factors: &[Vec<f64>], y: usize, grad: &mut [Vec<f64>]) -> f64 {
    let nf = plan.figures.len();
    let per_fig = 3usize.pow(plan.attrs as u32);
    let flags: Vec<Vec<([f64; 3], [[[f64; 3]; 3]; 3])>> = plan
        .figures
        .iter()
        .map(|fig| {
            (0..plan.attrs)
                .map(|a| {
                    attribute_flags([
                        &factors[fig[0][a]],
                        &factors[fig[1][a]],
                        &factors[fig[2][a]],
                    ])
                })
                .collect()
        })
        .collect();
    let states: Vec<Vec<f64>> = flags
        .iter()
        .map(|fa| {
            (0..per_fig)
                .map(|s| {
                    state_flags(s, plan.attrs)
                        .iter()
                        .enumerate()
                        .map(|(a, &f)| fa[a].0[f])
                        .product()
                })
                .collect()
        })
        .collect();
    // g[f][s] = d p(y) / d P_f(s)
    let mut g = vec![vec![0.0; per_fig]; nf];
    let mut total = 0.0;
    let mut combo = vec![0usize; nf];
    let sizes = vec![per_fig; nf];
    let mut prefix = vec![1.0; nf + 1];
    let mut suffix = vec![1.0; nf + 1];
    for &label in &plan.combo_label {
        if label as usize == y {
            for f in 0..nf {
                prefix[f + 1] = prefix[f] * states[f][combo[f]];
            }
            for f in (0..nf).rev() {
                suffix[f] = suffix[f + 1] * states[f][combo[f]];
            }
            total += prefix[nf];
            for f in 0..nf {
                g[f][combo[f]] += prefix[f] * suffix[f + 1];
            }
        }
        advance(&mut combo, &sizes);
    }
    for (f, fig) in plan.figures.iter().enumerate() {
        for a in 0..plan.attrs {
            // d p(y) / d q_{f,a}(flag)
            let mut dq = [0.0; 3];
            for s in 0..per_fig {
                let fl = state_flags(s, plan.attrs);
                let others: f64 = fl
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| *b != a)
                    .map(|(b, &x)| flags[f][b].0[x])
                    .product();
                dq[fl[a]] += g[f][s] * others;
            }
            let d = &flags[f][a].1;
            for (o, obj) in fig.iter().enumerate() {
                for v in 0..3 {
                    grad[obj[a]][v] += (0..3).map(|flag| dq[flag] * d[flag][o][v]).sum::<f64>();
                }
            }
        }
    }
    total
}

/// Same/pair/diff flag distribution of one figure.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureFlags {
    /// Probability of each joint flag state, first attribute most significant.
    pub joint: Vec<f64>,
    /// Per attribute: probabilities of (same, pair, diff).
    pub marginals: Vec<[f64; 3]>,
}

/// Enumerates every joint assignment of a figure's three objects (9^3 = 729
/// for two three-valued attributes) and accumulates the flag distribution.
///
/// `objects[o][a]` is the factor of attribute `a` of object `o`.
pub fn figure_pattern_distribution(objects: &[Vec<Vec<f64>>]) -> Result<FigureFlags, KnowledgeError> {
    if objects.len() != 3 {
        return Err(KnowledgeError::Structure(format!(
            "a figure has exactly 3 objects, got {}",
            objects.len()
        )));
    }
    let attrs = objects[0].len();
    if attrs == 0 || objects.iter().any(|o| o.len() != attrs || o.iter().any(|f| f.len() != 3)) {
        return Err(KnowledgeError::Structure(
            "every object needs the same attributes, each with 3 values".into(),
        ));
    }
    let obj_states = 3usize.pow(attrs as u32);
    let mut joint = vec![0.0; obj_states];
    let mut marginals = vec![[0.0; 3]; attrs];
    let decode = |s: usize| state_flags(s, attrs);
    for s0 in 0..obj_states {
        let v0 = decode(s0);
        let p0: f64 = (0..attrs).map(|a| objects[0][a][v0[a]]).product();
        for s1 in 0..obj_states {
            let v1 = decode(s1);
            let p1: f64 = (0..attrs).map(|a| objects[1][a][v1[a]]).product();
            for s2 in 0..obj_states {
                let v2 = decode(s2);
                let p2: f64 = (0..attrs).map(|a| objects[2][a][v2[a]]).product();
                let prob = p0 * p1 * p2;
                let mut state = 0;
                for a in 0..attrs {
                    let f = flag_of(v0[a], v1[a], v2[a]);
                    marginals[a][f] += prob;
                    state = state * 3 + f;
                }
                joint[state] += prob;
            }
        }
    }
    Ok(FigureFlags { joint, marginals })
}

/// `{c : β(c) = y}` in lexicographic order.
pub fn admissible_set(k: &KnowledgeExpr, y: &LabelValue) -> Result<Vec<Vec<usize>>, KnowledgeError> {
    let schema = k.schema();
    let total = schema.total_assignments();
    if total > MAX_FULL_ASSIGNMENTS {
        return Err(KnowledgeError::TooLarge {
            assignments: total,
            limit: MAX_FULL_ASSIGNMENTS,
        });
    }
    Ok(Assignments::new(&schema.sizes())
        .filter(|c| {
            let wide: Vec<i64> = c.iter().map(|&x| x as i64).collect();
            &k.eval_unchecked(&wide) == y
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{parse_knowledge, ConceptSchema, Variable};

    fn half() -> KnowledgeExpr {
        let s = ConceptSchema::flat(vec![
            Variable {
                name: "d1".into(),
                size: 5,
            },
            Variable {
                name: "d2".into(),
                size: 5,
            },
        ])
        .unwrap();
        parse_knowledge("y := d1 + d2;", &s).unwrap()
    }

    #[test]
    fn admissible_sets_of_small_sums() {
        let k = half();
        assert_eq!(admissible_set(&k, &LabelValue(vec![0])).unwrap(), vec![vec![0, 0]]);
        assert_eq!(
            admissible_set(&k, &LabelValue(vec![1])).unwrap(),
            vec![vec![0, 1], vec![1, 0]]
        );
        assert_eq!(admissible_set(&k, &LabelValue(vec![8])).unwrap(), vec![vec![4, 4]]);
        assert!(admissible_set(&k, &LabelValue(vec![9])).unwrap().is_empty());
    }

    #[test]
    fn uniform_digits() {
        let k = half();
        let r = Reasoner::new(k.clone(), &StructureDecl::Auto).unwrap();
        assert_eq!(r.engine_name(), "additive");
        let p = ConceptDistribution::uniform(k.schema());
        let d = r.label_distribution(&p).unwrap();
        assert!((d[0] - 1.0 / 25.0).abs() < 1e-12);
        assert!((d[4] - 5.0 / 25.0).abs() < 1e-12);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.map_predict(&p).unwrap(), LabelValue(vec![4]));

        let full = Reasoner::full(k.clone()).unwrap();
        let df = full.label_distribution(&p).unwrap();
        for (a, b) in d.iter().zip(&df) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_predicts_its_sum() {
        let k = half();
        let r = Reasoner::new(k.clone(), &StructureDecl::Auto).unwrap();
        let p = ConceptDistribution::point_mass(k.schema(), &[2, 3]);
        let d = r.label_distribution(&p).unwrap();
        assert_eq!(d[5], 1.0);
        assert_eq!(r.map_predict(&p).unwrap(), LabelValue(vec![5]));
    }

    #[test]
    fn map_tie_goes_to_lower_label() {
        let k = half();
        let r = Reasoner::new(k.clone(), &StructureDecl::Auto).unwrap();
        let p = ConceptDistribution::new(vec![
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.5, 0.5, 0.0, 0.0],
        ]);
        assert_eq!(r.map_predict(&p).unwrap(), LabelValue(vec![3]));
    }

    #[test]
    fn invalid_distribution_is_rejected() {
        let k = half();
        let r = Reasoner::new(k.clone(), &StructureDecl::Auto).unwrap();
        let p = ConceptDistribution::new(vec![vec![0.5; 5], vec![0.2; 5]]);
        assert!(r.label_distribution(&p).is_err());
    }

    #[test]
    fn full_enumeration_refuses_huge_spaces() {
        let vars: Vec<Variable> = (0..21)
            .map(|i| Variable {
                name: format!("v{i}"),
                size: 2,
            })
            .collect();
        let s = ConceptSchema::flat(vars).unwrap();
        let k = parse_knowledge("y := v0 or v1;", &s).unwrap();
        assert!(matches!(
            Reasoner::full(k),
            Err(KnowledgeError::TooLarge { .. })
        ));
    }

    #[test]
    fn uniform_colors_flag_probabilities() {
        let u = vec![1.0 / 3.0; 3];
        let obj = vec![u.clone(), u.clone()];
        let flags = figure_pattern_distribution(&[obj.clone(), obj.clone(), obj]).unwrap();
        let color = flags.marginals[1];
        assert!((color[0] - 3.0 / 27.0).abs() < 1e-12);
        assert!((color[2] - 6.0 / 27.0).abs() < 1e-12);
        assert!((color.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((flags.joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_red_figure() {
        let red = vec![1.0, 0.0, 0.0];
        let u = vec![1.0 / 3.0; 3];
        let obj = vec![u, red];
        let flags = figure_pattern_distribution(&[obj.clone(), obj.clone(), obj]).unwrap();
        assert!((flags.marginals[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn figure_needs_three_objects() {
        let obj = vec![vec![1.0 / 3.0; 3]];
        assert!(figure_pattern_distribution(&[obj.clone(), obj]).is_err());
    }
}
