use std::fmt;

use serde::{Deserialize, Serialize};

use super::schema::ConceptSchema;
use super::KnowledgeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    Same,
    AllDiff,
    Pair,
}

impl Predicate {
    pub fn keyword(self) -> &'static str {
        match self {
            Predicate::Same => "same",
            Predicate::AllDiff => "all_diff",
            Predicate::Pair => "pair",
        }
    }

    pub fn min_args(self) -> usize {
        match self {
            Predicate::Pair => 3,
            _ => 2,
        }
    }

    pub fn holds(self, values: &[i64]) -> bool {
        let same = values.windows(2).all(|w| w[0] == w[1]);
        let all_diff = values
            .iter()
            .enumerate()
            .all(|(i, a)| values[i + 1..].iter().all(|b| a != b));
        match self {
            Predicate::Same => same,
            Predicate::AllDiff => all_diff,
            Predicate::Pair => !same && !all_diff,
        }
    }
}

/// Abstract syntax of the knowledge DSL with variables resolved to schema
/// indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Var(usize),
    /// Flattened sum; never directly contains another `Add`.
    Add(Vec<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Ne(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Pred(Predicate, Vec<usize>),
}

/// Static type of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ty {
    Bool,
    /// Integer with an inclusive range covering every value it can take.
    Int { min: i64, max: i64 },
}

impl Expr {
    pub fn is_bool_op(&self) -> bool {
        matches!(
            self,
            Expr::And(..) | Expr::Or(..) | Expr::Implies(..) | Expr::Not(_)
        )
    }

    /// Type-checks against the variable domain sizes.
    ///
    /// Integer-typed operands are accepted in a boolean position only when
    /// their range lies in `{0, 1}`; anything else has no truth value on
    /// some assignment and is rejected as non-total.
    pub fn ty(&self, sizes: &[usize]) -> Result<Ty, String> {
        match self {
            Expr::Int(v) => Ok(Ty::Int { min: *v, max: *v }),
            Expr::Var(i) => Ok(Ty::Int {
                min: 0,
                max: sizes[*i] as i64 - 1,
            }),
            Expr::Add(terms) => {
                let (mut lo, mut hi) = (0i64, 0i64);
                for t in terms {
                    match t.ty(sizes)? {
                        Ty::Int { min, max } => {
                            lo += min;
                            hi += max;
                        }
                        Ty::Bool => return Err("`+` applied to a boolean operand".into()),
                    }
                }
                Ok(Ty::Int { min: lo, max: hi })
            }
            Expr::Eq(a, b) | Expr::Ne(a, b) => {
                for side in [a, b] {
                    if side.ty(sizes)? == Ty::Bool {
                        return Err("comparison applied to a boolean operand".into());
                    }
                }
                Ok(Ty::Bool)
            }
            Expr::Not(a) => {
                a.expect_bool(sizes)?;
                Ok(Ty::Bool)
            }
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                a.expect_bool(sizes)?;
                b.expect_bool(sizes)?;
                Ok(Ty::Bool)
            }
            Expr::Pred(..) => Ok(Ty::Bool),
        }
    }

    fn expect_bool(&self, sizes: &[usize]) -> Result<(), String> {
        match self.ty(sizes)? {
            Ty::Bool => Ok(()),
            Ty::Int { min, max } if min >= 0 && max <= 1 => Ok(()),
            Ty::Int { min, max } => Err(format!(
                "integer expression with range {min}..={max} used as a truth value"
            )),
        }
    }

    /// Evaluates to an integer (booleans are 0/1). Values are not range
    /// checked, which lets shortcut analysis evaluate codomains wider than
    /// the schema.
    pub fn eval(&self, c: &[i64]) -> i64 {
        match self {
            Expr::Int(v) => *v,
            Expr::Var(i) => c[*i],
            Expr::Add(terms) => terms.iter().map(|t| t.eval(c)).sum(),
            Expr::Eq(a, b) => (a.eval(c) == b.eval(c)) as i64,
            Expr::Ne(a, b) => (a.eval(c) != b.eval(c)) as i64,
            Expr::Not(a) => (a.eval(c) == 0) as i64,
            Expr::And(a, b) => (a.eval(c) != 0 && b.eval(c) != 0) as i64,
            Expr::Or(a, b) => (a.eval(c) != 0 || b.eval(c) != 0) as i64,
            Expr::Implies(a, b) => (a.eval(c) == 0 || b.eval(c) != 0) as i64,
            Expr::Pred(p, vars) => {
                let vals: Vec<i64> = vars.iter().map(|&v| c[v]).collect();
                p.holds(&vals) as i64
            }
        }
    }

    pub fn referenced_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(i) => out.push(*i),
            Expr::Add(t) => t.iter().for_each(|e| e.referenced_vars(out)),
            Expr::Eq(a, b)
            | Expr::Ne(a, b)
            | Expr::And(a, b)
            | Expr::Or(a, b)
            | Expr::Implies(a, b) => {
                a.referenced_vars(out);
                b.referenced_vars(out);
            }
            Expr::Not(a) => a.referenced_vars(out),
            Expr::Pred(_, v) => out.extend(v),
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: &[String]) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "{}", names[*i]),
            Expr::Add(terms) => {
                for (k, t) in terms.iter().enumerate() {
                    if k > 0 {
                        write!(f, " + ")?;
                    }
                    t.write_atom(f, names)?;
                }
                Ok(())
            }
            Expr::Eq(a, b) | Expr::Ne(a, b) => {
                let op = if matches!(self, Expr::Eq(..)) { "==" } else { "!=" };
                a.write_arith(f, names)?;
                write!(f, " {op} ")?;
                b.write_arith(f, names)
            }
            Expr::Not(a) => {
                write!(f, "not ")?;
                a.write_atom(f, names)
            }
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) => {
                let op = match self {
                    Expr::And(..) => "and",
                    Expr::Or(..) => "or",
                    _ => "implies",
                };
                a.write_atom(f, names)?;
                write!(f, " {op} ")?;
                b.write_atom(f, names)
            }
            Expr::Pred(p, vars) => {
                write!(f, "{}(", p.keyword())?;
                for (k, v) in vars.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", names[*v])?;
                }
                write!(f, ")")
            }
        }
    }

    fn write_atom(&self, f: &mut fmt::Formatter<'_>, names: &[String]) -> fmt::Result {
        match self {
            Expr::Int(_) | Expr::Var(_) | Expr::Pred(..) => self.write(f, names),
            _ => {
                write!(f, "(")?;
                self.write(f, names)?;
                write!(f, ")")
            }
        }
    }

    fn write_arith(&self, f: &mut fmt::Formatter<'_>, names: &[String]) -> fmt::Result {
        match self {
            Expr::Add(_) => self.write(f, names),
            _ => self.write_atom(f, names),
        }
    }
}

/// One `name := expr;` definition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelDef {
    pub name: String,
    pub expr: Expr,
    pub ty: Ty,
}

/// A parsed knowledge program over a schema: the deterministic label map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeExpr {
    schema: ConceptSchema,
    labels: Vec<LabelDef>,
    space: LabelSpace,
}

impl KnowledgeExpr {
    pub(crate) fn new(schema: ConceptSchema, labels: Vec<LabelDef>) -> Self {
        let space = LabelSpace::from_labels(&labels);
        Self {
            schema,
            labels,
            space,
        }
    }

    pub fn schema(&self) -> &ConceptSchema {
        &self.schema
    }

    pub fn labels(&self) -> &[LabelDef] {
        &self.labels
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.space
    }

    /// The label map on an in-domain assignment.
    pub fn eval_beta(&self, c: &[usize]) -> Result<LabelValue, KnowledgeError> {
        self.schema.check_assignment(c)?;
        let wide: Vec<i64> = c.iter().map(|&x| x as i64).collect();
        Ok(self.eval_unchecked(&wide))
    }

    /// The label map without domain checks.
    pub fn eval_unchecked(&self, c: &[i64]) -> LabelValue {
        LabelValue(self.labels.iter().map(|l| l.expr.eval(c)).collect())
    }

    /// Index of `β(c)` in the label space.
    pub fn label_index(&self, c: &[usize]) -> Result<usize, KnowledgeError> {
        let y = self.eval_beta(c)?;
        self.space
            .index_of(&y)
            .ok_or_else(|| KnowledgeError::Label(format!("label {y} outside the label space")))
    }

    /// Pretty-prints the program in DSL syntax.
    pub fn to_source(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for KnowledgeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self
            .schema
            .variables()
            .iter()
            .map(|v| v.name.clone())
            .collect();
        for l in &self.labels {
            write!(f, "{} := ", l.name)?;
            l.expr.write(f, &names)?;
            writeln!(f, ";")?;
        }
        Ok(())
    }
}

/// A value of every label, in definition order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelValue(pub Vec<i64>);

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// One label component: a name and inclusive value range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelComponent {
    pub name: String,
    pub min: i64,
    pub max: i64,
    pub boolean: bool,
}

impl LabelComponent {
    pub fn cardinality(&self) -> usize {
        (self.max - self.min + 1) as usize
    }
}

/// The finite space of label vectors, indexed in mixed radix with the first
/// label most significant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    components: Vec<LabelComponent>,
}

impl LabelSpace {
    fn from_labels(labels: &[LabelDef]) -> Self {
        let components = labels
            .iter()
            .map(|l| match l.ty {
                Ty::Bool => LabelComponent {
                    name: l.name.clone(),
                    min: 0,
                    max: 1,
                    boolean: true,
                },
                Ty::Int { min, max } => LabelComponent {
                    name: l.name.clone(),
                    min,
                    max,
                    boolean: false,
                },
            })
            .collect();
        Self { components }
    }

    pub fn components(&self) -> &[LabelComponent] {
        &self.components
    }

    pub fn size(&self) -> usize {
        self.components.iter().map(|c| c.cardinality()).product()
    }

    pub fn index_of(&self, y: &LabelValue) -> Option<usize> {
        if y.0.len() != self.components.len() {
            return None;
        }
        let mut idx = 0usize;
        for (c, &v) in self.components.iter().zip(&y.0) {
            if v < c.min || v > c.max {
                return None;
            }
            idx = idx * c.cardinality() + (v - c.min) as usize;
        }
        Some(idx)
    }

    pub fn value_of(&self, mut index: usize) -> LabelValue {
        let mut out = vec![0; self.components.len()];
        for (slot, c) in out.iter_mut().zip(&self.components).rev() {
            let card = c.cardinality();
            *slot = c.min + (index % card) as i64;
            index /= card;
        }
        LabelValue(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicates_follow_figure_definitions() {
        assert!(Predicate::Same.holds(&[1, 1, 1]));
        assert!(Predicate::AllDiff.holds(&[0, 1, 2]));
        assert!(Predicate::Pair.holds(&[0, 0, 2]));
        assert!(!Predicate::Pair.holds(&[0, 0, 0]));
        assert!(!Predicate::Pair.holds(&[0, 1, 2]));
    }

    #[test]
    fn label_space_indexing() {
        let space = LabelSpace {
            components: vec![
                LabelComponent {
                    name: "a".into(),
                    min: 0,
                    max: 1,
                    boolean: true,
                },
                LabelComponent {
                    name: "b".into(),
                    min: 2,
                    max: 4,
                    boolean: false,
                },
            ],
        };
        assert_eq!(space.size(), 6);
        for i in 0..6 {
            assert_eq!(space.index_of(&space.value_of(i)), Some(i));
        }
        assert_eq!(space.index_of(&LabelValue(vec![1, 5])), None);
    }
}
