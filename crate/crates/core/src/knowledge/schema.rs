use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// A categorical concept variable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub size: usize,
}

/// A group of variables produced by one pass of the shared encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSlot {
    pub name: String,
    pub variables: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct RawSchema {
    variables: Vec<Variable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objects: Option<Vec<ObjectSlot>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attributes: Option<Vec<String>>,
}

/// Concept variables, their domains, and the partition into objects that
/// share one encoder.
///
/// Every object has the same attribute layout: the `a`-th variable of each
/// object has the same domain size and plays the same role (e.g. `shape`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct ConceptSchema {
    variables: Vec<Variable>,
    object_names: Vec<String>,
    objects: Vec<Vec<usize>>,
    attributes: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConceptSchema {
    /// Builds a schema where all variables form a single object.
    pub fn flat(variables: Vec<Variable>) -> Result<Self, KnowledgeError> {
        Self::new(variables, None, None)
    }

    pub fn new(
        variables: Vec<Variable>,
        objects: Option<Vec<ObjectSlot>>,
        attributes: Option<Vec<String>>,
    ) -> Result<Self, KnowledgeError> {
        if variables.is_empty() {
            return Err(KnowledgeError::Schema("schema has no variables".into()));
        }
        let mut index = HashMap::new();
        for (i, v) in variables.iter().enumerate() {
            if v.size < 2 {
                return Err(KnowledgeError::Schema(format!(
                    "variable `{}` has domain size {} (< 2)",
                    v.name, v.size
                )));
            }
            if index.insert(v.name.clone(), i).is_some() {
                return Err(KnowledgeError::Schema(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
        }
        let slots = objects.unwrap_or_else(|| {
            vec![ObjectSlot {
                name: "object".into(),
                variables: variables.iter().map(|v| v.name.clone()).collect(),
            }]
        });
        if slots.is_empty() {
            return Err(KnowledgeError::Schema("schema has no objects".into()));
        }
        let mut seen = vec![false; variables.len()];
        let mut resolved = Vec::with_capacity(slots.len());
        for slot in &slots {
            let mut ids = Vec::with_capacity(slot.variables.len());
            for name in &slot.variables {
                let id = *index.get(name).ok_or_else(|| {
                    KnowledgeError::Schema(format!(
                        "object `{}` references unknown variable `{name}`",
                        slot.name
                    ))
                })?;
                if seen[id] {
                    return Err(KnowledgeError::Schema(format!(
                        "variable `{name}` belongs to more than one object"
                    )));
                }
                seen[id] = true;
                ids.push(id);
            }
            resolved.push(ids);
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(KnowledgeError::Schema(format!(
                "variable `{}` belongs to no object",
                variables[missing].name
            )));
        }
        let layout: Vec<usize> = resolved[0].iter().map(|&v| variables[v].size).collect();
        if layout.is_empty() {
            return Err(KnowledgeError::Schema("objects must hold at least one variable".into()));
        }
        for (slot, ids) in slots.iter().zip(&resolved) {
            let sizes: Vec<usize> = ids.iter().map(|&v| variables[v].size).collect();
            if sizes != layout {
                return Err(KnowledgeError::Schema(format!(
                    "object `{}` has layout {sizes:?}, expected {layout:?}",
                    slot.name
                )));
            }
        }
        let attributes = match attributes {
            Some(a) if a.len() == layout.len() => a,
            Some(a) => {
                return Err(KnowledgeError::Schema(format!(
                    "{} attribute names given for a layout of {} variables",
                    a.len(),
                    layout.len()
                )))
            }
            None if resolved.len() == 1 => resolved[0]
                .iter()
                .map(|&v| variables[v].name.clone())
                .collect(),
            None => (0..layout.len()).map(|a| format!("attr{a}")).collect(),
        };
        Ok(Self {
            variables,
            object_names: slots.into_iter().map(|s| s.name).collect(),
            objects: resolved,
            attributes,
            index,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn size(&self, var: usize) -> usize {
        self.variables[var].size
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.size).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn object_name(&self, object: usize) -> &str {
        &self.object_names[object]
    }

    /// Variables of `object`, in attribute order.
    pub fn object_vars(&self, object: usize) -> &[usize] {
        &self.objects[object]
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    /// Domain sizes of one object's attributes.
    pub fn layout(&self) -> Vec<usize> {
        self.objects[0].iter().map(|&v| self.variables[v].size).collect()
    }

    /// Width of the encoder output for one object.
    pub fn object_width(&self) -> usize {
        self.layout().iter().sum()
    }

    /// Number of joint values one object can take.
    pub fn object_domain(&self) -> usize {
        self.layout().iter().product()
    }

    /// Joint object value, first attribute most significant.
    pub fn encode_object(&self, values: &[usize]) -> usize {
        let layout = self.layout();
        values
            .iter()
            .zip(&layout)
            .fold(0, |acc, (&v, &s)| acc * s + v)
    }

    pub fn decode_object(&self, mut value: usize) -> Vec<usize> {
        let layout = self.layout();
        let mut out = vec![0; layout.len()];
        for (slot, &s) in out.iter_mut().zip(&layout).rev() {
            *slot = value % s;
            value /= s;
        }
        out
    }

    /// Joint object values of a full assignment, one per object.
    pub fn object_values(&self, assignment: &[usize]) -> Vec<usize> {
        self.objects
            .iter()
            .map(|vars| {
                let vals: Vec<usize> = vars.iter().map(|&v| assignment[v]).collect();
                self.encode_object(&vals)
            })
            .collect()
    }

    /// Full assignment from per-object joint values.
    pub fn assignment_from_objects(&self, object_values: &[usize]) -> Vec<usize> {
        let mut out = vec![0; self.num_vars()];
        for (vars, &val) in self.objects.iter().zip(object_values) {
            for (&var, x) in vars.iter().zip(self.decode_object(val)) {
                out[var] = x;
            }
        }
        out
    }

    /// Size of the joint concept space, saturating at `u128::MAX`.
    pub fn total_assignments(&self) -> u128 {
        self.variables
            .iter()
            .try_fold(1u128, |acc, v| acc.checked_mul(v.size as u128))
            .unwrap_or(u128::MAX)
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<(), KnowledgeError> {
        if assignment.len() != self.num_vars() {
            return Err(KnowledgeError::Assignment(format!(
                "assignment has {} values, schema has {} variables",
                assignment.len(),
                self.num_vars()
            )));
        }
        for (v, (&x, var)) in assignment.iter().zip(&self.variables).enumerate() {
            if x >= var.size {
                return Err(KnowledgeError::Assignment(format!(
                    "value {x} out of domain 0..{} for variable `{}` (#{v})",
                    var.size, var.name
                )));
            }
        }
        Ok(())
    }
}

impl TryFrom<RawSchema> for ConceptSchema {
    type Error = KnowledgeError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        Self::new(raw.variables, raw.objects, raw.attributes)
    }
}

impl From<ConceptSchema> for RawSchema {
    fn from(s: ConceptSchema) -> Self {
        RawSchema {
            objects: Some(
                s.object_names
                    .iter()
                    .zip(&s.objects)
                    .map(|(name, vars)| ObjectSlot {
                        name: name.clone(),
                        variables: vars.iter().map(|&v| s.variables[v].name.clone()).collect(),
                    })
                    .collect(),
            ),
            attributes: Some(s.attributes),
            variables: s.variables,
        }
    }
}

/// Iterates all assignments of `sizes` in lexicographic order (first
/// variable most significant).
pub struct Assignments {
    sizes: Vec<usize>,
    current: Option<Vec<usize>>,
}

impl Assignments {
    pub fn new(sizes: &[usize]) -> Self {
        let current = if sizes.iter().all(|&s| s > 0) {
            Some(vec![0; sizes.len()])
        } else {
            None
        };
        Self {
            sizes: sizes.to_vec(),
            current,
        }
    }
}

impl Iterator for Assignments {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().unwrap();
        let mut i = cur.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < self.sizes[i] {
                break;
            }
            cur[i] = 0;
        }
        Some(out)
    }
}
