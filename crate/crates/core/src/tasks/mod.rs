//! Task specifications, builtin tasks, synthetic data and the annotation
//! oracle.

mod builtin;
mod generate;
mod oracle;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::knowledge::{
    parse_knowledge, Assignments, ConceptSchema, KnowledgeError, KnowledgeExpr, Reasoner,
    StructureDecl,
};

pub use builtin::{builtin_task, BUILTIN_TASKS};
pub use generate::{generate_dataset, GeneratedDataset, Split, SplitName};
pub use oracle::Oracle;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown builtin task `{0}`")]
    Unknown(String),
    #[error("invalid task spec: {0}")]
    Invalid(String),
    #[error("{split} example {example}: nearest-center decoding does not recover the concepts (noise too large)")]
    A1 { split: SplitName, example: usize },
    #[error("oracle: {0}")]
    Oracle(String),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RendererConfig {
    /// Input width per object.
    pub dim: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub sigma: f64,
    /// Minimum Euclidean distance between two object-value centers.
    pub min_center_distance: f64,
    pub seed: u64,
}

impl Default for RendererConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            sigma: 0.1,
            min_center_distance: 1.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub ood: usize,
}

/// How the out-of-distribution concept support is obtained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum OodRule {
    #[default]
    None,
    /// Every full assignment not in the training support.
    Complement,
    Explicit { support: Vec<Vec<usize>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub schema_version: u32,
    pub name: String,
    pub schema: ConceptSchema,
    /// Knowledge DSL source.
    pub knowledge: String,
    #[serde(default)]
    pub structure: StructureDecl,
    /// Ground-truth concept tuples seen in training.
    pub support: Vec<Vec<usize>>,
    /// Sampling weights over `support`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default)]
    pub ood: OodRule,
    pub renderer: RendererConfig,
    pub splits: SplitSizes,
    /// Size of the value range searched for per-object maps. Defaults to
    /// the object domain; larger values let sum systems map digits onto
    /// integers beyond the digit range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rs_codomain: Option<usize>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(TaskError::Invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let k = self.knowledge_expr()?;
        if self.support.is_empty() && self.splits.train + self.splits.val + self.splits.test > 0 {
            return Err(TaskError::Invalid("empty support but nonzero split sizes".into()));
        }
        for g in &self.support {
            self.schema.check_assignment(g)?;
            k.eval_beta(g)?;
        }
        if let Some(prior) = &self.prior {
            if prior.len() != self.support.len() {
                return Err(TaskError::Invalid(format!(
                    "prior has {} weights for {} support tuples",
                    prior.len(),
                    self.support.len()
                )));
            }
            if prior.iter().any(|w| !w.is_finite() || *w < 0.0) || prior.iter().sum::<f64>() <= 0.0 {
                return Err(TaskError::Invalid("prior weights must be non-negative with positive sum".into()));
            }
        }
        if self.renderer.dim == 0 || !(self.renderer.sigma >= 0.0) {
            return Err(TaskError::Invalid("renderer needs dim > 0 and sigma >= 0".into()));
        }
        if let Some(c) = self.rs_codomain {
            if c < self.schema.object_domain() {
                return Err(TaskError::Invalid(format!(
                    "rs_codomain {c} is smaller than the object domain {}",
                    self.schema.object_domain()
                )));
            }
        }
        let ood = self.ood_support()?;
        if ood.is_empty() && self.splits.ood > 0 {
            return Err(TaskError::Invalid("ood split requested but the OOD support is empty".into()));
        }
        Ok(())
    }

    pub fn knowledge_expr(&self) -> Result<KnowledgeExpr, TaskError> {
        Ok(parse_knowledge(&self.knowledge, &self.schema)?)
    }

    pub fn reasoner(&self) -> Result<Reasoner, TaskError> {
        Ok(Reasoner::new(self.knowledge_expr()?, &self.structure)?)
    }

    /// Out-of-distribution concept tuples, disjoint from the training support.
    pub fn ood_support(&self) -> Result<Vec<Vec<usize>>, TaskError> {
        let train: HashSet<&Vec<usize>> = self.support.iter().collect();
        match &self.ood {
            OodRule::None => Ok(Vec::new()),
            OodRule::Complement => {
                let total = self.schema.total_assignments();
                if total > crate::knowledge::MAX_FULL_ASSIGNMENTS {
                    return Err(TaskError::Invalid(format!(
                        "complement OOD rule over {total} assignments"
                    )));
                }
                Ok(Assignments::new(&self.schema.sizes())
                    .filter(|g| !train.contains(g))
                    .collect())
            }
            OodRule::Explicit { support } => {
                for g in support {
                    self.schema.check_assignment(g)?;
                    if train.contains(g) {
                        return Err(TaskError::Invalid(format!(
                            "OOD tuple {g:?} also appears in the training support"
                        )));
                    }
                }
                Ok(support.clone())
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("task spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TaskError> {
        let spec: TaskSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Resolves a builtin name or a path to a spec file.
    pub fn resolve(name_or_path: &str) -> Result<Self, TaskError> {
        match builtin_task(name_or_path) {
            Ok(spec) => Ok(spec),
            Err(TaskError::Unknown(_)) => Self::load(Path::new(name_or_path)),
            Err(e) => Err(e),
        }
    }
}
