use std::collections::BTreeMap;

use super::TaskError;
use crate::knowledge::ConceptSchema;

/// Reveals hidden concept values on request and keeps an append-only log.
/// Budget counts distinct (example, variable) reveals.
#[derive(Clone, Debug)]
pub struct Oracle {
    schema: ConceptSchema,
    hidden: Vec<Vec<usize>>,
    revealed: BTreeMap<(usize, usize), usize>,
    log: Vec<(usize, usize)>,
}

impl Oracle {
    pub fn new(schema: ConceptSchema, hidden: Vec<Vec<usize>>) -> Self {
        Self {
            schema,
            hidden,
            revealed: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn reveal(&mut self, example: usize, variable: &str) -> Result<usize, TaskError> {
        let var = self
            .schema
            .index_of(variable)
            .ok_or_else(|| TaskError::Oracle(format!("unknown variable `{variable}`")))?;
        self.reveal_index(example, var)
    }

    pub fn reveal_index(&mut self, example: usize, var: usize) -> Result<usize, TaskError> {
        let row = self
            .hidden
            .get(example)
            .ok_or_else(|| TaskError::Oracle(format!("example {example} out of range")))?;
        let value = *row
            .get(var)
            .ok_or_else(|| TaskError::Oracle(format!("variable #{var} out of range")))?;
        if self.revealed.insert((example, var), value).is_none() {
            self.log.push((example, var));
        }
        Ok(value)
    }

    pub fn budget_spent(&self) -> usize {
        self.revealed.len()
    }

    pub fn log(&self) -> &[(usize, usize)] {
        &self.log
    }

    pub fn revealed(&self, example: usize, var: usize) -> Option<usize> {
        self.revealed.get(&(example, var)).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{builtin_task, generate_dataset};

    #[test]
    fn reveals_are_idempotent() {
        let spec = builtin_task("traffic_mini").unwrap();
        let d = generate_dataset(&spec, 0).unwrap();
        let mut o = Oracle::new(spec.schema.clone(), d.train.g.clone());
        let i = d.train.g.iter().position(|g| g[2] == 1).unwrap();
        assert_eq!(o.reveal(i, "ped").unwrap(), 1);
        assert_eq!(o.reveal(i, "ped").unwrap(), 1);
        assert_eq!(o.budget_spent(), 1);
        assert_eq!(o.log(), &[(i, 2)]);
        assert!(o.reveal(i, "bike").is_err());
    }
}
