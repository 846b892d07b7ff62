use std::fmt;
use std::io::Write;

use rand::Rng as _;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{TaskError, TaskSpec};
use crate::nn::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
    Ood,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [SplitName::Train, SplitName::Val, SplitName::Test, SplitName::Ood];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
            SplitName::Ood => "ood",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        SplitName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown split `{s}`"))
    }
}

/// One split: inputs (objects concatenated per row), hidden concepts and
/// label indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub name: SplitName,
    pub x: Matrix,
    pub g: Vec<Vec<usize>>,
    pub y: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub task_hash: String,
    /// One center per joint object value, `object_domain x dim`.
    pub centers: Matrix,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub ood: Split,
}

impl GeneratedDataset {
    pub fn split(&self, name: SplitName) -> &Split {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
            SplitName::Ood => &self.ood,
        }
    }

    /// Writes `split, x0.., g_<var>.., <label>..` rows for every split.
    pub fn write_csv(&self, spec: &TaskSpec, w: impl Write) -> Result<(), TaskError> {
        let k = spec.knowledge_expr()?;
        let space = k.label_space();
        let mut out = csv::Writer::from_writer(w);
        let dim = self.train.x.cols.max(self.ood.x.cols);
        let mut header = vec!["split".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        header.extend(spec.schema.variables().iter().map(|v| format!("g_{}", v.name)));
        header.extend(space.components().iter().map(|c| c.name.clone()));
        out.write_record(&header)?;
        for name in SplitName::ALL {
            let s = self.split(name);
            for i in 0..s.len() {
                let mut rec = vec![name.to_string()];
                rec.extend(s.x.row(i).iter().map(|v| format!("{v:?}")));
                rec.extend(s.g[i].iter().map(|v| v.to_string()));
                rec.extend(space.value_of(s.y[i]).0.iter().map(|v| v.to_string()));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn centers(spec: &TaskSpec) -> Result<Matrix, TaskError> {
    let r = &spec.renderer;
    let n = spec.schema.object_domain();
    let mut rng = seed::rng(r.seed, "centers");
    for _ in 0..10_000 {
        let mut m = Matrix::zeros(n, r.dim);
        for v in 0..n {
            let row = m.row_mut(v);
            for x in row.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.iter_mut().for_each(|x| *x /= norm);
        }
        let ok = (0..n).all(|a| {
            (a + 1..n).all(|b| {
                let d2: f64 = m.row(a).iter().zip(m.row(b)).map(|(x, y)| (x - y) * (x - y)).sum();
                d2.sqrt() >= r.min_center_distance
            })
        });
        if ok {
            return Ok(m);
        }
    }
    Err(TaskError::Invalid(format!(
        "could not place {n} centers at distance >= {} in {} dimensions",
        r.min_center_distance, r.dim
    )))
}

fn nearest(centers: &Matrix, x: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for v in 0..centers.rows {
        let d: f64 = centers.row(v).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, v);
        }
    }
    best.1
}

fn render_split(
    spec: &TaskSpec,
    name: SplitName,
    support: &[Vec<usize>],
    weights: Option<&[f64]>,
    n: usize,
    centers: &Matrix,
    seed: u64,
) -> Result<Split, TaskError> {
    let k = spec.knowledge_expr()?;
    let schema = &spec.schema;
    let dim = spec.renderer.dim;
    let width = schema.num_objects() * dim;
    let mut rng = seed::rng(seed, &format!("split-{name}"));
    let noise = Normal::new(0.0, spec.renderer.sigma)
        .map_err(|e| TaskError::Invalid(format!("noise: {e}")))?;
    let pick = match weights {
        Some(w) => Some(WeightedIndex::new(w).map_err(|e| TaskError::Invalid(format!("prior: {e}")))?),
        None => None,
    };
    let mut x = Matrix::zeros(n, width);
    let mut g = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let idx = match &pick {
            Some(p) => p.sample(&mut rng),
            None => rng.random_range(0..support.len()),
        };
        let gi = support[idx].clone();
        let row = x.row_mut(i);
        for (o, &val) in schema.object_values(&gi).iter().enumerate() {
            let slot = &mut row[o * dim..(o + 1) * dim];
            for (s, c) in slot.iter_mut().zip(centers.row(val)) {
                *s = c + noise.sample(&mut rng);
            }
            if nearest(centers, slot) != val {
                return Err(TaskError::A1 { split: name, example: i });
            }
        }
        y.push(k.label_index(&gi)?);
        g.push(gi);
    }
    Ok(Split { name, x, g, y })
}

/// Renders every split. Centers depend only on the spec; sampling depends
/// on `seed`.
pub fn generate_dataset(spec: &TaskSpec, seed: u64) -> Result<GeneratedDataset, TaskError> {
    spec.validate()?;
    let centers = centers(spec)?;
    let ood_support = spec.ood_support()?;
    let s = &spec.splits;
    let prior = spec.prior.as_deref();
    Ok(GeneratedDataset {
        task_hash: spec.content_hash(),
        train: render_split(spec, SplitName::Train, &spec.support, prior, s.train, &centers, seed)?,
        val: render_split(spec, SplitName::Val, &spec.support, prior, s.val, &centers, seed)?,
        test: render_split(spec, SplitName::Test, &spec.support, prior, s.test, &centers, seed)?,
        ood: render_split(spec, SplitName::Ood, &ood_support, None, s.ood, &centers, seed)?,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::builtin_task;

    #[test]
    fn mnist_half_split_sizes_and_labels() {
        let spec = builtin_task("mnist_half").unwrap();
        let d = generate_dataset(&spec, 0).unwrap();
        assert_eq!(
            (d.train.len(), d.val.len(), d.test.len(), d.ood.len()),
            (2940, 840, 420, 1080)
        );
        let k = spec.knowledge_expr().unwrap();
        for s in [&d.train, &d.ood] {
            for (g, &y) in s.g.iter().zip(&s.y) {
                assert_eq!(k.label_index(g).unwrap(), y);
            }
        }
        assert!(d.ood.g.iter().all(|g| !spec.support.contains(g)));
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = builtin_task("traffic_mini").unwrap();
        assert_eq!(generate_dataset(&spec, 3).unwrap(), generate_dataset(&spec, 3).unwrap());
        assert_ne!(
            generate_dataset(&spec, 3).unwrap().train.x,
            generate_dataset(&spec, 4).unwrap().train.x
        );
    }

    #[test]
    fn zero_noise_reproduces_centers() {
        let mut spec = builtin_task("mnist_half").unwrap();
        spec.renderer.sigma = 0.0;
        spec.splits.train = 5;
        let d = generate_dataset(&spec, 0).unwrap();
        let dim = spec.renderer.dim;
        for (i, g) in d.train.g.iter().enumerate() {
            assert_eq!(&d.train.x.row(i)[..dim], d.centers.row(g[0]));
            assert_eq!(&d.train.x.row(i)[dim..], d.centers.row(g[1]));
        }
    }

    #[test]
    fn large_noise_fails_the_decoding_check() {
        let mut spec = builtin_task("mnist_half").unwrap();
        spec.renderer.sigma = 2.0;
        assert!(matches!(generate_dataset(&spec, 0), Err(TaskError::A1 { .. })));
    }

    #[test]
    fn csv_has_one_row_per_example() {
        let mut spec = builtin_task("traffic_mini").unwrap();
        spec.splits = crate::tasks::SplitSizes {
            train: 3,
            val: 1,
            test: 1,
            ood: 2,
        };
        let d = generate_dataset(&spec, 0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&spec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines[0].starts_with("split,x0,"));
        assert!(lines[0].ends_with("g_grn,g_red,g_ped,stop,go,consistent"));
    }
}
