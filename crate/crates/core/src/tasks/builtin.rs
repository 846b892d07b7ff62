use std::collections::BTreeSet;

use rand::Rng as _;

use super::{OodRule, RendererConfig, SplitSizes, TaskError, TaskSpec, SCHEMA_VERSION};
use crate::knowledge::{parse_knowledge, ConceptSchema, ObjectSlot, StructureDecl, Variable};
use crate::seed;

pub const BUILTIN_TASKS: [&str; 4] = ["mnist_half", "mnist_even_odd", "kandinsky_mini", "traffic_mini"];

pub fn builtin_task(name: &str) -> Result<TaskSpec, TaskError> {
    match name {
        "mnist_half" => Ok(mnist_half()),
        "mnist_even_odd" => Ok(mnist_even_odd()),
        "kandinsky_mini" => kandinsky_mini(),
        "traffic_mini" => Ok(traffic_mini()),
        other => Err(TaskError::Unknown(other.to_string())),
    }
}

fn var(name: &str, size: usize) -> Variable {
    Variable {
        name: name.into(),
        size,
    }
}

fn two_digits(size: usize) -> ConceptSchema {
    ConceptSchema::new(
        vec![var("d1", size), var("d2", size)],
        Some(
            ["d1", "d2"]
                .iter()
                .map(|d| ObjectSlot {
                    name: d.to_string(),
                    variables: vec![d.to_string()],
                })
                .collect(),
        ),
        Some(vec!["digit".into()]),
    )
    .expect("digit schema is valid")
}

fn mnist_half() -> TaskSpec {
    TaskSpec {
        schema_version: SCHEMA_VERSION,
        name: "mnist_half".into(),
        schema: two_digits(5),
        knowledge: "y := d1 + d2;\n".into(),
        structure: StructureDecl::Additive,
        support: vec![vec![0, 0], vec![0, 1], vec![2, 3], vec![2, 4]],
        prior: None,
        ood: OodRule::Complement,
        renderer: RendererConfig::default(),
        splits: SplitSizes {
            train: 2940,
            val: 840,
            test: 420,
            ood: 1080,
        },
        rs_codomain: None,
    }
}

/// Even pairs (0,6), (2,8), (4,6), (4,8) and odd pairs (1,5), (3,7), (1,9),
/// (3,9): sums 6, 10, 10, 12 per parity.
fn mnist_even_odd() -> TaskSpec {
    TaskSpec {
        schema_version: SCHEMA_VERSION,
        name: "mnist_even_odd".into(),
        schema: two_digits(10),
        knowledge: "y := d1 + d2;\n".into(),
        structure: StructureDecl::Additive,
        support: vec![
            vec![0, 6],
            vec![2, 8],
            vec![4, 6],
            vec![4, 8],
            vec![1, 5],
            vec![3, 7],
            vec![1, 9],
            vec![3, 9],
        ],
        prior: None,
        ood: OodRule::Complement,
        renderer: RendererConfig::default(),
        splits: SplitSizes {
            train: 6720,
            val: 1920,
            test: 960,
            ood: 5040,
        },
        // Digits are solved for over the non-negative integers that keep
        // every observed sum reachable (0..=12).
        rs_codomain: Some(13),
    }
}

/// One scene with three binary concepts. `consistent` encodes that a green
/// light excludes a stop situation, which the driving knowledge entails via
/// green => forward and stop => not forward.
fn traffic_mini() -> TaskSpec {
    let schema = ConceptSchema::new(
        vec![var("grn", 2), var("red", 2), var("ped", 2)],
        Some(vec![ObjectSlot {
            name: "scene".into(),
            variables: vec!["grn".into(), "red".into(), "ped".into()],
        }]),
        None,
    )
    .expect("traffic schema is valid");
    TaskSpec {
        schema_version: SCHEMA_VERSION,
        name: "traffic_mini".into(),
        schema,
        knowledge: "stop := red or ped;\n\
                    go := grn and not red and not ped;\n\
                    consistent := grn implies not (red or ped);\n"
            .into(),
        structure: StructureDecl::Full,
        support: vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]],
        prior: None,
        ood: OodRule::Complement,
        renderer: RendererConfig::default(),
        splits: SplitSizes {
            train: 600,
            val: 150,
            test: 150,
            ood: 150,
        },
        rs_codomain: None,
    }
}

const KANDINSKY_SUPPORT: usize = 400;

/// Three figures of three objects; each object has a shape (square, circle,
/// triangle) and a color (red, yellow, blue). The label holds when every two
/// figures share their color pattern or their shape pattern.
fn kandinsky_mini() -> Result<TaskSpec, TaskError> {
    let mut vars = Vec::new();
    let mut objects = Vec::new();
    let mut figures = Vec::new();
    for f in 0..3 {
        let mut fig = Vec::new();
        for o in 0..3 {
            let (s, c) = (format!("shape_{f}{o}"), format!("color_{f}{o}"));
            vars.push(var(&s, 3));
            vars.push(var(&c, 3));
            objects.push(ObjectSlot {
                name: format!("obj_{f}{o}"),
                variables: vec![s.clone(), c.clone()],
            });
            fig.push(vec![s, c]);
        }
        figures.push(fig);
    }
    let schema = ConceptSchema::new(vars, Some(objects), Some(vec!["shape".into(), "color".into()]))
        .expect("kandinsky schema is valid");

    let shares = |a: usize, b: usize| {
        let mut alts = Vec::new();
        for attr in ["color", "shape"] {
            for pred in ["same", "pair", "all_diff"] {
                let args = |f: usize| {
                    (0..3)
                        .map(|o| format!("{attr}_{f}{o}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                };
                alts.push(format!("({pred}({}) and {pred}({}))", args(a), args(b)));
            }
        }
        format!("({})", alts.join("\n    or "))
    };
    let knowledge = format!(
        "shared_pattern :=\n  {}\n  and {}\n  and {};\n",
        shares(0, 1),
        shares(0, 2),
        shares(1, 2)
    );

    // Balanced positive/negative support drawn by rejection sampling.
    let k = parse_knowledge(&knowledge, &schema)?;
    let mut rng = seed::rng(0, "kandinsky-support");
    let mut pos = BTreeSet::new();
    let mut neg = BTreeSet::new();
    let half = KANDINSKY_SUPPORT / 2;
    while pos.len() < half || neg.len() < half {
        let g: Vec<usize> = (0..18).map(|_| rng.random_range(0..3)).collect();
        let y = k.eval_beta(&g)?;
        if y.0[0] == 1 {
            if pos.len() < half {
                pos.insert(g);
            }
        } else if neg.len() < half {
            neg.insert(g);
        }
    }
    let support: Vec<Vec<usize>> = pos.into_iter().chain(neg).collect();

    Ok(TaskSpec {
        schema_version: SCHEMA_VERSION,
        name: "kandinsky_mini".into(),
        schema,
        knowledge,
        structure: StructureDecl::FigurePatterns { figures },
        support,
        prior: None,
        ood: OodRule::None,
        renderer: RendererConfig::default(),
        splits: SplitSizes {
            train: 1000,
            val: 250,
            test: 250,
            ood: 0,
        },
        rs_codomain: None,
    })
}
