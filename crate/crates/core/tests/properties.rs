use bears::bears::{entropy_penalty, kl_repulsion};
use bears::distribution::ConceptDistribution;
use bears::metrics::{accuracy, ece, macro_f1, ova_entropy, Record};
use proptest::prelude::*;

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn dist(sizes: &[usize]) -> impl Strategy<Value = ConceptDistribution> {
    sizes
        .iter()
        .map(|&n| proptest::collection::vec(0.001f64..1.0, n).prop_map(normalize))
        .collect::<Vec<_>>()
        .prop_map(ConceptDistribution::new)
}

fn records() -> impl Strategy<Value = Vec<Record>> {
    proptest::collection::vec(
        (proptest::collection::vec(0.001f64..1.0, 3).prop_map(normalize), 0usize..3),
        1..40,
    )
    .prop_map(|v| v.into_iter().map(|(p, t)| Record::new(p, t)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ece_is_order_invariant_and_bounded(mut r in records(), m in 1usize..20) {
        let a = ece(&r, m).unwrap();
        r.reverse();
        let b = ece(&r, m).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn ece_ignores_empty_bins(cells in proptest::collection::vec((0usize..3, any::<bool>()), 1..30)) {
        // confidences on the boundaries of the 4-bin grid, so finer aligned
        // grids only add empty bins
        let r: Vec<Record> = cells
            .iter()
            .map(|&(k, correct)| {
                let c = [0.5, 0.75, 1.0][k];
                Record::new(vec![c, 1.0 - c], usize::from(!correct))
            })
            .collect();
        let coarse = ece(&r, 4).unwrap();
        for fine in [8, 12, 40] {
            prop_assert!((ece(&r, fine).unwrap() - coarse).abs() < 1e-12);
        }
    }

    #[test]
    fn ova_entropy_is_symmetric(p in proptest::collection::vec(0.0f64..=1.0, 1..30)) {
        let q: Vec<f64> = p.iter().map(|x| 1.0 - x).collect();
        let (a, b) = (ova_entropy(&p).unwrap(), ova_entropy(&q).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= 0.0 && a <= 2f64.ln() + 1e-12);
    }

    #[test]
    fn repulsion_is_a_unit_interval_score(
        p in dist(&[3, 2]),
        priors in proptest::collection::vec(dist(&[3, 2]), 1..5),
    ) {
        let t = priors.len() + 1;
        let v = kl_repulsion(&p, &priors, t).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        // copying the new member scores the maximum
        let same = kl_repulsion(&p, &vec![p.clone(); t - 1], t).unwrap();
        prop_assert!(v <= same + 1e-12);
    }

    #[test]
    fn entropy_penalty_in_unit_interval(p in dist(&[4, 2, 3])) {
        let e = entropy_penalty(&p);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&e));
    }
}

#[test]
fn repulsion_from_identical_members_is_one() {
    // p log(1 + (t-1)) / log t summed over p = 1
    let p = ConceptDistribution::new(vec![vec![0.2, 0.3, 0.5]]);
    for t in 2..6 {
        let v = kl_repulsion(&p, &vec![p.clone(); t - 1], t).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn disjoint_members_give_zero_repulsion() {
    let p = ConceptDistribution::new(vec![vec![1.0, 0.0]]);
    let q = ConceptDistribution::new(vec![vec![0.0, 1.0]]);
    assert!(kl_repulsion(&p, &[q], 2).unwrap().abs() < 1e-12);
}

#[test]
fn entropy_penalty_extremes() {
    let uniform = ConceptDistribution::new(vec![vec![0.25; 4], vec![0.5; 2]]);
    assert!(entropy_penalty(&uniform).abs() < 1e-12);
    let point = ConceptDistribution::new(vec![vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 0.0]]);
    assert!((entropy_penalty(&point) - 1.0).abs() < 1e-12);
}

#[test]
fn macro_f1_equals_accuracy_on_balanced_symmetric_errors() {
    let hot = |i: usize| if i == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    // 10 per class, 3 mistakes each way
    let mut r = Vec::new();
    for truth in 0..2 {
        for i in 0..10 {
            let pred = if i < 3 { 1 - truth } else { truth };
            r.push(Record::new(hot(pred), truth));
        }
    }
    let f1 = macro_f1(&r, 2).unwrap();
    assert!((f1 - accuracy(&r).unwrap()).abs() < 1e-12);
    assert!((f1 - 0.7).abs() < 1e-12);
}

#[test]
fn ece_is_zero_when_confidence_matches_accuracy() {
    // bin at 0.75 with 3 of 4 correct, bin at 0.55 with 11 of 20 correct
    let mut r = Vec::new();
    for i in 0..4 {
        r.push(Record::new(vec![0.75, 0.25], usize::from(i == 0)));
    }
    for i in 0..20 {
        r.push(Record::new(vec![0.55, 0.45], usize::from(i >= 11)));
    }
    assert!(ece(&r, 10).unwrap() < 1e-12);
}
