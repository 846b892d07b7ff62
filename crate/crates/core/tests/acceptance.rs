//! One test per acceptance criterion. Each writes a single `PASS`/`FAIL`
//! line straight to stdout (visible without `--nocapture`) and then asserts.

use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bears::active::{active_loop, Strategy};
use bears::bears::{kl_repulsion, train_ensemble, EntropyPenalty, KlRepulsion, Method};
use bears::distribution::ConceptDistribution;
use bears::knowledge::{
    parse_knowledge, Assignments, ConceptSchema, KnowledgeExpr, ObjectSlot, Reasoner, StructureDecl, Variable,
};
use bears::metrics::{
    accuracy, ece, ece_concepts, evaluate, macro_f1, mece, ova_entropy, EvalContext, MetricsReport, Record,
};
use bears::nesy::{ArchConfig, NesyPredictor, PredictorKind};
use bears::nn::{Matrix, Tape, Var};
use bears::presets;
use bears::rs::{
    analyze, count_rs, decompose_table, enumerate_optimal_maps, max_entropy_mixture, ConceptTable,
    DEFAULT_NODE_BUDGET,
};
use bears::tasks::{builtin_task, generate_dataset, SplitName};

fn report(id: u32, ok: bool, detail: String) {
    let line = format!("{} criterion {id:>2}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rand_dist(rng: &mut ChaCha8Rng, n: usize, zeros: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            if zeros && rng.random_bool(0.15) {
                0.0
            } else {
                -rng.random_range(1e-6f64..1.0).ln()
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

// ---------------------------------------------------------------- 1, 2, 5, 6

#[test]
fn criterion_01_mnist_half_maps() {
    let spec = builtin_task("mnist_half").unwrap();
    let k = spec.knowledge_expr().unwrap();
    let t = Instant::now();
    let rep = analyze(&spec.name, &k, &spec.support, spec.prior.as_deref(), spec.rs_codomain, DEFAULT_NODE_BUDGET)
        .unwrap();
    let el = t.elapsed();
    let expected: Vec<Vec<Option<usize>>> = [[0, 1, 2, 3, 4], [0, 1, 3, 2, 3], [0, 1, 4, 1, 2]]
        .iter()
        .map(|m| m.iter().map(|&v| Some(v)).collect())
        .collect();
    let mut got = rep.maps.clone();
    got.sort();
    let ok = rep.total_optima == 3 && rep.rs_count == 2 && got == expected && el < Duration::from_secs(1);
    report(
        1,
        ok,
        format!(
            "mnist_half optima {} (want 3), shortcuts {} (want 2), maps {:?}, {:.3}s (< 1s)",
            rep.total_optima,
            rep.rs_count,
            got,
            secs(el)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_02_mnist_even_odd_optima() {
    let spec = builtin_task("mnist_even_odd").unwrap();
    let k = spec.knowledge_expr().unwrap();
    let t = Instant::now();
    let set = enumerate_optimal_maps(&k, &spec.support, spec.rs_codomain, DEFAULT_NODE_BUDGET).unwrap();
    let (total, rs) = count_rs(&set);
    let el = t.elapsed();
    let ok = total == 49 && el < Duration::from_secs(10);
    report(
        2,
        ok,
        format!("mnist_even_odd optima {total} (want 49), shortcuts {rs}, {:.3}s (< 10s)", secs(el)),
    );
    assert!(ok);
}

#[test]
fn criterion_05_max_entropy_bound() {
    let spec = builtin_task("mnist_half").unwrap();
    let k = spec.knowledge_expr().unwrap();
    let t = Instant::now();
    let set = enumerate_optimal_maps(&k, &spec.support, None, DEFAULT_NODE_BUDGET).unwrap();
    let mix = max_entropy_mixture(&set, spec.prior.as_deref()).unwrap();
    let el = t.elapsed();
    let log3 = 3f64.ln();
    let pv = |v: usize| mix.per_value[&v];
    let ok = [2, 3, 4].iter().all(|&v| (pv(v) - log3).abs() <= 1e-6)
        && pv(0) == 0.0
        && pv(1) == 0.0
        && el < Duration::from_secs(1);
    report(
        5,
        ok,
        format!(
            "per-value entropy {:?} (2,3,4 -> log 3 = {log3:.6} +- 1e-6; 0,1 -> 0), {:.3}s",
            mix.per_value,
            secs(el)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_decomposition_oracle() {
    let spec = builtin_task("mnist_half").unwrap();
    let k = spec.knowledge_expr().unwrap();
    let set = enumerate_optimal_maps(&k, &spec.support, None, DEFAULT_NODE_BUDGET).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_w, mut worst_r) = (0f64, 0f64);
    for _ in 0..100 {
        let omega = rand_dist(&mut rng, set.maps.len(), true);
        let table = ConceptTable::from_mixture(&set, &omega);
        let d = decompose_table(&table, &set).unwrap();
        for (a, b) in d.omega.iter().zip(&omega) {
            worst_w = worst_w.max((a - b).abs());
        }
        worst_r = worst_r.max(d.residual);
    }
    let ok = worst_w <= 1e-5 && worst_r <= 1e-6;
    report(
        6,
        ok,
        format!("100 random mixtures: max |omega error| {worst_w:.2e} (<= 1e-5), max residual {worst_r:.2e} (<= 1e-6)"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 7, 8, 9

#[test]
fn criterion_07_repulsion_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut lo, mut hi) = (0f64, f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let t = rng.random_range(2..=8usize);
        let sizes: Vec<usize> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(2..=6)).collect();
        let dist = |rng: &mut ChaCha8Rng| {
            ConceptDistribution::new(sizes.iter().map(|&n| rand_dist(rng, n, true)).collect())
        };
        let p = dist(&mut rng);
        let priors: Vec<ConceptDistribution> = (0..t - 1).map(|_| dist(&mut rng)).collect();
        let got = kl_repulsion(&p, &priors, t).unwrap();
        // 1 - KL(p || (p + (t-1) p_rest) / t) / log t, per variable
        let direct: f64 = sizes
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let kl: f64 = (0..n)
                    .map(|c| {
                        let pc = p.factors[j][c];
                        if pc == 0.0 {
                            return 0.0;
                        }
                        let rest = priors.iter().map(|q| q.factors[j][c]).sum::<f64>() / (t - 1) as f64;
                        let m = (pc + (t - 1) as f64 * rest) / t as f64;
                        pc * (pc / m).ln()
                    })
                    .sum();
                1.0 - kl / (t as f64).ln()
            })
            .sum::<f64>()
            / sizes.len() as f64;
        worst = worst.max((got - direct).abs());
        lo = lo.min(got);
        hi = hi.max(got);
    }
    let ok = worst < 1e-9 && lo >= 0.0 && hi <= 1.0;
    report(
        7,
        ok,
        format!("10000 instances: range [{lo:.4}, {hi:.4}] within [0,1], max deviation from closed form {worst:.2e} (< 1e-9)"),
    );
    assert!(ok);
}

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// ‖g − fd‖ / (‖g‖ + ‖fd‖).
fn rel_error(g: &[f64], fd: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut g.iter().zip(fd).map(|(a, b)| a - b));
    let scale = norm(&mut g.iter().copied()) + norm(&mut fd.iter().copied());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

const H: f64 = 1e-5;

/// Tape gradient of a scalar expression against central differences.
fn tape_check(inputs: &[Matrix], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let eval = |ins: &[Matrix]| {
        let mut t = Tape::new();
        let vs: Vec<Var> = ins.iter().map(|m| t.leaf(m.clone())).collect();
        let o = f(&mut t, &vs);
        t.value(o).data[0]
    };
    let (mut g, mut fd) = (Vec::new(), Vec::new());
    for (k, m) in inputs.iter().enumerate() {
        let gk = grads.get(vars[k]).cloned().unwrap_or(Matrix::zeros(m.rows, m.cols));
        for i in 0..m.data.len() {
            let mut up = inputs.to_vec();
            up[k].data[i] += H;
            let mut dn = inputs.to_vec();
            dn[k].data[i] -= H;
            fd.push((eval(&up) - eval(&dn)) / (2.0 * H));
            g.push(gk.data[i]);
        }
    }
    rel_error(&g, &fd)
}

/// Predictor loss gradient (encoder then head blocks) against central
/// differences of `loss`.
fn predictor_check(
    p: &mut NesyPredictor,
    x: &Matrix,
    y: &[usize],
    loss: impl Fn(&NesyPredictor) -> f64,
) -> f64 {
    let (_, blocks) = p.loss_and_grads(x, y, 1.0).unwrap();
    let g: Vec<f64> = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
    let mut fd = Vec::new();
    let n_enc = p.encoder().params().len();
    let n_head = p.head().map_or(0, |h| h.params().len());
    for b in 0..n_enc + n_head {
        let len = if b < n_enc {
            p.encoder().params()[b].data.len()
        } else {
            p.head().unwrap().params()[b - n_enc].data.len()
        };
        for i in 0..len {
            let bump = |p: &mut NesyPredictor, d: f64| {
                if b < n_enc {
                    p.encoder_mut().params_mut()[b].data[i] += d;
                } else {
                    p.head_mut().unwrap().params_mut()[b - n_enc].data[i] += d;
                }
            };
            bump(p, H);
            let up = loss(p);
            bump(p, -2.0 * H);
            let dn = loss(p);
            bump(p, H);
            fd.push((up - dn) / (2.0 * H));
        }
    }
    assert_eq!(g.len(), fd.len());
    rel_error(&g, &fd)
}

fn small_arch() -> ArchConfig {
    ArchConfig {
        object_input: 4,
        hidden: 6,
        dropout: 0.0,
        head_hidden: 5,
    }
}

#[test]
fn criterion_08_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut errors = Vec::new();
    // composite tape expressions
    for i in 0..40 {
        let x = rand_matrix(&mut rng, 3, 4);
        let w = rand_matrix(&mut rng, 4, 5);
        let b = rand_matrix(&mut rng, 1, 5);
        let c = rand_matrix(&mut rng, 3, 5);
        let e = tape_check(&[x, w, b], |t, v| {
            let h = t.matmul(v[0], v[1]);
            let h = t.add_bias(h, v[2]);
            let h = match i % 4 {
                0 => t.relu(h),
                1 => {
                    let s = t.softmax_groups(h, &[2, 3]);
                    t.log(s)
                }
                2 => {
                    let s = t.softmax_groups(h, &[5]);
                    let s = t.clamp_min(s, 1e-12);
                    let l = t.log(s);
                    t.mul_const(l, c.clone())
                }
                _ => {
                    let r = t.relu(h);
                    let r2 = t.mul(r, h);
                    let s = t.scale(r2, 0.7);
                    t.add(s, h)
                }
            };
            if i % 2 == 0 {
                t.mean(h)
            } else {
                t.sum(h)
            }
        });
        errors.push(("tape", e));
    }
    // bears terms through a softmax
    let layout = vec![2, 3];
    for i in 0..15 {
        let logits = rand_matrix(&mut rng, 4, 5);
        let rest_rows: Vec<f64> = (0..4)
            .flat_map(|_| {
                let mut r = rand_dist(&mut rng, 2, false);
                r.extend(rand_dist(&mut rng, 3, false));
                r
            })
            .collect();
        let rest = Matrix::from_vec(4, 5, rest_rows);
        let t_idx = 2 + i % 4;
        let lay = layout.clone();
        let e = tape_check(&[logits], |t, v| {
            let p = t.softmax_groups(v[0], &lay);
            let kl = t.custom(
                &[p],
                Box::new(KlRepulsion {
                    rest: rest.clone(),
                    layout: lay.clone(),
                    t: t_idx,
                }),
            );
            let ent = t.custom(
                &[p],
                Box::new(EntropyPenalty {
                    layout: lay.clone(),
                    objects: 2,
                }),
            );
            let ent = t.scale(ent, 0.3);
            t.add(kl, ent)
        });
        errors.push(("repulsion+entropy", e));
    }
    // DPL likelihood through the reasoning layer on a two-digit schema
    let spec = builtin_task("mnist_half").unwrap();
    let k = spec.knowledge_expr().unwrap();
    let reasoner = Arc::new(spec.reasoner().unwrap());
    let rows = 3;
    for i in 0..30 {
        let mut p = NesyPredictor::new(PredictorKind::Dpl, reasoner.clone(), &small_arch(), 100 + i).unwrap();
        let x = rand_matrix(&mut rng, rows, 8);
        let y: Vec<usize> = (0..rows)
            .map(|_| k.label_index(&[rng.random_range(0..5), rng.random_range(0..5)]).unwrap())
            .collect();
        let e = predictor_check(&mut p, &x, &y, |p| p.dpl_nll(&x, &y).unwrap());
        errors.push(("dpl_nll", e));
    }
    // SL: head cross-entropy plus the semantic term
    for i in 0..15 {
        let mut p = NesyPredictor::new(PredictorKind::Sl, reasoner.clone(), &small_arch(), 200 + i).unwrap();
        let x = rand_matrix(&mut rng, rows, 8);
        let y: Vec<usize> = (0..rows)
            .map(|_| k.label_index(&[rng.random_range(0..5), rng.random_range(0..5)]).unwrap())
            .collect();
        let e = predictor_check(&mut p, &x, &y, |p| p.loss_and_grads(&x, &y, 1.0).unwrap().0);
        errors.push(("sl", e));
    }
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let worst_kind = errors.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let ok = errors.len() == 100 && worst < 1e-4;
    report(
        8,
        ok,
        format!(
            "{} losses vs central differences (h = 1e-5): max relative error {worst:.2e} ({worst_kind}) (< 1e-4)",
            errors.len()
        ),
    );
    assert!(ok);
}

fn var(name: &str, size: usize) -> Variable {
    Variable {
        name: name.into(),
        size,
    }
}

fn naive_label_probs(k: &KnowledgeExpr, factors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; k.label_space().size()];
    for c in Assignments::new(&k.schema().sizes()) {
        let y = k.label_index(&c).unwrap();
        out[y] += c.iter().enumerate().map(|(j, &v)| factors[j][v]).product::<f64>();
    }
    out
}

/// Two figures of three single-attribute objects.
fn small_figures() -> Reasoner {
    let mut vars = Vec::new();
    let mut objects = Vec::new();
    let mut figures = Vec::new();
    for f in 0..2 {
        let mut fig = Vec::new();
        for o in 0..3 {
            let s = format!("s{f}{o}");
            vars.push(var(&s, 3));
            objects.push(ObjectSlot {
                name: format!("obj{f}{o}"),
                variables: vec![s.clone()],
            });
            fig.push(vec![s]);
        }
        figures.push(fig);
    }
    let schema = ConceptSchema::new(vars, Some(objects), Some(vec!["shape".into()])).unwrap();
    let alts: Vec<String> = ["same", "pair", "all_diff"]
        .iter()
        .map(|p| format!("({p}(s00, s01, s02) and {p}(s10, s11, s12))"))
        .collect();
    let k = parse_knowledge(&format!("y := {};", alts.join(" or ")), &schema).unwrap();
    Reasoner::new(k, &StructureDecl::FigurePatterns { figures }).unwrap()
}

#[test]
fn criterion_09_reasoning_oracle() {
    let mut reasoners = Vec::new();
    for name in ["mnist_half", "mnist_even_odd", "traffic_mini"] {
        reasoners.push(builtin_task(name).unwrap().reasoner().unwrap());
    }
    let s = ConceptSchema::flat(vec![var("a", 3), var("b", 4), var("c", 2)]).unwrap();
    let k = parse_knowledge("y := a + b + c;", &s).unwrap();
    reasoners.push(Reasoner::new(k, &StructureDecl::Auto).unwrap());
    reasoners.push(small_figures());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0f64;
    let mut engines = Vec::new();
    for i in 0..1000 {
        let r = &reasoners[i % reasoners.len()];
        let sizes = r.knowledge().schema().sizes();
        assert!(r.knowledge().schema().total_assignments() <= 10_000);
        let factors: Vec<Vec<f64>> = sizes.iter().map(|&n| rand_dist(&mut rng, n, true)).collect();
        let got = r.label_distribution(&ConceptDistribution::new(factors.clone())).unwrap();
        let oracle = naive_label_probs(r.knowledge(), &factors);
        for (a, b) in got.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
        if i < reasoners.len() {
            engines.push(r.engine_name());
        }
    }
    let ok = worst < 1e-9;
    report(
        9,
        ok,
        format!("1000 random factorizations over engines {engines:?}: max |structured - enumeration| {worst:.2e} (< 1e-9)"),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 3, 4

struct MnistRuns {
    dpl: Vec<MetricsReport>,
    bears: Vec<MetricsReport>,
    elapsed: Duration,
}

fn mnist_runs() -> &'static MnistRuns {
    static RUNS: OnceLock<MnistRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t = Instant::now();
        let spec = builtin_task("mnist_half").unwrap();
        let k = spec.knowledge_expr().unwrap();
        let reasoner = Arc::new(spec.reasoner().unwrap());
        let (mut dpl, mut bears) = (Vec::new(), Vec::new());
        for seed in 0..5 {
            let data = generate_dataset(&spec, seed).unwrap();
            for method in [Method::Dpl, Method::Bears] {
                let cfg = presets::ensemble_config(&spec, method, seed);
                let model = train_ensemble(&cfg, reasoner.clone(), &data.train.x, &data.train.y, None, None).unwrap();
                let pred = model.predict(&data.test.x).unwrap();
                let ctx = EvalContext {
                    method: method.as_str(),
                    task: &spec.name,
                    seed,
                    bins: 10,
                };
                let rep = evaluate(&ctx, &spec.schema, k.label_space(), &pred, &data.test).unwrap();
                if method == Method::Dpl { &mut dpl } else { &mut bears }.push(rep);
            }
        }
        MnistRuns {
            dpl,
            bears,
            elapsed: t.elapsed(),
        }
    })
}

#[test]
fn criterion_03_calibration_deltas() {
    let runs = mnist_runs();
    let col = |r: &[MetricsReport], f: fn(&MetricsReport) -> f64| mean(&r.iter().map(f).collect::<Vec<_>>());
    let (dpl_acc, dpl_ece) = (col(&runs.dpl, |r| r.acc_y), col(&runs.dpl, |r| r.ece_c));
    let (b_acc, b_ece) = (col(&runs.bears, |r| r.acc_y), col(&runs.bears, |r| r.ece_c));
    let ok = dpl_acc >= 0.95
        && dpl_ece >= 0.50
        && b_ece <= dpl_ece - 0.20
        && (b_acc - dpl_acc).abs() <= 0.02
        && runs.elapsed < Duration::from_secs(300);
    report(
        3,
        ok,
        format!(
            "mnist_half, 5 seeds: dpl acc_y {dpl_acc:.3} (>= 0.95) ece_c {dpl_ece:.3} (>= 0.50); \
             bears acc_y {b_acc:.3} (within 0.02) ece_c {b_ece:.3} (<= {:.3}); {:.0}s (< 300s)",
            dpl_ece - 0.20,
            secs(runs.elapsed)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_04_entropy_pattern() {
    let runs = mnist_runs();
    let digit_ova = |reps: &[MetricsReport], d: usize| {
        let name = format!("ova_digit_{d}");
        let v: Vec<f64> = reps
            .iter()
            .map(|r| r.ova.iter().find(|(n, _)| *n == name).expect("ova column").1)
            .collect();
        mean(&v)
    };
    let bears: Vec<f64> = (0..5).map(|d| digit_ova(&runs.bears, d)).collect();
    let dpl: Vec<f64> = (0..5).map(|d| digit_ova(&runs.dpl, d)).collect();
    let min_234 = bears[2..].iter().copied().fold(f64::INFINITY, f64::min);
    let ok = bears[0] < 0.1 && bears[0] < min_234 && dpl.iter().all(|&h| h < 0.1);
    report(
        4,
        ok,
        format!(
            "mean OVA entropy per digit over 5 seeds: bears {:?} (digit 0 < 0.1 and < min(2,3,4) = {min_234:.3}); dpl {:?} (all < 0.1)",
            bears.iter().map(|h| format!("{h:.3}")).collect::<Vec<_>>(),
            dpl.iter().map(|h| format!("{h:.3}")).collect::<Vec<_>>()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_active_learning() {
    let t = Instant::now();
    let spec = builtin_task("kandinsky_mini").unwrap();
    let reasoner = Arc::new(spec.reasoner().unwrap());
    let arms = [
        ("bears+entropy", Method::Bears, Strategy::Entropy),
        ("dpl+entropy", Method::Dpl, Strategy::Entropy),
        ("random", Method::Dpl, Strategy::Random),
    ];
    let mut acc_c = vec![Vec::new(); arms.len()];
    let mut min_acc_y = vec![f64::INFINITY; arms.len()];
    for seed in 0..3 {
        let data = generate_dataset(&spec, seed).unwrap();
        for (a, &(_, method, strategy)) in arms.iter().enumerate() {
            let cfg = presets::ensemble_config(&spec, method, seed);
            let acfg = presets::active_config(&spec, method, strategy);
            assert_eq!((acfg.budget, acfg.batch, acfg.init_count), (50, 10, 10));
            let run = active_loop(&acfg, &cfg, reasoner.clone(), &data).unwrap();
            let last = run.curve.last().unwrap();
            assert_eq!(last.queries, 50);
            acc_c[a].push(last.acc_c);
            min_acc_y[a] = min_acc_y[a].min(last.acc_y);
        }
    }
    let el = t.elapsed();
    let means: Vec<f64> = acc_c.iter().map(|v| mean(v)).collect();
    let margin = means[0] - means[1].max(means[2]);
    let ok = margin >= 0.10 && min_acc_y.iter().all(|&a| a >= 0.90) && el < Duration::from_secs(900);
    let arms_txt: Vec<String> = arms
        .iter()
        .enumerate()
        .map(|(a, (name, _, _))| format!("{name} acc_c {:.3} min acc_y {:.3}", means[a], min_acc_y[a]))
        .collect();
    report(
        10,
        ok,
        format!(
            "kandinsky_mini, 3 seeds, budget 50: {}; margin {margin:.3} (>= 0.10); {:.0}s (< 900s)",
            arms_txt.join(", "),
            secs(el)
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 11

#[test]
fn criterion_11_traffic_qualitative() {
    let spec = builtin_task("traffic_mini").unwrap();
    let reasoner = Arc::new(spec.reasoner().unwrap());
    let (grn, red, ped) = (0, 1, 2);
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let data = generate_dataset(&spec, seed).unwrap();
        let test = data.split(SplitName::Test);
        let train = |m: Method| {
            let cfg = presets::ensemble_config(&spec, m, seed);
            let model = train_ensemble(&cfg, reasoner.clone(), &data.train.x, &data.train.y, None, None).unwrap();
            model.predict(&test.x).unwrap()
        };
        let dpl = train(Method::Dpl);
        let bears = train(Method::Bears);
        // inputs where DPL is confidently wrong about the joint (red, ped)
        let flagged: Vec<usize> = (0..test.len())
            .filter(|&i| {
                let f = &dpl.concepts[i].factors;
                let (best, conf) = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|&(a, b)| ((a, b), f[red][a] * f[ped][b]))
                    .max_by(|x, y| x.1.total_cmp(&y.1))
                    .unwrap();
                conf > 0.9 && best != (test.g[i][red], test.g[i][ped])
            })
            .collect();
        let in_band = |p: f64| (0.3..=0.7).contains(&p);
        let good = flagged
            .iter()
            .filter(|&&i| {
                let f = &bears.concepts[i].factors;
                in_band(f[red][1]) && in_band(f[ped][1]) && f[grn].iter().copied().fold(0.0, f64::max) > 0.9
            })
            .count();
        let seed_ok = !flagged.is_empty() && good == flagged.len();
        ok &= seed_ok;
        let mean_of = |v: usize| {
            if flagged.is_empty() {
                f64::NAN
            } else {
                flagged.iter().map(|&i| bears.concepts[i].factors[v][1]).sum::<f64>() / flagged.len() as f64
            }
        };
        lines.push(format!(
            "seed {seed}: {} confidently wrong dpl inputs, bears in band on {good} (mean p(red) {:.2}, p(ped) {:.2}, p(grn) {:.2})",
            flagged.len(),
            mean_of(red),
            mean_of(ped),
            mean_of(grn)
        ));
    }
    report(11, ok, format!("traffic_mini: {}", lines.join("; ")));
    assert!(ok);
}

// ---------------------------------------------------------------- 12

fn binary(conf: f64, correct: bool) -> Record {
    // predicted class is 0
    Record::new(vec![conf, 1.0 - conf], if correct { 0 } else { 1 })
}

#[test]
fn criterion_12_metric_fixtures() {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;

    let perfect: Vec<Record> = (0..4).map(|_| Record::new(vec![0.0, 1.0, 0.0], 1)).collect();
    checks.push(("ece all confident and correct", ece(&perfect, 10).unwrap() == 0.0));
    let single: Vec<Record> = [true, true, false, false].iter().map(|&c| binary(0.8, c)).collect();
    checks.push(("ece single bin M=1", close(ece(&single, 1).unwrap(), 0.3)));
    checks.push(("ece single bin M=10", close(ece(&single, 10).unwrap(), 0.3)));
    let two = vec![
        binary(0.9, true),
        binary(0.9, true),
        Record::new(vec![0.4, 0.3, 0.3], 1),
        Record::new(vec![0.4, 0.3, 0.3], 2),
    ];
    checks.push(("ece M=2 hand case", close(ece(&two, 2).unwrap(), 0.25)));
    checks.push(("ece empty is an error", ece(&[], 10).is_err()));
    checks.push(("ece zero bins is an error", ece(&single, 0).is_err()));

    checks.push((
        "ece_concepts all correct",
        ece_concepts(&[perfect.clone(), perfect.clone()], 10).unwrap() == 0.0,
    ));
    checks.push((
        "ece_concepts pooled single bin",
        close(ece_concepts(&[single.clone(), single.clone()], 10).unwrap(), 0.3),
    ));
    let uniform: Vec<Record> = (0..5).map(|t| Record::new(vec![0.2; 5], t)).collect();
    checks.push((
        "ece_concepts uniform 5-way",
        close(ece_concepts(&[uniform.clone(), uniform], 10).unwrap(), 0.0),
    ));

    checks.push(("mece [0.3]", close(mece(&[0.3]).unwrap(), 0.3)));
    checks.push(("mece [0.2, 0.4]", close(mece(&[0.2, 0.4]).unwrap(), 0.3)));
    checks.push(("mece zeros", mece(&[0.0, 0.0, 0.0]).unwrap() == 0.0));
    checks.push(("mece empty is an error", mece(&[]).is_err()));

    checks.push(("ova p=0.5", close(ova_entropy(&[0.5; 7]).unwrap(), 2f64.ln())));
    checks.push(("ova p in {0,1}", ova_entropy(&[0.0, 1.0, 1.0, 0.0]).unwrap() < 1e-9));
    let h09 = ova_entropy(&[0.9; 3]).unwrap();
    checks.push((
        "ova p=0.9",
        close(h09, -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln())) && (h09 - 0.3251).abs() < 5e-5,
    ));

    let exact: Vec<Record> = (0..6).map(|i| Record::new(one_hot(i % 3, 3), i % 3)).collect();
    checks.push(("f1 perfect", close(macro_f1(&exact, 3).unwrap(), 1.0)));
    let two_class: Vec<Record> = (0..4).map(|i| Record::new(one_hot(i % 2, 3), i % 2)).collect();
    checks.push(("f1 absent class scores 0", close(macro_f1(&two_class, 3).unwrap(), 2.0 / 3.0)));
    let mixed = vec![
        Record::new(one_hot(0, 2), 0),
        Record::new(one_hot(0, 2), 1),
        Record::new(one_hot(1, 2), 0),
        Record::new(one_hot(1, 2), 1),
    ];
    checks.push(("f1 binary TP=FP=FN=TN=1", close(macro_f1(&mixed, 2).unwrap(), 0.5)));
    checks.push(("f1 empty is an error", macro_f1(&[], 2).is_err()));

    checks.push(("accuracy all correct", accuracy(&exact).unwrap() == 1.0));
    let wrong: Vec<Record> = (0..4).map(|_| Record::new(one_hot(0, 2), 1)).collect();
    checks.push(("accuracy none correct", accuracy(&wrong).unwrap() == 0.0));
    let three_of_four = vec![
        Record::new(one_hot(0, 2), 0),
        Record::new(one_hot(1, 2), 1),
        Record::new(one_hot(1, 2), 1),
        Record::new(one_hot(1, 2), 0),
    ];
    checks.push(("accuracy 3 of 4", accuracy(&three_of_four).unwrap() == 0.75));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let ok = failed.is_empty();
    report(
        12,
        ok,
        format!("{} metric fixtures, {} failed {:?}", checks.len(), failed.len(), failed),
    );
    assert!(ok);
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
