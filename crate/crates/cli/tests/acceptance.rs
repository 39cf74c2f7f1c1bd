//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. A substring argument restricts the run, e.g.
//! `cargo test -p ct-cli --test acceptance -- binning`.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ct_cli::commands;
use ct_cli::config::{PipelineConfig, Split};
use ct_core::ast::{Ast, AstRecord, NodeSpec};
use ct_core::corpus::vocab::NODE_TYPE_SPECIALS;
use ct_core::corpus::{build_vocab, Language, Vocabulary};
use ct_core::metrics::{label_overlap, micro_f1, sample_f1, MatchMode};
use ct_core::relations::{
    ancestor_distance, bin_relations, bin_values, ppr_distance, shortest_paths, sibling_distance, BinnedRelation,
    BinnedRelations, RelMatrix, Relation, RelationSet, DEFAULT_ALPHA, DEFAULT_GROWTH, UNREACHABLE,
};
use ct_core::shard::{Snippet, Stage2Options};
use ct_core::snippet::{stage1_from_ast_record, stage1_from_source, SourceRecord};
use ct_model::encoding::{encode_distance, verify_decomposition};
use ct_model::model::Mode;
use ct_model::tape::{softmax_rows, Mat};
use ct_model::{Model, ModelConfig};
use nalgebra::DMatrix;
use ndarray::s;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Check); 10] = [
        ("distance oracles", distance_oracles),
        ("five-hop fixture", five_hop_fixture),
        ("binning", binning),
        ("attention identities", attention_identities),
        ("gradients", gradients),
        ("ablation invariances", ablation_invariances),
        ("overfit demo corpus", overfit),
        ("pointer oov", pointer_oov),
        ("metric oracle", metric_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({secs:.1} s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1} s) {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- trees

fn random_tree(rng: &mut impl Rng, max_nodes: usize) -> Ast {
    let n = rng.gen_range(1..=max_nodes);
    let parents: Vec<Option<usize>> = (0..n).map(|i| if i == 0 { None } else { Some(rng.gen_range(0..i)) }).collect();
    let children: Vec<Vec<usize>> = (0..n).map(|p| (0..n).filter(|&c| parents[c] == Some(p)).collect()).collect();
    let mut ranges = vec![(0usize, 0usize); n];
    ranges[0] = (0, 10_000);
    for p in 0..n {
        let (start, end) = ranges[p];
        let kids = &children[p];
        if kids.is_empty() {
            continue;
        }
        let slot = (end - start) / kids.len();
        for (i, &c) in kids.iter().enumerate() {
            let s0 = start + i * slot;
            ranges[c] = (s0, s0 + slot);
        }
    }
    let specs = (0..n)
        .map(|i| NodeSpec {
            id: i,
            node_type: format!("t{}", i % 7),
            start: ranges[i].0,
            end: ranges[i].1,
            children: children[i].clone(),
        })
        .collect();
    Ast::from_parts(specs, 0, None).expect("generated tree is valid")
}

fn neighbours(t: &Ast, a: usize) -> Vec<usize> {
    let node = t.node(a);
    node.parent.into_iter().chain(node.children.iter().copied()).collect()
}

fn bfs(t: &Ast, src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; t.len()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(a) = queue.pop_front() {
        for b in neighbours(t, a) {
            if dist[b] == usize::MAX {
                dist[b] = dist[a] + 1;
                queue.push_back(b);
            }
        }
    }
    dist
}

/// `-ln` of the personalized PageRank matrix from a dense solve of
/// `(I - (1 - alpha) P) X = alpha I`, clamped at 5.
fn ppr_oracle(t: &Ast, alpha: f64) -> DMatrix<f64> {
    let n = t.len();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        let nb = neighbours(t, a);
        if nb.is_empty() {
            p[(a, a)] = 1.0;
        }
        for &b in &nb {
            p[(a, b)] = 1.0 / nb.len() as f64;
        }
    }
    let m = DMatrix::<f64>::identity(n, n) - p * (1.0 - alpha);
    let x = m.lu().solve(&(DMatrix::<f64>::identity(n, n) * alpha)).expect("solvable");
    x.map(|v| (-v.ln()).min(5.0))
}

fn distance_oracles() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_ppr: f64 = 0.0;
    let mut pairs = 0usize;
    for tree in 0..200 {
        let t = random_tree(&mut rng, 50);
        let n = t.len();
        let sp = shortest_paths(&t);
        let ppr = ppr_distance(&t, DEFAULT_ALPHA);
        let anc = ancestor_distance(&t);
        let sib = sibling_distance(&t);
        let oracle = ppr_oracle(&t, DEFAULT_ALPHA);
        for a in 0..n {
            let d = bfs(&t, a);
            for b in 0..n {
                ensure!(sp.get(a, b) == d[b] as f64, "tree {tree}: sp({a},{b}) = {} vs bfs {}", sp.get(a, b), d[b]);
                worst_ppr = worst_ppr.max((ppr.get(a, b) - oracle[(a, b)]).abs());
                for (name, m) in [("ancestor", &anc), ("sibling", &sib)] {
                    let (x, y) = (m.get(a, b), m.get(b, a));
                    ensure!((x == UNREACHABLE) == (y == UNREACHABLE), "tree {tree}: {name} defined one way only");
                    if x != UNREACHABLE {
                        pairs += 1;
                        ensure!(x == -y, "tree {tree}: {name}({a},{b}) = {x} but reverse {y}");
                    }
                }
            }
        }
    }
    ensure!(worst_ppr <= 1e-6, "ppr deviates by {worst_ppr:e}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("200 trees, ppr max dev {worst_ppr:.1e}, {pairs} antisymmetric pairs"))
}

// ---------------------------------------------------------------- fixture

fn five_hop_fixture() -> Result<String, String> {
    // def get_model():
    //     return model
    let source = "def get_model():\n    return model\n";
    let node = |id, ty: &str, start, end, children: Vec<usize>| NodeSpec {
        id,
        node_type: ty.into(),
        start,
        end,
        children,
    };
    let record = AstRecord {
        id: "five-hops".into(),
        language: "python".into(),
        source: source.into(),
        nodes: vec![
            node(0, "function_definition", 0, 34, vec![1, 2, 3]),
            node(1, "identifier", 4, 13, vec![]),
            node(2, "parameters", 13, 15, vec![]),
            node(3, "block", 21, 33, vec![4]),
            node(4, "return_statement", 21, 33, vec![5]),
            node(5, "expression_list", 28, 33, vec![6]),
            node(6, "identifier", 28, 33, vec![]),
        ],
        root: 0,
    };
    let rec = stage1_from_ast_record(&record, 512).map_err(|r| format!("rejected: {r:?}"))?;
    let ret = rec
        .tokens
        .iter()
        .position(|t| t.text == "model")
        .ok_or("no return-variable token")?;
    let ast = rec.ast().map_err(|e| e.to_string())?;
    let set = RelationSet::compute(&ast, &rec.assignment, DEFAULT_ALPHA);
    let hops = set.get(Relation::ShortestPath).get(rec.name_position, ret);
    ensure!(rec.label == ["get", "model"], "label {:?}", rec.label);
    ensure!(hops == 5.0, "shortest path {hops}");
    let seq = set.get(Relation::Sequence).get(rec.name_position, ret);
    Ok(format!("name token to return variable: {hops} hops, {seq} tokens apart"))
}

// ---------------------------------------------------------------- binning

fn binning() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // lossless
    for case in 0..200 {
        let n = rng.gen_range(1..15);
        let discrete = case % 2 == 0;
        let pool: Vec<f64> = (0..rng.gen_range(1..=20))
            .map(|_| if discrete { f64::from(rng.gen_range(-40..40)) } else { rng.gen_range(0.0..5.0) })
            .collect();
        let m = RelMatrix::from_fn(n, |_, _| pool[rng.gen_range(0..pool.len())]);
        let k = m.values().iter().map(|v| v.to_bits()).collect::<BTreeSet<_>>().len().max(11) + rng.gen_range(0..5);
        let b = bin_values(&m, k, DEFAULT_GROWTH, discrete).map_err(|e| e.to_string())?;
        for (i, v) in m.values().iter().enumerate() {
            ensure!(b.values[b.index[i] as usize] == *v, "case {case}: {v} binned to {}", b.values[b.index[i] as usize]);
        }
    }
    // singletons for small integers even when binning is lossy
    for case in 0..200 {
        let n = rng.gen_range(10..30);
        let m = RelMatrix::from_fn(n, |_, _| f64::from(rng.gen_range(-80..=80)));
        let b = bin_values(&m, 32, DEFAULT_GROWTH, true).map_err(|e| e.to_string())?;
        for r in -4..=4 {
            let v = f64::from(r);
            for (x, &i) in m.values().iter().zip(&b.index) {
                let same_bin = b.values[i as usize] == v;
                ensure!(same_bin == (*x == v), "case {case}: {x} shares the bin of {v}");
            }
        }
    }
    // monotone assignment
    for case in 0..1000 {
        let discrete = case % 2 == 0;
        let n = rng.gen_range(1..30);
        let spread = rng.gen_range(1..300);
        let m = RelMatrix::from_fn(n, |_, _| {
            if discrete {
                if rng.gen_bool(0.05) {
                    UNREACHABLE
                } else {
                    f64::from(rng.gen_range(-spread..=spread))
                }
            } else {
                rng.gen_range(0.0..5.0)
            }
        });
        let b = bin_values(&m, 32, DEFAULT_GROWTH, discrete).map_err(|e| e.to_string())?;
        let mut pairs: Vec<(f64, u8)> = m.values().iter().copied().zip(b.index.iter().copied()).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        ensure!(pairs.windows(2).all(|w| w[0].1 <= w[1].1), "case {case}: bin order breaks value order");
    }
    Ok("200 lossless, 200 singleton and 1000 monotonicity cases".into())
}

// ---------------------------------------------------------------- model helpers

fn tiny_config(subtoken_vocab: usize, node_vocab: usize) -> ModelConfig {
    ModelConfig {
        d: 16,
        d_ff: 32,
        n_layers: 1,
        n_heads: 2,
        dropout: 0.0,
        k: 8,
        d_sub: 4,
        d_kind: 4,
        d_node: 4,
        subtoken_vocab,
        node_vocab,
        n_languages: 1,
        use_pointer: true,
        use_structure: true,
        use_context: true,
    }
}

/// Random snippet over a vocabulary of `vocab` ids (the first 9 are special)
/// with `n_oov` copyable out-of-vocabulary subtokens.
fn synthetic(rng: &mut impl Rng, n: usize, k: usize, vocab: usize, node_vocab: usize, n_oov: usize) -> Snippet {
    let relations = (0..Relation::COUNT)
        .map(|_| {
            let mut values: Vec<f64> = (0..k).map(|_| rng.gen_range(-6.0..6.0)).collect();
            values.sort_by(f64::total_cmp);
            BinnedRelation {
                index: (0..n * n).map(|_| rng.gen_range(0..k) as u8).collect(),
                values,
            }
        })
        .collect();
    let mut subtokens = vec![[6, 0, 0, 0, 0]];
    let mut copy_ids = vec![[6, 0, 0, 0, 0]];
    for _ in 1..n {
        let mut sub = [0u32; 5];
        let mut copy = [0u32; 5];
        for j in 0..rng.gen_range(1..=3) {
            if n_oov > 0 && rng.gen_bool(0.3) {
                sub[j] = 1;
                copy[j] = (vocab + rng.gen_range(0..n_oov)) as u32;
            } else {
                sub[j] = rng.gen_range(9..vocab) as u32;
                copy[j] = sub[j];
            }
        }
        subtokens.push(sub);
        copy_ids.push(copy);
    }
    let label: Vec<u32> = (0..rng.gen_range(1..=3))
        .map(|i| {
            if n_oov > 0 && i == 0 {
                vocab as u32
            } else {
                rng.gen_range(9..vocab) as u32
            }
        })
        .collect();
    Snippet {
        id: "synthetic".into(),
        language: 0,
        subtokens,
        copy_ids,
        kinds: (0..n).map(|_| rng.gen_range(0..10)).collect(),
        node_types: (0..n).map(|_| rng.gen_range(0..node_vocab) as u32).collect(),
        is_leaf: (0..n).map(|i| i == 0 || rng.gen_bool(0.6)).collect(),
        name_position: 0,
        label_text: label.iter().map(|id| format!("t{id}")).collect(),
        label,
        oov: (0..n_oov).map(|i| format!("oov{i}")).collect(),
        relations: BinnedRelations { n, k, relations },
    }
}

fn param(model: &Model, name: &str) -> Mat {
    model.params.get(model.params.id(name).expect("parameter exists")).clone()
}

fn max_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- attention

/// Relative attention scores computed pair by pair from exact relation values.
fn pairwise_scores(model: &Model, x: &Mat, value: &dyn Fn(Relation, usize, usize) -> f64) -> Vec<Mat> {
    let c = &model.config;
    let dk = c.d_k();
    let q = x.dot(&param(model, "enc.0.wq"));
    let k = x.dot(&param(model, "enc.0.wk"));
    let u = param(model, "enc.0.u");
    let v = param(model, "enc.0.v");
    let n = x.nrows();
    (0..c.n_heads)
        .map(|h| {
            let cols = s![.., h * dk..(h + 1) * dk];
            Mat::from_shape_fn((n, n), |(i, j)| {
                let qi = q.slice(s![i, h * dk..(h + 1) * dk]);
                let kj = k.slice(s![j, h * dk..(h + 1) * dk]);
                let mut score = (&qi + &u.slice(cols).row(0)).dot(&kj);
                for r in c.active_relations() {
                    let wr = param(model, &format!("enc.0.wr.{}", r.name()));
                    let phi = ndarray::Array1::from(encode_distance(value(r, i, j), c.d, 10_000.0));
                    score += (&qi + &v.slice(cols).row(0)).dot(&phi.dot(&wr.slice(cols)));
                }
                score / (dk as f64).sqrt()
            })
        })
        .collect()
}

fn attention_identities() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rand_mat = |r, c| Mat::from_shape_simple_fn((r, c), || rng.gen_range(-1.0..1.0));

    let mut worst_factor: f64 = 0.0;
    for _ in 0..50 {
        let e = rand_mat(7, 16);
        let phi = Mat::from_shape_fn((7, 16), |(i, c)| encode_distance(i as f64, 16, 10_000.0)[c]);
        worst_factor = worst_factor.max(verify_decomposition(&e, &phi, &rand_mat(16, 16), &rand_mat(16, 16)));
    }
    ensure!(worst_factor <= 1e-6, "factorization deviates by {worst_factor:e}");

    let rec = stage1_from_source(
        &SourceRecord {
            id: "attn".into(),
            language: Language::Mini,
            source: "fn addPair(a, b) {\n  let c = a + b\n  return c\n}".into(),
        },
        512,
    )
    .map_err(|r| format!("{r:?}"))?;
    let ast = rec.ast().map_err(|e| e.to_string())?;
    let exact = RelationSet::compute(&ast, &rec.assignment, DEFAULT_ALPHA);
    let binned = bin_relations(&exact, 256, DEFAULT_GROWTH).map_err(|e| e.to_string())?;
    let mut config = tiny_config(20, 10);
    config.k = 256;
    let model = Model::new(config, 1).map_err(|e| e.to_string())?;
    let x = rand_mat(exact.n(), 16);
    let got = model.attention_logits(&x, 0, &binned);
    let want = pairwise_scores(&model, &x, &|r, i, j| exact.get(r).get(i, j));
    let worst_bins = got.iter().zip(&want).map(|(g, w)| max_diff(g, w)).fold(0.0, f64::max);
    ensure!(worst_bins <= 1e-6, "binned scores deviate by {worst_bins:e}");

    let mut worst_row: f64 = 0.0;
    for g in &got {
        for row in softmax_rows(&(g * 40.0)).rows() {
            worst_row = worst_row.max((row.sum() - 1.0).abs());
        }
    }
    ensure!(worst_row <= 1e-6, "softmax row sums off by {worst_row:e}");
    Ok(format!(
        "factorization {worst_factor:.1e}, binned vs pairwise {worst_bins:.1e} over {} tokens, row sums {worst_row:.1e}",
        exact.n()
    ))
}

// ---------------------------------------------------------------- gradients

fn gradients() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let snippet = synthetic(&mut rng, 6, 8, 14, 5, 2);
    let mut model = Model::new(tiny_config(14, 5), 11).map_err(|e| e.to_string())?;
    let (_, grads) = model
        .loss_and_grads(&snippet, 0.1, &mut Mode::Eval)
        .map_err(|e| e.to_string())?;
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut covered = Vec::new();
    let ids: Vec<_> = model.params.iter().map(|(id, n, _)| (id, n.to_string())).collect();
    for (id, name) in ids {
        let analytic = grads.get(id).clone();
        if analytic.iter().any(|&g| g != 0.0) {
            covered.push(name.clone());
        }
        let len = analytic.len();
        let entries = if len <= 32 { (0..len).collect() } else { sample(&mut rng, len, 32).into_vec() };
        let cols = analytic.ncols();
        for e in entries {
            let (r, c) = (e / cols, e % cols);
            let orig = model.params.get(id)[[r, c]];
            let mut at = |x: f64| {
                model.params.get_mut(id)[[r, c]] = x;
                model.loss(&snippet, 0.1).expect("loss evaluates")
            };
            let numeric = (-at(orig + 2.0 * h) + 8.0 * at(orig + h) - 8.0 * at(orig - h) + at(orig - 2.0 * h)) / (12.0 * h);
            model.params.get_mut(id)[[r, c]] = orig;
            let a = analytic[[r, c]];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            checked += 1;
            ensure!(rel <= 1e-4, "{name}[{r},{c}]: analytic {a:e}, numeric {numeric:e}");
        }
    }
    let mut required = vec![
        "enc.0.wq".to_string(),
        "enc.0.wk".into(),
        "enc.0.u".into(),
        "enc.0.v".into(),
        "ptr.gate.w".into(),
        "ptr.gate.b".into(),
        "embed.subtoken".into(),
        "embed.kind".into(),
        "embed.node".into(),
        "dec.embed".into(),
    ];
    required.extend(Relation::ALL.iter().map(|r| format!("enc.0.wr.{}", r.name())));
    for name in &required {
        ensure!(covered.contains(name), "{name} received no gradient");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("{checked} entries over {} tensors, worst relative error {worst:.1e}", covered.len()))
}

// ---------------------------------------------------------------- ablations

fn perturb(s: &mut Snippet, relations: &[Relation], rng: &mut impl Rng) {
    for &r in relations {
        let b = &mut s.relations.relations[r.id()];
        for v in &mut b.values {
            *v += rng.gen_range(-3.0..3.0);
        }
        for i in &mut b.index {
            *i = rng.gen_range(0..b.values.len() as u8);
        }
    }
}

fn ablation_invariances() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..10 {
        let s = synthetic(&mut rng, 9, 8, 20, 10, 2);

        let mut config = tiny_config(20, 10);
        config.use_context = false;
        let m = Model::new(config, trial).map_err(|e| e.to_string())?;
        let mut t = s.clone();
        perturb(&mut t, &[Relation::Sequence], &mut rng);
        ensure!(
            m.encoder_output(&s).unwrap() == m.encoder_output(&t).unwrap()
                && m.teacher_forced(&s).unwrap().dists == m.teacher_forced(&t).unwrap().dists,
            "trial {trial}: structure-only output moved with sequence distance"
        );

        let mut config = tiny_config(20, 10);
        config.use_structure = false;
        let m = Model::new(config, trial).map_err(|e| e.to_string())?;
        let mut t = s.clone();
        perturb(&mut t, &Relation::STRUCTURAL, &mut rng);
        ensure!(
            m.encoder_output(&s).unwrap() == m.encoder_output(&t).unwrap()
                && m.teacher_forced(&s).unwrap().dists == m.teacher_forced(&t).unwrap().dists,
            "trial {trial}: context-only output moved with tree relations"
        );
    }
    Ok("10 perturbations per ablation, outputs bitwise equal".into())
}

// ---------------------------------------------------------------- pipelines

fn desk_config(dir: &Path) -> Result<PipelineConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let mut cfg = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    let demo = dir.join("demo.jsonl");
    commands::write_demo_corpus(&demo).map_err(|e| e.to_string())?;
    cfg.paths.train = Some(demo.clone());
    cfg.paths.valid = Some(demo);
    cfg.paths.out = dir.to_path_buf();
    Ok(cfg)
}

fn preprocess(cfg: &PipelineConfig) -> Result<(), String> {
    commands::preprocess_stage1(cfg).map_err(|e| e.to_string())?;
    commands::build_vocabularies(cfg).map_err(|e| e.to_string())?;
    commands::preprocess_stage2(cfg).map_err(|e| e.to_string())?;
    Ok(())
}

fn overfit() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = desk_config(dir.path())?;
    preprocess(&cfg)?;
    let summary = commands::train(&cfg).map_err(|e| e.to_string())?;
    let report = commands::evaluate(&cfg, Some(Split::Train), MatchMode::Multiset).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(report.n_snippets == 100, "{} snippets", report.n_snippets);
    ensure!(report.f1 >= 0.95, "micro-F1 {:.3} after {} steps", report.f1, summary.steps);
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    Ok(format!("micro-F1 {:.3} after {} steps", report.f1, summary.steps))
}

fn determinism() -> Result<String, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let run = || -> Result<(tempfile::TempDir, PipelineConfig, ct_core::metrics::ScoreReport), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut cfg = desk_config(dir.path())?;
        cfg.workers = 1;
        cfg.train.max_steps = 200;
        cfg.train.target_f1 = None;
        cfg.train.patience = 0;
        preprocess(&cfg)?;
        commands::train(&cfg).map_err(|e| e.to_string())?;
        let report = commands::evaluate(&cfg, Some(Split::Train), MatchMode::Multiset).map_err(|e| e.to_string())?;
        Ok((dir, cfg, report))
    };
    let (_a, cfg_a, report_a) = pool.install(run)?;
    let (_b, cfg_b, report_b) = pool.install(run)?;
    let read = |p: &Path| fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    for split in [Split::Train, Split::Valid] {
        let (x, y) = (
            commands::shard_path(&cfg_a, split, Language::Mini),
            commands::shard_path(&cfg_b, split, Language::Mini),
        );
        ensure!(read(&x)? == read(&y)?, "{} differs between runs", split.name());
    }
    let (x, y) = (cfg_a.checkpoint_path(), cfg_b.checkpoint_path());
    ensure!(read(&x)? == read(&y)?, "checkpoints differ");
    ensure!(report_a == report_b, "metrics differ: {report_a:?} vs {report_b:?}");
    Ok(format!("shards and checkpoints byte-identical, micro-F1 {:.3} both runs", report_a.f1))
}

// ---------------------------------------------------------------- pointer

fn pointer_oov() -> Result<String, String> {
    let demo = ct_cli::demo::demo_corpus();
    let records: Vec<_> = demo
        .iter()
        .map(|r| stage1_from_source(r, 512).map_err(|e| format!("{e:?}")))
        .collect::<Result<_, _>>()?;
    let vocab = build_vocab(
        records
            .iter()
            .map(|r| r.tokens.iter().flat_map(|t| t.subtokens.clone()).chain(r.label.clone()).collect::<Vec<_>>()),
        1,
    );
    let nodes = Vocabulary::build(
        records.iter().map(|r| r.nodes.iter().map(|n| n.node_type.clone()).collect::<Vec<_>>()),
        1,
        &NODE_TYPE_SPECIALS,
    );
    ensure!(vocab.id("zebra").is_none(), "fixture subtoken is in the vocabulary");

    let fixture = stage1_from_source(
        &SourceRecord {
            id: "oov".into(),
            language: Language::Mini,
            source: "fn getZebra(zebra) {\n  return zebra\n}".into(),
        },
        512,
    )
    .map_err(|e| format!("{e:?}"))?;
    let opts = Stage2Options { k: 16, growth: DEFAULT_GROWTH, alpha: DEFAULT_ALPHA };
    let s = Snippet::from_stage1(&fixture, &vocab, &nodes, 0, opts).map_err(|e| format!("{e:?}"))?;
    let v = vocab.len();
    let zebra = v as u32 + s.oov.iter().position(|t| t == "zebra").ok_or("zebra not registered as copyable")? as u32;
    let step = s.label.iter().position(|&id| id == zebra).ok_or("label does not reference the copy id")?;

    let mut config = ModelConfig::preset("desk").map_err(|e| e.to_string())?;
    config.k = 16;
    config.subtoken_vocab = v;
    config.node_vocab = nodes.len();
    let with = Model::new(config.clone(), 7).map_err(|e| e.to_string())?;
    let dists = with.teacher_forced(&s).map_err(|e| e.to_string())?.dists;
    ensure!(dists.ncols() == v + s.oov.len(), "pointer output width {}", dists.ncols());
    let p = dists[[step, zebra as usize]];
    ensure!(p > 0.0, "pointer model gives the OOV subtoken probability {p}");

    config.use_pointer = false;
    let without = Model::new(config, 7).map_err(|e| e.to_string())?;
    let dists = without.teacher_forced(&s).map_err(|e| e.to_string())?.dists;
    ensure!(dists.ncols() == v, "pointer-free output width {} exceeds the vocabulary", dists.ncols());
    let predicted = without.predict(&s).map_err(|e| e.to_string())?;
    ensure!(predicted.iter().all(|&id| (id as usize) < v), "pointer-free model emitted a copy id");
    Ok(format!(
        "p(zebra) = {p:.2e} with pointer; support without pointer is the {v} vocabulary ids"
    ))
}

// ---------------------------------------------------------------- metrics

fn words(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn metric_oracle() -> Result<String, String> {
    // (predictions, references, micro F1, sample F1), computed by hand
    let fixtures: Vec<(Vec<Vec<String>>, Vec<Vec<String>>, f64, f64)> = vec![
        // tp 2 fp 0 fn 1: P 1, R 2/3
        (vec![words(&["get", "data"])], vec![words(&["get", "training", "data"])], 0.8, 0.8),
        (vec![words(&["set", "value"])], vec![words(&["set", "value"])], 1.0, 1.0),
        (vec![words(&["load"])], vec![words(&["save", "file"])], 0.0, 0.0),
        // tp 1 fp 1 fn 0: P 1/2, R 1; repeated subtokens count twice
        (vec![words(&["test", "test"])], vec![words(&["test"])], 2.0 / 3.0, 2.0 / 3.0),
        // pooled tp 3 fp 1 fn 2: P 3/4, R 3/5, F1 2/3; per snippet 1 and 0.4
        (
            vec![words(&["is", "empty"]), words(&["get", "name"])],
            vec![words(&["is", "empty"]), words(&["get", "user", "id"])],
            2.0 / 3.0,
            0.7,
        ),
    ];
    for (i, (p, r, micro, sample)) in fixtures.iter().enumerate() {
        let m = micro_f1(p, r, MatchMode::Multiset).map_err(|e| e.to_string())?;
        let s = sample_f1(p, r, MatchMode::Multiset).map_err(|e| e.to_string())?;
        ensure!((m - micro).abs() < 1e-12, "fixture {i}: micro {m} expected {micro}");
        ensure!((s - sample).abs() < 1e-12, "fixture {i}: sample {s} expected {sample}");
    }
    let label = words(&["get", "url"]);
    let body = words(&["page", "url", "return"]);
    let other_label = words(&["is", "empty", "list"]);
    let other_body = words(&["list", "len", "empty"]);
    let one = label_overlap([(label.as_slice(), body.as_slice())]);
    ensure!(one == 0.5, "overlap {one} expected 0.5");
    // 1 of 2 plus 2 of 3
    let both = label_overlap([(label.as_slice(), body.as_slice()), (other_label.as_slice(), other_body.as_slice())]);
    ensure!((both - 0.6).abs() < 1e-12, "pooled overlap {both} expected 0.6");
    Ok("5 F1 fixtures and 2 overlap counts".into())
}
