#![allow(dead_code)]

use ct_core::corpus::vocab::NODE_TYPE_SPECIALS;
use ct_core::corpus::{build_vocab, Language, Vocabulary};
use ct_core::relations::{BinnedRelation, BinnedRelations, Relation, DEFAULT_ALPHA, DEFAULT_GROWTH};
use ct_core::shard::{Snippet, Stage2Options};
use ct_core::snippet::{stage1_from_source, SourceRecord, Stage1Record};
use ct_model::ModelConfig;
use rand::Rng;

pub const SOURCES: &[&str] = &[
    "fn getUrl(page) {\n  let url = page.url\n  return url\n}",
    "fn countItems(items) {\n  let n = 0\n  for item in items {\n    n = n + 1\n  }\n  return n\n}",
    "fn isEmpty(list) {\n  return len(list) == 0\n}",
    "fn saveFile(path, data) {\n  let file = open(path)\n  file.write(data)\n}",
];

pub struct Fixture {
    pub vocab: Vocabulary,
    pub nodes: Vocabulary,
    pub snippets: Vec<Snippet>,
}

pub fn stage1(sources: &[&str]) -> Vec<Stage1Record> {
    sources
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let rec = SourceRecord {
                id: format!("s{i}"),
                language: Language::Mini,
                source: src.to_string(),
            };
            stage1_from_source(&rec, 512).expect("fixture parses")
        })
        .collect()
}

/// Vocabularies from all sources, minus `exclude`, and the binned snippets.
pub fn fixture(sources: &[&str], k: usize, exclude: &[&str]) -> Fixture {
    let records = stage1(sources);
    let vocab = build_vocab(
        records.iter().map(|r| {
            r.tokens
                .iter()
                .flat_map(|t| t.subtokens.clone())
                .chain(r.label.clone())
                .filter(|s| !exclude.contains(&s.as_str()))
                .collect::<Vec<_>>()
        }),
        1,
    );
    let nodes = Vocabulary::build(
        records.iter().map(|r| r.nodes.iter().map(|n| n.node_type.clone()).collect::<Vec<_>>()),
        1,
        &NODE_TYPE_SPECIALS,
    );
    let opts = Stage2Options {
        k,
        growth: DEFAULT_GROWTH,
        alpha: DEFAULT_ALPHA,
    };
    let snippets = records
        .iter()
        .map(|r| Snippet::from_stage1(r, &vocab, &nodes, 0, opts).expect("fixture bins"))
        .collect();
    Fixture { vocab, nodes, snippets }
}

/// The small configuration used for gradient checks.
pub fn tiny_config(subtoken_vocab: usize, node_vocab: usize) -> ModelConfig {
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

/// Random snippet with `k` distinct bin values per relation.
pub fn synthetic(rng: &mut impl Rng, n: usize, k: usize, vocab: usize, node_vocab: usize, n_oov: usize) -> Snippet {
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
    let low = 9; // first non-special subtoken id
    let mut subtokens = Vec::new();
    let mut copy_ids = Vec::new();
    for t in 0..n {
        let mut sub = [0u32; 5];
        let mut copy = [0u32; 5];
        for j in 0..rng.gen_range(1..=3) {
            let oov = n_oov > 0 && rng.gen_bool(0.3);
            if oov {
                sub[j] = 1;
                copy[j] = (vocab + rng.gen_range(0..n_oov)) as u32;
            } else {
                sub[j] = rng.gen_range(low..vocab) as u32;
                copy[j] = sub[j];
            }
        }
        if t == 0 {
            sub = [6, 0, 0, 0, 0];
            copy = sub;
        }
        subtokens.push(sub);
        copy_ids.push(copy);
    }
    let label: Vec<u32> = (0..rng.gen_range(1..=3))
        .map(|_| {
            if n_oov > 0 && rng.gen_bool(0.3) {
                (vocab + rng.gen_range(0..n_oov)) as u32
            } else {
                rng.gen_range(low..vocab) as u32
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
        is_leaf: (0..n).map(|_| rng.gen_bool(0.6)).collect(),
        name_position: 0,
        label_text: label.iter().map(|id| format!("t{id}")).collect(),
        label,
        oov: (0..n_oov).map(|i| format!("oov{i}")).collect(),
        relations: BinnedRelations {
            n,
            k,
            relations,
        },
    }
}

/// Reorders tokens so that new position `i` holds old token `perm[i]`.
pub fn permute(s: &Snippet, perm: &[usize]) -> Snippet {
    let pick = |i: usize| perm[i];
    Snippet {
        id: s.id.clone(),
        language: s.language,
        subtokens: (0..s.len()).map(|i| s.subtokens[pick(i)]).collect(),
        copy_ids: (0..s.len()).map(|i| s.copy_ids[pick(i)]).collect(),
        kinds: (0..s.len()).map(|i| s.kinds[pick(i)]).collect(),
        node_types: (0..s.len()).map(|i| s.node_types[pick(i)]).collect(),
        is_leaf: (0..s.len()).map(|i| s.is_leaf[pick(i)]).collect(),
        name_position: perm.iter().position(|&p| p == s.name_position).unwrap(),
        label: s.label.clone(),
        label_text: s.label_text.clone(),
        oov: s.oov.clone(),
        relations: s.relations.permute(perm),
    }
}
