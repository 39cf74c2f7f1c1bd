//! Second preprocessing stage: vocabularized snippets with binned relations,
//! and the binary shard container they are stored in.
//!
//! A shard starts with the magic `CTSHARD1`, a `u32` format version, the
//! vocabulary hash (length-prefixed UTF-8), `k` and the record count, followed
//! by one `u32`-length-prefixed record per snippet. All integers are
//! little-endian.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::ast::AstError;
use crate::corpus::vocab::{PAD_ID, UNK_ID};
use crate::corpus::{ProcessedToken, TokenKind, Vocabulary, SUBTOKEN_SLOTS};
use crate::relations::{bin_relations, BinnedRelation, BinnedRelations, RelationSet};
use crate::snippet::{Reject, RejectReason, Stage1Record};

const MAGIC: &[u8; 8] = b"CTSHARD1";
const VERSION: u32 = 1;

/// Hash tying shards and checkpoints to the vocabularies they were built with.
pub fn vocab_hash(subtokens: &Vocabulary, node_types: &Vocabulary) -> String {
    let mut h = Sha256::new();
    h.update(subtokens.to_text().as_bytes());
    h.update([0u8]);
    h.update(node_types.to_text().as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// A model-ready snippet.
///
/// Copy ids address the extended output space: ids below the vocabulary size
/// are ordinary subtokens, id `V + i` is `oov[i]`, a body subtoken missing from
/// the vocabulary. Labels use the same space and exclude the end-of-name marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub id: String,
    pub language: u16,
    pub subtokens: Vec<[u32; SUBTOKEN_SLOTS]>,
    pub copy_ids: Vec<[u32; SUBTOKEN_SLOTS]>,
    pub kinds: Vec<u8>,
    pub node_types: Vec<u32>,
    pub is_leaf: Vec<bool>,
    pub name_position: usize,
    pub label: Vec<u32>,
    pub label_text: Vec<String>,
    pub oov: Vec<String>,
    pub relations: BinnedRelations,
}

/// Settings of the second stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage2Options {
    pub k: usize,
    pub growth: f64,
    pub alpha: f64,
}

impl Snippet {
    pub fn len(&self) -> usize {
        self.subtokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtokens.is_empty()
    }

    /// String for an id of the extended output space.
    pub fn output_token<'a>(&'a self, vocab: &'a Vocabulary, id: u32) -> Option<&'a str> {
        let v = vocab.len() as u32;
        if id < v {
            vocab.token(id)
        } else {
            self.oov.get((id - v) as usize).map(String::as_str)
        }
    }

    /// Vocabularizes a stage-1 record, computes its relations and bins them.
    pub fn from_stage1(
        record: &Stage1Record,
        subtoken_vocab: &Vocabulary,
        node_vocab: &Vocabulary,
        language: u16,
        opts: Stage2Options,
    ) -> Result<Self, Reject> {
        let reject = |reason, detail: String| Reject::new(&record.id, 2, reason, detail);
        let ast = record
            .ast()
            .map_err(|e: AstError| reject(RejectReason::Schema, e.to_string()))?;
        let n = record.tokens.len();
        if record.assignment.len() != n || record.name_position >= n {
            return Err(reject(
                RejectReason::Schema,
                format!("{n} tokens but {} assignments", record.assignment.len()),
            ));
        }
        if let Some(&bad) = record.assignment.iter().find(|&&a| a >= ast.len()) {
            return Err(reject(RejectReason::Schema, format!("assignment to missing node {bad}")));
        }

        let vocab_len = subtoken_vocab.len() as u32;
        let mut oov: Vec<String> = Vec::new();
        let mut oov_index: HashMap<String, u32> = HashMap::new();
        let mut subtokens = Vec::with_capacity(n);
        let mut copy_ids = Vec::with_capacity(n);
        for t in &record.tokens {
            let processed = ProcessedToken::from_record(t, subtoken_vocab);
            let mut copy = [PAD_ID; SUBTOKEN_SLOTS];
            for (slot, s) in copy.iter_mut().zip(&t.subtokens) {
                *slot = match subtoken_vocab.id(s) {
                    Some(id) => id,
                    None => *oov_index.entry(s.clone()).or_insert_with(|| {
                        oov.push(s.clone());
                        vocab_len + oov.len() as u32 - 1
                    }),
                };
            }
            subtokens.push(processed.subtokens);
            copy_ids.push(copy);
        }
        let label = record
            .label
            .iter()
            .map(|s| {
                subtoken_vocab
                    .id(s)
                    .or_else(|| oov_index.get(s).copied())
                    .unwrap_or(UNK_ID)
            })
            .collect();

        let relations = RelationSet::compute(&ast, &record.assignment, opts.alpha);
        let relations =
            bin_relations(&relations, opts.k, opts.growth).map_err(|e| reject(RejectReason::Schema, e.to_string()))?;

        Ok(Self {
            id: record.id.clone(),
            language,
            subtokens,
            copy_ids,
            kinds: record.tokens.iter().map(|t| t.kind.id()).collect(),
            node_types: record
                .assignment
                .iter()
                .map(|&a| node_vocab.id_or_unk(&ast.node(a).node_type))
                .collect(),
            is_leaf: record.assignment.iter().map(|&a| ast.node(a).is_leaf()).collect(),
            name_position: record.name_position,
            label,
            label_text: record.label.clone(),
            oov,
            relations,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ShardError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a shard file (bad magic)")]
    BadMagic,
    #[error("unsupported shard version {0}")]
    Version(u32),
    #[error("corrupt shard: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardHeader {
    pub vocab_hash: String,
    pub k: usize,
}

pub fn write_shard(mut w: impl Write, header: &ShardHeader, snippets: &[Snippet]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let mut head = Encoder::default();
    head.str(&header.vocab_hash);
    head.u32(header.k as u32);
    head.u64(snippets.len() as u64);
    w.write_all(&head.0)?;
    for s in snippets {
        let body = encode_snippet(s);
        w.write_all(&(body.len() as u32).to_le_bytes())?;
        w.write_all(&body)?;
    }
    Ok(())
}

pub fn read_shard(mut r: impl Read) -> Result<(ShardHeader, Vec<Snippet>), ShardError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(ShardError::BadMagic);
    }
    let mut d = Decoder { buf: &bytes[8..] };
    let version = d.u32()?;
    if version != VERSION {
        return Err(ShardError::Version(version));
    }
    let header = ShardHeader {
        vocab_hash: d.str()?,
        k: d.u32()? as usize,
    };
    let count = d.u64()?;
    let mut snippets = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let len = d.u32()? as usize;
        let mut rec = Decoder { buf: d.take(len)? };
        let s = decode_snippet(&mut rec)?;
        if !rec.buf.is_empty() {
            return Err(ShardError::Corrupt(format!("{} trailing bytes in record {}", rec.buf.len(), s.id)));
        }
        if s.relations.k != header.k {
            return Err(ShardError::Corrupt(format!("record {} has k={} in a k={} shard", s.id, s.relations.k, header.k)));
        }
        snippets.push(s);
    }
    if !d.buf.is_empty() {
        return Err(ShardError::Corrupt("trailing bytes after last record".into()));
    }
    Ok((header, snippets))
}

pub fn write_shard_file(path: &Path, header: &ShardHeader, snippets: &[Snippet]) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_shard(&mut w, header, snippets)?;
    w.flush()
}

pub fn read_shard_file(path: &Path) -> Result<(ShardHeader, Vec<Snippet>), ShardError> {
    read_shard(io::BufReader::new(std::fs::File::open(path)?))
}

fn encode_snippet(s: &Snippet) -> Vec<u8> {
    let mut e = Encoder::default();
    let n = s.len();
    e.str(&s.id);
    e.u16(s.language);
    e.u32(n as u32);
    for row in s.subtokens.iter().chain(&s.copy_ids) {
        row.iter().for_each(|&x| e.u32(x));
    }
    s.kinds.iter().for_each(|&x| e.u8(x));
    s.node_types.iter().for_each(|&x| e.u32(x));
    s.is_leaf.iter().for_each(|&x| e.u8(u8::from(x)));
    e.u32(s.name_position as u32);
    e.u8(s.label.len() as u8);
    for (&id, text) in s.label.iter().zip(&s.label_text) {
        e.u32(id);
        e.str(text);
    }
    e.u32(s.oov.len() as u32);
    s.oov.iter().for_each(|t| e.str(t));
    e.u8(s.relations.relations.len() as u8);
    e.u32(s.relations.k as u32);
    for (r, b) in s.relations.relations.iter().enumerate() {
        e.u8(r as u8);
        b.values.iter().for_each(|&v| e.f32(v as f32));
        e.0.extend_from_slice(&b.index);
    }
    e.0
}

fn decode_snippet(d: &mut Decoder) -> Result<Snippet, ShardError> {
    let id = d.str()?;
    let language = d.u16()?;
    let n = d.u32()? as usize;
    let mut grid = || -> Result<Vec<[u32; SUBTOKEN_SLOTS]>, ShardError> {
        (0..n)
            .map(|_| {
                let mut row = [0u32; SUBTOKEN_SLOTS];
                for x in &mut row {
                    *x = d.u32()?;
                }
                Ok(row)
            })
            .collect()
    };
    let subtokens = grid()?;
    let copy_ids = grid()?;
    let kinds = d.take(n)?.to_vec();
    if let Some(&bad) = kinds.iter().find(|&&k| TokenKind::from_id(k).is_none()) {
        return Err(ShardError::Corrupt(format!("token kind {bad} in record {id}")));
    }
    let node_types = (0..n).map(|_| d.u32()).collect::<Result<_, _>>()?;
    let is_leaf = d.take(n)?.iter().map(|&b| b != 0).collect();
    let name_position = d.u32()? as usize;
    if name_position >= n {
        return Err(ShardError::Corrupt(format!("name position {name_position} out of range in record {id}")));
    }
    let label_len = d.u8()? as usize;
    let mut label = Vec::with_capacity(label_len);
    let mut label_text = Vec::with_capacity(label_len);
    for _ in 0..label_len {
        label.push(d.u32()?);
        label_text.push(d.str()?);
    }
    let n_oov = d.u32()? as usize;
    let oov = (0..n_oov).map(|_| d.str()).collect::<Result<_, _>>()?;
    let n_rel = d.u8()? as usize;
    let k = d.u32()? as usize;
    let mut relations = Vec::with_capacity(n_rel);
    for expected in 0..n_rel {
        let r = d.u8()? as usize;
        if r != expected {
            return Err(ShardError::Corrupt(format!("relation {r} out of order in record {id}")));
        }
        let values = (0..k).map(|_| d.f32().map(f64::from)).collect::<Result<_, _>>()?;
        let index = d.take(n * n)?.to_vec();
        if index.iter().any(|&i| i as usize >= k) {
            return Err(ShardError::Corrupt(format!("bin index out of range in record {id}")));
        }
        relations.push(BinnedRelation { index, values });
    }
    Ok(Snippet {
        id,
        language,
        subtokens,
        copy_ids,
        kinds,
        node_types,
        is_leaf,
        name_position,
        label,
        label_text,
        oov,
        relations: BinnedRelations { n, k, relations },
    })
}

#[derive(Default)]
struct Encoder(Vec<u8>);

impl Encoder {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u16(&mut self, x: u16) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f32(&mut self, x: f32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ShardError> {
        if self.buf.len() < n {
            return Err(ShardError::Corrupt("unexpected end of data".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], ShardError> {
        Ok(self.take(N)?.try_into().expect("slice has the requested length"))
    }
    fn u8(&mut self) -> Result<u8, ShardError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ShardError> {
        self.array().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, ShardError> {
        self.array().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, ShardError> {
        self.array().map(u64::from_le_bytes)
    }
    fn f32(&mut self) -> Result<f32, ShardError> {
        self.array().map(f32::from_le_bytes)
    }
    fn str(&mut self) -> Result<String, ShardError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| ShardError::Corrupt(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::NODE_TYPE_SPECIALS;
    use crate::corpus::{build_vocab, Language};
    use crate::snippet::{stage1_from_source, SourceRecord};

    fn stage1(src: &str) -> Stage1Record {
        let rec = SourceRecord {
            id: "s".into(),
            language: Language::Mini,
            source: src.into(),
        };
        stage1_from_source(&rec, 512).unwrap()
    }

    fn opts() -> Stage2Options {
        Stage2Options {
            k: 16,
            growth: 1.3,
            alpha: 0.15,
        }
    }

    #[test]
    fn roundtrip_and_oov_copy_ids() {
        let rec = stage1("fn loadUrl(path) {\n  let url = path.url\n  return url\n}");
        let vocab = build_vocab(vec![vec!["fn", "let", "return", "load", "path"]], 1);
        let nodes = Vocabulary::build(vec![vec!["Function"]], 1, &NODE_TYPE_SPECIALS);
        let s = Snippet::from_stage1(&rec, &vocab, &nodes, 0, opts()).unwrap();

        let v = vocab.len() as u32;
        // "url" is not in the vocabulary but appears in the body
        assert_eq!(s.oov, ["url"]);
        assert_eq!(s.label, vec![vocab.id("load").unwrap(), v]);
        assert_eq!(s.output_token(&vocab, v), Some("url"));

        let header = ShardHeader {
            vocab_hash: vocab_hash(&vocab, &nodes),
            k: 16,
        };
        let mut bytes = Vec::new();
        write_shard(&mut bytes, &header, std::slice::from_ref(&s)).unwrap();
        let (h, back) = read_shard(bytes.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back.len(), 1);
        let b = &back[0];
        assert_eq!(b.subtokens, s.subtokens);
        assert_eq!(b.copy_ids, s.copy_ids);
        assert_eq!(b.label, s.label);
        assert_eq!(b.relations.relations[0].index, s.relations.relations[0].index);
        for (x, y) in b.relations.relations.iter().zip(&s.relations.relations) {
            for (p, q) in x.values.iter().zip(&y.values) {
                assert_eq!(*p, *q as f32 as f64);
            }
        }
    }

    #[test]
    fn truncated_shard_is_corrupt() {
        let rec = stage1("fn f(x) { return x }");
        let vocab = build_vocab(Vec::<Vec<&str>>::new(), 1);
        let nodes = Vocabulary::build(Vec::<Vec<&str>>::new(), 1, &NODE_TYPE_SPECIALS);
        let s = Snippet::from_stage1(&rec, &vocab, &nodes, 0, opts()).unwrap();
        let header = ShardHeader {
            vocab_hash: "x".into(),
            k: 16,
        };
        let mut bytes = Vec::new();
        write_shard(&mut bytes, &header, &[s]).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_shard(bytes.as_slice()), Err(ShardError::Corrupt(_))));
        assert!(matches!(read_shard(&b"nonsense-bytes"[..]), Err(ShardError::BadMagic)));
    }
}
