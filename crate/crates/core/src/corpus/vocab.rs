use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::token::{DEDENT, INDENT, MASK_NUMBER, MASK_STRING, METHOD_NAME_MASK, NEWLINE};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const END_OF_NAME: &str = "[EON]";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_STRING_ID: u32 = 2;
pub const MASK_NUMBER_ID: u32 = 3;
pub const INDENT_ID: u32 = 4;
pub const DEDENT_ID: u32 = 5;
pub const METHOD_NAME_MASK_ID: u32 = 6;
pub const END_OF_NAME_ID: u32 = 7;
pub const NEWLINE_ID: u32 = 8;

/// Specials of the subtoken vocabulary, in id order.
pub const SUBTOKEN_SPECIALS: [&str; 9] = [
    PAD,
    UNK,
    MASK_STRING,
    MASK_NUMBER,
    INDENT,
    DEDENT,
    METHOD_NAME_MASK,
    END_OF_NAME,
    NEWLINE,
];

/// Specials of the node-type vocabulary.
pub const NODE_TYPE_SPECIALS: [&str; 2] = [PAD, UNK];

const HEADER: &str = "# ct-vocab v1";

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("vocabulary file is missing the `{HEADER}` header")]
    MissingHeader,
    #[error("malformed vocabulary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("vocabularies disagree on specials: {0:?} vs {1:?}")]
    SpecialsMismatch(Vec<String>, Vec<String>),
}

/// Dense string↔id map with a fixed block of specials followed by corpus
/// entries sorted by count (descending) and then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    specials: Vec<String>,
    entries: Vec<(String, u64)>,
    min_count: u64,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Counts every item of every snippet and keeps those seen at least
    /// `min_count` times. Strings equal to a special are not counted.
    pub fn build<I, S, T>(corpus: I, min_count: u64, specials: &[&str]) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for snippet in corpus {
            for item in snippet {
                let item = item.as_ref();
                if specials.contains(&item) {
                    continue;
                }
                *counts.entry(item.to_string()).or_default() += 1;
            }
        }
        let specials = specials.iter().map(|s| s.to_string()).collect();
        Self::from_counts(specials, counts, min_count)
    }

    fn from_counts(specials: Vec<String>, counts: BTreeMap<String, u64>, min_count: u64) -> Self {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::assemble(specials, entries, min_count)
    }

    fn assemble(specials: Vec<String>, entries: Vec<(String, u64)>, min_count: u64) -> Self {
        let index = specials
            .iter()
            .cloned()
            .chain(entries.iter().map(|(s, _)| s.clone()))
            .enumerate()
            .map(|(i, s)| (s, i as u32))
            .collect();
        Self {
            specials,
            entries,
            min_count,
            index,
        }
    }

    /// Union of several vocabularies sharing the same specials; counts are summed.
    pub fn union<'a>(vocabs: impl IntoIterator<Item = &'a Vocabulary>) -> Result<Self, VocabError> {
        let mut specials: Option<Vec<String>> = None;
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut min_count = u64::MAX;
        for v in vocabs {
            match &specials {
                None => specials = Some(v.specials.clone()),
                Some(s) if *s != v.specials => {
                    return Err(VocabError::SpecialsMismatch(s.clone(), v.specials.clone()))
                }
                Some(_) => {}
            }
            min_count = min_count.min(v.min_count);
            for (s, c) in &v.entries {
                *counts.entry(s.clone()).or_default() += c;
            }
        }
        let specials = specials.unwrap_or_else(|| SUBTOKEN_SPECIALS.iter().map(|s| s.to_string()).collect());
        if min_count == u64::MAX {
            min_count = 1;
        }
        // every member already passed its own threshold
        Ok(Self::from_counts(specials, counts, 0).with_min_count(min_count))
    }

    fn with_min_count(mut self, min_count: u64) -> Self {
        self.min_count = min_count;
        self
    }

    pub fn len(&self) -> usize {
        self.specials.len() + self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the id of `[UNK]` (falling back to 1).
    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token)
            .unwrap_or_else(|| self.id(UNK).unwrap_or(UNK_ID))
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        let id = id as usize;
        if id < self.specials.len() {
            Some(&self.specials[id])
        } else {
            self.entries
                .get(id - self.specials.len())
                .map(|(s, _)| s.as_str())
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Stable text serialization: a header block followed by one
    /// `subtoken<TAB>count` line per entry in id order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        let _ = writeln!(out, "# min_count\t{}", self.min_count);
        let _ = writeln!(out, "# specials\t{}", self.specials.join(" "));
        for (s, c) in &self.entries {
            let _ = writeln!(out, "{s}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == HEADER => {}
            _ => return Err(VocabError::MissingHeader),
        }
        let mut min_count = None;
        let mut specials = None;
        let mut entries = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let malformed = |reason: &str| VocabError::Malformed {
                line: line_no,
                reason: reason.to_string(),
            };
            if let Some(rest) = line.strip_prefix("# ") {
                let (key, value) = rest.split_once('\t').ok_or_else(|| malformed("header without tab"))?;
                match key {
                    "min_count" => {
                        min_count = Some(value.parse().map_err(|_| malformed("bad min_count"))?)
                    }
                    "specials" => {
                        specials = Some(value.split(' ').filter(|s| !s.is_empty()).map(str::to_string).collect::<Vec<_>>())
                    }
                    _ => return Err(malformed("unknown header key")),
                }
                continue;
            }
            let (s, c) = line.rsplit_once('\t').ok_or_else(|| malformed("missing tab"))?;
            let c: u64 = c.parse().map_err(|_| malformed("bad count"))?;
            entries.push((s.to_string(), c));
        }
        let specials = specials.ok_or(VocabError::Malformed {
            line: 0,
            reason: "missing specials header".into(),
        })?;
        let min_count = min_count.ok_or(VocabError::Malformed {
            line: 0,
            reason: "missing min_count header".into(),
        })?;
        Ok(Self::assemble(specials, entries, min_count))
    }

    /// Short content hash used to tie shards and checkpoints to a vocabulary.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Builds the subtoken vocabulary from the training split.
///
/// Each corpus item is the full list of subtoken strings of one snippet (body
/// tokens and label). Entries with a count strictly below `min_count` are left
/// out and map to `[UNK]`.
pub fn build_vocab<I, S, T>(corpus: I, min_count: u64) -> Vocabulary
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    Vocabulary::build(corpus, min_count, &SUBTOKEN_SPECIALS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        let mut snippet = vec!["get".to_string(); 150];
        snippet.extend(vec!["zz".to_string(); 3]);
        snippet.extend(vec!["data".to_string(); 100]);
        vec![snippet]
    }

    #[test]
    fn threshold_excludes_rare_subtokens() {
        let v = build_vocab(corpus(), 100);
        assert!(v.contains("get"));
        assert!(v.contains("data"), "count equal to min_count is kept");
        assert!(!v.contains("zz"));
        assert_eq!(v.id_or_unk("zz"), UNK_ID);
        assert_eq!(v.id("get"), Some(SUBTOKEN_SPECIALS.len() as u32));
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let v = build_vocab(corpus(), 1);
        for s in ["get", "zz", "data"] {
            assert!(v.contains(s));
        }
    }

    #[test]
    fn empty_corpus_is_specials_only() {
        let v = build_vocab(Vec::<Vec<String>>::new(), 100);
        assert_eq!(v.len(), SUBTOKEN_SPECIALS.len());
        assert_eq!(v.id(PAD), Some(PAD_ID));
        assert_eq!(v.id(END_OF_NAME), Some(END_OF_NAME_ID));
        assert_eq!(v.id(NEWLINE), Some(NEWLINE_ID));
        assert_eq!(v.id(METHOD_NAME_MASK), Some(METHOD_NAME_MASK_ID));
    }

    #[test]
    fn deterministic_serialization() {
        let a = build_vocab(corpus(), 1).to_text();
        let b = build_vocab(corpus(), 1).to_text();
        assert_eq!(a, b);
        let parsed = Vocabulary::from_text(&a).unwrap();
        assert_eq!(parsed.to_text(), a);
        assert_eq!(parsed, build_vocab(corpus(), 1));
    }

    #[test]
    fn ordering_is_count_then_lexicographic() {
        let v = build_vocab(vec![vec!["b", "a", "c", "c"]], 1);
        let names: Vec<&str> = v.entries().iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(names, ["c", "a", "b"]);
    }

    #[test]
    fn specials_are_not_counted() {
        let v = build_vocab(vec![vec![MASK_STRING, "x"]], 1);
        assert_eq!(v.id(MASK_STRING), Some(MASK_STRING_ID));
        assert_eq!(v.len(), SUBTOKEN_SPECIALS.len() + 1);
    }

    #[test]
    fn union_of_two_vocabularies() {
        let a = build_vocab(vec![vec!["get", "url", "url"]], 1);
        let b = build_vocab(vec![vec!["get", "name"]], 1);
        let u = Vocabulary::union([&a, &b]).unwrap();
        assert_eq!(u.len(), SUBTOKEN_SPECIALS.len() + 3);
        assert_eq!(u.entries()[0], ("get".to_string(), 2));
    }

    #[test]
    fn rejects_missing_header() {
        assert!(matches!(
            Vocabulary::from_text("get\t3\n"),
            Err(VocabError::MissingHeader)
        ));
    }
}
