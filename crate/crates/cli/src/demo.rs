//! A small synthetic corpus in the bundled mini language: every verb template
//! combined with every noun, so names are predictable from their bodies.

use ct_core::corpus::Language;
use ct_core::snippet::SourceRecord;

pub const VERBS: [&str; 10] = [
    "get", "set", "has", "load", "save", "show", "reset", "find", "count", "remove",
];
pub const NOUNS: [&str; 10] = [
    "user", "file", "order", "price", "color", "title", "image", "score", "email", "date",
];

fn template(verb: &str, noun: &str) -> String {
    let cap = {
        let mut c = noun.chars();
        let first = c.next().expect("nouns are non-empty").to_ascii_uppercase();
        format!("{first}{}", c.as_str())
    };
    let n = noun;
    let body = match verb {
        "get" => format!("(obj) {{\n  return obj.{n}\n}}"),
        "set" => format!("(obj, value) {{\n  obj.{n} = value\n}}"),
        "has" => format!("(obj) {{\n  return obj.{n} != nil\n}}"),
        "load" => format!("(path) {{\n  let {n} = read(path)\n  return parse({n})\n}}"),
        "save" => format!("(path, {n}) {{\n  write(path, format({n}))\n}}"),
        "show" => format!("({n}) {{\n  print(\"{n}\", {n})\n}}"),
        "reset" => format!("(obj) {{\n  obj.{n} = nil\n  return true\n}}"),
        "find" => format!(
            "(list, key) {{\n  for {n} in list {{\n    if {n}.key == key {{\n      return {n}\n    }}\n  }}\n  return nil\n}}"
        ),
        "count" => format!(
            "(list) {{\n  let total = 0\n  for {n} in list {{\n    total = total + 1\n  }}\n  return total\n}}"
        ),
        "remove" => format!("(list, {n}) {{\n  list.delete({n})\n}}"),
        other => unreachable!("no template for {other}"),
    };
    format!("fn {verb}{cap}{body}\n")
}

/// The 100 demo snippets in a fixed order.
pub fn demo_corpus() -> Vec<SourceRecord> {
    let mut out = Vec::with_capacity(VERBS.len() * NOUNS.len());
    for verb in VERBS {
        for noun in NOUNS {
            out.push(SourceRecord {
                id: format!("demo-{verb}-{noun}"),
                language: Language::Mini,
                source: template(verb, noun),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ct_core::snippet::stage1_from_source;

    #[test]
    fn every_snippet_parses_with_its_label() {
        let corpus = demo_corpus();
        assert_eq!(corpus.len(), 100);
        for rec in &corpus {
            let s = stage1_from_source(rec, 512).unwrap_or_else(|r| panic!("{}: {}", rec.id, r.detail));
            let parts: Vec<&str> = rec.id.split('-').skip(1).collect();
            assert_eq!(s.label, parts);
        }
    }
}
