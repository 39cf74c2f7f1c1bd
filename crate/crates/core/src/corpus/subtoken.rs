/// Splits an identifier into lowercase subtokens on underscores, other
/// non-alphanumeric separators, camel-case boundaries and letter/digit
/// boundaries.
///
/// `get_TrainingData` becomes `[get, training, data]`, `HTTPServer` becomes
/// `[http, server]` and `utf8` becomes `[utf, 8]`. Input without any
/// alphanumeric character comes back lowercased as a single subtoken.
pub fn split_subtokens(token_text: &str) -> Vec<String> {
    let chars: Vec<char> = token_text.chars().collect();
    let mut parts: Vec<String> = Vec::new();
    let mut current = String::new();

    for (i, &c) in chars.iter().enumerate() {
        if !c.is_alphanumeric() {
            flush(&mut current, &mut parts);
            continue;
        }
        if let Some(&prev) = i.checked_sub(1).and_then(|p| chars.get(p)) {
            if prev.is_alphanumeric() && is_boundary(prev, c, chars.get(i + 1).copied()) {
                flush(&mut current, &mut parts);
            }
        }
        current.extend(c.to_lowercase());
    }
    flush(&mut current, &mut parts);

    if parts.is_empty() {
        vec![token_text.to_lowercase()]
    } else {
        parts
    }
}

fn is_boundary(prev: char, c: char, next: Option<char>) -> bool {
    if prev.is_numeric() != c.is_numeric() {
        return true;
    }
    if prev.is_lowercase() && c.is_uppercase() {
        return true;
    }
    // end of an acronym: `HTTPServer` splits before the `S`
    prev.is_uppercase() && c.is_uppercase() && next.is_some_and(|n| n.is_lowercase())
}

fn flush(current: &mut String, parts: &mut Vec<String>) {
    if !current.is_empty() {
        parts.push(std::mem::take(current));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snake_and_camel_mix() {
        assert_eq!(split_subtokens("get_TrainingData"), ["get", "training", "data"]);
    }

    #[test]
    fn camel_case() {
        assert_eq!(split_subtokens("setBottomHeight"), ["set", "bottom", "height"]);
    }

    #[test]
    fn single_word() {
        assert_eq!(split_subtokens("data"), ["data"]);
    }

    #[test]
    fn digits_split() {
        assert_eq!(split_subtokens("utf8"), ["utf", "8"]);
        assert_eq!(split_subtokens("base64Encode"), ["base", "64", "encode"]);
    }

    #[test]
    fn acronyms() {
        assert_eq!(split_subtokens("HTTPServer"), ["http", "server"]);
        assert_eq!(split_subtokens("parseURL"), ["parse", "url"]);
        assert_eq!(split_subtokens("MAX_NUM_TOKENS"), ["max", "num", "tokens"]);
    }

    #[test]
    fn separators_only_fall_back_to_input() {
        assert_eq!(split_subtokens("__"), ["__"]);
        assert_eq!(split_subtokens("$"), ["$"]);
        assert_eq!(split_subtokens("__init__"), ["init"]);
    }
}
