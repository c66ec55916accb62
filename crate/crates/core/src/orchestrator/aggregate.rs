//! Answer extraction, normalization and majority voting across branches.

use std::collections::HashMap;

const FINAL_ANSWER_MARKER: &str = "FINAL ANSWER:";

/// The text after the last `FINAL ANSWER:` marker, up to the end of that
/// line; the whole output when the marker is absent.
pub fn extract_answer(output: &str) -> String {
    match output.rfind(FINAL_ANSWER_MARKER) {
        Some(pos) => {
            let rest = &output[pos + FINAL_ANSWER_MARKER.len()..];
            rest.lines().next().unwrap_or("").trim().to_string()
        }
        None => output.trim().to_string(),
    }
}

/// Canonical form used for voting and exact-match scoring: trimmed,
/// whitespace-collapsed, case-folded, one trailing period dropped, and
/// numbers rewritten in a single canonical spelling.
pub fn normalize_answer(answer: &str) -> String {
    let mut s = answer.trim();
    if let Some(stripped) = s.strip_suffix('.') {
        s = stripped.trim_end();
    }
    let folded = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    canonical_number(&folded).unwrap_or(folded)
}

fn canonical_number(s: &str) -> Option<String> {
    if s.is_empty() || !s.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    let cleaned = s.strip_prefix('+').unwrap_or(s);
    let value: f64 = cleaned.parse().ok()?;
    if !value.is_finite() {
        return None;
    }
    if value == value.trunc() && value.abs() < 1e15 {
        let int = value as i64;
        Some(int.to_string())
    } else {
        Some(format!("{value}"))
    }
}

/// Modal normalized answer; ties go to the answer first seen at the lowest
/// branch index. Returns an empty string for no answers.
pub fn majority_vote<S: AsRef<str>>(answers: &[S]) -> String {
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for answer in answers {
        let key = normalize_answer(answer.as_ref());
        let count = counts.entry(key.clone()).or_insert(0);
        if *count == 0 {
            order.push(key);
        }
        *count += 1;
    }
    let mut best: Option<(&String, usize)> = None;
    for key in &order {
        let c = counts[key];
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((key, c));
        }
    }
    best.map(|(k, _)| k.clone()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clear_majority() {
        assert_eq!(majority_vote(&["A", "A", "B"]), "a");
    }

    #[test]
    fn tie_goes_to_earliest() {
        assert_eq!(majority_vote(&["A", "B"]), "a");
        assert_eq!(majority_vote(&["B", "A", "A", "B"]), "b");
    }

    #[test]
    fn normalization_merges_forms() {
        assert_eq!(majority_vote(&["  42 ", "42"]), "42");
        assert_eq!(majority_vote(&["42", "7", "42.0"]), "42");
        assert_eq!(normalize_answer("+3.50"), "3.5");
        assert_eq!(normalize_answer("-0"), "0");
        assert_eq!(normalize_answer("The  Answer."), "the answer");
        assert_eq!(normalize_answer("1e3"), "1000");
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_answer("REASONING RESULT: x.\nFINAL ANSWER: 42."), "42.");
        assert_eq!(
            extract_answer("FINAL ANSWER: 1\nFINAL ANSWER: 2 *Your previous reasoning was: none.*\nmore"),
            "2 *Your previous reasoning was: none.*"
        );
        assert_eq!(extract_answer("  plain text "), "plain text");
        assert_eq!(majority_vote(&[extract_answer("FINAL ANSWER: 42.")]), "42");
    }

    #[test]
    fn empty_vote() {
        let none: [&str; 0] = [];
        assert_eq!(majority_vote(&none), "");
    }
}
