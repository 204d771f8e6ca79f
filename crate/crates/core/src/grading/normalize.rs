use crate::scenario::AnswerKey;

use super::AnswerStatus;

/// Canonical form for rule-based matching: trimmed, internal whitespace
/// collapsed, lower-cased, and numerals rewritten without redundant zeros or
/// a leading `+`.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    canonicalize_numerals(&collapsed)
}

fn starts_operand(prev: Option<char>) -> bool {
    match prev {
        None => true,
        Some(c) => !(c.is_alphanumeric() || c == '.' || c == '_'),
    }
}

fn canonicalize_numerals(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev = out.chars().last();
        let unary_plus = c == '+'
            && chars.get(i + 1).is_some_and(char::is_ascii_digit)
            && matches!(prev, None | Some(' ' | '=' | '(' | ','));
        if unary_plus {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() && starts_operand(prev) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let int: String = chars[start..i].iter().collect();
            let mut frac = String::new();
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                let fstart = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                frac = chars[fstart..i].iter().collect();
            }
            let int = int.trim_start_matches('0');
            out.push_str(if int.is_empty() { "0" } else { int });
            let frac = frac.trim_end_matches('0');
            if !frac.is_empty() {
                out.push('.');
                out.push_str(frac);
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Correct iff the normalized answer equals a normalized accepted form.
pub fn grade_closed(answer: &str, key: &AnswerKey) -> AnswerStatus {
    let given = normalize_answer(answer);
    if key.accepted.iter().any(|a| normalize_answer(a) == given) {
        AnswerStatus::Correct
    } else {
        AnswerStatus::Incorrect
    }
}

/// First signed numeral in a normalized answer.
pub(crate) fn first_number(s: &str) -> Option<f64> {
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() && starts_operand(i.checked_sub(1).map(|j| chars[j])) {
            let negative = i > 0 && chars[i - 1] == '-' && starts_operand(i.checked_sub(2).map(|j| chars[j]));
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v: f64 = text.trim_end_matches('.').parse().ok()?;
            return Some(if negative { -v } else { v });
        }
        i += 1;
    }
    None
}

/// Single-letter identifiers in an algebraic answer.
pub(crate) fn letter_variables(s: &str) -> Vec<char> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    for (i, c) in chars.iter().enumerate() {
        if !c.is_ascii_alphabetic() {
            continue;
        }
        let before = i.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i + 1).copied();
        let isolated = !before.is_some_and(|b| b.is_alphabetic()) && !after.is_some_and(|a| a.is_alphabetic());
        if isolated && !out.contains(c) {
            out.push(*c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(forms: &[&str]) -> AnswerKey {
        AnswerKey { accepted: forms.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("  X = 10 "), "x = 10");
        assert_eq!(normalize_answer("10.0"), "10");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("+10"), "10");
        assert_eq!(normalize_answer("x = +10"), "x = 10");
        assert_eq!(normalize_answer("x+1"), "x+1");
        assert_eq!(normalize_answer("007"), "7");
        assert_eq!(normalize_answer("0.50"), "0.5");
        assert_eq!(normalize_answer("x2 + 3.10"), "x2 + 3.1");
        assert_eq!(normalize_answer("93,  94"), "93, 94");
    }

    #[test]
    fn closed_grading() {
        assert_eq!(grade_closed("x=10", &key(&["x=10", "10"])), AnswerStatus::Correct);
        assert_eq!(grade_closed("11", &key(&["10"])), AnswerStatus::Incorrect);
        assert_eq!(grade_closed("10.0", &key(&["10"])), AnswerStatus::Correct);
        assert_eq!(grade_closed(" Block Coding ", &key(&["block coding"])), AnswerStatus::Correct);
    }

    #[test]
    fn numbers_and_letters() {
        assert_eq!(first_number("x = -11"), Some(-11.0));
        assert_eq!(first_number("x-11"), Some(11.0));
        assert_eq!(first_number("93, 94"), Some(93.0));
        assert_eq!(first_number("none"), None);
        assert_eq!(letter_variables("n + 1"), vec!['n']);
        assert_eq!(letter_variables("block coding"), Vec::<char>::new());
    }
}
