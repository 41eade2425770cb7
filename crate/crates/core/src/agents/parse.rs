//! Parsers for free-text model replies.

use serde::{Deserialize, Serialize};

use crate::decision::{Decision, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedVerdict {
    Precedent,
    DoesNotApply,
    Unparseable,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// The last occurrence of "relevant" decides: preceded by "not" it is
/// [`ParsedVerdict::DoesNotApply`], otherwise [`ParsedVerdict::Precedent`].
/// Matching is case-insensitive and on whole words, so "irrelevant" does
/// not count.
pub fn parse_verdict(text: &str) -> ParsedVerdict {
    let words = words(text);
    match words.iter().rposition(|w| w == "relevant") {
        None => ParsedVerdict::Unparseable,
        Some(i) if i > 0 && words[i - 1] == "not" => ParsedVerdict::DoesNotApply,
        Some(_) => ParsedVerdict::Precedent,
    }
}

/// Last "keep"/"remove" word for moderation, last standalone digit in
/// 1..=5 for toxicity (other digits are skipped, not fatal).
pub fn parse_decision(text: &str, domain: Domain) -> Option<Decision> {
    match domain {
        Domain::Mod => words(text).iter().rev().find_map(|w| match w.as_str() {
            "keep" => Some(Decision::KEEP),
            "remove" => Some(Decision::REMOVE),
            _ => None,
        }),
        Domain::Toxicity => last_standalone_level(text).and_then(Decision::ordinal),
    }
}

fn last_standalone_level(text: &str) -> Option<u8> {
    let chars: Vec<char> = text.chars().collect();
    let at = |i: isize| -> Option<char> {
        usize::try_from(i).ok().and_then(|i| chars.get(i).copied())
    };
    let is_digit = |c: Option<char>| c.is_some_and(|c| c.is_ascii_digit());
    let is_alnum = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
    (0..chars.len() as isize).rev().find_map(|i| {
        let c = at(i)?;
        if !('1'..='5').contains(&c) || is_alnum(at(i - 1)) || is_alnum(at(i + 1)) {
            return None;
        }
        // part of a decimal like 3.5
        if (at(i - 1) == Some('.') && is_digit(at(i - 2)))
            || (at(i + 1) == Some('.') && is_digit(at(i + 2)))
        {
            return None;
        }
        Some(c as u8 - b'0')
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn verdict_examples() {
        assert_eq!(parse_verdict("relevant"), ParsedVerdict::Precedent);
        assert_eq!(parse_verdict("Not relevant."), ParsedVerdict::DoesNotApply);
        assert_eq!(parse_verdict("it depends…"), ParsedVerdict::Unparseable);
        assert_eq!(
            parse_verdict("At first it seemed not relevant, but on reflection: RELEVANT"),
            ParsedVerdict::Precedent
        );
        assert_eq!(
            parse_verdict("Both mention relevant games.\n\nAnswer: not relevant"),
            ParsedVerdict::DoesNotApply
        );
        assert_eq!(parse_verdict("This is irrelevant."), ParsedVerdict::Unparseable);
    }

    #[test]
    fn decision_examples() {
        assert_eq!(parse_decision("...final decision: remove", Domain::Mod), Some(Decision::REMOVE));
        assert_eq!(parse_decision("Keep it? No. Remove? no... KEEP", Domain::Mod), Some(Decision::KEEP));
        assert_eq!(parse_decision("4", Domain::Toxicity), Some(Decision::Ordinal(4)));
        assert_eq!(parse_decision("six", Domain::Toxicity), None);
        assert_eq!(parse_decision("six", Domain::Mod), None);
        assert_eq!(parse_decision("Rule 2 applies. Rating: 3.", Domain::Toxicity), Some(Decision::Ordinal(3)));
        assert_eq!(parse_decision("rating 2, not 7", Domain::Toxicity), Some(Decision::Ordinal(2)));
        assert_eq!(parse_decision("about 3.5 overall", Domain::Toxicity), None);
        assert_eq!(parse_decision("score 12 or 5x", Domain::Toxicity), None);
        assert_eq!(parse_decision("removed", Domain::Mod), None);
    }

    proptest! {
        #[test]
        fn verdict_parser_is_total(s in ".*") {
            // one of three states for any input, never a panic
            let _ = parse_verdict(&s);
            let _ = parse_decision(&s, Domain::Toxicity);
            let _ = parse_decision(&s, Domain::Mod);
        }
    }
}
