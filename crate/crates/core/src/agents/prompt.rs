//! Chat prompt templates for precedent classification and rule-based
//! decisions.
//!
//! The system prompts and per-item prompts are kept as text files under
//! `templates/`. The toxicity per-item case prompt mirrors the moderation
//! one with post/rating wording. The demonstration pairs are hand-written
//! for this crate.

use serde::{Deserialize, Serialize};

use super::chat::ChatMessage;
use crate::decision::Domain;

const MOD_CASE_SYSTEM: &str = include_str!("../../templates/mod_case_system.txt");
const MOD_RULE_SYSTEM: &str = include_str!("../../templates/mod_rule_system.txt");
const TOXICITY_CASE_SYSTEM: &str = include_str!("../../templates/toxicity_case_system.txt");
const TOXICITY_RULE_SYSTEM: &str = include_str!("../../templates/toxicity_rule_system.txt");
const MOD_CASE_SELECTION: &str = include_str!("../../templates/mod_case_selection.txt");
const TOXICITY_CASE_SELECTION: &str = include_str!("../../templates/toxicity_case_selection.txt");
const RULE_DETERMINATION: &str = include_str!("../../templates/rule_determination.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no value")]
    Unresolved(String),
    #[error("placeholder {{{name}}} appears {count} times, expected exactly once")]
    NotExactlyOnce { name: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    /// Demonstration (user, assistant) turns placed before the item.
    pub examples: Vec<(String, String)>,
    pub per_item: String,
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Substitutes `{name}` placeholders in one pass; substituted text is never
/// rescanned. Every placeholder in the template needs a value and every
/// value must be used exactly once.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut used = vec![0usize; values.len()];
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let name = &after[..close];
                let idx = values
                    .iter()
                    .position(|(k, _)| *k == name)
                    .ok_or_else(|| PromptError::Unresolved(name.to_string()))?;
                used[idx] += 1;
                out.push_str(values[idx].1);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    if let Some((i, count)) = used.iter().enumerate().find(|(_, c)| **c != 1) {
        return Err(PromptError::NotExactlyOnce {
            name: values[i].0.to_string(),
            count: *count,
        });
    }
    Ok(out)
}

/// Numbered rule list used for `{instructions}`.
pub fn format_rules(rules: &[String]) -> String {
    rules
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{}. {}", i + 1, r))
        .collect::<Vec<_>>()
        .join("\n")
}

impl PromptTemplate {
    /// Precedent classification prompt, one candidate per call.
    pub fn case_selection(domain: Domain) -> Self {
        let (system, per_item) = match domain {
            Domain::Mod => (MOD_CASE_SYSTEM, MOD_CASE_SELECTION),
            Domain::Toxicity => (TOXICITY_CASE_SYSTEM, TOXICITY_CASE_SELECTION),
        };
        let examples = case_demonstrations(domain)
            .into_iter()
            .map(|(input, precedent, decision, answer)| {
                let user = render(
                    per_item,
                    &[("input", input), ("precedent", precedent), ("decision", decision)],
                )
                .expect("built-in template renders");
                (user, answer.to_string())
            })
            .collect();
        PromptTemplate {
            system: system.to_string(),
            examples,
            per_item: per_item.to_string(),
        }
    }

    /// Rule-grounded decision prompt.
    pub fn rule(domain: Domain) -> Self {
        let system = match domain {
            Domain::Mod => MOD_RULE_SYSTEM,
            Domain::Toxicity => TOXICITY_RULE_SYSTEM,
        };
        let examples = rule_demonstrations(domain)
            .into_iter()
            .map(|(rules, input, answer)| {
                let rules: Vec<String> = rules.iter().map(|r| r.to_string()).collect();
                let user = render(
                    RULE_DETERMINATION,
                    &[("instructions", &format_rules(&rules)), ("input", input)],
                )
                .expect("built-in template renders");
                (user, answer.to_string())
            })
            .collect();
        PromptTemplate {
            system: system.to_string(),
            examples,
            per_item: RULE_DETERMINATION.to_string(),
        }
    }

    pub fn render_item(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        render(&self.per_item, values)
    }

    /// `[system, (user, assistant)*, user]`.
    pub fn messages(&self, values: &[(&str, &str)]) -> Result<Vec<ChatMessage>, PromptError> {
        let mut messages = Vec::with_capacity(2 + 2 * self.examples.len());
        messages.push(ChatMessage::system(&self.system));
        for (user, assistant) in &self.examples {
            messages.push(ChatMessage::user(user));
            messages.push(ChatMessage::assistant(assistant));
        }
        messages.push(ChatMessage::user(&self.render_item(values)?));
        Ok(messages)
    }
}

type CaseDemo = (&'static str, &'static str, &'static str, &'static str);

fn case_demonstrations(domain: Domain) -> Vec<CaseDemo> {
    match domain {
        Domain::Mod => vec![
            (
                "Does anyone know if the sequel will have local co-op? The trailer didn't say.",
                "Will the remaster support split screen? Can't find it on the store page.",
                "keep",
                "The new comment asks whether an upcoming game supports local multiplayer. \
                 The past comment asks the same kind of question about a different release. \
                 Both are on-topic feature questions with no hostility, so the past decision \
                 speaks directly to this one.\n\nrelevant",
            ),
            (
                "Does anyone know if the sequel will have local co-op? The trailer didn't say.",
                "Anyone who still buys from this publisher is an idiot, enjoy your microtransactions.",
                "remove",
                "The new comment is a neutral question about a game feature. \
                 The past comment insults other users. The reason that comment was removed \
                 does not exist in the new comment, so it should not inform this decision.\n\n\
                 not relevant",
            ),
        ],
        Domain::Toxicity => vec![
            (
                "lol you really thought that take was smart? embarrassing",
                "imagine posting this and thinking you're clever lmao",
                "3",
                "Both posts mock the author of a previous statement with a dismissive, \
                 belittling tone and no slurs or threats. The past rating reflects how this \
                 kind of mockery is perceived, so it applies.\n\nrelevant",
            ),
            (
                "lol you really thought that take was smart? embarrassing",
                "Great thread, thanks for collecting all the sources in one place.",
                "1",
                "The new post is mocking, while the past post is an appreciative comment with \
                 no negative tone. The content differs in the aspect that matters for the \
                 rating.\n\nnot relevant",
            ),
        ],
    }
}

type RuleDemo = (&'static [&'static str], &'static str, &'static str);

fn rule_demonstrations(domain: Domain) -> Vec<RuleDemo> {
    match domain {
        Domain::Mod => vec![
            (
                &["Be civil. No personal attacks.", "Stay on topic.", "No spam or self-promotion."],
                "Check out my channel for the best builds, link in my profile!!!",
                "Rule 1 (civility): no attack on anyone, does not apply.\n\
                 Rule 2 (on topic): loosely about builds, borderline.\n\
                 Rule 3 (spam): the comment exists to promote the poster's channel, applies.\n\
                 A rule is violated.\n\nFinal decision: remove",
            ),
            (
                &["Be civil. No personal attacks.", "Stay on topic.", "No spam or self-promotion."],
                "I disagree, the second act dragged but the ending made up for it.",
                "Rule 1 (civility): polite disagreement, does not apply.\n\
                 Rule 2 (on topic): discusses the game, satisfied.\n\
                 Rule 3 (spam): no promotion, does not apply.\n\
                 No rule is violated.\n\nFinal decision: keep",
            ),
        ],
        Domain::Toxicity => vec![
            (
                &["Insults or name-calling.", "Threats of harm.", "Profanity aimed at a person."],
                "you are a pathetic clown and everyone here knows it",
                "Insults or name-calling: yes, \"pathetic clown\".\n\
                 Threats of harm: none.\n\
                 Profanity aimed at a person: none, but the insult is direct and personal.\n\
                 The content is clearly toxic but not threatening.\n\nRating: 4",
            ),
            (
                &["Insults or name-calling.", "Threats of harm.", "Profanity aimed at a person."],
                "Does anyone have tips for keeping basil alive indoors?",
                "Insults or name-calling: none.\n\
                 Threats of harm: none.\n\
                 Profanity aimed at a person: none.\n\
                 The content is a friendly question.\n\nRating: 1",
            ),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_once_without_rescanning() {
        let out = render("a {x} b {y}", &[("x", "{y}"), ("y", "2")]).unwrap();
        assert_eq!(out, "a {y} b 2");
    }

    #[test]
    fn render_errors() {
        assert_eq!(render("{x}", &[]), Err(PromptError::Unresolved("x".into())));
        assert!(matches!(
            render("{x} {x}", &[("x", "1")]),
            Err(PromptError::NotExactlyOnce { count: 2, .. })
        ));
        assert!(matches!(
            render("{x}", &[("x", "1"), ("y", "2")]),
            Err(PromptError::NotExactlyOnce { count: 0, .. })
        ));
    }

    #[test]
    fn non_placeholder_braces_pass_through() {
        assert_eq!(render("{\"a\": 1} {Upper} {", &[]).unwrap(), "{\"a\": 1} {Upper} {");
    }

    #[test]
    fn system_prompts_end_with_step_by_step() {
        for domain in [Domain::Mod, Domain::Toxicity] {
            assert!(PromptTemplate::case_selection(domain).system.ends_with("Think step by step."));
            assert!(PromptTemplate::rule(domain).system.ends_with("Think step by step."));
        }
    }

    #[test]
    fn message_layout() {
        let t = PromptTemplate::case_selection(Domain::Mod);
        let m = t.messages(&[("input", "a"), ("precedent", "b"), ("decision", "keep")]).unwrap();
        assert_eq!(m.len(), 2 + 2 * t.examples.len());
        assert_eq!(m[0].content, t.system);
        assert!(m.last().unwrap().content.contains("\"keep\""));
    }

    #[test]
    fn demonstration_answers_parse() {
        use crate::agents::parse::{parse_decision, parse_verdict, ParsedVerdict};
        for domain in [Domain::Mod, Domain::Toxicity] {
            for (_, a) in PromptTemplate::case_selection(domain).examples {
                assert_ne!(parse_verdict(&a), ParsedVerdict::Unparseable);
            }
            for (_, a) in PromptTemplate::rule(domain).examples {
                assert!(parse_decision(&a, domain).is_some(), "{a}");
            }
        }
    }
}
