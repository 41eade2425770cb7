//! Seeded synthetic corpora with topic structure, for offline runs and tests.
//!
//! Each case is written around one topic from a small vocabulary. A group's
//! gold for a topic is fixed per (group, topic) and flipped with probability
//! `noise`, so nearby cases tend to share decisions within a group and
//! groups disagree on some topics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::RuleSet;
use crate::corpus::{Case, Corpus, CorpusError, GroupSpec, RawRating};
use crate::decision::{Decision, Domain};

const TOPICS: [&[&str]; 8] = [
    &["patch", "matchmaking", "servers", "queue", "lag", "update"],
    &["vaccine", "booster", "dose", "clinic", "appointment", "side"],
    &["roommate", "rent", "dishes", "lease", "landlord", "deposit"],
    &["spoiler", "ending", "boss", "trailer", "sequel", "leak"],
    &["mask", "mandate", "school", "teacher", "policy", "board"],
    &["wedding", "sister", "invite", "dress", "speech", "guest"],
    &["idiot", "stupid", "trash", "clown", "loser", "pathetic"],
    &["refund", "store", "price", "preorder", "discount", "sale"],
];

const FILLER: [&str; 16] = [
    "honestly", "again", "today", "people", "really", "think", "just", "still", "why", "never",
    "always", "this", "week", "everyone", "thing", "maybe",
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub domain: Domain,
    pub cases_per_group: usize,
    /// Probability a case's gold departs from its (group, topic) default.
    pub noise: f64,
    /// Raters per group for each case's raw ratings (toxicity only).
    pub raters_per_group: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(domain: Domain, cases_per_group: usize, seed: u64) -> Self {
        SynthConfig {
            domain,
            cases_per_group,
            noise: 0.15,
            raters_per_group: 5,
            seed,
        }
    }
}

fn slug(group_id: &str) -> String {
    group_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect::<String>()
        .trim_matches('-')
        .to_string()
}

fn text_for(rng: &mut ChaCha8Rng, topic: usize) -> String {
    let words = TOPICS[topic];
    let n_topic = rng.gen_range(3..=5);
    let n_filler = rng.gen_range(2..=4);
    let mut tokens: Vec<&str> = (0..n_topic)
        .map(|_| *words.choose(rng).expect("non-empty topic"))
        .collect();
    tokens.extend((0..n_filler).map(|_| *FILLER.choose(rng).expect("non-empty filler")));
    tokens.shuffle(rng);
    let mut text = tokens.join(" ");
    if let Some(first) = text.get_mut(..1) {
        first.make_ascii_uppercase();
    }
    text.push('.');
    text
}

/// Toxicity level a group gives a topic by default.
fn topic_level(rng: &mut ChaCha8Rng) -> u8 {
    rng.gen_range(1..=5)
}

fn jitter(rng: &mut ChaCha8Rng, level: u8, noise: f64) -> u8 {
    if rng.gen_bool(noise) {
        let up = rng.gen_bool(0.5);
        if up { (level + 1).min(5) } else { level.saturating_sub(1).max(1) }
    } else {
        level
    }
}

/// A corpus with `cases_per_group` cases for each default group of the
/// domain. Identical configs produce identical corpora.
pub fn synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let groups = GroupSpec::defaults(cfg.domain);
    let noise = cfg.noise.clamp(0.0, 1.0);
    // per (group, topic) defaults
    let keep_default: Vec<Vec<bool>> = groups
        .iter()
        .map(|_| TOPICS.iter().map(|_| rng.gen_bool(0.5)).collect())
        .collect();
    let level_default: Vec<Vec<u8>> = groups
        .iter()
        .map(|_| TOPICS.iter().map(|_| topic_level(&mut rng)).collect())
        .collect();

    let mut cases = Vec::with_capacity(groups.len() * cfg.cases_per_group);
    for (gi, group) in groups.iter().enumerate() {
        for i in 0..cfg.cases_per_group {
            let topic = rng.gen_range(0..TOPICS.len());
            let text = text_for(&mut rng, topic);
            let id = format!("{}-{i:04}", slug(&group.id));
            let (gold, raw_ratings) = match cfg.domain {
                Domain::Mod => {
                    let keep = keep_default[gi][topic] ^ rng.gen_bool(noise);
                    (if keep { Decision::KEEP } else { Decision::REMOVE }, None)
                }
                Domain::Toxicity => {
                    let mut ratings = Vec::new();
                    let mut own = Vec::new();
                    for (gj, other) in groups.iter().enumerate() {
                        for _ in 0..cfg.raters_per_group.max(1) {
                            let r = jitter(&mut rng, level_default[gj][topic], noise);
                            if gj == gi {
                                own.push(r);
                            }
                            ratings.push(RawRating(other.id.clone(), r));
                        }
                    }
                    // own-group median as gold
                    own.sort_unstable();
                    (Decision::Ordinal(own[own.len() / 2]), Some(ratings))
                }
            };
            cases.push(Case {
                id,
                text,
                group_id: group.id.clone(),
                gold,
                raw_ratings,
            });
        }
    }
    Corpus::new(cfg.domain, cases)
}

/// Plausible written rules for each default group.
pub fn synthetic_rule_sets(domain: Domain) -> Vec<RuleSet> {
    let rules: [&[&str]; 3] = match domain {
        Domain::Mod => [
            &[
                "Be civil. No personal attacks.",
                "No spoilers without tags.",
                "No low-effort posts or memes.",
            ],
            &[
                "No medical misinformation.",
                "Cite sources for factual claims.",
                "No politics unrelated to the outbreak.",
            ],
            &[
                "Be civil to the poster and each other.",
                "Judgments must address the situation described.",
                "No brigading or posting personal information.",
            ],
        ],
        Domain::Toxicity => [
            &["Insults aimed at a person are toxic.", "Profanity alone is mildly toxic."],
            &["Slurs are extremely toxic.", "Heated disagreement is not toxic."],
            &[
                "Comments targeting my identity are very toxic.",
                "Mockery of a group is toxic.",
            ],
        ],
    };
    GroupSpec::defaults(domain)
        .into_iter()
        .zip(rules)
        .map(|(g, rs)| RuleSet {
            domain,
            group_id: g.id,
            rules: rs.iter().map(|r| r.to_string()).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{controversy_score, split_groups};

    #[test]
    fn deterministic_and_well_formed() {
        for domain in [Domain::Mod, Domain::Toxicity] {
            let cfg = SynthConfig::new(domain, 40, 7);
            let a = synthetic_corpus(&cfg).unwrap();
            let b = synthetic_corpus(&cfg).unwrap();
            assert_eq!(a.cases(), b.cases());
            assert_eq!(a.len(), 120);
            assert_eq!(a.group_ids().len(), 3);
            assert!(split_groups(&a, 1, 10).is_ok());
        }
        let other = synthetic_corpus(&SynthConfig::new(Domain::Mod, 40, 8)).unwrap();
        let base = synthetic_corpus(&SynthConfig::new(Domain::Mod, 40, 7)).unwrap();
        assert_ne!(other.cases(), base.cases());
    }

    #[test]
    fn toxicity_cases_score_for_controversy() {
        let c = synthetic_corpus(&SynthConfig::new(Domain::Toxicity, 5, 3)).unwrap();
        let groups = GroupSpec::defaults(Domain::Toxicity);
        for case in c.cases() {
            let s = controversy_score(case, &groups).unwrap();
            assert!(s.is_finite());
        }
    }

    #[test]
    fn rule_sets_cover_groups() {
        for d in [Domain::Mod, Domain::Toxicity] {
            let sets = synthetic_rule_sets(d);
            assert_eq!(sets.len(), 3);
            assert!(sets.iter().all(|s| !s.rules.is_empty()));
        }
    }
}
