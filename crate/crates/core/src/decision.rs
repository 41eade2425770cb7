use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Task domain. Fixes the decision variant every case in a corpus carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Binary comment moderation: keep or remove.
    Mod,
    /// Five-point toxicity rating.
    Toxicity,
}

impl Domain {
    /// Every decision value of the domain, in canonical order.
    pub fn categories(self) -> Vec<Decision> {
        match self {
            Domain::Mod => vec![
                Decision::Binary(BinaryDecision::Keep),
                Decision::Binary(BinaryDecision::Remove),
            ],
            Domain::Toxicity => (1..=5).map(Decision::Ordinal).collect(),
        }
    }

    pub fn admits(self, decision: Decision) -> bool {
        decision.domain() == self
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Mod => "mod",
            Domain::Toxicity => "toxicity",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mod" => Ok(Domain::Mod),
            "toxicity" => Ok(Domain::Toxicity),
            other => Err(format!("unknown domain `{other}` (expected mod|toxicity)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryDecision {
    Keep,
    Remove,
}

/// A task outcome. Serialized as `"keep"`/`"remove"` or a bare integer 1..=5.
///
/// `Ordinal` levels outside 1..=5 cannot be deserialized; use
/// [`Decision::ordinal`] to build one checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Decision {
    Binary(BinaryDecision),
    Ordinal(u8),
}

impl Decision {
    pub const KEEP: Decision = Decision::Binary(BinaryDecision::Keep);
    pub const REMOVE: Decision = Decision::Binary(BinaryDecision::Remove);

    pub fn ordinal(level: u8) -> Option<Decision> {
        (1..=5).contains(&level).then_some(Decision::Ordinal(level))
    }

    pub fn domain(self) -> Domain {
        match self {
            Decision::Binary(_) => Domain::Mod,
            Decision::Ordinal(_) => Domain::Toxicity,
        }
    }

    /// Position of the value in [`Domain::categories`].
    pub fn category_index(self) -> usize {
        match self {
            Decision::Binary(BinaryDecision::Keep) => 0,
            Decision::Binary(BinaryDecision::Remove) => 1,
            Decision::Ordinal(level) => usize::from(level) - 1,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Binary(BinaryDecision::Keep) => f.write_str("keep"),
            Decision::Binary(BinaryDecision::Remove) => f.write_str("remove"),
            Decision::Ordinal(level) => write!(f, "{level}"),
        }
    }
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "keep" => Ok(Decision::KEEP),
            "remove" => Ok(Decision::REMOVE),
            other => other
                .parse::<u8>()
                .ok()
                .and_then(Decision::ordinal)
                .ok_or_else(|| format!("invalid decision `{s}`")),
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Decision::Binary(BinaryDecision::Keep) => serializer.serialize_str("keep"),
            Decision::Binary(BinaryDecision::Remove) => serializer.serialize_str("remove"),
            Decision::Ordinal(level) => serializer.serialize_u8(*level),
        }
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DecisionVisitor;

        impl Visitor<'_> for DecisionVisitor {
            type Value = Decision;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(r#""keep", "remove" or an integer 1..=5"#)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Decision, E> {
                match v {
                    "keep" => Ok(Decision::KEEP),
                    "remove" => Ok(Decision::REMOVE),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Decision, E> {
                u8::try_from(v)
                    .ok()
                    .and_then(Decision::ordinal)
                    .ok_or_else(|| E::invalid_value(de::Unexpected::Unsigned(v), &self))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Decision, E> {
                u8::try_from(v)
                    .ok()
                    .and_then(Decision::ordinal)
                    .ok_or_else(|| E::invalid_value(de::Unexpected::Signed(v), &self))
            }
        }

        deserializer.deserialize_any(DecisionVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_shapes() {
        assert_eq!(serde_json::to_string(&Decision::KEEP).unwrap(), r#""keep""#);
        assert_eq!(serde_json::to_string(&Decision::Ordinal(4)).unwrap(), "4");
        let d: Decision = serde_json::from_str("3").unwrap();
        assert_eq!(d, Decision::Ordinal(3));
        assert!(serde_json::from_str::<Decision>("6").is_err());
        assert!(serde_json::from_str::<Decision>("0").is_err());
        assert!(serde_json::from_str::<Decision>(r#""Keep""#).is_err());
        assert!(serde_json::from_str::<Decision>("2.5").is_err());
    }

    #[test]
    fn category_indices_match_domain_order() {
        for domain in [Domain::Mod, Domain::Toxicity] {
            for (i, d) in domain.categories().into_iter().enumerate() {
                assert_eq!(d.category_index(), i);
                assert!(domain.admits(d));
            }
        }
    }
}
