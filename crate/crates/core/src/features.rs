//! The closed vocabulary of 20 control codes in four feature families.
//!
//! Codes order by family (big5, humVal, argSch, argType) and then by name;
//! that order is the canonical placement order for code tokens.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureFamily {
    Big5,
    HumVal,
    ArgSch,
    ArgType,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::Big5,
        FeatureFamily::HumVal,
        FeatureFamily::ArgSch,
        FeatureFamily::ArgType,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFamily::Big5 => "big5",
            FeatureFamily::HumVal => "humVal",
            FeatureFamily::ArgSch => "argSch",
            FeatureFamily::ArgType => "argType",
        }
    }

    /// Value-based families are big5 and humVal; the rest are structural.
    pub fn is_value_based(self) -> bool {
        matches!(self, FeatureFamily::Big5 | FeatureFamily::HumVal)
    }

    /// Single-label families yield exactly one code per side.
    pub fn is_single_label(self) -> bool {
        matches!(self, FeatureFamily::Big5 | FeatureFamily::ArgSch)
    }

    pub fn codes(self) -> impl Iterator<Item = ControlCode> {
        ControlCode::ALL.into_iter().filter(move |c| c.family() == self)
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().replace(['_', '-'], "").as_str() {
            "big5" | "personality" => Ok(FeatureFamily::Big5),
            "humval" | "values" | "humanvalues" => Ok(FeatureFamily::HumVal),
            "argsch" | "scheme" | "argumentscheme" => Ok(FeatureFamily::ArgSch),
            "argtype" | "argumenttype" => Ok(FeatureFamily::ArgType),
            _ => Err(Error::Schema(format!("unknown feature family `{s}`"))),
        }
    }
}

impl Serialize for FeatureFamily {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for FeatureFamily {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControlCode {
    Agreeableness,
    Conscientiousness,
    Extraversion,
    Neuroticism,
    Openness,
    Achievement,
    BenevolenceCaring,
    SecurityPersonal,
    SecuritySocietal,
    SelfDirectionAction,
    UniversalismConcern,
    FromConsequence,
    FromSourceAuthorityKnowledge,
    GoalMeans,
    RuleOrPrinciple,
    Denouncing,
    Facts,
    Hypocrisy,
    Positive,
    Question,
}

impl ControlCode {
    pub const ALL: [ControlCode; 20] = [
        ControlCode::Agreeableness,
        ControlCode::Conscientiousness,
        ControlCode::Extraversion,
        ControlCode::Neuroticism,
        ControlCode::Openness,
        ControlCode::Achievement,
        ControlCode::BenevolenceCaring,
        ControlCode::SecurityPersonal,
        ControlCode::SecuritySocietal,
        ControlCode::SelfDirectionAction,
        ControlCode::UniversalismConcern,
        ControlCode::FromConsequence,
        ControlCode::FromSourceAuthorityKnowledge,
        ControlCode::GoalMeans,
        ControlCode::RuleOrPrinciple,
        ControlCode::Denouncing,
        ControlCode::Facts,
        ControlCode::Hypocrisy,
        ControlCode::Positive,
        ControlCode::Question,
    ];

    pub fn family(self) -> FeatureFamily {
        use ControlCode::*;
        match self {
            Agreeableness | Conscientiousness | Extraversion | Neuroticism | Openness => {
                FeatureFamily::Big5
            }
            Achievement | BenevolenceCaring | SecurityPersonal | SecuritySocietal
            | SelfDirectionAction | UniversalismConcern => FeatureFamily::HumVal,
            FromConsequence | FromSourceAuthorityKnowledge | GoalMeans | RuleOrPrinciple => {
                FeatureFamily::ArgSch
            }
            Denouncing | Facts | Hypocrisy | Positive | Question => FeatureFamily::ArgType,
        }
    }

    pub fn name(self) -> &'static str {
        use ControlCode::*;
        match self {
            Agreeableness => "agreeableness",
            Conscientiousness => "conscientiousness",
            Extraversion => "extraversion",
            Neuroticism => "neuroticism",
            Openness => "openness",
            Achievement => "achievement",
            BenevolenceCaring => "benevolence_caring",
            SecurityPersonal => "security_personal",
            SecuritySocietal => "security_societal",
            SelfDirectionAction => "self_direction_action",
            UniversalismConcern => "universalism_concern",
            FromConsequence => "from_consequence",
            FromSourceAuthorityKnowledge => "from_source_authority_knowledge",
            GoalMeans => "goal_means",
            RuleOrPrinciple => "rule_or_principle",
            Denouncing => "denouncing",
            Facts => "facts",
            Hypocrisy => "hypocrisy",
            Positive => "positive",
            Question => "question",
        }
    }

    /// Vocabulary token used when the code conditions a model.
    pub fn token(self) -> String {
        format!("<{}:{}>", self.family().as_str().to_lowercase(), self.name())
    }

    /// The value category label (as named in the value taxonomy) behind a
    /// humVal code.
    pub fn value_label(self) -> Option<&'static str> {
        use ControlCode::*;
        Some(match self {
            Achievement => "Achievement",
            BenevolenceCaring => "Benevolence: caring",
            SecurityPersonal => "Security: personal",
            SecuritySocietal => "Security: societal",
            SelfDirectionAction => "Self-direction: action",
            UniversalismConcern => "Universalism: concern",
            _ => return None,
        })
    }

    pub fn from_value_label(label: &str) -> Option<ControlCode> {
        FeatureFamily::HumVal
            .codes()
            .find(|c| c.value_label() == Some(label))
    }
}

impl fmt::Display for ControlCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControlCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim();
        ControlCode::ALL
            .into_iter()
            .find(|c| c.name() == key || c.token() == key || c.value_label() == Some(key))
            .ok_or_else(|| Error::Schema(format!("`{s}` is not a control code")))
    }
}

impl Serialize for ControlCode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ControlCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of control codes in canonical order.
pub type FeatureSet = BTreeSet<ControlCode>;

/// Keeps only the codes of the given families.
pub fn filter_families(codes: &FeatureSet, families: &BTreeSet<FeatureFamily>) -> FeatureSet {
    codes
        .iter()
        .copied()
        .filter(|c| families.contains(&c.family()))
        .collect()
}

/// Parses a comma/plus separated family list; `none`, `baseline` and the
/// empty string denote the empty set and `all` every family.
pub fn parse_families(spec: &str) -> Result<BTreeSet<FeatureFamily>> {
    let trimmed = spec.trim();
    match trimmed.to_lowercase().as_str() {
        "" | "none" | "baseline" => return Ok(BTreeSet::new()),
        "all" => return Ok(FeatureFamily::ALL.into_iter().collect()),
        _ => {}
    }
    trimmed
        .split([',', '+'])
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}
