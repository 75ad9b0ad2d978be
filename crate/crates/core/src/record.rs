//! Records flowing through the pipeline and the labels some of them carry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Damage severity assigned by annotators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DamageLabel {
    Severe,
    Mild,
    None,
}

impl DamageLabel {
    pub const ALL: [DamageLabel; 3] = [DamageLabel::Severe, DamageLabel::Mild, DamageLabel::None];

    pub fn as_str(self) -> &'static str {
        match self {
            DamageLabel::Severe => "severe",
            DamageLabel::Mild => "mild",
            DamageLabel::None => "none",
        }
    }
}

impl fmt::Display for DamageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DamageLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "severe" => Ok(DamageLabel::Severe),
            "mild" => Ok(DamageLabel::Mild),
            "none" => Ok(DamageLabel::None),
            other => Err(format!("unknown damage label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl Relevance {
    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::Relevant => "relevant",
            Relevance::Irrelevant => "irrelevant",
        }
    }
}

/// One social-media image. `url` accepts `path` as an alias so corpus
/// manifests can be ingested directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_id: Option<String>,
    #[serde(alias = "path")]
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_at: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damage: Option<DamageLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<Relevance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub object_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dup_group: Option<String>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, url: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            post_id: None,
            url: url.into(),
            received_at: None,
            damage: None,
            relevance: None,
            object_tags: Vec::new(),
            dup_group: None,
        }
    }

    pub fn with_damage(mut self, damage: DamageLabel) -> Self {
        self.damage = Some(damage);
        self
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.object_tags = tags.into_iter().map(Into::into).collect();
        self
    }

    pub fn has_labels(&self) -> bool {
        self.damage.is_some() || self.relevance.is_some()
    }
}
