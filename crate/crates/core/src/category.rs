//! Hierarchical MQM error categories and the closed registry they are
//! checked against.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NON_TRANSLATION: &str = "Non-translation";

/// `Top/Sub` (e.g. `Accuracy/Mistranslation`) or a bare top-level name for
/// categories without children (`Other`, `Non-translation`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Category {
    top: String,
    sub: Option<String>,
}

impl Category {
    pub fn new(top: impl Into<String>, sub: Option<&str>) -> Self {
        Self {
            top: top.into(),
            sub: sub.map(ToString::to_string),
        }
    }

    pub fn leaf(top: &str, sub: &str) -> Self {
        Self::new(top, Some(sub))
    }

    pub fn non_translation() -> Self {
        Self::new(NON_TRANSLATION, None)
    }

    pub fn is_non_translation(&self) -> bool {
        self.top == NON_TRANSLATION && self.sub.is_none()
    }

    pub fn top(&self) -> &str {
        &self.top
    }

    pub fn sub(&self) -> Option<&str> {
        self.sub.as_deref()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.sub {
            Some(sub) => write!(f, "{}/{}", self.top, sub),
            None => f.write_str(&self.top),
        }
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (top, sub) = match s.split_once('/') {
            Some((top, sub)) => (top.trim(), Some(sub.trim())),
            None => (s.trim(), None),
        };
        if top.is_empty() || sub.is_some_and(|sub| sub.is_empty() || sub.contains('/')) {
            return Err(Error::MalformedCategory(s.to_string()));
        }
        Ok(Category::new(top, sub))
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Closed set of admissible categories: top-level name → permitted children.
/// A top-level entry with no children admits only the bare top-level name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryRegistry {
    entries: BTreeMap<String, Vec<String>>,
}

impl CategoryRegistry {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Self {
        Self { entries }
    }

    /// MQM hierarchy used for WMT annotation (Freitag et al., 2021).
    pub fn mqm_default() -> Self {
        let table: &[(&str, &[&str])] = &[
            (
                "Accuracy",
                &["Addition", "Omission", "Mistranslation", "Untranslated text"],
            ),
            (
                "Fluency",
                &[
                    "Punctuation",
                    "Spelling",
                    "Grammar",
                    "Register",
                    "Inconsistency",
                    "Character encoding",
                ],
            ),
            (
                "Terminology",
                &["Inappropriate for context", "Inconsistent use"],
            ),
            ("Style", &["Awkward"]),
            (
                "Locale convention",
                &[
                    "Address format",
                    "Currency format",
                    "Date format",
                    "Name format",
                    "Telephone format",
                    "Time format",
                ],
            ),
            ("Other", &[]),
            ("Source error", &[]),
            (NON_TRANSLATION, &[]),
        ];
        let entries = table
            .iter()
            .map(|(top, subs)| {
                (
                    top.to_string(),
                    subs.iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect();
        Self { entries }
    }

    pub fn contains(&self, category: &Category) -> bool {
        match (self.entries.get(category.top()), category.sub()) {
            (Some(subs), None) => subs.is_empty(),
            (Some(subs), Some(sub)) => subs.iter().any(|s| s == sub),
            (None, _) => false,
        }
    }

    pub fn check(&self, category: &Category) -> Result<()> {
        if self.contains(category) {
            Ok(())
        } else {
            Err(Error::UnknownCategory(category.to_string()))
        }
    }

    /// Parse and check in one step.
    pub fn parse(&self, raw: &str) -> Result<Category> {
        let category: Category = raw.parse()?;
        self.check(&category)?;
        Ok(category)
    }

    /// Every selectable category (children, or the top level itself when it
    /// has none), in registry order, excluding Non-translation.
    pub fn leaves(&self) -> Vec<Category> {
        let mut out = Vec::new();
        for (top, subs) in &self.entries {
            if top == NON_TRANSLATION {
                continue;
            }
            if subs.is_empty() {
                out.push(Category::new(top.as_str(), None));
            } else {
                out.extend(subs.iter().map(|s| Category::leaf(top, s)));
            }
        }
        out
    }
}

impl Default for CategoryRegistry {
    fn default() -> Self {
        Self::mqm_default()
    }
}
