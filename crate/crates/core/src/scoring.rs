//! MQM penalty scores: per-error weights from a first-match rule table,
//! summed per segment and averaged per system. Lower is better.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::annotation::{ErrorAnnotation, SegmentAnnotation, Severity};
use crate::category::Category;
use crate::error::{Error, Result};

/// `*` (anything), `Top/*` (any child of a top level) or an exact category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CategoryMatch {
    Any,
    Top(String),
    Exact(Category),
}

impl CategoryMatch {
    pub fn matches(&self, category: &Category) -> bool {
        match self {
            CategoryMatch::Any => true,
            CategoryMatch::Top(top) => category.top() == top,
            CategoryMatch::Exact(exact) => exact == category,
        }
    }
}

impl fmt::Display for CategoryMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CategoryMatch::Any => f.write_str("*"),
            CategoryMatch::Top(top) => write!(f, "{top}/*"),
            CategoryMatch::Exact(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for CategoryMatch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "*" {
            Ok(CategoryMatch::Any)
        } else if let Some(top) = s.strip_suffix("/*") {
            Ok(CategoryMatch::Top(top.trim().to_string()))
        } else {
            s.parse().map(CategoryMatch::Exact)
        }
    }
}

impl Serialize for CategoryMatch {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CategoryMatch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

fn any_category() -> CategoryMatch {
    CategoryMatch::Any
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRule {
    /// `None` matches both severities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default = "any_category")]
    pub category: CategoryMatch,
    pub weight: f64,
}

impl WeightRule {
    pub fn new(severity: Option<Severity>, category: CategoryMatch, weight: f64) -> Self {
        Self {
            severity,
            category,
            weight,
        }
    }

    fn matches(&self, error: &ErrorAnnotation) -> bool {
        self.severity.is_none_or(|s| s == error.severity) && self.category.matches(&error.category)
    }
}

/// Ordered rule list, first match wins; `default_weight` catches everything
/// else so the scheme is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct WeightScheme {
    rules: Vec<WeightRule>,
    default_weight: f64,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    rules: Vec<WeightRule>,
    default_weight: f64,
}

impl TryFrom<RawScheme> for WeightScheme {
    type Error = Error;

    fn try_from(raw: RawScheme) -> Result<Self> {
        WeightScheme::new(raw.rules, raw.default_weight)
    }
}

impl From<WeightScheme> for RawScheme {
    fn from(w: WeightScheme) -> Self {
        RawScheme {
            rules: w.rules,
            default_weight: w.default_weight,
        }
    }
}

fn check_weight(weight: f64, what: &str) -> Result<()> {
    if weight.is_finite() && weight >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidWeights(format!(
            "{what} has weight {weight}; weights must be finite and >= 0"
        )))
    }
}

impl WeightScheme {
    pub fn new(rules: Vec<WeightRule>, default_weight: f64) -> Result<Self> {
        for (i, rule) in rules.iter().enumerate() {
            check_weight(rule.weight, &format!("rule #{i}"))?;
        }
        check_weight(default_weight, "default rule")?;
        Ok(Self {
            rules,
            default_weight,
        })
    }

    /// Non-translation 25, Major 5, Minor Fluency/Punctuation 0.1, any other
    /// Minor 1.
    pub fn mqm_default() -> Self {
        Self {
            rules: alloc::vec![
                WeightRule::new(None, CategoryMatch::Exact(Category::non_translation()), 25.0),
                WeightRule::new(Some(Severity::Major), CategoryMatch::Any, 5.0),
                WeightRule::new(
                    Some(Severity::Minor),
                    CategoryMatch::Exact(Category::leaf("Fluency", "Punctuation")),
                    0.1,
                ),
            ],
            default_weight: 1.0,
        }
    }

    /// Every error weighs `weight`.
    pub fn uniform(weight: f64) -> Result<Self> {
        Self::new(Vec::new(), weight)
    }

    pub fn rules(&self) -> &[WeightRule] {
        &self.rules
    }

    pub fn default_weight(&self) -> f64 {
        self.default_weight
    }

    pub fn weight_of(&self, error: &ErrorAnnotation) -> f64 {
        self.rules
            .iter()
            .find(|rule| rule.matches(error))
            .map_or(self.default_weight, |rule| rule.weight)
    }

    /// Penalty of an error list. Weights are summed in ascending order so the
    /// result depends only on the multiset of errors, which keeps tie
    /// detection in pairwise ranking exact.
    pub fn score_errors(&self, errors: &[ErrorAnnotation]) -> f64 {
        let mut weights: Vec<f64> = errors.iter().map(|e| self.weight_of(e)).collect();
        weights.sort_by(f64::total_cmp);
        weights.into_iter().fold(0.0, |acc, w| acc + w)
    }
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self::mqm_default()
    }
}

pub fn error_weight(error: &ErrorAnnotation, scheme: &WeightScheme) -> f64 {
    scheme.weight_of(error)
}

pub fn segment_score(annotation: &SegmentAnnotation, scheme: &WeightScheme) -> f64 {
    scheme.score_errors(&annotation.errors)
}

/// Mean segment penalty over every annotated segment of one system.
pub fn system_score<'a>(
    annotations: impl IntoIterator<Item = &'a SegmentAnnotation>,
    scheme: &WeightScheme,
) -> Result<f64> {
    let (total, n) = annotations
        .into_iter()
        .fold((0.0, 0usize), |(total, n), a| (total + segment_score(a, scheme), n + 1));
    if n == 0 {
        return Err(Error::EmptyAnnotationSet);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{ItemKey, Side};
    use alloc::vec;
    use proptest::prelude::*;

    fn err(category: &str, severity: Severity) -> ErrorAnnotation {
        ErrorAnnotation::new("e", Side::Target, 0, 1, category.parse().unwrap(), severity)
    }

    fn seg(errors: Vec<ErrorAnnotation>) -> SegmentAnnotation {
        SegmentAnnotation::initial(&ItemKey::new("d", 0, "s"), "r", errors)
    }

    #[test]
    fn default_scheme_lookup() {
        let w = WeightScheme::mqm_default();
        assert_eq!(error_weight(&err("Accuracy/Mistranslation", Severity::Major), &w), 5.0);
        assert_eq!(error_weight(&err("Fluency/Punctuation", Severity::Minor), &w), 0.1);
        assert_eq!(error_weight(&err("Fluency/Punctuation", Severity::Major), &w), 5.0);
        assert_eq!(error_weight(&err("Style/Awkward", Severity::Minor), &w), 1.0);
        assert_eq!(error_weight(&err("Non-translation", Severity::Minor), &w), 25.0);
        assert_eq!(error_weight(&err("Non-translation", Severity::Major), &w), 25.0);
    }

    #[test]
    fn uniform_scheme() {
        let w = WeightScheme::uniform(1.0).unwrap();
        assert_eq!(error_weight(&err("Style/Awkward", Severity::Major), &w), 1.0);
    }

    #[test]
    fn segment_sums() {
        let w = WeightScheme::mqm_default();
        assert_eq!(segment_score(&seg(vec![]), &w), 0.0);
        let a = seg(vec![
            err("Accuracy/Mistranslation", Severity::Major),
            err("Fluency/Grammar", Severity::Minor),
        ]);
        assert_eq!(segment_score(&a, &w), 6.0);
        let b = seg(vec![
            err("Fluency/Punctuation", Severity::Minor),
            err("Style/Awkward", Severity::Major),
        ]);
        assert!((segment_score(&b, &w) - 5.1).abs() < 1e-12);
    }

    #[test]
    fn empty_segment_score_is_positive_zero() {
        // float `Sum` starts from -0.0; the fold from 0.0 must not
        let s = segment_score(&seg(vec![]), &WeightScheme::mqm_default());
        assert!(s.is_sign_positive());
    }

    #[test]
    fn system_means() {
        let w = WeightScheme::uniform(1.0).unwrap();
        let mk = |n: usize| seg((0..n).map(|_| err("Other", Severity::Minor)).collect());
        assert_eq!(system_score(&[mk(0), mk(6)], &w).unwrap(), 3.0);
        assert_eq!(system_score(&[mk(1), mk(1), mk(4)], &w).unwrap(), 2.0);
        let d = WeightScheme::mqm_default();
        let single = seg(vec![
            err("Fluency/Punctuation", Severity::Minor),
            err("Style/Awkward", Severity::Major),
        ]);
        assert!((system_score([&single], &d).unwrap() - 5.1).abs() < 1e-12);
        assert_eq!(system_score(&[], &w), Err(Error::EmptyAnnotationSet));
    }

    #[test]
    fn rejects_negative_or_nan_weights() {
        assert!(WeightScheme::uniform(-1.0).is_err());
        assert!(WeightScheme::new(vec![WeightRule::new(None, CategoryMatch::Any, f64::NAN)], 1.0).is_err());
        let bad = r#"{"rules":[],"default_weight":-2}"#;
        assert!(serde_json::from_str::<WeightScheme>(bad).is_err());
    }

    #[test]
    fn config_round_trip() {
        let w = WeightScheme::mqm_default();
        let json = serde_json::to_string(&w).unwrap();
        assert!(json.contains(r#""category":"Fluency/Punctuation""#));
        let back: WeightScheme = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
        let top: WeightScheme =
            serde_json::from_str(r#"{"rules":[{"category":"Fluency/*","weight":2}],"default_weight":1}"#).unwrap();
        assert_eq!(top.weight_of(&err("Fluency/Spelling", Severity::Major)), 2.0);
        assert_eq!(top.weight_of(&err("Accuracy/Omission", Severity::Major)), 1.0);
    }

    const CATEGORIES: [&str; 5] = [
        "Accuracy/Mistranslation",
        "Fluency/Punctuation",
        "Fluency/Grammar",
        "Style/Awkward",
        "Non-translation",
    ];

    fn arb_error() -> impl Strategy<Value = ErrorAnnotation> {
        (0usize..CATEGORIES.len(), prop::bool::ANY).prop_map(|(c, major)| {
            err(CATEGORIES[c], if major { Severity::Major } else { Severity::Minor })
        })
    }

    proptest! {
        #[test]
        fn additive(a in prop::collection::vec(arb_error(), 0..8), b in prop::collection::vec(arb_error(), 0..8)) {
            let w = WeightScheme::mqm_default();
            let mut both = a.clone();
            both.extend(b.iter().cloned());
            let lhs = w.score_errors(&both);
            let rhs = w.score_errors(&a) + w.score_errors(&b);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn monotone(a in prop::collection::vec(arb_error(), 0..8), extra in arb_error()) {
            let w = WeightScheme::mqm_default();
            let mut more = a.clone();
            more.push(extra);
            prop_assert!(w.score_errors(&more) >= w.score_errors(&a));
        }

        #[test]
        fn permutation_invariant_bitwise(a in prop::collection::vec(arb_error(), 0..10), rot in 0usize..10) {
            let w = WeightScheme::mqm_default();
            let mut b = a.clone();
            if !b.is_empty() {
                let k = rot % b.len();
                b.rotate_left(k);
            }
            b.reverse();
            prop_assert_eq!(w.score_errors(&a).to_bits(), w.score_errors(&b).to_bits());
        }
    }
}
