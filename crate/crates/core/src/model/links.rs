use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{LedgerId, UnknownTerm};

/// Typed relation between two ledger entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EdgeKind {
    InfluencedBy,
    Influences,
    Motivates,
    UsesTest,
    Evaluates,
    DeployedAs,
    Remediates,
    Evidence,
    Authorizes,
    CreditsFor,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 10] = [
        EdgeKind::InfluencedBy,
        EdgeKind::Influences,
        EdgeKind::Motivates,
        EdgeKind::UsesTest,
        EdgeKind::Evaluates,
        EdgeKind::DeployedAs,
        EdgeKind::Remediates,
        EdgeKind::Evidence,
        EdgeKind::Authorizes,
        EdgeKind::CreditsFor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::InfluencedBy => "influencedBy",
            EdgeKind::Influences => "influences",
            EdgeKind::Motivates => "motivates",
            EdgeKind::UsesTest => "usesTest",
            EdgeKind::Evaluates => "evaluates",
            EdgeKind::DeployedAs => "deployedAs",
            EdgeKind::Remediates => "remediates",
            EdgeKind::Evidence => "evidence",
            EdgeKind::Authorizes => "authorizes",
            EdgeKind::CreditsFor => "creditsFor",
        }
    }

    /// Matches a relation name case-insensitively, ignoring underscores, so
    /// that `USES_TEST`, `usesTest` and `usestest` all name the same kind.
    pub fn from_relation_name(name: &str) -> Option<EdgeKind> {
        let folded: String = name
            .chars()
            .filter(|c| *c != '_')
            .flat_map(char::to_lowercase)
            .collect();
        EdgeKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_ascii_lowercase() == folded)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = UnknownTerm;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownTerm {
                vocabulary: "edge kind",
                term: s.to_string(),
            })
    }
}

/// Outgoing links declared by an entry. Each listed target yields one edge
/// `(this entry, kind, target)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LinkSet {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub influenced_by: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub influences: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub motivates: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uses_test: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evaluates: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deployed_as: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remediates: Vec<LedgerId>,
    /// Ledger ids or external URIs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authorizes: Vec<LedgerId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub credits_for: Vec<LedgerId>,
}

impl LinkSet {
    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }

    pub fn targets(&self, kind: EdgeKind) -> Vec<&str> {
        match kind {
            EdgeKind::Evidence => self.evidence.iter().map(String::as_str).collect(),
            _ => self.ids(kind).iter().map(LedgerId::as_str).collect(),
        }
    }

    fn ids(&self, kind: EdgeKind) -> &[LedgerId] {
        match kind {
            EdgeKind::InfluencedBy => &self.influenced_by,
            EdgeKind::Influences => &self.influences,
            EdgeKind::Motivates => &self.motivates,
            EdgeKind::UsesTest => &self.uses_test,
            EdgeKind::Evaluates => &self.evaluates,
            EdgeKind::DeployedAs => &self.deployed_as,
            EdgeKind::Remediates => &self.remediates,
            EdgeKind::Evidence => &[],
            EdgeKind::Authorizes => &self.authorizes,
            EdgeKind::CreditsFor => &self.credits_for,
        }
    }

    pub fn ids_mut(&mut self, kind: EdgeKind) -> Option<&mut Vec<LedgerId>> {
        Some(match kind {
            EdgeKind::InfluencedBy => &mut self.influenced_by,
            EdgeKind::Influences => &mut self.influences,
            EdgeKind::Motivates => &mut self.motivates,
            EdgeKind::UsesTest => &mut self.uses_test,
            EdgeKind::Evaluates => &mut self.evaluates,
            EdgeKind::DeployedAs => &mut self.deployed_as,
            EdgeKind::Remediates => &mut self.remediates,
            EdgeKind::Evidence => return None,
            EdgeKind::Authorizes => &mut self.authorizes,
            EdgeKind::CreditsFor => &mut self.credits_for,
        })
    }

    /// All `(kind, target)` pairs in a fixed kind order.
    pub fn iter(&self) -> impl Iterator<Item = (EdgeKind, &str)> + '_ {
        EdgeKind::ALL
            .into_iter()
            .flat_map(move |k| self.targets(k).into_iter().map(move |t| (k, t)))
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_aliases() {
        assert_eq!(EdgeKind::from_relation_name("MOTIVATES"), Some(EdgeKind::Motivates));
        assert_eq!(EdgeKind::from_relation_name("USES_TEST"), Some(EdgeKind::UsesTest));
        assert_eq!(EdgeKind::from_relation_name("EVALUATES"), Some(EdgeKind::Evaluates));
        assert_eq!(EdgeKind::from_relation_name("DEPLOYED_AS"), Some(EdgeKind::DeployedAs));
        assert_eq!(EdgeKind::from_relation_name("influencedBy"), Some(EdgeKind::InfluencedBy));
        assert_eq!(EdgeKind::from_relation_name("CAUSES"), None);
    }

    #[test]
    fn iter_covers_every_list() {
        let id = |s: &str| LedgerId::parse(s).unwrap();
        let links = LinkSet {
            influenced_by: vec![id("pl:contrib:a:1"), id("pl:contrib:a:2")],
            evidence: vec!["https://example.org/minutes".into()],
            credits_for: vec![id("pl:run:a:1")],
            ..Default::default()
        };
        assert_eq!(links.len(), 4);
        assert_eq!(
            links.iter().map(|(k, _)| k).collect::<Vec<_>>(),
            vec![
                EdgeKind::InfluencedBy,
                EdgeKind::InfluencedBy,
                EdgeKind::Evidence,
                EdgeKind::CreditsFor
            ]
        );
    }
}
