//! Link-failure scenarios S1..S9, failure injection, and survivability
//! verdicts.
//!
//! The reference survivability matrix is the published one with its
//! original-design row normalised to nine columns: the printed row carries a
//! tenth trailing entry that has no matching link description, and it is
//! dropped here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{DeviceKind, LinkClass, LinkId, Topology, Variant, DEFAULT_HOP_LIMIT};
use crate::traffic::TrafficMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FailureError {
    #[error("link {0} does not exist in the topology")]
    UnknownLink(LinkId),
    #[error("link {link} is a {actual} link, scenario {scenario} fails {expected} links")]
    ClassMismatch { link: LinkId, scenario: ScenarioClass, expected: LinkClass, actual: LinkClass },
    #[error("topology is the {actual} design, expected {expected}")]
    VariantMismatch { expected: Variant, actual: Variant },
    #[error("unknown scenario `{0}` (expected S1..S9)")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioClass {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
    S9,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 9] = [
        ScenarioClass::S1,
        ScenarioClass::S2,
        ScenarioClass::S3,
        ScenarioClass::S4,
        ScenarioClass::S5,
        ScenarioClass::S6,
        ScenarioClass::S7,
        ScenarioClass::S8,
        ScenarioClass::S9,
    ];

    pub fn link_class(self) -> LinkClass {
        LinkClass::ALL[self.index()]
    }

    pub fn from_link_class(cls: LinkClass) -> ScenarioClass {
        let i = LinkClass::ALL.iter().position(|&c| c == cls).expect("ALL lists every class");
        ScenarioClass::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ScenarioClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index() + 1)
    }
}

impl FromStr for ScenarioClass {
    type Err = FailureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: usize = s
            .strip_prefix(['S', 's'])
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| FailureError::UnknownScenario(s.to_string()))?;
        match n {
            1..=9 => Ok(ScenarioClass::ALL[n - 1]),
            _ => Err(FailureError::UnknownScenario(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FailureSpec {
    pub scenario: ScenarioClass,
    pub target: LinkId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    NA,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
            Verdict::NA => "NA",
        })
    }
}

/// Published survivability of each design against S1..S9 (normalised).
pub fn reference_verdicts(variant: Variant) -> [Verdict; 9] {
    use Verdict::*;
    match variant {
        Variant::Original => [NA, No, NA, No, Yes, No, No, Yes, No],
        Variant::Modified => [Yes, Yes, Yes, Yes, Yes, Yes, Yes, Yes, NA],
    }
}

/// Links of `t` that scenario `s` can fail, in id order.
pub fn enumerate_targets(t: &Topology, s: ScenarioClass) -> Vec<LinkId> {
    t.links_of(s.link_class()).map(|l| l.id).collect()
}

/// Degraded copy of `t` with the failure's target link removed.
pub fn apply(t: &Topology, f: &FailureSpec) -> Result<Topology, FailureError> {
    let link = t.link(f.target).ok_or(FailureError::UnknownLink(f.target))?;
    let expected = f.scenario.link_class();
    if link.cls != expected {
        return Err(FailureError::ClassMismatch { link: f.target, scenario: f.scenario, expected, actual: link.cls });
    }
    t.without_link(f.target).map_err(|_| FailureError::UnknownLink(f.target))
}

/// Removes every backplane-to-server link of one rack at once, modelling the
/// loss of the backplane itself. Not part of the single-link scenario set.
pub fn fail_backplane(t: &Topology, rack: usize) -> Topology {
    let mut out = t.clone();
    let doomed: Vec<LinkId> = t
        .links_of(LinkClass::BackplaneToServer)
        .filter(|l| t.device(l.a).kind == DeviceKind::Backplane && t.device(l.a).locus.rack == rack)
        .map(|l| l.id)
        .collect();
    for id in doomed {
        out = out.without_link(id).expect("link listed from the same topology");
    }
    out
}

/// Whether every demand of `traffic` still has a route when `target` fails.
fn survives_target(t: &Topology, target: LinkId, traffic: &TrafficMatrix, hop_limit: usize) -> bool {
    let degraded = match t.without_link(target) {
        Ok(d) => d,
        Err(_) => return false,
    };
    traffic.demands().iter().all(|d| degraded.reachable_within(d.src, d.dst, hop_limit))
}

/// Survivability of `t` against scenario `s` for the given demands: `NA` if
/// the link class is absent, `Yes` if every target leaves every demand
/// routable within the default hop limit, otherwise `No`.
///
/// Under a failure every direction-respecting path is admissible, so the
/// check reduces to bounded reachability on the degraded graph.
pub fn survives(
    variant: Variant,
    s: ScenarioClass,
    t: &Topology,
    traffic: &TrafficMatrix,
) -> Result<Verdict, FailureError> {
    survives_within(variant, s, t, traffic, DEFAULT_HOP_LIMIT)
}

pub fn survives_within(
    variant: Variant,
    s: ScenarioClass,
    t: &Topology,
    traffic: &TrafficMatrix,
    hop_limit: usize,
) -> Result<Verdict, FailureError> {
    if t.variant() != variant {
        return Err(FailureError::VariantMismatch { expected: variant, actual: t.variant() });
    }
    let targets = enumerate_targets(t, s);
    if targets.is_empty() {
        return Ok(Verdict::NA);
    }
    let ok = targets.iter().all(|&l| survives_target(t, l, traffic, hop_limit));
    Ok(if ok { Verdict::Yes } else { Verdict::No })
}

/// Verdicts for S1..S9 on `t` against `traffic`.
pub fn verdict_row(t: &Topology, traffic: &TrafficMatrix) -> [Verdict; 9] {
    let mut row = [Verdict::NA; 9];
    for s in ScenarioClass::ALL {
        row[s.index()] = survives(t.variant(), s, t, traffic).expect("variant taken from the topology");
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_cell, CellParams};

    fn cell(v: Variant) -> Topology {
        build_cell(&CellParams::with_variant(v)).unwrap()
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in ScenarioClass::ALL {
            assert_eq!(s.to_string().parse::<ScenarioClass>().unwrap(), s);
            assert_eq!(ScenarioClass::from_link_class(s.link_class()), s);
        }
        assert!("S10".parse::<ScenarioClass>().is_err());
        assert!("X1".parse::<ScenarioClass>().is_err());
    }

    #[test]
    fn target_counts() {
        let m = cell(Variant::Modified);
        assert!(enumerate_targets(&m, ScenarioClass::S9).is_empty());
        assert_eq!(enumerate_targets(&m, ScenarioClass::S1).len(), 16);
        let o = cell(Variant::Original);
        assert!(enumerate_targets(&o, ScenarioClass::S1).is_empty());
        assert!(enumerate_targets(&o, ScenarioClass::S3).is_empty());
    }

    #[test]
    fn apply_removes_exactly_the_target() {
        let t = cell(Variant::Modified);
        let target = enumerate_targets(&t, ScenarioClass::S4)[0];
        let spec = FailureSpec { scenario: ScenarioClass::S4, target };
        let d = apply(&t, &spec).unwrap();
        assert!(d.link(target).is_none());
        assert_eq!(d.links().len() + 1, t.links().len());
        assert!(t.link(target).is_some(), "input must be untouched");
        for l in d.links() {
            assert_eq!(t.link(l.id), Some(l));
        }
        assert_eq!(apply(&d, &spec), Err(FailureError::UnknownLink(target)));
    }

    #[test]
    fn apply_rejects_class_mismatch() {
        let t = cell(Variant::Modified);
        let target = enumerate_targets(&t, ScenarioClass::S1)[0];
        let err = apply(&t, &FailureSpec { scenario: ScenarioClass::S2, target }).unwrap_err();
        assert!(matches!(err, FailureError::ClassMismatch { .. }));
    }

    #[test]
    fn variant_mismatch_is_an_error() {
        let t = cell(Variant::Modified);
        let traffic = TrafficMatrix::all_pairs(&t, 1e6);
        assert!(survives(Variant::Original, ScenarioClass::S1, &t, &traffic).is_err());
    }
}
