use std::collections::BTreeSet;
use std::fmt;

use serde_json::json;
use similar::{ChangeTag, TextDiff};

use super::{NodeReport, ScenarioReport};

/// Differences between the adaptation histories of two reports.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimelineDiff {
    pub lines: Vec<String>,
}

impl TimelineDiff {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

impl fmt::Display for TimelineDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn canonical(node: Option<&NodeReport>) -> Vec<String> {
    node.map(|n| {
        n.timeline
            .iter()
            .filter(|e| e.event.is_adaptation())
            .map(|e| json!({"at": e.at, "event": e.event}).to_string())
            .collect()
    })
    .unwrap_or_default()
}

/// Compares non-tick timeline entries and final states node by node.
pub fn diff_timelines(a: &ScenarioReport, b: &ScenarioReport) -> TimelineDiff {
    let mut lines = Vec::new();
    let ids: BTreeSet<&String> = a.nodes.keys().chain(b.nodes.keys()).collect();
    for id in ids {
        let (na, nb) = (a.nodes.get(id), b.nodes.get(id));
        match (na, nb) {
            (Some(_), None) => lines.push(format!("- node {id}")),
            (None, Some(_)) => lines.push(format!("+ node {id}")),
            _ => {}
        }
        let (la, lb) = (canonical(na), canonical(nb));
        if la != lb {
            lines.push(format!("@@ {id} timeline"));
            let la: Vec<&str> = la.iter().map(String::as_str).collect();
            let lb: Vec<&str> = lb.iter().map(String::as_str).collect();
            let diff = TextDiff::from_slices(&la, &lb);
            for change in diff.iter_all_changes() {
                match change.tag() {
                    ChangeTag::Delete => lines.push(format!("- {}", change.value())),
                    ChangeTag::Insert => lines.push(format!("+ {}", change.value())),
                    ChangeTag::Equal => {}
                }
            }
        }
        if let (Some(x), Some(y)) = (na, nb) {
            if x.final_state != y.final_state {
                lines.push(format!("@@ {id} final state"));
                lines.push(format!("- {}", json!(x.final_state)));
                lines.push(format!("+ {}", json!(y.final_state)));
            }
        }
    }
    TimelineDiff { lines }
}
