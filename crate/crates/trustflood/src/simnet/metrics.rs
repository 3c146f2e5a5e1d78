//! Run metrics and their export encodings.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ids::TaskId;

/// Counters collected over one run.
///
/// Message counts tally deliveries that passed the receiver's loop and
/// deadline gates; sends that die at those gates are visible in the trace
/// but do not count as protocol traffic.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct Metrics {
    pub help_delivered: u64,
    pub notneeded_delivered: u64,
    pub cancelled_delivered: u64,
    /// Distinct nodes that saw a help prompt.
    pub nodes_reached: u64,
    /// Distinct (request, volunteer) offers that reached the requester.
    pub volunteers_count: u64,
    pub re_flood_events: u64,
    /// Final state of every request record, keyed `role:state`.
    pub terminal_state_census: BTreeMap<String, u64>,
    /// Delay from Click_Help to the first volunteer offer, per request.
    pub first_volunteer_latency: BTreeMap<TaskId, u64>,
}

impl Metrics {
    fn census_cell(&self) -> String {
        let mut parts: Vec<String> = self
            .terminal_state_census
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if parts.is_empty() {
            parts.push("-".into());
        }
        parts.join(";")
    }

    fn latency_cell(&self) -> String {
        let mut parts: Vec<String> = self
            .first_volunteer_latency
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if parts.is_empty() {
            parts.push("-".into());
        }
        parts.join(";")
    }

    pub const TSV_HEADER: &'static str = "help_delivered\tnotneeded_delivered\tcancelled_delivered\tnodes_reached\tvolunteers_count\tre_flood_events\tterminal_state_census\tfirst_volunteer_latency";

    /// One tab-separated row matching [`Metrics::TSV_HEADER`].
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.help_delivered,
            self.notneeded_delivered,
            self.cancelled_delivered,
            self.nodes_reached,
            self.volunteers_count,
            self.re_flood_events,
            self.census_cell(),
            self.latency_cell(),
        )
    }

    /// Table form: header plus one row.
    pub fn to_tsv(&self) -> String {
        format!("{}\n{}\n", Self::TSV_HEADER, self.tsv_row())
    }

    /// Line-structured record form (one JSON object per line).
    pub fn to_jsonl(&self) -> String {
        let mut line = serde_json::to_string(self).expect("metrics serialize");
        line.push('\n');
        line
    }
}
