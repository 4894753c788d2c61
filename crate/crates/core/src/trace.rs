//! Execution traces. Every secure operator records what an adversarial host
//! could observe: which classes it emitted or dropped, which class pairs a
//! join expanded, which aggregation bins it released, and how many
//! comparisons each step spent. Two executions are indistinguishable at class
//! granularity exactly when their canonical traces are equal, so trace
//! equality is the property the whole test suite leans on.
//!
//! Serialization is one JSON object per line in canonical event order
//! followed by a totals line; equal traces serialize to identical bytes.

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ClassEmit,
    ClassDrop,
    PairEmit,
    BinEmit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub node: u32,
    pub kind: EventKind,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class2: Option<String>,
    /// Bin index for aggregation events; zero elsewhere.
    #[serde(default)]
    pub seq: u64,
    /// Tuples emitted by this event.
    pub card: u64,
    /// Comparisons charged to this event.
    pub cmp: u64,
}

impl TraceEvent {
    fn key(&self) -> (u32, &str, &str, u64, EventKind) {
        (self.node, self.class.as_str(), self.class2.as_deref().unwrap_or(""), self.seq, self.kind)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Totals {
    events: u64,
    card: u64,
    cmp: u64,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn class_emit(&mut self, node: u32, class: &str, card: u64, cmp: u64) {
        self.events.push(TraceEvent {
            node,
            kind: EventKind::ClassEmit,
            class: class.to_string(),
            class2: None,
            seq: 0,
            card,
            cmp,
        });
    }

    pub fn class_drop(&mut self, node: u32, class: &str, cmp: u64) {
        self.events.push(TraceEvent {
            node,
            kind: EventKind::ClassDrop,
            class: class.to_string(),
            class2: None,
            seq: 0,
            card: 0,
            cmp,
        });
    }

    pub fn pair_emit(&mut self, node: u32, left: &str, right: &str, card: u64, cmp: u64) {
        self.events.push(TraceEvent {
            node,
            kind: EventKind::PairEmit,
            class: left.to_string(),
            class2: Some(right.to_string()),
            seq: 0,
            card,
            cmp,
        });
    }

    pub fn bin_emit(&mut self, node: u32, class: &str, bin: u64, card: u64, cmp: u64) {
        self.events.push(TraceEvent {
            node,
            kind: EventKind::BinEmit,
            class: class.to_string(),
            class2: None,
            seq: bin,
            card,
            cmp,
        });
    }

    pub fn absorb(&mut self, other: Trace) {
        self.events.extend(other.events);
    }

    /// Sorts events into canonical order: node id, then class keys, then bin
    /// index. Event identity within a node is unique, so canonicalized traces
    /// from any execution interleaving agree.
    pub fn canonicalize(&mut self) {
        self.events.sort_by(|a, b| a.key().cmp(&b.key()));
    }

    pub fn total_card(&self) -> u64 {
        self.events.iter().map(|e| e.card).sum()
    }

    pub fn total_cmp(&self) -> u64 {
        self.events.iter().map(|e| e.cmp).sum()
    }

    fn totals(&self) -> Totals {
        Totals {
            events: self.events.len() as u64,
            card: self.total_card(),
            cmp: self.total_cmp(),
        }
    }

    /// Canonical JSON-lines rendering: one event per line, then a totals
    /// line. Byte-identical for equal traces.
    pub fn to_json_lines(&self) -> String {
        let mut sorted = self.clone();
        sorted.canonicalize();
        let mut out = String::new();
        for e in &sorted.events {
            out.push_str(&serde_json::to_string(e).expect("events always serialize"));
            out.push('\n');
        }
        #[derive(Serialize)]
        struct TotalsLine {
            totals: Totals,
        }
        let line = serde_json::to_string(&TotalsLine { totals: sorted.totals() })
            .expect("totals always serialize");
        out.push_str(&line);
        out.push('\n');
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Trace> {
        let mut events = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() || line.contains("\"totals\"") {
                continue;
            }
            events.push(serde_json::from_str(line)?);
        }
        Ok(Trace { events })
    }

    /// First divergence between two canonicalized traces, for test output.
    pub fn diff(&self, other: &Trace) -> Option<String> {
        let mut a = self.clone();
        let mut b = other.clone();
        a.canonicalize();
        b.canonicalize();
        for (i, (ea, eb)) in a.events.iter().zip(b.events.iter()).enumerate() {
            if ea != eb {
                return Some(format!(
                    "event {i}: {} vs {}",
                    serde_json::to_string(ea).unwrap(),
                    serde_json::to_string(eb).unwrap()
                ));
            }
        }
        if a.events.len() != b.events.len() {
            let (longer, name) = if a.events.len() > b.events.len() {
                (&a, "left")
            } else {
                (&b, "right")
            };
            let extra = &longer.events[a.events.len().min(b.events.len())];
            return Some(format!(
                "length {} vs {}; first extra on {name}: {}",
                a.events.len(),
                b.events.len(),
                serde_json::to_string(extra).unwrap()
            ));
        }
        None
    }
}

pub fn traces_equal(a: &Trace, b: &Trace) -> bool {
    a.diff(b).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_interleaving_independent() {
        let mut a = Trace::new();
        a.pair_emit(3, "r/0", "s/1", 4, 4);
        a.class_emit(1, "r/0", 2, 2);
        a.bin_emit(5, "(r/0)x(s/1)", 1, 1, 4);
        a.bin_emit(5, "(r/0)x(s/1)", 0, 4, 4);
        a.class_drop(1, "r/1", 2);

        let mut b = Trace::new();
        b.class_drop(1, "r/1", 2);
        b.bin_emit(5, "(r/0)x(s/1)", 0, 4, 4);
        b.class_emit(1, "r/0", 2, 2);
        b.pair_emit(3, "r/0", "s/1", 4, 4);
        b.bin_emit(5, "(r/0)x(s/1)", 1, 1, 4);

        assert!(traces_equal(&a, &b));
        assert_eq!(a.to_json_lines(), b.to_json_lines());
    }

    #[test]
    fn json_lines_round_trip_and_pin_the_format() {
        let mut t = Trace::new();
        t.class_emit(1, "r/0", 2, 2);
        t.pair_emit(2, "r/0", "s/0", 6, 6);
        let text = t.to_json_lines();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            r#"{"node":1,"kind":"class_emit","class":"r/0","seq":0,"card":2,"cmp":2}"#
        );
        assert_eq!(
            lines[1],
            r#"{"node":2,"kind":"pair_emit","class":"r/0","class2":"s/0","seq":0,"card":6,"cmp":6}"#
        );
        assert_eq!(lines[2], r#"{"totals":{"events":2,"card":8,"cmp":8}}"#);
        let back = Trace::from_json_lines(&text).unwrap();
        assert!(traces_equal(&t, &back));
        assert_eq!(back.total_card(), 8);
    }

    #[test]
    fn diff_reports_first_divergence() {
        let mut a = Trace::new();
        a.class_emit(1, "r/0", 2, 2);
        let mut b = Trace::new();
        b.class_emit(1, "r/0", 3, 3);
        let d = a.diff(&b).unwrap();
        assert!(d.contains("\"card\":2"));
        assert!(d.contains("\"card\":3"));

        let mut c = a.clone();
        c.class_drop(1, "r/9", 2);
        let d = a.diff(&c).unwrap();
        assert!(d.contains("length 1 vs 2"));
        assert!(d.contains("r/9"));
    }
}
