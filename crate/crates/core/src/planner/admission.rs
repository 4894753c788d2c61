//! Workload admission. The federation keeps one anonymized view at a time,
//! characterized by the control-flow set it covers and its k. An incoming
//! query either rides the existing view, strengthens it in place, extends it
//! to disjoint attributes, or, when its control set partially overlaps the
//! covered one, falls back to per-query oblivious evaluation without touching
//! shared state.

use serde::{Deserialize, Serialize};

use super::ControlFlowSet;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadState {
    pub k_sys: u64,
    pub c_sys: ControlFlowSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmissionDecision {
    /// The view already covers the query at sufficient strength.
    ReuseView,
    /// Same attributes, stronger k: coarsen existing classes in place.
    MergeClasses { k: u64 },
    /// Disjoint attributes: regenerate the view over the union.
    AugmentView { c: ControlFlowSet, k: u64 },
    /// Partial overlap: serve this query obliviously, leave the view alone.
    ObliviousFallback,
}

pub fn admit(state: &WorkloadState, c_q: &ControlFlowSet, k_q: u64) -> AdmissionDecision {
    if c_q.is_subset(&state.c_sys) {
        if k_q <= state.k_sys {
            AdmissionDecision::ReuseView
        } else {
            AdmissionDecision::MergeClasses { k: k_q }
        }
    } else if !c_q.intersects(&state.c_sys) {
        AdmissionDecision::AugmentView { c: state.c_sys.union(c_q), k: state.k_sys.max(k_q) }
    } else {
        AdmissionDecision::ObliviousFallback
    }
}

impl WorkloadState {
    /// State after carrying out a decision.
    pub fn after(&self, decision: &AdmissionDecision) -> WorkloadState {
        match decision {
            AdmissionDecision::ReuseView | AdmissionDecision::ObliviousFallback => self.clone(),
            AdmissionDecision::MergeClasses { k } => {
                WorkloadState { k_sys: *k, c_sys: self.c_sys.clone() }
            }
            AdmissionDecision::AugmentView { c, k } => {
                WorkloadState { k_sys: *k, c_sys: c.clone() }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cset(pairs: &[(&str, &str)]) -> ControlFlowSet {
        let mut c = ControlFlowSet::default();
        for (r, a) in pairs {
            c.insert(r, a);
        }
        c
    }

    #[test]
    fn decision_sequence_covers_all_four_outcomes() {
        let mut state = WorkloadState::default();

        let c1 = cset(&[("a", "x"), ("a", "y")]);
        let d1 = admit(&state, &c1, 3);
        assert_eq!(d1, AdmissionDecision::AugmentView { c: c1.clone(), k: 3 });
        state = state.after(&d1);

        let c2 = cset(&[("a", "x")]);
        assert_eq!(admit(&state, &c2, 2), AdmissionDecision::ReuseView);
        assert_eq!(admit(&state, &c2, 3), AdmissionDecision::ReuseView);

        let d3 = admit(&state, &c2, 5);
        assert_eq!(d3, AdmissionDecision::MergeClasses { k: 5 });
        state = state.after(&d3);
        assert_eq!(state.k_sys, 5);

        let c4 = cset(&[("a", "x"), ("b", "z")]);
        let d4 = admit(&state, &c4, 2);
        assert_eq!(d4, AdmissionDecision::ObliviousFallback);
        assert_eq!(state.after(&d4), state);

        let c5 = cset(&[("b", "z")]);
        let d5 = admit(&state, &c5, 2);
        assert_eq!(
            d5,
            AdmissionDecision::AugmentView { c: c1.union(&c5), k: 5 }
        );
    }

    #[test]
    fn every_query_lands_in_exactly_one_rule() {
        let attrs = [("a", "x"), ("a", "y"), ("b", "z")];
        let sets: Vec<ControlFlowSet> = (0..8u32)
            .map(|mask| {
                let picked: Vec<(&str, &str)> = attrs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, p)| *p)
                    .collect();
                cset(&picked)
            })
            .collect();
        for c_sys in &sets {
            for k_sys in [0u64, 2, 5] {
                let state = WorkloadState { k_sys, c_sys: c_sys.clone() };
                for c_q in &sets {
                    for k_q in [1u64, 2, 5, 9] {
                        let d = admit(&state, c_q, k_q);
                        let subset = c_q.is_subset(c_sys);
                        let disjoint = !c_q.intersects(c_sys);
                        match d {
                            AdmissionDecision::ReuseView => {
                                assert!(subset && k_q <= k_sys);
                            }
                            AdmissionDecision::MergeClasses { k } => {
                                assert!(subset && k_q > k_sys && k == k_q);
                            }
                            AdmissionDecision::AugmentView { c, k } => {
                                assert!(!subset && disjoint);
                                assert_eq!(c, c_sys.union(c_q));
                                assert_eq!(k, k_sys.max(k_q));
                            }
                            AdmissionDecision::ObliviousFallback => {
                                assert!(!subset && !disjoint);
                            }
                        }
                    }
                }
            }
        }
    }
}
