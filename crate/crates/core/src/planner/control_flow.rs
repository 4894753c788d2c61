//! Taint propagation. A node is tainted when a protected attribute feeds its
//! control flow (predicate columns, join keys, grouping keys) or when any of
//! its inputs is tainted; taint never clears on the way up, so the protected
//! region of a plan is a connected crown. The control-flow set collects every
//! control input of every tainted host-side node, public attributes included,
//! plus the entity attribute of tainted aggregations, which contributor
//! counting inspects tuple by tuple.

use super::{Column, ControlFlowSet, PlanNode, QueryPlan};

fn control_columns(plan: &QueryPlan, id: usize) -> Vec<&Column> {
    match &plan.nodes[id] {
        PlanNode::Filter { input, predicate } => predicate
            .terms
            .iter()
            .map(|t| match t {
                super::PredTerm::Compare { col, .. } => &plan.schemas[*input][*col],
                super::PredTerm::InList { col, .. } => &plan.schemas[*input][*col],
            })
            .collect(),
        PlanNode::Join { left, right, pairs } => pairs
            .iter()
            .flat_map(|&(l, r)| [&plan.schemas[*left][l], &plan.schemas[*right][r]])
            .collect(),
        PlanNode::Aggregate { input, group_by, .. } => {
            group_by.iter().map(|&g| &plan.schemas[*input][g]).collect()
        }
        _ => Vec::new(),
    }
}

pub(crate) fn derive(plan: &mut QueryPlan) {
    let n = plan.nodes.len();
    let mut tainted = vec![false; n];
    let mut c = ControlFlowSet::default();
    for i in 0..n {
        let controls = control_columns(plan, i);
        let own = controls.iter().any(|col| col.kanon);
        let inherited = plan.nodes[i].inputs().iter().any(|&j| tainted[j]);
        tainted[i] = own || inherited;
        if tainted[i] && !plan.client_side[i] {
            for col in controls {
                if !col.relation.is_empty() {
                    c.insert(&col.relation, &col.attr);
                }
            }
            if let PlanNode::Aggregate { input, entity_col, .. } = &plan.nodes[i] {
                let entity = &plan.schemas[*input][*entity_col];
                c.insert(&entity.relation, &entity.attr);
            }
        }
    }
    plan.tainted = tainted;
    plan.control_flow = c;
}

#[cfg(test)]
mod tests {
    use crate::executor::Mode;
    use crate::planner::tests::health_catalog;
    use crate::planner::{plan_query, ControlFlowSet};

    fn cset(pairs: &[(&str, &str)]) -> ControlFlowSet {
        let mut c = ControlFlowSet::default();
        for (r, a) in pairs {
            c.insert(r, a);
        }
        c
    }

    #[test]
    fn protected_filter_taints_everything_above_it() {
        let plan = plan_query(
            &health_catalog(),
            "SELECT d.diag, COUNT(*) AS n FROM demographics p, diagnosis d \
             WHERE p.sex = 'F' AND p.pid = d.pid GROUP BY d.diag",
        )
        .unwrap();
        assert_eq!(
            plan.control_flow,
            cset(&[
                ("demographics", "pid"),
                ("demographics", "sex"),
                ("diagnosis", "pid"),
                ("diagnosis", "diag"),
            ])
        );
        let modes = plan.modes_for(Mode::KAnon);
        assert_eq!(modes[0], Mode::Plain);
        assert_eq!(modes[1], Mode::KAnon);
        assert_eq!(modes[2], Mode::Plain);
        assert_eq!(modes[3], Mode::KAnon);
        assert_eq!(modes[4], Mode::KAnon);
    }

    #[test]
    fn public_control_inputs_of_tainted_nodes_join_the_set() {
        let plan = plan_query(
            &health_catalog(),
            "SELECT p.zip FROM demographics p, diagnosis d \
             WHERE p.sex = 'F' AND p.zip = d.ddate",
        )
        .unwrap();
        assert_eq!(
            plan.control_flow,
            cset(&[
                ("demographics", "sex"),
                ("demographics", "zip"),
                ("diagnosis", "ddate"),
            ])
        );
    }

    #[test]
    fn tainted_aggregation_protects_the_entity_attribute() {
        let plan = plan_query(
            &health_catalog(),
            "SELECT zip, COUNT(*) FROM demographics WHERE sex = 'F' GROUP BY zip",
        )
        .unwrap();
        assert!(plan.control_flow.contains("demographics", "pid"));
        assert!(plan.control_flow.contains("demographics", "zip"));
        assert!(plan.control_flow.contains("demographics", "sex"));
    }

    #[test]
    fn untainted_query_needs_no_view() {
        let plan = plan_query(
            &health_catalog(),
            "SELECT zip, COUNT(*) FROM demographics GROUP BY zip",
        )
        .unwrap();
        assert!(plan.control_flow.is_empty());
        assert!(plan.modes_for(Mode::KAnon).iter().all(|m| *m == Mode::Plain));
        assert_eq!(
            plan.modes_for(Mode::Oblivious),
            vec![Mode::Plain, Mode::Oblivious, Mode::Plain]
        );
    }
}
