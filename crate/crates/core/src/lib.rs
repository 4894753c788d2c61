//! kloak: a deterministic federated query engine.
//!
//! The engine evaluates a SQL subset over horizontally partitioned relations
//! held by mutually distrusting data owners. Every query runs in one of four
//! execution modes:
//!
//! * `plain` — conventional federation, true cardinalities, cleartext frames;
//! * `encrypted` — sealed frames, but intermediate result sizes stay true;
//! * `kanon` — operators work on equivalence classes of an anonymized view
//!   and pad or drop whole classes at a time, so the observable execution
//!   trace is determined by the view rather than by individual tuples;
//! * `oblivious` — worst-case padding (filters keep their input cardinality,
//!   joins emit the full cross product, aggregates emit one tuple per group).
//!
//! Module map:
//!
//! * [`schema`] — catalogs, security policies, shards, decomposition checks
//! * [`planner`] — query text to plan DAG, control-flow derivation, mode
//!   assignment and workload admission
//! * [`anonymizer`] — histograms, greedy view generation, view validation,
//!   partition assignment
//! * [`executor`] — class streams and the four-mode operator kernels
//! * [`trace`] — observable event model, cost accounting, reference simulator
//! * [`federation`] — frame protocol, in-process and TCP transports, the
//!   coordinator pipeline and client-side result assembly
//! * [`bench`] — deterministic data generators and the scenario runner

pub mod anonymizer;
pub mod bench;
pub mod error;
pub mod executor;
pub mod federation;
pub mod planner;
pub mod schema;
pub mod trace;
pub mod value;

pub use anonymizer::{AnonymizationMap, DomainPartition, EquivalenceClass, Histogram, PartitionAssignment};
pub use error::{Error, Result};
pub use executor::{ClassStream, Mode};
pub use planner::{AdmissionDecision, ControlFlowSet, QueryPlan, WorkloadState};
pub use schema::{Catalog, Dataset, RelationDef, RelationShard};
pub use trace::{Trace, TraceEvent};
pub use value::{HostId, Scalar, ScalarKind, Tuple};
