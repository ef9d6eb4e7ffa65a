// SPDX-License-Identifier: Apache-2.0

//! Differential execution: final CPU states, the consistency predicate,
//! executor backends and campaigns.

pub mod backend;
pub mod campaign;
pub mod compare;
pub mod report;
pub mod state;

pub use backend::{
    backend_from_descriptor, render_harness, BackendError, ExecutorBackend, InitialStateSpec,
    ProcessBackend, ReplayBackend,
};
pub use campaign::{
    evaluate_stream, parse_journal, read_journal, run_campaign, CampaignConfig, CampaignError,
    Journal, JournalHeader, StreamRecord, VerdictKind,
};
pub use compare::{
    classify_root_cause, compare_final, judge, prefilter, BehaviorCategory, FilterReason,
    RootCause, StateSchemaError, Verdict,
};
pub use report::{CampaignReport, CategoryRow};
pub use state::{parse_dump, render_dump, CpuState, DumpError, MemObservation, HANG};
