// SPDX-License-Identifier: Apache-2.0

//! The final-state consistency predicate, result filters and root-cause
//! tagging.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asl::DecodeTag;
use crate::mutation::InstructionStream;
use crate::spec::{InstructionSpec, SymbolType};

use super::state::{CpuState, HANG, KNOWN_SIGNALS, SIGILL, SIG_NONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorCategory {
    /// Both raised a signal, different ones.
    SigBothNonzeroDiffer,
    /// Only the emulated side raised a signal.
    SigEmuOnly,
    /// Only the reference side raised a signal.
    SigRealOnly,
    /// Same signal, different PC, registers or flags.
    SigEqualNonzeroStateDiffer,
    /// No signal on either side, different state.
    SigZeroStateDiffer,
    /// Hang, crash or an unrecognized signal.
    Other,
}

impl BehaviorCategory {
    pub const ALL: [BehaviorCategory; 6] = [
        Self::SigBothNonzeroDiffer,
        Self::SigEmuOnly,
        Self::SigRealOnly,
        Self::SigEqualNonzeroStateDiffer,
        Self::SigZeroStateDiffer,
        Self::Other,
    ];

    /// Row label in the report table.
    pub fn label(self) -> &'static str {
        match self {
            Self::SigBothNonzeroDiffer => "Sig_E != Sig_R != 0",
            Self::SigEmuOnly => "Sig_E != Sig_R = 0",
            Self::SigRealOnly => "Sig_R != Sig_E = 0",
            Self::SigEqualNonzeroStateDiffer => "Sig_R = Sig_E != 0",
            Self::SigZeroStateDiffer => "Sig_R = Sig_E = 0",
            Self::Other => "Others",
        }
    }

    /// The category seen with the two sides swapped.
    pub fn mirrored(self) -> Self {
        match self {
            Self::SigEmuOnly => Self::SigRealOnly,
            Self::SigRealOnly => Self::SigEmuOnly,
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FilterReason {
    /// The stream names the stack or frame pointer register.
    SpFpAccess,
    /// A branch that executed normally on both sides.
    BranchNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Consistent,
    Inconsistent(BehaviorCategory),
    Filtered(FilterReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RootCause {
    /// An UNDEFINED encoding that some backend accepted or faulted on
    /// with something other than SIGILL.
    QemuBugCandidate,
    Unpredictable,
    Undefined,
    Unknown,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("states are not comparable: {e_regs} registers vs {r_regs}")]
pub struct StateSchemaError {
    pub e_regs: usize,
    pub r_regs: usize,
}

/// Compares the final states from the emulated (`e`) and reference (`r`)
/// sides.
///
/// With no signal on either side every component counts; with the same
/// signal on both, memory is left out; different signals are always a
/// divergence. A hang or unknown signal on either side is `Other`.
pub fn compare_final(e: &CpuState, r: &CpuState) -> Result<Verdict, StateSchemaError> {
    for s in [e, r] {
        if s.sig == HANG {
            return Ok(Verdict::Inconsistent(BehaviorCategory::Other));
        }
        if !KNOWN_SIGNALS.contains(&s.sig) {
            log::warn!("unrecognized signal {}", s.sig);
            return Ok(Verdict::Inconsistent(BehaviorCategory::Other));
        }
    }
    if e.regs.len() != r.regs.len() {
        return Err(StateSchemaError {
            e_regs: e.regs.len(),
            r_regs: r.regs.len(),
        });
    }
    let core_differs = e.pc_off != r.pc_off || e.regs != r.regs || e.nzcv != r.nzcv;
    let category = match (e.sig, r.sig) {
        (SIG_NONE, SIG_NONE) => (core_differs || e.sorted_mem() != r.sorted_mem())
            .then_some(BehaviorCategory::SigZeroStateDiffer),
        (a, b) if a == b => core_differs.then_some(BehaviorCategory::SigEqualNonzeroStateDiffer),
        (_, SIG_NONE) => Some(BehaviorCategory::SigEmuOnly),
        (SIG_NONE, _) => Some(BehaviorCategory::SigRealOnly),
        _ => Some(BehaviorCategory::SigBothNonzeroDiffer),
    };
    Ok(category.map_or(Verdict::Consistent, Verdict::Inconsistent))
}

/// Filters decided from the stream alone. `BranchNormal` is provisional:
/// it only applies if both backends then finish without a signal.
pub fn prefilter(stream: &InstructionStream, spec: &InstructionSpec) -> Option<FilterReason> {
    let sp_fp = spec.encoding.iset.sp_fp_indices();
    let touches_sp_fp = spec.encoding.symbol_fields().any(|f| {
        f.symbol_type() == Some(SymbolType::RegisterIndex)
            && stream
                .value(f.symbol_name().unwrap())
                .is_some_and(|v| sp_fp.contains(&v))
    });
    if touches_sp_fp {
        Some(FilterReason::SpFpAccess)
    } else if spec.is_branch() {
        Some(FilterReason::BranchNormal)
    } else {
        None
    }
}

/// Final verdict for a stream that passed the SP/FP filter.
pub fn judge(
    provisional: Option<FilterReason>,
    e: &CpuState,
    r: &CpuState,
) -> Result<Verdict, StateSchemaError> {
    if provisional == Some(FilterReason::BranchNormal) && e.sig == SIG_NONE && r.sig == SIG_NONE {
        return Ok(Verdict::Filtered(FilterReason::BranchNormal));
    }
    compare_final(e, r)
}

/// Tags an inconsistent stream with its likely cause from its decode
/// outcome and the signals observed. `None` unless the verdict is
/// `Inconsistent`.
pub fn classify_root_cause(
    stream: &InstructionStream,
    verdict: Verdict,
    e: &CpuState,
    r: &CpuState,
) -> Option<RootCause> {
    let Verdict::Inconsistent(_) = verdict else {
        return None;
    };
    Some(match stream.decode_tag {
        DecodeTag::Unpredictable => RootCause::Unpredictable,
        DecodeTag::Undefined if e.sig != SIGILL || r.sig != SIGILL => RootCause::QemuBugCandidate,
        DecodeTag::Undefined => RootCause::Undefined,
        DecodeTag::Ok => RootCause::Unknown,
    })
}
