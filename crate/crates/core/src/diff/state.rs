// SPDX-License-Identifier: Apache-2.0

//! Final CPU state and its text dump format.
//!
//! A dump is a list of `key=value` lines: `sig=<int>`, `pc_off=<hex>`,
//! `r0=<hex>` .. `rN=<hex>`, `nzcv=<4 bits>` and any number of
//! `mem=<hex offset>:<width>:<hex value>`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Signal numbers a backend may report; `HANG` marks a timeout or crash.
pub const SIG_NONE: i32 = 0;
pub const SIGILL: i32 = 4;
pub const SIGTRAP: i32 = 5;
pub const SIGBUS: i32 = 7;
pub const SIGFPE: i32 = 8;
pub const SIGSEGV: i32 = 11;
pub const HANG: i32 = -1;
pub const KNOWN_SIGNALS: [i32; 7] = [SIG_NONE, SIGILL, SIGTRAP, SIGBUS, SIGFPE, SIGSEGV, HANG];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemObservation {
    /// Offset into the scratch region.
    pub address: u64,
    /// Access width in bytes: 1, 2, 4 or 8.
    pub width: u8,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpuState {
    /// PC relative to the tested instruction's address.
    pub pc_off: u64,
    pub regs: Vec<u64>,
    /// N, Z, C, V from most to least significant bit.
    pub nzcv: u8,
    pub mem: Vec<MemObservation>,
    pub sig: i32,
}

impl CpuState {
    pub fn zeroed(regs: usize) -> Self {
        Self {
            pc_off: 0,
            regs: vec![0; regs],
            nzcv: 0,
            mem: Vec::new(),
            sig: SIG_NONE,
        }
    }

    /// The sentinel state reported for a hang or crash.
    pub fn hang() -> Self {
        Self {
            sig: HANG,
            ..Self::zeroed(0)
        }
    }

    /// Memory observations in address order.
    pub fn sorted_mem(&self) -> Vec<MemObservation> {
        let mut m = self.mem.clone();
        m.sort();
        m
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DumpError {
    #[error("state dump line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("state dump lacks `sig=`")]
    MissingSignal,
    #[error("state dump registers are not contiguous from r0")]
    RegisterGap,
}

fn parse_hex(s: &str) -> Option<u64> {
    let s = s.trim();
    let s = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    u64::from_str_radix(s, 16).ok()
}

pub fn parse_dump(text: &str) -> Result<CpuState, DumpError> {
    let mut state = CpuState::zeroed(0);
    let mut sig = None;
    let mut regs: Vec<Option<u64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| DumpError::Syntax {
            line: i + 1,
            msg: format!("{msg}: `{line}`"),
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected key=value"))?;
        match key.trim() {
            "sig" => sig = Some(value.trim().parse::<i32>().map_err(|_| err("bad signal"))?),
            "pc_off" => state.pc_off = parse_hex(value).ok_or_else(|| err("bad pc_off"))?,
            "nzcv" => {
                let v = value.trim();
                if v.len() != 4 || !v.chars().all(|c| c == '0' || c == '1') {
                    return Err(err("nzcv must be 4 bits"));
                }
                state.nzcv = u8::from_str_radix(v, 2).unwrap();
            }
            "mem" => {
                let parts: Vec<&str> = value.split(':').collect();
                let [addr, width, val] = parts[..] else {
                    return Err(err("mem must be <offset>:<width>:<value>"));
                };
                let width: u8 = width.trim().parse().map_err(|_| err("bad mem width"))?;
                if ![1, 2, 4, 8].contains(&width) {
                    return Err(err("mem width must be 1, 2, 4 or 8"));
                }
                state.mem.push(MemObservation {
                    address: parse_hex(addr).ok_or_else(|| err("bad mem offset"))?,
                    width,
                    value: parse_hex(val).ok_or_else(|| err("bad mem value"))?,
                });
            }
            k => {
                let idx: usize = k
                    .strip_prefix('r')
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| err("unknown key"))?;
                if idx >= 64 {
                    return Err(err("register index out of range"));
                }
                if regs.len() <= idx {
                    regs.resize(idx + 1, None);
                }
                regs[idx] = Some(parse_hex(value).ok_or_else(|| err("bad register value"))?);
            }
        }
    }
    state.sig = sig.ok_or(DumpError::MissingSignal)?;
    state.regs = regs
        .into_iter()
        .collect::<Option<Vec<u64>>>()
        .ok_or(DumpError::RegisterGap)?;
    Ok(state)
}

pub fn render_dump(state: &CpuState) -> String {
    let mut out = String::new();
    writeln!(out, "sig={}", state.sig).unwrap();
    writeln!(out, "pc_off={:x}", state.pc_off).unwrap();
    for (i, r) in state.regs.iter().enumerate() {
        writeln!(out, "r{i}={r:x}").unwrap();
    }
    writeln!(out, "nzcv={:04b}", state.nzcv & 0xf).unwrap();
    for m in &state.mem {
        writeln!(out, "mem={:x}:{}:{:x}", m.address, m.width, m.value).unwrap();
    }
    out
}
