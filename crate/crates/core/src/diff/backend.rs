// SPDX-License-Identifier: Apache-2.0

//! Executor backends: run one stream from a fixed initial state and report
//! the final state.

use std::fmt::Write as _;
use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mutation::InstructionStream;
use crate::spec::Iset;

use super::state::{parse_dump, CpuState, DumpError};

/// Register and memory setup shared by both sides of a comparison. All
/// general registers start at zero except FP, SP, LR and the PC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialStateSpec {
    pub scratch_base: u64,
    /// Zero-filled bytes starting at `scratch_base`.
    pub scratch_size: u64,
    pub fp: u64,
    pub sp: u64,
    pub lr: u64,
}

impl Default for InitialStateSpec {
    fn default() -> Self {
        let scratch_base = 0x0010_0000;
        let scratch_size = 0x1000;
        Self {
            scratch_base,
            scratch_size,
            fp: scratch_base + scratch_size / 2,
            sp: scratch_base + scratch_size / 2,
            lr: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("{backend}: no recorded state at {}", path.display())]
    MissingDump { backend: String, path: PathBuf },
    #[error("{backend}: bad state dump for {stream}: {source}")]
    BadDump {
        backend: String,
        stream: String,
        source: DumpError,
    },
    #[error("{backend}: could not launch `{command}`: {source}")]
    Launch {
        backend: String,
        command: String,
        source: std::io::Error,
    },
    #[error("{backend}: `{command}` failed ({status}): {stderr}")]
    Failed {
        backend: String,
        command: String,
        status: String,
        stderr: String,
    },
    #[error("{backend}: {source}")]
    Io {
        backend: String,
        source: std::io::Error,
    },
    #[error("bad backend descriptor `{0}` (expected replay:<dir> or process:<command>)")]
    Descriptor(String),
}

pub trait ExecutorBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Runs one stream. A timeout is not an error: it yields the hang
    /// sentinel state.
    fn run(
        &self,
        stream: &InstructionStream,
        init: &InitialStateSpec,
        timeout: Duration,
    ) -> Result<CpuState, BackendError>;
}

/// Builds a backend from `replay:<dir>` or `process:<command template>`.
pub fn backend_from_descriptor(
    name: &str,
    descriptor: &str,
) -> Result<Box<dyn ExecutorBackend>, BackendError> {
    match descriptor.split_once(':') {
        Some(("replay", dir)) if !dir.is_empty() => Ok(Box::new(ReplayBackend::new(name, dir))),
        Some(("process", cmd)) if !cmd.trim().is_empty() => {
            Ok(Box::new(ProcessBackend::new(name, cmd)))
        }
        _ => Err(BackendError::Descriptor(descriptor.to_string())),
    }
}

/// Reads recorded final states from `<dir>/<encoding_id>-<hex>.dump`.
#[derive(Clone, Debug)]
pub struct ReplayBackend {
    name: String,
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(name: &str, dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.to_string(),
            dir: dir.into(),
        }
    }

    pub fn dump_path(&self, stream: &InstructionStream) -> PathBuf {
        self.dir
            .join(format!("{}-{}.dump", stream.encoding_id, stream.hex()))
    }
}

impl ExecutorBackend for ReplayBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(
        &self,
        stream: &InstructionStream,
        _init: &InitialStateSpec,
        _timeout: Duration,
    ) -> Result<CpuState, BackendError> {
        let path = self.dump_path(stream);
        let text = std::fs::read_to_string(&path).map_err(|_| BackendError::MissingDump {
            backend: self.name.clone(),
            path: path.clone(),
        })?;
        parse_dump(&text).map_err(|source| BackendError::BadDump {
            backend: self.name.clone(),
            stream: format!("{} {}", stream.encoding_id, stream.hex()),
            source,
        })
    }
}

/// Renders the per-stream test program: install signal handlers, load the
/// initial register state, execute the stream, dump the final state.
///
/// The handler and dump routines (`isadiff_register_signals`,
/// `isadiff_dump_final_state`) come from a runtime linked in by the
/// backend command.
pub fn render_harness(stream: &InstructionStream, init: &InitialStateSpec) -> String {
    let mut s = String::new();
    let comment = if stream.iset == Iset::A64 { "//" } else { "@" };
    writeln!(
        s,
        "{comment} {} {} {}",
        stream.encoding_id,
        stream.iset,
        stream.hex()
    )
    .unwrap();
    writeln!(s, "    .equ ISADIFF_SCRATCH_BASE, {:#x}", init.scratch_base).unwrap();
    writeln!(s, "    .equ ISADIFF_SCRATCH_SIZE, {:#x}", init.scratch_size).unwrap();
    match stream.iset {
        Iset::A64 => {
            s.push_str("    .text\n    .global isadiff_test\n    .type isadiff_test, %function\n");
            s.push_str("isadiff_test:\n    bl isadiff_register_signals\n");
            for r in 0..=28 {
                writeln!(s, "    mov x{r}, #0").unwrap();
            }
            writeln!(s, "    ldr x16, ={:#x}", init.sp).unwrap();
            s.push_str("    mov sp, x16\n    mov x16, #0\n");
            writeln!(s, "    ldr x29, ={:#x}", init.fp).unwrap();
            writeln!(s, "    ldr x30, ={:#x}", init.lr).unwrap();
            s.push_str("    msr nzcv, xzr\n");
            s.push_str("    .global isadiff_payload\nisadiff_payload:\n");
            writeln!(s, "    .inst {:#010x}", stream.word).unwrap();
        }
        iset => {
            let thumb = iset != Iset::A32;
            s.push_str("    .syntax unified\n");
            s.push_str(if thumb { "    .thumb\n" } else { "    .arm\n" });
            s.push_str("    .text\n    .global isadiff_test\n");
            if thumb {
                s.push_str("    .thumb_func\n");
            }
            s.push_str("    .type isadiff_test, %function\n");
            s.push_str("isadiff_test:\n    bl isadiff_register_signals\n");
            writeln!(s, "    ldr r0, ={:#x}", init.sp).unwrap();
            s.push_str("    mov sp, r0\n");
            for r in [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12] {
                writeln!(s, "    mov r{r}, #0").unwrap();
            }
            writeln!(s, "    ldr r11, ={:#x}", init.fp).unwrap();
            writeln!(s, "    ldr lr, ={:#x}", init.lr).unwrap();
            s.push_str("    msr APSR_nzcvq, r0\n");
            s.push_str("    .global isadiff_payload\nisadiff_payload:\n");
            match (iset, stream.width) {
                (Iset::A32, _) => writeln!(s, "    .inst {:#010x}", stream.word).unwrap(),
                (_, 16) => writeln!(s, "    .inst.n {:#06x}", stream.word).unwrap(),
                _ => writeln!(s, "    .inst.w {:#010x}", stream.word).unwrap(),
            }
        }
    }
    s.push_str("    b isadiff_dump_final_state\n    .ltorg\n");
    s
}

/// Runs an external command per stream.
///
/// The command template is run with `sh -c` inside a fresh directory that
/// holds `harness.s` (see [`render_harness`]) and `payload.bin` (the stream
/// bytes). Placeholders: `{program}`, `{payload}`, `{dir}`, `{hex}`,
/// `{iset}`, `{encoding}`, `{scratch_base}`, `{scratch_size}`. The command
/// must print a state dump on stdout.
#[derive(Clone, Debug)]
pub struct ProcessBackend {
    name: String,
    template: String,
}

impl ProcessBackend {
    pub fn new(name: &str, template: &str) -> Self {
        Self {
            name: name.to_string(),
            template: template.to_string(),
        }
    }

    fn command_for(
        &self,
        stream: &InstructionStream,
        init: &InitialStateSpec,
        dir: &Path,
    ) -> String {
        let d = dir.display().to_string();
        self.template
            .replace("{program}", &format!("{d}/harness.s"))
            .replace("{payload}", &format!("{d}/payload.bin"))
            .replace("{dir}", &d)
            .replace("{hex}", &stream.hex())
            .replace("{iset}", stream.iset.as_str())
            .replace("{encoding}", &stream.encoding_id)
            .replace("{scratch_base}", &format!("{:#x}", init.scratch_base))
            .replace("{scratch_size}", &format!("{:#x}", init.scratch_size))
    }
}

impl ExecutorBackend for ProcessBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn run(
        &self,
        stream: &InstructionStream,
        init: &InitialStateSpec,
        timeout: Duration,
    ) -> Result<CpuState, BackendError> {
        let io = |source| BackendError::Io {
            backend: self.name.clone(),
            source,
        };
        let dir = tempfile::tempdir().map_err(io)?;
        std::fs::write(dir.path().join("harness.s"), render_harness(stream, init)).map_err(io)?;
        std::fs::write(dir.path().join("payload.bin"), stream.bytes()).map_err(io)?;
        let command = self.command_for(stream, init, dir.path());
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .current_dir(dir.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0)
            .spawn()
            .map_err(|source| BackendError::Launch {
                backend: self.name.clone(),
                command: command.clone(),
                source,
            })?;
        let mut out = child.stdout.take().unwrap();
        let mut err = child.stderr.take().unwrap();
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            out.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = err.read_to_string(&mut s);
            s
        });
        let deadline = Instant::now() + timeout;
        let status = loop {
            if let Some(status) = child.try_wait().map_err(io)? {
                break status;
            }
            if Instant::now() >= deadline {
                // Kill the whole process group so grandchildren release the
                // output pipes.
                if let Ok(pgid) = i32::try_from(child.id()) {
                    // SAFETY: plain syscall on a process group we created.
                    unsafe { libc::killpg(pgid, libc::SIGKILL) };
                }
                let _ = child.kill();
                let _ = child.wait();
                log::debug!("{}: {} timed out", self.name, stream.hex());
                return Ok(CpuState::hang());
            }
            std::thread::sleep(Duration::from_millis(2));
        };
        let stdout = out_reader
            .join()
            .ok()
            .and_then(Result::ok)
            .unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        match parse_dump(&stdout) {
            Ok(state) => Ok(state),
            // Killed by a signal before dumping: the runner itself crashed.
            Err(_) if status.signal().is_some() => Ok(CpuState::hang()),
            Err(source) if status.success() => Err(BackendError::BadDump {
                backend: self.name.clone(),
                stream: format!("{} {}", stream.encoding_id, stream.hex()),
                source,
            }),
            Err(_) => Err(BackendError::Failed {
                backend: self.name.clone(),
                command,
                status: status.to_string(),
                stderr: stderr.trim().to_string(),
            }),
        }
    }
}
