// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use isadiff_core::diff::{
    backend_from_descriptor, compare_final, parse_dump, parse_journal, read_journal, render_dump,
    render_harness, run_campaign, BackendError, BehaviorCategory, CampaignConfig, CampaignError,
    CampaignReport, CpuState, DumpError, ExecutorBackend, FilterReason, InitialStateSpec,
    MemObservation, ProcessBackend, ReplayBackend, RootCause, StreamRecord, Verdict,
};
use isadiff_core::mutation::{read_streams, InstructionStream};
use isadiff_core::spec::{parse_spec_file, InstructionSpec};
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn corpus() -> Vec<InstructionSpec> {
    parse_spec_file(&std::fs::read_to_string(fixtures().join("corpus.txt")).unwrap()).unwrap()
}

fn golden_streams() -> Vec<InstructionStream> {
    let f = std::fs::File::open(fixtures().join("golden/streams.tsv")).unwrap();
    read_streams(std::io::BufReader::new(f)).unwrap().streams
}

struct Expected {
    encoding_id: String,
    word: String,
    verdict: String,
    detail: String,
    root_cause: String,
}

fn golden_expected() -> Vec<Expected> {
    std::fs::read_to_string(fixtures().join("golden/expected.tsv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            Expected {
                encoding_id: c[0].into(),
                word: c[1].into(),
                verdict: c[2].into(),
                detail: c[3].into(),
                root_cause: c[4].into(),
            }
        })
        .collect()
}

fn golden_backends() -> (ReplayBackend, ReplayBackend) {
    (
        ReplayBackend::new("emu", fixtures().join("golden/emu")),
        ReplayBackend::new("dev", fixtures().join("golden/dev")),
    )
}

fn state(sig: i32, pc: u64, reg: u64, nzcv: u8, mem: u64) -> CpuState {
    let mut regs = vec![0u64; 16];
    regs[2] = reg;
    CpuState {
        pc_off: pc,
        regs,
        nzcv,
        mem: vec![MemObservation {
            address: 0x40,
            width: 4,
            value: mem,
        }],
        sig,
    }
}

/// Hand transcription of the three-case comparison definition.
fn oracle(
    sig_e: i32,
    sig_r: i32,
    pc_eq: bool,
    reg_eq: bool,
    sta_eq: bool,
    mem_eq: bool,
) -> Verdict {
    use BehaviorCategory::*;
    if sig_e == -1 || sig_r == -1 {
        return Verdict::Inconsistent(Other);
    }
    if sig_e == 0 && sig_r == 0 {
        return if pc_eq && reg_eq && sta_eq && mem_eq {
            Verdict::Consistent
        } else {
            Verdict::Inconsistent(SigZeroStateDiffer)
        };
    }
    if sig_e != sig_r {
        return Verdict::Inconsistent(if sig_e != 0 && sig_r != 0 {
            SigBothNonzeroDiffer
        } else if sig_r == 0 {
            SigEmuOnly
        } else {
            SigRealOnly
        });
    }
    if pc_eq && reg_eq && sta_eq {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent(SigEqualNonzeroStateDiffer)
    }
}

#[test]
fn truth_table_matches_oracle() {
    let sigs = [0, 4, 11, -1];
    let mut checked = 0;
    for se in sigs {
        for sr in sigs {
            for pattern in 0u8..16 {
                let eq = |bit: u8| pattern & (1 << bit) == 0;
                let e = state(se, 4, 7, 0b0100, 9);
                let r = state(
                    sr,
                    if eq(0) { 4 } else { 8 },
                    if eq(1) { 7 } else { 8 },
                    if eq(2) { 0b0100 } else { 0b0110 },
                    if eq(3) { 9 } else { 10 },
                );
                let got = compare_final(&e, &r).unwrap();
                let want = oracle(se, sr, eq(0), eq(1), eq(2), eq(3));
                assert_eq!(got, want, "sig {se}/{sr} pattern {pattern:04b}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 256);
}

#[test]
fn examples_from_the_predicate() {
    let base = state(0, 4, 0, 0, 0);
    assert_eq!(
        compare_final(&state(11, 0, 0, 0, 0), &state(4, 0, 0, 0, 0)).unwrap(),
        Verdict::Inconsistent(BehaviorCategory::SigBothNonzeroDiffer)
    );
    assert_eq!(compare_final(&base, &base).unwrap(), Verdict::Consistent);
    assert_eq!(
        compare_final(&base, &state(0, 4, 0, 0, 1)).unwrap(),
        Verdict::Inconsistent(BehaviorCategory::SigZeroStateDiffer)
    );
    assert_eq!(
        compare_final(&state(4, 4, 0, 0, 0), &state(4, 4, 0, 0, 1)).unwrap(),
        Verdict::Consistent
    );
}

#[test]
fn mem_order_does_not_matter() {
    let mut a = state(0, 4, 0, 0, 0);
    a.mem.push(MemObservation {
        address: 0,
        width: 1,
        value: 3,
    });
    let mut b = a.clone();
    b.mem.reverse();
    assert_eq!(compare_final(&a, &b).unwrap(), Verdict::Consistent);
}

#[test]
fn unknown_signal_is_other() {
    assert_eq!(
        compare_final(&state(6, 0, 0, 0, 0), &state(0, 0, 0, 0, 0)).unwrap(),
        Verdict::Inconsistent(BehaviorCategory::Other)
    );
}

#[test]
fn register_count_mismatch_is_schema_error() {
    let a = state(0, 0, 0, 0, 0);
    let mut b = a.clone();
    b.regs.truncate(8);
    let err = compare_final(&a, &b).unwrap_err();
    assert_eq!((err.e_regs, err.r_regs), (16, 8));
}

fn arb_state() -> impl Strategy<Value = CpuState> {
    (
        prop::sample::select(vec![0, 4, 5, 7, 8, 11, -1]),
        0u64..3,
        prop::collection::vec(0u64..3, 16),
        0u8..4,
        prop::collection::vec((0u64..4, 0u64..3), 0..3),
    )
        .prop_map(|(sig, pc_off, regs, nzcv, mem)| CpuState {
            pc_off,
            regs,
            nzcv,
            mem: mem
                .into_iter()
                .map(|(address, value)| MemObservation {
                    address,
                    width: 4,
                    value,
                })
                .collect(),
            sig,
        })
}

proptest! {
    #[test]
    fn comparison_is_symmetric(e in arb_state(), r in arb_state()) {
        let fwd = compare_final(&e, &r).unwrap();
        let back = compare_final(&r, &e).unwrap();
        let mirrored = match fwd {
            Verdict::Inconsistent(c) => Verdict::Inconsistent(c.mirrored()),
            v => v,
        };
        prop_assert_eq!(back, mirrored);
    }

    #[test]
    fn comparison_is_reflexive(s in arb_state()) {
        prop_assume!(s.sig >= 0);
        prop_assert_eq!(compare_final(&s, &s).unwrap(), Verdict::Consistent);
    }

    #[test]
    fn dump_round_trips(s in arb_state()) {
        prop_assert_eq!(parse_dump(&render_dump(&s)).unwrap(), s);
    }
}

#[test]
fn dump_errors() {
    assert_eq!(
        parse_dump("pc_off=0\nr0=0\n"),
        Err(DumpError::MissingSignal)
    );
    assert_eq!(
        parse_dump("sig=0\nr0=0\nr2=0\n"),
        Err(DumpError::RegisterGap)
    );
    assert!(matches!(
        parse_dump("sig=0\nnzcv=12\n"),
        Err(DumpError::Syntax { line: 2, .. })
    ));
    assert!(matches!(
        parse_dump("sig=0\nmem=0:3:1\n"),
        Err(DumpError::Syntax { .. })
    ));
}

fn stream(id: &str, word: &str) -> InstructionStream {
    golden_streams()
        .into_iter()
        .find(|s| s.encoding_id == id && s.hex() == word)
        .unwrap()
}

#[test]
fn golden_tags_agree_with_decode() {
    let specs = corpus();
    for s in golden_streams() {
        let spec = specs.iter().find(|p| p.id() == s.encoding_id).unwrap();
        let again = isadiff_core::mutation::make_stream(spec, s.assignment.clone()).unwrap();
        assert_eq!(again.word, s.word, "{}", s.encoding_id);
        assert_eq!(
            again.decode_tag,
            s.decode_tag,
            "{} {}",
            s.encoding_id,
            s.hex()
        );
    }
}

#[test]
fn harness_carries_the_payload() {
    let init = InitialStateSpec::default();
    let t32 = render_harness(&stream("STR-imm-T32", "f84f0ddd"), &init);
    assert!(t32.contains(".thumb\n"));
    assert!(t32.contains(".inst.w 0xf84f0ddd"));
    let t16 = render_harness(&stream("MOV-imm-T16", "2005"), &init);
    assert!(t16.contains(".inst.n 0x2005"));
    let a64 = render_harness(&stream("ADD-imm-A64", "91000420"), &init);
    assert!(a64.contains(".inst 0x91000420"));
    assert!(a64.contains("mov x28, #0"));
    let a32 = render_harness(&stream("ADD-imm-A32", "e2810001"), &init);
    assert!(a32.contains(".arm\n"));
    assert!(a32.contains(&format!("ldr r11, ={:#x}", init.fp)));
}

#[test]
fn process_backend_runs_the_command() {
    let b = ProcessBackend::new(
        "sh",
        "test -f {program} && n=$(wc -c < {payload}) && printf 'sig=0\\npc_off=%x\\nr0={hex}\\nnzcv=0000\\n' $n",
    );
    let s = stream("STR-imm-T32", "f84f0ddd");
    let out = b
        .run(&s, &InitialStateSpec::default(), Duration::from_secs(10))
        .unwrap();
    assert_eq!(out.pc_off, 4);
    assert_eq!(out.regs, vec![0xf84f0ddd]);
}

#[test]
fn process_backend_timeout_is_hang() {
    let b = ProcessBackend::new("slow", "sleep 20; echo sig=0");
    let s = stream("MOV-imm-T16", "2005");
    let t = Instant::now();
    let out = b
        .run(&s, &InitialStateSpec::default(), Duration::from_millis(200))
        .unwrap();
    assert_eq!(out, CpuState::hang());
    assert!(t.elapsed() < Duration::from_secs(5));
}

#[test]
fn process_backend_failure_is_error() {
    let b = ProcessBackend::new("bad", "echo boom >&2; exit 3");
    let s = stream("MOV-imm-T16", "2005");
    let err = b
        .run(&s, &InitialStateSpec::default(), Duration::from_secs(10))
        .unwrap_err();
    match err {
        BackendError::Failed { stderr, .. } => assert_eq!(stderr, "boom"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn descriptors() {
    assert_eq!(
        backend_from_descriptor("e", "replay:/tmp").unwrap().name(),
        "e"
    );
    assert!(backend_from_descriptor("e", "process:true").is_ok());
    assert!(matches!(
        backend_from_descriptor("e", "qemu"),
        Err(BackendError::Descriptor(_))
    ));
    assert!(backend_from_descriptor("e", "replay:").is_err());
}

#[test]
fn replay_missing_dump_is_error() {
    let b = ReplayBackend::new("empty", "/nonexistent");
    let err = b
        .run(
            &stream("MOV-imm-T16", "2005"),
            &InitialStateSpec::default(),
            Duration::from_secs(1),
        )
        .unwrap_err();
    assert!(matches!(err, BackendError::MissingDump { .. }));
}

fn config(workers: usize) -> CampaignConfig {
    CampaignConfig {
        workers: Some(workers),
        ..CampaignConfig::default()
    }
}

fn record_matches(r: &StreamRecord, x: &Expected) -> bool {
    let detail = match r.verdict() {
        Verdict::Consistent => "-".to_string(),
        Verdict::Inconsistent(c) => format!("{c:?}"),
        Verdict::Filtered(f) => format!("{f:?}"),
    };
    let root = r.root_cause.map_or("-".to_string(), |rc| format!("{rc:?}"));
    format!("{:?}", r.verdict) == x.verdict && detail == x.detail && root == x.root_cause
}

#[test]
fn golden_campaign_reproduces_hand_labels() {
    let specs = corpus();
    let streams = golden_streams();
    assert_eq!(streams.len(), 20);
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let (e, r) = golden_backends();
    let cfg = CampaignConfig {
        journal: Some(journal.clone()),
        ..config(4)
    };
    let report = run_campaign(&streams, &specs, &e, &r, &cfg).unwrap();
    let records = read_journal(&journal).unwrap().records;
    assert_eq!(records.len(), 20);
    for x in golden_expected() {
        let rec = records
            .iter()
            .find(|r| r.encoding_id == x.encoding_id && r.word == x.word)
            .unwrap();
        assert!(
            record_matches(rec, &x),
            "{} {}: {rec:?}",
            x.encoding_id,
            x.word
        );
    }
    use BehaviorCategory::*;
    let counts: Vec<usize> = [
        SigBothNonzeroDiffer,
        SigEmuOnly,
        SigRealOnly,
        SigEqualNonzeroStateDiffer,
        SigZeroStateDiffer,
        Other,
    ]
    .iter()
    .map(|&c| report.category(c).streams)
    .collect();
    assert_eq!(counts, [1, 2, 1, 2, 2, 2]);
    assert_eq!(report.total().streams, 10);
    assert_eq!(report.consistent, 6);
    assert_eq!(report.filtered_sp_fp, 2);
    assert_eq!(report.filtered_branch, 2);
    assert_eq!(report.root_cause(RootCause::QemuBugCandidate), 1);
    assert_eq!(report.root_cause(RootCause::Unpredictable), 2);
    assert_eq!(report.root_cause(RootCause::Undefined), 1);
    assert_eq!(report.root_cause(RootCause::Unknown), 6);
    let bug = records
        .iter()
        .find(|r| r.root_cause == Some(RootCause::QemuBugCandidate))
        .unwrap();
    assert_eq!(
        (bug.word.as_str(), bug.sig_e, bug.sig_r),
        ("f84f0ddd", Some(11), Some(4))
    );
}

#[test]
fn report_partitions_and_percentages() {
    let (e, r) = golden_backends();
    let report = run_campaign(&golden_streams(), &corpus(), &e, &r, &config(2)).unwrap();
    let non_filtered = report.recorded - report.filtered_sp_fp - report.filtered_branch;
    let by_category: usize = report.rows[..6].iter().map(|r| r.streams).sum();
    assert_eq!(by_category + report.consistent, non_filtered);
    assert_eq!(by_category, report.total().streams);
    for row in &report.rows {
        let p = 100.0 * row.streams as f64 / report.total_streams as f64;
        assert!((p - row.streams_pct).abs() < 0.1);
        let p = 100.0 * row.encodings as f64 / report.total_encodings as f64;
        assert!((p - row.encodings_pct).abs() < 0.1);
    }
    // 10 of 20 streams, across 9 distinct encodings of the 17.
    assert_eq!(report.total().streams_pct, 50.0);
    assert_eq!(report.total().encodings, 9);
    let json: CampaignReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json, report);
    assert!(report.render_table().contains("Sig_E != Sig_R != 0"));
}

#[test]
fn identical_backends_are_consistent() {
    let (e, _) = golden_backends();
    let streams: Vec<_> = golden_streams()
        .into_iter()
        .filter(|s| {
            std::fs::read_to_string(e.dump_path(s))
                .ok()
                .and_then(|t| parse_dump(&t).ok())
                .is_some_and(|d| [0, 4, 5, 7, 8, 11].contains(&d.sig))
        })
        .collect();
    assert_eq!(streams.len(), 16);
    let report = run_campaign(&streams, &corpus(), &e, &e, &config(3)).unwrap();
    assert_eq!(report.total().streams, 0);
    assert_eq!(
        report.consistent + report.filtered_branch + report.filtered_sp_fp,
        streams.len()
    );
}

#[test]
fn empty_campaign() {
    let (e, r) = golden_backends();
    let report = run_campaign(&[], &corpus(), &e, &r, &config(1)).unwrap();
    assert_eq!(report.recorded, 0);
    assert!(report
        .rows
        .iter()
        .all(|r| r.streams == 0 && r.streams_pct == 0.0));
}

#[test]
fn unknown_encoding_is_rejected() {
    let (e, r) = golden_backends();
    let mut s = golden_streams();
    s[0].encoding_id = "NOPE".into();
    assert!(matches!(
        run_campaign(&s, &corpus(), &e, &r, &config(1)),
        Err(CampaignError::UnknownEncoding { .. })
    ));
}

/// Counts runs and fails once the limit is reached.
struct Flaky {
    inner: ReplayBackend,
    calls: AtomicUsize,
    fail_after: usize,
}

impl ExecutorBackend for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }

    fn run(
        &self,
        stream: &InstructionStream,
        init: &InitialStateSpec,
        timeout: Duration,
    ) -> Result<CpuState, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.fail_after {
            return Err(BackendError::Descriptor("launch failed".into()));
        }
        self.inner.run(stream, init, timeout)
    }
}

#[test]
fn backend_failure_keeps_journal_and_resume_finishes() {
    let specs = corpus();
    let streams = golden_streams();
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let (e, r) = golden_backends();
    let flaky = Flaky {
        inner: golden_backends().0,
        calls: AtomicUsize::new(0),
        fail_after: 7,
    };
    let cfg = CampaignConfig {
        journal: Some(journal.clone()),
        ..config(1)
    };
    let err = run_campaign(&streams, &specs, &flaky, &r, &cfg).unwrap_err();
    assert!(matches!(err, CampaignError::Backend(_)));
    let partial = read_journal(&journal).unwrap();
    assert!(!partial.records.is_empty() && partial.records.len() < 20);
    assert_eq!(partial.header.seed, 42);

    let counting = Flaky {
        inner: golden_backends().0,
        calls: AtomicUsize::new(0),
        fail_after: usize::MAX,
    };
    let resumed = CampaignConfig {
        resume: true,
        ..cfg.clone()
    };
    let report = run_campaign(&streams, &specs, &counting, &r, &resumed).unwrap();
    let executed_before = partial.records.iter().filter(|r| r.sig_e.is_some()).count();
    let executed_total = 18;
    assert_eq!(
        counting.calls.load(Ordering::SeqCst),
        executed_total - executed_before
    );
    assert_eq!(read_journal(&journal).unwrap().records.len(), 20);

    let fresh = run_campaign(&streams, &specs, &e, &r, &config(2)).unwrap();
    assert_eq!(report.rows, fresh.rows);
    assert_eq!(report.root_causes, fresh.root_causes);
    assert_eq!(report.consistent, fresh.consistent);

    // A second resume has nothing left to run.
    let idle = Flaky {
        inner: golden_backends().0,
        calls: AtomicUsize::new(0),
        fail_after: 0,
    };
    run_campaign(&streams, &specs, &idle, &r, &resumed).unwrap();
    assert_eq!(idle.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn torn_tail_is_dropped_and_corruption_reported() {
    let (e, r) = golden_backends();
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let cfg = CampaignConfig {
        journal: Some(journal.clone()),
        ..config(1)
    };
    run_campaign(&golden_streams(), &corpus(), &e, &r, &cfg).unwrap();
    let text = std::fs::read_to_string(&journal).unwrap();

    let torn = format!("{text}{{\"type\":\"stream\",\"encod");
    let j = parse_journal(&torn).unwrap();
    assert_eq!(j.records.len(), 20);
    assert_eq!(j.valid_len as usize, text.len());

    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "{not json";
    let corrupt = lines.join("\n") + "\n";
    assert_eq!(parse_journal(&corrupt).unwrap_err().0, 4);

    // Resuming over a torn tail truncates it before appending.
    std::fs::write(&journal, &torn).unwrap();
    let resumed = CampaignConfig {
        resume: true,
        ..cfg
    };
    run_campaign(&golden_streams(), &corpus(), &e, &r, &resumed).unwrap();
    assert_eq!(read_journal(&journal).unwrap().records.len(), 20);

    std::fs::write(&journal, "").unwrap();
    let empty = CampaignReport::from_journal(&journal).unwrap();
    assert_eq!(empty.recorded, 0);
    assert_eq!(empty.total().streams, 0);
}

#[test]
fn sp_fp_streams_are_not_executed() {
    let specs = corpus();
    let streams: Vec<_> = golden_streams()
        .into_iter()
        .filter(|s| s.value("Rd") == Some(13) || s.value("Rt") == Some(11))
        .collect();
    assert_eq!(streams.len(), 2);
    let never = Flaky {
        inner: golden_backends().0,
        calls: AtomicUsize::new(0),
        fail_after: 0,
    };
    let report = run_campaign(&streams, &specs, &never, &never, &config(1)).unwrap();
    assert_eq!(report.filtered_sp_fp, 2);
    let _ = FilterReason::SpFpAccess;
}
