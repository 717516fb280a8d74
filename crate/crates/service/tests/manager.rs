use std::io::Write;
use std::path::Path;
use std::sync::Barrier;

use alphawealth_core::qpd::QpdVariant;
use alphawealth_core::{QpdState, TestRequest};
use alphawealth_service::journal::{read_events, EventKind};
use alphawealth_service::manager::{load_journal, state_hash, CreateInstance, ExecuteRequest, Manager};
use alphawealth_service::ServiceError;
use proptest::prelude::*;

const MAX_COST: u64 = 100_000;

fn asr_db(id: &str) -> CreateInstance {
    CreateInstance::new(id, QpdVariant::Asr, 0.05, 0.995, 100)
}

fn exec(m: &Manager, id: &str, request: TestRequest, p_value: f64) -> Result<(), ServiceError> {
    let seq = m.snapshot(id)?.sequence_no;
    m.execute(id, &ExecuteRequest { expected_sequence_no: seq, request, p_value }).map(|_| ())
}

#[test]
fn fresh_instance_starts_at_alpha_eta() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    let snap = m.create(&CreateInstance::new("db", QpdVariant::Asr, 0.05, 0.999, 2000)).unwrap();
    assert!((snap.pool_a - 0.0475).abs() < 1e-15);
    assert_eq!(snap.pool_b, 0.0);
    assert_eq!(snap.sequence_no, 0);
    assert_eq!(snap.n, 2000);
    assert_eq!(snap.config.max_cost, MAX_COST);
}

#[test]
fn service_default_max_cost_applies_only_when_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), 777).unwrap();
    assert_eq!(m.create(&asr_db("a")).unwrap().config.max_cost, 777);
    let own = CreateInstance { max_cost: Some(5), ..asr_db("b") };
    assert_eq!(m.create(&own).unwrap().config.max_cost, 5);
}

#[test]
fn invalid_configurations_and_ids_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    for q in [0.0, 1.0, 1.5, f64::NAN] {
        let err = m.create(&CreateInstance { q, ..asr_db("db") }).unwrap_err();
        assert_eq!(err.status(), 400, "q = {q}");
    }
    for id in ["", "has space", "../x", &"x".repeat(65)] {
        assert_eq!(m.create(&asr_db(id)).unwrap_err().status(), 400, "{id:?}");
    }
    m.create(&asr_db("db")).unwrap();
    assert!(matches!(m.create(&asr_db("db")), Err(ServiceError::Duplicate(_))));
    assert!(matches!(m.snapshot("nope"), Err(ServiceError::NotFound(_))));
    // Nothing but the one valid journal was written.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn repeated_quotes_are_identical_and_do_not_move_state() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    m.create(&asr_db("db")).unwrap();
    let request = TestRequest::z(1.0, 0.4, 0.9).unwrap();
    let before = m.snapshot("db").unwrap();
    let first = m.quote("db", &request).unwrap();
    assert!(first.power_guaranteed);
    for _ in 0..5 {
        assert_eq!(m.quote("db", &request).unwrap(), first);
    }
    assert_eq!(m.snapshot("db").unwrap(), before);
}

#[test]
fn ledger_is_gap_free_and_wealth_stays_above_floor() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    for variant in QpdVariant::ALL {
        let id = variant.name();
        m.create(&CreateInstance::new(id, variant, 0.05, 0.995, 50)).unwrap();
        for i in 0..60 {
            let request = TestRequest::z(1.0, 0.3 + 0.01 * (i % 7) as f64, 0.8).unwrap();
            let p = if i % 4 == 0 { 1e-6 } else { 0.5 };
            exec(&m, id, request, p).unwrap();
            let snap = m.snapshot(id).unwrap();
            assert!(snap.wealth_floor <= snap.wealth * (1.0 + 1e-12), "{id}: {} > {}", snap.wealth_floor, snap.wealth);
        }
        let page = m.ledger(id, None, None).unwrap();
        assert_eq!(page.total, 60);
        let js: Vec<u64> = page.entries.iter().map(|e| e.j).collect();
        assert_eq!(js, (1..=60).collect::<Vec<_>>());
        let part = m.ledger(id, Some(10), Some(19)).unwrap();
        assert_eq!(part.entries, page.entries[9..19]);
        assert!(m.ledger(id, Some(61), None).unwrap().entries.is_empty());
        assert!(m.ledger(id, Some(70), None).is_err());

        let events = read_events(&dir.path().join(format!("{id}.jsonl"))).unwrap();
        let seqs: Vec<u64> = events.iter().map(|e| e.sequence_no).collect();
        assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
    }
}

#[test]
fn stale_sequence_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    m.create(&asr_db("db")).unwrap();
    let request = TestRequest::z(1.0, 0.5, 0.9).unwrap();
    exec(&m, "db", request, 0.5).unwrap();
    let err = m.execute("db", &ExecuteRequest { expected_sequence_no: 0, request, p_value: 0.5 }).unwrap_err();
    assert!(matches!(err, ServiceError::StaleSequence { expected: 0, current: 1 }));
    assert_eq!(err.status(), 409);
}

#[test]
fn concurrent_executes_admit_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    m.create(&asr_db("db")).unwrap();
    let request = TestRequest::z(1.0, 0.5, 0.9).unwrap();
    for round in 0..10u64 {
        let barrier = Barrier::new(8);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| {
                    s.spawn(|| {
                        barrier.wait();
                        m.execute("db", &ExecuteRequest { expected_sequence_no: round, request, p_value: 0.3 })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
        assert!(results
            .iter()
            .filter_map(|r| r.as_ref().err())
            .all(|e| matches!(e, ServiceError::StaleSequence { current, .. } if *current == round + 1)));
    }
    assert_eq!(m.snapshot("db").unwrap().tests_done, 10);
}

#[test]
fn corrupted_journal_line_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    {
        let m = Manager::open(dir.path(), MAX_COST).unwrap();
        m.create(&asr_db("db")).unwrap();
        for _ in 0..3 {
            exec(&m, "db", TestRequest::z(1.0, 0.5, 0.9).unwrap(), 0.01).unwrap();
        }
    }
    let path = dir.path().join("db.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("\"p_value\":0.01", "\"p_value\":0.02", 1);
    assert_ne!(tampered, text);
    std::fs::write(&path, tampered).unwrap();
    let err = Manager::open(dir.path(), MAX_COST).err().unwrap();
    assert!(matches!(err, ServiceError::CorruptJournal { line: 2, .. }), "{err}");
}

#[test]
fn journal_loads_read_only_for_offline_use() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manager::open(dir.path(), MAX_COST).unwrap();
    m.create(&asr_db("db")).unwrap();
    exec(&m, "db", TestRequest::t(0.3, 0.9).unwrap(), 0.2).unwrap();
    let (record, state) = load_journal(&dir.path().join("db.jsonl")).unwrap();
    assert_eq!(record.instance_id, "db");
    assert_eq!(state_hash(&state), m.snapshot("db").unwrap().state_hash);
}

#[derive(Debug, Clone)]
enum Op {
    Quote(usize),
    Execute(usize, f64),
    Restart,
    /// Crash while appending: garbage without a terminating newline.
    TornTail(Vec<u8>),
    /// Crash while appending the last committed line: it is cut short.
    CutLastLine(f64),
}

fn requests() -> Vec<TestRequest> {
    vec![
        TestRequest::z(1.0, 0.3, 0.8).unwrap(),
        TestRequest::z(2.0, 1.0, 0.95).unwrap(),
        TestRequest::z(1.0, 0.8, 0.6).unwrap(),
        TestRequest::t(0.5, 0.9).unwrap(),
    ]
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0usize..4).prop_map(Op::Quote),
        6 => (0usize..4, prop_oneof![Just(0.0), 0.0f64..0.02, 0.0f64..1.0]).prop_map(|(r, p)| Op::Execute(r, p)),
        1 => Just(Op::Restart),
        1 => proptest::collection::vec(any::<u8>().prop_filter("no newline", |b| *b != b'\n'), 1..40).prop_map(Op::TornTail),
        1 => (0.05f64..0.95).prop_map(Op::CutLastLine),
    ]
}

fn reference_state(cfg: alphawealth_core::QpdConfig, executed: &[(TestRequest, f64)]) -> QpdState {
    let mut s = QpdState::new(cfg).unwrap();
    for (r, p) in executed {
        s.quote_and_execute(r, *p).unwrap();
    }
    s
}

fn cut_last_line(path: &Path, frac: f64) -> Option<EventKind> {
    let bytes = std::fs::read(path).unwrap();
    let body = &bytes[..bytes.len() - 1];
    let start = body.iter().rposition(|b| *b == b'\n')? + 1;
    let last = read_events(path).unwrap().pop().unwrap();
    let len = bytes.len() - start;
    let keep = start + ((len as f64 * frac) as usize).clamp(1, len - 1);
    std::fs::OpenOptions::new().write(true).open(path).unwrap().set_len(keep as u64).unwrap();
    Some(last.event)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Whatever the interleaving of operations, restarts and crashes during a
    /// write, the recovered state equals an in-memory model fed the committed
    /// executions.
    #[test]
    fn replay_matches_in_memory_model(ops in proptest::collection::vec(op(), 1..40), variant in 0usize..3) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        let create = CreateInstance::new("db", QpdVariant::ALL[variant], 0.05, 0.995, 100);
        let mut m = Some(Manager::open(dir.path(), MAX_COST).unwrap());
        let cfg = m.as_ref().unwrap().create(&create).unwrap().config;
        let reqs = requests();
        let mut executed: Vec<(TestRequest, f64)> = Vec::new();

        for op in ops {
            match op {
                Op::Quote(r) => {
                    let mgr = m.as_ref().unwrap();
                    let got = mgr.quote("db", &reqs[r]).unwrap();
                    let want = reference_state(cfg, &executed).quote(&reqs[r]).unwrap();
                    prop_assert_eq!(got.quote, want);
                }
                Op::Execute(r, p) => {
                    exec(m.as_ref().unwrap(), "db", reqs[r], p).unwrap();
                    executed.push((reqs[r], p));
                }
                Op::Restart => {
                    drop(m.take());
                    m = Some(Manager::open(dir.path(), MAX_COST).unwrap());
                }
                Op::TornTail(bytes) => {
                    drop(m.take());
                    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(&bytes).unwrap();
                    m = Some(Manager::open(dir.path(), MAX_COST).unwrap());
                }
                Op::CutLastLine(frac) => {
                    drop(m.take());
                    if read_events(&path).unwrap().len() > 1 {
                        if let Some(EventKind::Executed { .. }) = cut_last_line(&path, frac) {
                            executed.pop();
                        }
                    }
                    m = Some(Manager::open(dir.path(), MAX_COST).unwrap());
                }
            }
            let mgr = m.as_ref().unwrap();
            let want = reference_state(cfg, &executed);
            prop_assert_eq!(mgr.get("db").unwrap().state(), want.clone());
            prop_assert_eq!(mgr.snapshot("db").unwrap().state_hash, state_hash(&want));
        }

        // Journal sequence numbers stay gap-free through every recovery.
        drop(m.take());
        let events = read_events(&path).unwrap();
        let seqs: Vec<u64> = events.iter().map(|e| e.sequence_no).collect();
        prop_assert_eq!(seqs, (1..=events.len() as u64).collect::<Vec<_>>());
        prop_assert!(std::fs::read(&path).unwrap().ends_with(b"\n"));
    }
}
