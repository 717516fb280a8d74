//! Instance registry. Each instance owns its state and its journal; all
//! mutations hold the state lock first and the journal lock second.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use alphawealth_core::qpd::{CostQuote, Decision, QpdConfig, QpdLedgerEntry, QpdVariant, RewardAlternative};
use alphawealth_core::{QpdState, TestRequest};
use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};
use crate::journal::{EventKind, InstanceRecord, Journal, JournalEvent};

/// Largest page returned by a single ledger query.
pub const MAX_LEDGER_PAGE: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateInstance {
    pub instance_id: String,
    pub variant: QpdVariant,
    pub alpha: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    pub q: f64,
    pub n0: u64,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub max_cost: Option<u64>,
    #[serde(default)]
    pub reward_alternative: Option<RewardAlternative>,
}

impl CreateInstance {
    pub fn new(instance_id: impl Into<String>, variant: QpdVariant, alpha: f64, q: f64, n0: u64) -> Self {
        Self {
            instance_id: instance_id.into(),
            variant,
            alpha,
            eta: None,
            q,
            n0,
            k: None,
            max_cost: None,
            reward_alternative: None,
        }
    }

    fn to_config(&self, default_max_cost: u64) -> QpdConfig {
        let mut cfg = QpdConfig::new(self.variant, self.alpha, self.eta.unwrap_or(0.95), self.q, self.n0);
        if let Some(k) = self.k {
            cfg.k = k;
        }
        cfg.max_cost = self.max_cost.unwrap_or(default_max_cost);
        if let Some(r) = self.reward_alternative {
            cfg.reward_alternative = r;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub instance_id: String,
    pub config: QpdConfig,
    pub created_at: DateTime<Utc>,
    /// Version of the state; equals the number of executed tests.
    pub sequence_no: u64,
    pub pool_a: f64,
    pub pool_b: f64,
    pub wealth: f64,
    pub wealth_floor: f64,
    pub n: u64,
    pub tests_done: u64,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub state_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteResponse {
    pub instance_id: String,
    pub sequence_no: u64,
    pub quote: CostQuote,
    pub power_guaranteed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecuteRequest {
    pub expected_sequence_no: u64,
    pub request: TestRequest,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteResponse {
    pub instance_id: String,
    pub sequence_no: u64,
    pub quote: CostQuote,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerPage {
    pub instance_id: String,
    pub total: u64,
    pub from: u64,
    pub to: u64,
    pub entries: Vec<QpdLedgerEntry>,
}

pub struct Instance {
    record: InstanceRecord,
    state: RwLock<QpdState>,
    journal: Mutex<Journal>,
}

impl Instance {
    pub fn record(&self) -> &InstanceRecord {
        &self.record
    }

    pub fn state(&self) -> QpdState {
        self.state.read().clone()
    }

    pub fn snapshot(&self) -> Snapshot {
        snapshot(&self.record, &self.state.read())
    }
}

pub fn state_hash(state: &QpdState) -> String {
    let bytes = serde_json::to_vec(state).expect("state serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn snapshot(record: &InstanceRecord, s: &QpdState) -> Snapshot {
    Snapshot {
        instance_id: record.instance_id.clone(),
        config: s.config,
        created_at: record.created_at,
        sequence_no: s.tests_done,
        pool_a: s.pool_a,
        pool_b: s.pool_b,
        wealth: s.wealth(),
        wealth_floor: s.wealth_floor(),
        n: s.n,
        tests_done: s.tests_done,
        rejections: s.rejections,
        rejection_rate: s.rejection_rate(),
        state_hash: state_hash(s),
    }
}

pub fn validate_id(id: &str) -> Result<()> {
    let ok = (1..=64).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(ServiceError::BadRequest(format!("instance id {id:?} must match [A-Za-z0-9_-]{{1,64}}")))
    }
}

/// Rebuilds an instance from its journal events, re-deriving every executed
/// test and checking it against the recorded decision.
pub fn replay_events(path: &Path, events: &[JournalEvent]) -> Result<(InstanceRecord, QpdState)> {
    let corrupt = |line: usize, reason: String| ServiceError::CorruptJournal {
        path: path.display().to_string(),
        line,
        reason,
    };
    let Some(first) = events.first() else {
        return Err(corrupt(1, "journal is empty".into()));
    };
    let EventKind::Created(record) = &first.event else {
        return Err(corrupt(1, "first event is not a creation record".into()));
    };
    let mut state = QpdState::new(record.config).map_err(|e| corrupt(1, e.to_string()))?;
    for (i, ev) in events.iter().enumerate().skip(1) {
        match &ev.event {
            EventKind::Created(_) => return Err(corrupt(i + 1, "duplicate creation record".into())),
            EventKind::Quoted { .. } => {}
            EventKind::Executed { request, quote, p_value, decision } => {
                let fresh = state.quote(request).map_err(|e| corrupt(i + 1, format!("quote failed: {e}")))?;
                if fresh != *quote {
                    return Err(corrupt(i + 1, format!("recomputed quote {fresh:?} differs from {quote:?}")));
                }
                let got = state.execute(request, quote, *p_value).map_err(|e| corrupt(i + 1, e.to_string()))?;
                if got != *decision {
                    return Err(corrupt(i + 1, format!("recomputed decision {got:?} differs from {decision:?}")));
                }
            }
        }
    }
    Ok((record.clone(), state))
}

/// Reads a journal file and returns its instance without taking ownership of it.
pub fn load_journal(path: &Path) -> Result<(InstanceRecord, QpdState)> {
    let events = crate::journal::read_events(path)?;
    replay_events(path, &events)
}

pub struct Manager {
    data_dir: PathBuf,
    default_max_cost: u64,
    instances: RwLock<BTreeMap<String, Arc<Instance>>>,
}

impl Manager {
    /// Opens `data_dir`, creating it if needed, and replays every journal in it.
    pub fn open(data_dir: impl Into<PathBuf>, default_max_cost: u64) -> Result<Self> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        let mut instances = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let (journal, events) = Journal::open(&path)?;
            if events.is_empty() {
                // Creation never committed; the instance does not exist.
                tracing::warn!(path = %path.display(), "removing journal without a creation record");
                drop(journal);
                std::fs::remove_file(&path)?;
                continue;
            }
            let (record, state) = replay_events(&path, &events)?;
            tracing::info!(instance = %record.instance_id, tests = state.tests_done, "replayed journal");
            let id = record.instance_id.clone();
            let instance = Instance { record, state: RwLock::new(state), journal: Mutex::new(journal) };
            instances.insert(id, Arc::new(instance));
        }
        Ok(Self { data_dir, default_max_cost, instances: RwLock::new(instances) })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn get(&self, id: &str) -> Result<Arc<Instance>> {
        self.instances.read().get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn list(&self) -> Vec<Snapshot> {
        let instances: Vec<Arc<Instance>> = self.instances.read().values().cloned().collect();
        instances.iter().map(|i| i.snapshot()).collect()
    }

    pub fn create(&self, req: &CreateInstance) -> Result<Snapshot> {
        validate_id(&req.instance_id)?;
        let config = req.to_config(self.default_max_cost);
        let state = QpdState::new(config)?;
        let mut instances = self.instances.write();
        if instances.contains_key(&req.instance_id) {
            return Err(ServiceError::Duplicate(req.instance_id.clone()));
        }
        let path = self.data_dir.join(format!("{}.jsonl", req.instance_id));
        let mut journal = match Journal::create(&path) {
            Err(ServiceError::Io(e)) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(ServiceError::Duplicate(req.instance_id.clone()));
            }
            other => other?,
        };
        let record = InstanceRecord {
            instance_id: req.instance_id.clone(),
            config,
            created_at: Utc::now(),
            journal_path: path.display().to_string(),
        };
        if let Err(e) = journal.append(EventKind::Created(record.clone()), true) {
            let _ = std::fs::remove_file(&path);
            return Err(e);
        }
        std::fs::File::open(&self.data_dir).and_then(|d| d.sync_all())?;
        let snap = snapshot(&record, &state);
        let instance = Instance { record, state: RwLock::new(state), journal: Mutex::new(journal) };
        instances.insert(req.instance_id.clone(), Arc::new(instance));
        Ok(snap)
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot> {
        Ok(self.get(id)?.snapshot())
    }

    pub fn quote(&self, id: &str, request: &TestRequest) -> Result<QuoteResponse> {
        request.validate()?;
        let inst = self.get(id)?;
        let state = inst.state.read();
        let quote = state.quote(request)?;
        let power_guaranteed = QpdState::power_guarantee_check(request, &quote);
        if !power_guaranteed {
            tracing::error!(instance = id, ?quote, "quote fails the power guarantee");
        }
        inst.journal.lock().append(EventKind::Quoted { request: *request, quote }, false)?;
        Ok(QuoteResponse { instance_id: id.to_string(), sequence_no: state.tests_done, quote, power_guaranteed })
    }

    pub fn execute(&self, id: &str, req: &ExecuteRequest) -> Result<ExecuteResponse> {
        req.request.validate()?;
        if !(0.0..=1.0).contains(&req.p_value) {
            return Err(ServiceError::BadRequest(format!("p_value {} outside [0, 1]", req.p_value)));
        }
        let inst = self.get(id)?;
        let mut state = inst.state.write();
        if req.expected_sequence_no != state.tests_done {
            return Err(ServiceError::StaleSequence { expected: req.expected_sequence_no, current: state.tests_done });
        }
        let quote = state.quote(&req.request)?;
        let saved = (state.pool_a, state.pool_b, state.n, state.tests_done, state.rejections);
        let decision = state.execute(&req.request, &quote, req.p_value)?;
        let event = EventKind::Executed { request: req.request, quote, p_value: req.p_value, decision };
        if let Err(e) = inst.journal.lock().append(event, true) {
            (state.pool_a, state.pool_b, state.n, state.tests_done, state.rejections) = saved;
            state.ledger.pop();
            return Err(e);
        }
        Ok(ExecuteResponse { instance_id: id.to_string(), sequence_no: state.tests_done, quote, decision })
    }

    /// Ledger entries with `from ≤ j ≤ to`, 1-based; at most [`MAX_LEDGER_PAGE`].
    pub fn ledger(&self, id: &str, from: Option<u64>, to: Option<u64>) -> Result<LedgerPage> {
        let inst = self.get(id)?;
        let state = inst.state.read();
        let total = state.tests_done;
        let from = from.unwrap_or(1).max(1);
        let to = to.unwrap_or(total).min(total).min(from.saturating_add(MAX_LEDGER_PAGE - 1));
        if from > total + 1 {
            return Err(ServiceError::BadRequest(format!("from {from} beyond ledger length {total}")));
        }
        let entries =
            if from <= to { state.ledger[(from - 1) as usize..to as usize].to_vec() } else { Vec::new() };
        Ok(LedgerPage { instance_id: id.to_string(), total, from, to, entries })
    }
}
