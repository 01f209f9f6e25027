//! One interactive run: a worker thread drives the era loop and publishes
//! progress; HTTP handlers read snapshots and hand decisions over.

use std::sync::Arc;
use std::time::Duration;

use dynvrp::decisions::{interactive_source, Decision, DecisionHandle};
use dynvrp::dynamics::{run_clairvoyant_observed, run_demoa_observed, EraEvent, EraRecord, EraTrace};
use dynvrp::metrics::to_aposteriori;
use dynvrp::{ApproximationSet, EmoaConfig, Error, Instance, ObjectiveVector};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

/// Run parameters accepted when creating a session. Omitted fields fall back
/// to the instance (eras, era length) or to [`EmoaConfig::default`].
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub n_eras: Option<usize>,
    pub delta: Option<f64>,
    pub seed: u64,
    pub mu: usize,
    pub lambda: usize,
    pub generations: usize,
    pub p_swap: f64,
    /// Per-boost local search budget; 0 runs every boost to a local optimum.
    pub ls_time_limit_ms: u64,
    pub clairvoyant_repeats: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        let emoa = EmoaConfig::default();
        Self {
            n_eras: None,
            delta: None,
            seed: emoa.seed,
            mu: emoa.mu,
            lambda: emoa.lambda,
            generations: emoa.generations,
            p_swap: emoa.p_swap,
            ls_time_limit_ms: emoa.ls_time_limit.map_or(0, |d| d.as_millis() as u64),
            clairvoyant_repeats: 10,
        }
    }
}

impl RunSettings {
    pub fn emoa(&self) -> EmoaConfig {
        EmoaConfig {
            mu: self.mu,
            lambda: self.lambda,
            generations: self.generations,
            p_swap: self.p_swap,
            ls_time_limit: (self.ls_time_limit_ms > 0).then(|| Duration::from_millis(self.ls_time_limit_ms)),
            seed: self.seed,
            ..EmoaConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Optimizing,
    AwaitingDecision,
    Finished,
    Aborted,
}

#[derive(Default)]
struct Progress {
    era: usize,
    now: f64,
    generation: usize,
    upper_bound: usize,
    /// Era whose decision is outstanding.
    pending: Option<usize>,
    front: Option<ApproximationSet>,
    records: Vec<EraRecord<f64>>,
    outcome: Option<std::result::Result<(), String>>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClairvoyantStatus {
    NotStarted,
    Running { repeat: usize, repeats: usize, generation: usize, generations: usize },
    Done { front: Vec<FrontPoint> },
    Failed { error: String },
}

/// State shared with the worker threads.
struct Shared {
    instance: Instance,
    progress: Mutex<Progress>,
    clairvoyant: Mutex<ClairvoyantStatus>,
}

pub struct Session {
    pub id: String,
    pub settings: RunSettings,
    pub n_eras: usize,
    pub delta: f64,
    shared: Arc<Shared>,
    /// Held for the whole hand-off so submissions are serialized. Dropping
    /// the session drops the handle, which cancels a waiting worker.
    decisions: Mutex<DecisionHandle<f64>>,
}

/// Why a decision was not applied.
#[derive(Debug)]
pub enum SubmitError {
    /// No decision is outstanding.
    Conflict(String),
    /// The decision does not fit the current front.
    Invalid(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct FrontPoint {
    pub rank: usize,
    pub tour_length: f64,
    pub unvisited: usize,
    pub unvisited_apost: usize,
    /// Planned route including both depots.
    pub route: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HistoryEntry {
    pub era: usize,
    pub t: f64,
    pub decision: String,
    pub rank: usize,
    pub front_size: usize,
    pub tour_length: f64,
    pub unvisited: usize,
    pub upper_bound: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub id: String,
    pub state: SessionState,
    pub era: usize,
    pub n_eras: usize,
    pub now: f64,
    pub delta: f64,
    pub generation: usize,
    pub generations: usize,
    pub upper_bound: usize,
    pub front: Option<Vec<FrontPoint>>,
    /// Customers already driven, in order, starting after depot 1.
    pub committed: Vec<usize>,
    pub history: Vec<HistoryEntry>,
    pub final_route: Option<Vec<usize>>,
    pub error: Option<String>,
}

fn front_points(front: &ApproximationSet, instance: &Instance, now: f64) -> Vec<FrontPoint> {
    let appeared = instance.appeared_dynamic(now);
    front
        .members()
        .iter()
        .enumerate()
        .map(|(k, (ind, obj))| FrontPoint {
            rank: k + 1,
            tour_length: obj.tour_length,
            unvisited: obj.unvisited,
            unvisited_apost: to_aposteriori(*obj, appeared, instance.n_dynamic()).unvisited,
            route: ind.route(instance),
        })
        .collect()
}

impl Session {
    /// Validates the settings and starts the worker thread.
    pub fn start(id: String, instance: Instance, settings: RunSettings, timeout: Option<Duration>) -> dynvrp::Result<Self> {
        let emoa = settings.emoa();
        emoa.validate()?;
        let n_eras = settings.n_eras.unwrap_or_else(|| instance.n_eras());
        let delta = settings.delta.unwrap_or_else(|| instance.delta());
        if n_eras == 0 {
            return Err(Error::Parameter("n_eras must be at least 1".into()));
        }
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::Parameter(format!("delta must be positive, got {delta}")));
        }
        if settings.clairvoyant_repeats == 0 {
            return Err(Error::Parameter("clairvoyant_repeats must be positive".into()));
        }
        let shared = Arc::new(Shared {
            instance,
            progress: Mutex::new(Progress::default()),
            clairvoyant: Mutex::new(ClairvoyantStatus::NotStarted),
        });
        let (mut source, handle) = interactive_source(timeout);
        let worker = Arc::clone(&shared);
        std::thread::Builder::new().name(format!("session-{id}")).spawn(move || {
            let mut observe = |event: EraEvent<'_, f64>| {
                let mut p = worker.progress.lock();
                match event {
                    EraEvent::Started { era, now, upper_bound } => {
                        p.era = era;
                        p.now = now;
                        p.upper_bound = upper_bound;
                        p.generation = 0;
                        p.front = None;
                    }
                    EraEvent::Generation { stats, .. } => p.generation = stats.generation,
                    EraEvent::AwaitingDecision { era, front, .. } => {
                        p.front = Some(front.clone());
                        p.pending = Some(era);
                    }
                    EraEvent::Decided { record } => {
                        if p.pending == Some(record.era) {
                            p.pending = None;
                        }
                        p.records.push(record.clone());
                    }
                }
            };
            let result = run_demoa_observed(&worker.instance, n_eras, delta, &mut source, &emoa, &mut observe);
            let mut p = worker.progress.lock();
            p.pending = None;
            p.outcome = Some(match result {
                Ok(_) => Ok(()),
                Err(partial) => {
                    tracing::info!(error = %partial.error, "session aborted");
                    Err(partial.error.to_string())
                }
            });
        })?;
        Ok(Self { id, settings, n_eras, delta, shared, decisions: Mutex::new(handle) })
    }

    pub fn instance(&self) -> &Instance {
        &self.shared.instance
    }

    pub fn state(&self) -> SessionState {
        Self::state_of(&self.shared.progress.lock())
    }

    fn state_of(p: &Progress) -> SessionState {
        match (&p.outcome, p.pending) {
            (Some(Ok(())), _) => SessionState::Finished,
            (Some(Err(_)), _) => SessionState::Aborted,
            (None, Some(_)) => SessionState::AwaitingDecision,
            (None, None) => SessionState::Optimizing,
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let p = self.shared.progress.lock();
        let instance = &self.shared.instance;
        let committed = p.records.last().map(|r| r.committed.prefix().to_vec()).unwrap_or_default();
        let history = p
            .records
            .iter()
            .map(|r| {
                let (_, obj) = r.chosen();
                HistoryEntry {
                    era: r.era,
                    t: r.start_time,
                    decision: r.decision.to_string(),
                    rank: r.chosen_rank,
                    front_size: r.front.len(),
                    tour_length: obj.tour_length,
                    unvisited: obj.unvisited,
                    upper_bound: r.upper_bound,
                }
            })
            .collect();
        let state = Self::state_of(&p);
        let final_route = match state {
            SessionState::Finished => p.records.last().map(|r| r.chosen().0.route(instance)),
            _ => None,
        };
        Snapshot {
            id: self.id.clone(),
            state,
            era: p.era,
            n_eras: self.n_eras,
            now: p.now,
            delta: self.delta,
            generation: p.generation,
            generations: if p.era <= 1 { 0 } else { self.settings.generations },
            upper_bound: p.upper_bound,
            front: p.front.as_ref().map(|f| front_points(f, instance, p.now)),
            committed,
            history,
            final_route,
            error: p.outcome.as_ref().and_then(|o| o.as_ref().err().cloned()),
        }
    }

    /// Era trace so far, in the same CSV layout as the command-line tool.
    pub fn trace_csv(&self) -> String {
        let p = self.shared.progress.lock();
        EraTrace { records: p.records.clone(), n_eras: self.n_eras, delta: self.delta, total_dynamic: self.instance().n_dynamic() }
            .to_csv_string()
    }

    /// Blocks until the worker accepts or rejects the decision. Returns the
    /// era it applied to and the chosen 1-based rank.
    pub fn submit(&self, decision: Decision<f64>) -> std::result::Result<(usize, usize), SubmitError> {
        let handle = self.decisions.lock();
        let era = {
            let p = self.shared.progress.lock();
            match (Self::state_of(&p), p.pending) {
                (SessionState::AwaitingDecision, Some(era)) => era,
                (state, _) => return Err(SubmitError::Conflict(format!("session is {state:?}, not awaiting a decision"))),
            }
        };
        let rank = handle.submit(decision).map_err(|e| match e {
            Error::Aborted(msg) => SubmitError::Conflict(msg),
            other => SubmitError::Invalid(other.to_string()),
        })?;
        let mut p = self.shared.progress.lock();
        if p.pending == Some(era) {
            p.pending = None;
        }
        Ok((era, rank))
    }

    /// Current clairvoyant status; the first call starts the computation.
    pub fn clairvoyant(&self) -> ClairvoyantStatus {
        let mut status = self.shared.clairvoyant.lock();
        if matches!(*status, ClairvoyantStatus::NotStarted) {
            let repeats = self.settings.clairvoyant_repeats;
            let generations = self.settings.generations;
            *status = ClairvoyantStatus::Running { repeat: 0, repeats, generation: 0, generations };
            let shared = Arc::clone(&self.shared);
            let emoa = self.settings.emoa();
            std::thread::spawn(move || {
                let result = run_clairvoyant_observed(&shared.instance, &emoa, repeats, &mut |repeat, generation| {
                    *shared.clairvoyant.lock() =
                        ClairvoyantStatus::Running { repeat: repeat + 1, repeats, generation, generations };
                });
                *shared.clairvoyant.lock() = match result {
                    Ok(front) => ClairvoyantStatus::Done { front: front_points(&front, &shared.instance, f64::INFINITY) },
                    Err(e) => ClairvoyantStatus::Failed { error: e.to_string() },
                };
            });
        }
        status.clone()
    }
}

/// Objective vectors of a finished clairvoyant status, for tests and clients.
pub fn clairvoyant_front(status: &ClairvoyantStatus) -> Option<Vec<ObjectiveVector>> {
    match status {
        ClairvoyantStatus::Done { front } => {
            Some(front.iter().map(|p| ObjectiveVector::new(p.tour_length, p.unvisited)).collect())
        }
        _ => None,
    }
}
