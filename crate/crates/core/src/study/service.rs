use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::log::{LogEntry, LogWriter};
use super::{assign_batch, AssignedTrial, CorpusState, StudyConfig, StudyError};
use crate::gaze::HoverEvent;
use crate::model::{Choice, Rationale, StimulusSet, TrialRecord};

/// A participant's fixed sequence of trials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_epoch_ms: Option<u64>,
    pub trials: Vec<AssignedTrial>,
    /// Index of the next trial awaiting an annotation.
    pub cursor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    /// Events held for the trial after this batch.
    pub stored: usize,
    pub duplicate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationAck {
    pub cursor: usize,
    /// Annotated without any recorded reading.
    pub flagged_no_events: bool,
}

#[derive(Debug, Default)]
struct TrialState {
    events: Vec<HoverEvent>,
    seqs: BTreeSet<u64>,
    annotation: Option<(Choice, Rationale, u64)>,
}

#[derive(Debug)]
struct SessionState {
    session: Session,
    trials: Vec<TrialState>,
    last_active: u64,
    expired: bool,
}

impl SessionState {
    fn new(session: Session) -> Self {
        let trials = session.trials.iter().map(|_| TrialState::default()).collect();
        SessionState {
            last_active: session.created_at,
            session,
            trials,
            expired: false,
        }
    }

    fn finished(&self) -> bool {
        self.session.cursor >= self.trials.len()
    }

    fn check_trial(&self, trial: usize) -> Result<(), StudyError> {
        if trial >= self.trials.len() {
            return Err(StudyError::UnknownTrial {
                session: self.session.session_id.clone(),
                trial,
            });
        }
        if self.expired {
            return Err(StudyError::SessionExpired(self.session.session_id.clone()));
        }
        Ok(())
    }

    fn apply_events(&mut self, trial: usize, seq: u64, events: &[HoverEvent], at: u64) -> Ack {
        let state = &mut self.trials[trial];
        let duplicate = !state.seqs.insert(seq);
        if !duplicate {
            state.events.extend_from_slice(events);
        }
        self.last_active = self.last_active.max(at);
        Ack {
            stored: state.events.len(),
            duplicate,
        }
    }

    fn apply_annotation(&mut self, trial: usize, choice: Choice, rationale: Rationale, at: u64) {
        self.trials[trial].annotation = Some((choice, rationale, at));
        self.session.cursor = trial + 1;
        self.last_active = self.last_active.max(at);
    }

    /// Stimuli whose reservation is still outstanding.
    fn unfinished_stimuli(&self) -> impl Iterator<Item = &str> {
        self.session.trials[self.session.cursor.min(self.trials.len())..]
            .iter()
            .map(|t| t.stimulus_id.as_str())
    }
}

#[derive(Debug)]
struct CorpusBook {
    state: CorpusState,
    next_session: u64,
    order: Vec<String>,
    by_participant: BTreeMap<String, BTreeSet<String>>,
}

/// The study service state: sessions, reservations, and the event log.
///
/// Assignment, annotation, and expiry are serialized on the corpus lock;
/// event ingestion only locks the session it targets. Locks are always
/// taken in the order corpus, session table, session, log.
#[derive(Debug)]
pub struct Study {
    stimuli: Arc<StimulusSet>,
    config: StudyConfig,
    seed: u64,
    corpus: Mutex<CorpusBook>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    log: Option<Mutex<LogWriter>>,
}

impl Study {
    /// An in-memory study with no persistence.
    pub fn new(stimuli: Arc<StimulusSet>, config: StudyConfig, seed: u64) -> Self {
        let state = CorpusState::new(&stimuli, config.annotations_per_stimulus);
        Study {
            stimuli,
            config,
            seed,
            corpus: Mutex::new(CorpusBook {
                state,
                next_session: 0,
                order: Vec::new(),
                by_participant: BTreeMap::new(),
            }),
            sessions: RwLock::new(HashMap::new()),
            log: None,
        }
    }

    /// A study persisted under `dir`, replaying whatever is logged there.
    pub fn open(
        dir: &Path,
        stimuli: Arc<StimulusSet>,
        config: StudyConfig,
        seed: u64,
    ) -> Result<Self, StudyError> {
        let mut study = Study::new(stimuli, config, seed);
        for entry in LogWriter::read_all(dir)? {
            study.replay(entry)?;
        }
        study.log = Some(Mutex::new(LogWriter::open(dir)?));
        Ok(study)
    }

    /// Rebuilds state from the log without writing anything.
    pub fn replay_dir(
        dir: &Path,
        stimuli: Arc<StimulusSet>,
        config: StudyConfig,
        seed: u64,
    ) -> Result<Self, StudyError> {
        let mut study = Study::new(stimuli, config, seed);
        for entry in LogWriter::read_all(dir)? {
            study.replay(entry)?;
        }
        Ok(study)
    }

    fn replay(&mut self, entry: LogEntry) -> Result<(), StudyError> {
        let corpus = self.corpus.get_mut().expect("corpus lock");
        let sessions = self.sessions.get_mut().expect("session table lock");
        let corrupt = |what: &str| StudyError::Log(format!("replay: {what}"));
        match entry {
            LogEntry::SessionCreated {
                session_id,
                participant_id,
                created_at,
                client_epoch_ms,
                trials,
            } => {
                let words: usize = trials
                    .iter()
                    .map(|t| corpus.state.get(&t.stimulus_id).map_or(0, |l| l.word_count))
                    .sum();
                for t in &trials {
                    corpus.state.reserve(&t.stimulus_id);
                }
                corpus.state.record_assignment(words as u64, trials.len() as u64);
                corpus.next_session += 1;
                corpus.order.push(session_id.clone());
                corpus
                    .by_participant
                    .entry(participant_id.clone())
                    .or_default()
                    .extend(trials.iter().map(|t| t.stimulus_id.clone()));
                let session = Session {
                    session_id: session_id.clone(),
                    participant_id,
                    created_at,
                    client_epoch_ms,
                    trials,
                    cursor: 0,
                };
                sessions.insert(session_id, Arc::new(Mutex::new(SessionState::new(session))));
            }
            LogEntry::Events {
                session_id,
                trial,
                seq,
                received_at,
                events,
            } => {
                let s = sessions.get(&session_id).ok_or_else(|| corrupt("events for unknown session"))?;
                let mut s = s.lock().expect("session lock");
                if trial >= s.trials.len() {
                    return Err(corrupt("events for unknown trial"));
                }
                s.apply_events(trial, seq, &events, received_at);
            }
            LogEntry::Annotation {
                session_id,
                trial,
                choice,
                rationale,
                at,
            } => {
                let s = sessions.get(&session_id).ok_or_else(|| corrupt("annotation for unknown session"))?;
                let mut s = s.lock().expect("session lock");
                if trial >= s.trials.len() {
                    return Err(corrupt("annotation for unknown trial"));
                }
                corpus.state.complete(&s.session.trials[trial].stimulus_id);
                s.apply_annotation(trial, choice, rationale, at);
            }
            LogEntry::SessionExpired { session_id, .. } => {
                let s = sessions.get(&session_id).ok_or_else(|| corrupt("expiry of unknown session"))?;
                let mut s = s.lock().expect("session lock");
                for id in s.unfinished_stimuli() {
                    corpus.state.release(id);
                }
                s.expired = true;
            }
        }
        Ok(())
    }

    fn append(&self, entry: &LogEntry) -> Result<(), StudyError> {
        match &self.log {
            Some(log) => log.lock().expect("log lock").append(entry),
            None => Ok(()),
        }
    }

    pub fn stimuli(&self) -> &StimulusSet {
        &self.stimuli
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn corpus_snapshot(&self) -> CorpusState {
        self.corpus.lock().expect("corpus lock").state.clone()
    }

    fn session_handle(&self, session_id: &str) -> Result<Arc<Mutex<SessionState>>, StudyError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(session_id)
            .cloned()
            .ok_or_else(|| StudyError::UnknownSession(session_id.to_owned()))
    }

    pub fn session(&self, session_id: &str) -> Result<Session, StudyError> {
        let handle = self.session_handle(session_id)?;
        let s = handle.lock().expect("session lock");
        Ok(s.session.clone())
    }

    /// Releases reservations of sessions idle for longer than the TTL.
    /// Caller holds the corpus lock.
    fn sweep_expired(&self, corpus: &mut CorpusBook, now: u64) -> Result<(), StudyError> {
        let handles: Vec<_> = {
            let table = self.sessions.read().expect("session table lock");
            corpus.order.iter().filter_map(|id| table.get(id).cloned()).collect()
        };
        for handle in handles {
            let mut s = handle.lock().expect("session lock");
            if s.expired || s.finished() || s.last_active + self.config.reservation_ttl_ms >= now {
                continue;
            }
            self.append(&LogEntry::SessionExpired {
                session_id: s.session.session_id.clone(),
                at: now,
            })?;
            for id in s.unfinished_stimuli() {
                corpus.state.release(id);
            }
            s.expired = true;
        }
        Ok(())
    }

    /// Assigns a new batch to `participant_id` and opens a session for it.
    pub fn create_session(
        &self,
        participant_id: &str,
        client_epoch_ms: Option<u64>,
        now: u64,
    ) -> Result<Session, StudyError> {
        let mut corpus = self.corpus.lock().expect("corpus lock");
        self.sweep_expired(&mut corpus, now)?;
        let n = corpus.next_session;
        let seed = self.seed ^ (n + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let seen = corpus
            .by_participant
            .get(participant_id)
            .cloned()
            .unwrap_or_default();
        let mut state = corpus.state.clone();
        let trials = assign_batch(&mut state, seed, &self.config, &seen)?;
        let session = Session {
            session_id: format!("s{:06}", n + 1),
            participant_id: participant_id.to_owned(),
            created_at: now,
            client_epoch_ms,
            trials,
            cursor: 0,
        };
        self.append(&LogEntry::SessionCreated {
            session_id: session.session_id.clone(),
            participant_id: session.participant_id.clone(),
            created_at: now,
            client_epoch_ms,
            trials: session.trials.clone(),
        })?;
        corpus.state = state;
        corpus.next_session += 1;
        corpus.order.push(session.session_id.clone());
        corpus
            .by_participant
            .entry(participant_id.to_owned())
            .or_default()
            .extend(session.trials.iter().map(|t| t.stimulus_id.clone()));
        self.sessions.write().expect("session table lock").insert(
            session.session_id.clone(),
            Arc::new(Mutex::new(SessionState::new(session.clone()))),
        );
        Ok(session)
    }

    /// Appends a batch of hover events; a repeated `seq` is acknowledged
    /// without storing anything.
    pub fn ingest_events(
        &self,
        session_id: &str,
        trial: usize,
        seq: u64,
        events: &[HoverEvent],
        now: u64,
    ) -> Result<Ack, StudyError> {
        let handle = self.session_handle(session_id)?;
        let mut s = handle.lock().expect("session lock");
        s.check_trial(trial)?;
        if trial > s.session.cursor {
            return Err(StudyError::TrialNotOpen {
                trial,
                cursor: s.session.cursor,
            });
        }
        if let Some(index) = events.iter().position(|e| e.exit_ms < e.enter_ms) {
            return Err(StudyError::MalformedEvent {
                index,
                reason: "exit_ms precedes enter_ms".into(),
            });
        }
        if s.trials[trial].seqs.contains(&seq) {
            return Ok(Ack {
                stored: s.trials[trial].events.len(),
                duplicate: true,
            });
        }
        self.append(&LogEntry::Events {
            session_id: session_id.to_owned(),
            trial,
            seq,
            received_at: now,
            events: events.to_vec(),
        })?;
        Ok(s.apply_events(trial, seq, events, now))
    }

    /// Stores the choice for the session's current trial and moves on.
    pub fn record_annotation(
        &self,
        session_id: &str,
        trial: usize,
        choice: Choice,
        rationale: Rationale,
        now: u64,
    ) -> Result<AnnotationAck, StudyError> {
        let mut corpus = self.corpus.lock().expect("corpus lock");
        let handle = self.session_handle(session_id)?;
        {
            // expire first so a stale session cannot complete a released slot
            let s = handle.lock().expect("session lock");
            let stale = !s.expired
                && !s.finished()
                && s.last_active + self.config.reservation_ttl_ms < now;
            drop(s);
            if stale {
                self.sweep_expired(&mut corpus, now)?;
            }
        }
        let mut s = handle.lock().expect("session lock");
        s.check_trial(trial)?;
        let cursor = s.session.cursor;
        if trial < cursor || s.trials[trial].annotation.is_some() {
            return Err(StudyError::AlreadyAnnotated { trial });
        }
        if trial > cursor {
            return Err(StudyError::TrialNotOpen { trial, cursor });
        }
        self.append(&LogEntry::Annotation {
            session_id: session_id.to_owned(),
            trial,
            choice,
            rationale,
            at: now,
        })?;
        let flagged_no_events = s.trials[trial].events.is_empty();
        corpus.state.complete(&s.session.trials[trial].stimulus_id);
        s.apply_annotation(trial, choice, rationale, now);
        Ok(AnnotationAck {
            cursor: s.session.cursor,
            flagged_no_events,
        })
    }

    /// Raw trial records in session creation order.
    ///
    /// Trials that never received events or an annotation are left out.
    /// Events are ordered by entry time; ties keep arrival order.
    pub fn export(&self) -> Vec<TrialRecord> {
        let order = self.corpus.lock().expect("corpus lock").order.clone();
        let table = self.sessions.read().expect("session table lock");
        let mut out = Vec::new();
        for id in order {
            let Some(handle) = table.get(&id) else { continue };
            let s = handle.lock().expect("session lock");
            let epoch = s.session.client_epoch_ms.unwrap_or(s.session.created_at);
            for (k, (assigned, state)) in s.session.trials.iter().zip(&s.trials).enumerate() {
                if state.events.is_empty() && state.annotation.is_none() {
                    continue;
                }
                let mut events = state.events.clone();
                events.sort_by_key(|e| e.enter_ms);
                let first = events.first().map_or(0, |e| e.enter_ms);
                let last = events.iter().map(|e| e.exit_ms).max().unwrap_or(0);
                out.push(TrialRecord {
                    trial_id: format!("{}-t{k:02}", s.session.session_id),
                    participant_id: s.session.participant_id.clone(),
                    stimulus_id: assigned.stimulus_id.clone(),
                    layout: assigned.layout,
                    events,
                    choice: state.annotation.map(|a| a.0),
                    rationale: state.annotation.map(|a| a.1),
                    started_at: epoch + first,
                    ended_at: epoch + last,
                    excluded: false,
                    exclusion_reason: None,
                });
            }
        }
        out
    }

    pub fn export_jsonl(&self) -> String {
        crate::io::to_jsonl_string(&self.export())
    }
}
