use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread;

use readtrace_core::study::{LogEntry, LogWriter, Study, StudyConfig, StudyError};
use readtrace_core::{Choice, HoverEvent, Layout, Rationale, Section, StimulusRecord, StimulusSet};

mod common;

use common::heterogeneous_corpus;

const THREADS: usize = 50;
const SESSIONS_PER_THREAD: usize = 20;

#[test]
fn concurrent_assignment_audit() {
    let stimuli = Arc::new(heterogeneous_corpus(4000, 9));
    let dir = tempfile::tempdir().unwrap();
    let study = Arc::new(Study::open(dir.path(), stimuli.clone(), StudyConfig::default(), 42).unwrap());

    let handles: Vec<_> = (0..THREADS)
        .map(|t| {
            let study = study.clone();
            thread::spawn(move || {
                let mut sessions = Vec::new();
                for i in 0..SESSIONS_PER_THREAD {
                    let s = study.create_session(&format!("worker-{t:02}"), Some(0), 1_000).unwrap();
                    // half the sessions annotate a few trials, converting reservations
                    if i % 2 == 0 {
                        for k in 0..3 {
                            let e = HoverEvent { section: Section::Prompt, char_index: 0, enter_ms: 0, exit_ms: 300 };
                            study.ingest_events(&s.session_id, k, 0, &[e], 1_000).unwrap();
                            study
                                .record_annotation(&s.session_id, k, Choice::ResponseA, Rationale::MoreHelpful, 1_000)
                                .unwrap();
                        }
                    }
                    sessions.push(s);
                }
                sessions
            })
        })
        .collect();
    let sessions: Vec<_> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    assert_eq!(sessions.len(), THREADS * SESSIONS_PER_THREAD);

    let words = |id: &str| stimuli.get(id).unwrap().word_count_total();
    let mut a_left = 0;
    let mut per_worker: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for s in &sessions {
        assert_eq!(s.trials.len(), 10);
        let distinct: BTreeSet<&str> = s.trials.iter().map(|t| t.stimulus_id.as_str()).collect();
        assert_eq!(distinct.len(), 10);
        let mean = s.trials.iter().map(|t| words(&t.stimulus_id)).sum::<usize>() as f64 / 10.0;
        assert!((300.0..=350.0).contains(&mean), "session {} mean {mean}", s.session_id);
        a_left += s.trials.iter().filter(|t| t.layout == Layout::ALeft).count();
        let seen = per_worker.entry(&s.participant_id).or_default();
        for id in distinct {
            assert!(seen.insert(id), "{} saw {id} twice", s.participant_id);
        }
    }

    let snapshot = study.corpus_snapshot();
    let mut total = 0;
    for (_, load) in snapshot.iter() {
        assert!(load.load() <= 3);
        total += load.load();
    }
    assert_eq!(total, 10_000);
    let completed: usize = snapshot.iter().map(|(_, l)| l.completed).sum();
    assert_eq!(completed, THREADS * SESSIONS_PER_THREAD / 2 * 3);

    // layout is a fair coin: 10,000 draws, three standard deviations is 150
    assert!((a_left as i64 - 5_000).abs() <= 150, "{a_left}");

    // the log alone reproduces the audit
    let log = LogWriter::read_all(dir.path()).unwrap();
    let created: Vec<_> = log
        .iter()
        .filter_map(|e| match e {
            LogEntry::SessionCreated { trials, .. } => Some(trials),
            _ => None,
        })
        .collect();
    assert_eq!(created.len(), sessions.len());
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for trials in &created {
        let mean = trials.iter().map(|t| words(&t.stimulus_id)).sum::<usize>() as f64 / trials.len() as f64;
        assert!((300.0..=350.0).contains(&mean));
        for t in trials.iter() {
            *counts.entry(&t.stimulus_id).or_default() += 1;
        }
    }
    assert!(counts.values().all(|&c| c <= 3));

    let replayed = Study::replay_dir(dir.path(), stimuli, StudyConfig::default(), 42).unwrap();
    assert_eq!(replayed.export_jsonl(), study.export_jsonl());
    assert_eq!(replayed.corpus_snapshot(), snapshot);
}

#[test]
fn capacity_runs_out_cleanly_under_contention() {
    // 30 stimuli x 3 slots fit nine batches of ten
    let stimuli = Arc::new(StimulusSet::from_records((0..30).map(|i| StimulusRecord {
        id: format!("c{i:02}"),
        prompt: vec!["w"; 318].join(" "),
        response_a: "a".into(),
        response_b: "b".into(),
        source_label: None,
    }))
    .unwrap());
    let study = Arc::new(Study::new(stimuli, StudyConfig::default(), 5));
    let results: Vec<_> = (0..20)
        .map(|t| {
            let study = study.clone();
            thread::spawn(move || study.create_session(&format!("p{t}"), None, 0))
        })
        .map(|h| h.join().unwrap())
        .collect();
    let ok = results.iter().filter(|r| r.is_ok()).count();
    assert_eq!(ok, 9);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, StudyError::Capacity(_))));
    assert!(study.corpus_snapshot().iter().all(|(_, l)| l.load() == 3));
}

#[test]
fn export_is_byte_identical_across_calls() {
    let stimuli = Arc::new(heterogeneous_corpus(200, 3));
    let study = Study::new(stimuli, StudyConfig::default(), 8);
    let s = study.create_session("p", Some(1_700_000_000_000), 0).unwrap();
    for k in 0..4 {
        let events: Vec<HoverEvent> = (0..200u64)
            .map(|i| HoverEvent { section: Section::Prompt, char_index: 2 * (i as usize % 50), enter_ms: i * 200, exit_ms: i * 200 + 180 })
            .collect();
        let ack = study.ingest_events(&s.session_id, k, 1, &events, 0).unwrap();
        assert_eq!(ack.stored, 200);
        let again = study.ingest_events(&s.session_id, k, 1, &events, 0).unwrap();
        assert!(again.duplicate && again.stored == 200);
        study.record_annotation(&s.session_id, k, Choice::ResponseB, Rationale::Other, 0).unwrap();
    }
    let first = study.export_jsonl();
    assert_eq!(first, study.export_jsonl());
    assert_eq!(first.lines().count(), 4);
}
