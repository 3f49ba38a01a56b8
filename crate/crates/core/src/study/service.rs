//! Thread-safe study registry behind the rater-facing API.
//!
//! Each study sits behind its own lock, so submissions are serialised per study and every
//! read (aggregation, progress) sees a consistent snapshot. Ballots handed out to a session
//! are leased so that two sessions of the same rater never work on the same ballot at once.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    aggregate_majority, assemble_ballots, build_sample, compare_methods, disaggregate, resolve_votes, Ballot,
    BallotView, ComparisonResult, DecoyPolicy, DisaggregateRow, Judgment, Rating, StatementsByMethod, StudyDesign,
    StudyError, StudyStore, SubmitOutcome, TestKind, Vote,
};
use crate::Verbatim;

/// How long an issued ballot stays reserved for the session that fetched it.
pub const LEASE_TTL: Duration = Duration::from_secs(15 * 60);

/// One method's output for one verbatim; `None` when the method found no need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub verbatim_id: String,
    pub method: String,
    #[serde(default)]
    pub statement: Option<String>,
}

/// Everything needed to create a study: the design, the labelled corpus to sample from,
/// every method's statements and the pool of real needs used as decoys.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyPackage {
    pub design: StudyDesign,
    pub corpus: Vec<Verbatim>,
    pub statements: Vec<StatementRecord>,
    #[serde(default)]
    pub decoy_pool: Vec<String>,
}

impl StudyPackage {
    pub fn ballots(&self) -> Result<Vec<Ballot>, StudyError> {
        self.design.validate()?;
        let sample = build_sample(&self.corpus, &self.design.sample_spec, self.design.seed)?;
        let mut by_method = StatementsByMethod::new();
        for r in &self.statements {
            if !self.design.methods.contains(&r.method) {
                return Err(StudyError::UnknownMethod(r.method.clone()));
            }
            if let Some(s) = &r.statement {
                by_method.entry(r.verbatim_id.clone()).or_default().insert(r.method.clone(), s.clone());
            }
        }
        assemble_ballots(&sample, &by_method, &self.decoy_pool, &self.design)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionDimension {
    pub id: String,
    pub prompt: String,
    pub instruction: String,
}

/// Text shown to raters before their first ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instructions {
    pub study_id: String,
    pub text: String,
    pub dimensions: Vec<InstructionDimension>,
    pub statements_per_ballot: usize,
    pub ballots_per_rater: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub rater_id: String,
    pub rated: usize,
    pub total: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonQuery {
    #[serde(default)]
    pub test: TestKind,
    /// Overrides each dimension's own decoy setting.
    #[serde(default)]
    pub decoys: Option<DecoyPolicy>,
    #[serde(default)]
    pub partial: bool,
}

struct Lease {
    session: String,
    expires: Instant,
}

struct Live {
    store: StudyStore,
    /// Keyed by ballot id.
    leases: HashMap<String, Lease>,
}

impl Live {
    fn per_rater(&self) -> usize {
        let raters = self.store.design().raters.len().max(1);
        self.store.ballots().len() / raters
    }

    fn progress(&self, rater_id: &str) -> Progress {
        let total = self.store.queue(rater_id).count();
        let rated = self.store.queue(rater_id).filter(|b| self.store.is_rated(&b.ballot_id)).count();
        Progress { rater_id: rater_id.to_owned(), rated, total, complete: rated == total }
    }

    fn check_rater(&self, rater_id: &str) -> Result<(), StudyError> {
        if self.store.design().raters.iter().any(|r| r == rater_id) {
            Ok(())
        } else {
            Err(StudyError::UnknownRater(rater_id.to_owned()))
        }
    }
}

pub struct StudyRegistry {
    root: PathBuf,
    studies: Mutex<HashMap<String, Arc<Mutex<Live>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl StudyRegistry {
    /// Registry over `<root>/<study_id>/` directories; studies are opened lazily.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StudyRegistry { root: root.into(), studies: Mutex::new(HashMap::new()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self, package: &StudyPackage) -> Result<String, StudyError> {
        let ballots = package.ballots()?;
        let id = package.design.study_id.clone();
        let mut studies = lock(&self.studies);
        if studies.contains_key(&id) {
            return Err(StudyError::StudyExists(id));
        }
        let store = StudyStore::create(&self.root, &package.design, ballots)?;
        tracing::info!(study = %id, ballots = store.ballots().len(), "study created");
        studies.insert(id.clone(), Arc::new(Mutex::new(Live { store, leases: HashMap::new() })));
        Ok(id)
    }

    fn live(&self, study_id: &str) -> Result<Arc<Mutex<Live>>, StudyError> {
        let mut studies = lock(&self.studies);
        if let Some(live) = studies.get(study_id) {
            return Ok(live.clone());
        }
        if study_id.is_empty() || !study_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(StudyError::UnknownStudy(study_id.to_owned()));
        }
        let store = StudyStore::open(&self.root, study_id)?;
        let live = Arc::new(Mutex::new(Live { store, leases: HashMap::new() }));
        studies.insert(study_id.to_owned(), live.clone());
        Ok(live)
    }

    fn with<T>(&self, study_id: &str, f: impl FnOnce(&mut Live) -> Result<T, StudyError>) -> Result<T, StudyError> {
        let live = self.live(study_id)?;
        let mut guard = lock(&live);
        f(&mut guard)
    }

    /// Study ids present on disk, sorted.
    pub fn list(&self) -> Result<Vec<String>, StudyError> {
        let mut ids = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ids),
            Err(source) => return Err(StudyError::Io { path: self.root.clone(), source }),
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.join(super::store::DESIGN_FILE).is_file() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    if !name.starts_with('.') {
                        ids.push(name.to_owned());
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn design(&self, study_id: &str) -> Result<StudyDesign, StudyError> {
        self.with(study_id, |live| Ok(live.store.design().clone()))
    }

    pub fn instructions(&self, study_id: &str) -> Result<Instructions, StudyError> {
        self.with(study_id, |live| {
            let design = live.store.design();
            Ok(Instructions {
                study_id: design.study_id.clone(),
                text: design.instructions.clone(),
                dimensions: design
                    .dimensions
                    .iter()
                    .map(|d| InstructionDimension {
                        id: d.id.clone(),
                        prompt: d.prompt.clone(),
                        instruction: d.instruction.clone(),
                    })
                    .collect(),
                statements_per_ballot: design.methods.len(),
                ballots_per_rater: live.per_rater(),
            })
        })
    }

    /// The rater's next unrated ballot that no other live session holds. A session asking
    /// again before submitting gets the same ballot back.
    pub fn next_ballot(&self, study_id: &str, rater_id: &str, session: &str) -> Result<Option<BallotView>, StudyError> {
        self.with(study_id, |live| {
            live.check_rater(rater_id)?;
            let now = Instant::now();
            live.leases.retain(|_, lease| lease.expires > now);
            let Live { store, leases } = live;
            let mut queue = store.queue(rater_id).filter(|b| !store.is_rated(&b.ballot_id));
            let held = store
                .queue(rater_id)
                .find(|b| !store.is_rated(&b.ballot_id) && leases.get(&b.ballot_id).is_some_and(|l| l.session == session));
            let chosen = held.or_else(|| queue.find(|b| !leases.contains_key(&b.ballot_id)));
            let Some(ballot) = chosen else { return Ok(None) };
            leases.insert(ballot.ballot_id.clone(), Lease { session: session.to_owned(), expires: now + LEASE_TTL });
            let total = store.queue(rater_id).count();
            Ok(Some(ballot.view(&store.design().dimensions, total)))
        })
    }

    pub fn submit(&self, study_id: &str, rating: &Rating) -> Result<SubmitOutcome, StudyError> {
        self.with(study_id, |live| {
            live.check_rater(&rating.rater_id)?;
            let outcome = live.store.submit(rating)?;
            live.leases.remove(&rating.ballot_id);
            Ok(outcome)
        })
    }

    pub fn progress(&self, study_id: &str, rater_id: &str) -> Result<Progress, StudyError> {
        self.with(study_id, |live| {
            live.check_rater(rater_id)?;
            Ok(live.progress(rater_id))
        })
    }

    pub fn all_progress(&self, study_id: &str) -> Result<Vec<Progress>, StudyError> {
        self.with(study_id, |live| Ok(live.store.design().raters.iter().map(|r| live.progress(r)).collect()))
    }

    pub fn ratings(&self, study_id: &str) -> Result<Vec<Rating>, StudyError> {
        self.with(study_id, |live| Ok(live.store.ratings()))
    }

    pub fn votes(&self, study_id: &str) -> Result<Vec<Vote>, StudyError> {
        self.with(study_id, |live| resolve_votes(live.store.ballots(), &live.store.ratings()))
    }

    pub fn aggregate(&self, study_id: &str, partial: bool) -> Result<Vec<Judgment>, StudyError> {
        self.with(study_id, |live| {
            aggregate_majority(live.store.ballots(), &live.store.ratings(), live.store.design(), partial)
        })
    }

    /// Every method pair on every dimension, in design order.
    pub fn comparisons(&self, study_id: &str, query: ComparisonQuery) -> Result<Vec<ComparisonResult>, StudyError> {
        self.with(study_id, |live| {
            let design = live.store.design();
            let judgments = aggregate_majority(live.store.ballots(), &live.store.ratings(), design, query.partial)?;
            let mut out = Vec::new();
            for dim in &design.dimensions {
                let decoys = query.decoys.unwrap_or(if dim.include_decoys { DecoyPolicy::Include } else { DecoyPolicy::Exclude });
                for (i, a) in design.methods.iter().enumerate() {
                    for b in &design.methods[i + 1..] {
                        out.push(compare_methods(&judgments, a, b, &dim.id, query.test, decoys)?);
                    }
                }
            }
            Ok(out)
        })
    }

    pub fn disaggregation(&self, study_id: &str) -> Result<Vec<DisaggregateRow>, StudyError> {
        self.with(study_id, |live| {
            let votes = resolve_votes(live.store.ballots(), &live.store.ratings())?;
            Ok(disaggregate(&votes, live.store.design()))
        })
    }

    /// Syncs every open ratings log; used on shutdown.
    pub fn flush_all(&self) -> Result<(), StudyError> {
        let studies: Vec<_> = lock(&self.studies).values().cloned().collect();
        for live in studies {
            lock(&live).store.flush()?;
        }
        Ok(())
    }

    /// Per-study rating counts, for health reporting.
    pub fn rating_counts(&self) -> BTreeMap<String, usize> {
        lock(&self.studies).iter().map(|(id, live)| (id.clone(), lock(live).store.rating_count())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::SampleSpec;
    use crate::Label;
    use std::thread;

    const METHODS: [&str; 3] = ["mth_a", "mth_b", "mth_c"];

    pub(crate) fn package(id: &str) -> StudyPackage {
        let mut corpus = Vec::new();
        let mut statements = Vec::new();
        for (li, label) in Label::ANNOTATED.into_iter().enumerate() {
            for i in 0..6 {
                let mut v = Verbatim::new(&format!("doc{li}{i}"), 0, format!("Review text {li}{i}."), "c");
                v.label = label;
                for m in METHODS {
                    let s = (label == Label::Verbatim || m != "mth_c").then(|| format!("Need {m} {li}{i}"));
                    statements.push(StatementRecord { verbatim_id: v.verbatim_id.clone(), method: m.into(), statement: s });
                }
                corpus.push(v);
            }
        }
        let mut design = StudyDesign::new(id, &METHODS, &["r1", "r2", "r3"], 4);
        design.sample_spec = SampleSpec { verbatim: 4, informative: 2, uninformative: 2 };
        StudyPackage { design, corpus, statements, decoy_pool: vec!["Real need one".into(), "Real need two".into()] }
    }

    fn answer_all(view: &BallotView, yes: bool) -> Rating {
        let cells = view
            .statements
            .iter()
            .flat_map(|s| view.dimensions.iter().map(move |d| (s.slot, d.id.clone(), yes)));
        Rating::new(&view.ballot_id, &view.rater_id, cells)
    }

    #[test]
    fn sessions_never_share_a_ballot() {
        let tmp = tempfile::tempdir().unwrap();
        let reg = StudyRegistry::new(tmp.path());
        reg.create(&package("s")).unwrap();
        let a = reg.next_ballot("s", "r1", "tab-1").unwrap().unwrap();
        let b = reg.next_ballot("s", "r1", "tab-2").unwrap().unwrap();
        assert_ne!(a.ballot_id, b.ballot_id);
        // asking again restores the same ballot
        assert_eq!(reg.next_ballot("s", "r1", "tab-1").unwrap().unwrap().ballot_id, a.ballot_id);
        assert_eq!(reg.submit("s", &answer_all(&a, true)).unwrap(), SubmitOutcome::Recorded);
        assert_eq!(reg.submit("s", &answer_all(&a, true)).unwrap(), SubmitOutcome::AlreadyRecorded);
        assert_eq!(reg.progress("s", "r1").unwrap(), Progress { rater_id: "r1".into(), rated: 1, total: 8, complete: false });
        assert!(matches!(reg.next_ballot("s", "nobody", "x"), Err(StudyError::UnknownRater(_))));
        assert!(matches!(reg.next_ballot("zz", "r1", "x"), Err(StudyError::UnknownStudy(_))));
    }

    #[test]
    fn concurrent_raters_complete_and_aggregate() {
        let tmp = tempfile::tempdir().unwrap();
        let reg = Arc::new(StudyRegistry::new(tmp.path()));
        reg.create(&package("c")).unwrap();
        let handles: Vec<_> = ["r1", "r2", "r3"]
            .into_iter()
            .flat_map(|r| (0..2).map(move |s| (r, s)))
            .map(|(rater, s)| {
                let reg = reg.clone();
                thread::spawn(move || {
                    let session = format!("{rater}-{s}");
                    let mut done = Vec::new();
                    while let Some(view) = reg.next_ballot("c", rater, &session).unwrap() {
                        reg.submit("c", &answer_all(&view, rater != "r3")).unwrap();
                        done.push(view.ballot_id);
                    }
                    done
                })
            })
            .collect();
        let mut all: Vec<String> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n, "a ballot was issued twice");
        assert_eq!(n, 24);
        let judgments = reg.aggregate("c", false).unwrap();
        assert!(judgments.iter().all(|j| (j.yes_count, j.no_count) == (2, 1)));
        let comparisons = reg.comparisons("c", ComparisonQuery::default()).unwrap();
        assert_eq!(comparisons.len(), 9);
        assert!(reg.disaggregation("c").unwrap().iter().all(|r| r.raters == 3));

        // a fresh registry over the same root sees the same state
        let reopened = StudyRegistry::new(tmp.path());
        assert_eq!(reopened.aggregate("c", false).unwrap(), judgments);
        assert_eq!(reopened.list().unwrap(), vec!["c".to_string()]);
    }

    #[test]
    fn instructions_are_blind() {
        let tmp = tempfile::tempdir().unwrap();
        let reg = StudyRegistry::new(tmp.path());
        reg.create(&package("i")).unwrap();
        let json = serde_json::to_string(&reg.instructions("i").unwrap()).unwrap();
        assert!(json.contains("Is a customer need typically identified in a VOC study"));
        assert!(METHODS.iter().all(|m| !json.contains(m)));
    }
}
