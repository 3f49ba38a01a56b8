//! Fixtures shared by the integration targets: synthetic corpora, study packages, a
//! decoy-aware simulated rater and helpers to drive the `voc` binary.
#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use voc_core::dataset::PositivePair;
use reqwest::StatusCode;
use voc_app::server::NextBallot;
use voc_core::study::{BallotView, Rating, StatementRecord, StudyDesign, StudyPackage, StudyStore};
use voc_core::{jsonl, Label, Verbatim};

pub const CATEGORY: &str = "wood stain products";
pub const HUMAN: &str = "mth_human";
pub const MODEL: &str = "mth_model";
pub const METHODS: [&str; 2] = [HUMAN, MODEL];
pub const RATERS: [&str; 3] = ["rater_a", "rater_b", "rater_c"];

pub fn voc(cwd: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_voc"));
    cmd.current_dir(cwd).env_remove("VOC_LOG").env_remove("VOC_ADMIN_TOKEN");
    cmd
}

pub fn run(cwd: &Path, args: &[&str]) -> Output {
    voc(cwd).args(args).output().expect("voc runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap_or_default())
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {text}\nstderr: {}", String::from_utf8_lossy(&out.stderr)))
}

pub fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr has no JSON error ({e}): {text}"))
}

/// Positive pairs and a negative pool written as JSON Lines; returns their paths.
pub fn write_dataset_inputs(dir: &Path, positives: usize, pool: usize) -> (PathBuf, PathBuf) {
    let pairs = (0..positives).map(|i| PositivePair {
        verbatim_id: format!("p{i:05}"),
        text: format!("Review sentence {i}: the finish went on evenly and dried by morning."),
        cn: format!("Able to finish project {i} in one day"),
        category: None,
    });
    let negatives = (0..pool).map(|i| Verbatim::new(&format!("n{i:05}"), 0, format!("Shipping note {i}, arrived on a Tuesday."), CATEGORY));
    let p = dir.join("positives.jsonl");
    let n = dir.join("pool.jsonl");
    jsonl::write(&p, pairs).unwrap();
    jsonl::write(&n, negatives).unwrap();
    (p, n)
}

/// Labelled corpus with `k` items per label, texts free of any blinded vocabulary.
pub fn study_corpus(verbatim: usize, informative: usize, uninformative: usize) -> Vec<Verbatim> {
    let mut out = Vec::new();
    for (label, n) in [(Label::Verbatim, verbatim), (Label::Informative, informative), (Label::Uninformative, uninformative)] {
        for i in 0..n {
            let mut v = Verbatim::new(&format!("{}{i:03}", &label.as_str()[..1]), 0, format!("Review {} {i}: the stain soaked in fast.", &label.as_str()[..1]), CATEGORY);
            v.label = label;
            out.push(v);
        }
    }
    out
}

pub fn decoy_pool() -> Vec<String> {
    (0..25).map(|k| format!("Reference need number {k} for the category")).collect()
}

/// The analysts state a need only for labelled verbatims; the model also for informative items.
pub fn study_statements(corpus: &[Verbatim]) -> Vec<StatementRecord> {
    let mut out = Vec::new();
    for v in corpus {
        let human = (v.label == Label::Verbatim).then(|| format!("Analyst need behind {}", v.doc_id));
        let model = match v.label {
            Label::Uninformative => Some("[]".to_string()),
            _ => Some(format!("Model need behind {}", v.doc_id)),
        };
        out.push(StatementRecord { verbatim_id: v.verbatim_id.clone(), method: HUMAN.into(), statement: human });
        out.push(StatementRecord { verbatim_id: v.verbatim_id.clone(), method: MODEL.into(), statement: model });
    }
    out
}

pub fn study_package(study_id: &str, seed: u64) -> StudyPackage {
    let corpus = study_corpus(90, 30, 30);
    let statements = study_statements(&corpus);
    StudyPackage { design: StudyDesign::new(study_id, &METHODS, &RATERS, seed), corpus, statements, decoy_pool: decoy_pool() }
}

/// A rater who recognises statements unrelated to the review (decoys) most of the time and
/// otherwise answers with fixed propensities.
pub struct SimulatedRater {
    rng: ChaCha8Rng,
    decoys: Vec<String>,
}

impl SimulatedRater {
    pub fn new(seed: u64) -> Self {
        SimulatedRater { rng: ChaCha8Rng::seed_from_u64(seed), decoys: decoy_pool() }
    }

    pub fn answer(&mut self, view: &BallotView) -> Rating {
        let mut cells = Vec::new();
        for s in &view.statements {
            let decoy = self.decoys.contains(&s.statement_text);
            for d in &view.dimensions {
                let p_yes = match (d.id.as_str(), decoy) {
                    ("grounded", true) => 0.03,
                    ("grounded", false) => 0.93,
                    (_, true) => 0.6,
                    _ => 0.75,
                };
                cells.push((s.slot, d.id.clone(), self.rng.random_bool(p_yes)));
            }
        }
        Rating::new(&view.ballot_id, &view.rater_id, cells)
    }
}

/// A `voc study serve` child process and the address it announced.
pub struct ServerProcess {
    pub child: Child,
    pub base: String,
}

impl ServerProcess {
    pub fn spawn(cwd: &Path, root: &Path) -> Self {
        let mut child = voc(cwd)
            .args(["study", "serve", "--bind", "127.0.0.1:0", "--root"])
            .arg(root)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("server starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let event: serde_json::Value = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line:?}"));
        assert_eq!(event["event"], "listening");
        let base = format!("http://{}", event["addr"].as_str().unwrap());
        ServerProcess { child, base }
    }

    /// SIGKILL: no shutdown hook runs.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

async fn fetch_all(client: &reqwest::Client, base: &str, rater: &str) -> Vec<Rating> {
    // each ballot is fetched under its own session so the whole queue can be pre-issued
    let mut out = Vec::new();
    let mut sim = SimulatedRater::new(rater.len() as u64);
    for k in 0.. {
        let url = format!("{base}/api/studies/crash/raters/{rater}/next-ballot?session=s{k}");
        let next: NextBallot = client.get(url).send().await.unwrap().json().await.unwrap();
        match next.ballot {
            Some(view) => out.push(sim.answer(&view)),
            None => break,
        }
    }
    out
}

/// Streams ratings from three writers, SIGKILLs the service once a third are acknowledged,
/// restarts it and resubmits everything. Returns `(acknowledged before the kill, stored)`.
pub async fn crash_scenario(dir: &Path) -> (usize, usize) {
    let root = dir.join("studies");
    let client = reqwest::Client::new();

    let server = ServerProcess::spawn(dir, &root);
    let r = client.post(format!("{}/api/admin/studies", server.base)).json(&study_package("crash", 21)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    let mut pending = Vec::new();
    for rater in RATERS {
        pending.extend(fetch_all(&client, &server.base, rater).await);
    }
    assert_eq!(pending.len(), 450);

    // three concurrent writers; kill once a third of the ratings are acknowledged
    let acked = Arc::new(Mutex::new(BTreeSet::new()));
    let chunks: Vec<Vec<Rating>> = pending.chunks(150).map(<[Rating]>::to_vec).collect();
    let mut writers = Vec::new();
    for chunk in chunks.clone() {
        let (client, base, acked) = (client.clone(), server.base.clone(), acked.clone());
        writers.push(tokio::spawn(async move {
            for rating in chunk {
                match client.post(format!("{base}/api/studies/crash/ratings")).json(&rating).send().await {
                    Ok(r) if r.status().is_success() => {
                        acked.lock().unwrap().insert(rating.ballot_id.clone());
                    }
                    Ok(r) => panic!("unexpected status {}", r.status()),
                    Err(_) => break, // server went away mid-request
                }
            }
        }));
    }
    while acked.lock().unwrap().len() < 150 {
        tokio::time::sleep(std::time::Duration::from_millis(2)).await;
    }
    tokio::task::spawn_blocking(move || server.kill()).await.unwrap();
    for w in writers {
        w.await.unwrap();
    }
    let acked = acked.lock().unwrap().clone();
    assert!(acked.len() >= 150 && acked.len() < 450, "kill landed after {} acks", acked.len());

    // the log on disk holds every acknowledged rating
    let store = StudyStore::open(&root, "crash").unwrap();
    let stored: BTreeSet<String> = store.ratings().into_iter().map(|r| r.ballot_id).collect();
    let lost: Vec<_> = acked.difference(&stored).collect();
    assert!(lost.is_empty(), "lost {} acknowledged ratings: {lost:?}", lost.len());
    drop(store);

    // a restarted service sees them, accepts the rest, and treats replays as duplicates
    let server = ServerProcess::spawn(dir, &root);
    let mut recorded = 0;
    for rating in chunks.concat() {
        let r = client.post(format!("{}/api/studies/crash/ratings", server.base)).json(&rating).send().await.unwrap();
        let body: serde_json::Value = r.json().await.unwrap();
        match body["status"].as_str() {
            Some("recorded") => {
                assert!(!stored.contains(&rating.ballot_id));
                recorded += 1;
            }
            Some("already_recorded") => assert!(stored.contains(&rating.ballot_id)),
            other => panic!("unexpected response {other:?}: {body}"),
        }
    }
    assert_eq!(recorded + stored.len(), 450);
    let progress: serde_json::Value =
        client.get(format!("{}/api/admin/studies/crash/progress", server.base)).send().await.unwrap().json().await.unwrap();
    assert!(progress.as_array().unwrap().iter().all(|p| p["complete"] == true), "{progress}");
    server.kill();
    (acked.len(), stored.len())
}
