//! File-backed study storage.
//!
//! ```text
//! <root>/<study_id>/design.json    immutable
//! <root>/<study_id>/ballots.jsonl  immutable, includes the hidden slot assignments
//! <root>/<study_id>/ratings.jsonl  append-only; one accepted rating per line
//! ```
//!
//! A rating is acknowledged only after its line has been written and synced. On open the log
//! is replayed; an unterminated, unparseable last line is the remnant of an interrupted write
//! and is cut off, while damage anywhere else is reported as corruption.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::{AnswerGrid, Ballot, Rating, StudyDesign, StudyError};
use crate::jsonl;

pub const DESIGN_FILE: &str = "design.json";
pub const BALLOTS_FILE: &str = "ballots.jsonl";
pub const RATINGS_FILE: &str = "ratings.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Recorded,
    /// Identical content was already on file; nothing was written.
    AlreadyRecorded,
}

#[derive(Debug)]
pub struct StudyStore {
    dir: PathBuf,
    design: StudyDesign,
    ballots: Vec<Ballot>,
    index: HashMap<String, usize>,
    /// Accepted ratings by ballot index, with their grids.
    ratings: HashMap<usize, (Rating, AnswerGrid)>,
    /// Ballot indices in arrival order.
    arrivals: Vec<usize>,
    log: File,
    log_len: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StudyError + '_ {
    move |source| StudyError::Io { path: path.to_owned(), source }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl StudyStore {
    /// Writes a new study directory. Fails if the study already exists.
    pub fn create(root: &Path, design: &StudyDesign, ballots: Vec<Ballot>) -> Result<Self, StudyError> {
        design.validate()?;
        let dir = root.join(&design.study_id);
        if dir.exists() {
            return Err(StudyError::StudyExists(design.study_id.clone()));
        }
        fs::create_dir_all(root).map_err(io_err(root))?;
        // build in a scratch directory and rename, so a crash never leaves half a study
        let scratch = root.join(format!(".{}.tmp-{}", design.study_id, std::process::id()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch).map_err(io_err(&scratch))?;
        }
        fs::create_dir_all(&scratch).map_err(io_err(&scratch))?;
        let design_path = scratch.join(DESIGN_FILE);
        let body = serde_json::to_string_pretty(design).expect("design serializes") + "\n";
        fs::write(&design_path, body).map_err(io_err(&design_path))?;
        jsonl::write(&scratch.join(BALLOTS_FILE), &ballots)?;
        let ratings_path = scratch.join(RATINGS_FILE);
        File::create(&ratings_path).and_then(|f| f.sync_all()).map_err(io_err(&ratings_path))?;
        fs::rename(&scratch, &dir).map_err(io_err(&dir))?;
        Self::open(root, &design.study_id)
    }

    pub fn open(root: &Path, study_id: &str) -> Result<Self, StudyError> {
        let dir = root.join(study_id);
        if !dir.join(DESIGN_FILE).is_file() {
            return Err(StudyError::UnknownStudy(study_id.to_owned()));
        }
        let design_path = dir.join(DESIGN_FILE);
        let raw = fs::read_to_string(&design_path).map_err(io_err(&design_path))?;
        let design: StudyDesign =
            serde_json::from_str(&raw).map_err(|source| StudyError::Json { path: design_path.clone(), source })?;
        let ballots: Vec<Ballot> = jsonl::read(&dir.join(BALLOTS_FILE))?;
        let index = ballots.iter().enumerate().map(|(i, b)| (b.ballot_id.clone(), i)).collect();

        let log_path = dir.join(RATINGS_FILE);
        let mut log = OpenOptions::new().read(true).append(true).create(true).open(&log_path).map_err(io_err(&log_path))?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes).map_err(io_err(&log_path))?;

        let mut store = StudyStore {
            dir,
            design,
            ballots,
            index,
            ratings: HashMap::new(),
            arrivals: Vec::new(),
            log,
            log_len: 0,
        };
        store.replay(&log_path, &bytes)?;
        Ok(store)
    }

    fn replay(&mut self, path: &Path, bytes: &[u8]) -> Result<(), StudyError> {
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let (line, terminated) = match bytes[offset..].iter().position(|&b| b == b'\n') {
                Some(n) => (&bytes[offset..offset + n], true),
                None => (&bytes[offset..], false),
            };
            let next = offset + line.len() + usize::from(terminated);
            let corrupt = |message: String| StudyError::CorruptLog { path: path.to_owned(), line: line_no, message };
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = next;
                continue;
            }
            let parsed = std::str::from_utf8(line)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<Rating>(s).map_err(|e| e.to_string()));
            let rating = match parsed {
                Ok(r) => r,
                Err(message) if !terminated => {
                    tracing::warn!(path = %path.display(), line = line_no, %message, "dropping torn final rating line");
                    self.log.set_len(offset as u64).and_then(|_| self.log.sync_all()).map_err(io_err(path))?;
                    break;
                }
                Err(message) => return Err(corrupt(message)),
            };
            if !terminated {
                self.log.write_all(b"\n").and_then(|_| self.log.sync_data()).map_err(io_err(path))?;
            }
            match self.check(&rating) {
                Ok((idx, grid, None)) => {
                    self.ratings.insert(idx, (rating, grid));
                    self.arrivals.push(idx);
                }
                Ok((_, _, Some(SubmitOutcome::AlreadyRecorded))) => {}
                Ok(_) => unreachable!(),
                Err(e) => return Err(corrupt(e.to_string())),
            }
            offset = next;
        }
        self.log_len = self.log.metadata().map_err(io_err(path))?.len();
        Ok(())
    }

    /// Validates a rating. `Some(AlreadyRecorded)` means an identical rating is on file.
    fn check(&self, rating: &Rating) -> Result<(usize, AnswerGrid, Option<SubmitOutcome>), StudyError> {
        let idx = *self
            .index
            .get(&rating.ballot_id)
            .ok_or_else(|| StudyError::UnknownBallot(rating.ballot_id.clone()))?;
        let ballot = &self.ballots[idx];
        if ballot.rater_id != rating.rater_id {
            return Err(StudyError::WrongRater { ballot_id: rating.ballot_id.clone(), rater_id: rating.rater_id.clone() });
        }
        let grid = rating.grid(ballot, &self.design.dimensions)?;
        match self.ratings.get(&idx) {
            Some((_, existing)) if *existing == grid => Ok((idx, grid, Some(SubmitOutcome::AlreadyRecorded))),
            Some(_) => Err(StudyError::ConflictingRating {
                ballot_id: rating.ballot_id.clone(),
                rater_id: rating.rater_id.clone(),
            }),
            None => Ok((idx, grid, None)),
        }
    }

    /// Durably records a rating. Returns only after the log line is synced.
    pub fn submit(&mut self, rating: &Rating) -> Result<SubmitOutcome, StudyError> {
        let (idx, grid, outcome) = self.check(rating)?;
        if let Some(outcome) = outcome {
            return Ok(outcome);
        }
        let mut stored = rating.canonical(&grid);
        stored.submitted_at = Some(now_ms());
        let mut line = serde_json::to_vec(&stored).expect("rating serializes");
        line.push(b'\n');
        let path = self.dir.join(RATINGS_FILE);
        if let Err(source) = self.log.write_all(&line).and_then(|_| self.log.sync_data()) {
            // leave no partial line behind for the next append to run into
            let _ = self.log.set_len(self.log_len);
            return Err(StudyError::Io { path, source });
        }
        self.log_len += line.len() as u64;
        self.ratings.insert(idx, (stored, grid));
        self.arrivals.push(idx);
        Ok(SubmitOutcome::Recorded)
    }

    pub fn flush(&self) -> Result<(), StudyError> {
        self.log.sync_all().map_err(io_err(&self.dir.join(RATINGS_FILE)))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn design(&self) -> &StudyDesign {
        &self.design
    }

    pub fn ballots(&self) -> &[Ballot] {
        &self.ballots
    }

    pub fn ballot(&self, ballot_id: &str) -> Option<&Ballot> {
        self.index.get(ballot_id).map(|&i| &self.ballots[i])
    }

    pub fn is_rated(&self, ballot_id: &str) -> bool {
        self.index.get(ballot_id).is_some_and(|i| self.ratings.contains_key(i))
    }

    /// Accepted ratings in arrival order.
    pub fn ratings(&self) -> Vec<Rating> {
        self.arrivals.iter().map(|i| self.ratings[i].0.clone()).collect()
    }

    pub fn rating_count(&self) -> usize {
        self.arrivals.len()
    }

    /// This rater's ballots in queue order.
    pub fn queue<'a>(&'a self, rater_id: &'a str) -> impl Iterator<Item = &'a Ballot> + 'a {
        let mut mine: Vec<&Ballot> = self.ballots.iter().filter(|b| b.rater_id == rater_id).collect();
        mine.sort_by_key(|b| b.position);
        mine.into_iter()
    }
}
