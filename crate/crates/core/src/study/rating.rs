use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Ballot, Dimension, StudyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    pub fn is_yes(self) -> bool {
        self == YesNo::Yes
    }
}

impl From<bool> for YesNo {
    fn from(yes: bool) -> Self {
        if yes {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub slot: usize,
    pub dimension: String,
    pub answer: YesNo,
}

/// Canonical (slot, dimension) → answer form of a rating.
pub type AnswerGrid = BTreeMap<(usize, String), YesNo>;

/// One rater's answers to one ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub ballot_id: String,
    pub rater_id: String,
    pub answers: Vec<Answer>,
    /// Milliseconds since the Unix epoch, set by the store on first acceptance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<u64>,
}

impl Rating {
    pub fn new(ballot_id: &str, rater_id: &str, answers: impl IntoIterator<Item = (usize, String, bool)>) -> Self {
        Rating {
            ballot_id: ballot_id.into(),
            rater_id: rater_id.into(),
            answers: answers
                .into_iter()
                .map(|(slot, dimension, yes)| Answer { slot, dimension, answer: yes.into() })
                .collect(),
            submitted_at: None,
        }
    }

    /// Checks the answers against the ballot's grid. Repeating a cell with the same value is
    /// tolerated; every missing cell is reported.
    pub fn grid(&self, ballot: &Ballot, dimensions: &[Dimension]) -> Result<AnswerGrid, StudyError> {
        let slots = ballot.candidates.len();
        let mut grid = AnswerGrid::new();
        for a in &self.answers {
            if a.slot >= slots || !dimensions.iter().any(|d| d.id == a.dimension) {
                return Err(StudyError::UnknownCell { slot: a.slot, dimension: a.dimension.clone() });
            }
            match grid.insert((a.slot, a.dimension.clone()), a.answer) {
                Some(prev) if prev != a.answer => {
                    return Err(StudyError::ContradictoryCell { slot: a.slot, dimension: a.dimension.clone() });
                }
                _ => {}
            }
        }
        let missing: Vec<(usize, String)> = (0..slots)
            .flat_map(|s| dimensions.iter().map(move |d| (s, d.id.clone())))
            .filter(|cell| !grid.contains_key(cell))
            .collect();
        if !missing.is_empty() {
            return Err(StudyError::Incomplete { missing });
        }
        Ok(grid)
    }

    /// The rating with answers in canonical grid order and no timestamp.
    pub fn canonical(&self, grid: &AnswerGrid) -> Rating {
        Rating {
            ballot_id: self.ballot_id.clone(),
            rater_id: self.rater_id.clone(),
            answers: grid
                .iter()
                .map(|((slot, dimension), answer)| Answer { slot: *slot, dimension: dimension.clone(), answer: *answer })
                .collect(),
            submitted_at: None,
        }
    }
}
