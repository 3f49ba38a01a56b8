use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Ballot, Rating, StudyDesign, StudyError, YesNo};
use crate::Label;

/// One rater's answer with the slot resolved to its method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub rater_id: String,
    pub verbatim_id: String,
    pub review_label: Label,
    pub method: String,
    pub decoy: bool,
    pub dimension: String,
    pub yes: bool,
}

/// Majority outcome for one (verbatim, method, dimension).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub verbatim_id: String,
    pub review_label: Label,
    pub method: String,
    pub dimension: String,
    pub decoy: bool,
    pub verdict: YesNo,
    pub yes_count: u32,
    pub no_count: u32,
}

/// Resolves every answer through the ballot's hidden assignment, in canonical order.
pub fn resolve_votes(ballots: &[Ballot], ratings: &[Rating]) -> Result<Vec<Vote>, StudyError> {
    let by_id: HashMap<&str, &Ballot> = ballots.iter().map(|b| (b.ballot_id.as_str(), b)).collect();
    let mut seen = HashSet::new();
    let mut votes = Vec::new();
    for rating in ratings {
        let ballot = by_id
            .get(rating.ballot_id.as_str())
            .ok_or_else(|| StudyError::UnknownBallot(rating.ballot_id.clone()))?;
        if ballot.rater_id != rating.rater_id {
            return Err(StudyError::WrongRater { ballot_id: rating.ballot_id.clone(), rater_id: rating.rater_id.clone() });
        }
        for answer in &rating.answers {
            let assignment = ballot
                .hidden_assignment
                .get(answer.slot)
                .ok_or_else(|| StudyError::UnknownCell { slot: answer.slot, dimension: answer.dimension.clone() })?;
            // a cell repeated within or across identical ratings counts once
            if !seen.insert((rating.ballot_id.as_str(), answer.slot, answer.dimension.as_str())) {
                continue;
            }
            votes.push(Vote {
                rater_id: rating.rater_id.clone(),
                verbatim_id: ballot.verbatim_id.clone(),
                review_label: ballot.review_label,
                method: assignment.method.clone(),
                decoy: assignment.decoy,
                dimension: answer.dimension.clone(),
                yes: answer.answer.is_yes(),
            });
        }
    }
    votes.sort_by(|a, b| {
        (&a.verbatim_id, &a.method, &a.dimension, &a.rater_id).cmp(&(&b.verbatim_id, &b.method, &b.dimension, &b.rater_id))
    });
    Ok(votes)
}

/// Majority verdict per (verbatim, method, dimension): yes iff yes-votes outnumber no-votes.
///
/// Every ballot must be rated unless `partial` is set; partial aggregation covers whatever
/// has been rated so far, and an even split there counts as no.
pub fn aggregate_majority(
    ballots: &[Ballot],
    ratings: &[Rating],
    design: &StudyDesign,
    partial: bool,
) -> Result<Vec<Judgment>, StudyError> {
    let rated: HashSet<&str> = ratings.iter().map(|r| r.ballot_id.as_str()).collect();
    let missing = ballots.iter().filter(|b| !rated.contains(b.ballot_id.as_str())).count();
    if missing > 0 && !partial {
        return Err(StudyError::MissingRatings { missing, expected: ballots.len() });
    }
    let votes = resolve_votes(ballots, ratings)?;
    let mut cells: BTreeMap<(&str, &str, &str), (Label, bool, u32, u32)> = BTreeMap::new();
    for v in &votes {
        if !design.dimensions.iter().any(|d| d.id == v.dimension) {
            return Err(StudyError::UnknownDimension(v.dimension.clone()));
        }
        let cell = cells
            .entry((v.verbatim_id.as_str(), v.method.as_str(), v.dimension.as_str()))
            .or_insert((v.review_label, v.decoy, 0, 0));
        if v.yes {
            cell.2 += 1;
        } else {
            cell.3 += 1;
        }
    }
    Ok(cells
        .into_iter()
        .map(|((verbatim_id, method, dimension), (review_label, decoy, yes, no))| Judgment {
            verbatim_id: verbatim_id.to_owned(),
            review_label,
            method: method.to_owned(),
            dimension: dimension.to_owned(),
            decoy,
            verdict: (yes > no).into(),
            yes_count: yes,
            no_count: no,
        })
        .collect())
}
