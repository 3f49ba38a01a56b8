use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dimension, StudyDesign, StudyError};
use crate::prompt::EMPTY_MARKER;
use crate::seeding::stream_rng;
use crate::{Label, Verbatim};

/// verbatim id → method → statement. Missing entries mean the method produced nothing.
pub type StatementsByMethod = BTreeMap<String, BTreeMap<String, String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub slot: usize,
    pub statement_text: String,
}

/// Server-side record of who wrote the statement in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAssignment {
    pub method: String,
    /// The method produced nothing and the slot holds a substituted real need.
    pub decoy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub ballot_id: String,
    pub rater_id: String,
    /// Position in this rater's queue.
    pub position: usize,
    pub verbatim_id: String,
    pub review_text: String,
    pub review_label: Label,
    pub candidates: Vec<Candidate>,
    /// Indexed by slot.
    pub hidden_assignment: Vec<SlotAssignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionView {
    pub id: String,
    pub prompt: String,
}

/// The only ballot shape that is ever sent to a rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotView {
    pub ballot_id: String,
    pub rater_id: String,
    pub position: usize,
    pub total: usize,
    pub review_text: String,
    pub statements: Vec<Candidate>,
    pub dimensions: Vec<DimensionView>,
}

impl Ballot {
    pub fn view(&self, dimensions: &[Dimension], total: usize) -> BallotView {
        BallotView {
            ballot_id: self.ballot_id.clone(),
            rater_id: self.rater_id.clone(),
            position: self.position,
            total,
            review_text: self.review_text.clone(),
            statements: self.candidates.clone(),
            dimensions: dimensions.iter().map(|d| DimensionView { id: d.id.clone(), prompt: d.prompt.clone() }).collect(),
        }
    }

    pub fn slot_of(&self, method: &str) -> Option<usize> {
        self.hidden_assignment.iter().position(|a| a.method == method)
    }
}

fn usable(statement: Option<&String>) -> Option<&str> {
    statement.map(|s| s.trim()).filter(|s| !s.is_empty() && *s != EMPTY_MARKER)
}

/// One ballot per (rater, sampled verbatim).
///
/// A method without a statement for a verbatim gets a decoy drawn uniformly from `decoy_pool`;
/// the same decoy is shown to every rater so verdicts stay comparable. Each rater works through
/// the sample in an independent order, and each ballot's slot order is an independent uniform
/// permutation.
pub fn assemble_ballots(
    sample: &[Verbatim],
    statements_by_method: &StatementsByMethod,
    decoy_pool: &[String],
    design: &StudyDesign,
) -> Result<Vec<Ballot>, StudyError> {
    design.validate()?;
    let mut pool: Vec<&str> = decoy_pool.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    pool.sort_unstable();
    pool.dedup();

    let methods = &design.methods;
    let empty = BTreeMap::new();
    let mut items: Vec<Vec<(String, bool)>> = Vec::with_capacity(sample.len());
    for (i, verbatim) in sample.iter().enumerate() {
        let by_method = statements_by_method.get(&verbatim.verbatim_id).unwrap_or(&empty);
        let mut row = Vec::with_capacity(methods.len());
        for (j, method) in methods.iter().enumerate() {
            match usable(by_method.get(method)) {
                Some(text) => row.push((text.to_owned(), false)),
                None => {
                    if pool.is_empty() {
                        return Err(StudyError::EmptyDecoyPool {
                            verbatim_id: verbatim.verbatim_id.clone(),
                            method: method.clone(),
                        });
                    }
                    let mut rng = stream_rng(design.seed, "study-decoy", (i * methods.len() + j) as u64);
                    row.push((pool[rng.random_range(0..pool.len())].to_owned(), true));
                }
            }
        }
        items.push(row);
    }
    for verbatim_id in statements_by_method.keys() {
        for method in statements_by_method[verbatim_id].keys() {
            if !methods.contains(method) {
                return Err(StudyError::UnknownMethod(method.clone()));
            }
        }
    }

    let n = sample.len();
    let mut ballots = Vec::with_capacity(n * design.raters.len());
    for (r, rater) in design.raters.iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(design.seed, "study-order", r as u64));
        for (position, &i) in order.iter().enumerate() {
            let verbatim = &sample[i];
            let mut perm: Vec<usize> = (0..methods.len()).collect();
            perm.shuffle(&mut stream_rng(design.seed, "study-slots", (r * n + i) as u64));
            let candidates = perm
                .iter()
                .enumerate()
                .map(|(slot, &j)| Candidate { slot, statement_text: items[i][j].0.clone() })
                .collect();
            let hidden_assignment = perm
                .iter()
                .map(|&j| SlotAssignment { method: methods[j].clone(), decoy: items[i][j].1 })
                .collect();
            ballots.push(Ballot {
                ballot_id: format!("{rater}.{position:04}"),
                rater_id: rater.clone(),
                position,
                verbatim_id: verbatim.verbatim_id.clone(),
                review_text: verbatim.text.clone(),
                review_label: verbatim.label,
                candidates,
                hidden_assignment,
            });
        }
    }
    Ok(ballots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    const METHODS: [&str; 3] = ["mth_alpha", "mth_bravo", "mth_charlie"];

    fn sample(n: usize) -> Vec<Verbatim> {
        (0..n)
            .map(|i| {
                let mut v = Verbatim::new(&format!("d{i}"), 0, format!("Review number {i}."), "c");
                v.label = Label::ANNOTATED[i % 3];
                v
            })
            .collect()
    }

    fn full_statements(sample: &[Verbatim]) -> StatementsByMethod {
        sample
            .iter()
            .map(|v| {
                let m = METHODS.iter().map(|m| (m.to_string(), format!("need from {} about {}", &m[4..], v.doc_id))).collect();
                (v.verbatim_id.clone(), m)
            })
            .collect()
    }

    #[test]
    fn three_methods_fill_three_slots() {
        let s = sample(4);
        let design = StudyDesign::new("s1", &METHODS, &["r1", "r2", "r3"], 5);
        let ballots = assemble_ballots(&s, &full_statements(&s), &[], &design).unwrap();
        assert_eq!(ballots.len(), 12);
        for b in &ballots {
            let mut methods: Vec<_> = b.hidden_assignment.iter().map(|a| a.method.as_str()).collect();
            methods.sort_unstable();
            assert_eq!(methods, METHODS);
            assert!(b.hidden_assignment.iter().all(|a| !a.decoy));
            assert_eq!(b.candidates.iter().map(|c| c.slot).collect::<Vec<_>>(), [0, 1, 2]);
        }
    }

    #[test]
    fn missing_statement_gets_a_shared_decoy() {
        let s = sample(3);
        let mut statements = full_statements(&s);
        statements.get_mut(&s[2].verbatim_id).unwrap().remove("mth_charlie");
        statements.get_mut(&s[1].verbatim_id).unwrap().insert("mth_charlie".into(), " [] ".into());
        let design = StudyDesign::new("s1", &METHODS, &["r1", "r2", "r3"], 5);
        let pool = vec!["Able to reseal the can".to_string(), "Dries overnight".to_string()];
        let ballots = assemble_ballots(&s, &statements, &pool, &design).unwrap();
        for b in &ballots {
            let slot = b.slot_of("mth_charlie").unwrap();
            let is_decoy = b.verbatim_id != s[0].verbatim_id;
            assert_eq!(b.hidden_assignment[slot].decoy, is_decoy);
            if is_decoy {
                assert!(pool.contains(&b.candidates[slot].statement_text));
            }
        }
        let decoy_texts = |vid: &str| {
            ballots
                .iter()
                .filter(|b| b.verbatim_id == vid)
                .map(|b| b.candidates[b.slot_of("mth_charlie").unwrap()].statement_text.clone())
                .collect::<std::collections::HashSet<_>>()
        };
        assert_eq!(decoy_texts(&s[2].verbatim_id).len(), 1);

        let err = assemble_ballots(&s, &statements, &[], &design).unwrap_err();
        assert!(matches!(err, StudyError::EmptyDecoyPool { .. }));
    }

    #[test]
    fn unknown_method_rejected() {
        let s = sample(1);
        let mut statements = full_statements(&s);
        statements.get_mut(&s[0].verbatim_id).unwrap().insert("other".into(), "x".into());
        let design = StudyDesign::new("s1", &METHODS, &["r1", "r2", "r3"], 5);
        assert!(matches!(assemble_ballots(&s, &statements, &[], &design), Err(StudyError::UnknownMethod(_))));
    }

    #[test]
    fn slot_permutations_are_uniform() {
        let s = sample(2000);
        let statements = full_statements(&s);
        let design = StudyDesign::new("s1", &METHODS, &["r1", "r2", "r3", "r4", "r5"], 77);
        let ballots = assemble_ballots(&s, &statements, &[], &design).unwrap();
        assert_eq!(ballots.len(), 10_000);
        let mut counts: HashMap<Vec<String>, f64> = HashMap::new();
        for b in &ballots {
            *counts.entry(b.hidden_assignment.iter().map(|a| a.method.clone()).collect()).or_default() += 1.0;
        }
        assert_eq!(counts.len(), 6);
        let expected = ballots.len() as f64 / 6.0;
        let chi2: f64 = counts.values().map(|o| (o - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }

    proptest! {
        #[test]
        fn rater_payloads_are_blind(seed in any::<u64>(), n in 1usize..12) {
            let s = sample(n);
            let mut statements = full_statements(&s);
            statements.get_mut(&s[0].verbatim_id).unwrap().clear();
            let design = StudyDesign::new("blind", &METHODS, &["r1", "r2", "r3"], seed);
            let ballots = assemble_ballots(&s, &statements, &["Spare need".to_string()], &design).unwrap();
            for b in &ballots {
                let json = serde_json::to_string(&b.view(&design.dimensions, ballots.len() / 3)).unwrap();
                for m in METHODS {
                    prop_assert!(!json.contains(m));
                }
                for l in ["verbatim", "informative", "uninformative", "decoy", "label"] {
                    prop_assert!(!json.to_lowercase().contains(l), "{} in {}", l, json);
                }
            }
        }
    }
}
