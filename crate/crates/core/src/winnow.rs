//! Near-duplicate grouping to support manual winnowing.
//!
//! Statements are compared by Jaccard similarity of their casefolded, stopword-free token
//! sets and grouped by single linkage. The output is a worksheet for an analyst to review;
//! nothing is merged automatically.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

pub const DEFAULT_THRESHOLD: f64 = 0.6;
pub const WORKSHEET_HEADER: [&str; 5] = ["group_id", "representative", "statement_id", "text", "max_similarity"];

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "by", "can", "do", "does", "for", "from", "has",
    "have", "i", "in", "into", "is", "it", "its", "me", "my", "of", "on", "or", "our", "so", "that", "the", "their",
    "them", "they", "this", "to", "too", "very", "was", "we", "were", "what", "when", "which", "will", "with",
    "you", "your",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WinnowError {
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("statement id {0} appears more than once")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinnowItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateGroup {
    pub group_id: String,
    /// Sorted by id.
    pub members: Vec<String>,
    pub representative_id: String,
    /// Every within-group pair, `a < b`.
    pub pairwise_scores: Vec<PairScore>,
}

impl DuplicateGroup {
    /// Highest similarity between `member` and any other member; `None` for singletons.
    pub fn max_similarity(&self, member: &str) -> Option<f64> {
        self.pairwise_scores
            .iter()
            .filter(|p| p.a == member || p.b == member)
            .map(|p| p.score)
            .reduce(f64::max)
    }
}

pub fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(str::to_owned)
        .collect()
}

/// Jaccard similarity of two token sets; two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage groups of statements whose similarity is at least `threshold`.
///
/// Groups are numbered by their smallest member id, so the result does not depend on the
/// input order.
pub fn group_near_duplicates(items: &[WinnowItem], threshold: f64) -> Result<Vec<DuplicateGroup>, WinnowError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(WinnowError::InvalidThreshold(threshold));
    }
    let mut sorted: Vec<&WinnowItem> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut seen = HashSet::new();
    for item in &sorted {
        if !seen.insert(item.id.as_str()) {
            return Err(WinnowError::DuplicateId(item.id.clone()));
        }
    }
    let toks: Vec<BTreeSet<String>> = sorted.iter().map(|i| tokens(&i.text)).collect();
    let n = sorted.len();
    let mut sim = vec![vec![0.0; n]; n];
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        sim[i][i] = 1.0;
        for j in i + 1..n {
            let s = jaccard(&toks[i], &toks[j]);
            sim[i][j] = s;
            sim[j][i] = s;
            if s >= threshold {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }
    // roots are the smallest index, i.e. the smallest id, so BTreeMap order is id order
    Ok(components
        .into_values()
        .enumerate()
        .map(|(g, members)| {
            let centrality = |i: usize| members.iter().filter(|&&j| j != i).map(|&j| sim[i][j]).sum::<f64>();
            let rep = members
                .iter()
                .copied()
                .max_by(|&a, &b| centrality(a).total_cmp(&centrality(b)).then(b.cmp(&a)))
                .expect("components are non-empty");
            let pairwise_scores = members
                .iter()
                .enumerate()
                .flat_map(|(k, &i)| members[k + 1..].iter().map(move |&j| (i, j)))
                .map(|(i, j)| PairScore { a: sorted[i].id.clone(), b: sorted[j].id.clone(), score: sim[i][j] })
                .collect();
            DuplicateGroup {
                group_id: format!("g{:04}", g + 1),
                members: members.iter().map(|&i| sorted[i].id.clone()).collect(),
                representative_id: sorted[rep].id.clone(),
                pairwise_scores,
            }
        })
        .collect())
}

/// Review worksheet: one row per statement, grouped, representative first.
pub fn render_worksheet_csv(groups: &[DuplicateGroup], items: &[WinnowItem]) -> String {
    let text: BTreeMap<&str, &str> = items.iter().map(|i| (i.id.as_str(), i.text.as_str())).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(WORKSHEET_HEADER).expect("in-memory write");
    for g in groups {
        let mut members: Vec<&String> = g.members.iter().collect();
        members.sort_by_key(|m| (**m != g.representative_id, (*m).clone()));
        for m in members {
            w.write_record([
                g.group_id.as_str(),
                if *m == g.representative_id { "yes" } else { "no" },
                m,
                text.get(m.as_str()).copied().unwrap_or(""),
                &g.max_similarity(m).map(|s| format!("{s:.4}")).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
