use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{StudyDesign, Vote};
use crate::Label;

/// Yes-rates for one (review label, method, dimension) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisaggregateRow {
    pub label: Label,
    pub method: String,
    pub dimension: String,
    pub raters: usize,
    pub items: usize,
    /// Mean of the per-rater yes-rates.
    pub mean: f64,
    /// Sample standard deviation of the per-rater yes-rates (0 with one rater).
    pub sd_raters: f64,
    /// Sample standard deviation across items of the rater-averaged yes-rate.
    pub sd_items: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rater-level yes-rates grouped by review label.
///
/// Decoy slots count only for dimensions that include decoys.
pub fn disaggregate(votes: &[Vote], design: &StudyDesign) -> Vec<DisaggregateRow> {
    type Cell<'a> = (BTreeMap<&'a str, (u32, u32)>, BTreeMap<&'a str, (u32, u32)>);
    let mut cells: BTreeMap<(Label, usize, usize), Cell> = BTreeMap::new();
    for v in votes {
        let (Some(m), Some(d)) = (
            design.methods.iter().position(|m| *m == v.method),
            design.dimensions.iter().position(|d| d.id == v.dimension),
        ) else {
            continue;
        };
        if v.decoy && !design.dimensions[d].include_decoys {
            continue;
        }
        let (by_rater, by_item) = cells.entry((v.review_label, m, d)).or_default();
        for tally in [by_rater.entry(v.rater_id.as_str()).or_default(), by_item.entry(v.verbatim_id.as_str()).or_default()] {
            tally.0 += u32::from(v.yes);
            tally.1 += 1;
        }
    }
    let rate = |(yes, total): &(u32, u32)| f64::from(*yes) / f64::from(*total);
    cells
        .into_iter()
        .map(|((label, m, d), (by_rater, by_item))| {
            let (mean, sd_raters) = mean_sd(&by_rater.values().map(rate).collect::<Vec<_>>());
            let (_, sd_items) = mean_sd(&by_item.values().map(rate).collect::<Vec<_>>());
            DisaggregateRow {
                label,
                method: design.methods[m].clone(),
                dimension: design.dimensions[d].id.clone(),
                raters: by_rater.len(),
                items: by_item.len(),
                mean,
                sd_raters,
                sd_items,
            }
        })
        .collect()
}

pub const DISAGGREGATION_HEADER: [&str; 8] =
    ["label", "method", "dimension", "raters", "items", "mean", "sd_raters", "sd_items"];

pub fn render_disaggregation_csv(rows: &[DisaggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DISAGGREGATION_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.label.as_str().to_owned(),
            r.method.clone(),
            r.dimension.clone(),
            r.raters.to_string(),
            r.items.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.sd_raters),
            format!("{:.6}", r.sd_items),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}
