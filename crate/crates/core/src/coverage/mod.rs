//! Coverage of a final need set by a stream of extracted statements.
//!
//! Statements are resampled in blocks of `b`; each final need's block hit counts are modelled
//! as beta-binomial, and the fitted beta law gives the expected share of needs found after any
//! number of blocks.

mod curve;
mod fit;
pub mod optimize;
mod resample;
pub mod special;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};

pub use curve::{
    coverage_curve, emit_curve_data, expected_coverage, parse_curve_csv, read_curve_data, render_curve_csv, CoverageCurve,
    CURVE_HEADER,
};
pub use fit::{fit_beta_binomial, fit_with, log_likelihood, BetaBinomialFit, FitMethod};
pub use resample::{
    observed_coverage, resample_block_counts, resample_indexed, BlockCounts, IndexedMapping, ResamplingConfig,
    StatementMapping,
};

#[derive(Debug, thiserror::Error)]
pub enum CoverageError {
    #[error("statement mapping is empty")]
    EmptyMapping,
    #[error("need universe is empty")]
    EmptyUniverse,
    #[error("statement {statement:?} maps to {cn:?}, which is not in the universe")]
    UnknownNeed { statement: String, cn: String },
    #[error("statement {0:?} appears more than once")]
    DuplicateStatement(String),
    #[error("need {0:?} appears more than once in the universe")]
    DuplicateNeed(String),
    #[error("fitting needs at least two needs, got {0}")]
    TooFewNeeds(usize),
    #[error("count {count} exceeds the number of blocks {m}")]
    CountExceedsBlocks { count: u32, m: u32 },
    #[error("{0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{0}")]
    Io(String),
    #[error("malformed curve data: {0}")]
    Parse(String),
}

#[derive(Deserialize)]
struct MappingRecord {
    statement_id: String,
    #[serde(default)]
    cn_ids: Vec<String>,
}

pub fn read_mapping(path: &Path) -> Result<Vec<StatementMapping>, CoverageError> {
    Ok(jsonl::read::<MappingRecord>(path)?
        .into_iter()
        .map(|r| StatementMapping { statement_id: r.statement_id, cn_ids: r.cn_ids.into_iter().collect() })
        .collect())
}

/// One need id per line; blank lines and `#` comments are skipped.
pub fn read_universe(path: &Path) -> Result<Vec<String>, CoverageError> {
    let text = std::fs::read_to_string(path).map_err(|e| CoverageError::Io(format!("{}: {e}", path.display())))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        if !seen.insert(line) {
            return Err(CoverageError::DuplicateNeed(line.to_owned()));
        }
        out.push(line.to_owned());
    }
    if out.is_empty() {
        return Err(CoverageError::EmptyUniverse);
    }
    Ok(out)
}

/// Structured record of a fit and the resampling that produced its counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub alpha: f64,
    pub beta: f64,
    pub b: u32,
    pub m: u32,
    pub seed: u64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub method: FitMethod,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub needs: usize,
    pub statements: usize,
    /// Needs that no resampled block ever contained.
    pub never_hit: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl FitReport {
    pub fn new(fit: &BetaBinomialFit, counts: &BlockCounts, seed: u64, statements: usize) -> Self {
        FitReport {
            alpha: fit.alpha,
            beta: fit.beta,
            b: fit.b,
            m: fit.m,
            seed,
            log_likelihood: fit.log_likelihood,
            converged: fit.converged,
            method: fit.method,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            needs: counts.counts.len(),
            statements,
            never_hit: counts.counts.iter().filter(|&&k| k == 0).count(),
            note: fit.note.clone(),
        }
    }

    pub fn to_fit(&self) -> BetaBinomialFit {
        BetaBinomialFit {
            alpha: self.alpha,
            beta: self.beta,
            b: self.b,
            m: self.m,
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            method: self.method,
            iterations: self.iterations,
            gradient_norm: self.gradient_norm,
            note: self.note.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reported_point_values() {
        let e20 = expected_coverage(1.054, 3.133, 20.0).unwrap();
        let e80 = expected_coverage(1.054, 3.133, 80.0).unwrap();
        assert!((e20 - 0.877).abs() < 0.005, "{e20}");
        assert!((e80 - 0.968).abs() < 0.005, "{e80}");
    }

    #[test]
    fn trivial_values() {
        assert_eq!(expected_coverage(2.0, 5.0, 0.0).unwrap(), 0.0);
        assert!((expected_coverage(1.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert!(expected_coverage(0.0, 1.0, 1.0).is_err());
        assert!(expected_coverage(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn integer_parameters_match_product_form() {
        // for integer beta the ratio is the product of (beta + j) / (alpha + beta + j), j < n
        let (a, b) = (2.0, 3.0);
        for n in 0..30u32 {
            let prod: f64 = (0..n).map(|j| (b + f64::from(j)) / (a + b + f64::from(j))).product();
            assert!((expected_coverage(a, b, f64::from(n)).unwrap() - (1.0 - prod)).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_csv_round_trip_and_header() {
        let fit = BetaBinomialFit {
            alpha: 1.054,
            beta: 3.133,
            b: 50,
            m: 2000,
            log_likelihood: -1.0,
            converged: true,
            method: FitMethod::Counts,
            iterations: 0,
            gradient_norm: 0.0,
            note: None,
        };
        let mapping: Vec<StatementMapping> = (0..120)
            .map(|i| StatementMapping { statement_id: format!("s{i}"), cn_ids: [format!("c{}", i % 7)].into() })
            .collect();
        let universe: Vec<String> = (0..9).map(|i| format!("c{i}")).collect();
        let indexed = IndexedMapping::new(&mapping, &universe).unwrap();
        let curve = coverage_curve(&fit, Some(&indexed), 5, 50, 1).unwrap();
        assert_eq!(curve.observed.as_ref().unwrap().len(), 3); // 120 statements / 50 = 2 blocks, plus n = 0
        let text = render_curve_csv(&curve);
        assert!(text.starts_with("statements,expected,observed\n0,0,0\n50,"));
        let rows: Vec<&str> = text.lines().collect();
        for (n, row) in rows[1..].iter().enumerate() {
            assert!(row.starts_with(&format!("{},", n * 50)));
        }
        assert_eq!(parse_curve_csv(&text).unwrap(), curve);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        emit_curve_data(&curve, &path).unwrap();
        assert_eq!(read_curve_data(&path).unwrap(), curve);
    }

    #[test]
    fn all_needs_certain_gives_full_observed_coverage() {
        let fit = BetaBinomialFit {
            alpha: 5.0,
            beta: 1.0,
            b: 1,
            m: 10,
            log_likelihood: 0.0,
            converged: true,
            method: FitMethod::Counts,
            iterations: 0,
            gradient_norm: 0.0,
            note: None,
        };
        let universe = vec!["a".to_owned(), "b".to_owned()];
        let mapping: Vec<StatementMapping> = (0..4)
            .map(|i| StatementMapping { statement_id: format!("s{i}"), cn_ids: universe.iter().cloned().collect() })
            .collect();
        let indexed = IndexedMapping::new(&mapping, &universe).unwrap();
        let curve = coverage_curve(&fit, Some(&indexed), 3, 20, 0).unwrap();
        assert_eq!(curve.observed.unwrap()[1], (1, 1.0));
    }

    proptest! {
        #[test]
        fn expected_is_monotone(alpha in 0.05f64..20.0, beta in 0.05f64..20.0) {
            let mut prev = 0.0;
            for n in 1..200u32 {
                let e = expected_coverage(alpha, beta, f64::from(n)).unwrap();
                prop_assert!(e >= prev && e <= 1.0);
                prev = e;
            }
        }

        #[test]
        fn approaches_one(alpha in 0.1f64..10.0, beta in 0.1f64..10.0) {
            // 1 - E_n ~ Γ(α+β)/Γ(β) · n^-α for large n
            let n = 1.0e6f64;
            let tail = (special::ln_gamma(alpha + beta) - special::ln_gamma(beta) - alpha * n.ln()).exp();
            let e = expected_coverage(alpha, beta, n).unwrap();
            prop_assert!((1.0 - e) <= 1e-2f64.max(2.0 * tail), "1 - E = {}, tail = {}", 1.0 - e, tail);
            prop_assert!(e > expected_coverage(alpha, beta, n / 2.0).unwrap() || e == 1.0);
        }
    }
}
