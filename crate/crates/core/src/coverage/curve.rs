//! Expected-coverage curves and their delimited-text form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::BetaBinomialFit;
use super::resample::{observed_coverage, IndexedMapping};
use super::special::ln_gamma;
use super::CoverageError;

pub const CURVE_HEADER: &str = "statements,expected,observed";

/// Probability that a need with discovery probability `p ~ Beta(alpha, beta)` per block is
/// seen at least once in `n` blocks: `1 - E[(1 - p)^n]`.
///
/// `n` may be fractional, which evaluates the same law on a statement scale.
pub fn expected_coverage(alpha: f64, beta: f64, n: f64) -> Result<f64, CoverageError> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(CoverageError::InvalidParameter(format!("alpha and beta must be positive (got {alpha}, {beta})")));
    }
    if !(n >= 0.0) {
        return Err(CoverageError::InvalidParameter(format!("block count must be non-negative (got {n})")));
    }
    if n == 0.0 {
        return Ok(0.0);
    }
    let log_ratio = ln_gamma(n + beta) + ln_gamma(alpha + beta) - ln_gamma(n + alpha + beta) - ln_gamma(beta);
    Ok((-log_ratio.exp_m1()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    /// `(n, E_n)` for `n = 0..=n_max` blocks.
    pub points: Vec<(u32, f64)>,
    /// Resampled mean coverage, available up to the number of blocks the data supports.
    pub observed: Option<Vec<(u32, f64)>>,
    pub statements_per_block: u32,
}

/// Builds the model curve for `n = 0..=n_max` and, when a mapping is given, the observed
/// resampled curve up to `min(n_max, statements / b)` blocks.
pub fn coverage_curve(
    fit: &BetaBinomialFit,
    mapping: Option<&IndexedMapping>,
    n_max: u32,
    resamples: u32,
    seed: u64,
) -> Result<CoverageCurve, CoverageError> {
    if n_max == 0 {
        return Err(CoverageError::InvalidParameter("n_max must be at least 1".into()));
    }
    if fit.b == 0 {
        return Err(CoverageError::InvalidParameter("block size must be positive".into()));
    }
    let points = (0..=n_max)
        .map(|n| Ok((n, expected_coverage(fit.alpha, fit.beta, f64::from(n))?)))
        .collect::<Result<Vec<_>, CoverageError>>()?;
    let observed = match mapping {
        Some(indexed) if resamples > 0 => {
            let supported = (indexed.statements.len() / fit.b as usize).min(n_max as usize) as u32;
            Some(observed_coverage(indexed, fit.b, supported, resamples, seed))
        }
        _ => None,
    };
    Ok(CoverageCurve { points, observed, statements_per_block: fit.b })
}

/// Renders the curve as `statements,expected,observed` rows; missing observations are blank.
pub fn render_curve_csv(curve: &CoverageCurve) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    let observed = curve.observed.as_deref().unwrap_or_default();
    for (i, &(n, e)) in curve.points.iter().enumerate() {
        let statements = u64::from(n) * u64::from(curve.statements_per_block);
        let _ = write!(out, "{statements},{e},");
        if let Some((_, o)) = observed.get(i) {
            let _ = write!(out, "{o}");
        }
        out.push('\n');
    }
    out
}

pub fn emit_curve_data(curve: &CoverageCurve, path: &Path) -> Result<(), CoverageError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CoverageError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, render_curve_csv(curve)).map_err(|e| CoverageError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_curve_csv(text: &str) -> Result<CoverageCurve, CoverageError> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(CoverageError::Parse(format!("header must be {CURVE_HEADER:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = |what: &str| CoverageError::Parse(format!("row {}: {what}", i + 1));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad("expected three columns"));
        }
        let statements: u64 = cols[0].parse().map_err(|_| bad("statements"))?;
        let expected: f64 = cols[1].parse().map_err(|_| bad("expected"))?;
        let observed: Option<f64> = match cols[2] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad("observed"))?),
        };
        rows.push((statements, expected, observed));
    }
    let b = rows.get(1).map_or(1, |r| r.0);
    if b == 0 || b > u64::from(u32::MAX) {
        return Err(CoverageError::Parse("cannot infer statements per block".into()));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut observed = Vec::new();
    for (n, (statements, e, o)) in rows.into_iter().enumerate() {
        if statements != n as u64 * b {
            return Err(CoverageError::Parse(format!("row {}: statements {statements} is not {n} x {b}", n + 1)));
        }
        points.push((n as u32, e));
        if let Some(o) = o {
            if observed.len() != n {
                return Err(CoverageError::Parse("observed values must form a prefix".into()));
            }
            observed.push((n as u32, o));
        }
    }
    Ok(CoverageCurve {
        points,
        observed: (!observed.is_empty()).then_some(observed),
        statements_per_block: b as u32,
    })
}

pub fn read_curve_data(path: &Path) -> Result<CoverageCurve, CoverageError> {
    let text = std::fs::read_to_string(path).map_err(|e| CoverageError::Io(format!("{}: {e}", path.display())))?;
    parse_curve_csv(&text)
}
