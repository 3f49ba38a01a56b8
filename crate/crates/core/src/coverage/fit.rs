//! Maximum-likelihood fitting of the beta distribution of per-need discovery probabilities.

use serde::{Deserialize, Serialize};

use super::optimize::{gradient, nelder_mead_max, newton_polish, Optimum};
use super::special::{ln_beta, ln_choose};
use super::{BlockCounts, CoverageError};

/// Log-parameters are confined to this box; an optimum on its edge means the likelihood has
/// no interior maximum (for example all counts zero).
const LOG_BOUND: f64 = 15.0;
const FTOL: f64 = 1e-8;
const MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Beta-binomial likelihood of the success counts.
    #[default]
    Counts,
    /// Beta likelihood of the clipped point estimates k/m.
    PointEstimates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomialFit {
    pub alpha: f64,
    pub beta: f64,
    /// Statements per block.
    pub b: u32,
    /// Resampled blocks per need.
    pub m: u32,
    pub log_likelihood: f64,
    pub converged: bool,
    pub method: FitMethod,
    pub iterations: usize,
    /// Norm of the finite-difference gradient in (ln α, ln β) at the returned point.
    pub gradient_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Beta-binomial log-likelihood of `counts` out of `m`, including the binomial coefficients.
pub fn log_likelihood(counts: &[u32], m: u32, alpha: f64, beta: f64) -> f64 {
    let base = ln_beta(alpha, beta);
    counts
        .iter()
        .map(|&k| ln_choose(m, k) + ln_beta(f64::from(k) + alpha, f64::from(m - k) + beta) - base)
        .sum()
}

fn point_log_likelihood(ps: &[f64], alpha: f64, beta: f64) -> f64 {
    let base = ln_beta(alpha, beta);
    ps.iter().map(|&p| (alpha - 1.0) * p.ln() + (beta - 1.0) * (1.0 - p).ln() - base).sum()
}

/// Method-of-moments starting point in log space, if the counts are over-dispersed.
fn moment_start(counts: &[u32], m: u32) -> Option<[f64; 2]> {
    let n = counts.len() as f64;
    let m = f64::from(m);
    let mu = counts.iter().map(|&k| f64::from(k)).sum::<f64>() / (n * m);
    let var = counts.iter().map(|&k| (f64::from(k) / m - mu).powi(2)).sum::<f64>() / (n - 1.0);
    if !(mu > 0.0 && mu < 1.0) || m < 2.0 {
        return None;
    }
    let rho = (var * m / (mu * (1.0 - mu)) - 1.0) / (m - 1.0);
    if !(rho > 0.0 && rho < 1.0) {
        return None;
    }
    let total = 1.0 / rho - 1.0;
    Some([(mu * total).ln(), ((1.0 - mu) * total).ln()])
}

fn maximize(objective: impl Fn([f64; 2]) -> f64, center: [f64; 2]) -> (Optimum, f64) {
    let bounded = |x: [f64; 2]| {
        if x[0].abs() > LOG_BOUND || x[1].abs() > LOG_BOUND {
            f64::NEG_INFINITY
        } else {
            objective(x)
        }
    };
    let seeds = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
    let mut best: Option<Optimum> = None;
    let mut total_iter = 0;
    for d in seeds {
        let start = [center[0] + d[0], center[1] + d[1]];
        let opt = nelder_mead_max(&bounded, start, 0.5, FTOL, MAX_ITER);
        total_iter += opt.iterations;
        if best.is_none_or(|b| opt.value > b.value) {
            best = Some(opt);
        }
    }
    let mut best = best.expect("at least one start");
    // restart from the best vertex to escape a collapsed simplex, then refine
    let restart = nelder_mead_max(&bounded, best.x, 0.05, FTOL, MAX_ITER);
    total_iter += restart.iterations;
    if restart.value >= best.value {
        best = Optimum { converged: best.converged && restart.converged, ..restart };
    }
    let mut polished = newton_polish(&bounded, best, 8);
    polished.iterations = total_iter;
    let g = gradient(&bounded, polished.x, 1e-5);
    (polished, g[0].hypot(g[1]))
}

fn finish(opt: Optimum, grad_norm: f64, counts: &BlockCounts, method: FitMethod, note: Option<String>) -> BetaBinomialFit {
    let at_bound = opt.x.iter().any(|v| v.abs() > LOG_BOUND - 1.0);
    let note = note.or_else(|| at_bound.then(|| "optimum on the parameter boundary; likelihood has no interior maximum".to_owned()));
    BetaBinomialFit {
        alpha: opt.x[0].exp(),
        beta: opt.x[1].exp(),
        b: counts.b,
        m: counts.m,
        log_likelihood: opt.value,
        converged: opt.converged && !at_bound && opt.value.is_finite() && note.is_none(),
        method,
        iterations: opt.iterations,
        gradient_norm: grad_norm,
        note,
    }
}

fn validate(counts: &BlockCounts) -> Result<(), CoverageError> {
    if counts.counts.len() < 2 {
        return Err(CoverageError::TooFewNeeds(counts.counts.len()));
    }
    if counts.m == 0 {
        return Err(CoverageError::InvalidParameter("m must be positive".into()));
    }
    if let Some(&k) = counts.counts.iter().find(|&&k| k > counts.m) {
        return Err(CoverageError::CountExceedsBlocks { count: k, m: counts.m });
    }
    Ok(())
}

fn degenerate_note(counts: &BlockCounts) -> Option<String> {
    if counts.counts.iter().all(|&k| k == 0) {
        Some("every count is zero".into())
    } else if counts.counts.iter().all(|&k| k == counts.m) {
        Some("every count equals m".into())
    } else {
        None
    }
}

/// Fits (α, β) by maximising the beta-binomial likelihood over (ln α, ln β).
///
/// Degenerate inputs do not fail: the best point found is returned with `converged = false`
/// and a note.
pub fn fit_beta_binomial(counts: &BlockCounts) -> Result<BetaBinomialFit, CoverageError> {
    fit_with(counts, FitMethod::Counts)
}

pub fn fit_with(counts: &BlockCounts, method: FitMethod) -> Result<BetaBinomialFit, CoverageError> {
    validate(counts)?;
    let center = moment_start(&counts.counts, counts.m).unwrap_or([0.0, 0.0]);
    let note = degenerate_note(counts);
    let (opt, grad) = match method {
        FitMethod::Counts => {
            let (ks, m) = (&counts.counts, counts.m);
            maximize(|x| log_likelihood(ks, m, x[0].exp(), x[1].exp()), center)
        }
        FitMethod::PointEstimates => {
            let m = f64::from(counts.m);
            let eps = 0.5 / m;
            let ps: Vec<f64> = counts.counts.iter().map(|&k| (f64::from(k) / m).clamp(eps, 1.0 - eps)).collect();
            maximize(|x| point_log_likelihood(&ps, x[0].exp(), x[1].exp()), center)
        }
    };
    Ok(finish(opt, grad, counts, method, note))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(ks: Vec<u32>, m: u32) -> BlockCounts {
        BlockCounts { cn_ids: (0..ks.len()).map(|i| format!("cn{i}")).collect(), counts: ks, m, b: 1 }
    }

    #[test]
    fn likelihood_matches_direct_pmf() {
        // direct beta-binomial pmf by explicit gamma products for tiny m
        let (a, b, m) = (1.3f64, 2.7f64, 4u32);
        let g = statrs::function::gamma::gamma;
        let pmf = |k: u32| {
            let c = g(f64::from(m) + 1.0) / (g(f64::from(k) + 1.0) * g(f64::from(m - k) + 1.0));
            c * g(f64::from(k) + a) * g(f64::from(m - k) + b) / g(f64::from(m) + a + b) * g(a + b) / (g(a) * g(b))
        };
        let total: f64 = (0..=m).map(pmf).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for k in 0..=m {
            assert!((log_likelihood(&[k], m, a, b) - pmf(k).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_counts_give_equal_parameters() {
        let ks = vec![1, 19, 3, 17, 5, 15, 8, 12, 0, 20, 2, 18];
        let fit = fit_beta_binomial(&counts(ks, 20)).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!((fit.alpha / fit.beta - 1.0).abs() < 1e-5, "{fit:?}");
    }

    #[test]
    fn degenerate_counts_report_non_convergence() {
        let fit = fit_beta_binomial(&counts(vec![0; 10], 50)).unwrap();
        assert!(!fit.converged);
        assert!(fit.alpha > 0.0 && fit.beta > 0.0);
        let fit = fit_beta_binomial(&counts(vec![50; 10], 50)).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(fit_beta_binomial(&counts(vec![3], 10)), Err(CoverageError::TooFewNeeds(1))));
        assert!(matches!(fit_beta_binomial(&counts(vec![3, 11], 10)), Err(CoverageError::CountExceedsBlocks { .. })));
    }

    #[test]
    fn point_estimate_fit_runs() {
        let ks = vec![1, 4, 9, 2, 0, 7, 3, 5, 6, 10];
        let fit = fit_with(&counts(ks, 10), FitMethod::PointEstimates).unwrap();
        assert_eq!(fit.method, FitMethod::PointEstimates);
        assert!(fit.converged, "{fit:?}");
    }
}
