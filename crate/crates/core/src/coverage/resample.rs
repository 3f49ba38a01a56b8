//! Block resampling of mapped statements.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CoverageError;
use crate::seeding::stream_rng;

/// Which final needs (possibly none) one extracted statement was mapped to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementMapping {
    pub statement_id: String,
    pub cn_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplingConfig {
    /// Statements per block.
    pub b: u32,
    /// Blocks drawn.
    pub m: u32,
    pub seed: u64,
}

impl ResamplingConfig {
    pub const DEFAULT_M: u32 = 2000;

    fn validate(&self) -> Result<(), CoverageError> {
        if self.b == 0 || self.m == 0 {
            return Err(CoverageError::InvalidParameter(format!("block size and block count must be positive (b = {}, m = {})", self.b, self.m)));
        }
        Ok(())
    }
}

/// Per-need success counts: `counts[i]` of `m` blocks contained `cn_ids[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    pub cn_ids: Vec<String>,
    pub counts: Vec<u32>,
    pub m: u32,
    pub b: u32,
}

/// Mapping resolved to universe indices, statements in canonical `statement_id` order.
#[derive(Debug, Clone)]
pub struct IndexedMapping {
    pub universe: Vec<String>,
    pub statements: Vec<Vec<usize>>,
}

impl IndexedMapping {
    pub fn new(mapping: &[StatementMapping], universe: &[String]) -> Result<Self, CoverageError> {
        if mapping.is_empty() {
            return Err(CoverageError::EmptyMapping);
        }
        if universe.is_empty() {
            return Err(CoverageError::EmptyUniverse);
        }
        let mut index = HashMap::with_capacity(universe.len());
        for (i, id) in universe.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(CoverageError::DuplicateNeed(id.clone()));
            }
        }
        let mut sorted: Vec<&StatementMapping> = mapping.iter().collect();
        sorted.sort_by(|a, b| a.statement_id.cmp(&b.statement_id));
        let mut seen = HashSet::with_capacity(sorted.len());
        let mut statements = Vec::with_capacity(sorted.len());
        for s in sorted {
            if !seen.insert(s.statement_id.as_str()) {
                return Err(CoverageError::DuplicateStatement(s.statement_id.clone()));
            }
            let hits = s
                .cn_ids
                .iter()
                .map(|cn| {
                    index.get(cn.as_str()).copied().ok_or_else(|| CoverageError::UnknownNeed {
                        statement: s.statement_id.clone(),
                        cn: cn.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            statements.push(hits);
        }
        Ok(IndexedMapping { universe: universe.to_vec(), statements })
    }

    /// Fraction of statements mapped to each need.
    pub fn hit_fractions(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.universe.len()];
        for s in &self.statements {
            for &i in s {
                f[i] += 1.0;
            }
        }
        let n = self.statements.len() as f64;
        f.iter_mut().for_each(|x| *x /= n);
        f
    }
}

/// Draws `config.m` blocks of `config.b` statements with replacement and counts, per need,
/// the blocks containing at least one statement mapped to it.
///
/// Block `j` uses its own counter-derived stream, so results do not depend on the order of
/// `mapping` or on how blocks are scheduled.
pub fn resample_block_counts(
    mapping: &[StatementMapping],
    universe: &[String],
    config: ResamplingConfig,
) -> Result<BlockCounts, CoverageError> {
    config.validate()?;
    let indexed = IndexedMapping::new(mapping, universe)?;
    Ok(resample_indexed(&indexed, config))
}

pub fn resample_indexed(indexed: &IndexedMapping, config: ResamplingConfig) -> BlockCounts {
    let n_statements = indexed.statements.len();
    let mut counts = vec![0u32; indexed.universe.len()];
    let mut stamp = vec![u32::MAX; indexed.universe.len()];
    for block in 0..config.m {
        let mut rng = stream_rng(config.seed, "blocks", u64::from(block));
        for _ in 0..config.b {
            for &cn in &indexed.statements[rng.random_range(0..n_statements)] {
                if stamp[cn] != block {
                    stamp[cn] = block;
                    counts[cn] += 1;
                }
            }
        }
    }
    BlockCounts { cn_ids: indexed.universe.clone(), counts, m: config.m, b: config.b }
}

/// Mean fraction of the universe hit after `n` blocks, for `n = 0..=n_max`.
///
/// Each resample draws `n_max` consecutive blocks and records its coverage after every block,
/// so all `n` share the resample (each prefix is itself a with-replacement draw of `n·b`
/// statements). Coverage is averaged over needs first, then over resamples.
pub fn observed_coverage(indexed: &IndexedMapping, b: u32, n_max: u32, resamples: u32, seed: u64) -> Vec<(u32, f64)> {
    let n_statements = indexed.statements.len();
    let universe = indexed.universe.len() as f64;
    let mut totals = vec![0.0f64; n_max as usize + 1];
    let mut seen = vec![u32::MAX; indexed.universe.len()];
    for r in 0..resamples {
        let mut rng = stream_rng(seed, "observed", u64::from(r));
        let mut hit = 0usize;
        for n in 1..=n_max {
            for _ in 0..b {
                for &cn in &indexed.statements[rng.random_range(0..n_statements)] {
                    if seen[cn] != r {
                        seen[cn] = r;
                        hit += 1;
                    }
                }
            }
            totals[n as usize] += hit as f64 / universe;
        }
    }
    totals
        .into_iter()
        .enumerate()
        .map(|(n, t)| (n as u32, if n == 0 { 0.0 } else { t / f64::from(resamples) }))
        .collect()
}
