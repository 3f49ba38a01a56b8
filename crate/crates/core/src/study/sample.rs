use rand::seq::{index, SliceRandom};

use super::{SampleSpec, StudyError};
use crate::seeding::stream_rng;
use crate::{Label, Verbatim};

/// Stratified uniform sample without replacement, shuffled across strata.
///
/// Pools are put in canonical id order first, so the result depends only on the corpus
/// contents and the seed, not on the order the corpus was read in.
pub fn build_sample(corpus: &[Verbatim], spec: &SampleSpec, seed: u64) -> Result<Vec<Verbatim>, StudyError> {
    let strata = [
        (Label::Verbatim, spec.verbatim),
        (Label::Informative, spec.informative),
        (Label::Uninformative, spec.uninformative),
    ];
    let mut sample = Vec::with_capacity(spec.total());
    for (stratum, (label, requested)) in strata.into_iter().enumerate() {
        let mut pool: Vec<&Verbatim> = corpus.iter().filter(|v| v.label == label).collect();
        pool.sort_by(|a, b| a.verbatim_id.cmp(&b.verbatim_id));
        pool.dedup_by(|a, b| a.verbatim_id == b.verbatim_id);
        if pool.len() < requested {
            return Err(StudyError::InsufficientPool { label, requested, available: pool.len() });
        }
        let mut rng = stream_rng(seed, "study-sample", stratum as u64);
        let mut picked = index::sample(&mut rng, pool.len(), requested).into_vec();
        picked.sort_unstable();
        sample.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    sample.shuffle(&mut stream_rng(seed, "study-sample-order", 0));
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pool(label: Label, n: usize) -> Vec<Verbatim> {
        (0..n)
            .map(|i| {
                let mut v = Verbatim::new(&format!("{label}-{i}"), 0, format!("text {i}"), "c");
                v.label = label;
                v
            })
            .collect()
    }

    fn corpus(v: usize, i: usize, u: usize) -> Vec<Verbatim> {
        let mut c = pool(Label::Verbatim, v);
        c.extend(pool(Label::Informative, i));
        c.extend(pool(Label::Uninformative, u));
        c.extend(pool(Label::Unlabeled, 20));
        c
    }

    #[test]
    fn default_composition() {
        let sample = build_sample(&corpus(200, 100, 100), &SampleSpec::default(), 1).unwrap();
        assert_eq!(sample.len(), 150);
        let count = |l| sample.iter().filter(|v| v.label == l).count();
        assert_eq!((count(Label::Verbatim), count(Label::Informative), count(Label::Uninformative)), (90, 30, 30));
        let ids: HashSet<_> = sample.iter().map(|v| &v.verbatim_id).collect();
        assert_eq!(ids.len(), 150);
    }

    #[test]
    fn empty_spec_and_short_pool() {
        let spec = SampleSpec { verbatim: 0, informative: 0, uninformative: 0 };
        assert!(build_sample(&corpus(5, 5, 5), &spec, 0).unwrap().is_empty());
        let err = build_sample(&corpus(50, 100, 100), &SampleSpec::default(), 0).unwrap_err();
        assert!(err.to_string().contains("verbatim"), "{err}");
        assert!(matches!(err, StudyError::InsufficientPool { label: Label::Verbatim, requested: 90, available: 50 }));
    }

    #[test]
    fn deterministic_and_order_free() {
        let c = corpus(200, 100, 100);
        let mut reversed = c.clone();
        reversed.reverse();
        let a = build_sample(&c, &SampleSpec::default(), 9).unwrap();
        assert_eq!(a, build_sample(&reversed, &SampleSpec::default(), 9).unwrap());
        assert_ne!(a, build_sample(&c, &SampleSpec::default(), 10).unwrap());
    }
}
