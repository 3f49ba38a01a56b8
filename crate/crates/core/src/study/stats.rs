use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::{Judgment, StudyError, YesNo};
use crate::coverage::special::ln_choose;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Exact two-sided binomial test on discordant pairs; the default, because both
    /// methods are judged on the same reviews.
    #[default]
    McnemarExact,
    /// Pooled two-proportion z-test, treating the samples as independent.
    TwoProportion,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::McnemarExact => "mcnemar_exact",
            TestKind::TwoProportion => "two_proportion",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mcnemar_exact" | "mcnemar" => Ok(TestKind::McnemarExact),
            "two_proportion" => Ok(TestKind::TwoProportion),
            other => Err(format!("unknown test {other:?} (expected mcnemar_exact or two_proportion)")),
        }
    }
}

/// Whether items where either method's slot held a decoy enter the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyPolicy {
    Include,
    Exclude,
}

impl DecoyPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoyPolicy::Include => "include",
            DecoyPolicy::Exclude => "exclude",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub method_a: String,
    pub method_b: String,
    pub dimension: String,
    pub test: TestKind,
    pub decoys: DecoyPolicy,
    /// Paired items compared.
    pub n: usize,
    pub proportion_a: f64,
    pub proportion_b: f64,
    /// Items where only method a got a yes verdict.
    pub discordant_a_only: u32,
    /// Items where only method b got a yes verdict.
    pub discordant_b_only: u32,
    /// z for the two-proportion test; absent for the exact test.
    pub statistic: Option<f64>,
    pub p_value: f64,
    /// No discordant pairs, so p = 1 by convention.
    pub no_discordant: bool,
}

/// Two-sided exact McNemar p-value: `min(1, 2·P(X ≤ min(b, c)))`, `X ~ Binomial(b + c, ½)`.
pub fn mcnemar_exact(b: u32, c: u32) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let ln_half_n = f64::from(n) * std::f64::consts::LN_2;
    let tail: f64 = (0..=b.min(c)).map(|i| (ln_choose(n, i) - ln_half_n).exp()).sum();
    (2.0 * tail).min(1.0)
}

/// Pooled two-proportion z-test. Returns `(z, two-sided p)`; a zero standard error gives `(0, 1)`.
pub fn two_proportion_z(yes_a: usize, n_a: usize, yes_b: usize, n_b: usize) -> (f64, f64) {
    if n_a == 0 || n_b == 0 {
        return (0.0, 1.0);
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    let pooled = (yes_a + yes_b) as f64 / (na + nb);
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    if se == 0.0 {
        return (0.0, 1.0);
    }
    let z = (yes_a as f64 / na - yes_b as f64 / nb) / se;
    (z, erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0))
}

/// Compares two methods' verdicts on one dimension over the same verbatims.
pub fn compare_methods(
    judgments: &[Judgment],
    method_a: &str,
    method_b: &str,
    dimension: &str,
    test: TestKind,
    decoys: DecoyPolicy,
) -> Result<ComparisonResult, StudyError> {
    let verdicts = |method: &str| -> Result<BTreeMap<&str, &Judgment>, StudyError> {
        if !judgments.iter().any(|j| j.method == method) {
            return Err(StudyError::UnknownMethod(method.to_owned()));
        }
        Ok(judgments
            .iter()
            .filter(|j| j.method == method && j.dimension == dimension)
            .map(|j| (j.verbatim_id.as_str(), j))
            .collect())
    };
    if !judgments.iter().any(|j| j.dimension == dimension) {
        return Err(StudyError::UnknownDimension(dimension.to_owned()));
    }
    let (a, b) = (verdicts(method_a)?, verdicts(method_b)?);
    if !a.keys().eq(b.keys()) {
        return Err(StudyError::MismatchedItems {
            method_a: method_a.to_owned(),
            method_b: method_b.to_owned(),
            dimension: dimension.to_owned(),
        });
    }
    let pairs: Vec<(bool, bool)> = a
        .iter()
        .map(|(id, ja)| (*ja, b[id]))
        .filter(|(ja, jb)| decoys == DecoyPolicy::Include || !(ja.decoy || jb.decoy))
        .map(|(ja, jb)| (ja.verdict == YesNo::Yes, jb.verdict == YesNo::Yes))
        .collect();
    let n = pairs.len();
    let yes_a = pairs.iter().filter(|p| p.0).count();
    let yes_b = pairs.iter().filter(|p| p.1).count();
    let only_a = pairs.iter().filter(|p| p.0 && !p.1).count() as u32;
    let only_b = pairs.iter().filter(|p| !p.0 && p.1).count() as u32;
    let (statistic, p_value) = match test {
        TestKind::McnemarExact => (None, mcnemar_exact(only_a, only_b)),
        TestKind::TwoProportion => {
            let (z, p) = two_proportion_z(yes_a, n, yes_b, n);
            (Some(z), p)
        }
    };
    let no_discordant = only_a + only_b == 0;
    let ratio = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(ComparisonResult {
        method_a: method_a.to_owned(),
        method_b: method_b.to_owned(),
        dimension: dimension.to_owned(),
        test,
        decoys,
        n,
        proportion_a: ratio(yes_a),
        proportion_b: ratio(yes_b),
        discordant_a_only: only_a,
        discordant_b_only: only_b,
        statistic,
        // identical verdict vectors carry no evidence either way
        p_value: if no_discordant { 1.0 } else { p_value },
        no_discordant,
    })
}

pub const COMPARISON_HEADER: [&str; 13] = [
    "method_a",
    "method_b",
    "dimension",
    "test",
    "decoys",
    "n",
    "proportion_a",
    "proportion_b",
    "discordant_a_only",
    "discordant_b_only",
    "statistic",
    "p_value",
    "no_discordant",
];

pub fn render_comparisons_csv(results: &[ComparisonResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARISON_HEADER).expect("in-memory write");
    for r in results {
        w.write_record([
            r.method_a.clone(),
            r.method_b.clone(),
            r.dimension.clone(),
            r.test.as_str().to_owned(),
            r.decoys.as_str().to_owned(),
            r.n.to_string(),
            format!("{:.6}", r.proportion_a),
            format!("{:.6}", r.proportion_b),
            r.discordant_a_only.to_string(),
            r.discordant_b_only.to_string(),
            r.statistic.map(|z| format!("{z:.6}")).unwrap_or_default(),
            format!("{:.6e}", r.p_value),
            r.no_discordant.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Label;
    use proptest::prelude::*;

    /// P-value by listing every outcome of b + c fair coin flips.
    fn enumerated(b: u32, c: u32) -> f64 {
        let n = b + c;
        if n == 0 {
            return 1.0;
        }
        let k = b.min(c);
        let hits = (0u32..1 << n).filter(|mask| mask.count_ones() <= k).count();
        (2.0 * hits as f64 / f64::from(1u32 << n)).min(1.0)
    }

    #[test]
    fn exact_matches_enumeration() {
        for n in 0..=12u32 {
            for b in 0..=n {
                let (p, oracle) = (mcnemar_exact(b, n - b), enumerated(b, n - b));
                assert!((p - oracle).abs() < 1e-12, "({b}, {}) {p} vs {oracle}", n - b);
            }
        }
        assert!((mcnemar_exact(10, 0) - 2.0 * 0.5f64.powi(10)).abs() < 1e-15);
        assert!((mcnemar_exact(10, 0) - 0.001953125).abs() < 1e-12);
        assert_eq!(mcnemar_exact(5, 5), 1.0);
        assert_eq!(mcnemar_exact(0, 0), 1.0);
    }

    #[test]
    fn two_proportion_reference() {
        // 60/100 vs 45/100: pooled 0.525, z = 0.15 / sqrt(0.525·0.475·0.02)
        let (z, p) = two_proportion_z(60, 100, 45, 100);
        let expected_z = 0.15 / (0.525f64 * 0.475 * 0.02).sqrt();
        assert!((z - expected_z).abs() < 1e-12);
        assert!((p - 0.033_672_07).abs() < 1e-6, "{p}");
        assert_eq!(two_proportion_z(0, 10, 0, 10), (0.0, 1.0));
    }

    fn judgment(vid: &str, method: &str, yes: bool, decoy: bool) -> Judgment {
        Judgment {
            verbatim_id: vid.into(),
            review_label: Label::Verbatim,
            method: method.into(),
            dimension: "is_cn".into(),
            decoy,
            verdict: yes.into(),
            yes_count: if yes { 2 } else { 1 },
            no_count: if yes { 1 } else { 2 },
        }
    }

    #[test]
    fn paired_comparison() {
        let mut js = Vec::new();
        for i in 0..12 {
            let vid = format!("v{i:02}");
            js.push(judgment(&vid, "ma", i < 10, false));
            js.push(judgment(&vid, "mb", false, i == 11));
        }
        let r = compare_methods(&js, "ma", "mb", "is_cn", TestKind::McnemarExact, DecoyPolicy::Include).unwrap();
        assert_eq!((r.n, r.discordant_a_only, r.discordant_b_only), (12, 10, 0));
        assert!((r.p_value - 0.001953125).abs() < 1e-12);
        assert!((r.proportion_a - 10.0 / 12.0).abs() < 1e-12);
        let r = compare_methods(&js, "ma", "mb", "is_cn", TestKind::McnemarExact, DecoyPolicy::Exclude).unwrap();
        assert_eq!(r.n, 11);
        let same = compare_methods(&js, "mb", "mb", "is_cn", TestKind::McnemarExact, DecoyPolicy::Include).unwrap();
        assert_eq!((same.p_value, same.discordant_a_only, same.discordant_b_only), (1.0, 0, 0));
        assert!(same.no_discordant);

        js.pop();
        assert!(matches!(
            compare_methods(&js, "ma", "mb", "is_cn", TestKind::McnemarExact, DecoyPolicy::Include),
            Err(StudyError::MismatchedItems { .. })
        ));
        assert!(matches!(
            compare_methods(&js, "ma", "zz", "is_cn", TestKind::McnemarExact, DecoyPolicy::Include),
            Err(StudyError::UnknownMethod(_))
        ));
    }

    #[test]
    fn comparisons_csv_has_header() {
        let js = vec![judgment("v", "ma", true, false), judgment("v", "mb", true, false)];
        let r = compare_methods(&js, "ma", "mb", "is_cn", TestKind::TwoProportion, DecoyPolicy::Include).unwrap();
        let csv = render_comparisons_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), COMPARISON_HEADER.join(","));
        assert!(lines.next().unwrap().starts_with("ma,mb,is_cn,two_proportion,include,1,"));
    }

    proptest! {
        #[test]
        fn self_comparison_is_null(verdicts in proptest::collection::vec(any::<bool>(), 1..40)) {
            let js: Vec<Judgment> = verdicts.iter().enumerate().map(|(i, y)| judgment(&format!("v{i}"), "m", *y, false)).collect();
            for test in [TestKind::McnemarExact, TestKind::TwoProportion] {
                let r = compare_methods(&js, "m", "m", "is_cn", test, DecoyPolicy::Include).unwrap();
                prop_assert_eq!(r.p_value, 1.0);
                prop_assert_eq!(r.proportion_a, r.proportion_b);
            }
        }
    }
}
