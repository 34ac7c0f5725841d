//! Box-plot summaries and the two-tailed Mann–Whitney U test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest combined sample size for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 12;

/// Linear interpolation between closest ranks, at position `q/100 · (n − 1)`
/// of the sorted data.
pub fn percentile(data: &[f64], q: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::param("q", format!("must lie in [0, 100], got {q}")));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, q))
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, 5/25/75/95th percentiles and the points beyond 1.5 IQR of the box.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsSummary {
    pub n: usize,
    pub p5: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub outliers: Vec<f64>,
}

impl StatsSummary {
    pub fn from_samples(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("data", format!("non-finite sample {bad}")));
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p25 = percentile_sorted(&sorted, 25.0);
        let p75 = percentile_sorted(&sorted, 75.0);
        let reach = 1.5 * (p75 - p25);
        let outliers = sorted
            .iter()
            .copied()
            .filter(|&v| v < p25 - reach || v > p75 + reach)
            .collect();
        Ok(Self {
            n: sorted.len(),
            p5: percentile_sorted(&sorted, 5.0),
            p25,
            median: percentile_sorted(&sorted, 50.0),
            p75,
            p95: percentile_sorted(&sorted, 95.0),
            outliers,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMethod {
    /// Exact when the samples are small and tie-free, otherwise normal.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-tailed.
    pub p: f64,
    pub exact: bool,
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    mann_whitney_u_with(a, b, PValueMethod::Auto)
}

/// `Exact` falls back to the normal approximation when the samples contain
/// ties or exceed [`EXACT_LIMIT`] points together.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: PValueMethod) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyData);
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += midrank * pooled[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    let exact = match method {
        PValueMethod::Normal => false,
        PValueMethod::Auto | PValueMethod::Exact => n <= EXACT_LIMIT && tie_term == 0.0,
    };
    let p = if exact {
        exact_p(u, na, nb)
    } else {
        normal_p(u, na, nb, tie_term)
    };
    Ok(MannWhitney {
        u,
        p: p.clamp(0.0, 1.0),
        exact,
    })
}

/// Counts of each U value under the null, by the recurrence on the largest
/// observation: it belongs either to the first sample (adding `nb` to U) or
/// to the second.
fn u_distribution(na: usize, nb: usize) -> Vec<f64> {
    let max_u = na * nb;
    // table[i][j] = counts for sizes (i, j)
    let mut table = vec![vec![Vec::new(); nb + 1]; na + 1];
    for i in 0..=na {
        for j in 0..=nb {
            let mut counts = vec![0.0; i * j + 1];
            if i == 0 || j == 0 {
                counts[0] = 1.0;
            } else {
                for (u, c) in table[i - 1][j].iter().enumerate() {
                    counts[u + j] += c;
                }
                for (u, c) in table[i][j - 1].iter().enumerate() {
                    counts[u] += c;
                }
            }
            table[i][j] = counts;
        }
    }
    let dist = std::mem::take(&mut table[na][nb]);
    debug_assert_eq!(dist.len(), max_u + 1);
    dist
}

fn exact_p(u: f64, na: usize, nb: usize) -> f64 {
    let counts = u_distribution(na, nb);
    let total: f64 = counts.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = counts[..=u].iter().sum();
    let upper: f64 = counts[u..].iter().sum();
    2.0 * lower.min(upper) / total
}

fn normal_p(u: f64, na: usize, nb: usize, tie_term: f64) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mean = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let dev = ((u - mean).abs() - 0.5).max(0.0);
    if var <= 0.0 || dev == 0.0 {
        return 1.0;
    }
    let z = dev / var.sqrt();
    let normal = Normal::standard();
    2.0 * normal.sf(z)
}

/// Significance stars with inclusive thresholds.
pub fn star_code(p: f64) -> &'static str {
    if p <= 1e-4 {
        "****"
    } else if p <= 1e-3 {
        "***"
    } else if p <= 1e-2 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// One line of a pairwise comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTest {
    pub first: String,
    pub second: String,
    pub test: MannWhitney,
    pub stars: &'static str,
}

/// Mann–Whitney test for every unordered pair of groups, in input order.
pub fn pairwise_tests(groups: &[(String, Vec<f64>)]) -> Result<Vec<PairwiseTest>> {
    let mut out = Vec::new();
    for (i, (name_a, a)) in groups.iter().enumerate() {
        for (name_b, b) in &groups[i + 1..] {
            let test = mann_whitney_u(a, b)?;
            out.push(PairwiseTest {
                first: name_a.clone(),
                second: name_b.clone(),
                test,
                stars: star_code(test.p),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-tailed exact p by listing every split of the ranks 1..=n.
    fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
        let (na, nb) = (a.len(), b.len());
        let n = na + nb;
        let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
        all.sort_by(f64::total_cmp);
        let rank = |v: f64| all.iter().position(|&x| x == v).unwrap() + 1;
        let u_obs: usize = a.iter().map(|&v| rank(v)).sum::<usize>() - na * (na + 1) / 2;
        let (mut le, mut ge, mut total) = (0u64, 0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != na {
                continue;
            }
            let r: usize = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| k + 1).sum();
            let u = r - na * (na + 1) / 2;
            total += 1;
            le += (u <= u_obs) as u64;
            ge += (u >= u_obs) as u64;
        }
        (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
    }

    fn distinct_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 25.0).unwrap(), 1.75);
        for q in [0.0, 13.0, 50.0, 100.0] {
            assert_eq!(percentile(&[4.2], q).unwrap(), 4.2);
        }
        assert!(matches!(percentile(&[], 50.0), Err(Error::EmptyData)));
        assert!(percentile(&[1.0], 101.0).is_err());
    }

    #[test]
    fn percentile_50_is_the_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..40 {
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut s = data.clone();
            s.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let median = if n % 2 == 1 {
                s[n / 2]
            } else {
                (s[n / 2 - 1] + s[n / 2]) / 2.0
            };
            assert!((percentile(&data, 50.0).unwrap() - median).abs() < 1e-12);
        }
    }

    #[test]
    fn summary_flags_points_outside_the_whiskers() {
        let mut data: Vec<f64> = (1..=20).map(f64::from).collect();
        data.push(100.0);
        let s = StatsSummary::from_samples(&data).unwrap();
        assert_eq!(s.n, 21);
        assert_eq!(s.median, 11.0);
        assert_eq!(s.outliers, vec![100.0]);
        assert!(StatsSummary::from_samples(&[]).is_err());
    }

    proptest! {
        #[test]
        fn summary_is_ordered(data in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let s = StatsSummary::from_samples(&data).unwrap();
            prop_assert!(s.p5 <= s.p25 && s.p25 <= s.median && s.median <= s.p75 && s.p75 <= s.p95);
        }

        #[test]
        fn swapping_samples_mirrors_u(
            a in prop::collection::vec(-10i32..10, 1..10),
            b in prop::collection::vec(-10i32..10, 1..10),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b).unwrap();
            let ba = mann_whitney_u(&b, &a).unwrap();
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }

    #[test]
    fn separated_triples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_are_not_different() {
        let a = [0.3, 1.2, 2.5, 4.0];
        assert_eq!(mann_whitney_u(&a, &a).unwrap().p, 1.0);
        assert_eq!(mann_whitney_u(&[1.0; 5], &[1.0; 7]).unwrap().p, 1.0);
    }

    #[test]
    fn exact_p_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let na = rng.random_range(1..=6);
            let nb = rng.random_range(1..=6);
            let a = distinct_sample(&mut rng, na);
            let b = distinct_sample(&mut rng, nb);
            let r = mann_whitney_u(&a, &b).unwrap();
            assert!(r.exact);
            assert!((r.p - enumerated_p(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
        }
    }

    #[test]
    fn exact_and_normal_agree_at_six_and_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let a = distinct_sample(&mut rng, 6);
            let b: Vec<f64> = (0..6)
                .map(|_| rng.random::<f64>() + rng.random_range(0.0..0.8))
                .collect();
            let exact = mann_whitney_u_with(&a, &b, PValueMethod::Exact).unwrap();
            let normal = mann_whitney_u_with(&a, &b, PValueMethod::Normal).unwrap();
            assert!(exact.exact && !normal.exact);
            assert!((exact.p - normal.p).abs() < 0.02, "{} vs {}", exact.p, normal.p);
        }
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact);
        // Midranks of the overlap 10..19 give U = 50; σ² from the tie-corrected formula.
        assert_eq!(r.u, 50.0);
        let var: f64 = 400.0 / 12.0 * (41.0 - 10.0 * 6.0 / (40.0 * 39.0));
        let z = (150.0 - 0.5) / var.sqrt();
        let expected = statrs::function::erf::erfc(z / 2f64.sqrt());
        assert!((r.p - expected).abs() < 1e-12);
    }

    #[test]
    fn star_thresholds_are_inclusive() {
        assert_eq!(star_code(0.04), "*");
        assert_eq!(star_code(0.05), "*");
        assert_eq!(star_code(0.0500001), "ns");
        assert_eq!(star_code(0.2), "ns");
        assert_eq!(star_code(0.01), "**");
        assert_eq!(star_code(1e-3), "***");
        assert_eq!(star_code(1e-4), "****");
        assert_eq!(star_code(0.0), "****");
    }

    #[test]
    fn pairwise_table_covers_each_pair_once() {
        let groups = vec![
            ("a".to_string(), vec![1.0, 2.0, 3.0]),
            ("b".to_string(), vec![4.0, 5.0, 6.0]),
            ("c".to_string(), vec![0.5, 7.0]),
        ];
        let table = pairwise_tests(&groups).unwrap();
        let names: Vec<(&str, &str)> = table.iter().map(|t| (t.first.as_str(), t.second.as_str())).collect();
        assert_eq!(names, [("a", "b"), ("a", "c"), ("b", "c")]);
        assert_eq!(table[0].stars, "ns");
    }
}
