//! Sample medians and distribution-free confidence intervals for them.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::{Error, Result};

/// Sample median (mean of the two middle values for even sizes). NaNs sort
/// last.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub const DEFAULT_CONFIDENCE: f64 = 0.99;
pub const MIN_CI_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianCi {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// 1-based ranks of the endpoints in the sorted sample.
    pub lower_rank: usize,
    pub upper_rank: usize,
    /// Exact coverage of the interval for a continuous distribution.
    pub coverage: f64,
    /// Set when even the widest interval falls short of the requested
    /// confidence.
    pub insufficient: bool,
}

/// Order-statistic (sign-test) interval `[x(k), x(n+1-k)]` with the largest
/// `k` whose coverage `1 - 2 P(B <= k-1)`, `B ~ Bin(n, 1/2)`, still reaches
/// `confidence`.
pub fn median_ci(samples: &[f64], confidence: f64) -> Result<MedianCi> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(crate::error::invalid("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    if samples.len() < MIN_CI_SAMPLES {
        return Err(Error::Degenerate(format!(
            "median interval needs at least {MIN_CI_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Degenerate("samples contain NaN".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let bin = Binomial::new(0.5, n as u64).expect("valid binomial");
    let coverage = |k: usize| 1.0 - 2.0 * bin.cdf(k as u64 - 1);
    let mut k = 1;
    let insufficient = coverage(1) < confidence;
    if !insufficient {
        while k < n / 2 && coverage(k + 1) >= confidence {
            k += 1;
        }
    } else {
        log::warn!("{n} samples cannot reach {confidence} confidence; returning the full range");
    }
    Ok(MedianCi {
        median: median(&v).expect("non-empty"),
        lower: v[k - 1],
        upper: v[n - k],
        lower_rank: k,
        upper_rank: n + 1 - k,
        coverage: coverage(k),
        insufficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn choose(n: u32, k: u32) -> u128 {
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * u128::from(n - i) / u128::from(i + 1);
        }
        c
    }

    // Exact integer tail: largest k with 2 * sum_{j<k} C(n,j) <= (1-conf) 2^n.
    fn exact_rank(n: u32, conf_permille: u128) -> usize {
        let total: u128 = 1u128 << n;
        let mut tail: u128 = 0;
        let mut k = 0;
        loop {
            let next = tail + choose(n, k);
            if 2 * next * 1000 > (1000 - conf_permille) * total || k + 1 > n / 2 {
                return k as usize;
            }
            tail = next;
            k += 1;
        }
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn hundred_samples_at_99() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let ci = median_ci(&xs, 0.99).unwrap();
        assert_eq!(ci.median, 50.5);
        assert_eq!(exact_rank(100, 990), 37);
        assert_eq!((ci.lower_rank, ci.upper_rank), (37, 64));
        assert_eq!((ci.lower, ci.upper), (37.0, 64.0));
        assert!(ci.coverage >= 0.99 && !ci.insufficient);
    }

    #[test]
    fn ranks_match_exact_oracle() {
        for n in 8..=100u32 {
            for conf in [900u128, 950, 990] {
                let xs: Vec<f64> = (1..=n).map(f64::from).collect();
                let ci = median_ci(&xs, conf as f64 / 1000.0).unwrap();
                let k = exact_rank(n, conf);
                if k == 0 {
                    assert!(ci.insufficient, "n={n} conf={conf}");
                    assert_eq!(ci.lower_rank, 1);
                } else {
                    assert_eq!(ci.lower_rank, k, "n={n} conf={conf}");
                }
                assert_eq!(ci.lower_rank + ci.upper_rank, n as usize + 1);
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(median_ci(&[1.0; 7], 0.99).is_err());
        let ci = median_ci(&[4.2; 30], 0.99).unwrap();
        assert_eq!((ci.median, ci.lower, ci.upper), (4.2, 4.2, 4.2));
        let few = median_ci(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 0.999).unwrap();
        assert!(few.insufficient);
        assert_eq!((few.lower, few.upper), (1.0, 8.0));
    }

    #[test]
    fn deterministic() {
        let xs: Vec<f64> = (0..57).map(|i| ((i * 37) % 101) as f64).collect();
        assert_eq!(median_ci(&xs, 0.99).unwrap(), median_ci(&xs.clone(), 0.99).unwrap());
    }

    #[test]
    fn coverage_of_true_median() {
        let mut rng = crate::model::stream_rng(3, "ci-coverage", 0);
        let trials = 1000;
        let mut hits = 0;
        for _ in 0..trials {
            // exponential(1): true median ln 2
            let xs: Vec<f64> = (0..50).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let ci = median_ci(&xs, 0.99).unwrap();
            if ci.lower <= std::f64::consts::LN_2 && std::f64::consts::LN_2 <= ci.upper {
                hits += 1;
            }
        }
        assert!(hits >= 970, "coverage {hits}/{trials}");
    }
}
