//! Sample statistics with normal-approximation standard errors.

use serde::{Deserialize, Serialize};

/// Mean and unbiased variance of a sample, with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub mean_se: f64,
    /// Standard error of the variance, `sqrt((m4 - s^4) / count)`.
    pub variance_se: f64,
}

impl Summary {
    pub fn of<I>(values: I) -> Self
    where
        I: IntoIterator<Item = f64>,
        I::IntoIter: Clone,
    {
        let iter = values.into_iter();
        let (count, sum) = iter.clone().fold((0u64, 0.0), |(n, s), v| (n + 1, s + v));
        if count == 0 {
            return Self {
                count,
                mean: 0.0,
                variance: 0.0,
                mean_se: 0.0,
                variance_se: 0.0,
            };
        }
        let n = count as f64;
        let mean = sum / n;
        let (m2, m4) = iter.fold((0.0, 0.0), |(a, b), v| {
            let d = v - mean;
            (a + d * d, b + d * d * d * d)
        });
        let variance = if count > 1 { m2 / (n - 1.0) } else { 0.0 };
        let central4 = m4 / n;
        let pop_var = m2 / n;
        Self {
            count,
            mean,
            variance,
            mean_se: (variance / n).sqrt(),
            variance_se: ((central4 - pop_var * pop_var).max(0.0) / n).sqrt(),
        }
    }
}

/// A Bernoulli frequency `hits / trials`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub hits: u64,
    pub trials: u64,
    pub estimate: f64,
    /// `sqrt(p (1 - p) / trials)` at the estimate.
    pub se: f64,
}

impl Proportion {
    pub fn new(hits: u64, trials: u64) -> Self {
        let estimate = if trials == 0 {
            0.0
        } else {
            hits as f64 / trials as f64
        };
        Self {
            hits,
            trials,
            estimate,
            se: Self::se_at(estimate, trials),
        }
    }

    /// Standard error of a frequency with true probability `p`.
    pub fn se_at(p: f64, trials: u64) -> f64 {
        if trials == 0 {
            0.0
        } else {
            (p * (1.0 - p) / trials as f64).sqrt()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_sample() {
        let s = Summary::of([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.mean_se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        let empty = Summary::of(std::iter::empty::<f64>());
        assert_eq!(empty.count, 0);
    }

    #[test]
    fn proportion() {
        let p = Proportion::new(25, 100);
        assert_eq!(p.estimate, 0.25);
        assert!((p.se - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert_eq!(Proportion::new(0, 0).estimate, 0.0);
    }
}
