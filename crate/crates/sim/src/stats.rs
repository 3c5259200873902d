// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Dispersion of per-peer counts against equal-probability sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformityTest {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
    pub mean: f64,
    /// Observed standard deviation over the mean.
    pub rel_sd: f64,
    /// Relative standard deviation of a binomial(N, 1/k) count.
    pub expected_rel_sd: f64,
}

impl UniformityTest {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson chi-square goodness of fit of `counts` to a uniform
/// distribution over their `k` categories; `None` for fewer than two
/// categories or no observations.
pub fn uniformity_test(counts: &[u64]) -> Option<UniformityTest> {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    if k < 2 || total == 0 {
        return None;
    }
    let mean = total as f64 / k as f64;
    let ss: f64 = counts.iter().map(|c| (*c as f64 - mean).powi(2)).sum();
    let statistic = ss / mean;
    let dof = (k - 1) as f64;
    let dist = ChiSquared::new(dof).ok()?;
    let p = 1.0 / k as f64;
    Some(UniformityTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
        mean,
        rel_sd: (ss / k as f64).sqrt() / mean,
        expected_rel_sd: ((1.0 - p) / (total as f64 * p)).sqrt(),
    })
}
