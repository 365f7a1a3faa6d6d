//! Small statistics helpers for Monte Carlo validation: binomial z-scores
//! and a Pearson chi-square homogeneity test over tally rows.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{KaonError, Result};

/// Standard error of a frequency estimate at true probability `p`.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// (count - n p) / sqrt(n p (1-p)). For degenerate p the score is 0 when
/// the count agrees exactly and infinite otherwise.
pub fn binomial_z(count: u64, n: u64, p: f64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let expected = n as f64 * p;
    if p <= 0.0 || p >= 1.0 {
        return if count as f64 == expected { 0.0 } else { f64::INFINITY };
    }
    (count as f64 - expected) / (n as f64 * p * (1.0 - p)).sqrt()
}

/// Two-sample z for the difference of two observed frequencies, pooled
/// variance. Zero when both samples agree exactly.
pub fn two_sample_z(count_a: u64, n_a: u64, count_b: u64, n_b: u64) -> f64 {
    if n_a == 0 || n_b == 0 {
        return f64::NAN;
    }
    let fa = count_a as f64 / n_a as f64;
    let fb = count_b as f64 / n_b as f64;
    let pool = (count_a + count_b) as f64 / (n_a + n_b) as f64;
    let var = pool * (1.0 - pool) * (1.0 / n_a as f64 + 1.0 / n_b as f64);
    if var == 0.0 {
        return if fa == fb { 0.0 } else { f64::INFINITY };
    }
    (fa - fb) / var.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson homogeneity test: are the rows draws from one distribution over
/// the columns? Columns empty in every row are dropped (they carry no
/// information and would divide by zero); degrees of freedom shrink
/// accordingly.
pub fn chi_square_homogeneity(rows: &[Vec<u64>]) -> Result<ChiSquareResult> {
    if rows.len() < 2 {
        return Err(KaonError::InvalidArgument(
            "homogeneity test needs at least two rows".into(),
        ));
    }
    let width = rows[0].len();
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(KaonError::InvalidArgument(
            "homogeneity test needs equal-length nonempty rows".into(),
        ));
    }

    let row_totals: Vec<u64> = rows.iter().map(|r| r.iter().sum()).collect();
    if row_totals.contains(&0) {
        return Err(KaonError::InvalidArgument(
            "homogeneity test needs every row populated".into(),
        ));
    }
    let col_totals: Vec<u64> = (0..width)
        .map(|c| rows.iter().map(|r| r[c]).sum())
        .collect();
    let grand: u64 = row_totals.iter().sum();

    let live_cols: Vec<usize> = (0..width).filter(|&c| col_totals[c] > 0).collect();
    if live_cols.len() < 2 {
        return Err(KaonError::InvalidArgument(
            "homogeneity test needs at least two populated columns".into(),
        ));
    }

    let mut statistic = 0.0;
    for (r, row) in rows.iter().enumerate() {
        for &c in &live_cols {
            let expected = row_totals[r] as f64 * col_totals[c] as f64 / grand as f64;
            let diff = row[c] as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let degrees_of_freedom = (rows.len() - 1) * (live_cols.len() - 1);
    let dist = ChiSquared::new(degrees_of_freedom as f64)
        .map_err(|e| KaonError::InvalidArgument(format!("chi-square setup: {e}")))?;
    Ok(ChiSquareResult {
        statistic,
        degrees_of_freedom,
        p_value: 1.0 - dist.cdf(statistic),
    })
}
