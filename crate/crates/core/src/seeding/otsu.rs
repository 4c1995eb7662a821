//! Histogram Otsu threshold maximizing between-class variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 256;

/// Chosen cut: samples whose bin index is `>= bin` form the upper class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OtsuThreshold {
    pub bin: usize,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Lower edge of `bin` in sample units.
    pub value: f64,
    pub between_class_variance: f64,
}

impl OtsuThreshold {
    #[inline]
    pub fn bin_of(&self, v: f64) -> usize {
        bin_index(v, self.lo, self.hi, self.bins)
    }

    #[inline]
    pub fn is_upper(&self, v: f64) -> bool {
        self.bin_of(v) >= self.bin
    }
}

#[inline]
fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let t = ((v - lo) / (hi - lo) * bins as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

/// Histogram spans `[min, max]` of the samples. Per-bin sample sums (not bin
/// centres) feed the class means, so the objective is the exact between-class
/// variance of the induced partition. Ties go to the lowest bin.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<OtsuThreshold> {
    if bins < 2 {
        return Err(Error::param(format!("otsu needs >= 2 bins, got {bins}")));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(hi > lo) {
        return Err(Error::Degenerate(
            "degenerate histogram: fewer than two distinct values".into(),
        ));
    }
    let mut counts = vec![0usize; bins];
    let mut sums = vec![0.0f64; bins];
    for &v in values {
        let b = bin_index(v, lo, hi, bins);
        counts[b] += 1;
        sums[b] += v;
    }
    let n = values.len() as f64;
    let total_sum: f64 = sums.iter().sum();

    let mut best: Option<(usize, f64)> = None;
    let (mut n0, mut s0) = (0usize, 0.0f64);
    for k in 1..bins {
        n0 += counts[k - 1];
        s0 += sums[k - 1];
        let n1 = values.len() - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let (w0, w1) = (n0 as f64 / n, n1 as f64 / n);
        let mu0 = s0 / n0 as f64;
        let mu1 = (total_sum - s0) / n1 as f64;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| var > b) {
            best = Some((k, var));
        }
    }
    let (bin, var) = best.expect("two distinct values guarantee a valid cut");
    Ok(OtsuThreshold {
        bin,
        bins,
        lo,
        hi,
        value: lo + (hi - lo) * bin as f64 / bins as f64,
        between_class_variance: var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scores every cut directly from the partitioned samples.
    fn exhaustive(values: &[f64], bins: usize) -> usize {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut best = (0, f64::NEG_INFINITY);
        for k in 1..bins {
            let upper = |v: f64| (((v - lo) / (hi - lo)) * bins as f64).floor().min((bins - 1) as f64) >= k as f64;
            let a: Vec<f64> = values.iter().copied().filter(|&v| !upper(v)).collect();
            let b: Vec<f64> = values.iter().copied().filter(|&v| upper(v)).collect();
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let n = values.len() as f64;
            let v = (a.len() as f64 / n) * (b.len() as f64 / n) * (ma - mb).powi(2);
            if v > best.1 {
                best = (k, v);
            }
        }
        best.0
    }

    #[test]
    fn two_point_histogram() {
        let v = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let t = otsu_threshold(&v, 256).unwrap();
        assert_eq!(t.bin, 1);
        let upper: Vec<_> = v.iter().filter(|&&x| t.is_upper(x)).collect();
        assert_eq!(upper, vec![&1.0, &1.0, &1.0]);
    }

    #[test]
    fn lone_bright_sample() {
        let v = [0.1, 0.1, 0.9];
        let t = otsu_threshold(&v, 256).unwrap();
        assert_eq!(t.bin, exhaustive(&v, 256));
        let upper: Vec<f64> = v.iter().copied().filter(|&x| t.is_upper(x)).collect();
        assert_eq!(upper, vec![0.9]);
    }

    #[test]
    fn jittered_clusters() {
        let mut v = Vec::new();
        for i in 0..100 {
            let j = ((i * 7919) % 41) as f64 / 1000.0 - 0.02;
            v.push(0.2 + j);
            v.push(0.8 - j);
        }
        let t = otsu_threshold(&v, 256).unwrap();
        assert_eq!(t.bin, exhaustive(&v, 256));
        // every cut inside the gap scores the same; the lowest one wins
        assert!(t.value >= 0.2 && t.value < 0.78, "{}", t.value);
        assert!(v.iter().all(|&x| t.is_upper(x) == (x > 0.5)));
    }

    #[test]
    fn degenerate_and_bad_bins() {
        assert!(matches!(otsu_threshold(&[0.5; 4], 256), Err(Error::Degenerate(_))));
        assert!(matches!(otsu_threshold(&[], 256), Err(Error::Degenerate(_))));
        assert!(matches!(otsu_threshold(&[0.0, 1.0], 1), Err(Error::Parameter(_))));
    }
}
