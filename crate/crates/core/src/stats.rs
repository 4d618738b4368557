//! Shared statistics: empirical characteristic function, scale estimation,
//! Kolmogorov-Smirnov distances, quantiles and least squares.

use crate::error::{Error, Result};

/// Mean and standard error of cos(theta * X) over a sample.
#[derive(Debug, Clone, Copy)]
pub struct Ecf {
    pub mean: f64,
    pub se: f64,
}

pub fn ecf_cos(samples: &[f64], theta: f64) -> Ecf {
    assert!(samples.len() >= 2, "need at least two samples");
    let n = samples.len() as f64;
    let mean = samples.iter().map(|x| (theta * x).cos()).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|x| {
            let d = (theta * x).cos() - mean;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    Ecf {
        mean,
        se: (var / n).sqrt(),
    }
}

fn invert_ecf(samples: &[f64], alpha: f64, theta: f64) -> f64 {
    let m = ecf_cos(samples, theta).mean.clamp(1e-12, 1.0 - 1e-12);
    (-m.ln()).powf(1.0 / alpha) / theta
}

/// Scale of a symmetric alpha-stable sample from its empirical
/// characteristic function.
///
/// -ln E cos(theta X) = (sigma theta)^alpha for every theta; the estimator
/// probes at a data-driven theta, first anchored on the 75% quantile of |X|
/// and then refined to sit near sigma theta = 1 where the inversion is best
/// conditioned.
pub fn estimate_sas_scale(samples: &[f64], alpha: f64) -> f64 {
    let mut abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let anchor = quantile_sorted(&abs, 0.75).max(1e-300);
    let first = invert_ecf(samples, alpha, 1.0 / anchor).max(1e-300);
    invert_ecf(samples, alpha, 1.0 / first)
}

/// Kolmogorov-Smirnov distance together with finite-sample critical values.
#[derive(Debug, Clone, Copy)]
pub struct KsReport {
    pub statistic: f64,
    pub sample_size: usize,
    pub critical_5pct: f64,
    pub critical_1pct: f64,
}

/// One-sample KS distance against a distribution function, with Stephens'
/// finite-sample critical values at the 5% and 1% levels.
pub fn ks_one_sample(values: &[f64], cdf: impl Fn(f64) -> f64) -> KsReport {
    assert!(!values.is_empty(), "empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    let eff = n.sqrt() + 0.12 + 0.11 / n.sqrt();
    KsReport {
        statistic: d,
        sample_size: v.len(),
        critical_5pct: 1.358 / eff,
        critical_1pct: 1.628 / eff,
    }
}

/// Two-sample KS distance with asymptotic critical values.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsReport {
    assert!(!a.is_empty() && !b.is_empty(), "empty sample");
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < n && sa[i] <= x {
            i += 1;
        }
        while j < m && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let eff = ((n + m) as f64 / (n as f64 * m as f64)).sqrt();
    KsReport {
        statistic: d,
        sample_size: n.min(m),
        critical_5pct: 1.358 * eff,
        critical_1pct: 1.628 * eff,
    }
}

/// Quantile of an already sorted slice by linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "empty sample");
    assert!((0.0..=1.0).contains(&p), "quantile level out of range");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Interquartile range.
pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

/// Ordinary least squares line, plus the largest absolute residual.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::Data(format!(
            "mismatched regression inputs: {} abscissae vs {} ordinates",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Data(format!(
            "need at least two points for a line fit, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("degenerate regression: all abscissae equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).abs())
        .fold(0.0, f64::max);
    Ok(LineFit {
        slope,
        intercept,
        max_residual,
    })
}

/// Least squares on (ln x, ln y); both coordinates must be positive.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if let Some(bad) = x.iter().chain(y).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Data(format!(
            "log-log fit needs positive finite inputs, got {bad}"
        )));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamKind};
    use crate::stable::{sample_sas, StableIndex};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn ecf_of_constant_sample() {
        let xs = vec![2.0; 100];
        let e = ecf_cos(&xs, 0.7);
        assert_abs_diff_eq!(e.mean, (1.4f64).cos(), epsilon = 1e-15);
        // The variance of a constant sample is zero up to rounding in the
        // accumulated sum of squares.
        assert!(e.se < 1e-12, "se {}", e.se);
    }

    #[test]
    fn scale_estimator_recovers_truth() {
        let mut rng = derive_stream(5, StreamKind::Generic, 0);
        for &a in &[0.8, 1.2, 1.7] {
            let alpha = StableIndex::new(a).unwrap();
            for &sigma in &[0.3, 1.0, 4.0] {
                let xs: Vec<f64> = (0..60_000)
                    .map(|_| sample_sas(alpha, sigma, &mut rng).unwrap())
                    .collect();
                let est = estimate_sas_scale(&xs, a);
                assert!(
                    (est / sigma - 1.0).abs() < 0.03,
                    "alpha {a} sigma {sigma}: estimate {est}"
                );
            }
        }
    }

    #[test]
    fn ks_one_sample_exact_grid() {
        // Empirical CDF of {0.1, ..., 0.9, 1.0} against uniform: the largest
        // deviation is 0.1 at the left edge of each step.
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let ks = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert_abs_diff_eq!(ks.statistic, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn ks_critical_values_decrease_with_n() {
        let small = ks_one_sample(&[0.5; 10], |x| x);
        let large = ks_one_sample(&vec![0.5; 1000], |x| x);
        assert!(large.critical_5pct < small.critical_5pct);
        assert!(small.critical_5pct < small.critical_1pct);
    }

    #[test]
    fn ks_uniform_sample_accepts() {
        let mut rng = derive_stream(6, StreamKind::Generic, 0);
        let xs: Vec<f64> = (0..5_000).map(|_| rng.random::<f64>()).collect();
        let ks = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks.statistic < ks.critical_1pct, "KS {}", ks.statistic);
    }

    #[test]
    fn ks_shifted_sample_rejects() {
        let mut rng = derive_stream(7, StreamKind::Generic, 0);
        let xs: Vec<f64> = (0..5_000).map(|_| 0.9 * rng.random::<f64>()).collect();
        let ks = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(ks.statistic > ks.critical_1pct);
    }

    #[test]
    fn ks_two_sample_identical_is_zero() {
        let xs = vec![1.0, 2.0, 5.0, 9.0];
        let ks = ks_two_sample(&xs, &xs);
        assert_eq!(ks.statistic, 0.0);
    }

    #[test]
    fn ks_two_sample_disjoint_is_one() {
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![10.0, 11.0, 12.0];
        assert_abs_diff_eq!(ks_two_sample(&a, &b).statistic, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quantiles_and_iqr() {
        let v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(iqr(&v), 2.0);
        let sorted = v.clone();
        assert_eq!(quantile_sorted(&sorted, 0.0), 1.0);
        assert_eq!(quantile_sorted(&sorted, 1.0), 5.0);
        assert_abs_diff_eq!(quantile_sorted(&sorted, 0.1), 1.4, epsilon = 1e-12);
    }

    #[test]
    fn line_fit_exact() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let fit = fit_line(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, -1.0, epsilon = 1e-12);
        assert!(fit.max_residual < 1e-12);
    }

    #[test]
    fn loglog_fit_recovers_power_law() {
        let x = vec![10.0_f64, 25.0, 50.0, 100.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(0.7)).collect();
        let fit = fit_loglog(&x, &y).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn loglog_fit_rejects_nonpositive() {
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(fit_loglog(&[1.0, -2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0]).is_err());
        assert!(fit_line(&[1.0, 2.0], &[2.0]).is_err());
        assert!(fit_line(&[3.0, 3.0], &[1.0, 2.0]).is_err());
    }
}
