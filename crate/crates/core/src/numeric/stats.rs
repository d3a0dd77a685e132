//! Descriptive statistics, correlation, kernel density estimation and the
//! distribution tails used by the hypothesis tests.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Variance with `ddof` delta degrees of freedom.
pub fn variance(x: &[f64], ddof: usize) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - ddof) as f64
}

pub fn std_dev(x: &[f64], ddof: usize) -> f64 {
    variance(x, ddof).sqrt()
}

/// Neumaier-compensated sum, so reductions do not depend on summation order
/// beyond the last ulp.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(x: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(x), 0.5)
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "pearson on lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("zero variance in correlation".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Fractional ranks starting at 1; ties receive the average of their ranks.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "spearman on lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided p-value for a correlation coefficient via the t statistic with
/// `n - 2` degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    student_t_two_sided(t, df)
}

/// Two-sided tail `P(|T| ≥ |t|)` of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x)
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom,
/// via the regularized upper incomplete gamma function.
pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(dof / 2.0, stat / 2.0)
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`, truncated once terms drop
/// below 1e-10.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    // the alternating series converges too slowly near zero; the CDF is 1 - Q
    // and is numerically zero below this point
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-10 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Silverman rule-of-thumb bandwidth `1.06·σ̂·n^{−1/5}`.
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: sample.len(),
        });
    }
    let sd = std_dev(sample, 1);
    if !(sd > 0.0) {
        return Err(Error::DegenerateInput("constant sample in kde".into()));
    }
    Ok(1.06 * sd * (sample.len() as f64).powf(-0.2))
}

/// Gaussian kernel density estimate evaluated at `eval_points`.
pub fn gaussian_kde(sample: &[f64], eval_points: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(sample)?;
    let norm = 1.0 / (sample.len() as f64 * h);
    Ok(eval_points
        .iter()
        .map(|&x| norm * compensated_sum(sample.iter().map(|&s| normal_pdf((x - s) / h))))
        .collect())
}

/// Evenly spaced grid of `n` points spanning `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn affine_correlations() {
        let x: Vec<f64> = (0..10).map(|v| v as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_spearman() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let mut y = sorted_copy(&x);
        y.reverse();
        let xs = sorted_copy(&x);
        assert!((spearman(&xs, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_hand_case() {
        // ranks (1,2,3,4) vs (1,3,2,4): 1 - 6*2/(4*15) = 0.8
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn zero_variance_is_tagged() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateInput(_)));
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 5..40),
            a in 0.01f64..50.0,
            b in -50.0f64..50.0,
            seed in 0u64..1000,
        ) {
            let mut rng = SeededRng::new(seed);
            let ys: Vec<f64> = xs.iter().map(|v| v + 10.0 * rng.normal()).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let mapped: Vec<f64> = xs.iter().map(|v| a * v + b).collect();
                let r2 = pearson(&mapped, &ys).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }

    #[test]
    fn kde_standard_normal_at_zero() {
        let mut rng = SeededRng::new(2024);
        let sample: Vec<f64> = (0..10_000).map(|_| rng.normal()).collect();
        let d = gaussian_kde(&sample, &[0.0]).unwrap()[0];
        assert!((d - 0.398_942_280_4).abs() < 0.05, "density {d}");
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = SeededRng::new(3);
        let sample: Vec<f64> = (0..500).map(|_| 2.0 * rng.normal() + 1.0).collect();
        let grid = linspace(-15.0, 17.0, 4001);
        let dens = gaussian_kde(&sample, &grid).unwrap();
        let dx = grid[1] - grid[0];
        let integral: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum();
        assert!((0.99..=1.01).contains(&integral), "{integral}");
        assert!(dens.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn kde_symmetry() {
        let sample = [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0];
        let pts = [0.3, 1.7, 2.9];
        let neg: Vec<f64> = pts.iter().map(|p| -p).collect();
        let a = gaussian_kde(&sample, &pts).unwrap();
        let b = gaussian_kde(&sample, &neg).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
        let two = gaussian_kde(&[-1.0, 1.0], &[-1.0, 1.0]).unwrap();
        assert!((two[0] - two[1]).abs() < 1e-15);
    }

    #[test]
    fn kde_constant_sample_errors() {
        assert!(matches!(
            gaussian_kde(&[2.0, 2.0, 2.0], &[0.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn tails_known_values() {
        // chi2(1) at 3.841458820694124 has upper tail 0.05
        assert!((chi2_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-10);
        // Kolmogorov Q(1.358098) ≈ 0.05
        assert!((kolmogorov_sf(1.358_098_8) - 0.05).abs() < 1e-5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9);
        // t with 10 df: two-sided p at 2.228138852 is 0.05
        assert!((student_t_two_sided(2.228_138_851_986, 10.0) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }
}
