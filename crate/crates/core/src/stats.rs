//! Sample statistics, generic over `num_traits::Float` so the same code
//! serves `f32` and `f64` pipelines.

use num_traits::Float;
use serde::Serialize;

fn cast<T: Float>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

pub fn mean<T: Float>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().fold(T::zero(), |a, &x| a + x) / cast(xs.len() as f64)
}

/// Mean with its standard error and the unbiased sample variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleSummary<T> {
    pub count: usize,
    pub mean: T,
    pub variance: T,
    pub std_error: T,
}

impl<T: Float> SampleSummary<T> {
    pub fn of(xs: &[T]) -> Self {
        let n = xs.len();
        let m = mean(xs);
        let variance = if n < 2 {
            T::nan()
        } else {
            xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m)) / cast((n - 1) as f64)
        };
        SampleSummary {
            count: n,
            mean: m,
            variance,
            std_error: (variance / cast(n as f64)).sqrt(),
        }
    }

    /// Distance from `target` in units of the standard error.
    pub fn z_score(&self, target: T) -> T {
        (self.mean - target) / self.std_error
    }
}

/// Sample covariance `mean((x - x̄)(y - ȳ))` and a standard error taken
/// from the spread of the centered products.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovarianceEstimate<T> {
    pub covariance: T,
    pub std_error: T,
}

pub fn covariance<T: Float>(xs: &[T], ys: &[T]) -> CovarianceEstimate<T> {
    assert_eq!(xs.len(), ys.len(), "paired samples");
    let (mx, my) = (mean(xs), mean(ys));
    let products: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).collect();
    let s = SampleSummary::of(&products);
    CovarianceEstimate {
        covariance: s.mean,
        std_error: s.std_error,
    }
}

/// Standard normal CDF by Hart's rational approximation (double-precision
/// coefficients, absolute error below 1e-14 on the real line).
pub fn std_normal_cdf<T: Float>(x: T) -> T {
    let z = x.to_f64().expect("finite float");
    let az = z.abs();
    let tail = if az > 37.0 {
        0.0
    } else {
        let e = (-az * az / 2.0).exp();
        if az < 7.071_067_811_865_47 {
            let num = [
                3.526_249_659_989_11e-2,
                0.700_383_064_443_688,
                6.373_962_203_531_65,
                33.912_866_078_383,
                112.079_291_497_871,
                221.213_596_169_931,
                220.206_867_912_376,
            ]
            .iter()
            .fold(0.0, |acc, &c| acc * az + c);
            let den = [
                8.838_834_764_831_84e-2,
                1.755_667_163_182_64,
                16.064_177_579_207,
                86.780_732_202_946_1,
                296.564_248_779_674,
                637.333_633_378_831,
                793.826_512_519_948,
                440.413_735_824_752,
            ]
            .iter()
            .fold(0.0, |acc, &c| acc * az + c);
            e * num / den
        } else {
            let b = az + 0.65;
            let b = az + 4.0 / b;
            let b = az + 3.0 / b;
            let b = az + 2.0 / b;
            let b = az + 1.0 / b;
            e / b / 2.506_628_274_631
        }
    };
    cast(if z > 0.0 { 1.0 - tail } else { tail })
}

/// CDF of `N(mean, variance)`.
pub fn normal_cdf<T: Float>(x: T, mean: T, variance: T) -> T {
    std_normal_cdf((x - mean) / variance.sqrt())
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical law of
/// `samples` and `cdf`.
pub fn ks_distance<T: Float>(samples: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    let n: T = cast(sorted.len() as f64);
    sorted
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &x)| {
            let f = cdf(x);
            let above = cast::<T>((i + 1) as f64) / n - f;
            let below = f - cast::<T>(i as f64) / n;
            acc.max(above).max(below)
        })
}

/// Linear-interpolation quantile of an ascending slice, `q` in `[0, 1]`.
pub fn quantile_sorted<T: Float>(sorted: &[T], q: f64) -> T {
    if sorted.is_empty() {
        return T::nan();
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac: T = cast(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantiles<T: Float>(xs: &[T], qs: &[f64]) -> Vec<T> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN samples"));
    qs.iter().map(|&q| quantile_sorted(&sorted, q)).collect()
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope<T: Float>(xs: &[T], ys: &[T]) -> Option<T> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (sxy, sxx) = xs
        .iter()
        .zip(ys)
        .fold((T::zero(), T::zero()), |(sxy, sxx), (&x, &y)| {
            (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
        });
    (sxx > T::zero()).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson integration of the standard normal density from a
    /// far-left cut-off, an oracle independent of the rational fit.
    fn cdf_by_quadrature(x: f64) -> f64 {
        let a = -40.0;
        let steps = 400_000;
        let h = (x - a) / steps as f64;
        let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(x);
        for k in 1..steps {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn normal_cdf_matches_quadrature() {
        for &x in &[-8.0, -5.0, -2.5, -1.0, -0.3, 0.0, 0.7, 1.96, 3.0, 6.0, 7.5] {
            let err = (std_normal_cdf(x) - cdf_by_quadrature(x)).abs();
            assert!(err < 1e-9, "x = {x}, err = {err}");
        }
        assert_eq!(std_normal_cdf(50.0f64), 1.0);
        assert_eq!(std_normal_cdf(-50.0f64), 0.0);
        assert!((normal_cdf(1.0, 1.0, 0.5) - 0.5f64).abs() < 1e-15);
    }

    #[test]
    fn summary_and_covariance() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let s = SampleSummary::of(&xs);
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-12);
        let c = covariance(&xs, &[2.0, 4.0, 6.0, 8.0]);
        assert!((c.covariance - 2.5).abs() < 1e-12);
        let single = SampleSummary::of(&[3.0f64]);
        assert!(single.variance.is_nan());
    }

    #[test]
    fn generic_over_f32() {
        let xs: Vec<f32> = vec![0.5, 1.5, 2.5];
        let s = SampleSummary::of(&xs);
        assert!((s.mean - 1.5).abs() < 1e-6);
        let d = ks_distance(&xs, |x: f32| (x / 3.0).clamp(0.0, 1.0));
        assert!((0.0..=1.0).contains(&d));
        assert!((std_normal_cdf(0.0f32) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn ks_uniform_grid() {
        // midpoints of n cells: D = 1/(2n) exactly
        let n = 100;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_distance(&xs, |x| x);
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn quantiles_and_slope() {
        let xs = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantiles(&xs, &[0.0, 0.5, 1.0]), vec![1.0, 3.0, 5.0]);
        assert_eq!(quantiles(&xs, &[0.25]), vec![2.0]);
        let slope = ols_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((slope - 2.0f64).abs() < 1e-12);
        assert!(ols_slope(&[1.0f64], &[1.0]).is_none());
    }
}
