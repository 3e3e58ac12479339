//! Small numerical statistics helpers.
//!
//! These back the summary-statistic pipeline and the distributional
//! checks in the validation tools: linear-interpolation quantiles, basic
//! moments, and the two-sample Kolmogorov-Smirnov statistic with its
//! asymptotic p-value.

/// Mean, sample standard deviation, and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

/// Moments of `values`, with the standard deviation using the `n - 1`
/// denominator. A sample of size one has zero spread by convention.
pub fn moments(values: &[f64]) -> Moments {
    assert!(!values.is_empty(), "moments of an empty sample");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Moments {
            mean,
            sd: 0.0,
            se: 0.0,
        };
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    Moments {
        mean,
        sd,
        se: sd / n.sqrt(),
    }
}

/// Quantile of a sorted sample by linear interpolation between order
/// statistics, with the `h = q * (n - 1)` plotting position.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0, 1]");
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// A Monte Carlo estimate together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub reps: u64,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> McEstimate {
        let m = moments(samples);
        McEstimate {
            mean: m.mean,
            se: m.se,
            reps: samples.len() as u64,
        }
    }

    /// Whether `target` lies within `multiples` standard errors of the
    /// estimate.
    pub fn within(&self, target: f64, multiples: f64) -> bool {
        (self.mean - target).abs() <= multiples * self.se
    }
}

/// Harmonic mean `n / sum(1 / v)` of strictly positive values.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "harmonic mean of an empty sample");
    let recip: f64 = values.iter().map(|v| 1.0 / v).sum();
    values.len() as f64 / recip
}

/// Two-sample Kolmogorov-Smirnov statistic, the sup-norm distance
/// between the empirical distribution functions of `a` and `b`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "Kolmogorov-Smirnov on an empty sample"
    );
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value for a two-sample Kolmogorov-Smirnov statistic `d`
/// with sample sizes `na` and `nb`, from the Kolmogorov tail series.
pub fn ks_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let lambda = d * (na * nb / (na + nb)).sqrt();
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0f64;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        let signed = if k % 2 == 1 { term } else { -term };
        sum += signed;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
