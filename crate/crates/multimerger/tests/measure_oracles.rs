//! Cross-checks the merger rate table against oracles that avoid the
//! library's own special-function code: a tanh-sinh quadrature of the
//! defining integral for absolutely continuous measures, exact factorial
//! ratios for the Bolthausen-Sznitman case, and direct mixture algebra
//! for the two-atom family.

use multimerger::measures::Measure;

const QUADRATURE_TOLERANCE: f64 = 1e-8;
const EXACT_RATIO_TOLERANCE: f64 = 1e-12;
const MIXTURE_TOLERANCE: f64 = 1e-13;

/// Integrates `exp(f(ln x, ln(1-x)))` over `(0, 1)` with the substitution
/// `x = (1 + tanh((pi/2) sinh t)) / 2`. Node positions and weights are
/// evaluated in log space, so endpoint singularities that the measure
/// densities produce stay finite. The integrand passed in must decay at
/// both endpoints once the substitution weight `x(1-x)` is included,
/// which holds for every merger-rate integrand.
fn tanh_sinh_log<F: Fn(f64, f64) -> f64>(ln_f: F) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let pi = std::f64::consts::PI;
    let t_max = 4.5f64;
    let eval = |t: f64| -> f64 {
        let s = half_pi * t.sinh();
        let (ln_x, ln_one_minus_x) = if s >= 0.0 {
            let e = (-2.0 * s).exp();
            (-e.ln_1p(), -2.0 * s - e.ln_1p())
        } else {
            let e = (2.0 * s).exp();
            (2.0 * s - e.ln_1p(), -e.ln_1p())
        };
        let ln_weight = (pi * t.cosh()).ln() + ln_x + ln_one_minus_x;
        (ln_f(ln_x, ln_one_minus_x) + ln_weight).exp()
    };
    let mut h = 0.5f64;
    let mut total = eval(0.0);
    let mut j = 1u64;
    while h * j as f64 <= t_max {
        total += eval(h * j as f64) + eval(-(h * j as f64));
        j += 1;
    }
    let mut value = h * total;
    for _ in 0..8 {
        h /= 2.0;
        let mut j = 1u64;
        while h * j as f64 <= t_max {
            total += eval(h * j as f64) + eval(-(h * j as f64));
            j += 2;
        }
        let refined = h * total;
        let converged = (refined - value).abs() <= 1e-13 * refined.abs().max(1e-300);
        value = refined;
        if converged {
            break;
        }
    }
    value
}

/// The defining integral of the merger rate for a Beta(a, b) measure,
/// normalized with the statrs log-beta so no library special-function
/// path is reused.
fn beta_rate_by_quadrature(a: f64, b: f64, n: u32, k: u32) -> f64 {
    let ln_norm = statrs::function::beta::ln_beta(a, b);
    let x_power = f64::from(k) - 2.0 + a - 1.0;
    let y_power = f64::from(n - k) + b - 1.0;
    tanh_sinh_log(|ln_x, ln_y| x_power * ln_x + y_power * ln_y - ln_norm)
}

fn k_grid(n: u32) -> Vec<u32> {
    if n <= 12 {
        return (2..=n).collect();
    }
    let mut ks: Vec<u32> = (2..=n).step_by(((n - 1) / 8).max(1) as usize).collect();
    if *ks.last().unwrap() != n {
        ks.push(n);
    }
    ks
}

#[test]
fn beta_rates_match_the_defining_integral() {
    let shapes = [
        (1.75, 0.25),
        (1.5, 0.5),
        (1.0, 1.0),
        (0.5, 1.5),
        (0.25, 1.75),
        (2.0, 3.5),
        (0.3, 0.7),
    ];
    for (a, b) in shapes {
        let measure = Measure::beta(a, b).unwrap();
        for n in [2u32, 5, 10, 25, 50] {
            for k in k_grid(n) {
                let rate = measure.merger_rate(n, k).unwrap();
                let oracle = beta_rate_by_quadrature(a, b, n, k);
                let scale = oracle.abs().max(1.0);
                assert!(
                    (rate - oracle).abs() <= QUADRATURE_TOLERANCE * scale,
                    "Beta({a},{b}) rate at n={n}, k={k}: {rate} vs quadrature {oracle}"
                );
            }
        }
    }
}

#[test]
fn alpha_parametrization_matches_the_quadrature_too() {
    for alpha in [0.5, 1.0, 1.5] {
        let measure = Measure::beta_from_alpha(alpha).unwrap();
        for n in [3u32, 8, 20, 40] {
            for k in k_grid(n) {
                let rate = measure.merger_rate(n, k).unwrap();
                let oracle = beta_rate_by_quadrature(2.0 - alpha, alpha, n, k);
                let scale = oracle.abs().max(1.0);
                assert!(
                    (rate - oracle).abs() <= QUADRATURE_TOLERANCE * scale,
                    "alpha={alpha} rate at n={n}, k={k}: {rate} vs quadrature {oracle}"
                );
            }
        }
    }
}

#[test]
fn bolthausen_sznitman_rates_are_exact_factorial_ratios() {
    fn factorial(v: u32) -> u128 {
        (1..=u128::from(v.max(1))).product()
    }
    let bsz = Measure::bolthausen_sznitman();
    let unit_beta = Measure::beta(1.0, 1.0).unwrap();
    for n in 2u32..=20 {
        for k in 2..=n {
            let exact =
                factorial(k - 2) as f64 * factorial(n - k) as f64 / factorial(n - 1) as f64;
            for (name, measure) in [("closed form", &bsz), ("unit beta", &unit_beta)] {
                let rate = measure.merger_rate(n, k).unwrap();
                assert!(
                    (rate - exact).abs() <= EXACT_RATIO_TOLERANCE * exact.max(1.0),
                    "{name} rate at n={n}, k={k}: {rate} vs exact {exact}"
                );
            }
        }
    }
}

#[test]
fn two_atom_rates_match_the_mixture_algebra() {
    for psi in [0.2, 0.5, 0.9] {
        let measure = Measure::eldon_wakeley(psi).unwrap();
        let kingman_weight = 2.0 / (2.0 + psi * psi);
        let atom_weight = psi * psi / (2.0 + psi * psi);
        for n in 2u32..=30 {
            for k in 2..=n {
                let point = atom_weight
                    * psi.powi(k as i32 - 2)
                    * (1.0 - psi).powi((n - k) as i32);
                let oracle = point + if k == 2 { kingman_weight } else { 0.0 };
                let rate = measure.merger_rate(n, k).unwrap();
                assert!(
                    (rate - oracle).abs() <= MIXTURE_TOLERANCE * oracle.max(1.0),
                    "psi={psi} rate at n={n}, k={k}: {rate} vs mixture {oracle}"
                );
            }
        }
    }
}

#[test]
fn dirac_rates_match_the_point_evaluation() {
    for p in [0.1, 0.5, 0.85] {
        let measure = Measure::dirac(p).unwrap();
        for n in 2u32..=30 {
            for k in 2..=n {
                let oracle = p.powi(k as i32 - 2) * (1.0 - p).powi((n - k) as i32);
                let rate = measure.merger_rate(n, k).unwrap();
                assert!(
                    (rate - oracle).abs() <= MIXTURE_TOLERANCE * oracle.max(1.0),
                    "p={p} rate at n={n}, k={k}: {rate} vs point value {oracle}"
                );
            }
        }
    }
}
