//! Special functions shared across the crate.
//!
//! The binomial-rate weights that drive coalescent transition laws need
//! `ln C(n, k)` for block counts up to about ten thousand, and the
//! genealogical recursions need products of binomial ratios accurate to
//! near machine precision. Everything here is deterministic and
//! allocation-free after a one-time factorial table build.

use std::sync::OnceLock;

/// Largest argument covered by the precomputed `ln n!` table.
const LN_FACT_TABLE_SIZE: usize = 10_101;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![0.0; LN_FACT_TABLE_SIZE];
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (i, slot) in table.iter_mut().enumerate().skip(1) {
            let term = (i as f64).ln() - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
            *slot = sum;
        }
        table
    })
}

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Natural log of the Euler beta function `B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Natural log of `n!`, from a compensated table for tabled `n`.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE_SIZE {
        ln_fact_table()[n as usize]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Natural log of the binomial coefficient `C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Stable `ln(sum(exp(values)))` over a slice.
///
/// Empty input yields negative infinity, matching the empty sum.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Hypergeometric sampling weight `C(m, l) * C(n - m, k - l) / C(n, k)`.
///
/// Evaluated as a running product of small exact integer ratios, with the
/// `C(k, l)` interleaving factors folded in greedily to keep partial
/// products bounded. The relative error grows like the number of factors
/// times machine epsilon, so draws of a few hundred stay well inside a
/// `1e-12` budget.
pub fn hypergeom_weight(n: u64, m: u64, k: u64, l: u64) -> f64 {
    debug_assert!(m <= n && k <= n && l <= k && l <= m && k - l <= n - m);
    let mut acc = 1.0f64;
    let mut t = 1u64;
    for i in 0..k {
        let num = if i < l {
            (m - i) as f64
        } else {
            (n - m - (i - l)) as f64
        };
        acc *= num / (n - k + 1 + i) as f64;
        while t <= l && acc < 1.0 {
            acc *= (k - l + t) as f64 / t as f64;
            t += 1;
        }
    }
    while t <= l {
        acc *= (k - l + t) as f64 / t as f64;
        t += 1;
    }
    acc
}
