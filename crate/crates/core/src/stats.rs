//! Scalar numerics shared across the crate: stable logistic terms, the
//! standard normal distribution, log-sum-exp, and sample quantiles.

/// Logistic function 1 / (1 + e^{-z}), stable for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// e^z / (1 + e^z)^2 = sigmoid(z) * (1 - sigmoid(z)), stable for large |z|.
pub fn sigmoid_deriv(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s)
}

/// log(Σ e^{x_i}) without overflow. Returns -inf on an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

const FRAC_2_SQRT_PI: f64 = 1.128_379_167_095_512_6; // 2/sqrt(pi)

/// Error function, double-precision accurate.
///
/// Uses the all-positive power series for small arguments and a Lentz
/// continued fraction for the complement at large arguments; both are
/// free of cancellation.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        erf_series(x)
    } else {
        1.0 - erfc_cf(x)
    }
}

/// Complementary error function, double-precision accurate.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

// erf(x) = 2/sqrt(pi) * e^{-x^2} * sum_{n>=0} (2x^2)^n x / (1*3*...*(2n+1)),
// every term positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        term *= 2.0 * x2 / (2.0 * f64::from(n) + 1.0);
        let prev = sum;
        sum += term;
        if sum == prev || n > 200 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// erfc(x) = e^{-x^2} / (x sqrt(pi)) * 1/(1 + q_1/(1 + q_2/(1 + ...))) with
// q_k = k / (2x^2); evaluated by the modified Lentz algorithm.
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let x2 = x * x;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    let mut k = 0u32;
    loop {
        k += 1;
        let (a, b) = if k == 1 {
            (1.0, 1.0)
        } else {
            (f64::from(k - 1) / (2.0 * x2), 1.0)
        };
        d = b + a * d;
        if d == 0.0 {
            d = tiny;
        }
        c = b + a / c;
        if c == 0.0 {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 || k > 300 {
            break;
        }
    }
    (-x2).exp() / (x * std::f64::consts::PI.sqrt()) * f
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile function.
///
/// Safeguarded Newton iteration on [`norm_cdf`]: a logistic starting
/// guess, bisection fallback when a step leaves the bracket. Converges to
/// full double precision for p in (0, 1); returns ±inf at the endpoints.
pub fn norm_ppf(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "norm_ppf: p = {p} outside [0,1]");
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    // Logistic approximation; within ~0.15 of the truth in the bulk.
    let mut x = (p / (1.0 - p)).ln() / 1.702;
    for _ in 0..200 {
        let f = norm_cdf(x) - p;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = norm_pdf(x);
        let mut step = if d > 0.0 { f / d } else { 0.0 };
        let mut next = x - step;
        if !(lo < next && next < hi) || step == 0.0 {
            next = 0.5 * (lo + hi);
            step = x - next;
        }
        x = next;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0,1]");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = h - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Mean of a nonempty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        // Abramowitz & Stegun style spot checks at full precision.
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((norm_cdf(-1.0) - 0.158_655_253_931_457_07).abs() < 1e-14);
        assert!((norm_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-14);
        assert!((norm_cdf(2.0) - 0.977_249_868_051_820_8).abs() < 1e-14);
        assert!((norm_cdf(-5.0) - 2.866_515_718_791_939e-7).abs() < 1e-18);
        assert!((norm_cdf(8.0) - (1.0 - 6.220_960_574_271_786e-16)).abs() < 1e-16);
    }

    #[test]
    fn ppf_inverts_cdf() {
        for &p in &[1e-10, 1e-6, 0.025, 0.2, 0.5, 0.8, 0.975, 1.0 - 1e-6] {
            let x = norm_ppf(p);
            assert!(
                (norm_cdf(x) - p).abs() < 1e-13 * p.max(1e-3),
                "p={p}, x={x}, cdf={}",
                norm_cdf(x)
            );
        }
        assert!((norm_ppf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_matches_naive_and_survives_extremes() {
        let xs = [1.0, 2.0, 3.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - naive).abs() < 1e-14);
        let big = [1000.0, 1000.0];
        assert!((logsumexp(&big) - (1000.0 + 2.0f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn sigmoid_tails() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!((sigmoid_deriv(0.0) - 0.25).abs() < 1e-16);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&xs, 0.25) - 1.75).abs() < 1e-15);
    }
}
