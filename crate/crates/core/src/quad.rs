//! Gauss–Hermite quadrature rules.

/// Nodes and weights of the `n`-point Gauss–Hermite rule for
/// `integral of exp(-x^2) f(x) dx ~= sum_i w_i f(x_i)`, nodes ascending.
///
/// Computed by Newton iteration on the normalized Hermite recurrence;
/// accurate to machine precision for the orders used here (<= ~64).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be >= 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..(n + 1) / 2 {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[n - 1],
            3 => 1.91 * z - 0.91 * nodes[n - 2],
            _ => 2.0 * z - nodes[n - i + 1],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            // Normalized Hermite functions: p1 = H~_n(z).
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        // Store the positive node high in the array so the final order is
        // ascending; weights are symmetric.
        nodes[n - 1 - i] = z;
        nodes[i] = -z;
        let w = 2.0 / (pp * pp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_PI: f64 = 1.772_453_850_905_516;

    #[test]
    fn small_rules_match_closed_forms() {
        let (x, w) = gauss_hermite(2);
        assert!((x[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        assert!((x[0] + x[1]).abs() < 1e-14);
        assert!((w[0] - SQRT_PI / 2.0).abs() < 1e-14);

        let (x, w) = gauss_hermite(3);
        assert!(x[1].abs() < 1e-14);
        assert!((x[2] - 1.5f64.sqrt()).abs() < 1e-14);
        assert!((w[1] - 2.0 * SQRT_PI / 3.0).abs() < 1e-13);
        assert!((w[0] - SQRT_PI / 6.0).abs() < 1e-13);
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        // An n-point rule is exact for polynomials of degree <= 2n-1.
        // Moments: integral exp(-x^2) x^{2m} = sqrt(pi) (2m-1)!! / 2^m.
        for n in [1usize, 2, 5, 9, 15, 40] {
            let (x, w) = gauss_hermite(n);
            assert!((w.iter().sum::<f64>() - SQRT_PI).abs() < 1e-12);
            let mut moment = SQRT_PI;
            let mut m = 0usize;
            loop {
                m += 1;
                if 2 * m > 2 * n - 1 {
                    break;
                }
                moment *= (2.0 * m as f64 - 1.0) / 2.0;
                let got: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(2 * m as i32))
                    .sum();
                assert!(
                    (got - moment).abs() < 1e-10 * moment.max(1.0),
                    "n={n}, moment 2m={}: {got} vs {moment}",
                    2 * m
                );
            }
        }
    }

    #[test]
    fn nodes_are_ascending_and_symmetric() {
        for n in [4usize, 7, 15, 23] {
            let (x, w) = gauss_hermite(n);
            assert!(x.windows(2).all(|p| p[1] > p[0]));
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-13);
                assert!((w[i] - w[n - 1 - i]).abs() < 1e-13);
            }
        }
    }
}
