//! Dense complex polynomials in coefficient form (ascending powers).
//!
//! This is support machinery for the *small* degrees that show up in preimage
//! pullbacks and derivative checks (degree ≤ a few dozen). Periodic points of
//! iterates are never solved through coefficients — see [`crate::cycles`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::util::sort_complex;

/// Horner evaluation.
pub fn eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// Coefficients of the derivative.
pub fn derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

fn effective_degree(coeffs: &[Complex64]) -> usize {
    let mut deg = coeffs.len().saturating_sub(1);
    while deg > 0 && coeffs[deg].norm_sqr() == 0.0 {
        deg -= 1;
    }
    deg
}

/// All roots by Aberth–Ehrlich simultaneous iteration, with multiplicity
/// (multiple roots come out as coincident entries). Sorted by (re, im).
pub fn roots(coeffs: &[Complex64], tol: f64, max_iter: usize) -> Result<Vec<Complex64>> {
    let deg = effective_degree(coeffs);
    if deg == 0 {
        return Ok(Vec::new());
    }
    let coeffs = &coeffs[..=deg];
    if !coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        return Err(Error::Invalid("non-finite polynomial coefficient".into()));
    }
    let lead = coeffs[deg];
    // Cauchy bound on root modulus.
    let bound = 1.0
        + coeffs[..deg]
            .iter()
            .map(|c| (c / lead).norm())
            .fold(0.0f64, f64::max);
    let deriv = derivative(coeffs);

    let mut zs: Vec<Complex64> = (0..deg)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / deg as f64 + 0.4;
            Complex64::from_polar(bound * 0.7, angle)
        })
        .collect();

    for _ in 0..max_iter {
        let mut max_step = 0.0f64;
        for i in 0..deg {
            let zi = zs[i];
            let p = eval(coeffs, zi);
            let dp = eval(&deriv, zi);
            if p.norm() == 0.0 {
                continue;
            }
            let w = if dp.norm() == 0.0 {
                Complex64::new(tol, tol)
            } else {
                p / dp
            };
            let mut rep = Complex64::new(0.0, 0.0);
            for (j, &zj) in zs.iter().enumerate() {
                if j != i {
                    let diff = zi - zj;
                    if diff.norm_sqr() > 1e-60 {
                        rep += diff.inv();
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - w * rep;
            let step = if denom.norm_sqr() < 1e-60 { w } else { w / denom };
            zs[i] = zi - step;
            max_step = max_step.max(step.norm() / (1.0 + zs[i].norm()));
        }
        if max_step < tol {
            // one extra sweep of plain Newton polish
            for z in zs.iter_mut() {
                let dp = eval(&deriv, *z);
                if dp.norm() > 0.0 {
                    *z -= eval(coeffs, *z) / dp;
                }
            }
            sort_complex(&mut zs);
            return Ok(zs);
        }
    }
    // Multiple roots converge only linearly; accept whatever is consistent.
    let resid_ok = zs
        .iter()
        .all(|&z| eval(coeffs, z).norm() <= 1e-6 * (1.0 + lead.norm() * bound.powi(deg as i32)));
    if resid_ok {
        sort_complex(&mut zs);
        Ok(zs)
    } else {
        Err(Error::Invalid(format!(
            "root iteration did not converge for degree {deg}"
        )))
    }
}

/// Roots of the quadratic `c0 + c1 z + c2 z^2`, numerically stable form.
pub fn quadratic_roots(c0: Complex64, c1: Complex64, c2: Complex64) -> [Complex64; 2] {
    let disc = (c1 * c1 - 4.0 * c2 * c0).sqrt();
    // pick the sign that avoids cancellation in -b -/+ disc
    let q = if (c1 + disc).norm_sqr() >= (c1 - disc).norm_sqr() {
        -0.5 * (c1 + disc)
    } else {
        -0.5 * (c1 - disc)
    };
    if q.norm_sqr() == 0.0 {
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]
    } else {
        [q / c2, c0 / q]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn roots_of_cubic_with_known_zeros() {
        // (z - 1)(z - 2i)(z + 3) = z^3 + (2 - 2i) z^2 + (-3 - 4i) z + 6i
        let coeffs = vec![c(0.0, 6.0), c(-3.0, -4.0), c(2.0, -2.0), c(1.0, 0.0)];
        let rs = roots(&coeffs, 1e-13, 200).unwrap();
        let expected = [c(-3.0, 0.0), c(0.0, 2.0), c(1.0, 0.0)];
        for (r, e) in rs.iter().zip(expected.iter()) {
            assert!((r - e).norm() < 1e-9, "{r} vs {e}");
        }
    }

    #[test]
    fn double_root_resolved() {
        // (z - 1)^2 (z + 1)
        let coeffs = vec![c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)];
        let rs = roots(&coeffs, 1e-12, 400).unwrap();
        assert_eq!(rs.len(), 3);
        let near_one = rs.iter().filter(|r| (*r - c(1.0, 0.0)).norm() < 1e-4).count();
        assert_eq!(near_one, 2);
    }

    #[test]
    fn quadratic_stable() {
        let [r1, r2] = quadratic_roots(c(1e-8, 0.0), c(-1.0, 0.0), c(1.0, 0.0));
        let mut rs = [r1, r2];
        rs.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        // true roots are 1e-8/(1 - 1e-8) and 1 - 1e-8, to first order
        assert!((rs[0].re - 1e-8).abs() < 1e-15);
        assert!((rs[1].re - (1.0 - 1e-8)).abs() < 1e-15);
    }
}
