//! Small shared helpers: deterministic seed splitting and complex ordering.

use num_complex::Complex64;

/// SplitMix64 step, used to derive independent stream seeds from a base seed
/// and an index so parallel work stays reproducible regardless of scheduling.
pub(crate) fn split_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lexicographic (re, im) ordering; total on non-NaN inputs.
pub(crate) fn cmp_complex(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    a.re.partial_cmp(&b.re)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
}

pub(crate) fn sort_complex(v: &mut [Complex64]) {
    v.sort_by(cmp_complex);
}

/// Total argument change of a function along a circle, by adaptive sampling.
///
/// `eval_arg` returns the argument of the function at a point, or `None` on
/// an exact zero. Segments whose wrapped argument jump exceeds pi/2 are
/// bisected until resolved; returns `None` if the evaluation budget runs out
/// (a root too close to the contour) so callers can perturb and retry.
pub(crate) fn winding_arg_total(
    eval_arg: &mut dyn FnMut(Complex64) -> Option<f64>,
    center: Complex64,
    radius: f64,
    max_evals: usize,
) -> Option<f64> {
    let wrap = crate::potentials::wrap_angle;
    let point = |theta: f64| center + Complex64::from_polar(radius, theta);
    let initial = 16usize;
    let mut evals = 0usize;
    let mut args = Vec::with_capacity(initial + 1);
    for i in 0..=initial {
        let theta = std::f64::consts::TAU * i as f64 / initial as f64;
        args.push((theta, eval_arg(point(theta))?));
        evals += 1;
    }
    let mut total = 0.0f64;
    // stack of segments still to resolve
    let mut stack: Vec<(f64, f64, f64, f64)> = args
        .windows(2)
        .map(|w| (w[0].0, w[0].1, w[1].0, w[1].1))
        .collect();
    while let Some((t0, a0, t1, a1)) = stack.pop() {
        let da = wrap(a1 - a0);
        if da.abs() <= std::f64::consts::FRAC_PI_2 && (t1 - t0) < 1.0 {
            total += da;
            continue;
        }
        if evals >= max_evals {
            return None;
        }
        let tm = 0.5 * (t0 + t1);
        let am = eval_arg(point(tm))?;
        evals += 1;
        stack.push((t0, a0, tm, am));
        stack.push((tm, am, t1, a1));
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_seed_varies() {
        let a = split_seed(7, 0);
        let b = split_seed(7, 1);
        let c = split_seed(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // stable across calls
        assert_eq!(a, split_seed(7, 0));
    }

    #[test]
    fn complex_order_is_lexicographic() {
        let mut v = vec![
            Complex64::new(1.0, -1.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(1.0, -2.0),
        ];
        sort_complex(&mut v);
        assert_eq!(v[0], Complex64::new(0.0, 2.0));
        assert_eq!(v[1], Complex64::new(1.0, -2.0));
        assert_eq!(v[2], Complex64::new(1.0, -1.0));
    }
}
