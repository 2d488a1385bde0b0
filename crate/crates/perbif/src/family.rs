//! The critically marked polynomial family and its evaluation machinery.
//!
//! A parameter is `(c_1, ..., c_{d-2}, a)`; the associated degree-`d`
//! polynomial has critical points `(0, c_1, ..., c_{d-2})` and constant term
//! `a^d`:
//!
//! ```text
//! P(z) = z^d / d + Σ_{j=2}^{d-1} (-1)^{d-j} σ_{d-j}(c) z^j / j + a^d
//! ```
//!
//! where `σ_i` is the elementary symmetric polynomial. The derivative is the
//! monic product over the marked critical points, which is how we evaluate it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parameter of the family plus its degree. `c` holds `d - 2` entries
/// (empty for `d = 2`); the extra marked critical point `c_0 = 0` is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamPointRepr", into = "ParamPointRepr")]
pub struct ParamPoint {
    pub d: u32,
    pub c: Vec<Complex64>,
    pub a: Complex64,
}

/// JSON shape: `{"d": int, "c": [[re, im], ...], "a": [re, im]}`.
#[derive(Serialize, Deserialize)]
struct ParamPointRepr {
    d: u32,
    c: Vec<[f64; 2]>,
    a: [f64; 2],
}

impl From<ParamPoint> for ParamPointRepr {
    fn from(p: ParamPoint) -> Self {
        ParamPointRepr {
            d: p.d,
            c: p.c.iter().map(|z| [z.re, z.im]).collect(),
            a: [p.a.re, p.a.im],
        }
    }
}

impl TryFrom<ParamPointRepr> for ParamPoint {
    type Error = String;
    fn try_from(r: ParamPointRepr) -> std::result::Result<Self, String> {
        let p = ParamPoint {
            d: r.d,
            c: r.c.iter().map(|z| Complex64::new(z[0], z[1])).collect(),
            a: Complex64::new(r.a[0], r.a[1]),
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

impl ParamPoint {
    pub fn new(d: u32, c: Vec<Complex64>, a: Complex64) -> Result<Self> {
        let p = ParamPoint { d, c, a };
        p.validate()?;
        Ok(p)
    }

    /// Degree-2 convenience: the parameter is just `a`.
    pub fn quadratic(a: Complex64) -> Self {
        ParamPoint { d: 2, c: Vec::new(), a }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Invalid(format!("degree must be >= 2, got {}", self.d)));
        }
        if self.c.len() != (self.d - 2) as usize {
            return Err(Error::Invalid(format!(
                "expected {} marked points besides 0, got {}",
                self.d - 2,
                self.c.len()
            )));
        }
        let finite = self.a.is_finite() && self.c.iter().all(|z| z.is_finite());
        if !finite {
            return Err(Error::Invalid("non-finite parameter component".into()));
        }
        Ok(())
    }

    /// Max norm `max(|a|, |c_k|)` of the parameter vector.
    pub fn norm(&self) -> f64 {
        self.c
            .iter()
            .map(|z| z.norm())
            .fold(self.a.norm(), f64::max)
    }

    /// Componentwise scaling `t * (c, a)`.
    pub fn scale(&self, t: Complex64) -> ParamPoint {
        ParamPoint {
            d: self.d,
            c: self.c.iter().map(|z| z * t).collect(),
            a: self.a * t,
        }
    }
}

/// Elementary symmetric polynomials `σ_0..σ_m` of the given values, by the
/// stable product recurrence over `(1 + c_k x)`.
pub fn elementary_symmetric(values: &[Complex64]) -> Vec<Complex64> {
    let mut e = vec![Complex64::new(0.0, 0.0); values.len() + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for (k, &v) in values.iter().enumerate() {
        for i in (1..=k + 1).rev() {
            let prev = e[i - 1];
            e[i] += v * prev;
        }
    }
    e
}

/// Coefficient form of a family member, with its marked critical points.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    pub d: u32,
    /// `d + 1` coefficients, ascending powers.
    pub coeffs: Vec<Complex64>,
    /// `(0, c_1, ..., c_{d-2})`, exactly the roots of the derivative.
    pub critical_points: Vec<Complex64>,
    pub param: ParamPoint,
}

/// Build the coefficient form of the family member at `param`.
pub fn build_map(param: &ParamPoint) -> Result<PolynomialMap> {
    param.validate()?;
    let d = param.d as usize;
    let sigma = elementary_symmetric(&param.c);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); d + 1];
    coeffs[0] = param.a.powu(param.d);
    for j in 2..d {
        let sign = if (d - j) % 2 == 0 { 1.0 } else { -1.0 };
        coeffs[j] = sigma[d - j] * (sign / j as f64);
    }
    coeffs[d] = Complex64::new(1.0 / d as f64, 0.0);
    let mut critical_points = Vec::with_capacity(d - 1);
    critical_points.push(Complex64::new(0.0, 0.0));
    critical_points.extend_from_slice(&param.c);
    Ok(PolynomialMap {
        d: param.d,
        coeffs,
        critical_points,
        param: param.clone(),
    })
}

impl PolynomialMap {
    /// Horner evaluation of `P`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// `P'(z)` as the monic product over the marked critical points.
    pub fn eval_deriv(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for &c in &self.critical_points {
            acc *= z - c;
        }
        acc
    }

    /// `(P(z), P'(z))` in one pass.
    pub fn eval_both(&self, z: Complex64) -> (Complex64, Complex64) {
        (self.eval(z), self.eval_deriv(z))
    }

    /// Natural log of `|P(z)|` valid even when the value overflows `f64`,
    /// given `ln |z|`. For `ln |z|` beyond the monomial cutoff the lower-order
    /// terms are below machine precision and `P(z) ~ z^d / d`.
    pub fn log_abs_image(&self, log_abs_z: f64) -> f64 {
        self.d as f64 * log_abs_z - (self.d as f64).ln()
    }
}

/// Escape test carried by orbit evaluation: an orbit point `z` is declared
/// escaping once `ln |z - center| > ln_radius`. The policy producing these
/// values lives in [`crate::potentials`].
#[derive(Debug, Clone, Copy)]
pub struct EscapeOptions {
    pub center: Complex64,
    pub ln_radius: f64,
}

/// A finite orbit with its accumulated log-derivative.
#[derive(Debug, Clone)]
pub struct OrbitRecord {
    /// Iterates `z_0 .. z_m` (stops at the first escaping point).
    pub points: Vec<Complex64>,
    /// `Σ ln |P'(z_i)|` over the recorded points, excluding the final
    /// escaped point; `-inf` if an iterate hits a critical point exactly.
    pub deriv_log_abs: f64,
    pub escaped: bool,
    pub escape_index: Option<usize>,
}

/// Iterate `P` from `z0` for at most `max_steps`, recording the orbit.
///
/// Magnitudes beyond ~1e100 switch to log tracking internally, so the escape
/// decision itself never overflows; recorded points stay at their last
/// representable value.
pub fn eval_orbit(
    map: &PolynomialMap,
    z0: Complex64,
    max_steps: usize,
    escape: &EscapeOptions,
) -> OrbitRecord {
    let mut points = Vec::with_capacity(max_steps.min(1024) + 1);
    let mut z = z0;
    points.push(z);
    let mut deriv_log_abs = 0.0f64;
    for step in 0..max_steps {
        if (z - escape.center).norm().ln() > escape.ln_radius {
            return OrbitRecord {
                points,
                deriv_log_abs,
                escaped: true,
                escape_index: Some(step),
            };
        }
        let dp = map.eval_deriv(z);
        deriv_log_abs += dp.norm().ln(); // -inf on an exact critical hit
        z = map.eval(z);
        if !z.is_finite() {
            // past any reasonable escape radius; report escape at this step
            return OrbitRecord {
                points,
                deriv_log_abs,
                escaped: true,
                escape_index: Some(step + 1),
            };
        }
        points.push(z);
    }
    OrbitRecord {
        points,
        deriv_log_abs,
        escaped: false,
        escape_index: None,
    }
}

/// Critical value `P(c_i)` for the `i`-th marked critical point (`c_0 = 0`).
/// Homogeneous of degree `d` in the parameter.
pub fn critical_value(param: &ParamPoint, i: usize) -> Result<Complex64> {
    if i > (param.d - 2) as usize {
        return Err(Error::Invalid(format!(
            "critical index {i} out of range for degree {}",
            param.d
        )));
    }
    let map = build_map(param)?;
    Ok(map.eval(map.critical_points[i]))
}

/// Barycenter of the marked critical points, `(Σ c_k) / (d - 1)` with `c_0 = 0`.
pub fn critical_barycenter(param: &ParamPoint) -> Complex64 {
    let sum: Complex64 = param.c.iter().sum();
    sum / (param.d as f64 - 1.0)
}

/// Critical values of the max-norm-normalized parameter, `(P̂(ĉ_0), ..., P̂(ĉ_{d-2}))`
/// with `λ̂ = λ / ‖λ‖`. Component `i` near zero means the parameter points at
/// the `i`-th degenerate direction at infinity. Scaling invariant.
pub fn normalized_critical_values(param: &ParamPoint) -> Result<Vec<Complex64>> {
    let norm = param.norm();
    if norm == 0.0 {
        return Err(Error::Invalid(
            "cannot normalize the zero parameter".into(),
        ));
    }
    let hat = param.scale(Complex64::new(1.0 / norm, 0.0));
    let map = build_map(&hat)?;
    Ok(map
        .critical_points
        .iter()
        .map(|&c| map.eval(c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rand_c(rng: &mut ChaCha8Rng, scale: f64) -> Complex64 {
        c64(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn quadratic_coefficients() {
        let a = c64(0.3, -0.7);
        let map = build_map(&ParamPoint::quadratic(a)).unwrap();
        assert_eq!(map.coeffs.len(), 3);
        assert!((map.coeffs[0] - a * a).norm() < 1e-15);
        assert_eq!(map.coeffs[1], c64(0.0, 0.0));
        assert!((map.coeffs[2] - c64(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn cubic_coefficients() {
        let c1 = c64(1.5, 0.25);
        let a = c64(-0.4, 0.1);
        let p = ParamPoint::new(3, vec![c1], a).unwrap();
        let map = build_map(&p).unwrap();
        // coeffs = [a^3, 0, -c1/2, 1/3]
        assert!((map.coeffs[0] - a * a * a).norm() < 1e-15);
        assert_eq!(map.coeffs[1], c64(0.0, 0.0));
        assert!((map.coeffs[2] + c1 * 0.5).norm() < 1e-15);
        assert!((map.coeffs[3] - c64(1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_cubic_is_pure_power() {
        let p = ParamPoint::new(3, vec![c64(0.0, 0.0)], c64(0.0, 0.0)).unwrap();
        let map = build_map(&p).unwrap();
        assert!((map.eval(c64(2.0, 0.0)) - c64(8.0 / 3.0, 0.0)).norm() < 1e-15);
        assert_eq!(map.critical_points, vec![c64(0.0, 0.0), c64(0.0, 0.0)]);
    }

    #[test]
    fn derivative_roots_match_marked_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let d = rng.random_range(2u32..=5);
            let cs: Vec<Complex64> = (0..d - 2).map(|_| rand_c(&mut rng, 5.0)).collect();
            let p = ParamPoint::new(d, cs, rand_c(&mut rng, 5.0)).unwrap();
            let map = build_map(&p).unwrap();
            // derivative coefficients of the Horner form
            let deriv = poly::derivative(&map.coeffs);
            let mut roots = poly::roots(&deriv, 1e-13, 400).unwrap();
            let mut expected = map.critical_points.clone();
            crate::util::sort_complex(&mut expected);
            crate::util::sort_complex(&mut roots);
            for (r, e) in roots.iter().zip(expected.iter()) {
                assert!((r - e).norm() < 1e-8, "d={d}: {r} vs {e}");
            }
        }
    }

    #[test]
    fn critical_value_examples() {
        let p = ParamPoint::new(3, vec![c64(1.0, 0.0)], c64(1.0, 0.0)).unwrap();
        // value at c_0 = 0 is a^3
        assert!((critical_value(&p, 0).unwrap() - c64(1.0, 0.0)).norm() < 1e-15);
        // value at c_1 is a^3 - c1^3/6
        assert!((critical_value(&p, 1).unwrap() - c64(5.0 / 6.0, 0.0)).norm() < 1e-15);
        let zero = ParamPoint::new(3, vec![c64(0.0, 0.0)], c64(0.0, 0.0)).unwrap();
        assert_eq!(critical_value(&zero, 1).unwrap(), c64(0.0, 0.0));
        assert!(critical_value(&p, 2).is_err());
    }

    #[test]
    fn critical_value_is_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = rng.random_range(2u32..=4);
            let cs: Vec<Complex64> = (0..d - 2).map(|_| rand_c(&mut rng, 2.0)).collect();
            let p = ParamPoint::new(d, cs, rand_c(&mut rng, 2.0)).unwrap();
            let t = rand_c(&mut rng, 1.5);
            for i in 0..=(d - 2) as usize {
                let lhs = critical_value(&p.scale(t), i).unwrap();
                let rhs = t.powu(d) * critical_value(&p, i).unwrap();
                let bound = 1e-10 * t.norm().powi(d as i32) * (1.0 + p.norm().powi(d as i32));
                assert!((lhs - rhs).norm() <= bound, "d={d} i={i}");
            }
        }
    }

    #[test]
    fn barycenter_examples() {
        assert_eq!(
            critical_barycenter(&ParamPoint::quadratic(c64(3.0, 1.0))),
            c64(0.0, 0.0)
        );
        let p = ParamPoint::new(3, vec![c64(2.0, 0.0)], c64(0.0, 0.0)).unwrap();
        assert!((critical_barycenter(&p) - c64(1.0, 0.0)).norm() < 1e-15);
        let p = ParamPoint::new(4, vec![c64(1.0, 0.0), c64(-1.0, 0.0)], c64(0.0, 0.0)).unwrap();
        assert!(critical_barycenter(&p).norm() < 1e-15);
    }

    #[test]
    fn normalized_critical_values_on_degenerate_ray() {
        // On the ray a^3 = c1^3 / 6 the second component vanishes.
        let r = 1000.0f64;
        let a = (r.powi(3) / 6.0).cbrt();
        let p = ParamPoint::new(3, vec![c64(r, 0.0)], c64(a, 0.0)).unwrap();
        let vals = normalized_critical_values(&p).unwrap();
        assert!(vals[1].norm() <= 1e-12, "{}", vals[1].norm());
    }

    #[test]
    fn normalized_critical_values_quadratic() {
        let p = ParamPoint::quadratic(c64(1000.0, 0.0));
        let vals = normalized_critical_values(&p).unwrap();
        assert!((vals[0] - c64(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn normalized_critical_values_scale_invariant() {
        let p = ParamPoint::new(3, vec![c64(0.3, 0.8)], c64(-0.2, 0.5)).unwrap();
        let v1 = normalized_critical_values(&p).unwrap();
        let v2 = normalized_critical_values(&p.scale(c64(2.0, 0.0))).unwrap();
        for (x, y) in v1.iter().zip(v2.iter()) {
            assert!((x - y).norm() < 1e-13);
        }
        assert!(normalized_critical_values(&ParamPoint::quadratic(c64(0.0, 0.0))).is_err());
    }

    #[test]
    fn degenerate_direction_separation_for_cubics() {
        // On the max-norm unit sphere of (c1, a) the two normalized critical
        // values never vanish simultaneously; the observed floor is ~1/12.
        let mut worst = f64::INFINITY;
        let steps = 50;
        for face in 0..2 {
            for it in 0..steps {
                for ir in 1..=10 {
                    for ip in 0..steps {
                        let theta = 2.0 * std::f64::consts::PI * it as f64 / steps as f64;
                        let phi = 2.0 * std::f64::consts::PI * ip as f64 / steps as f64;
                        let r = ir as f64 / 10.0;
                        let (c1, a) = if face == 0 {
                            (Complex64::from_polar(1.0, theta), Complex64::from_polar(r, phi))
                        } else {
                            (Complex64::from_polar(r, theta), Complex64::from_polar(1.0, phi))
                        };
                        let p = ParamPoint::new(3, vec![c1], a).unwrap();
                        let vals = normalized_critical_values(&p).unwrap();
                        let m = vals[0].norm().max(vals[1].norm());
                        worst = worst.min(m);
                    }
                }
            }
        }
        assert!(worst > 0.05, "min over sphere grid was {worst}");
    }

    #[test]
    fn orbit_contracts_inside_quadratic_disk() {
        let map = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        let esc = EscapeOptions { center: c64(0.0, 0.0), ln_radius: 3.0 + 4.0f64.ln() };
        let orbit = eval_orbit(&map, c64(1.0, 0.0), 5, &esc);
        assert!(!orbit.escaped);
        assert!((orbit.points[1] - c64(0.5, 0.0)).norm() < 1e-15);
        assert!((orbit.points[2] - c64(0.125, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn orbit_escapes_outside_quadratic_disk() {
        let map = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        // radius chosen so the doubling of log|z| crosses it quickly
        let esc = EscapeOptions { center: c64(0.0, 0.0), ln_radius: 3.0 };
        let orbit = eval_orbit(&map, c64(4.0, 0.0), 5, &esc);
        assert!(orbit.escaped);
        assert!(orbit.escape_index.unwrap() <= 5);
    }

    #[test]
    fn orbit_fixed_point_is_constant() {
        let map = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        let esc = EscapeOptions { center: c64(0.0, 0.0), ln_radius: 10.0 };
        let orbit = eval_orbit(&map, c64(2.0, 0.0), 6, &esc);
        assert!(!orbit.escaped);
        for p in &orbit.points {
            assert!((p - c64(2.0, 0.0)).norm() < 1e-12);
        }
        // P' = z along the orbit, so the accumulated log-derivative is 6 ln 2
        assert!((orbit.deriv_log_abs - 6.0 * 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn param_point_json_round_trip() {
        let p = ParamPoint::new(3, vec![c64(0.25, -1.5)], c64(0.5, 2.0)).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"d\":3"));
        assert!(s.contains("\"c\":[[0.25,-1.5]]"));
        let back: ParamPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        // malformed: wrong c length for the degree
        let bad = r#"{"d": 3, "c": [], "a": [0.0, 0.0]}"#;
        assert!(serde_json::from_str::<ParamPoint>(bad).is_err());
    }
}
