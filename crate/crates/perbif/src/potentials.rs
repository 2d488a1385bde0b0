//! Potentials attached to a family member: the log-modulus of the multiplier
//! characteristic polynomial and its level potentials, the escape-rate Green
//! function, and Lyapunov exponent estimators.
//!
//! Conventions. At level `n` the multiplier spectrum `{w_j}` has one entry per
//! contributing cycle; the characteristic polynomial is `Π_j (w - w_j)` and
//! all level potentials carry the `d^{-n}` scaling. The Green function is
//! `g(z) = lim d^{-m} ln⁺ |P^m(z)|`, zero exactly on bounded orbits.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith;
use crate::cycles::{CycleSolver, MultiplierSpectrum, SolverOptions};
use crate::error::{Error, Result};
use crate::family::{EscapeOptions, PolynomialMap};
use crate::poly;
use crate::util::{cmp_complex, split_seed};

/// Overflow-safe representation of a nonzero complex number by
/// `(ln |v|, arg v)`. The zero value is `log_abs = -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogComplex {
    pub log_abs: f64,
    /// Principal argument in `(-pi, pi]`.
    pub arg: f64,
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return 0.0;
    }
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

impl LogComplex {
    pub fn new(log_abs: f64, arg: f64) -> Self {
        LogComplex { log_abs, arg: wrap_angle(arg) }
    }

    pub fn from_value(v: Complex64) -> Self {
        LogComplex { log_abs: v.norm().ln(), arg: v.arg() }
    }

    /// The represented value; overflows to infinity past f64 range.
    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.log_abs.exp(), self.arg)
    }

    /// Log of a product is the sum of logs.
    pub fn mul(&self, other: &LogComplex) -> LogComplex {
        LogComplex::new(self.log_abs + other.log_abs, self.arg + other.arg)
    }
}

/// Log-modulus and argument of `Π_j (w - w_j)^{m_j}` over the spectrum.
/// `log_abs = -inf` exactly when `w` coincides with a spectrum entry.
pub fn char_poly_log(spectrum: &MultiplierSpectrum, w: Complex64) -> LogComplex {
    let mut log_abs = 0.0f64;
    let mut arg = 0.0f64;
    for e in &spectrum.entries {
        let v = w - e.value;
        let m = e.multiplicity as f64;
        log_abs += m * v.norm().ln();
        arg += m * v.arg();
    }
    LogComplex::new(log_abs, arg)
}

fn level_scale(spectrum: &MultiplierSpectrum) -> f64 {
    (spectrum.d as f64).powi(-(spectrum.n as i32))
}

/// Level potential `d^{-n} ln |Π (w - w_j)|`; `-inf` on the spectrum.
pub fn level_potential(spectrum: &MultiplierSpectrum, w: Complex64) -> f64 {
    level_scale(spectrum) * char_poly_log(spectrum, w).log_abs
}

/// Truncated level potential `d^{-n} Σ ln⁺ |w - w_j|`; nonnegative and
/// dominating [`level_potential`] pointwise.
pub fn level_potential_plus(spectrum: &MultiplierSpectrum, w: Complex64) -> f64 {
    let s: f64 = spectrum
        .entries
        .iter()
        .map(|e| e.multiplicity as f64 * (w - e.value).norm().ln().max(0.0))
        .sum();
    level_scale(spectrum) * s
}

/// Circular average of the level potential over `|w| = r`, in closed form:
/// `d^{-n} Σ ln max(|w_j|, r)`. Never numerically integrated.
pub fn level_potential_radial(spectrum: &MultiplierSpectrum, r: f64) -> f64 {
    let s: f64 = spectrum
        .entries
        .iter()
        .map(|e| e.multiplicity as f64 * e.value.norm().max(r).ln())
        .sum();
    level_scale(spectrum) * s
}

/// Escape geometry and iteration budget for Green-function evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenOptions {
    /// Iteration budget before an orbit must either escape or certify bounded.
    pub depth: usize,
    /// Additive slack standing in for the O(1) of the norm estimate of the
    /// critical escape rate; calibrated, not derived.
    pub o1_slack: f64,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions { depth: 512, o1_slack: 3.0 }
    }
}

/// Upper estimate for the maximal critical escape rate at this parameter:
/// `ln⁺ ‖(c, a)‖ + slack`.
pub fn escape_rate_bound(map: &PolynomialMap, opts: &GreenOptions) -> f64 {
    map.param.norm().ln().max(0.0) + opts.o1_slack
}

/// Escape test for orbit points: `z` escapes once `ln |z - δ| - ln 4`
/// exceeds the critical escape-rate bound, `δ` the critical barycenter.
pub fn escape_options(map: &PolynomialMap, opts: &GreenOptions) -> EscapeOptions {
    EscapeOptions {
        center: crate::family::critical_barycenter(&map.param),
        ln_radius: escape_rate_bound(map, opts) + 4.0f64.ln(),
    }
}

/// Radius of a disk (about the origin) containing every bounded orbit, hence
/// every periodic point.
pub fn orbit_bound(map: &PolynomialMap, opts: &GreenOptions) -> f64 {
    let esc = escape_options(map, opts);
    esc.center.norm() + esc.ln_radius.exp()
}

/// Escape-rate Green function at `z`: `lim d^{-m} ln⁺ |P^m(z)|`.
///
/// Returns 0 exactly when the orbit is certified bounded (contraction budget
/// of 60 nats, or a detected periodic return); `Err(Undecided)` when neither
/// certificate fires within `opts.depth` iterations. For escaping orbits the
/// limit is taken once the iterate clears 1e15, where the monomial tail
/// correction is below 1e-12.
pub fn green(map: &PolynomialMap, z: Complex64, opts: &GreenOptions) -> Result<f64> {
    let esc = escape_options(map, opts);
    let d = map.d as f64;
    let mut cur = z;
    let mut snapshot = z;
    let mut next_snapshot = 1usize;
    let mut escape_at: Option<usize> = None;
    for m in 0..opts.depth {
        if (cur - esc.center).norm().ln() > esc.ln_radius {
            escape_at = Some(m);
            break;
        }
        cur = map.eval(cur);
        if !cur.is_finite() {
            escape_at = Some(m + 1);
            break;
        }
        // Brent-style periodic return check certifies boundedness early.
        if (cur - snapshot).norm() <= 1e-12 * (1.0 + snapshot.norm()) {
            return Ok(0.0);
        }
        if m + 1 == next_snapshot {
            snapshot = cur;
            next_snapshot *= 2;
        }
    }
    let Some(m0) = escape_at else {
        return if opts.depth as f64 * d.ln() >= 60.0 {
            Ok(0.0)
        } else {
            Err(Error::Undecided { depth: opts.depth })
        };
    };
    // Escaped: push the iterate past 1e15 and read off the limit with the
    // monomial tail correction g = d^{-m} (ln|z_m| - ln d / (d - 1)).
    let big_ln = 34.5f64.min(600.0 / (d + 1.0));
    let mut m = m0;
    let mut ln_abs = cur.norm().ln();
    let mut guard = 0;
    while ln_abs < big_ln {
        if ln_abs < 80.0 {
            cur = map.eval(cur);
            ln_abs = cur.norm().ln();
        } else {
            // log-tracked monomial regime
            ln_abs = map.log_abs_image(ln_abs);
        }
        m += 1;
        guard += 1;
        if guard > 4 * opts.depth + 64 {
            return Err(Error::Undecided { depth: opts.depth });
        }
    }
    let g = d.powi(-(m as i32)) * (ln_abs - d.ln() / (d - 1.0));
    Ok(g.max(0.0))
}

/// Maximal Green value over the marked critical points; the boundedness
/// certificate for the whole parameter.
pub fn green_cap(map: &PolynomialMap, opts: &GreenOptions) -> Result<f64> {
    let mut cap = 0.0f64;
    for &c in &map.critical_points {
        cap = cap.max(green(map, c, opts)?);
    }
    Ok(cap)
}

/// Which estimator produced a Lyapunov value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    /// Log-multiplier sum over repelling cycles of one period.
    RepellingCycles,
    /// Monte-Carlo integral of `ln |P'|` against the equilibrium measure by
    /// backward-orbit sampling.
    EquilibriumMeasure,
    /// `ln d` plus the Green values of the marked critical points.
    CriticalGreen,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub method: LyapunovMethod,
    /// Period for the cycle estimator, sample count for the Monte-Carlo one.
    pub order: u32,
    pub error_hint: f64,
}

/// Lyapunov exponent from the repelling cycles of exact period `n`:
/// `d^{-n} Σ ln |ρ|` over repelling exact-`n` cycles (with multiplicity).
pub fn lyapunov_repelling(
    map: &PolynomialMap,
    n: u32,
    opts: &SolverOptions,
) -> Result<LyapunovEstimate> {
    let mut solver = CycleSolver::new(map, opts.clone());
    let records = solver.classify(n)?;
    let dn = (map.d as f64).powi(n as i32);
    let mut acc = 0.0f64;
    for rec in &records {
        if rec.exact_period == n {
            let r = rec.multiplier.norm();
            if r > 1.0 {
                acc += rec.multiplicity as f64 * r.ln();
            }
        }
    }
    let nu = arith::dynatomic_count(map.d, n)?.nu as f64;
    // deficit of the level count plus a crude neutral-band allowance
    let hint = 2.0 * (map.d as f64).ln() * (1.0 - nu / dn).abs() + (n as f64) / dn;
    Ok(LyapunovEstimate {
        value: acc / dn,
        method: LyapunovMethod::RepellingCycles,
        order: n,
        error_hint: hint,
    })
}

/// One backward chain: pull back `depth` times choosing uniformly among the
/// `d` preimages, averaging `ln |P'|` over the post-burn-in tail.
fn backward_chain(
    map: &PolynomialMap,
    start: Complex64,
    depth: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = map.d as usize;
    let burn = depth / 2;
    let mut cur = start;
    let mut acc = 0.0f64;
    let mut cnt = 0u32;
    let mut coeffs = map.coeffs.clone();
    for step in 0..depth {
        let pre = if d == 2 {
            // quadratic closed form: c2 z^2 + c0 = target
            let t = (cur - map.coeffs[0]) / map.coeffs[2];
            let r = t.sqrt();
            vec![-r, r]
        } else {
            coeffs.copy_from_slice(&map.coeffs);
            coeffs[0] -= cur;
            let mut rs = poly::roots(&coeffs, 1e-12, 300)
                .map_err(|_| Error::PreimageStall { step })?;
            if rs.len() != d {
                return Err(Error::PreimageStall { step });
            }
            rs.sort_by(cmp_complex);
            rs
        };
        cur = pre[rng.random_range(0..d)];
        if !cur.is_finite() {
            return Err(Error::PreimageStall { step });
        }
        if step >= burn {
            let dl = map.eval_deriv(cur).norm().ln();
            if dl.is_finite() {
                acc += dl;
                cnt += 1;
            }
        }
    }
    if cnt == 0 {
        return Err(Error::PreimageStall { step: depth });
    }
    Ok(acc / cnt as f64)
}

/// Monte-Carlo Lyapunov estimate by backward-orbit sampling of the
/// equilibrium measure. Deterministic for a given seed regardless of
/// thread scheduling.
pub fn lyapunov_measure(
    map: &PolynomialMap,
    samples: u32,
    depth: u32,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if samples < 1 || depth < 1 {
        return Err(Error::Invalid("samples and depth must be >= 1".into()));
    }
    let gopts = GreenOptions::default();
    let esc = escape_options(map, &gopts);
    let start = esc.center + Complex64::from_polar(1.25 * esc.ln_radius.exp(), 0.8);
    let run = |i: u32| backward_chain(map, start, depth as usize, split_seed(seed, i as u64));
    let chains: Vec<Result<f64>> = if samples >= 256 {
        (0..samples).into_par_iter().map(run).collect()
    } else {
        (0..samples).map(run).collect()
    };
    let mut vals = Vec::with_capacity(samples as usize);
    for c in chains {
        vals.push(c?);
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (vals.len().max(2) - 1) as f64;
    let stderr = (var / vals.len() as f64).sqrt();
    Ok(LyapunovEstimate {
        value: mean,
        method: LyapunovMethod::EquilibriumMeasure,
        order: samples,
        error_hint: stderr.max(1e-4),
    })
}

/// Lyapunov exponent through the critical Green values:
/// `L = ln d + Σ_k g(c_k)` over the marked critical points.
pub fn lyapunov_critical_green(
    map: &PolynomialMap,
    opts: &GreenOptions,
) -> Result<LyapunovEstimate> {
    let mut acc = (map.d as f64).ln();
    for &c in &map.critical_points {
        acc += green(map, c, opts)?;
    }
    Ok(LyapunovEstimate {
        value: acc,
        method: LyapunovMethod::CriticalGreen,
        order: opts.depth as u32,
        error_hint: 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::SpectrumEntry;
    use crate::family::{build_map, ParamPoint};

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spectrum(d: u32, n: u32, vals: &[(Complex64, u32)]) -> MultiplierSpectrum {
        MultiplierSpectrum {
            d,
            n,
            entries: vals
                .iter()
                .map(|&(value, multiplicity)| SpectrumEntry { value, multiplicity })
                .collect(),
            source: ParamPoint::quadratic(c64(0.0, 0.0)),
            generic: true,
        }
    }

    #[test]
    fn char_poly_log_single_factor() {
        let s = spectrum(2, 2, &[(c64(4.0, 0.0), 1)]);
        let lp = char_poly_log(&s, c64(0.0, 0.0));
        assert!((lp.log_abs - 4.0f64.ln()).abs() < 1e-15);
        assert!((lp.arg - std::f64::consts::PI).abs() < 1e-15);
        let at_root = char_poly_log(&s, c64(4.0, 0.0));
        assert!(at_root.log_abs.is_infinite() && at_root.log_abs < 0.0);
    }

    #[test]
    fn char_poly_log_two_factors() {
        let s = spectrum(2, 1, &[(c64(0.0, 0.0), 1), (c64(2.0, 0.0), 1)]);
        // (1 - 0)(1 - 2) = -1
        let lp = char_poly_log(&s, c64(1.0, 0.0));
        assert!(lp.log_abs.abs() < 1e-15);
    }

    #[test]
    fn level_potential_examples() {
        let s2 = spectrum(2, 2, &[(c64(4.0, 0.0), 1)]);
        assert!((level_potential(&s2, c64(1.0, 0.0)) - 0.25 * 3.0f64.ln()).abs() < 1e-15);
        assert!((level_potential(&s2, c64(0.0, 0.0)) - 0.25 * 4.0f64.ln()).abs() < 1e-15);
        assert_eq!(level_potential(&s2, c64(4.0, 0.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn level_potential_plus_examples() {
        let s2 = spectrum(2, 2, &[(c64(4.0, 0.0), 1)]);
        assert!((level_potential_plus(&s2, c64(1.0, 0.0)) - 0.25 * 3.0f64.ln()).abs() < 1e-15);
        let s1 = spectrum(2, 1, &[(c64(0.0, 0.0), 1), (c64(2.0, 0.0), 1)]);
        assert!((level_potential_plus(&s1, c64(0.0, 0.0)) - 0.5 * 2.0f64.ln()).abs() < 1e-15);
        // everything within distance 1: truncation kills every term
        let s = spectrum(2, 1, &[(c64(0.3, 0.0), 1), (c64(-0.2, 0.1), 1)]);
        assert_eq!(level_potential_plus(&s, c64(0.0, 0.0)), 0.0);
    }

    #[test]
    fn radial_potential_examples() {
        let s2 = spectrum(2, 2, &[(c64(4.0, 0.0), 1)]);
        assert!((level_potential_radial(&s2, 1.0) - 0.25 * 4.0f64.ln()).abs() < 1e-15);
        assert!((level_potential_radial(&s2, 10.0) - 0.25 * 10.0f64.ln()).abs() < 1e-15);
        // r = 0 recovers the potential at w = 0 when no entry vanishes
        assert!(
            (level_potential_radial(&s2, 0.0) - level_potential(&s2, c64(0.0, 0.0))).abs()
                < 1e-15
        );
    }

    #[test]
    fn potential_dominated_by_plus() {
        let s = spectrum(2, 3, &[(c64(0.5, 1.0), 2), (c64(-3.0, 0.2), 1), (c64(0.9, 0.0), 1)]);
        for &w in &[c64(0.0, 0.0), c64(1.0, 1.0), c64(-2.0, 0.5), c64(3.0, -4.0)] {
            assert!(level_potential(&s, w) <= level_potential_plus(&s, w) + 1e-15);
        }
    }

    #[test]
    fn green_closed_form_for_pure_quadratic() {
        let map = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        let opts = GreenOptions::default();
        // g(z) = ln|z| - ln 2 outside the invariant disk of radius 2
        let g = green(&map, c64(4.0, 0.0), &opts).unwrap();
        assert!((g - 2.0f64.ln()).abs() < 1e-12, "{g}");
        // inside the filled set
        assert_eq!(green(&map, c64(1.0, 0.0), &opts).unwrap(), 0.0);
        // functional equation at an escaping point
        let gz = green(&map, c64(4.0, 0.0), &opts).unwrap();
        let gpz = green(&map, map.eval(c64(4.0, 0.0)), &opts).unwrap();
        assert!((gpz - 2.0 * gz).abs() < 1e-8);
    }

    #[test]
    fn green_cap_examples() {
        let opts = GreenOptions::default();
        let m0 = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        assert_eq!(green_cap(&m0, &opts).unwrap(), 0.0);
        let m2 = build_map(&ParamPoint::quadratic(c64(2.0, 0.0))).unwrap();
        let cap = green_cap(&m2, &opts).unwrap();
        assert!(cap > 0.0);
        assert!((cap - 2.0f64.ln()).abs() <= 3.0, "cap {cap} vs ln 2");
        let cubic0 =
            build_map(&ParamPoint::new(3, vec![c64(0.0, 0.0)], c64(0.0, 0.0)).unwrap()).unwrap();
        assert_eq!(green_cap(&cubic0, &opts).unwrap(), 0.0);
    }

    #[test]
    fn green_norm_bound_sampled() {
        // max(g(z), G) >= ln|z - δ| - ln 4 on random parameters and points.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let opts = GreenOptions { depth: 2048, ..Default::default() };
        for _ in 0..60 {
            let d = rng.random_range(2u32..=3);
            let cs: Vec<Complex64> = (0..d - 2)
                .map(|_| c64(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let p = ParamPoint::new(
                d,
                cs,
                c64(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            )
            .unwrap();
            let map = build_map(&p).unwrap();
            let delta = crate::family::critical_barycenter(&p);
            let cap = green_cap(&map, &opts).unwrap();
            for _ in 0..10 {
                let z = c64(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
                let g = green(&map, z, &opts).unwrap();
                let rhs = (z - delta).norm().ln() - 4.0f64.ln();
                assert!(
                    g.max(cap) >= rhs - 1e-6,
                    "bound violated: g={g} cap={cap} rhs={rhs}"
                );
            }
        }
    }

    #[test]
    fn measure_estimator_on_power_map() {
        // equilibrium measure of z^2/2 sits on |z| = 2 where ln|P'| = ln 2
        let map = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        let est = lyapunov_measure(&map, 2000, 30, 7).unwrap();
        assert!((est.value - 2.0f64.ln()).abs() < 0.01, "{}", est.value);
        // zero-variance case: the hint collapses to the floor
        assert!(est.error_hint <= 1e-3);
    }

    #[test]
    fn measure_estimator_deterministic() {
        let map = build_map(&ParamPoint::quadratic(c64(0.4, 0.3))).unwrap();
        let a = lyapunov_measure(&map, 512, 20, 99).unwrap();
        let b = lyapunov_measure(&map, 512, 20, 99).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn critical_green_estimator_examples() {
        let opts = GreenOptions::default();
        let m0 = build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap();
        let est = lyapunov_critical_green(&m0, &opts).unwrap();
        assert!((est.value - 2.0f64.ln()).abs() < 1e-12);
        let cubic =
            build_map(&ParamPoint::new(3, vec![c64(0.0, 0.0)], c64(0.0, 0.0)).unwrap()).unwrap();
        let est3 = lyapunov_critical_green(&cubic, &opts).unwrap();
        assert!((est3.value - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..=20 {
            let a = 0.7 + k as f64 * std::f64::consts::TAU;
            assert!((wrap_angle(a) - 0.7).abs() < 1e-9);
        }
        assert!(wrap_angle(std::f64::consts::PI) > 0.0);
        assert!(wrap_angle(-std::f64::consts::PI) > 0.0);
    }
}
