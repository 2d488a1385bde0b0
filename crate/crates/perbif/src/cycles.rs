//! All periodic points of one family member, their grouping into cycles with
//! exact periods and multipliers, and the level-`n` multiplier spectrum.
//!
//! Level `n` means the `d^n` solutions of `P^n(z) = z` counted with
//! multiplicity. They are found by Newton's method on `F(z) = P^n(z) - z`
//! evaluated **by iteration** — the coefficients of `P^n` grow doubly
//! exponentially and are never expanded. Launches start from circles
//! enclosing every periodic point, alternating with backward-orbit samples
//! which land near the Julia set where the roots concentrate. A solve is
//! accepted only when the located roots account for exactly `d^n` points
//! with multiplicity; small shortfalls are resolved by argument-principle
//! winding counts around suspect clusters.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith;
use crate::error::{Error, Result};
use crate::family::{ParamPoint, PolynomialMap};
use crate::poly;
use crate::potentials::{escape_options, GreenOptions, LogComplex};
use crate::util::{cmp_complex, split_seed, winding_arg_total};

/// Tunables of the periodic-point search. Deserializable from run configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Refuse levels with `d^n` beyond this.
    pub max_degree: u64,
    /// Roots closer than this are merged into one cluster.
    pub cluster_tol: f64,
    /// Residual acceptance scale. A root is accepted when
    /// `|F| <= residual_tol * max(1, |F'| (1 + |z|))`; the derivative factor
    /// keeps strongly repelling roots certifiable, where `|F|` at a
    /// machine-accurate root is necessarily of order `eps * |F'|`.
    pub residual_tol: f64,
    /// Tolerance for recognizing a lower-period multiplier as a primitive
    /// root of unity when flagging non-generic spectra.
    pub root_of_unity_tol: f64,
    /// Restart rounds before giving up with an incompleteness error.
    pub max_rounds: u32,
    /// Include the fixed point at infinity (multiplier 0) in level-1 spectra.
    pub include_infinity: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_degree: 1 << 14,
            cluster_tol: 1e-7,
            residual_tol: 1e-9,
            root_of_unity_tol: 1e-6,
            max_rounds: 16,
            include_infinity: false,
        }
    }
}

/// One distinct periodic point at some level, with its multiplicity as a
/// root of `P^n(z) - z` and the iterate derivative `(P^n)'(z)`.
///
/// `extent` is the scatter radius of the Newton limits that were merged into
/// this cluster. For simple roots it is at rounding level; near a root of
/// multiplicity `q` the evaluation noise floor makes the position uncertain
/// to roughly `eps^(1/q)`, and `extent` records that honestly.
#[derive(Debug, Clone, Copy)]
pub struct RootCluster {
    pub z: Complex64,
    pub multiplicity: u32,
    pub iterate_deriv: Complex64,
    pub extent: f64,
}

/// The complete level-`n` root set, sorted by (re, im).
#[derive(Debug, Clone)]
pub struct LevelRoots {
    pub n: u32,
    pub clusters: Vec<RootCluster>,
    /// Always `d^n`.
    pub total: u64,
}

impl LevelRoots {
    /// The cluster nearest `z` within `tol`, if any.
    pub fn find(&self, z: Complex64, tol: f64) -> Option<&RootCluster> {
        let lo = self
            .clusters
            .partition_point(|c| c.z.re < z.re - tol);
        let mut best: Option<(&RootCluster, f64)> = None;
        for c in &self.clusters[lo..] {
            if c.z.re > z.re + tol {
                break;
            }
            let d = (c.z - z).norm();
            if d <= tol && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((c, d));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Multiplicity at `z` (0 if absent), matching within `tol`.
    pub fn multiplicity_at(&self, z: Complex64, tol: f64) -> u32 {
        self.find(z, tol).map_or(0, |c| c.multiplicity)
    }
}

/// A cycle: representative point, exact period, the full orbit, the cycle
/// multiplier `Π P'(z_i)`, and its multiplicity as a root cluster.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub representative: Complex64,
    pub exact_period: u32,
    pub points: Vec<Complex64>,
    pub multiplier: Complex64,
    pub multiplicity: u32,
}

/// One spectrum entry: a multiplier datum with its cycle-level multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub value: Complex64,
    pub multiplicity: u32,
}

/// The level-`n` multiplier multiset: one entry per contributing cycle.
/// Exact-period-`n` cycles contribute their multiplier; a lower-period cycle
/// contributes the `r`-th power of its multiplier when that multiplier sits
/// at a primitive `r`-th root of unity (`n = m r`), with the multiplicity the
/// level divisor dictates.
#[derive(Debug, Clone)]
pub struct MultiplierSpectrum {
    pub d: u32,
    pub n: u32,
    pub entries: Vec<SpectrumEntry>,
    pub source: ParamPoint,
    /// False iff a lower-period (root-of-unity) contribution fired or a
    /// level-`n` cluster is degenerate (multiplicity above one).
    pub generic: bool,
}

impl MultiplierSpectrum {
    /// Total entry count with multiplicity.
    pub fn size(&self) -> u64 {
        self.entries.iter().map(|e| e.multiplicity as u64).sum()
    }

    /// Flattened values, repeated per multiplicity, in sorted order.
    pub fn values(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.size() as usize);
        for e in &self.entries {
            for _ in 0..e.multiplicity {
                out.push(e.value);
            }
        }
        out
    }
}

fn checked_level_degree(d: u32, n: u32, max_degree: u64) -> Result<u64> {
    let mut acc: u64 = 1;
    for _ in 0..n {
        acc = acc
            .checked_mul(d as u64)
            .ok_or(Error::Overflow("level degree d^n"))?;
        if acc > max_degree {
            return Err(Error::Invalid(format!(
                "level degree d^n = {d}^{n} exceeds max_degree {max_degree}"
            )));
        }
    }
    Ok(acc)
}

/// `F(z) = P^n(z) - z` and `F'(z)`, or their logs once magnitudes leave f64
/// range (the additive `-z`, `-1` corrections are then far below precision).
enum FnEval {
    Exact { f: Complex64, fp: Complex64 },
    Log { f: LogComplex, fp: LogComplex },
}

fn eval_fn(map: &PolynomialMap, n: u32, z: Complex64) -> FnEval {
    if map.d == 2 {
        // hot path: P(z) = z^2 c2 + c0 with P'(z) = z, no coefficient walk
        let c0 = map.coeffs[0];
        let c2 = map.coeffs[2];
        let mut cur = z;
        let mut deriv = Complex64::new(1.0, 0.0);
        let mut ok = true;
        for _ in 0..n {
            if cur.norm_sqr() > 1e200 || deriv.norm_sqr() > 1e280 {
                ok = false;
                break;
            }
            deriv *= cur;
            cur = cur * cur * c2 + c0;
        }
        if ok {
            return FnEval::Exact { f: cur - z, fp: deriv - 1.0 };
        }
    }
    let mut cur = z;
    let mut deriv = Complex64::new(1.0, 0.0);
    for k in 0..n {
        if cur.norm_sqr() > 1e200 || deriv.norm_sqr() > 1e280 {
            // switch to log tracking for the remaining iterations
            let mut lv = LogComplex::from_value(cur);
            let mut ld = LogComplex::from_value(deriv);
            let d = map.d as f64;
            for _ in k..n {
                ld = ld.mul(&LogComplex::new((d - 1.0) * lv.log_abs, (d - 1.0) * lv.arg));
                lv = LogComplex::new(d * lv.log_abs - d.ln(), d * lv.arg);
            }
            return FnEval::Log { f: lv, fp: ld };
        }
        deriv *= map.eval_deriv(cur);
        cur = map.eval(cur);
    }
    FnEval::Exact { f: cur - z, fp: deriv - 1.0 }
}

/// `(P^n)'(z)` for a point with bounded orbit.
fn iterate_deriv(map: &PolynomialMap, n: u32, z: Complex64) -> Complex64 {
    let mut cur = z;
    let mut deriv = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        deriv *= map.eval_deriv(cur);
        cur = map.eval(cur);
    }
    deriv
}

/// `P^m(z)`.
fn iterate(map: &PolynomialMap, m: u32, z: Complex64) -> Complex64 {
    let mut cur = z;
    for _ in 0..m {
        cur = map.eval(cur);
    }
    cur
}

/// One Newton run; `Some((root, residual))` on convergence within the bound.
/// Only converged iterations are ever accepted: near multiple roots the
/// residual alone reaches its floor long before the point does.
fn newton_launch(
    map: &PolynomialMap,
    n: u32,
    start: Complex64,
    bound: f64,
    opts: &SolverOptions,
    max_iter: u32,
) -> Option<(Complex64, f64)> {
    newton_launch_confined(map, n, start, bound, opts, max_iter, None)
}

/// Newton run restricted to a disk: trial points outside the confinement are
/// treated as ascent and backtracked, so a run warm-started at a moved root
/// can land only on the root of its own cell, never on a neighbor's.
fn newton_launch_confined(
    map: &PolynomialMap,
    n: u32,
    start: Complex64,
    bound: f64,
    opts: &SolverOptions,
    max_iter: u32,
    confine: Option<(Complex64, f64)>,
) -> Option<(Complex64, f64)> {
    let residual_tol = opts.residual_tol;
    let mut z = start;
    // collapse the radial far phase: Newton from far outside contracts along
    // the ray by (1 - 1/d^n) per step, so jump straight to the working radius
    if z.norm() > 1.2 * bound {
        z *= 1.2 * bound / z.norm();
    }
    let mut converged = false;
    let mut cur = eval_fn(map, n, z);
    let mut evals = 0u32;
    while evals < 3 * max_iter {
        let (step, cur_mag) = match &cur {
            FnEval::Exact { f, fp } => {
                if fp.norm_sqr() < 1e-300 {
                    z += Complex64::new(1e-9, 1.3e-9);
                    cur = eval_fn(map, n, z);
                    evals += 1;
                    continue;
                }
                (f / fp, f.norm().ln())
            }
            FnEval::Log { f, fp } => {
                let ls = f.log_abs - fp.log_abs;
                if ls > 200.0 {
                    return None; // step astronomically large, launch is lost
                }
                (Complex64::from_polar(ls.exp(), f.arg - fp.arg), f.log_abs)
            }
        };
        if !step.is_finite() {
            return None;
        }
        // backtracking keeps the run in the basin it started in: reject
        // trial points that grow |F|, halving the step until it descends
        let mut scale = 1.0f64;
        let mut accepted = false;
        for _ in 0..8 {
            let trial = z - step * scale;
            if !trial.is_finite() || trial.norm() > 3.0 * bound {
                scale *= 0.5;
                continue;
            }
            if let Some((center, radius)) = confine {
                if (trial - center).norm() > radius {
                    scale *= 0.5;
                    continue;
                }
            }
            let trial_eval = eval_fn(map, n, trial);
            evals += 1;
            let trial_mag = match &trial_eval {
                FnEval::Exact { f, .. } => f.norm().ln(),
                FnEval::Log { f, .. } => f.log_abs,
            };
            let tiny = (step * scale).norm() <= 1e-14 * (1.0 + z.norm());
            // near-neutral roots have a small F', so the Newton step stalls
            // at the noise floor long before it gets tiny; certifiable *and*
            // positionally settled (well under the cluster scale, so a
            // multiple root cannot smear into several fake simple ones)
            let certifiable = (step * scale).norm() <= 0.05 * opts.cluster_tol
                && match &trial_eval {
                    FnEval::Exact { f, fp } => {
                        f.norm()
                            <= 0.5 * residual_tol
                                * (fp.norm() * (1.0 + trial.norm())).max(1.0)
                    }
                    FnEval::Log { .. } => false,
                };
            if trial_mag <= cur_mag || tiny {
                z = trial;
                cur = trial_eval;
                accepted = true;
                if tiny || certifiable {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !accepted || converged {
            break;
        }
    }
    if !converged {
        return None;
    }
    // certify off the last evaluation; polish once if the step is worth it
    if let FnEval::Exact { f, fp } = cur {
        let mut resid = f.norm();
        let scale = (fp.norm() * (1.0 + z.norm())).max(1.0);
        if fp.norm_sqr() > 1e-300 {
            let step = f / fp;
            let sn = step.norm();
            if sn <= 1e-9 * (1.0 + z.norm()) && sn > 1e-15 * (1.0 + z.norm()) {
                let polished = z - step;
                if let FnEval::Exact { f: f2, .. } = eval_fn(map, n, polished) {
                    if f2.norm() < resid {
                        z = polished;
                        resid = f2.norm();
                    }
                }
            }
        }
        if resid <= residual_tol * scale {
            return Some((z, resid));
        }
    }
    None
}

/// A merged group of Newton limits: centroid, best residual, member count,
/// and scatter radius.
#[derive(Debug, Clone, Copy)]
struct Blob {
    z: Complex64,
    extent: f64,
}

/// Union-find clustering of accepted Newton limits within `tol`, by a sweep
/// over the (re, im)-sorted list. Returns centroids sorted by (re, im).
fn cluster_points(pts: &mut Vec<(Complex64, f64)>, tol: f64) -> Vec<Blob> {
    if pts.is_empty() {
        return Vec::new();
    }
    pts.sort_by(|a, b| cmp_complex(&a.0, &b.0));
    let n = pts.len();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut i: u32) -> u32 {
        while parent[i as usize] != i {
            parent[i as usize] = parent[parent[i as usize] as usize];
            i = parent[i as usize];
        }
        i
    }
    for i in 1..n {
        let zi = pts[i].0;
        let mut j = i;
        while j > 0 {
            j -= 1;
            if zi.re - pts[j].0.re > tol {
                break;
            }
            if (pts[j].0 - zi).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i as u32), find(&mut parent, j as u32));
                if ri != rj {
                    parent[ri.max(rj) as usize] = ri.min(rj);
                }
            }
        }
    }
    // accumulate centroid and extent per representative
    let mut sum = vec![Complex64::default(); n];
    let mut count = vec![0u32; n];
    for i in 0..n {
        let r = find(&mut parent, i as u32) as usize;
        sum[r] += pts[i].0;
        count[r] += 1;
    }
    let mut blobs: Vec<(usize, Blob)> = (0..n)
        .filter(|&i| count[i] > 0)
        .map(|i| {
            (
                i,
                Blob {
                    z: sum[i] / count[i] as f64,
                    extent: 0.0,
                },
            )
        })
        .collect();
    let mut index_of = vec![u32::MAX; n];
    for (bi, &(r, _)) in blobs.iter().enumerate() {
        index_of[r] = bi as u32;
    }
    for i in 0..n {
        let r = find(&mut parent, i as u32) as usize;
        let b = &mut blobs[index_of[r] as usize].1;
        b.extent = b.extent.max((pts[i].0 - b.z).norm());
    }
    let mut out: Vec<Blob> = blobs.into_iter().map(|(_, b)| b).collect();
    out.sort_by(|a, b| cmp_complex(&a.z, &b.z));
    out
}

/// Cluster, coarsening the merge radius while more groups remain than the
/// level can hold: near a multiplicity-`q` root the evaluation noise floor
/// scatters converged limits over a radius around `eps^(1/q)`, far wider
/// than the base tolerance.
fn cluster_adaptive(
    pts: &mut Vec<(Complex64, f64)>,
    base_tol: f64,
    dn: u64,
    scale: f64,
) -> Vec<Blob> {
    let mut tol = base_tol;
    let cap = 2e-3 * (1.0 + scale);
    loop {
        let blobs = cluster_points(pts, tol);
        if blobs.len() as u64 <= dn || tol >= cap {
            return blobs;
        }
        tol *= 4.0;
    }
}

/// Multiplicity of the root cluster at `z0` by the argument principle on a
/// small circle. `None` when the winding cannot be resolved.
fn cluster_winding(
    map: &PolynomialMap,
    n: u32,
    z0: Complex64,
    radius: f64,
) -> Option<i64> {
    let mut eval = |z: Complex64| -> Option<f64> {
        match eval_fn(map, n, z) {
            FnEval::Exact { f, .. } => {
                if f.norm_sqr() == 0.0 {
                    None
                } else {
                    Some(f.arg())
                }
            }
            FnEval::Log { f, .. } => Some(f.arg),
        }
    };
    let total = winding_arg_total(&mut eval, z0, radius, 4096)?;
    let turns = total / std::f64::consts::TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() < 0.25 {
        Some(rounded as i64)
    } else {
        None
    }
}

/// Deterministic circle starts for one launch round. The first round sits on
/// the enclosing circle of twice the orbit bound; later rounds sweep radii
/// through the interior annulus where basins the outer circle misses open up.
fn circle_starts(count: usize, bound: f64, round: u32) -> Vec<Complex64> {
    const RADII: [f64; 8] = [2.0, 1.05, 0.55, 1.5, 0.3, 0.8, 1.75, 0.15];
    let radius = bound * RADII[round as usize % RADII.len()];
    let phase = 0.5 + 2.399963229728653 * round as f64; // golden-angle rotation
    (0..count)
        .map(|i| {
            Complex64::from_polar(
                radius,
                std::f64::consts::TAU * i as f64 / count as f64 + phase,
            )
        })
        .collect()
}

/// Forward tails of the critical orbits: attracting cycles capture critical
/// points, so these starts target exactly the roots backward orbits miss.
fn forward_critical_starts(map: &PolynomialMap, count: usize, bound: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(count);
    let per_crit = (count / map.critical_points.len().max(1)).max(8);
    for &c in &map.critical_points {
        let mut z = c;
        for step in 0..(per_crit + 16) {
            z = map.eval(z);
            if !z.is_finite() || z.norm() > bound {
                break;
            }
            if step >= 16 {
                out.push(z);
            }
        }
    }
    out
}

/// Backward-orbit starts: random pullback chains land near the Julia set,
/// exactly where periodic points concentrate.
fn backward_starts(
    map: &PolynomialMap,
    count: usize,
    seed: u64,
) -> Vec<Complex64> {
    let gopts = GreenOptions::default();
    let esc = escape_options(map, &gopts);
    let start = esc.center + Complex64::from_polar(1.3 * esc.ln_radius.exp(), 1.1);
    let d = map.d as usize;
    let mut out = Vec::with_capacity(count);
    let mut coeffs = map.coeffs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let depth = 10 + (i % 7);
        let mut cur = start;
        let mut ok = true;
        for _ in 0..depth {
            let pre = if d == 2 {
                let t = (cur - map.coeffs[0]) / map.coeffs[2];
                let r = t.sqrt();
                [-r, r].to_vec()
            } else {
                coeffs.copy_from_slice(&map.coeffs);
                coeffs[0] -= cur;
                match poly::roots(&coeffs, 1e-10, 200) {
                    Ok(rs) if rs.len() == d => rs,
                    _ => {
                        ok = false;
                        break;
                    }
                }
            };
            cur = pre[rng.random_range(0..d)];
            if !cur.is_finite() {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(cur);
        }
    }
    out
}

/// Solve one level from scratch, in rounds, until the root count with
/// multiplicity reaches `d^n` exactly.
fn solve_level_cold(
    map: &PolynomialMap,
    opts: &SolverOptions,
    n: u32,
) -> Result<LevelRoots> {
    let dn = checked_level_degree(map.d, n, opts.max_degree)?;
    let gopts = GreenOptions::default();
    let bound = crate::potentials::orbit_bound(map, &gopts);
    let budget = {
        let dnf = dn as f64;
        let l = dnf.ln().max(1.0);
        ((1.2 * dnf * l * l).ceil() as usize).max(24 * dn as usize).max(2048)
    };
    let mut accepted: Vec<(Complex64, f64)> = Vec::new();
    let mut launched = 0usize;
    let mut round = 0u32;

    // Backward-orbit samples land on the Julia set where the repelling
    // points (the vast majority) sit, so their Newton runs converge in a
    // handful of steps; forward critical tails cover the attracting cycles.
    // Circle launches keep the guaranteed-coverage geometry in the mix, but
    // Newton's far field contracts only by (1 - 1/d^n) per step, so they
    // need an iteration budget of order d^n and serve as a rescue round.
    loop {
        let (mut starts, max_iter) = match round % 4 {
            0 | 2 => (
                backward_starts(map, 4 * dn as usize, split_seed(0xb0c4, round as u64)),
                60u32,
            ),
            1 => (forward_critical_starts(map, 2 * dn as usize, bound), 60u32),
            _ => (
                circle_starts(3 * dn as usize, bound, round / 4),
                (dn as u32).saturating_mul(2).clamp(200, 4000),
            ),
        };
        if starts.is_empty() {
            starts = circle_starts(3 * dn as usize, bound, round);
        }
        launched += starts.len();
        let hits: Vec<Option<(Complex64, f64)>> = if starts.len() >= 2048 {
            starts
                .par_iter()
                .map(|&s| newton_launch(map, n, s, bound, opts, max_iter))
                .collect()
        } else {
            starts
                .iter()
                .map(|&s| newton_launch(map, n, s, bound, opts, max_iter))
                .collect()
        };
        accepted.extend(hits.into_iter().flatten());

        let blobs = cluster_adaptive(&mut accepted, opts.cluster_tol, dn, bound);
        if let Some(level) = finalize_level(map, opts, n, dn, &blobs)? {
            return Ok(level);
        }
        round += 1;
        if round >= opts.max_rounds || launched >= budget {
            let found: u64 = blobs.len() as u64;
            return Err(Error::Incomplete { level: n, found, expected: dn });
        }
    }
}

/// Try to promote clustered Newton limits into a complete level. Returns
/// `Ok(None)` when the count is short and another round is needed.
fn finalize_level(
    map: &PolynomialMap,
    opts: &SolverOptions,
    n: u32,
    dn: u64,
    blobs: &[Blob],
) -> Result<Option<LevelRoots>> {
    if blobs.is_empty() {
        return Ok(None);
    }
    if blobs.len() as u64 > dn {
        return Err(Error::AmbiguousGrouping {
            z: blobs[0].z,
            detail: format!(
                "{} distinct clusters exceed the level degree {dn}",
                blobs.len()
            ),
        });
    }
    let mut mults: Vec<u32> = vec![1; blobs.len()];
    let simple_total = blobs.len() as u64;
    if simple_total < dn {
        let shortfall = dn - simple_total;
        if shortfall > 512 {
            return Ok(None); // too short, run another round first
        }
        // Suspect clusters: nonzero scatter (noise-floor blob around a
        // multiple root) or a nearly singular derivative of F.
        for (i, b) in blobs.iter().enumerate() {
            let suspect = b.extent > 2.0 * opts.cluster_tol || {
                match eval_fn(map, n, b.z) {
                    FnEval::Exact { fp, .. } => fp.norm() < 0.05,
                    FnEval::Log { .. } => false,
                }
            };
            if suspect {
                let nearest = blobs
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, c)| (c.z - b.z).norm())
                    .fold(f64::INFINITY, f64::min);
                let radius = (nearest / 3.0)
                    .min(1e-3 * (1.0 + b.z.norm()))
                    .max(3.0 * b.extent)
                    .max(4.0 * opts.cluster_tol);
                if let Some(wind) = cluster_winding(map, n, b.z, radius) {
                    if wind <= 0 {
                        // spurious acceptance: there is no root inside
                        mults[i] = 0;
                    } else {
                        mults[i] = wind as u32;
                    }
                }
            }
        }
        let total: u64 = mults.iter().map(|&m| m as u64).sum();
        if total != dn {
            return Ok(None);
        }
    }
    let mut out = Vec::with_capacity(blobs.len());
    for (i, b) in blobs.iter().enumerate() {
        if mults[i] == 0 {
            continue;
        }
        out.push(RootCluster {
            z: b.z,
            multiplicity: mults[i],
            iterate_deriv: iterate_deriv(map, n, b.z),
            extent: b.extent,
        });
    }
    let total: u64 = out.iter().map(|c| c.multiplicity as u64).sum();
    if total == dn {
        Ok(Some(LevelRoots { n, clusters: out, total }))
    } else {
        Ok(None)
    }
}

thread_local! {
    static CLAIMED: std::cell::RefCell<Vec<bool>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Inverse-orbit rescue for one lost seed: rebuild its cycle's branch
/// sequence from the seed list and pull back around the loop. Backward
/// steps contract by the reciprocal multiplier, so for the repelling cycles
/// that defeat forward tracking a couple of loops land on the moved root to
/// machine precision.
fn inverse_orbit_rescue(
    map: &PolynomialMap,
    old_map: Option<&PolynomialMap>,
    n: u32,
    seeds: &LevelRoots,
    z_seed: Complex64,
    opts: &SolverOptions,
    bound: f64,
) -> Option<(Complex64, f64)> {
    // anchor loop: the seed's cycle within the seed set. Iterating the map
    // the seeds were solved at keeps every snap unambiguous (the images ARE
    // seeds up to solver precision) and the search window tiny; without the
    // old map the snaps must absorb the full root motion.
    let orbit_map = old_map.unwrap_or(map);
    let snap_tol = if old_map.is_some() { 1e-3 } else { 0.4 } * (1.0 + z_seed.norm());
    let mut anchors = Vec::with_capacity(n as usize);
    anchors.push(z_seed);
    let mut cur = z_seed;
    for _ in 1..n {
        let img = orbit_map.eval(cur);
        cur = match seeds.find(img, snap_tol) {
            Some(c) => c.z,
            None => img,
        };
        if !cur.is_finite() {
            return None;
        }
        anchors.push(cur);
    }
    let mut w = z_seed;
    let mut last_move = f64::INFINITY;
    let mut grace = 2u32;
    for _round in 0..10 {
        let w_before = w;
        for k in (0..n as usize).rev() {
            // preimage of w nearest the anchor at position k
            let pre = if map.d == 2 {
                let t = (w - map.coeffs[0]) / map.coeffs[2];
                let r = t.sqrt();
                if (r - anchors[k]).norm_sqr() <= (-r - anchors[k]).norm_sqr() {
                    r
                } else {
                    -r
                }
            } else {
                let mut coeffs = map.coeffs.clone();
                coeffs[0] -= w;
                let roots = poly::roots(&coeffs, 1e-12, 200).ok()?;
                *roots.iter().min_by(|a, b| {
                    (*a - anchors[k])
                        .norm_sqr()
                        .partial_cmp(&(*b - anchors[k]).norm_sqr())
                        .unwrap()
                })?
            };
            w = pre;
            if !w.is_finite() {
                return None;
            }
        }
        let moved = (w - w_before).norm();
        if moved >= last_move && moved > 1e-12 {
            if grace == 0 {
                return None; // not contracting: the cycle is not repelling enough
            }
            grace -= 1;
        }
        last_move = moved;
        if moved < 1e-13 * (1.0 + w.norm()) {
            break;
        }
    }
    newton_launch(map, n, w, bound, opts, 20)
}

/// Solve one level warm-starting from a nearby parameter's root set.
/// Falls back with an error when the seeds cannot account for every root;
/// callers then cold-solve.
pub fn solve_level_warm(
    map: &PolynomialMap,
    opts: &SolverOptions,
    n: u32,
    seeds: &LevelRoots,
) -> Result<LevelRoots> {
    solve_level_warm_from(map, opts, n, seeds, None, None)
}

/// [`solve_level_warm`] with the map the seeds were solved at (letting lost
/// repelling cycles be rebuilt by anchored inverse orbits) and optionally a
/// predicted position per seed cluster (velocity extrapolation) used for the
/// launches while the seeds themselves stay the anchor truth.
pub fn solve_level_warm_from(
    map: &PolynomialMap,
    opts: &SolverOptions,
    n: u32,
    seeds: &LevelRoots,
    old_map: Option<&PolynomialMap>,
    predicted: Option<&[Complex64]>,
) -> Result<LevelRoots> {
    if let Some(p) = predicted {
        if p.len() != seeds.clusters.len() {
            return Err(Error::Invalid(
                "predicted positions must align with the seed clusters".into(),
            ));
        }
    }
    let pos = |i: usize| -> Complex64 {
        predicted.map_or(seeds.clusters[i].z, |p| p[i])
    };
    let dn = checked_level_degree(map.d, n, opts.max_degree)?;
    let gopts = GreenOptions::default();
    let bound = crate::potentials::orbit_bound(map, &gopts);
    // nearest-neighbor spacing per seed: confinement radii for the launches
    let nn: Vec<f64> = seeds
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut best = 0.6 * (1.0 + c.z.norm());
            // outward scan in the (re, im)-sorted list
            let mut l = i;
            let mut r = i + 1;
            loop {
                let mut advanced = false;
                if l > 0 {
                    let j = l - 1;
                    if c.z.re - seeds.clusters[j].z.re <= best {
                        best = best.min((seeds.clusters[j].z - c.z).norm());
                        l = j;
                        advanced = true;
                    } else {
                        l = 0;
                    }
                }
                if r < seeds.clusters.len()
                    && seeds.clusters[r].z.re - c.z.re <= best
                {
                    best = best.min((seeds.clusters[r].z - c.z).norm());
                    r += 1;
                    advanced = true;
                }
                if !advanced {
                    break;
                }
            }
            best
        })
        .collect();

    let launch_near = |i: usize, start: Complex64| -> Option<(Complex64, f64)> {
        let c = &seeds.clusters[i];
        let radius = (0.5 * nn[i]).max(8.0 * opts.cluster_tol + 4.0 * c.extent);
        newton_launch_confined(map, n, start, bound, opts, 24, Some((pos(i), radius)))
    };

    let mut accepted: Vec<(Complex64, f64)> = Vec::with_capacity(seeds.total as usize);
    let mut predict_failed: Vec<u32> = Vec::new();
    for (i, c) in seeds.clusters.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut any_miss = false;
        for q in 0..c.multiplicity {
            let start = if q == 0 {
                pos(i)
            } else {
                pos(i)
                    + Complex64::from_polar(
                        (4.0 * opts.cluster_tol + c.extent) * (1.0 + q as f64),
                        2.399963229728653 * q as f64,
                    )
            };
            match launch_near(i, start) {
                Some(hit) => {
                    worst = worst.max((hit.0 - pos(i)).norm());
                    accepted.push(hit);
                }
                None => any_miss = true,
            }
        }
        // a hit far from the predicted spot means the prediction failed
        // there, and with it any guarantee the right root was caught
        if any_miss || worst > (0.15 * nn[i]).max(24.0 * opts.cluster_tol + 4.0 * c.extent) {
            predict_failed.push(i as u32);
        }
    }

    // Where prediction failed, no geometric test can tell "my root arrived"
    // from "a neighbor drifted in": a stolen launch looks exactly like a
    // caught root. The anchored inverse orbit is exact for its own cycle, so
    // it runs for every such seed; duplicates merge away in clustering.
    for &i in &predict_failed {
        let c = &seeds.clusters[i as usize];
        if let Some(hit) = inverse_orbit_rescue(map, old_map, n, seeds, c.z, opts, bound) {
            accepted.push(hit);
        }
    }

    // Remaining losses are judged on the found set: every seed must have a
    // found root within its reach, and the unclaimed ones are rebuilt by
    // anchored inverse orbits.
    let dbg = std::env::var_os("PERBIF_DEBUG_WARM").is_some();
    let mut rescue = 0u32;
    let mut round1_blobs: Vec<Complex64> = Vec::new();
    loop {
        let mut blobs = cluster_adaptive(&mut accepted, opts.cluster_tol, dn, bound);
        if dbg {
            eprintln!("  round {rescue}: blobs {} / {dn}", blobs.len());
            if rescue == 1 {
                round1_blobs = blobs.iter().map(|b| b.z).collect();
            }
        }
        if let Some(level) = finalize_level(map, opts, n, dn, &blobs)? {
            if dbg && rescue > 1 {
                for c in &level.clusters {
                    let found = round1_blobs.iter().any(|&b| (b - c.z).norm() < 1e-4);
                    if !found {
                        let (si, sd) = seeds
                            .clusters
                            .iter()
                            .enumerate()
                            .map(|(i, s)| (i, (s.z - c.z).norm()))
                            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                            .unwrap();
                        let was_claimed =
                            CLAIMED.with(|cl| cl.borrow().get(si).copied().unwrap_or(false));
                        eprintln!(
                            "    late root {} seed {si} dist {:.3e} claimed {was_claimed}",
                            c.z, sd
                        );
                    }
                }
            }
            return Ok(level);
        }
        if rescue == 0 {
            let mut claimed_list: Vec<bool> = Vec::new();
            let mut grew = false;
            for (i, c) in seeds.clusters.iter().enumerate() {
                // tight reach: when roots move a sizable fraction of their
                // spacing no geometric test can tell "my root arrived" from
                // "a neighbor drifted in", so anything not pinned right at
                // the expected position gets the exact inverse-orbit treatment
                let reach = (0.3 * nn[i]).max(16.0 * opts.cluster_tol + 2.0 * c.extent);
                let center = pos(i);
                let lo = blobs.partition_point(|b| b.z.re < center.re - reach);
                let claimed = blobs[lo..]
                    .iter()
                    .take_while(|b| b.z.re <= center.re + reach)
                    .any(|b| (b.z - center).norm() <= reach);
                claimed_list.push(claimed);
                if claimed {
                    continue;
                }
                // anchor on the true old root, never on the prediction
                if let Some(hit) =
                    inverse_orbit_rescue(map, old_map, n, seeds, c.z, opts, bound)
                {
                    accepted.push(hit);
                    grew = true;
                    continue;
                }
                // fallback: a small unconfined disk around the prediction
                for &frac in &[0.4f64, 1.1] {
                    let r = (frac * nn[i]).max(20.0 * opts.cluster_tol + 2.0 * c.extent);
                    for q in 0..8 {
                        let start = center
                            + Complex64::from_polar(
                                r * (0.6 + 0.05 * q as f64),
                                std::f64::consts::TAU * q as f64 / 8.0 + 0.37,
                            );
                        if let Some(hit) = newton_launch(map, n, start, bound, opts, 30) {
                            accepted.push(hit);
                            grew = true;
                        }
                    }
                }
            }
            if dbg {
                CLAIMED.with(|c| *c.borrow_mut() = claimed_list);
            }
            rescue += 1;
            if grew {
                continue;
            }
        }
        if rescue >= 4 {
            blobs = cluster_adaptive(&mut accepted, opts.cluster_tol, dn, bound);
            return Err(Error::Incomplete {
                level: n,
                found: blobs.len() as u64,
                expected: dn,
            });
        }
        // final net: global backward samples land on the Julia set everywhere
        let count = ((dn as usize) / 2).clamp(256, 8192) << rescue;
        let starts = backward_starts(map, count, split_seed(0x5e5c, rescue as u64));
        for s in starts {
            if let Some(hit) = newton_launch(map, n, s, bound, opts, 60) {
                accepted.push(hit);
            }
        }
        rescue += 1;
    }
}

/// All `d^n` solutions of `P^n(z) = z`, merged within the cluster tolerance
/// and returned as `(point, multiplicity)` sorted by (re, im).
pub fn periodic_points(
    map: &PolynomialMap,
    n: u32,
    opts: &SolverOptions,
) -> Result<Vec<(Complex64, u32)>> {
    let level = solve_level_cold(map, opts, n)?;
    Ok(level
        .clusters
        .iter()
        .map(|c| (c.z, c.multiplicity))
        .collect())
}

/// Group a complete level-`n` root set into cycles with exact periods.
///
/// The exact period is the smallest divisor `m` of `n` whose `m`-fold image
/// returns to the point within tolerance (ties resolve toward the smaller
/// period). The multiplier is the product of `P'` along the stored orbit.
pub fn classify_cycles(
    points: &[(Complex64, u32)],
    map: &PolynomialMap,
    n: u32,
    opts: &SolverOptions,
) -> Result<Vec<CycleRecord>> {
    // A multiplicity-q point can only be located to about eps^(1/q): the
    // residual sits below the f64 noise floor on a blob of that size.
    let noise_radius = |mult: u32| -> f64 {
        if mult <= 1 {
            0.0
        } else {
            f64::EPSILON.powf(1.0 / mult as f64)
        }
    };
    classify_cycles_with(points, map, n, opts, &noise_radius)
}

fn classify_cycles_with(
    points: &[(Complex64, u32)],
    map: &PolynomialMap,
    n: u32,
    opts: &SolverOptions,
    position_slack: &dyn Fn(u32) -> f64,
) -> Result<Vec<CycleRecord>> {
    let mut pts: Vec<(Complex64, u32)> = points.to_vec();
    pts.sort_by(|a, b| cmp_complex(&a.0, &b.0));
    let max_slack = pts
        .iter()
        .map(|p| position_slack(p.1))
        .fold(0.0f64, f64::max);
    let snap_tol = 20.0 * opts.cluster_tol + 8.0 * max_slack;
    let snap = |z: Complex64, pts: &[(Complex64, u32)]| -> Option<usize> {
        let lo = pts.partition_point(|c| c.0.re < z.re - snap_tol);
        let mut best: Option<(usize, f64)> = None;
        for (off, c) in pts[lo..].iter().enumerate() {
            if c.0.re > z.re + snap_tol {
                break;
            }
            let d = (c.0 - z).norm();
            if d <= snap_tol && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((lo + off, d));
            }
        }
        best.map(|(i, _)| i)
    };

    let divs = arith::divisors(n);
    let mut assigned = vec![false; pts.len()];
    let mut records = Vec::new();
    for i in 0..pts.len() {
        if assigned[i] {
            continue;
        }
        let z = pts[i].0;
        let slack = position_slack(pts[i].1);
        let period_tol =
            (4.0 * opts.cluster_tol + 8.0 * slack) * (1.0 + z.norm());
        let mut exact = n;
        for &m in &divs {
            if (iterate(map, m, z) - z).norm() <= period_tol {
                exact = m;
                break;
            }
        }
        let mut orbit = vec![i];
        let mut cur = z;
        for _ in 1..exact {
            cur = map.eval(cur);
            let j = snap(cur, &pts).ok_or(Error::AmbiguousGrouping {
                z: cur,
                detail: "orbit image does not land on a located root".into(),
            })?;
            if assigned[j] || orbit.contains(&j) {
                return Err(Error::AmbiguousGrouping {
                    z: cur,
                    detail: "orbit image lands on an already grouped root".into(),
                });
            }
            cur = pts[j].0; // stay on the located roots
            orbit.push(j);
        }
        let mult_point = pts[i].1;
        if orbit.iter().any(|&j| pts[j].1 != mult_point) {
            return Err(Error::AmbiguousGrouping {
                z,
                detail: "orbit members carry different multiplicities".into(),
            });
        }
        let mut multiplier = Complex64::new(1.0, 0.0);
        let mut pts_list = Vec::with_capacity(orbit.len());
        for &j in &orbit {
            multiplier *= map.eval_deriv(pts[j].0);
            pts_list.push(pts[j].0);
            assigned[j] = true;
        }
        records.push(CycleRecord {
            representative: z,
            exact_period: exact,
            points: pts_list,
            multiplier,
            multiplicity: mult_point,
        });
    }
    // completeness: Σ exact_period · multiplicity over records = d^n
    let dn = checked_level_degree(map.d, n, u64::MAX)?;
    let got: u64 = records
        .iter()
        .map(|r| r.exact_period as u64 * r.multiplicity as u64)
        .sum();
    if got != dn {
        return Err(Error::AmbiguousGrouping {
            z: pts.first().map(|p| p.0).unwrap_or_default(),
            detail: format!("period-weighted count {got} does not reach {dn}"),
        });
    }
    Ok(records)
}

/// Periodic-point solver with a per-parameter cache of solved levels.
pub struct CycleSolver<'m> {
    map: &'m PolynomialMap,
    opts: SolverOptions,
    levels: BTreeMap<u32, LevelRoots>,
}

impl<'m> CycleSolver<'m> {
    pub fn new(map: &'m PolynomialMap, opts: SolverOptions) -> Self {
        CycleSolver { map, opts, levels: BTreeMap::new() }
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Seed a level from an already solved nearby parameter (continuation).
    pub fn adopt_level(&mut self, level: LevelRoots) {
        self.levels.insert(level.n, level);
    }

    /// Solve (or fetch) the complete level-`k` root set.
    pub fn level(&mut self, k: u32) -> Result<&LevelRoots> {
        if !self.levels.contains_key(&k) {
            let solved = solve_level_cold(self.map, &self.opts, k)?;
            self.levels.insert(k, solved);
        }
        Ok(&self.levels[&k])
    }

    /// Cycles of the level-`n` root set, using the solver's recorded
    /// per-cluster scatter for the grouping tolerances.
    pub fn classify(&mut self, n: u32) -> Result<Vec<CycleRecord>> {
        let pts: Vec<(Complex64, u32)> = self
            .level(n)?
            .clusters
            .iter()
            .map(|c| (c.z, c.multiplicity))
            .collect();
        classify_cycles(&pts, self.map, n, &self.opts)
    }

    /// Assemble the level-`n` multiplier spectrum.
    ///
    /// The level multiplicity of each point is obtained by Möbius inversion
    /// of its root multiplicities across the divisor levels, so ordinary
    /// lower-period points cancel exactly and root-of-unity degeneracies
    /// surface with the multiplicity the divisor carries.
    pub fn spectrum(&mut self, n: u32) -> Result<MultiplierSpectrum> {
        for k in arith::divisors(n) {
            self.level(k)?;
        }
        let records = self.classify(n)?;
        let mut entries: Vec<SpectrumEntry> = Vec::new();
        let mut case_ii = false;
        for rec in &records {
            let z = rec.representative;
            // identification across levels must absorb the position scatter
            // of noise-floor blobs around multiple roots
            let extent = self.levels[&n]
                .find(z, 4.0 * self.opts.cluster_tol + 1e-4)
                .map_or(0.0, |c| c.extent);
            let match_tol = self.opts.cluster_tol.max(6.0 * extent);
            let mut level_mult: i64 = 0;
            for k in arith::divisors(n) {
                let mu = arith::moebius((n / k) as u64)? as i64;
                if mu == 0 {
                    continue;
                }
                let mk = self.levels[&k].multiplicity_at(z, match_tol) as i64;
                level_mult += mu * mk;
            }
            if level_mult < 0 {
                return Err(Error::AmbiguousGrouping {
                    z,
                    detail: format!("negative level multiplicity {level_mult}"),
                });
            }
            if level_mult == 0 {
                continue; // ordinary lower-period point, cancelled by inversion
            }
            let m = rec.exact_period;
            if m == n {
                entries.push(SpectrumEntry {
                    value: rec.multiplier,
                    multiplicity: level_mult as u32,
                });
            } else {
                let r = n / m;
                let total_points = level_mult as u64 * m as u64;
                if total_points % n as u64 != 0 {
                    return Err(Error::AmbiguousGrouping {
                        z,
                        detail: format!(
                            "level multiplicity {level_mult} of a period-{m} cycle \
                             is not divisible at level {n}"
                        ),
                    });
                }
                case_ii = true;
                // sanity: the multiplier should sit near a primitive r-th root
                // of unity; tolerance violations are flagged, not fatal
                let near_unit = (rec.multiplier.norm() - 1.0).abs()
                    <= self.opts.root_of_unity_tol.max(1e-3);
                let _ = near_unit;
                entries.push(SpectrumEntry {
                    value: rec.multiplier.powu(r),
                    multiplicity: (total_points / n as u64) as u32,
                });
            }
        }
        if self.opts.include_infinity && n == 1 {
            entries.push(SpectrumEntry {
                value: Complex64::new(0.0, 0.0),
                multiplicity: 1,
            });
        }
        entries.sort_by(|a, b| cmp_complex(&a.value, &b.value));
        let degenerate = self.levels[&n]
            .clusters
            .iter()
            .any(|c| c.multiplicity > 1);
        let spectrum = MultiplierSpectrum {
            d: self.map.d,
            n,
            entries,
            source: self.map.param.clone(),
            generic: !case_ii && !degenerate,
        };
        // the entry count must reproduce the level cycle count exactly
        let expected = arith::dynatomic_count(self.map.d, n)?.n_cycles as u64
            + if self.opts.include_infinity && n == 1 { 1 } else { 0 };
        if spectrum.size() != expected {
            return Err(Error::AmbiguousGrouping {
                z: Complex64::default(),
                detail: format!(
                    "spectrum size {} does not match the level count {expected}",
                    spectrum.size()
                ),
            });
        }
        Ok(spectrum)
    }

    /// Log of the level-`n` characteristic polynomial at `w`, computed from
    /// the divisor decomposition: `(1/n) Σ_{k|n} μ(n/k) Σ_{P^k(z)=z}
    /// ln(w - ((P^k)'(z))^{n/k})`. Identical to the spectrum route wherever
    /// both are defined, and exact even at degenerate parameters. The
    /// argument is defined up to the `1/n` branch, which no potential uses.
    pub fn char_poly_log_divisor(&mut self, n: u32, w: Complex64) -> Result<LogComplex> {
        for k in arith::divisors(n) {
            self.level(k)?;
        }
        let mut log_abs = 0.0f64;
        let mut arg = 0.0f64;
        for k in arith::divisors(n) {
            let mu = arith::moebius((n / k) as u64)? as f64;
            if mu == 0.0 {
                continue;
            }
            let r = n / k;
            for c in &self.levels[&k].clusters {
                let v = w - c.iterate_deriv.powu(r);
                let m = c.multiplicity as f64;
                log_abs += mu * m * v.norm().ln();
                arg += mu * m * v.arg();
            }
        }
        if self.opts.include_infinity && n == 1 {
            log_abs += w.norm().ln();
            arg += w.arg();
        }
        let nn = n as f64;
        Ok(LogComplex::new(log_abs / nn, arg / nn))
    }
}

/// Validate that level `n` at degree `d` stays within the solver's degree cap.
pub fn multiplier_spectrum_degree_check(d: u32, n: u32, opts: &SolverOptions) -> Result<()> {
    checked_level_degree(d, n, opts.max_degree).map(|_| ())
}

/// Convenience wrapper: solve and assemble the level-`n` spectrum at `map`.
pub fn multiplier_spectrum(
    map: &PolynomialMap,
    n: u32,
    opts: &SolverOptions,
) -> Result<MultiplierSpectrum> {
    CycleSolver::new(map, opts.clone()).spectrum(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::build_map;
    use crate::potentials;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn power_map() -> PolynomialMap {
        build_map(&ParamPoint::quadratic(c64(0.0, 0.0))).unwrap()
    }

    #[test]
    fn level_one_of_power_map() {
        let pts = periodic_points(&power_map(), 1, &SolverOptions::default()).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[0].0 - c64(0.0, 0.0)).norm() < 1e-10);
        assert!((pts[1].0 - c64(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn level_two_of_power_map() {
        // P^2(z) = z iff z (z^3 - 8) = 0
        let pts = periodic_points(&power_map(), 2, &SolverOptions::default()).unwrap();
        assert_eq!(pts.len(), 4);
        let expected = [
            c64(0.0, 0.0),
            c64(2.0, 0.0),
            2.0 * Complex64::from_polar(1.0, std::f64::consts::TAU / 3.0),
            2.0 * Complex64::from_polar(1.0, 2.0 * std::f64::consts::TAU / 3.0),
        ];
        for e in expected {
            assert!(
                pts.iter().any(|p| (p.0 - e).norm() < 1e-9),
                "missing root {e}"
            );
        }
    }

    #[test]
    fn parabolic_double_fixed_point() {
        // a^2 = 1/2: the two fixed points coalesce at z = 1
        let a = (0.5f64).sqrt();
        let map = build_map(&ParamPoint::quadratic(c64(a, 0.0))).unwrap();
        let pts = periodic_points(&map, 1, &SolverOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].0 - c64(1.0, 0.0)).norm() < 1e-5);
        assert_eq!(pts[0].1, 2);
    }

    #[test]
    fn classification_of_power_map_level_two() {
        let map = power_map();
        let opts = SolverOptions::default();
        let pts = periodic_points(&map, 2, &opts).unwrap();
        let recs = classify_cycles(&pts, &map, 2, &opts).unwrap();
        assert_eq!(recs.len(), 3);
        let fixed0 = recs
            .iter()
            .find(|r| r.representative.norm() < 1e-9)
            .unwrap();
        assert_eq!(fixed0.exact_period, 1);
        assert!(fixed0.multiplier.norm() < 1e-9);
        let fixed2 = recs
            .iter()
            .find(|r| (r.representative - c64(2.0, 0.0)).norm() < 1e-9)
            .unwrap();
        assert_eq!(fixed2.exact_period, 1);
        assert!((fixed2.multiplier - c64(2.0, 0.0)).norm() < 1e-9);
        let cyc = recs.iter().find(|r| r.exact_period == 2).unwrap();
        assert!((cyc.multiplier - c64(4.0, 0.0)).norm() < 1e-8);
        let total: u64 = recs
            .iter()
            .map(|r| r.exact_period as u64 * r.multiplicity as u64)
            .sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn multiplier_route_agreement() {
        // product of P' over stored cycle points vs chain rule along the
        // recomputed orbit
        let map = build_map(&ParamPoint::quadratic(c64(0.3, 0.4))).unwrap();
        let opts = SolverOptions::default();
        let pts = periodic_points(&map, 3, &opts).unwrap();
        let recs = classify_cycles(&pts, &map, 3, &opts).unwrap();
        for r in &recs {
            let chain = iterate_deriv(&map, r.exact_period, r.representative);
            let rel = (chain - r.multiplier).norm() / (1.0 + r.multiplier.norm());
            assert!(rel < 1e-8, "routes disagree: {chain} vs {}", r.multiplier);
        }
    }

    #[test]
    fn spectrum_of_power_map() {
        let opts = SolverOptions::default();
        let s2 = multiplier_spectrum(&power_map(), 2, &opts).unwrap();
        assert_eq!(s2.entries.len(), 1);
        assert!((s2.entries[0].value - c64(4.0, 0.0)).norm() < 1e-8);
        assert!(s2.generic);
        let s1 = multiplier_spectrum(&power_map(), 1, &opts).unwrap();
        let vals = s1.values();
        assert_eq!(vals.len(), 2);
        assert!(vals[0].norm() < 1e-9);
        assert!((vals[1] - c64(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn spectrum_includes_infinity_on_request() {
        let opts = SolverOptions { include_infinity: true, ..Default::default() };
        let s1 = multiplier_spectrum(&power_map(), 1, &opts).unwrap();
        assert_eq!(s1.size(), 3); // 0 (from infinity), 0 (critical fixed), 2
    }

    #[test]
    fn period_doubling_parameter_spectrum() {
        // a^2 = -3/2: fixed multipliers are 3 and -1; the 2-cycle has
        // degenerated onto the fixed point, so level 2 carries (-1)^2 = 1.
        let a = c64(0.0, (1.5f64).sqrt());
        let map = build_map(&ParamPoint::quadratic(a)).unwrap();
        let opts = SolverOptions::default();
        let s = multiplier_spectrum(&map, 2, &opts).unwrap();
        assert_eq!(s.size(), 1);
        assert!(
            (s.entries[0].value - c64(1.0, 0.0)).norm() < 1e-4,
            "{}",
            s.entries[0].value
        );
        assert!(!s.generic);
    }

    #[test]
    fn divisor_route_matches_spectrum_route() {
        let map = build_map(&ParamPoint::quadratic(c64(0.35, -0.2))).unwrap();
        let opts = SolverOptions::default();
        let mut solver = CycleSolver::new(&map, opts.clone());
        for n in [1u32, 2, 3, 4, 6] {
            let s = solver.spectrum(n).unwrap();
            for &w in &[c64(1.0, 0.0), c64(0.3, 0.9), c64(-2.0, 0.1)] {
                let via_spectrum = potentials::char_poly_log(&s, w);
                let via_divisor = solver.char_poly_log_divisor(n, w).unwrap();
                assert!(
                    (via_spectrum.log_abs - via_divisor.log_abs).abs() < 1e-7,
                    "n={n} w={w}: {} vs {}",
                    via_spectrum.log_abs,
                    via_divisor.log_abs
                );
            }
        }
    }

    #[test]
    fn completeness_small_levels_quadratic() {
        let map = build_map(&ParamPoint::quadratic(c64(0.21, 0.66))).unwrap();
        let opts = SolverOptions::default();
        for n in 1..=6u32 {
            let pts = periodic_points(&map, n, &opts).unwrap();
            let total: u64 = pts.iter().map(|p| p.1 as u64).sum();
            assert_eq!(total, 1u64 << n, "level {n}");
        }
    }

    #[test]
    fn completeness_cubic_level() {
        let p = ParamPoint::new(3, vec![c64(0.4, 0.1)], c64(0.2, -0.3)).unwrap();
        let map = build_map(&p).unwrap();
        let opts = SolverOptions::default();
        for n in 1..=4u32 {
            let pts = periodic_points(&map, n, &opts).unwrap();
            let total: u64 = pts.iter().map(|p| p.1 as u64).sum();
            assert_eq!(total, 3u64.pow(n), "level {n}");
        }
    }

    #[test]
    fn warm_start_tracks_parameter_motion() {
        let opts = SolverOptions::default();
        let m1 = build_map(&ParamPoint::quadratic(c64(0.30, 0.40))).unwrap();
        let cold = solve_level_cold(&m1, &opts, 4).unwrap();
        let m2 = build_map(&ParamPoint::quadratic(c64(0.301, 0.4005))).unwrap();
        let warm = solve_level_warm(&m2, &opts, 4, &cold).unwrap();
        assert_eq!(warm.total, 16);
        let direct = solve_level_cold(&m2, &opts, 4).unwrap();
        for (a, b) in warm.clusters.iter().zip(direct.clusters.iter()) {
            assert!((a.z - b.z).norm() < 1e-8);
        }
    }

    #[test]
    fn spectrum_size_matches_cycle_count_random() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let opts = SolverOptions::default();
        for _ in 0..10 {
            let a = c64(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
            let map = build_map(&ParamPoint::quadratic(a)).unwrap();
            for n in 1..=5u32 {
                let s = multiplier_spectrum(&map, n, &opts).unwrap();
                let expected = arith::dynatomic_count(2, n).unwrap().n_cycles as u64;
                assert_eq!(s.size(), expected, "a={a} n={n}");
            }
        }
    }

    #[test]
    fn rejects_oversized_level() {
        let opts = SolverOptions { max_degree: 8, ..Default::default() };
        assert!(periodic_points(&power_map(), 4, &opts).is_err());
    }
}
