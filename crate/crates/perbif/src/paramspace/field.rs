//! Real-valued fields sampled over a parameter slice: the Lyapunov function,
//! level potentials, membership/activity indicators, and the discrete
//! Laplacian mass standing in for the bifurcation measure on the slice.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith;
use crate::cycles::{solve_level_warm_from, CycleSolver, LevelRoots, SolverOptions};
use crate::error::{Error, Result};
use crate::family::build_map;
use crate::paramspace::slice::SliceSpec;
use crate::potentials::{
    green, lyapunov_critical_green, lyapunov_measure, GreenOptions,
};
use crate::util::split_seed;

/// What a grid field holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Lyapunov exponent per pixel.
    L,
    /// Level potential `d^{-n} ln |p_n(λ, w)|` per pixel.
    Ln,
    /// Truncated level potential.
    LnPlus,
    /// Discrete Laplacian mass per interior cell.
    LaplacianMass,
    /// Boundary-of-membership indicator.
    Activity,
    /// Bounded-critical-orbit indicator.
    Membership,
}

/// A sampled field over a slice. `values` is row-major, `NaN` marking pixels
/// whose defining computation could not certify a value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub slice: SliceSpec,
    pub kind: FieldKind,
    #[serde(skip)]
    pub values: Vec<f64>,
    pub n: Option<u32>,
    pub w: Option<[f64; 2]>,
    pub nan_count: u64,
    /// Total Laplacian mass, for `LaplacianMass` fields.
    pub total_mass: Option<f64>,
    /// Mass removed by clamping negative cells, reported as noise.
    pub clamped_mass: Option<f64>,
}

impl GridField {
    fn new(slice: &SliceSpec, kind: FieldKind, values: Vec<f64>) -> Self {
        let nan_count = values.iter().filter(|v| v.is_nan()).count() as u64;
        GridField {
            slice: slice.clone(),
            kind,
            values,
            n: None,
            w: None,
            nan_count,
            total_mass: None,
            clamped_mass: None,
        }
    }

    pub fn get(&self, ix: u32, iy: u32) -> f64 {
        self.values[iy as usize * self.slice.resolution as usize + ix as usize]
    }

    /// Write the raw values as little-endian f64, row-major, with a JSON
    /// sidecar describing the slice and kind.
    pub fn write(&self, bin_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(bin_path)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf)?;
        let sidecar = serde_json::to_vec_pretty(self)?;
        std::fs::write(sidecar_path, sidecar)?;
        Ok(())
    }

    pub fn read(bin_path: &Path, sidecar_path: &Path) -> Result<GridField> {
        let sidecar = std::fs::read(sidecar_path)?;
        let mut field: GridField = serde_json::from_slice(&sidecar)?;
        let mut f = std::fs::File::open(bin_path)?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf)?;
        let expected = field.slice.len() * 8;
        if buf.len() != expected {
            return Err(Error::Field(format!(
                "field binary holds {} bytes, expected {expected}",
                buf.len()
            )));
        }
        field.values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        field.nan_count = field.values.iter().filter(|v| v.is_nan()).count() as u64;
        Ok(field)
    }
}

/// Which estimator backs the per-pixel Lyapunov field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum LyapunovFieldEstimator {
    /// Backward-orbit Monte Carlo, seeded per pixel.
    EquilibriumMeasure { samples: u32, depth: u32 },
    /// `ln d + Σ g(c_k)` from the critical orbits; deterministic and smooth.
    CriticalGreen,
}

impl Default for LyapunovFieldEstimator {
    fn default() -> Self {
        LyapunovFieldEstimator::EquilibriumMeasure { samples: 1024, depth: 30 }
    }
}

/// Lyapunov field over a slice; sampler failures become NaN pixels.
pub fn field_lyapunov(
    slice: &SliceSpec,
    estimator: &LyapunovFieldEstimator,
    seed: u64,
    gopts: &GreenOptions,
) -> Result<GridField> {
    slice.validate()?;
    let res = slice.resolution;
    let rows: Vec<Vec<f64>> = (0..res)
        .into_par_iter()
        .map(|iy| {
            let mut row = Vec::with_capacity(res as usize);
            for ix in 0..res {
                let t = slice.pixel_t(ix, iy);
                let pixel_index = iy as u64 * res as u64 + ix as u64;
                let v = build_map(&slice.param_at(t))
                    .ok()
                    .and_then(|map| match estimator {
                        LyapunovFieldEstimator::EquilibriumMeasure { samples, depth } => {
                            lyapunov_measure(&map, *samples, *depth, split_seed(seed, pixel_index))
                                .ok()
                                .map(|e| e.value)
                        }
                        LyapunovFieldEstimator::CriticalGreen => {
                            lyapunov_critical_green(&map, gopts).ok().map(|e| e.value)
                        }
                    })
                    .unwrap_or(f64::NAN);
                row.push(v);
            }
            row
        })
        .collect();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    let field = GridField::new(slice, FieldKind::L, values);
    if field.nan_count as usize == field.values.len() {
        return Err(Error::Field("every pixel of the Lyapunov field failed".into()));
    }
    Ok(field)
}

/// Möbius decomposition of one level: `(k, μ(n/k), n/k)` over divisors with
/// nonvanishing Möbius factor.
pub(crate) fn level_decomposition(n: u32) -> Vec<(u32, i32, u32)> {
    arith::divisors(n)
        .into_iter()
        .filter_map(|k| {
            let mu = arith::moebius((n / k) as u64).expect("divisor is positive");
            (mu != 0).then_some((k, mu, n / k))
        })
        .collect()
}

/// Level-potential value from solved root levels:
/// `d^{-n} (1/n) Σ_{k|n} μ(n/k) Σ m ln |w - ((P^k)')^{n/k}|`.
pub(crate) fn level_potential_from_levels(
    levels: &BTreeMap<u32, LevelRoots>,
    decomposition: &[(u32, i32, u32)],
    d: u32,
    n: u32,
    w: Complex64,
) -> f64 {
    let mut acc = 0.0f64;
    for &(k, mu, r) in decomposition {
        let lr = &levels[&k];
        let mut s = 0.0f64;
        for c in &lr.clusters {
            let v = w - c.iterate_deriv.powu(r);
            s += c.multiplicity as f64 * v.norm().ln();
        }
        acc += mu as f64 * s;
    }
    acc / n as f64 * (d as f64).powi(-(n as i32))
}

/// Per-row continuation state: complete root sets for every needed level,
/// the parameter they were solved at, and the previous state for velocity
/// extrapolation.
pub(crate) struct WarmLevels {
    pub levels: BTreeMap<u32, LevelRoots>,
    pub at: Option<Complex64>,
    prev: Option<(Complex64, BTreeMap<u32, LevelRoots>)>,
}

/// Linear per-root extrapolation: predicted positions for the next solve at
/// `z + (z - z_prev) * ratio`, aligned with the current clusters. Collapses
/// the warm-start error from the full root motion down to its curvature.
fn predict_positions(
    cur: &LevelRoots,
    prev: &LevelRoots,
    ratio: Complex64,
) -> Vec<Complex64> {
    cur.clusters
        .iter()
        .map(|c| {
            let tol = 0.05 * (1.0 + c.z.norm());
            match prev.find(c.z, tol) {
                Some(p) => {
                    let step = (c.z - p.z) * ratio;
                    // clamp runaway extrapolation across curvature spikes
                    let cap = 0.02 * (1.0 + c.z.norm());
                    let step =
                        if step.norm() > cap { step * (cap / step.norm()) } else { step };
                    c.z + step
                }
                None => c.z,
            }
        })
        .collect()
}

impl WarmLevels {
    pub(crate) fn empty() -> Self {
        WarmLevels { levels: BTreeMap::new(), at: None, prev: None }
    }

    /// Snapshot for handing a row worker its own starting state.
    pub(crate) fn fork(&self) -> Self {
        WarmLevels {
            levels: self.levels.clone(),
            at: self.at,
            prev: self.prev.clone(),
        }
    }

    /// Solve all `needed` levels at the slice point `t`, warm-starting from
    /// the current state with velocity prediction. Failures subdivide the
    /// parameter path before giving up and solving cold.
    pub(crate) fn advance(
        &mut self,
        slice: &SliceSpec,
        t: Complex64,
        needed: &[u32],
        opts: &SolverOptions,
    ) -> Result<()> {
        if self.at == Some(t) && needed.iter().all(|k| self.levels.contains_key(k)) {
            return Ok(());
        }
        if self.at.is_none() || self.levels.is_empty() {
            return self.solve_cold(slice, t, needed, opts);
        }
        let from = self.at.unwrap();
        if self.advance_substep(slice, from, t, needed, opts, 5).is_err() {
            return self.solve_cold(slice, t, needed, opts);
        }
        Ok(())
    }

    fn solve_cold(
        &mut self,
        slice: &SliceSpec,
        t: Complex64,
        needed: &[u32],
        opts: &SolverOptions,
    ) -> Result<()> {
        let map = build_map(&slice.param_at(t))?;
        let mut solver = CycleSolver::new(&map, opts.clone());
        let mut fresh = BTreeMap::new();
        for &k in needed {
            fresh.insert(k, solver.level(k)?.clone());
        }
        self.levels = fresh;
        self.at = Some(t);
        self.prev = None;
        Ok(())
    }

    fn advance_substep(
        &mut self,
        slice: &SliceSpec,
        from: Complex64,
        to: Complex64,
        needed: &[u32],
        opts: &SolverOptions,
        depth: u32,
    ) -> Result<()> {
        let map = build_map(&slice.param_at(to))?;
        let old_map = build_map(&slice.param_at(from)).ok();
        let mut next = BTreeMap::new();
        let mut failed = false;
        for &k in needed {
            match self.levels.get(&k) {
                Some(seeds) => {
                    // velocity-predicted launch positions when history exists
                    let predicted = match &self.prev {
                        Some((t_prev, prev_levels)) if (from - *t_prev).norm() > 1e-30 => {
                            prev_levels.get(&k).map(|pl| {
                                let ratio = (to - from) / (from - *t_prev);
                                predict_positions(seeds, pl, ratio)
                            })
                        }
                        _ => None,
                    };
                    match solve_level_warm_from(
                        &map,
                        opts,
                        k,
                        seeds,
                        old_map.as_ref(),
                        predicted.as_deref(),
                    ) {
                        Ok(l) => {
                            next.insert(k, l);
                        }
                        Err(_) => {
                            failed = true;
                            break;
                        }
                    }
                }
                None => {
                    let mut solver = CycleSolver::new(&map, opts.clone());
                    next.insert(k, solver.level(k)?.clone());
                }
            }
        }
        if !failed {
            self.prev = Some((from, std::mem::take(&mut self.levels)));
            self.levels = next;
            self.at = Some(to);
            return Ok(());
        }
        if depth == 0 {
            return Err(Error::Field("warm continuation exhausted".into()));
        }
        let mid = 0.5 * (from + to);
        self.advance_substep(slice, from, mid, needed, opts, depth - 1)?;
        self.advance_substep(slice, mid, to, needed, opts, depth - 1)
    }
}

/// All level-potential fields for `periods × ws` in one pass over the grid,
/// sharing the per-pixel root solves across levels and evaluation points.
///
/// Column zero is continued down the rows first; each row then walks left to
/// right warm-starting from its predecessor pixel, so the expensive cold
/// solve happens once per grid rather than once per pixel. Failures leave
/// NaN at that pixel only.
pub(crate) fn scan_level_fields(
    slice: &SliceSpec,
    periods: &[u32],
    ws: &[Complex64],
    opts: &SolverOptions,
) -> Result<(Vec<Vec<f64>>, u64)> {
    slice.validate()?;
    if periods.is_empty() || ws.is_empty() {
        return Err(Error::Invalid("need at least one period and one w".into()));
    }
    let mut needed: Vec<u32> = periods
        .iter()
        .flat_map(|&n| level_decomposition(n).into_iter().map(|(k, _, _)| k))
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let max_n = *periods.iter().max().unwrap();
    crate::cycles::multiplier_spectrum_degree_check(slice.d(), max_n, opts)?;
    let decomps: Vec<Vec<(u32, i32, u32)>> =
        periods.iter().map(|&n| level_decomposition(n)).collect();
    let res = slice.resolution;

    // continuation seeds for column zero, chained down the rows
    let mut col0: Vec<Option<WarmLevels>> = Vec::with_capacity(res as usize);
    {
        let mut state = WarmLevels::empty();
        for iy in 0..res {
            let t = slice.pixel_t(0, iy);
            match state.advance(slice, t, &needed, opts) {
                Ok(()) => col0.push(Some(state.fork())),
                Err(_) => {
                    // re-seed from scratch on the next row
                    state = WarmLevels::empty();
                    col0.push(None);
                }
            }
        }
    }

    let d = slice.d();
    let nw = ws.len();
    let rows: Vec<(Vec<f64>, u64)> = col0
        .into_par_iter()
        .enumerate()
        .map(|(iy, seed_state)| {
            let iy = iy as u32;
            let mut out = vec![f64::NAN; res as usize * periods.len() * nw];
            let mut failures = 0u64;
            let mut state = seed_state.unwrap_or_else(WarmLevels::empty);
            for ix in 0..res {
                let t = slice.pixel_t(ix, iy);
                let ok = if ix == 0 && !state.levels.is_empty() {
                    true // column-zero state already sits at this pixel
                } else {
                    state.advance(slice, t, &needed, opts).is_ok()
                };
                if !ok {
                    failures += 1;
                    state = WarmLevels::empty();
                    continue;
                }
                for (ni, &n) in periods.iter().enumerate() {
                    for (wi, &w) in ws.iter().enumerate() {
                        let v = level_potential_from_levels(
                            &state.levels,
                            &decomps[ni],
                            d,
                            n,
                            w,
                        );
                        out[(ni * nw + wi) * res as usize + ix as usize] = v;
                    }
                }
            }
            (out, failures)
        })
        .collect();

    let mut fields = vec![vec![f64::NAN; slice.len()]; periods.len() * nw];
    let mut failures = 0u64;
    for (iy, (row, f)) in rows.into_iter().enumerate() {
        failures += f;
        for fi in 0..periods.len() * nw {
            let src = &row[fi * res as usize..(fi + 1) * res as usize];
            let dst_off = iy * res as usize;
            fields[fi][dst_off..dst_off + res as usize].copy_from_slice(src);
        }
    }
    Ok((fields, failures))
}

/// Level-potential field `d^{-n} ln |p_n(λ(t), w)|` over a slice.
pub fn field_level_potential(
    slice: &SliceSpec,
    n: u32,
    w: Complex64,
    opts: &SolverOptions,
) -> Result<GridField> {
    let (mut fields, _failures) = scan_level_fields(slice, &[n], &[w], opts)?;
    let mut field = GridField::new(slice, FieldKind::Ln, fields.pop().unwrap());
    field.n = Some(n);
    field.w = Some([w.re, w.im]);
    Ok(field)
}

/// Discrete bifurcation measure of a Lyapunov field: five-point Laplacian
/// times cell area over 2π, so the potential `ln |t - t0|` carries unit total
/// mass.
///
/// `total_mass` is the raw Laplacian sum, which telescopes to the boundary
/// flux and is therefore exact for potentials harmonic near the window edge.
/// Stored cell values clamp negatives (discretization ringing around the
/// poles) to zero; the removed mass is reported in `clamped_mass` as noise.
pub fn bifurcation_measure(field: &GridField) -> Result<GridField> {
    if field.kind != FieldKind::L {
        return Err(Error::Field("Laplacian mass expects a Lyapunov field".into()));
    }
    let res = field.slice.resolution as usize;
    if res < 3 {
        return Err(Error::Field("need at least a 3x3 grid".into()));
    }
    let interior = (res - 2) * (res - 2);
    let nan_interior = (1..res - 1)
        .flat_map(|iy| (1..res - 1).map(move |ix| (ix, iy)))
        .filter(|&(ix, iy)| field.values[iy * res + ix].is_nan())
        .count();
    if nan_interior * 100 > interior {
        return Err(Error::Field(format!(
            "{nan_interior} of {interior} interior pixels are undecided"
        )));
    }
    let mut values = vec![f64::NAN; res * res];
    let mut total = 0.0f64;
    let mut clamped = 0.0f64;
    let inv_two_pi = 0.5 / std::f64::consts::PI;
    for iy in 1..res - 1 {
        for ix in 1..res - 1 {
            let c = field.values[iy * res + ix];
            let up = field.values[(iy - 1) * res + ix];
            let dn = field.values[(iy + 1) * res + ix];
            let le = field.values[iy * res + ix - 1];
            let ri = field.values[iy * res + ix + 1];
            // cell area cancels against the h^2 of the stencil
            let lap = (up + dn + le + ri - 4.0 * c) * inv_two_pi;
            if lap.is_nan() {
                continue;
            }
            total += lap;
            if lap < 0.0 {
                clamped += -lap;
                values[iy * res + ix] = 0.0;
            } else {
                values[iy * res + ix] = lap;
            }
        }
    }
    let mut out = GridField::new(&field.slice, FieldKind::LaplacianMass, values);
    out.total_mass = Some(total);
    out.clamped_mass = Some(clamped);
    Ok(out)
}

/// Bounded-orbit indicator of the `i`-th marked critical point: 1 where the
/// critical orbit is certified bounded, 0 where it escapes, NaN undecided.
pub fn membership_field(
    slice: &SliceSpec,
    i: usize,
    gopts: &GreenOptions,
) -> Result<GridField> {
    slice.validate()?;
    if i > (slice.d() - 2) as usize {
        return Err(Error::Invalid(format!(
            "critical index {i} out of range for degree {}",
            slice.d()
        )));
    }
    let res = slice.resolution;
    let rows: Vec<Vec<f64>> = (0..res)
        .into_par_iter()
        .map(|iy| {
            (0..res)
                .map(|ix| {
                    let t = slice.pixel_t(ix, iy);
                    build_map(&slice.param_at(t))
                        .ok()
                        .and_then(|map| {
                            let c = map.critical_points[i];
                            green(&map, c, gopts).ok()
                        })
                        .map(|g| if g > 0.0 { 0.0 } else { 1.0 })
                        .unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect();
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    let mut field = GridField::new(slice, FieldKind::Membership, values);
    field.n = Some(i as u32);
    Ok(field)
}

/// Activity indicator: a pixel is active when the membership of the `i`-th
/// critical point differs between the pixel and one of its four neighbors.
/// The union over `i` approximates the instability locus of the slice.
pub fn activity_field(
    slice: &SliceSpec,
    i: usize,
    gopts: &GreenOptions,
) -> Result<GridField> {
    let membership = membership_field(slice, i, gopts)?;
    Ok(activity_from_membership(&membership))
}

/// Neighbor-difference detector on an existing membership field.
pub fn activity_from_membership(membership: &GridField) -> GridField {
    let res = membership.slice.resolution as usize;
    let get = |ix: isize, iy: isize| -> Option<f64> {
        if ix < 0 || iy < 0 || ix >= res as isize || iy >= res as isize {
            None
        } else {
            Some(membership.values[iy as usize * res + ix as usize])
        }
    };
    let mut values = vec![0.0f64; res * res];
    for iy in 0..res as isize {
        for ix in 0..res as isize {
            let center = get(ix, iy).unwrap();
            let mut any_nan = center.is_nan();
            let mut active = false;
            let finite_vals: Vec<f64> = [(0, 1), (0, -1), (1, 0), (-1, 0)]
                .iter()
                .filter_map(|&(dx, dy)| get(ix + dx, iy + dy))
                .inspect(|v| any_nan |= v.is_nan())
                .filter(|v| !v.is_nan())
                .collect();
            if !center.is_nan() {
                active = finite_vals.iter().any(|&v| v != center);
            } else if finite_vals.windows(2).any(|w| w[0] != w[1]) {
                // undecided pixel straddling a certified boundary is active
                active = true;
                any_nan = false;
            }
            values[iy as usize * res + ix as usize] = if active {
                1.0
            } else if any_nan {
                f64::NAN
            } else {
                0.0
            };
        }
    }
    let mut out = GridField::new(&membership.slice, FieldKind::Activity, values);
    out.n = membership.n;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::level_potential;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn synthetic_log_potential_has_unit_mass() {
        // field of ln|t - t0| over the grid: total Laplacian mass 1
        let slice = SliceSpec::quadratic(2.0, 128).unwrap();
        let t0 = c64(0.013, -0.027); // off-grid singular point
        let values: Vec<f64> = (0..128u32)
            .flat_map(|iy| {
                (0..128u32).map(move |ix| (ix, iy))
            })
            .map(|(ix, iy)| (slice.pixel_t(ix, iy) - t0).norm().ln())
            .collect();
        let field = GridField::new(&slice, FieldKind::L, values);
        let mass = bifurcation_measure(&field).unwrap();
        let total = mass.total_mass.unwrap();
        assert!((total - 1.0).abs() <= 0.02, "total mass {total}");
    }

    #[test]
    fn harmonic_field_has_no_mass() {
        let slice = SliceSpec::quadratic(1.0, 64).unwrap();
        let values: Vec<f64> = (0..64u32)
            .flat_map(|iy| (0..64u32).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| {
                let t = slice.pixel_t(ix, iy);
                t.re * t.re - t.im * t.im + 0.3 * t.re
            })
            .collect();
        let field = GridField::new(&slice, FieldKind::L, values);
        let mass = bifurcation_measure(&field).unwrap();
        assert!(mass.total_mass.unwrap() < 1e-9);
        assert!(mass.clamped_mass.unwrap() < 1e-9);
    }

    #[test]
    fn bif_measure_rejects_bad_inputs() {
        let slice = SliceSpec::quadratic(1.0, 16).unwrap();
        let mut values = vec![f64::NAN; slice.len()];
        values[0] = 1.0;
        let field = GridField::new(&slice, FieldKind::L, values);
        assert!(bifurcation_measure(&field).is_err());
        let act = GridField::new(&slice, FieldKind::Activity, vec![0.0; slice.len()]);
        assert!(bifurcation_measure(&act).is_err());
    }

    #[test]
    fn scan_matches_spectrum_route_per_pixel() {
        let slice = SliceSpec::quadratic(0.9, 8).unwrap();
        let opts = SolverOptions::default();
        let w = c64(1.0, 0.0);
        let (fields, failures) = scan_level_fields(&slice, &[1, 2], &[w], &opts).unwrap();
        assert_eq!(failures, 0);
        for iy in 0..8u32 {
            for ix in 0..8u32 {
                let t = slice.pixel_t(ix, iy);
                let map = build_map(&slice.param_at(t)).unwrap();
                for (ni, &n) in [1u32, 2].iter().enumerate() {
                    let s = crate::cycles::multiplier_spectrum(&map, n, &opts).unwrap();
                    let expected = level_potential(&s, w);
                    let got = fields[ni][iy as usize * 8 + ix as usize];
                    assert!(
                        (got - expected).abs() < 1e-8,
                        "pixel ({ix},{iy}) n={n}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn level_field_example_values() {
        // at a near 0: level-1 potential at w=1 is (1/2) ln|p_1(0,1)| = 0
        let slice = SliceSpec::quadratic(0.01, 8).unwrap();
        let f = field_level_potential(&slice, 1, c64(1.0, 0.0), &SolverOptions::default())
            .unwrap();
        for v in &f.values {
            assert!(v.abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn membership_and_activity_quadratic() {
        let slice = SliceSpec::quadratic(2.2, 48).unwrap();
        let gopts = GreenOptions::default();
        let mem = membership_field(&slice, 0, &gopts).unwrap();
        // center pixels bounded, far corners escaped
        let center = mem.get(24, 24);
        assert_eq!(center, 1.0);
        assert_eq!(mem.get(0, 0), 0.0);
        let act = activity_from_membership(&mem);
        // activity marks some pixels, and far corners are inactive
        assert!(act.values.iter().any(|&v| v == 1.0));
        assert_eq!(act.get(0, 0), 0.0);
        assert_eq!(act.get(24, 24), 0.0);
    }

    #[test]
    fn field_io_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let slice = SliceSpec::quadratic(1.0, 16).unwrap();
        let mut values: Vec<f64> = (0..256).map(|i| i as f64 * 0.5).collect();
        values[7] = f64::NAN;
        let mut field = GridField::new(&slice, FieldKind::Ln, values);
        field.n = Some(3);
        field.w = Some([1.0, 0.0]);
        let bin = dir.path().join("f.bin");
        let json = dir.path().join("f.json");
        field.write(&bin, &json).unwrap();
        let back = GridField::read(&bin, &json).unwrap();
        assert_eq!(back.kind, FieldKind::Ln);
        assert_eq!(back.n, Some(3));
        assert_eq!(back.nan_count, 1);
        assert_eq!(back.values.len(), field.values.len());
        for (a, b) in back.values.iter().zip(field.values.iter()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
}
