//! Roots of `t ↦ p_n(λ(t), w)` inside a slice window: candidate basins from
//! level-potential local minima, Newton refinement on finite differences of
//! the log, multiplicity and count certification by the argument principle.


use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cycles::SolverOptions;
use crate::family::build_map;
use crate::error::{Error, Result};
use crate::paramspace::field::{
    level_decomposition, level_potential_from_levels, scan_level_fields, WarmLevels,
};
use crate::paramspace::slice::SliceSpec;
use crate::potentials::wrap_angle;
use crate::util::cmp_complex;

/// Tunables of the slice root search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PernOptions {
    /// Acceptance bound on `|p_n(root)| / |p_n(probe)|` for a probe point a
    /// fixed offset away; a genuine zero makes this ratio collapse.
    pub accept_ratio: f64,
    /// Newton convergence tolerance, relative to the window half-width.
    pub newton_tol: f64,
    /// Initial finite-difference step, relative to the window half-width.
    pub fd_step: f64,
    pub max_newton: u32,
    /// Resolution of the candidate-detection grid (defaults to the slice's).
    pub coarse_resolution: Option<u32>,
}

impl Default for PernOptions {
    fn default() -> Self {
        PernOptions {
            accept_ratio: 1e-6,
            newton_tol: 1e-11,
            fd_step: 1e-5,
            max_newton: 60,
            coarse_resolution: None,
        }
    }
}

/// One located root of `p_n(λ(t), w)` in the window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PernRoot {
    pub t: [f64; 2],
    pub multiplicity: u32,
    /// `|p_n|^{d^{-n}}` at the refined point.
    pub residual: f64,
}

/// Root list plus the argument-principle cross-check over the window
/// boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PernRootsReport {
    pub n: u32,
    pub w: [f64; 2],
    pub roots: Vec<PernRoot>,
    /// Boundary winding number of `p_n` (count of enclosed zeros), when it
    /// could be resolved.
    pub boundary_winding: Option<i64>,
    /// Set when the winding disagrees with the located multiplicity total,
    /// or the contour could not avoid a root.
    pub mismatch: Option<String>,
}

impl PernRootsReport {
    pub fn count(&self) -> u64 {
        self.roots.iter().map(|r| r.multiplicity as u64).sum()
    }
}

/// Warm-continued evaluator of the level decomposition along arbitrary paths
/// in the slice coordinate.
struct SliceEval<'a> {
    slice: &'a SliceSpec,
    opts: &'a SolverOptions,
    needed: Vec<u32>,
    decomposition: Vec<(u32, i32, u32)>,
    n: u32,
    state: WarmLevels,
    at: Option<Complex64>,
}

impl<'a> SliceEval<'a> {
    fn new(slice: &'a SliceSpec, n: u32, opts: &'a SolverOptions) -> Self {
        let decomposition = level_decomposition(n);
        let mut needed: Vec<u32> = decomposition.iter().map(|&(k, _, _)| k).collect();
        needed.sort_unstable();
        SliceEval {
            slice,
            opts,
            needed,
            decomposition,
            n,
            state: WarmLevels::empty(),
            at: None,
        }
    }

    fn goto(&mut self, t: Complex64) -> Result<()> {
        if self.at == Some(t) {
            return Ok(());
        }
        match self.state.advance(self.slice, t, &self.needed, self.opts) {
            Ok(()) => {
                self.at = Some(t);
                Ok(())
            }
            Err(e) => {
                // stale state poisons future warm starts; drop it
                self.state = WarmLevels::empty();
                self.at = None;
                Err(e)
            }
        }
    }

    /// Unnormalized log data of `p_n^n`: `(Σ μ m ln|w - ρ^r|, Σ μ m arg(..))`.
    fn raw_log(&self, w: Complex64) -> (f64, f64) {
        let mut log_abs = 0.0f64;
        let mut arg = 0.0f64;
        for &(k, mu, r) in &self.decomposition {
            let lr = &self.state.levels[&k];
            for c in &lr.clusters {
                let v = w - c.iterate_deriv.powu(r);
                let m = c.multiplicity as f64;
                log_abs += mu as f64 * m * v.norm().ln();
                arg += mu as f64 * m * v.arg();
            }
        }
        (log_abs, arg)
    }

    /// Level potential `d^{-n} ln |p_n|` at the current state.
    fn potential(&self, w: Complex64) -> f64 {
        level_potential_from_levels(
            &self.state.levels,
            &self.decomposition,
            self.slice.d(),
            self.n,
            w,
        )
    }

    /// Term data snapshot for tracked winding: per decomposition entry, the
    /// periodic points and iterate derivatives expanded by multiplicity
    /// (constant length d^k), sorted by point position.
    fn term_snapshot(&self) -> Vec<Vec<(Complex64, Complex64)>> {
        self.decomposition
            .iter()
            .map(|&(k, _, _)| {
                let lr = &self.state.levels[&k];
                let mut v = Vec::with_capacity(lr.total as usize);
                for c in &lr.clusters {
                    for _ in 0..c.multiplicity {
                        v.push((c.z, c.iterate_deriv));
                    }
                }
                v
            })
            .collect()
    }

    /// The divisor factor closest to vanishing at `w`: the periodic point
    /// whose powered iterate derivative is nearest `w`, among levels entering
    /// with positive Möbius sign (the dynatomic part).
    fn nearest_factor(&self, w: Complex64) -> Option<(Complex64, u32)> {
        let mut best: Option<(Complex64, u32, f64)> = None;
        for &(k, mu, r) in &self.decomposition {
            if mu <= 0 {
                continue;
            }
            for c in &self.state.levels[&k].clusters {
                let d = (w - c.iterate_deriv.powu(r)).norm();
                if best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((c.z, k, d));
                }
            }
        }
        best.map(|(z, k, _)| (z, k))
    }
}

/// One cycle whose multiplier is being steered onto `w`: the cycle points at
/// the current slice coordinate, tracked by per-point Newton as `t` moves.
/// Evaluating it costs a handful of orbit iterations, against a full-level
/// solve for the whole divisor.
struct TrackedFactor {
    /// Exact period of the cycle.
    m: u32,
    /// Power such that `multiplier^power` is the factor compared with `w`.
    power: u32,
    points: Vec<Complex64>,
    t: Complex64,
}

impl TrackedFactor {
    /// Identify the cycle of the level-`k` point `z` and set up tracking.
    fn from_point(
        slice: &SliceSpec,
        t: Complex64,
        z: Complex64,
        k: u32,
        n: u32,
    ) -> Option<TrackedFactor> {
        let map = build_map(&slice.param_at(t)).ok()?;
        let mut points = vec![z];
        let mut cur = z;
        for _ in 0..k {
            cur = map.eval(cur);
            if (cur - z).norm() <= 1e-5 * (1.0 + z.norm()) {
                break;
            }
            points.push(cur);
        }
        let m = points.len() as u32;
        if k % m != 0 || n % m != 0 {
            return None;
        }
        Some(TrackedFactor { m, power: n / m, points, t })
    }

    /// Move the tracked points to slice coordinate `t`, substepping when a
    /// jump is too large for per-point Newton to stay on its root.
    fn goto(&mut self, slice: &SliceSpec, opts: &SolverOptions, t: Complex64) -> Option<()> {
        let mut pending = vec![t];
        let mut guard = 0;
        while let Some(next) = pending.last().copied() {
            guard += 1;
            if guard > 64 {
                return None;
            }
            let map = build_map(&slice.param_at(next)).ok()?;
            let gopts = crate::potentials::GreenOptions::default();
            let bound = crate::potentials::orbit_bound(&map, &gopts);
            let mut moved = Vec::with_capacity(self.points.len());
            let mut ok = true;
            for &p in &self.points {
                match newton_point(&map, self.m, p, bound, opts) {
                    Some(q) if (q - p).norm() <= 0.1 * (1.0 + p.norm()) => moved.push(q),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                self.points = moved;
                self.t = next;
                pending.pop();
            } else {
                if (next - self.t).norm() < 1e-12 {
                    return None;
                }
                pending.push(0.5 * (self.t + next));
            }
        }
        Some(())
    }

    /// The factor value `multiplier^power` at the current position.
    fn value(&self, slice: &SliceSpec) -> Option<Complex64> {
        let map = build_map(&slice.param_at(self.t)).ok()?;
        let mut rho = Complex64::new(1.0, 0.0);
        for &p in &self.points {
            rho *= map.eval_deriv(p);
        }
        Some(rho.powu(self.power))
    }
}

/// A few Newton steps on `P^m(z) = z` from a nearby start; used for tracking
/// a known cycle point as the parameter moves.
fn newton_point(
    map: &crate::family::PolynomialMap,
    m: u32,
    start: Complex64,
    bound: f64,
    _opts: &SolverOptions,
) -> Option<Complex64> {
    let mut z = start;
    for _ in 0..24 {
        let mut cur = z;
        let mut deriv = Complex64::new(1.0, 0.0);
        for _ in 0..m {
            if cur.norm_sqr() > 1e200 {
                return None;
            }
            deriv *= map.eval_deriv(cur);
            cur = map.eval(cur);
        }
        let f = cur - z;
        let fp = deriv - 1.0;
        if fp.norm_sqr() < 1e-300 {
            return None;
        }
        let step = f / fp;
        z -= step;
        if !z.is_finite() || z.norm() > 2.0 * bound {
            return None;
        }
        if step.norm() <= 1e-13 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    None
}

/// Nearest and second-nearest entries of a (re, im)-sorted list to `z`,
/// by outward scan from the real-part insertion point.
/// Returns `(best_idx, best_dist, second_idx, second_dist)`.
fn nearest_two(sorted: &[(Complex64, Complex64)], z: Complex64) -> (usize, f64, usize, f64) {
    struct Best {
        best: usize,
        best_d: f64,
        second: usize,
        second_d: f64,
    }
    fn consider(state: &mut Best, i: usize, d: f64) {
        if d < state.best_d {
            state.second_d = state.best_d;
            state.second = state.best;
            state.best_d = d;
            state.best = i;
        } else if d < state.second_d {
            state.second_d = d;
            state.second = i;
        }
    }
    let lo = sorted.partition_point(|p| p.0.re < z.re);
    let mut st = Best {
        best: usize::MAX,
        best_d: f64::INFINITY,
        second: usize::MAX,
        second_d: f64::INFINITY,
    };
    let mut r = lo;
    while r < sorted.len() && sorted[r].0.re - z.re <= st.second_d {
        consider(&mut st, r, (sorted[r].0 - z).norm());
        r += 1;
    }
    let mut l = lo;
    while l > 0 && z.re - sorted[l - 1].0.re <= st.second_d {
        l -= 1;
        consider(&mut st, l, (sorted[l].0 - z).norm());
    }
    (st.best, st.best_d, st.second, st.second_d)
}

/// Argument change of `p_n(λ(path(s)), w)` as `s` runs over `[0, 1]`, by
/// per-term tracking: every level point contributes `μ · Δarg(w - ρ^r)`
/// between consecutive samples, and steps are bisected until every term
/// moves by a small angle. Immune to the branch ambiguity of the `1/n`
/// root because the tracked object is `p_n^n`.
fn tracked_arg_change(
    eval: &mut SliceEval<'_>,
    w: Complex64,
    path: &dyn Fn(f64) -> Complex64,
    initial_segments: usize,
    max_evals: usize,
) -> Result<f64> {
    eval.goto(path(0.0))?;
    let mut prev_terms = eval.term_snapshot();
    let mut prev_s = 0.0f64;
    let mut total = 0.0f64;
    let mut evals = 0usize;
    let min_ds = 1.0 / (initial_segments as f64 * 512.0);
    let mut ds = 1.0 / initial_segments as f64;
    while prev_s < 1.0 {
        let s = (prev_s + ds).min(1.0);
        if eval.goto(path(s)).is_err() {
            if ds * 0.5 >= min_ds {
                ds *= 0.5;
                continue;
            }
            return Err(Error::Field("level solve failed on the contour".into()));
        }
        evals += 1;
        if evals > max_evals {
            return Err(Error::Field("winding evaluation budget exhausted".into()));
        }
        let terms = eval.term_snapshot();
        let mut delta = 0.0f64;
        let mut too_fast = false;
        'outer: for (ti, &(_, mu, r)) in eval.decomposition.iter().enumerate() {
            let old = &prev_terms[ti];
            let new = &terms[ti];
            if old.len() != new.len() {
                too_fast = true;
                break;
            }
            for nw_ in new.iter() {
                // pair each point with its predecessor by proximity; sort
                // order is useless here because lexicographic order swaps
                // while the points barely move
                let (bi, bd, si, sd) = nearest_two(old, nw_.0);
                if bi == usize::MAX {
                    too_fast = true;
                    break 'outer;
                }
                let a1 = (w - nw_.1.powu(r)).arg();
                let a0 = (w - old[bi].1.powu(r)).arg();
                if bd > (0.35 * sd).max(1e-12) && si != usize::MAX {
                    // ambiguous pairing: harmless only when the near-equal
                    // candidates carry the same argument anyway (collisions)
                    let alt = (w - old[si].1.powu(r)).arg();
                    if wrap_angle(alt - a0).abs() > 0.3 {
                        too_fast = true;
                        break 'outer;
                    }
                }
                let da = wrap_angle(a1 - a0);
                if !da.is_finite() || da.abs() > 1.0 {
                    too_fast = true;
                    break 'outer;
                }
                delta += mu as f64 * da;
            }
        }
        if too_fast {
            if ds * 0.5 >= min_ds {
                ds *= 0.5;
                // rewind to the previous sample
                eval.goto(path(prev_s))?;
                continue;
            }
            return Err(Error::Field(
                "argument moves too fast on the contour (root nearby)".into(),
            ));
        }
        total += delta;
        prev_terms = terms;
        prev_s = s;
        ds = (ds * 1.6).min(1.0 / initial_segments as f64);
    }
    Ok(total / eval.n as f64)
}

/// Rectangle path through the corners of `center ± half(1, i)`.
fn rect_path(center: Complex64, half: f64) -> impl Fn(f64) -> Complex64 {
    move |s: f64| {
        let s = s.clamp(0.0, 1.0) * 4.0;
        let seg = (s.floor() as usize).min(3);
        let f = s - seg as f64;
        let c = [
            center + Complex64::new(-half, -half),
            center + Complex64::new(half, -half),
            center + Complex64::new(half, half),
            center + Complex64::new(-half, half),
        ];
        let a = c[seg];
        let b = c[(seg + 1) % 4];
        a + (b - a) * f
    }
}

fn circle_path(center: Complex64, radius: f64) -> impl Fn(f64) -> Complex64 {
    move |s: f64| center + Complex64::from_polar(radius, std::f64::consts::TAU * s)
}

/// Strict-or-plateau local minima of a grid, as pixel coordinates.
fn grid_local_minima(values: &[f64], res: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for iy in 0..res {
        for ix in 0..res {
            let v = values[iy * res + ix];
            if v.is_nan() {
                continue;
            }
            let mut is_min = true;
            let mut strictly_below = false;
            for (dx, dy) in [(0i64, 1i64), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx < 0 || jy < 0 || jx >= res as i64 || jy >= res as i64 {
                    continue;
                }
                let u = values[jy as usize * res + jx as usize];
                if u.is_nan() {
                    continue;
                }
                if u < v {
                    is_min = false;
                    break;
                }
                if u > v {
                    strictly_below = true;
                }
            }
            if is_min && strictly_below {
                out.push((ix as u32, iy as u32));
            }
        }
    }
    out
}

/// Refine a candidate by steering the vanishing factor itself: Newton in `t`
/// on `g(t) = multiplier(t)^power - w` with the underlying cycle tracked by
/// per-point Newton. Each evaluation costs a few orbit iterations instead of
/// a full-level solve. Falls back to `None` (full refinement) when tracking
/// breaks.
fn refine_candidate_tracked(
    eval: &mut SliceEval<'_>,
    w: Complex64,
    start: Complex64,
    opts: &PernOptions,
    deflate: &[Complex64],
) -> Option<Complex64> {
    let hw = eval.slice.half_width;
    let center = eval.slice.center;
    eval.goto(start).ok()?;
    let (z, k) = eval.nearest_factor(w)?;
    let mut factor = TrackedFactor::from_point(eval.slice, start, z, k, eval.n)?;
    let mut t = start;
    let mut h = (opts.fd_step * hw).max(1e-9 * hw);
    let h_floor = (opts.newton_tol * hw * 0.25).max(1e-14 * hw);
    let g_at = |factor: &mut TrackedFactor, t: Complex64| -> Option<Complex64> {
        factor.goto(eval.slice, eval.opts, t)?;
        let mut g = factor.value(eval.slice)? - w;
        // divide out known zeros to expose remaining partners
        for &t0 in deflate {
            let den = t - t0;
            if den.norm() < 1e-13 {
                return None;
            }
            g /= den;
        }
        Some(g)
    };
    let mut cur_mag = g_at(&mut factor, t)?.norm();
    for _ in 0..opts.max_newton {
        let gp = g_at(&mut factor, t + Complex64::new(h, 0.0))?;
        let gm = g_at(&mut factor, t - Complex64::new(h, 0.0))?;
        let dg = (gp - gm) / (2.0 * h);
        if dg.norm() < 1e-14 {
            return None;
        }
        let g0 = g_at(&mut factor, t)?;
        let mut step = g0 / dg;
        let cap = 0.2 * hw;
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        let t_new = t - step;
        if (t_new - center).re.abs() > 1.6 * hw || (t_new - center).im.abs() > 1.6 * hw {
            return None;
        }
        let mag_new = g_at(&mut factor, t_new)?.norm();
        if mag_new <= cur_mag || step.norm() <= 4.0 * h {
            t = t_new;
            cur_mag = mag_new;
            if step.norm() <= opts.newton_tol * hw {
                return Some(t);
            }
            h = (0.2 * step.norm()).clamp(h_floor, opts.fd_step * hw);
        } else {
            h = (h * 0.3).max(h_floor);
        }
    }
    None
}

/// Newton refinement of one candidate through central differences of
/// `log p_n`, with the step size tied to the convergence state and a
/// Richardson fallback when the derivative nearly vanishes.
fn refine_candidate(
    eval: &mut SliceEval<'_>,
    w: Complex64,
    start: Complex64,
    opts: &PernOptions,
    deflate: &[Complex64],
) -> Option<Complex64> {
    let hw = eval.slice.half_width;
    let center = eval.slice.center;
    let nf = eval.n as f64;
    let mut t = start;
    let mut h = opts.fd_step * hw;
    let h_floor = (opts.newton_tol * hw * 0.5).max(1e-13 * hw);
    let dlog_at = |eval: &mut SliceEval<'_>, t: Complex64, h: f64| -> Option<Complex64> {
        let tp = t + Complex64::new(h, 0.0);
        let tm = t - Complex64::new(h, 0.0);
        eval.goto(tp).ok()?;
        let (la_p, ar_p) = eval.raw_log(w);
        eval.goto(tm).ok()?;
        let (la_m, ar_m) = eval.raw_log(w);
        let diff = Complex64::new(la_p - la_m, wrap_angle(ar_p - ar_m));
        let mut d = diff / (2.0 * h * nf);
        for &t0 in deflate {
            // divide out a known zero: d log(p/(t-t0)) = d log p - 1/(t-t0)
            let den = t - t0;
            if den.norm() < 1e-13 {
                return None;
            }
            d -= den.inv();
        }
        Some(d)
    };
    let value_at = |eval: &mut SliceEval<'_>, t: Complex64| -> Option<f64> {
        eval.goto(t).ok()?;
        let mut v = eval.raw_log(w).0;
        for &t0 in deflate {
            v -= nf * (t - t0).norm().ln();
        }
        Some(v)
    };
    let mut cur_val = value_at(eval, t)?;
    for _ in 0..opts.max_newton {
        let mut dlog = dlog_at(eval, t, h)?;
        if dlog.norm() < 1e-12 {
            // Richardson: d ≈ (4 D(h/2) - D(h)) / 3
            let fine = dlog_at(eval, t, h * 0.5)?;
            dlog = (4.0 * fine - dlog) / 3.0;
            if dlog.norm() < 1e-14 {
                return None;
            }
        }
        let mut step = dlog.inv();
        let cap = 0.25 * hw;
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        let t_new = t - step;
        if (t_new - center).re.abs() > 1.6 * hw || (t_new - center).im.abs() > 1.6 * hw {
            return None;
        }
        // only descend: once the iterate sits within h of the root the
        // difference quotient straddles the pole and would kick it back out
        let val_new = value_at(eval, t_new)?;
        if val_new <= cur_val {
            t = t_new;
            cur_val = val_new;
            if step.norm() <= opts.newton_tol * hw {
                return Some(t);
            }
            h = (0.2 * step.norm()).max(h_floor).min(opts.fd_step * hw);
        } else {
            h *= 0.2;
            if h < h_floor {
                return (step.norm() <= 1e3 * opts.newton_tol * hw).then_some(t);
            }
        }
    }
    None
}

/// Roots of `p_n(λ(t), w)` in the slice window: candidates, refined roots
/// with multiplicity from per-root windings, and the boundary winding check.
pub fn pern_roots_in_slice(
    slice: &SliceSpec,
    n: u32,
    w: Complex64,
    solver: &SolverOptions,
    opts: &PernOptions,
) -> Result<PernRootsReport> {
    let coarse = match opts.coarse_resolution {
        Some(r) => {
            let mut s = slice.clone();
            s.resolution = r;
            s.validate()?;
            s
        }
        None => slice.clone(),
    };
    let (fields, _failures) = scan_level_fields(&coarse, &[n], &[w], solver)?;
    pern_roots_with_grid(slice, n, w, &fields[0], coarse.resolution, solver, opts)
}

/// Core root search given a precomputed candidate grid of the level
/// potential at `coarse_res`.
pub(crate) fn pern_roots_with_grid(
    slice: &SliceSpec,
    n: u32,
    w: Complex64,
    grid: &[f64],
    coarse_res: u32,
    solver: &SolverOptions,
    opts: &PernOptions,
) -> Result<PernRootsReport> {
    let mut coarse = slice.clone();
    coarse.resolution = coarse_res;
    let mut eval = SliceEval::new(slice, n, solver);

    // candidate pixels, walked in row-major order so warm starts stay local
    let candidates = grid_local_minima(grid, coarse_res as usize);
    let mut refined: Vec<Complex64> = Vec::new();
    let mut fails = 0usize;
    for &(ix, iy) in &candidates {
        let start = coarse.pixel_t(ix, iy);
        // several roots often share one grid basin (doubling points sit a
        // fraction of a cell from their cusp); keep deflating what was found
        // and rerunning until the basin is exhausted
        let mut basin: Vec<Complex64> = Vec::new();
        for _ in 0..4 {
            let got = refine_candidate_tracked(&mut eval, w, start, opts, &basin)
                .or_else(|| refine_candidate(&mut eval, w, start, opts, &basin));
            match got {
                Some(t)
                    if basin
                        .iter()
                        .all(|&b| (b - t).norm() > 1e-9 * coarse.half_width) =>
                {
                    if slice.contains(t) {
                        refined.push(t);
                    }
                    basin.push(t);
                }
                _ => break,
            }
        }
        if basin.is_empty() {
            fails += 1;
        }
    }
    if std::env::var_os("PERBIF_DEBUG_ROOTS").is_some() {
        eprintln!(
            "pern n={n}: {} candidates, {} refine failures, {} refined",
            candidates.len(),
            fails,
            refined.len()
        );
    }
    let roots = certify_roots(&mut eval, slice, w, refined, opts)?;

    // boundary winding over a contour pushed off the window edge a hair
    let mut mismatch = None;
    let run_winding = |eval: &mut SliceEval<'_>, margin: f64, segs: usize| -> Result<i64> {
        let total = tracked_arg_change(
            eval,
            w,
            &rect_path(slice.center, slice.half_width * (1.0 + margin)),
            segs,
            200_000,
        )?;
        let turns = total / std::f64::consts::TAU;
        let rounded = turns.round() as i64;
        if (turns - rounded as f64).abs() > 0.25 {
            return Err(Error::Field(format!("winding did not resolve: {turns}")));
        }
        Ok(rounded)
    };
    let segs = 128.max(2 * (roots.len() + 4));
    let mut boundary_winding = None;
    let mut last_err = String::new();
    for &(margin, sf) in &[(2e-6, 1usize), (9e-4, 2), (2.3e-3, 3), (4.7e-3, 3)] {
        match run_winding(&mut eval, margin, segs * sf) {
            Ok(wd) => {
                boundary_winding = Some(wd);
                break;
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    if boundary_winding.is_none() {
        mismatch = Some(format!("boundary winding failed: {last_err}"));
    }
    // a root hugging the contour can slip a full turn between samples; a
    // displaced, finer contour arbitrates any disagreement with the count
    if boundary_winding.is_some_and(|wd| wd != roots.iter().map(|r| r.multiplicity as i64).sum::<i64>())
    {
        if let Ok(w2) = run_winding(&mut eval, 7e-4, 3 * segs) {
            if Some(w2) != boundary_winding {
                boundary_winding = Some(w2);
            }
        }
    }
    let mut report = PernRootsReport {
        n,
        w: [w.re, w.im],
        roots,
        boundary_winding,
        mismatch,
    };
    if let Some(wind) = report.boundary_winding {
        let have = report.count() as i64;
        if wind != have {
            // rescue: winding-bisect the window to localize whatever the
            // candidate pass missed, then recount
            if let Ok(extra) = rescue_missing(&mut eval, slice, w, &report, opts) {
                if !extra.is_empty() {
                    let mut all: Vec<Complex64> = report
                        .roots
                        .iter()
                        .map(|r| Complex64::new(r.t[0], r.t[1]))
                        .collect();
                    all.extend(extra);
                    report.roots = certify_roots(&mut eval, slice, w, all, opts)?;
                }
            }
            let have = report.count() as i64;
            if wind != have {
                report.mismatch = Some(format!(
                    "winding/count mismatch: boundary winding {wind}, located {have}"
                ));
            }
        }
    }
    Ok(report)
}

/// Probe-ratio verification that `t` is a genuine zero of the level
/// characteristic polynomial: the value must collapse relative to the
/// largest of three nearby probes.
fn verify_zero(
    eval: &mut SliceEval<'_>,
    w: Complex64,
    t: Complex64,
    opts: &PernOptions,
) -> bool {
    let hw = eval.slice.half_width;
    let probe_r = 1.9e-3 * hw;
    if eval.goto(t).is_err() {
        return false;
    }
    let (root_raw, _) = eval.raw_log(w);
    let mut probe_best = f64::NEG_INFINITY;
    for &ang in &[0.49f64, 2.63, 4.41] {
        if eval.goto(t + Complex64::from_polar(probe_r, ang)).is_ok() {
            probe_best = probe_best.max(eval.raw_log(w).0);
        }
    }
    let ratio_ln = (root_raw - probe_best) / eval.n as f64;
    ratio_ln <= opts.accept_ratio.ln()
}

/// Merge refined points, measure per-root multiplicities by small-circle
/// windings, and attach residuals.
fn certify_roots(
    eval: &mut SliceEval<'_>,
    slice: &SliceSpec,
    w: Complex64,
    mut refined: Vec<Complex64>,
    opts: &PernOptions,
) -> Result<Vec<PernRoot>> {
    let hw = slice.half_width;
    refined.sort_by(cmp_complex);
    let merge_tol = 1e-6 * hw;
    let mut merged: Vec<Complex64> = Vec::new();
    for t in refined {
        if merged.last().map_or(true, |_| {
            merged.iter().all(|m| (m - t).norm() > merge_tol)
        }) {
            merged.push(t);
        }
    }
    let probe_r = 1.9e-3 * hw;
    let mut out = Vec::with_capacity(merged.len());
    for (i, &t) in merged.iter().enumerate() {
        // acceptance: the value must collapse relative to nearby probes; the
        // probe reference is the *largest* of three directions so that a
        // neighboring root blocking one direction cannot veto a genuine zero
        if eval.goto(t).is_err() {
            // the level solve degenerates exactly on parabolic loci;
            // evaluate a hair off the point, expecting the collapse a
            // genuine simple zero would show from that offset
            let off = 1e-8 * hw;
            let t_off = t + Complex64::from_polar(off, 1.234);
            if eval.goto(t_off).is_ok() {
                let (off_raw, _) = eval.raw_log(w);
                let mut probe_best = f64::NEG_INFINITY;
                for &ang in &[0.49f64, 2.63, 4.41] {
                    if eval.goto(t + Complex64::from_polar(probe_r, ang)).is_ok() {
                        probe_best = probe_best.max(eval.raw_log(w).0);
                    }
                }
                let ratio_ln = (off_raw - probe_best) / eval.n as f64;
                let expected = (off / probe_r).ln();
                if ratio_ln <= expected + 3.4 {
                    out.push(PernRoot {
                        t: [t.re, t.im],
                        multiplicity: 1,
                        residual: f64::NAN,
                    });
                }
            }
            continue;
        }
        let (root_raw, _) = eval.raw_log(w);
        let residual = eval.potential(w).exp();
        let mut probe_best = f64::NEG_INFINITY;
        for &ang in &[0.49f64, 2.63, 4.41] {
            if eval.goto(t + Complex64::from_polar(probe_r, ang)).is_ok() {
                probe_best = probe_best.max(eval.raw_log(w).0);
            }
        }
        let ratio_ln = (root_raw - probe_best) / eval.n as f64;
        if !(ratio_ln <= opts.accept_ratio.ln()) {
            continue; // not a genuine zero (NaN compares false too)
        }
        let nearest = merged
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, m)| (m - t).norm())
            .fold(f64::INFINITY, f64::min);
        let radius = (nearest / 3.0)
            .min(5e-4 * hw)
            .max(1e-7 * hw);
        let mult = match tracked_arg_change(eval, w, &circle_path(t, radius), 24, 40_000) {
            Ok(total) => {
                let turns = total / std::f64::consts::TAU;
                let rounded = turns.round();
                if (turns - rounded).abs() < 0.25 {
                    // zero turns is the argument-principle veto: the family
                    // can dip within e^{-200} of vanishing without a zero,
                    // far below anything a value test can call
                    rounded as i64
                } else {
                    1
                }
            }
            Err(_) => 1,
        };
        if mult < 1 {
            continue;
        }
        out.push(PernRoot { t: [t.re, t.im], multiplicity: mult as u32, residual });
    }
    Ok(out)
}

/// Winding-guided bisection: recursively split the window into quadrants,
/// compare each quadrant's boundary winding with the roots located inside,
/// and chase residual deficits into small boxes where refinement from the
/// box center can reach whatever the candidate grid missed. Only roots that
/// pass probe verification are returned: windings near parabolic
/// degeneracies can slip a turn, so they steer the search but never certify
/// by themselves.
fn rescue_missing(
    eval: &mut SliceEval<'_>,
    slice: &SliceSpec,
    w: Complex64,
    report: &PernRootsReport,
    opts: &PernOptions,
) -> Result<Vec<Complex64>> {
    let mut found = Vec::new();
    let known: Vec<(Complex64, u32)> = report
        .roots
        .iter()
        .map(|r| (Complex64::new(r.t[0], r.t[1]), r.multiplicity))
        .collect();
    rescue_box(
        eval,
        slice,
        w,
        slice.center,
        slice.half_width * (1.0 + 2e-6),
        &known,
        opts,
        24,
        &mut found,
    )?;
    Ok(found)
}

#[allow(clippy::too_many_arguments)]
fn rescue_box(
    eval: &mut SliceEval<'_>,
    slice: &SliceSpec,
    w: Complex64,
    center: Complex64,
    half: f64,
    known: &[(Complex64, u32)],
    opts: &PernOptions,
    depth: u32,
    found: &mut Vec<Complex64>,
) -> Result<()> {
    let contains = |t: Complex64| -> bool {
        (t - center).re.abs() <= half && (t - center).im.abs() <= half
    };
    let have = |found: &Vec<Complex64>| -> u64 {
        known
            .iter()
            .filter(|(t, _)| contains(*t))
            .map(|(_, m)| *m as u64)
            .sum::<u64>()
            + found.iter().filter(|&&t| contains(t)).count() as u64
    };
    let dbg = std::env::var_os("PERBIF_DEBUG_ROOTS").is_some();
    let segments = if half > slice.half_width / 128.0 { 48 } else { 16 };
    // contours land near roots or degeneracies now and then; nudge and retry
    let mut wind_opt = None;
    for &grow in &[1.0f64, 1.031, 0.953, 1.077] {
        match tracked_arg_change(eval, w, &rect_path(center, half * grow), segments, 60_000) {
            Ok(total) => {
                let turns = total / std::f64::consts::TAU;
                let rounded = turns.round();
                if (turns - rounded).abs() <= 0.25 {
                    wind_opt = Some((rounded as i64, grow));
                    break;
                }
            }
            Err(_) => continue,
        }
    }
    let Some((wind, grow)) = wind_opt else {
        if dbg {
            eprintln!("  box {center} half {half:.3e}: winding unresolved after nudges");
        }
        return Ok(());
    };
    let half = half * grow;
    let deficit = wind - have(found) as i64;
    if std::env::var_os("PERBIF_DEBUG_ROOTS").is_some() && deficit != 0 {
        eprintln!("  box {center} half {half:.3e} depth {depth}: wind {wind} have {} deficit {deficit}", have(found));
    }
    if deficit <= 0 {
        return Ok(());
    }
    // try to refine from the box center before splitting further
    let fresh = |t: Complex64, found: &Vec<Complex64>| -> bool {
        known.iter().all(|(tk, _)| (tk - t).norm() > 1e-6 * slice.half_width)
            && found.iter().all(|&tf| (tf - t).norm() > 1e-6 * slice.half_width)
    };
    let mut near: Vec<Complex64> = known
        .iter()
        .map(|&(tk, _)| tk)
        .chain(found.iter().copied())
        .filter(|tk| (tk - center).norm() < 4.0 * half)
        .collect();
    near.sort_by(|a, b| {
        (a - center)
            .norm()
            .partial_cmp(&(b - center).norm())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    near.truncate(3);
    let attempts: Vec<Vec<Complex64>> = (0..=near.len())
        .map(|k| near[..k].to_vec())
        .collect();
    for attempt in &attempts {
        let got = refine_candidate_tracked(eval, w, center, opts, attempt)
            .or_else(|| refine_candidate(eval, w, center, opts, attempt));
        if let Some(t) = got {
            if contains(t)
                && slice.contains(t)
                && fresh(t, found)
                && verify_zero(eval, w, t, opts)
            {
                found.push(t);
                if wind - (have(found) as i64) <= 0 {
                    return Ok(());
                }
            }
        }
    }
    if depth > 0 && half > 2e-8 * slice.half_width {
        // recurse into quadrants, split point nudged off any root lattice
        let q = half * 0.5;
        let nudge = half * 3.1e-5;
        for (dx, dy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
            rescue_box(
                eval,
                slice,
                w,
                center + Complex64::new(dx * q + nudge, dy * q + nudge),
                q * (1.0 + 1e-4),
                known,
                opts,
                depth - 1,
                found,
            )?;
        }
        return Ok(());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn landmark_level_one_neutral() {
        // p_1(a, 1) = 2a^2 - 1: simple roots at ±1/sqrt(2)
        let slice = SliceSpec::quadratic(1.0, 96).unwrap();
        let rep = pern_roots_in_slice(
            &slice,
            1,
            c64(1.0, 0.0),
            &SolverOptions::default(),
            &PernOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.mismatch, None, "{:?}", rep.mismatch);
        assert_eq!(rep.count(), 2);
        let target = 0.5f64.sqrt();
        for sign in [-1.0, 1.0] {
            let want = c64(sign * target, 0.0);
            assert!(
                rep.roots
                    .iter()
                    .any(|r| (Complex64::new(r.t[0], r.t[1]) - want).norm() < 1e-8),
                "missing root near {want}"
            );
        }
        assert_eq!(rep.boundary_winding, Some(2));
    }

    #[test]
    fn landmark_level_one_superattracting() {
        // p_1(a, 0) = 2a^2: double root at 0
        let slice = SliceSpec::quadratic(1.0, 96).unwrap();
        let rep = pern_roots_in_slice(
            &slice,
            1,
            c64(0.0, 0.0),
            &SolverOptions::default(),
            &PernOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.count(), 2);
        assert_eq!(rep.roots.len(), 1);
        assert!(rep.roots[0].t[0].hypot(rep.roots[0].t[1]) < 1e-8);
        assert_eq!(rep.roots[0].multiplicity, 2);
    }

    #[test]
    fn landmark_level_two_superattracting() {
        // level-2 center: a^2 = -2, roots ±i sqrt(2)
        let slice = SliceSpec::quadratic(1.8, 128).unwrap();
        let rep = pern_roots_in_slice(
            &slice,
            2,
            c64(0.0, 0.0),
            &SolverOptions::default(),
            &PernOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.count(), 2, "{:?}", rep.roots);
        let target = 2.0f64.sqrt();
        for sign in [-1.0, 1.0] {
            let want = c64(0.0, sign * target);
            assert!(
                rep.roots
                    .iter()
                    .any(|r| (Complex64::new(r.t[0], r.t[1]) - want).norm() < 1e-8),
                "missing root near {want}"
            );
        }
    }
}
