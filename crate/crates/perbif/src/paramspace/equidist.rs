//! Convergence diagnostics for the level hypersurfaces against the
//! bifurcation measure: masked L¹ distance of the level potentials from the
//! Lyapunov field, and normalized root counts per level.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cycles::SolverOptions;
use crate::error::{Error, Result};
use crate::paramspace::field::{
    field_lyapunov, scan_level_fields, GridField, LyapunovFieldEstimator,
};
use crate::paramspace::roots::{pern_roots_with_grid, PernOptions, PernRootsReport};
use crate::paramspace::slice::SliceSpec;
use crate::potentials::GreenOptions;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EquidistOptions {
    pub solver: SolverOptions,
    pub estimator: LyapunovFieldEstimator,
    pub green: GreenOptions,
    pub pern: PernOptions,
    pub seed: u64,
    /// Pixels within this many cells of a located root are masked out of the
    /// L¹ comparison (the potential has a log pole there).
    pub mask_radius_cells: u32,
}

impl EquidistOptions {
    pub fn new() -> Self {
        EquidistOptions {
            solver: SolverOptions::default(),
            estimator: LyapunovFieldEstimator::default(),
            green: GreenOptions::default(),
            pern: PernOptions::default(),
            seed: 0,
            mask_radius_cells: 2,
        }
    }
}

/// Per-`w` convergence report. All L¹ means are taken over one mask shared
/// by every level (union of root exclusions and undecided pixels), so the
/// errors are comparable across levels. Runtimes are carried in memory but
/// never serialized: report files must be byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquidistReport {
    pub w: [f64; 2],
    pub periods: Vec<u32>,
    pub l1_errors: Vec<f64>,
    pub root_counts: Vec<u64>,
    pub normalized_masses: Vec<f64>,
    #[serde(skip)]
    pub runtime_s: Vec<f64>,
    pub per_n_failures: Vec<Option<String>>,
    /// Fraction of pixels excluded from the L¹ comparison.
    pub masked_fraction: f64,
}

/// Run the equidistribution diagnostics for several `w` values at once,
/// sharing the per-pixel level solves and the Lyapunov field across all of
/// them.
pub fn equidist_reports(
    slice: &SliceSpec,
    periods: &[u32],
    ws: &[Complex64],
    opts: &EquidistOptions,
) -> Result<Vec<EquidistReport>> {
    slice.validate()?;
    if periods.is_empty() || ws.is_empty() {
        return Err(Error::Invalid("need at least one period and one w".into()));
    }
    let res = slice.resolution as usize;
    let t_scan = std::time::Instant::now();
    let (ln_fields, _scan_failures) = scan_level_fields(slice, periods, ws, &opts.solver)?;
    let scan_time = t_scan.elapsed().as_secs_f64();

    let t_l = std::time::Instant::now();
    let l_field = field_lyapunov(slice, &opts.estimator, opts.seed, &opts.green)?;
    let l_time = t_l.elapsed().as_secs_f64();

    // per-level share of the shared scan cost, by solve volume d^n
    let volumes: Vec<f64> = periods
        .iter()
        .map(|&n| (slice.d() as f64).powi(n as i32))
        .collect();
    let vol_total: f64 = volumes.iter().sum();

    let mut out = Vec::with_capacity(ws.len());
    for (wi, &w) in ws.iter().enumerate() {
        let mut roots_per_n: Vec<PernRootsReport> = Vec::with_capacity(periods.len());
        let mut pern_times = Vec::with_capacity(periods.len());
        for (ni, &n) in periods.iter().enumerate() {
            let t0 = std::time::Instant::now();
            let grid = &ln_fields[ni * ws.len() + wi];
            let rep = pern_roots_with_grid(
                slice,
                n,
                w,
                grid,
                slice.resolution,
                &opts.solver,
                &opts.pern,
            )?;
            pern_times.push(t0.elapsed().as_secs_f64());
            roots_per_n.push(rep);
        }

        // shared mask: all root neighborhoods plus every undecided pixel
        let mut mask = vec![false; res * res];
        let radius = opts.mask_radius_cells as f64 * slice.spacing();
        for rep in &roots_per_n {
            for root in &rep.roots {
                let t = Complex64::new(root.t[0], root.t[1]);
                mark_disk(&mut mask, slice, t, radius);
            }
        }
        for (i, m) in mask.iter_mut().enumerate() {
            if l_field.values[i].is_nan() {
                *m = true;
            }
        }
        for (ni, _) in periods.iter().enumerate() {
            let grid = &ln_fields[ni * ws.len() + wi];
            for (i, m) in mask.iter_mut().enumerate() {
                if grid[i].is_nan() || grid[i].is_infinite() {
                    *m = true;
                }
            }
        }
        let masked = mask.iter().filter(|&&m| m).count();
        let kept = res * res - masked;
        if kept == 0 {
            return Err(Error::Field("mask excluded every pixel".into()));
        }

        let mut l1_errors = Vec::with_capacity(periods.len());
        let mut root_counts = Vec::with_capacity(periods.len());
        let mut normalized_masses = Vec::with_capacity(periods.len());
        let mut runtime_s = Vec::with_capacity(periods.len());
        let mut per_n_failures = Vec::with_capacity(periods.len());
        for (ni, &n) in periods.iter().enumerate() {
            let grid = &ln_fields[ni * ws.len() + wi];
            let mut acc = 0.0f64;
            for i in 0..res * res {
                if !mask[i] {
                    acc += (grid[i] - l_field.values[i]).abs();
                }
            }
            l1_errors.push(acc / kept as f64);
            let count = roots_per_n[ni].count();
            root_counts.push(count);
            normalized_masses.push(count as f64 / (slice.d() as f64).powi(n as i32));
            runtime_s.push(
                pern_times[ni]
                    + scan_time * volumes[ni] / vol_total
                    + l_time / periods.len() as f64,
            );
            per_n_failures.push(roots_per_n[ni].mismatch.clone());
        }
        out.push(EquidistReport {
            w: [w.re, w.im],
            periods: periods.to_vec(),
            l1_errors,
            root_counts,
            normalized_masses,
            runtime_s,
            per_n_failures,
            masked_fraction: masked as f64 / (res * res) as f64,
        });
    }
    Ok(out)
}

/// Single-`w` wrapper around [`equidist_reports`].
pub fn equidist_report(
    slice: &SliceSpec,
    periods: &[u32],
    w: Complex64,
    opts: &EquidistOptions,
) -> Result<EquidistReport> {
    Ok(equidist_reports(slice, periods, &[w], opts)?.pop().unwrap())
}

fn mark_disk(mask: &mut [bool], slice: &SliceSpec, center: Complex64, radius: f64) {
    let res = slice.resolution;
    let Some((cx, cy)) = slice.pixel_of(center) else {
        return;
    };
    let cells = (radius / slice.spacing()).ceil() as i64 + 1;
    for dy in -cells..=cells {
        for dx in -cells..=cells {
            let ix = cx as i64 + dx;
            let iy = cy as i64 + dy;
            if ix < 0 || iy < 0 || ix >= res as i64 || iy >= res as i64 {
                continue;
            }
            let t = slice.pixel_t(ix as u32, iy as u32);
            if (t - center).norm() <= radius {
                mask[iy as usize * res as usize + ix as usize] = true;
            }
        }
    }
}

/// Reference to the shared Lyapunov field used by a report run, exposed so
/// callers can render or post-process it without recomputation.
pub fn lyapunov_field_for(
    slice: &SliceSpec,
    opts: &EquidistOptions,
) -> Result<GridField> {
    field_lyapunov(slice, &opts.estimator, opts.seed, &opts.green)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn small_report_is_deterministic_and_consistent() {
        let slice = SliceSpec::quadratic(1.0, 48).unwrap();
        let mut opts = EquidistOptions::new();
        opts.estimator = LyapunovFieldEstimator::CriticalGreen;
        let a = equidist_report(&slice, &[1, 2], c64(1.0, 0.0), &opts).unwrap();
        let b = equidist_report(&slice, &[1, 2], c64(1.0, 0.0), &opts).unwrap();
        assert_eq!(a.l1_errors, b.l1_errors);
        assert_eq!(a.root_counts, b.root_counts);
        // level 1 at w = 1 has the two neutral roots inside |a| <= 1
        assert_eq!(a.root_counts[0], 2);
        assert!((a.normalized_masses[0] - 1.0).abs() < 1e-12);
        assert!(a.masked_fraction > 0.0 && a.masked_fraction < 0.5);
    }

    #[test]
    fn rejects_empty_inputs() {
        let slice = SliceSpec::quadratic(1.0, 32).unwrap();
        let opts = EquidistOptions::new();
        assert!(equidist_reports(&slice, &[], &[c64(1.0, 0.0)], &opts).is_err());
        assert!(equidist_reports(&slice, &[1], &[], &opts).is_err());
    }
}
