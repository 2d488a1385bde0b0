//! Affine one-complex-dimensional slices of parameter space, discretized
//! into square pixel grids.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::ParamPoint;

/// A complex line `λ(t) = base + t · direction` with a square window in `t`
/// (center, half-width) sampled at `resolution × resolution` pixel centers.
/// Rows run along the real axis of `t`, row-major from low to high imaginary
/// part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SliceRepr", into = "SliceRepr")]
pub struct SliceSpec {
    pub base: ParamPoint,
    pub dir_c: Vec<Complex64>,
    pub dir_a: Complex64,
    pub center: Complex64,
    pub half_width: f64,
    pub resolution: u32,
}

#[derive(Serialize, Deserialize)]
struct DirRepr {
    #[serde(default)]
    c: Vec<[f64; 2]>,
    a: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct SliceRepr {
    base: ParamPoint,
    direction: DirRepr,
    center: [f64; 2],
    half_width: f64,
    resolution: u32,
}

impl From<SliceSpec> for SliceRepr {
    fn from(s: SliceSpec) -> Self {
        SliceRepr {
            base: s.base,
            direction: DirRepr {
                c: s.dir_c.iter().map(|z| [z.re, z.im]).collect(),
                a: [s.dir_a.re, s.dir_a.im],
            },
            center: [s.center.re, s.center.im],
            half_width: s.half_width,
            resolution: s.resolution,
        }
    }
}

impl TryFrom<SliceRepr> for SliceSpec {
    type Error = String;
    fn try_from(r: SliceRepr) -> std::result::Result<Self, String> {
        let s = SliceSpec {
            base: r.base,
            dir_c: r.direction.c.iter().map(|z| Complex64::new(z[0], z[1])).collect(),
            dir_a: Complex64::new(r.direction.a[0], r.direction.a[1]),
            center: Complex64::new(r.center[0], r.center[1]),
            half_width: r.half_width,
            resolution: r.resolution,
        };
        s.validate().map_err(|e| e.to_string())?;
        Ok(s)
    }
}

impl SliceSpec {
    /// The standard slice for the quadratic family: parameter `a` itself,
    /// window centered at the origin.
    pub fn quadratic(half_width: f64, resolution: u32) -> Result<Self> {
        let s = SliceSpec {
            base: ParamPoint::quadratic(Complex64::new(0.0, 0.0)),
            dir_c: Vec::new(),
            dir_a: Complex64::new(1.0, 0.0),
            center: Complex64::new(0.0, 0.0),
            half_width,
            resolution,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.dir_c.len() != self.base.c.len() {
            return Err(Error::Invalid(
                "slice direction has the wrong number of components".into(),
            ));
        }
        let dir_norm = self
            .dir_c
            .iter()
            .map(|z| z.norm())
            .fold(self.dir_a.norm(), f64::max);
        if dir_norm == 0.0 {
            return Err(Error::Invalid("slice direction must be nonzero".into()));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::Invalid("slice window must have positive area".into()));
        }
        if self.resolution < 8 || self.resolution > 4096 {
            return Err(Error::Invalid(format!(
                "resolution {} outside the supported 8..=4096",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn d(&self) -> u32 {
        self.base.d
    }

    /// Parameter at slice coordinate `t`.
    pub fn param_at(&self, t: Complex64) -> ParamPoint {
        ParamPoint {
            d: self.base.d,
            c: self
                .base
                .c
                .iter()
                .zip(self.dir_c.iter())
                .map(|(b, d)| b + t * d)
                .collect(),
            a: self.base.a + t * self.dir_a,
        }
    }

    /// Pixel spacing in `t`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.resolution as f64
    }

    /// Center of pixel `(ix, iy)`; `ix` along the real axis.
    pub fn pixel_t(&self, ix: u32, iy: u32) -> Complex64 {
        let res = self.resolution as f64;
        let fx = (2.0 * (ix as f64 + 0.5) / res - 1.0) * self.half_width;
        let fy = (2.0 * (iy as f64 + 0.5) / res - 1.0) * self.half_width;
        self.center + Complex64::new(fx, fy)
    }

    /// Pixel containing `t`, if inside the window.
    pub fn pixel_of(&self, t: Complex64) -> Option<(u32, u32)> {
        let rel = t - self.center;
        let res = self.resolution as f64;
        let ix = ((rel.re / self.half_width + 1.0) * 0.5 * res).floor();
        let iy = ((rel.im / self.half_width + 1.0) * 0.5 * res).floor();
        if ix < 0.0 || iy < 0.0 || ix >= res || iy >= res {
            None
        } else {
            Some((ix as u32, iy as u32))
        }
    }

    pub fn len(&self) -> usize {
        self.resolution as usize * self.resolution as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when `t` lies inside the (closed) window.
    pub fn contains(&self, t: Complex64) -> bool {
        let rel = t - self.center;
        rel.re.abs() <= self.half_width && rel.im.abs() <= self.half_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_geometry_round_trip() {
        let s = SliceSpec::quadratic(1.6, 64).unwrap();
        assert!((s.spacing() - 0.05).abs() < 1e-15);
        let t = s.pixel_t(10, 20);
        assert_eq!(s.pixel_of(t), Some((10, 20)));
        // pixel centers never hit the window center exactly (even resolution)
        for ix in 0..64 {
            for iy in 0..64 {
                assert!(s.pixel_t(ix, iy).norm() > 1e-12);
            }
        }
    }

    #[test]
    fn param_at_moves_along_direction() {
        let s = SliceSpec::quadratic(1.0, 16).unwrap();
        let p = s.param_at(Complex64::new(0.25, -0.5));
        assert_eq!(p.a, Complex64::new(0.25, -0.5));
    }

    #[test]
    fn validation_rejects_degenerate_windows() {
        assert!(SliceSpec::quadratic(0.0, 64).is_err());
        assert!(SliceSpec::quadratic(1.0, 4).is_err());
        assert!(SliceSpec::quadratic(1.0, 8192).is_err());
        let mut s = SliceSpec::quadratic(1.0, 64).unwrap();
        s.dir_a = Complex64::new(0.0, 0.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn slice_json_round_trip() {
        let s = SliceSpec::quadratic(1.6, 128).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        let back: SliceSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
