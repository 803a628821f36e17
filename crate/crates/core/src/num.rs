//! Scalar numerical kernels: standard normal functions, composite Simpson
//! grids and bracketed root finding.
//!
//! The normal CDF is built on `libm::erfc`, which is accurate to a few ulp
//! across the whole real line, so tail probabilities keep full relative
//! precision well past |x| = 8.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

/// Default tolerance for z-scale boundaries.
pub const Z_TOL: f64 = 1e-8;
/// Default tolerance for probability-scale unknowns.
pub const PROB_TOL: f64 = 1e-6;

const MAX_ROOT_ITER: usize = 200;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, `Φ(x)`.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(x)`, without cancellation for large `x`.
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, finite for every finite `x`.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return norm_cdf(x).ln();
    }
    // Mills-ratio asymptotic series; four terms are exact to double
    // precision for x <= -30.
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
}

/// `ln(1 − Φ(x))`.
#[inline]
pub fn log_norm_sf(x: f64) -> f64 {
    log_norm_cdf(-x)
}

/// Inverse of the standard normal CDF.
///
/// Wichura's AS 241 rational approximation followed by one Halley step
/// against `norm_cdf`, which brings the round trip to a few ulp.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            value: p,
            domain: "(0, 1)",
        });
    }
    let x = as241(p);
    // Halley refinement, done on whichever tail keeps precision.
    let (err, dens) = if p < 0.5 {
        (norm_cdf(x) - p, norm_pdf(x))
    } else {
        (-(norm_sf(x) - (1.0 - p)), norm_pdf(x))
    };
    if dens == 0.0 {
        return Ok(x);
    }
    let u = err / dens;
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Upper-tail quantile `q_p` with `1 − Φ(q_p) = p`.
#[inline]
pub fn upper_quantile(p: f64) -> Result<f64> {
    norm_quantile(p).map(|x| -x)
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Brent's method on a bracket `[lo, hi]` with a sign change.
///
/// On success the returned point lies inside a sign-change bracket narrower
/// than `tol` (or is an exact zero).
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!(
            "find_root needs a finite bracket and positive tol, got [{lo}, {hi}], tol {tol}"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::invalid("objective is NaN at a bracket endpoint"));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ROOT_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.25 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when a == c
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::invalid(format!("objective is NaN at {b}")));
        }
    }
    Err(Error::NoConvergence {
        lo: b.min(c),
        hi: b.max(c),
        iterations: MAX_ROOT_ITER,
    })
}

/// Root of an increasing function, growing the bracket geometrically from
/// `[lo, hi]` until the sign changes.
pub fn find_root_increasing<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut width = (hi - lo).max(1e-3);
    for _ in 0..64 {
        let (flo, fhi) = (f(lo), f(hi));
        if flo <= 0.0 && fhi >= 0.0 {
            return find_root(&mut f, lo, hi, tol);
        }
        if flo > 0.0 {
            lo -= width;
        }
        if fhi < 0.0 {
            hi += width;
        }
        width *= 2.0;
    }
    Err(Error::NoSignChange {
        lo,
        hi,
        f_lo: f(lo),
        f_hi: f(hi),
    })
}

/// Composite Simpson quadrature rule on a fixed, evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Grid {
    /// Simpson grid on `[lo, hi]` with `n_points` (odd, >= 3) abscissae.
    pub fn simpson(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::InvalidGridSize(n_points));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        let intervals = n_points - 1;
        let h = (hi - lo) / intervals as f64;
        let points: Vec<f64> = (0..n_points)
            .map(|i| if i == intervals { hi } else { lo + i as f64 * h })
            .collect();
        let weights = (0..n_points)
            .map(|i| {
                let w = if i == 0 || i == intervals {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        Ok(Grid {
            points,
            weights,
            lo,
            hi,
        })
    }

    /// Simpson grid on `[lo, hi]` whose spacing does not exceed `max_step`.
    pub fn with_max_step(lo: f64, hi: f64, max_step: f64) -> Result<Self> {
        let mut intervals = ((hi - lo) / max_step).ceil().max(2.0) as usize;
        if intervals % 2 == 1 {
            intervals += 1;
        }
        Self::simpson(lo, hi, intervals + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    /// Quadrature of tabulated values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, w)| w * f(x))
            .sum()
    }
}

/// Simpson grid spanning `center ± half_width`.
pub fn make_grid(center: f64, half_width: f64, n_points: usize) -> Result<Grid> {
    if !(half_width > 0.0) {
        return Err(Error::invalid(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    Grid::simpson(center - half_width, center + half_width, n_points)
}
