//! Lévy measure families with admissibility envelopes, moments and the
//! Lévy exponent.
//!
//! Every measure carries [`ShapeParams`] `(C0, α, D, μ)` claiming
//! `0 ≤ h(z) ≤ C0 |z|^{-α} exp(-D|z| - μ|z|²)`. The envelope drives the
//! analytic divergence flags and the certified truncation radius used by
//! the operator layer.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{PideError, Result};
use crate::quadrature::{integrate, integrate_breaks, integrate_singular_left, integrate_to_infinity, QuadOptions};

/// Shape parameters of the admissibility envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    c0: f64,
    alpha: f64,
    d: f64,
    mu: f64,
}

impl ShapeParams {
    pub fn new(c0: f64, alpha: f64, d: f64, mu: f64) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(PideError::domain(format!(
                "envelope constant C0 must be positive, got {c0}"
            )));
        }
        if !(mu >= 0.0) {
            return Err(PideError::domain(format!(
                "Gaussian tail rate mu must be nonnegative, got {mu}"
            )));
        }
        if mu == 0.0 && !(d > 0.0) {
            return Err(PideError::domain(format!(
                "exponential rate D must be positive when mu = 0, got {d}"
            )));
        }
        if !alpha.is_finite() || !d.is_finite() {
            return Err(PideError::domain("alpha and D must be finite"));
        }
        Ok(Self { c0, alpha, d, mu })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn with_c0(&self, c0: f64) -> Result<Self> {
        Self::new(c0, self.alpha, self.d, self.mu)
    }

    /// `C0 |z|^{-α} e^{-D|z| - μ|z|²}` at radius `r > 0`.
    pub fn envelope(&self, r: f64) -> f64 {
        self.c0 * (-self.alpha * r.ln() - self.d * r - self.mu * r * r).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Merton,
    ExponentialTail,
    KouDoubleExponential,
    Custom,
}

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Density {
    Null,
    Merton {
        lambda: f64,
        mean: Vec<f64>,
        delta: f64,
    },
    ExponentialTail {
        c0: f64,
        alpha: f64,
        rate: f64,
    },
    Kou {
        lambda: f64,
        p_up: f64,
        eta_plus: f64,
        eta_minus: f64,
    },
    Custom(DensityFn),
}

/// A Lévy measure `ν(dz) = h(z) dz` on `ℝⁿ`, `n ∈ {1, 2}`.
#[derive(Clone)]
pub struct LevyMeasure {
    dim: usize,
    shape: ShapeParams,
    density: Density,
}

impl fmt::Debug for LevyMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.density {
            Density::Null => "Null".to_string(),
            Density::Merton { lambda, mean, delta } => format!("Merton(λ={lambda}, m={mean:?}, δ={delta})"),
            Density::ExponentialTail { c0, alpha, rate } => format!("ExponentialTail(C0={c0}, α={alpha}, A={rate})"),
            Density::Kou {
                lambda,
                p_up,
                eta_plus,
                eta_minus,
            } => format!("Kou(λ={lambda}, p={p_up}, η+={eta_plus}, η-={eta_minus})"),
            Density::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("LevyMeasure")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .field("shape", &self.shape)
            .finish()
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(PideError::domain(format!("dimension must be 1 or 2, got {dim}")))
    }
}

/// A moment that is either finite or flagged divergent from the shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn finite(self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(v),
            Moment::Infinite => None,
        }
    }
    pub fn is_infinite(self) -> bool {
        matches!(self, Moment::Infinite)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureMoments {
    /// `ν(ℝⁿ)`.
    pub total_mass: Moment,
    /// `∫_{|z|≤1} |z| ν(dz)`.
    pub first_abs_moment_near_0: Moment,
    /// `∫ (e^z - 1 - z) ν(dz)`; one-dimensional measures with a finite
    /// exponential moment only.
    pub compensated_exp_moment: Option<f64>,
    /// `∫ z ν(dz)` when the measure has finite variation.
    pub mean_jump: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub holds: bool,
    pub worst_ratio: f64,
    pub worst_z: Vec<f64>,
}

/// Smallest offset resolved near the origin; the sliver below it is added
/// from the local power law.
const ORIGIN_FLOOR: f64 = 1e-10;

impl LevyMeasure {
    /// Gaussian-jump (Merton) measure with intensity `lambda`, mean jump `m`
    /// and jump standard deviation `delta`.
    pub fn merton(lambda: f64, m: &[f64], delta: f64) -> Result<Self> {
        let n = m.len();
        check_dim(n)?;
        if !(lambda > 0.0) || !(delta > 0.0) {
            return Err(PideError::domain(format!(
                "Merton intensity and jump width must be positive (lambda = {lambda}, delta = {delta})"
            )));
        }
        let m2: f64 = m.iter().map(|v| v * v).sum();
        let d2 = delta * delta;
        // |z - m|² ≥ |z|²/2 - |m|² gives the envelope below.
        let c0 = lambda * (2.0 * PI * d2).powf(-(n as f64) / 2.0) * (m2 / (2.0 * d2)).exp();
        let shape = ShapeParams::new(c0, 0.0, 0.0, 1.0 / (4.0 * d2))?;
        Ok(Self {
            dim: n,
            shape,
            density: Density::Merton {
                lambda,
                mean: m.to_vec(),
                delta,
            },
        })
    }

    /// `C0 |z|^{-α} e^{-A|z|}`.
    pub fn exponential_tail(c0: f64, alpha: f64, rate: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(rate > 0.0) {
            return Err(PideError::domain(format!(
                "exponential rate A must be positive, got {rate}"
            )));
        }
        let shape = ShapeParams::new(c0, alpha, rate, 0.0)?;
        Ok(Self {
            dim,
            shape,
            density: Density::ExponentialTail { c0, alpha, rate },
        })
    }

    /// Kou double-exponential measure (one-dimensional).
    pub fn kou(lambda: f64, p_up: f64, eta_plus: f64, eta_minus: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(PideError::domain(format!(
                "Kou intensity must be positive, got {lambda}"
            )));
        }
        if !(0.0..=1.0).contains(&p_up) {
            return Err(PideError::domain(format!(
                "Kou up-probability must lie in [0, 1], got {p_up}"
            )));
        }
        if !(eta_plus > 1.0) {
            return Err(PideError::domain(format!(
                "Kou eta_plus must exceed 1 for a finite exponential moment, got {eta_plus}"
            )));
        }
        if !(eta_minus > 0.0) {
            return Err(PideError::domain(format!(
                "Kou eta_minus must be positive, got {eta_minus}"
            )));
        }
        let c0 = lambda * (p_up * eta_plus).max((1.0 - p_up) * eta_minus);
        let shape = ShapeParams::new(c0, 0.0, eta_plus.min(eta_minus), 0.0)?;
        Ok(Self {
            dim: 1,
            shape,
            density: Density::Kou {
                lambda,
                p_up,
                eta_plus,
                eta_minus,
            },
        })
    }

    /// Arbitrary density with a claimed envelope. The claim is not trusted;
    /// use [`LevyMeasure::check_admissibility`] to test it.
    pub fn custom<F>(dim: usize, shape: ShapeParams, density: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        check_dim(dim)?;
        Ok(Self {
            dim,
            shape,
            density: Density::Custom(Arc::new(density)),
        })
    }

    /// The zero measure.
    pub fn zero(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            shape: ShapeParams::new(1.0, 0.0, 1.0, 0.0)?,
            density: Density::Null,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &ShapeParams {
        &self.shape
    }

    /// Same density with a different claimed envelope.
    pub fn with_shape(&self, shape: ShapeParams) -> Self {
        Self { shape, ..self.clone() }
    }

    pub fn family(&self) -> Family {
        match self.density {
            Density::Merton { .. } => Family::Merton,
            Density::ExponentialTail { .. } => Family::ExponentialTail,
            Density::Kou { .. } => Family::KouDoubleExponential,
            Density::Null | Density::Custom(_) => Family::Custom,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self.density, Density::Null)
    }

    /// `h(z)` for `z ∈ ℝⁿ`.
    pub fn density(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        match &self.density {
            Density::Null => 0.0,
            Density::Merton { lambda, mean, delta } => {
                let n = mean.len() as f64;
                let d2 = delta * delta;
                let r2: f64 = z.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
                lambda * (2.0 * PI * d2).powf(-n / 2.0) * (-r2 / (2.0 * d2)).exp()
            }
            Density::ExponentialTail { c0, alpha, rate } => {
                let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    return if *alpha > 0.0 {
                        f64::INFINITY
                    } else if *alpha == 0.0 {
                        *c0
                    } else {
                        0.0
                    };
                }
                c0 * (-alpha * r.ln() - rate * r).exp()
            }
            Density::Kou { .. } => self.density_1d(z[0]),
            Density::Custom(f) => f(z),
        }
    }

    /// Fast path for one-dimensional measures.
    pub fn density_1d(&self, z: f64) -> f64 {
        match &self.density {
            Density::Kou {
                lambda,
                p_up,
                eta_plus,
                eta_minus,
            } => {
                if z > 0.0 {
                    lambda * p_up * eta_plus * (-eta_plus * z).exp()
                } else if z < 0.0 {
                    lambda * (1.0 - p_up) * eta_minus * (eta_minus * z).exp()
                } else {
                    0.5 * lambda * (p_up * eta_plus + (1.0 - p_up) * eta_minus)
                }
            }
            Density::Merton { lambda, mean, delta } if mean.len() == 1 => {
                let d = (z - mean[0]) / delta;
                lambda / ((2.0 * PI).sqrt() * delta) * (-0.5 * d * d).exp()
            }
            _ => self.density(&[z]),
        }
    }

    /// True when the shape implies `ν(ℝⁿ) < ∞`.
    pub fn finite_activity(&self) -> bool {
        self.is_null() || self.shape.alpha < self.dim as f64
    }

    /// True when the shape implies `∫_{|z|≤1} |z| ν(dz) < ∞`.
    pub fn finite_variation(&self) -> bool {
        self.is_null() || self.shape.alpha < self.dim as f64 + 1.0
    }

    /// True when `∫_{|z|>1} e^{|z|} ν(dz) < ∞` is implied, which is what the
    /// compensated exponential moment and the shift drift need.
    pub fn has_exponential_moment(&self) -> bool {
        match self.density {
            Density::Null => true,
            Density::Kou { eta_plus, .. } => eta_plus > 1.0,
            _ => self.shape.mu > 0.0 || self.shape.d > 1.0,
        }
    }

    /// Radius `R` beyond which the envelope mass (optionally weighted by
    /// `e^{|z|}`) is below `tol · max(1, C0)`.
    pub fn tail_radius(&self, exp_weighted: bool, tol: f64) -> f64 {
        if self.is_null() {
            return 0.0;
        }
        let s = self.shape;
        let weight = if exp_weighted && (s.mu > 0.0 || s.d > 1.0) {
            1.0
        } else {
            0.0
        };
        let target = tol * s.c0.max(1.0);
        let tail = |r0: f64| -> f64 {
            let g = |r: f64| {
                let radial = if self.dim == 1 { 2.0 } else { 2.0 * PI * r };
                radial * s.envelope(r) * (weight * r).exp()
            };
            integrate_to_infinity(g, r0, QuadOptions::rel(1e-6).with_abs(target * 1e-3))
                .map(|q| q.value)
                .unwrap_or(f64::INFINITY)
        };
        let mut hi = 0.5;
        while tail(hi) > target && hi < 200.0 {
            hi *= 1.5;
        }
        let mut lo = if hi > 0.5 { hi / 1.5 } else { 0.0 };
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if tail(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Integral `∫ g(z) h(z) dz` in one dimension over `|z| ≤ radius`.
    /// `vanish_order` is the power at which `g` vanishes at the origin; it
    /// sets the local power law used for the sliver below the resolved
    /// floor.
    pub fn integrate_1d<G: Fn(f64) -> f64>(&self, g: G, vanish_order: f64, radius: f64, tol: f64) -> Result<f64> {
        debug_assert_eq!(self.dim, 1);
        if self.is_null() || radius <= 0.0 {
            return Ok(0.0);
        }
        let opts = QuadOptions::rel(tol).with_abs(1e-15 * self.shape.c0.max(1.0));
        let p = vanish_order - self.shape.alpha.max(0.0);
        if p <= -1.0 {
            return Err(PideError::domain(
                "integrand not integrable at the origin for this shape",
            ));
        }
        let inner = radius.min(1.0);
        let mut total = 0.0;
        for sign in [1.0, -1.0] {
            let f = |t: f64| g(sign * t) * self.density_1d(sign * t);
            let near = integrate_singular_left(f, inner, ORIGIN_FLOOR, opts)?;
            total += near.value + f(ORIGIN_FLOOR) * ORIGIN_FLOOR / (p + 1.0);
            if radius > 1.0 {
                let mut breaks = vec![1.0];
                breaks.extend(
                    self.features()
                        .into_iter()
                        .map(|x| sign * x)
                        .filter(|&x| x > 1.0 && x < radius),
                );
                breaks.push(radius);
                breaks.sort_by(f64::total_cmp);
                total += integrate_breaks(f, &breaks, opts)?.value;
            }
        }
        Ok(total)
    }

    /// Integral `∫ g(z) h(z) dz` in two dimensions over `|z| ≤ radius`, in
    /// polar coordinates.
    pub fn integrate_2d<G: Fn(f64, f64) -> f64>(&self, g: G, vanish_order: f64, radius: f64, tol: f64) -> Result<f64> {
        debug_assert_eq!(self.dim, 2);
        if self.is_null() || radius <= 0.0 {
            return Ok(0.0);
        }
        let opts = QuadOptions::rel(tol).with_abs(1e-15 * self.shape.c0.max(1.0));
        let p = 1.0 + vanish_order - self.shape.alpha.max(0.0);
        if p <= -1.0 {
            return Err(PideError::domain(
                "integrand not integrable at the origin for this shape",
            ));
        }
        // Periodic trapezoid in the angle, doubled until the change is small
        // against the integral of |integrand|.
        let ring = |r: f64| -> f64 {
            let ang = |th: f64| {
                let (s, c) = th.sin_cos();
                let z = [r * c, r * s];
                g(z[0], z[1]) * self.density(&z)
            };
            let mut m = 32usize;
            let (mut sum, mut abs_sum) = (0.0, 0.0);
            for k in 0..m {
                let v = ang(2.0 * PI * k as f64 / m as f64);
                sum += v;
                abs_sum += v.abs();
            }
            let mut prev = sum / m as f64;
            loop {
                // Add the odd nodes of the doubled rule.
                for k in 0..m {
                    let v = ang(2.0 * PI * (k as f64 + 0.5) / m as f64);
                    sum += v;
                    abs_sum += v.abs();
                }
                m *= 2;
                let cur = sum / m as f64;
                if (cur - prev).abs() <= 0.1 * tol * (abs_sum / m as f64) || m >= 1 << 14 {
                    return r * 2.0 * PI * cur;
                }
                prev = cur;
            }
        };
        let inner = radius.min(1.0);
        let near = integrate_singular_left(ring, inner, ORIGIN_FLOOR, opts)?;
        let mut total = near.value + ring(ORIGIN_FLOOR) * ORIGIN_FLOOR / (p + 1.0);
        if radius > 1.0 {
            total += integrate(ring, 1.0, radius, opts)?.value;
        }
        if !total.is_finite() {
            return Err(PideError::ToleranceNotMet {
                estimate: total,
                error: f64::INFINITY,
                requested: tol,
            });
        }
        Ok(total)
    }

    /// Points where the density has features worth a panel boundary.
    fn features(&self) -> Vec<f64> {
        match &self.density {
            Density::Merton { mean, delta, .. } if mean.len() == 1 => {
                let m = mean[0];
                vec![m - 4.0 * delta, m - delta, m, m + delta, m + 4.0 * delta]
            }
            _ => Vec::new(),
        }
    }

    /// Moment integrals by adaptive quadrature to relative tolerance `tol`;
    /// divergent moments are flagged from the shape parameters.
    pub fn moments(&self, tol: f64) -> Result<MeasureMoments> {
        if !(tol > 0.0) {
            return Err(PideError::domain("quadrature tolerance must be positive"));
        }
        let n = self.dim;
        let radius = self.tail_radius(false, 1e-13);
        let total_mass = if self.finite_activity() {
            Moment::Finite(self.integrate_any(|_| 1.0, 0.0, radius, tol)?)
        } else {
            Moment::Infinite
        };
        let first_abs_moment_near_0 = if self.finite_variation() {
            Moment::Finite(self.integrate_any(norm, 1.0, radius.min(1.0), tol)?)
        } else {
            Moment::Infinite
        };
        let compensated_exp_moment = if n == 1 && self.has_exponential_moment() {
            let r = self.tail_radius(true, 1e-13);
            Some(self.integrate_1d(|z| z.exp() - 1.0 - z, 2.0, r, tol)?)
        } else {
            None
        };
        let mean_jump = if self.finite_variation() {
            let mut v = Vec::with_capacity(n);
            for k in 0..n {
                v.push(self.integrate_any(move |z| z[k], 1.0, radius, tol)?);
            }
            Some(v)
        } else {
            None
        };
        Ok(MeasureMoments {
            total_mass,
            first_abs_moment_near_0,
            compensated_exp_moment,
            mean_jump,
        })
    }

    fn integrate_any<G: Fn(&[f64]) -> f64>(&self, g: G, vanish_order: f64, radius: f64, tol: f64) -> Result<f64> {
        if self.dim == 1 {
            self.integrate_1d(|z| g(&[z]), vanish_order, radius, tol)
        } else {
            self.integrate_2d(|a, b| g(&[a, b]), vanish_order, radius, tol)
        }
    }

    /// Envelope check `h(z) |z|^α e^{D|z| + μ|z|²} ≤ C0` on the sample grid.
    /// Points at the origin are skipped when `α > 0`.
    pub fn check_admissibility(&self, samples: &[Vec<f64>]) -> AdmissibilityReport {
        let s = self.shape;
        let mut worst_ratio = 0.0f64;
        let mut worst_z = samples.first().cloned().unwrap_or_default();
        for z in samples {
            let r = norm(z);
            if r == 0.0 && s.alpha > 0.0 {
                continue;
            }
            let h = self.density(z);
            let ratio = if h <= 0.0 {
                0.0
            } else if r == 0.0 {
                // α ≤ 0: envelope at the origin is C0 (α = 0) or 0 (α < 0).
                if s.alpha == 0.0 {
                    h / s.c0
                } else {
                    f64::INFINITY
                }
            } else {
                (h.ln() + s.alpha * r.ln() + s.d * r + s.mu * r * r - s.c0.ln()).exp()
            };
            if ratio > worst_ratio || ratio.is_nan() {
                worst_ratio = ratio;
                worst_z = z.clone();
            }
        }
        AdmissibilityReport {
            holds: worst_ratio <= 1.0 + 1e-12,
            worst_ratio,
            worst_z,
        }
    }

    /// `φ(y) = i b·y + Σ a_ij y_i y_j + ∫ (1 - e^{iy·z} + i y·z 1_{|z|≤1}) ν(dz)`.
    pub fn levy_exponent(&self, y: &[f64], b: &[f64], a: &[Vec<f64>], tol: f64) -> Result<Complex64> {
        let n = self.dim;
        if y.len() != n || b.len() != n || a.len() != n || a.iter().any(|r| r.len() != n) {
            return Err(PideError::domain(
                "levy_exponent: argument dimensions do not match the measure",
            ));
        }
        for i in 0..n {
            if a[i][i] < 0.0 {
                return Err(PideError::domain("diffusion matrix must be positive semidefinite"));
            }
        }
        if n == 2 && a[0][0] * a[1][1] - 0.25 * (a[0][1] + a[1][0]).powi(2) < 0.0 {
            return Err(PideError::domain("diffusion matrix must be positive semidefinite"));
        }
        let by: f64 = b.iter().zip(y).map(|(b, y)| b * y).sum();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i][j] * y[i] * y[j];
            }
        }
        let radius = self.tail_radius(false, 1e-13);
        let dot = |z: &[f64]| z.iter().zip(y).map(|(z, y)| z * y).sum::<f64>();
        let re = self.integrate_any(|z| 1.0 - dot(z).cos(), 2.0, radius, tol)?;
        let im = self.integrate_any(
            |z| {
                let t = dot(z);
                let comp = if norm(z) <= 1.0 { t } else { 0.0 };
                comp - t.sin()
            },
            2.0,
            radius,
            tol,
        )?;
        Ok(Complex64::new(quad + re, by + im))
    }
}

/// Jump measure on `ℝ²` for the two-dimensional solver.
#[derive(Debug, Clone)]
pub enum Measure2d {
    /// A density on `ℝ²`.
    Density(LevyMeasure),
    /// Independent coordinate jumps `ν₁ ⊗ δ₀ + δ₀ ⊗ ν₂`: each jump moves a
    /// single coordinate. The generator then splits into a sum of
    /// one-dimensional operators, so separable data stays separable.
    AxisProduct([LevyMeasure; 2]),
}

impl Measure2d {
    pub fn axis_product(first: LevyMeasure, second: LevyMeasure) -> Result<Self> {
        if first.dim() != 1 || second.dim() != 1 {
            return Err(PideError::domain("axis-product factors must be one-dimensional"));
        }
        Ok(Self::AxisProduct([first, second]))
    }

    pub fn density(measure: LevyMeasure) -> Result<Self> {
        if measure.dim() != 2 {
            return Err(PideError::domain("a planar jump density must be two-dimensional"));
        }
        Ok(Self::Density(measure))
    }

    pub fn is_null(&self) -> bool {
        match self {
            Self::Density(m) => m.is_null(),
            Self::AxisProduct([a, b]) => a.is_null() && b.is_null(),
        }
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Grid of sample points `±r` for `r` log-spaced in `[r_min, r_max]`, for
/// envelope checks in one dimension.
pub fn log_sample_grid_1d(r_min: f64, r_max: f64, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * count);
    for k in 0..count {
        let r = r_min * (r_max / r_min).powf(k as f64 / (count.max(2) - 1) as f64);
        out.push(vec![r]);
        out.push(vec![-r]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_validation() {
        assert!(ShapeParams::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(ShapeParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(ShapeParams::new(1.0, 0.0, -1.0, 0.5).is_ok());
        assert!(ShapeParams::new(1.0, 0.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn merton_density_at_mean() {
        let m = LevyMeasure::merton(1.0, &[0.0], 1.0).unwrap();
        assert!((m.density(&[0.0]) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let m2 = LevyMeasure::merton(2.0, &[0.0, 0.0], 1.0).unwrap();
        assert!((m2.density(&[0.0, 0.0]) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn merton_rejects_bad_parameters() {
        assert!(matches!(
            LevyMeasure::merton(0.0, &[0.0], 1.0),
            Err(PideError::ParameterDomain(_))
        ));
        assert!(LevyMeasure::merton(1.0, &[0.0], -1.0).is_err());
        assert!(LevyMeasure::merton(1.0, &[0.0, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn exponential_tail_classification() {
        let a = LevyMeasure::exponential_tail(1.0, 0.5, 1.0, 1).unwrap();
        assert!(a.finite_activity());
        let b = LevyMeasure::exponential_tail(1.0, 1.5, 1.0, 1).unwrap();
        assert!(!b.finite_activity());
        assert!(b.finite_variation());
        let c = LevyMeasure::exponential_tail(1.0, 2.5, 1.0, 1).unwrap();
        assert!(!c.finite_variation());
        assert!(LevyMeasure::exponential_tail(1.0, 0.5, 0.0, 1).is_err());
    }

    #[test]
    fn kou_rejects_small_eta_plus() {
        assert!(LevyMeasure::kou(1.0, 0.5, 1.0, 2.0).is_err());
        assert!(LevyMeasure::kou(1.0, 1.5, 3.0, 2.0).is_err());
        let k = LevyMeasure::kou(1.0, 1.0, 3.0, 2.0).unwrap();
        assert_eq!(k.density(&[-1.0]), 0.0);
    }

    #[test]
    fn merton_mass_and_compensated_moment() {
        let m = LevyMeasure::merton(1.0, &[0.0], 1.0).unwrap();
        let mo = m.moments(1e-10).unwrap();
        assert!((mo.total_mass.finite().unwrap() - 1.0).abs() < 1e-9);
        assert!(mo.mean_jump.unwrap()[0].abs() < 1e-12);

        let m = LevyMeasure::merton(1.0, &[0.1], 0.2).unwrap();
        let mo = m.moments(1e-10).unwrap();
        let exact = (0.1f64 + 0.02).exp() - 1.0 - 0.1;
        assert!((mo.compensated_exp_moment.unwrap() - exact).abs() < 1e-10 * exact.abs().max(1.0));
    }

    #[test]
    fn exponential_tail_moments() {
        let m = LevyMeasure::exponential_tail(1.0, 0.0, 1.0, 1).unwrap();
        let mo = m.moments(1e-10).unwrap();
        assert!((mo.total_mass.finite().unwrap() - 2.0).abs() < 1e-9);
        let m = LevyMeasure::exponential_tail(1.0, 1.5, 1.0, 1).unwrap();
        let mo = m.moments(1e-9).unwrap();
        assert!(mo.total_mass.is_infinite());
        // ∫_{|z|≤1}|z|^{-0.5} e^{-|z|} dz, finite.
        let v = mo.first_abs_moment_near_0.finite().unwrap();
        let oracle = 2.0
            * integrate_singular_left(|t| t.powf(-0.5) * (-t).exp(), 1.0, 1e-30, QuadOptions::rel(1e-12))
                .unwrap()
                .value;
        assert!((v - oracle).abs() < 1e-7 * oracle, "{v} vs {oracle}");
        // No exponential moment with D = 1, mu = 0.
        assert!(mo.compensated_exp_moment.is_none());
    }

    #[test]
    fn kou_mass() {
        let k = LevyMeasure::kou(1.0, 0.5, 3.0, 2.0).unwrap();
        let mo = k.moments(1e-10).unwrap();
        assert!((mo.total_mass.finite().unwrap() - 1.0).abs() < 1e-9);
        let mean = 0.5 / 3.0 - 0.5 / 2.0;
        assert!((mo.mean_jump.unwrap()[0] - mean).abs() < 1e-10);
    }

    #[test]
    fn admissibility_reports() {
        let grid = log_sample_grid_1d(1e-3, 10.0, 200);
        let m = LevyMeasure::merton(1.0, &[0.0], 1.0).unwrap();
        assert!(m.check_admissibility(&grid).holds);
        let wrong = m.with_shape(ShapeParams::new(m.shape().c0(), 0.0, 0.0, 1.0).unwrap());
        let rep = wrong.check_admissibility(&grid);
        assert!(!rep.holds);
        assert!((rep.worst_z[0].abs() - 10.0).abs() < 1e-9);

        let kou = LevyMeasure::kou(1.0, 0.5, 3.0, 2.0).unwrap();
        assert_eq!(kou.shape().d(), 2.0);
        assert!(kou.check_admissibility(&grid).holds);

        let zero = LevyMeasure::zero(1).unwrap();
        let rep = zero.check_admissibility(&grid);
        assert!(rep.holds);
        assert_eq!(rep.worst_ratio, 0.0);
    }

    #[test]
    fn merton_2d_mass() {
        let m = LevyMeasure::merton(2.0, &[0.1, -0.2], 0.3).unwrap();
        let mo = m.moments(1e-9).unwrap();
        assert!((mo.total_mass.finite().unwrap() - 2.0).abs() < 1e-7);
        let mean = mo.mean_jump.unwrap();
        assert!((mean[0] - 0.2).abs() < 1e-7 && (mean[1] + 0.4).abs() < 1e-7, "{mean:?}");
    }

    #[test]
    fn exponent_basic() {
        let m = LevyMeasure::merton(1.0, &[0.0], 1.0).unwrap();
        let zero = m.levy_exponent(&[0.0], &[0.0], &[vec![0.0]], 1e-10).unwrap();
        assert!(zero.norm() < 1e-14);
        let phi = m.levy_exponent(&[1.0], &[0.0], &[vec![0.0]], 1e-10).unwrap();
        assert!((phi.re - (1.0 - (-0.5f64).exp())).abs() < 1e-9);
        assert!(phi.im.abs() < 1e-12);
        let with_drift = m.levy_exponent(&[2.0], &[0.5], &[vec![0.1]], 1e-10).unwrap();
        let plain = m.levy_exponent(&[2.0], &[0.0], &[vec![0.0]], 1e-10).unwrap();
        assert!((with_drift.re - plain.re - 0.4).abs() < 1e-12);
        assert!((with_drift.im - plain.im - 1.0).abs() < 1e-12);
        assert!(m.levy_exponent(&[1.0], &[0.0], &[vec![-1.0]], 1e-10).is_err());
    }
}
