//! Bessel potential kernels, `X^γ` norms at `p = 2`, and numerical probes of
//! the kernel and shift estimates.
//!
//! The kernel of order `2γ` in `ℝⁿ` is
//!
//! ```text
//! G_{2γ}(x) = ((4π)^{n/2} Γ(γ))⁻¹ ∫₀^∞ y^{γ - n/2 - 1} exp(-y - |x|²/(4y)) dy,
//! ```
//!
//! with Fourier symbol `(1 + |k|²)^{-γ}`. Norms use that symbol on the
//! periodic core of a grid: `‖u‖_{X^γ} = ‖F⁻¹[(1 + |k|²)^γ û]‖_{L²}`.

use std::f64::consts::PI;

use crate::error::{PideError, Result};
use crate::grid::GridField;
use crate::quadrature::{integrate_breaks, integrate_singular_left, QuadOptions};
use crate::special::gamma as gamma_fn;
use crate::spectral::Spectral;

/// Default relative tolerance of a single kernel evaluation.
pub const KERNEL_TOL: f64 = 1e-8;

/// Offsets below this are dropped (with a power-law estimate) when
/// integrating across the kernel singularity.
const ORIGIN_FLOOR: f64 = 1e-30;

/// Beyond this radius the kernel mass is below `e^{-60}`.
const TAIL_RADIUS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselKernel {
    order: f64,
    dim: usize,
}

impl BesselKernel {
    /// Kernel of order `2γ = order`. The diagnostics use `0 < order < 2`;
    /// the integral formula itself is valid for every positive order, so
    /// larger orders are accepted as well.
    pub fn new(order: f64, dim: usize) -> Result<Self> {
        if !(order > 0.0) || !order.is_finite() {
            return Err(PideError::domain(format!("kernel order must be positive, got {order}")));
        }
        if dim != 1 && dim != 2 {
            return Err(PideError::domain(format!("kernel dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self { order, dim })
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        0.5 * self.order
    }

    /// `(1 + |k|²)^{-γ}`.
    pub fn fourier_symbol(&self, k: &[f64]) -> f64 {
        (1.0 + k.iter().map(|v| v * v).sum::<f64>()).powf(-self.gamma())
    }

    /// True when the kernel is unbounded at the origin.
    pub fn singular_at_origin(&self) -> bool {
        self.order <= self.dim as f64
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(PideError::GridMismatch(format!(
                "point of dimension {} for a {}-dimensional kernel",
                x.len(),
                self.dim
            )));
        }
        self.eval_radial(x.iter().map(|v| v * v).sum::<f64>().sqrt(), KERNEL_TOL)
    }

    /// Kernel value at radius `r = |x|` to relative tolerance `tol`.
    pub fn eval_radial(&self, r: f64, tol: f64) -> Result<f64> {
        let g = self.gamma();
        let n = self.dim as f64;
        let norm = (4.0 * PI).powf(-n / 2.0) / gamma_fn(g);
        let a = g - n / 2.0;
        if r == 0.0 {
            if self.singular_at_origin() {
                return Err(PideError::Singularity(format!(
                    "G of order {} is unbounded at the origin in dimension {}",
                    self.order, self.dim
                )));
            }
            return Ok(norm * gamma_fn(a));
        }
        // y = e^s; the cut-offs are where the exponent falls below -750.
        let lr = 2.0 * r.ln() - 4f64.ln();
        let mut lo = lr - 6.7;
        if a > 0.0 {
            lo = lo.max(-45.0 / a);
        }
        let hi = 6.7_f64.max(lo + 1.0);
        let f = |s: f64| (a * s - s.exp() - (lr - s).exp()).exp();
        let peak = (0.5 * (a + (a * a + r * r).sqrt())).ln();
        let mut pts = vec![lo];
        if peak > lo && peak < hi {
            pts.push(peak);
        }
        pts.push(hi);
        let q = integrate_breaks(f, &pts, QuadOptions::rel(tol).with_abs(0.0))?;
        Ok(norm * q.value)
    }

    /// `∫_{ℝⁿ} G(x) dx` by radial quadrature of [`BesselKernel::eval_radial`].
    pub fn total_mass(&self, tol: f64) -> Result<f64> {
        let inner = (0.1 * tol).min(1e-11);
        let radial = |r: f64| {
            let g = self.eval_radial(r, inner).unwrap_or(f64::NAN);
            if self.dim == 1 {
                2.0 * g
            } else {
                2.0 * PI * r * g
            }
        };
        let q = integrate_singular_left(radial, TAIL_RADIUS, ORIGIN_FLOOR, QuadOptions::rel(tol).with_abs(0.0))?;
        // Local power law of the radial integrand below the floor.
        let p = (self.dim as f64 - 1.0) + (self.order - self.dim as f64).min(0.0);
        let sliver = radial(ORIGIN_FLOOR) * ORIGIN_FLOOR / (p + 1.0);
        let v = q.value + sliver;
        if !v.is_finite() {
            return Err(PideError::ToleranceNotMet {
                estimate: v,
                error: f64::INFINITY,
                requested: tol,
            });
        }
        Ok(v)
    }
}

/// `G_{2γ}(x)` for `order = 2γ` at relative tolerance [`KERNEL_TOL`].
pub fn kernel_eval(order: f64, dim: usize, x: &[f64]) -> Result<f64> {
    BesselKernel::new(order, dim)?.eval(x)
}

fn check_gamma(gamma: f64, lo: f64) -> Result<()> {
    if !(gamma >= lo && gamma < 1.0) {
        return Err(PideError::domain(format!("γ = {gamma} outside [{lo}, 1)")));
    }
    Ok(())
}

/// `‖u‖_{X^γ}` at `p = 2` on the periodic core of `u`.
pub fn xgamma_norm(u: &GridField, gamma: f64) -> Result<f64> {
    check_gamma(gamma, 0.0)?;
    let sp = Spectral::for_field(u)?;
    xgamma_norm_with(&sp, &u.core(), gamma)
}

/// As [`xgamma_norm`] with a reusable transform plan and raw core data.
pub fn xgamma_norm_with(sp: &Spectral, core: &[f64], gamma: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Ok(crate::grid::l2_norm(
            core,
            sp.axes().iter().map(|a| a.spacing).product(),
        ));
    }
    let e = sp.weighted_energy(core, |k| (1.0 + k.iter().map(|v| v * v).sum::<f64>()).powf(2.0 * gamma))?;
    Ok(e.sqrt())
}

/// `‖∇u‖_{X^{γ-1/2}}`, the right-hand side norm of the shift estimates,
/// computed spectrally.
pub fn gradient_xgamma_norm(u: &GridField, gamma: f64) -> Result<f64> {
    check_gamma(gamma, 0.5)?;
    let sp = Spectral::for_field(u)?;
    gradient_xgamma_norm_with(&sp, &u.core(), gamma)
}

pub fn gradient_xgamma_norm_with(sp: &Spectral, core: &[f64], gamma: f64) -> Result<f64> {
    let e = sp.weighted_energy(core, |k| {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        k2 * (1.0 + k2).powf(2.0 * gamma - 1.0)
    })?;
    Ok(e.sqrt())
}

/// Outcome of a boundedness probe: a list of ratios that passes when the
/// largest is within `10×` the median.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioProbe {
    pub parameters: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max: f64,
    pub median: f64,
    pub pass: bool,
}

pub const SPREAD_LIMIT: f64 = 10.0;

impl RatioProbe {
    pub fn from_ratios(parameters: Vec<f64>, ratios: Vec<f64>) -> Self {
        let finite = !ratios.is_empty() && ratios.iter().all(|r| r.is_finite());
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if sorted.is_empty() {
            f64::NAN
        } else if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
        };
        let max = sorted.last().copied().unwrap_or(f64::NAN);
        let pass = finite && median > 0.0 && max <= SPREAD_LIMIT * median;
        Self {
            parameters,
            ratios,
            max,
            median,
            pass,
        }
    }

    /// Ratio of the largest to the smallest ratio.
    pub fn spread(&self) -> f64 {
        let min = self.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        self.max / min
    }
}

/// Ratios `‖G_α(· + h) - G_α‖_{L¹} / |h|^α` for one-dimensional shifts.
///
/// The `L¹` integral is split at the two singular points `x = 0`, `x = -h`
/// and at the midpoint `-h/2`; each piece is integrated in the offset from
/// its singular end with a logarithmic substitution.
pub fn modulus_of_continuity_probe(order: f64, dim: usize, shifts: &[Vec<f64>]) -> Result<RatioProbe> {
    if !(order > 0.0 && order < 1.0) {
        return Err(PideError::domain(format!(
            "modulus probe needs order in (0, 1), got {order}"
        )));
    }
    if dim != 1 {
        return Err(PideError::Unsupported(
            "the modulus-of-continuity probe is implemented for n = 1".into(),
        ));
    }
    let kernel = BesselKernel::new(order, dim)?;
    let g = |t: f64| kernel.eval_radial(t.abs(), 1e-12).unwrap_or(f64::NAN);
    let opts = QuadOptions::rel(1e-7).with_abs(0.0);
    let mut params = Vec::with_capacity(shifts.len());
    let mut ratios = Vec::with_capacity(shifts.len());
    for h in shifts {
        if h.len() != 1 {
            return Err(PideError::GridMismatch("shift dimension must match the kernel".into()));
        }
        let h = h[0].abs();
        if h == 0.0 {
            return Err(PideError::domain("shift h = 0 is excluded"));
        }
        // x < -h, offset t = -h - x.
        let left = integrate_singular_left(|t| (g(t) - g(t + h)).abs(), TAIL_RADIUS, ORIGIN_FLOOR, opts)?;
        // -h < x < -h/2, offset t = x + h.
        let mid_l = integrate_singular_left(|t| (g(t) - g(h - t)).abs(), 0.5 * h, ORIGIN_FLOOR, opts)?;
        // -h/2 < x < 0, offset t = -x.
        let mid_r = integrate_singular_left(|t| (g(h - t) - g(t)).abs(), 0.5 * h, ORIGIN_FLOOR, opts)?;
        // x > 0, offset t = x.
        let right = integrate_singular_left(|t| (g(t + h) - g(t)).abs(), TAIL_RADIUS, ORIGIN_FLOOR, opts)?;
        let l1 = left.value + mid_l.value + mid_r.value + right.value;
        if !l1.is_finite() {
            return Err(PideError::ToleranceNotMet {
                estimate: l1,
                error: f64::INFINITY,
                requested: opts.rel_tol,
            });
        }
        params.push(h);
        ratios.push(l1 / h.powf(order));
    }
    Ok(RatioProbe::from_ratios(params, ratios))
}

fn sup_norm(field: &[Vec<f64>]) -> f64 {
    let n = field.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| field.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `Q(u, ξ)(x) = u(x + ξ(x)) - ξ(x)·∇u(x)` on the core of `u`, with `∇u`
/// taken spectrally and `u(x + ξ)` by cubic interpolation over the padded
/// grid. `xi` holds one core-length component per dimension.
pub fn q_map(u: &GridField, xi: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = u.dim();
    let m = u.core_len();
    if xi.len() != n || xi.iter().any(|c| c.len() != m) {
        return Err(PideError::GridMismatch(
            "shift field must have one core-length component per axis".into(),
        ));
    }
    let reach = u.axes().iter().map(|_| u.reach()).fold(f64::INFINITY, f64::min);
    let reach = if n == 1 {
        reach
    } else {
        (u.padding() as f64 - 2.0).max(0.0) * u.axis(0).spacing.min(u.axis(1).spacing)
    };
    for c in xi {
        if let Some(v) = c.iter().find(|v| v.abs() > reach) {
            return Err(PideError::OutOfDomain(format!(
                "shift {v} exceeds the reach {reach} of the grid padding"
            )));
        }
    }
    let sp = Spectral::for_field(u)?;
    let core = u.core();
    let grads: Vec<Vec<f64>> = (0..n).map(|d| sp.derivative(&core, d)).collect::<Result<_>>()?;
    let mut out = vec![0.0; m];
    if n == 1 {
        let ax = u.axis(0);
        for j in 0..m {
            let x = ax.coord(j as isize);
            out[j] = u.interpolate_1d(x + xi[0][j])? - xi[0][j] * grads[0][j];
        }
    } else {
        let (a0, a1) = (u.axis(0), u.axis(1));
        let n1 = a1.len;
        for j in 0..m {
            let (x0, x1) = (a0.coord((j / n1) as isize), a1.coord((j % n1) as isize));
            out[j] = u.interpolate_2d(x0 + xi[0][j], x1 + xi[1][j])? - xi[0][j] * grads[0][j] - xi[1][j] * grads[1][j];
        }
    }
    Ok(out)
}

/// The ratio
/// `‖Q(u,ξ₁) - Q(u,ξ₂)‖_{L²} / (‖ξ₁-ξ₂‖_∞^{2γ-1} (‖ξ₁‖_∞ + ‖ξ₂‖_∞) ‖∇u‖_{X^{γ-1/2}})`.
/// Identical shifts give 0.
pub fn q_estimate_probe(u: &GridField, xi1: &[Vec<f64>], xi2: &[Vec<f64>], gamma: f64) -> Result<f64> {
    check_gamma(gamma, 0.5)?;
    let diff: Vec<Vec<f64>> = xi1
        .iter()
        .zip(xi2)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let dn = sup_norm(&diff);
    let q1 = q_map(u, xi1)?;
    if dn == 0.0 {
        return Ok(0.0);
    }
    let q2 = q_map(u, xi2)?;
    let dq: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| a - b).collect();
    let num = crate::grid::l2_norm(&dq, u.cell_volume());
    let grad = gradient_xgamma_norm(u, gamma)?;
    let den = dn.powf(2.0 * gamma - 1.0) * (sup_norm(xi1) + sup_norm(xi2)) * grad;
    if den == 0.0 {
        return Err(PideError::domain("q-estimate denominator vanishes (∇u = 0)"));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::quadrature::integrate;

    /// `K₀(x) = ∫₀^∞ e^{-x cosh t} dt`.
    fn bessel_k0(x: f64) -> f64 {
        let tmax = (800.0 / x).acosh();
        integrate(
            |t: f64| (-x * t.cosh()).exp(),
            0.0,
            tmax,
            QuadOptions::rel(1e-13).with_abs(0.0),
        )
        .unwrap()
        .value
    }

    #[test]
    fn half_order_kernel_is_k0_over_pi() {
        let k = BesselKernel::new(1.0, 1).unwrap();
        for &x in &[0.1, 1.0, 5.0] {
            let v = k.eval(&[x]).unwrap();
            let oracle = bessel_k0(x) / PI;
            assert!((v / oracle - 1.0).abs() < 1e-7, "x = {x}: {v} vs {oracle}");
        }
    }

    #[test]
    fn order_two_kernel_is_laplace_density() {
        let k = BesselKernel::new(2.0, 1).unwrap();
        for &x in &[0.1, 1.0, 5.0] {
            let v = k.eval_radial(x, 1e-12).unwrap();
            assert!((v / (0.5 * (-x).exp()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn two_dimensional_order_two_is_k0_over_two_pi() {
        let k = BesselKernel::new(2.0, 2).unwrap();
        let v = k.eval(&[0.6, 0.8]).unwrap();
        assert!((v / (bessel_k0(1.0) / (2.0 * PI)) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn kernel_symmetric_and_singular() {
        let k = BesselKernel::new(0.7, 1).unwrap();
        assert_eq!(k.eval(&[0.3]).unwrap(), k.eval(&[-0.3]).unwrap());
        assert!(matches!(k.eval(&[0.0]), Err(PideError::Singularity(_))));
        let smooth = BesselKernel::new(1.5, 1).unwrap();
        let at0 = smooth.eval(&[0.0]).unwrap();
        let near = smooth.eval_radial(1e-7, 1e-12).unwrap();
        assert!((at0 - near).abs() < 1e-3 * at0);
    }

    #[test]
    fn unit_mass() {
        for &(order, dim) in &[(0.3, 1), (1.0, 1), (1.6, 1), (0.8, 2), (1.5, 2)] {
            let m = BesselKernel::new(order, dim).unwrap().total_mass(1e-9).unwrap();
            assert!((m - 1.0).abs() < 1e-7, "order {order}, dim {dim}: {m}");
        }
    }

    #[test]
    fn modulus_matches_symmetric_identity() {
        // By symmetry ‖G(·+h) - G‖₁ = 2 ∫_{-h/2}^{h/2} G.
        let order = 0.5;
        let k = BesselKernel::new(order, 1).unwrap();
        let h = 0.01;
        let p = modulus_of_continuity_probe(order, 1, &[vec![h]]).unwrap();
        let half = integrate_singular_left(
            |t| k.eval_radial(t, 1e-12).unwrap(),
            h / 2.0,
            1e-30,
            QuadOptions::rel(1e-10),
        )
        .unwrap()
        .value;
        let oracle = 4.0 * half / h.powf(order);
        assert!((p.ratios[0] / oracle - 1.0).abs() < 1e-5);
    }

    #[test]
    fn xgamma_single_mode() {
        let ax = Axis::periodic(-PI, PI, 64).unwrap();
        let u = GridField::from_fn_1d(ax, 0, |x| (3.0 * x).sin()).unwrap();
        let l2 = u.l2_norm();
        assert!((xgamma_norm(&u, 0.0).unwrap() - l2).abs() < 1e-12 * l2);
        let v = xgamma_norm(&u, 0.4).unwrap();
        assert!((v / (10f64.powf(0.4) * l2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_probe_identical_shifts_is_zero() {
        let ax = Axis::centred(0.0, 8.0, 128).unwrap();
        let u = GridField::from_fn_1d(ax, 8, |x| (-x * x).exp()).unwrap();
        let xi = vec![vec![0.05; 128]];
        assert_eq!(q_estimate_probe(&u, &xi, &xi, 0.75).unwrap(), 0.0);
        let far = vec![vec![5.0; 128]];
        assert!(matches!(q_map(&u, &far), Err(PideError::OutOfDomain(_))));
    }
}
