//! The non-local jump operator
//!
//! ```text
//! f(u)(x) = ∫ [u(x + ξ) - u(x) - ξ·∇u(x)] ν(dz),
//! f̃(u)(x) = ∫ [u(x + ξ) - u(x) - (e^ξ - 1) ∂ₓu(x)] ν(dz),
//! ```
//!
//! on grid fields. With `ξ ≡ z` the integral is a lattice sum over jump
//! offsets that are whole grid cells, evaluated as one FFT correlation. The
//! mass, mean and exponential sums are taken from the same lattice weights,
//! so `f(const) = 0` and `f̃(e^x) = 0` hold to rounding. A general shift
//! `ξ(τ, x, z)` uses composite Gauss–Legendre nodes in `z` with cubic
//! interpolation of `u(x + ξ)`.
//!
//! Jumps with `|z| < ε` are either dropped (finite activity) or replaced by
//! the diffusion `(σ²_ε / 2) ∂²ₓ` with `σ²_ε = ∫_{|z|<ε} z² ν(dz)`.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::bessel::gradient_xgamma_norm;
use crate::error::{PideError, Result};
use crate::grid::{derivative_fd4, second_derivative_fd4, Axis, GridField};
use crate::levy::{LevyMeasure, Measure2d};
use crate::quadrature::{gauss_legendre, integrate, QuadOptions};
use crate::shift::{exp_compensator, ShiftModel};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallJumpPolicy {
    /// Ignore `|z| < ε`; valid only for finite-activity measures.
    Drop,
    /// Replace `|z| < ε` by a diffusion correction.
    DiffusionCorrection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Fourier differentiation on the periodic core.
    Spectral,
    /// Fourth-order central differences using the padding cells.
    Fd4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorConfig {
    /// Inner cut-off `ε`. Defaults to half a grid cell.
    pub eps_in: Option<f64>,
    /// Envelope tail mass allowed beyond the outer cut-off, relative to
    /// `max(1, C0)`.
    pub tail_tol: f64,
    /// `None` picks `Drop` for finite activity and `DiffusionCorrection`
    /// otherwise.
    pub policy: Option<SmallJumpPolicy>,
    pub gradient: GradientMode,
    /// Gauss–Legendre points per `z` panel on the quadrature path.
    pub gl_order: usize,
    /// Largest `z` panel width on the quadrature path.
    pub panel_width: f64,
    /// Use the quadrature path even when `ξ ≡ z`.
    pub force_quadrature: bool,
    /// Relative tolerance of cell and moment integrals.
    pub moment_tol: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            eps_in: None,
            tail_tol: 1e-10,
            policy: None,
            gradient: GradientMode::Spectral,
            gl_order: 6,
            panel_width: 0.05,
            force_quadrature: false,
            moment_tol: 1e-10,
        }
    }
}

/// Small-jump diffusion matrix and first moment of the band `|z| < ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallJumpCompensation {
    pub sigma2_correction: Vec<Vec<f64>>,
    pub drift_correction: Vec<f64>,
}

/// `∫_{|z|<ε} z zᵀ ν(dz)` and `∫_{|z|<ε} z ν(dz)` under `DiffusionCorrection`;
/// zeros under `Drop`.
pub fn small_jump_compensation(
    measure: &LevyMeasure,
    eps: f64,
    policy: SmallJumpPolicy,
) -> Result<SmallJumpCompensation> {
    if !(eps > 0.0) {
        return Err(PideError::domain("inner cut-off must be positive"));
    }
    let n = measure.dim();
    let mut s = SmallJumpCompensation {
        sigma2_correction: vec![vec![0.0; n]; n],
        drift_correction: vec![0.0; n],
    };
    if policy == SmallJumpPolicy::Drop || measure.is_null() {
        return Ok(s);
    }
    let tol = 1e-10;
    if n == 1 {
        s.sigma2_correction[0][0] = measure.integrate_1d(|z| z * z, 2.0, eps, tol)?;
        if measure.finite_variation() {
            s.drift_correction[0] = measure.integrate_1d(|z| z, 1.0, eps, tol)?;
        }
    } else {
        for a in 0..2 {
            for b in a..2 {
                let v = measure.integrate_2d(|x, y| [x, y][a] * [x, y][b], 2.0, eps, tol)?;
                s.sigma2_correction[a][b] = v;
                s.sigma2_correction[b][a] = v;
            }
            if measure.finite_variation() {
                s.drift_correction[a] = measure.integrate_2d(|x, y| [x, y][a], 1.0, eps, tol)?;
            }
        }
    }
    Ok(s)
}

/// `∫ (e^{ikz} - 1 - ikz) h(z) dz` by adaptive quadrature.
pub fn compensated_symbol(measure: &LevyMeasure, k: f64, tol: f64) -> Result<Complex64> {
    if measure.dim() != 1 {
        return Err(PideError::Unsupported("compensated symbol is one-dimensional".into()));
    }
    let r = measure.tail_radius(false, 1e-13);
    let re = measure.integrate_1d(|z| (k * z).cos() - 1.0, 2.0, r, tol)?;
    let im = measure.integrate_1d(|z| (k * z).sin() - k * z, 2.0, r, tol)?;
    Ok(Complex64::new(re, im))
}

#[derive(Debug, Clone)]
struct Lattice {
    /// Jump offsets in grid cells; the second entry is zero in 1-D.
    offsets: Vec<[isize; 2]>,
    weights: Vec<f64>,
    reach: [usize; 2],
}

#[derive(Debug, Clone)]
struct QuadNodes {
    z: Vec<f64>,
    w: Vec<f64>,
}

struct ConvCache {
    full: [usize; 2],
    tilt: f64,
    m: [usize; 2],
    spectral: Spectral,
    kernel_hat: Vec<Complex64>,
}

/// Resolved `ξ(τ, x_i, z_k)` for every core abscissa and quadrature node.
#[derive(Debug, Clone)]
pub struct ShiftTable {
    pub tau: f64,
    nodes: usize,
    xi: Vec<f64>,
    pub max_abs: f64,
}

impl ShiftTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.xi[i * self.nodes..(i + 1) * self.nodes]
    }
}

#[derive(Debug, Clone)]
enum PlanMeasure {
    One(LevyMeasure),
    Two(Measure2d),
}

/// Precomputed operator data for one grid geometry. Immutable apart from
/// internal caches guarded by mutexes, so one plan may be shared across
/// threads.
pub struct OperatorPlan {
    axes: Vec<Axis>,
    measure: PlanMeasure,
    shift: ShiftModel,
    config: OperatorConfig,
    policy: SmallJumpPolicy,
    eps_in: f64,
    r_out: f64,
    alpha: f64,
    lattice: Lattice,
    quad: Option<QuadNodes>,
    mass: f64,
    mean: [f64; 2],
    exp_sum: f64,
    sigma2: [[f64; 2]; 2],
    conv: Mutex<Vec<Arc<ConvCache>>>,
    shift_cache: Mutex<Option<Arc<ShiftTable>>>,
}

impl std::fmt::Debug for OperatorPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorPlan")
            .field("axes", &self.axes)
            .field("policy", &self.policy)
            .field("eps_in", &self.eps_in)
            .field("r_out", &self.r_out)
            .field("lattice_nodes", &self.lattice.weights.len())
            .field("quadrature_nodes", &self.quad.as_ref().map_or(0, |q| q.z.len()))
            .finish()
    }
}

fn resolve_policy(measure: &LevyMeasure, cfg: &OperatorConfig) -> Result<SmallJumpPolicy> {
    let policy = cfg.policy.unwrap_or(if measure.finite_activity() {
        SmallJumpPolicy::Drop
    } else {
        SmallJumpPolicy::DiffusionCorrection
    });
    if policy == SmallJumpPolicy::Drop && !measure.finite_activity() {
        return Err(PideError::PlanInvalid(format!(
            "drop policy needs finite activity, but α = {} ≥ n = {}",
            measure.shape().alpha(),
            measure.dim()
        )));
    }
    Ok(policy)
}

fn outer_radius(measure: &LevyMeasure, tol: f64) -> f64 {
    if measure.is_null() {
        0.0
    } else {
        measure.tail_radius(measure.dim() == 1 && measure.has_exponential_moment(), tol)
    }
}

/// One-dimensional lattice weights on offsets `±1..=J`.
fn lattice_1d(
    measure: &LevyMeasure,
    spacing: f64,
    r_out: f64,
    eps: f64,
    policy: SmallJumpPolicy,
    tol: f64,
) -> Result<Vec<(isize, f64)>> {
    if measure.is_null() {
        return Ok(Vec::new());
    }
    let j_max = (r_out / spacing).ceil() as isize;
    let mut out = Vec::with_capacity(2 * j_max as usize);
    for j in 1..=j_max {
        for sign in [1isize, -1] {
            let z = (sign * j) as f64 * spacing;
            let w = match policy {
                SmallJumpPolicy::Drop => {
                    if z.abs() < eps {
                        0.0
                    } else {
                        measure.density_1d(z) * spacing
                    }
                }
                SmallJumpPolicy::DiffusionCorrection => {
                    let a = (z.abs() - 0.5 * spacing).max(eps);
                    let b = (z.abs() + 0.5 * spacing).min(r_out);
                    if b <= a {
                        0.0
                    } else {
                        let s = sign as f64;
                        integrate(|t| measure.density_1d(s * t), a, b, QuadOptions::rel(tol).with_abs(0.0))?.value
                    }
                }
            };
            if w > 0.0 {
                out.push((sign * j, w));
            }
        }
    }
    Ok(out)
}

fn panel_edges(lo: f64, hi: f64, width: f64) -> Vec<f64> {
    let mut edges = vec![lo];
    let mut a = lo;
    let geo_end = width.min(hi);
    while a < geo_end {
        a = (2.0 * a).min(geo_end);
        edges.push(a);
    }
    while a < hi {
        let mut b = (a + width).min(hi);
        if a < 1.0 && b > 1.0 {
            b = 1.0;
        }
        a = b;
        edges.push(a);
    }
    edges
}

fn quadrature_nodes(measure: &LevyMeasure, r_out: f64, lo: f64, cfg: &OperatorConfig) -> QuadNodes {
    let (gx, gw) = gauss_legendre(cfg.gl_order);
    let edges = panel_edges(lo, r_out, cfg.panel_width);
    let mut z = Vec::new();
    let mut w = Vec::new();
    for sign in [-1.0, 1.0] {
        for e in edges.windows(2) {
            let (c, h) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
            for (x, wt) in gx.iter().zip(&gw) {
                let zz = sign * (c + h * x);
                let d = measure.density_1d(zz);
                if d > 0.0 {
                    z.push(zz);
                    w.push(wt * h * d);
                }
            }
        }
    }
    QuadNodes { z, w }
}

impl OperatorPlan {
    /// Plan for a one-dimensional measure on the grid axis `axis`.
    pub fn new(measure: &LevyMeasure, shift: &ShiftModel, axis: Axis, cfg: &OperatorConfig) -> Result<Self> {
        if measure.dim() != 1 {
            return Err(PideError::PlanInvalid(
                "use OperatorPlan::new_2d for planar measures".into(),
            ));
        }
        let policy = resolve_policy(measure, cfg)?;
        let r_out = outer_radius(measure, cfg.tail_tol);
        let eps_in = cfg.eps_in.unwrap_or(0.5 * axis.spacing);
        if !(eps_in > 0.0) {
            return Err(PideError::PlanInvalid("inner cut-off must be positive".into()));
        }
        let pairs = lattice_1d(measure, axis.spacing, r_out, eps_in, policy, cfg.moment_tol)?;
        let lattice = Lattice {
            reach: [pairs.iter().map(|(j, _)| j.unsigned_abs()).max().unwrap_or(0), 0],
            offsets: pairs.iter().map(|&(j, _)| [j, 0]).collect(),
            weights: pairs.iter().map(|&(_, w)| w).collect(),
        };
        let comp = small_jump_compensation(measure, eps_in, policy)?;
        let quad = if (!shift.is_identity() || cfg.force_quadrature) && !measure.is_null() {
            let lo = match policy {
                SmallJumpPolicy::DiffusionCorrection => eps_in,
                SmallJumpPolicy::Drop => (1e-7 * r_out).max(eps_in.min(1e-7)),
            };
            Some(quadrature_nodes(measure, r_out, lo, cfg))
        } else {
            None
        };
        let mut plan = Self {
            axes: vec![axis],
            measure: PlanMeasure::One(measure.clone()),
            shift: shift.clone(),
            config: cfg.clone(),
            policy,
            eps_in,
            r_out,
            alpha: measure.shape().alpha(),
            lattice,
            quad,
            mass: 0.0,
            mean: [0.0; 2],
            exp_sum: 0.0,
            sigma2: [[comp.sigma2_correction[0][0], 0.0], [0.0, 0.0]],
            conv: Mutex::new(Vec::new()),
            shift_cache: Mutex::new(None),
        };
        plan.lattice_moments();
        Ok(plan)
    }

    /// Plan for a planar measure on a tensor grid; the shift is the identity.
    pub fn new_2d(measure: &Measure2d, axes: [Axis; 2], cfg: &OperatorConfig) -> Result<Self> {
        let (lattice, sigma2, policy, eps_in, r_out, alpha) = match measure {
            Measure2d::AxisProduct(parts) => {
                let mut offsets = Vec::new();
                let mut weights = Vec::new();
                let mut reach = [0usize; 2];
                let mut sigma2 = [[0.0; 2]; 2];
                let mut policy = SmallJumpPolicy::Drop;
                let mut eps_max: f64 = 0.0;
                let mut r_max: f64 = 0.0;
                let mut alpha = f64::NEG_INFINITY;
                for d in 0..2 {
                    let m = &parts[d];
                    let p = resolve_policy(m, cfg)?;
                    if p == SmallJumpPolicy::DiffusionCorrection {
                        policy = p;
                    }
                    let r = outer_radius(m, cfg.tail_tol);
                    let eps = cfg.eps_in.unwrap_or(0.5 * axes[d].spacing);
                    for (j, w) in lattice_1d(m, axes[d].spacing, r, eps, p, cfg.moment_tol)? {
                        let mut o = [0isize; 2];
                        o[d] = j;
                        reach[d] = reach[d].max(j.unsigned_abs());
                        offsets.push(o);
                        weights.push(w);
                    }
                    sigma2[d][d] = small_jump_compensation(m, eps, p)?.sigma2_correction[0][0];
                    eps_max = eps_max.max(eps);
                    r_max = r_max.max(r);
                    if !m.is_null() {
                        alpha = alpha.max(m.shape().alpha());
                    }
                }
                (
                    Lattice {
                        offsets,
                        weights,
                        reach,
                    },
                    sigma2,
                    policy,
                    eps_max,
                    r_max,
                    alpha.max(0.0) + 1.0,
                )
            }
            Measure2d::Density(m) => {
                let policy = resolve_policy(m, cfg)?;
                let r_out = outer_radius(m, cfg.tail_tol);
                let eps = cfg.eps_in.unwrap_or(0.5 * axes[0].spacing.max(axes[1].spacing));
                let j0 = (r_out / axes[0].spacing).ceil() as isize;
                let j1 = (r_out / axes[1].spacing).ceil() as isize;
                let cell = axes[0].spacing * axes[1].spacing;
                let mut offsets = Vec::new();
                let mut weights = Vec::new();
                let mut reach = [0usize; 2];
                if !m.is_null() {
                    for a in -j0..=j0 {
                        for b in -j1..=j1 {
                            let z = [a as f64 * axes[0].spacing, b as f64 * axes[1].spacing];
                            let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
                            if r == 0.0 || r > r_out || r < eps && policy == SmallJumpPolicy::DiffusionCorrection {
                                continue;
                            }
                            let w = m.density(&z) * cell;
                            if w > 0.0 {
                                reach[0] = reach[0].max(a.unsigned_abs());
                                reach[1] = reach[1].max(b.unsigned_abs());
                                offsets.push([a, b]);
                                weights.push(w);
                            }
                        }
                    }
                }
                let c = small_jump_compensation(m, eps, policy)?.sigma2_correction;
                (
                    Lattice {
                        offsets,
                        weights,
                        reach,
                    },
                    [[c[0][0], c[0][1]], [c[1][0], c[1][1]]],
                    policy,
                    eps,
                    r_out,
                    m.shape().alpha(),
                )
            }
        };
        let mut plan = Self {
            axes: axes.to_vec(),
            measure: PlanMeasure::Two(measure.clone()),
            shift: ShiftModel::identity(),
            config: cfg.clone(),
            policy,
            eps_in,
            r_out,
            alpha,
            lattice,
            quad: None,
            mass: 0.0,
            mean: [0.0; 2],
            exp_sum: 0.0,
            sigma2,
            conv: Mutex::new(Vec::new()),
            shift_cache: Mutex::new(None),
        };
        plan.lattice_moments();
        Ok(plan)
    }

    fn lattice_moments(&mut self) {
        let h0 = self.axes[0].spacing;
        let h1 = self.axes.get(1).map_or(0.0, |a| a.spacing);
        let (mut mass, mut m0, mut m1, mut e) = (0.0, 0.0, 0.0, 0.0);
        for (o, w) in self.lattice.offsets.iter().zip(&self.lattice.weights) {
            let z0 = o[0] as f64 * h0;
            mass += w;
            m0 += w * z0;
            m1 += w * o[1] as f64 * h1;
            e += w * z0.exp_m1();
        }
        self.mass = mass;
        self.mean = [m0, m1];
        self.exp_sum = e;
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shift(&self) -> &ShiftModel {
        &self.shift
    }

    pub fn config(&self) -> &OperatorConfig {
        &self.config
    }

    pub fn policy(&self) -> SmallJumpPolicy {
        self.policy
    }

    pub fn eps_in(&self) -> f64 {
        self.eps_in
    }

    pub fn r_out(&self) -> f64 {
        self.r_out
    }

    /// True when the convolution path is used.
    pub fn uses_lattice(&self) -> bool {
        self.quad.is_none()
    }

    pub fn is_null(&self) -> bool {
        match &self.measure {
            PlanMeasure::One(m) => m.is_null(),
            PlanMeasure::Two(m) => m.is_null(),
        }
    }

    /// `Σ w_j`, the discrete jump mass.
    pub fn lattice_mass(&self) -> f64 {
        self.mass
    }

    /// `Σ w_j z_j`.
    pub fn lattice_mean(&self) -> [f64; 2] {
        self.mean
    }

    /// Small-jump diffusion matrix added as `½ Σ σ²_ab ∂_a ∂_b`.
    pub fn sigma2_correction(&self) -> [[f64; 2]; 2] {
        self.sigma2
    }

    /// Drift `δ = ∫(e^z - 1 - z) ν(dz)` as realised by the lattice,
    /// including the small-jump band.
    pub fn lattice_delta(&self) -> f64 {
        self.exp_sum - self.mean[0] + 0.5 * self.sigma2[0][0]
    }

    /// Padding cells an input field needs for the convolution path.
    pub fn required_padding(&self) -> usize {
        self.lattice.reach[0].max(self.lattice.reach[1]).max(2)
    }

    /// Padding needed on the quadrature path when shifts reach `max_xi`.
    pub fn required_padding_for_shift(&self, max_xi: f64) -> usize {
        (max_xi / self.axes[0].spacing).ceil() as usize + 3
    }

    fn check_field(&self, u: &GridField) -> Result<()> {
        if u.axes().len() != self.axes.len()
            || u.axes()
                .iter()
                .zip(&self.axes)
                .any(|(a, b)| a.len != b.len || a.spacing != b.spacing)
        {
            return Err(PideError::GridMismatch(
                "field grid differs from the operator plan grid".into(),
            ));
        }
        Ok(())
    }

    fn conv_cache(&self, u: &GridField, tilt: f64) -> Arc<ConvCache> {
        let full = [u.full_len(0), if u.dim() == 2 { u.full_len(1) } else { 1 }];
        let mut guard = self.conv.lock().expect("operator cache poisoned");
        if let Some(c) = guard.iter().find(|c| c.full == full && c.tilt == tilt) {
            return Arc::clone(c);
        }
        let m0 = (full[0] + self.lattice.reach[0] + 1).next_power_of_two();
        let m1 = if self.dim() == 2 {
            (full[1] + self.lattice.reach[1] + 1).next_power_of_two()
        } else {
            1
        };
        let axes: Vec<Axis> = if self.dim() == 2 {
            vec![
                Axis::new(0.0, 1.0, m0.max(4)).unwrap(),
                Axis::new(0.0, 1.0, m1.max(4)).unwrap(),
            ]
        } else {
            vec![Axis::new(0.0, 1.0, m0.max(4)).unwrap()]
        };
        let spectral = Spectral::new(&axes).expect("valid FFT sizes");
        let mut kernel = vec![0.0; m0 * m1];
        let h0 = self.axes[0].spacing;
        for (o, w) in self.lattice.offsets.iter().zip(&self.lattice.weights) {
            let i0 = (-o[0]).rem_euclid(m0 as isize) as usize;
            let i1 = (-o[1]).rem_euclid(m1 as isize) as usize;
            kernel[i0 * m1 + i1] += w * (tilt * o[0] as f64 * h0).exp();
        }
        let kernel_hat = spectral.forward(&kernel).expect("kernel size");
        let c = Arc::new(ConvCache {
            full,
            tilt,
            m: [m0, m1],
            spectral,
            kernel_hat,
        });
        if guard.len() >= 4 {
            guard.remove(0);
        }
        guard.push(Arc::clone(&c));
        c
    }

    /// Picks `θ ∈ {0, 1}` so that `e^{-θx} u` has the smaller dynamic range;
    /// FFT rounding then scales with the tilted field instead of `max |u|`.
    fn choose_tilt(&self, u: &GridField) -> f64 {
        if u.dim() != 1 {
            return 0.0;
        }
        let n = u.full_len(0);
        let (mut m0, mut m1) = (0.0f64, 0.0f64);
        for (j, v) in u.values().iter().enumerate().take(n) {
            let y = u.full_coord(0, j);
            m0 = m0.max(v.abs());
            m1 = m1.max((v * (-y).exp()).abs());
        }
        let h0 = self.axes[0].spacing;
        let tilted_mass: f64 = self
            .lattice
            .offsets
            .iter()
            .zip(&self.lattice.weights)
            .map(|(o, w)| w * (o[0] as f64 * h0).exp())
            .sum();
        let e0 = self.mass * m0;
        let e1 = tilted_mass * m1 * self.axes[0].end().exp();
        if e1 < 0.5 * e0 {
            1.0
        } else {
            0.0
        }
    }

    /// `Σ_j w_j u(x + z_j)` at every core point, by FFT correlation over
    /// the padded field.
    pub fn convolve(&self, u: &GridField) -> Result<Vec<f64>> {
        self.check_field(u)?;
        if self.lattice.weights.is_empty() {
            return Ok(vec![0.0; u.core_len()]);
        }
        if u.padding() < self.lattice.reach[0].max(self.lattice.reach[1]) {
            return Err(PideError::OutOfDomain(format!(
                "padding {} is below the jump reach of {} cells",
                u.padding(),
                self.lattice.reach[0].max(self.lattice.reach[1])
            )));
        }
        let tilt = self.choose_tilt(u);
        let c = self.conv_cache(u, tilt);
        let [m0, m1] = c.m;
        let [f0, f1] = c.full;
        let mut data = vec![0.0; m0 * m1];
        for i in 0..f0 {
            data[i * m1..i * m1 + f1].copy_from_slice(&u.values()[i * f1..(i + 1) * f1]);
        }
        if tilt != 0.0 {
            for (j, v) in data.iter_mut().enumerate().take(f0) {
                *v *= (-tilt * u.full_coord(0, j)).exp();
            }
        }
        let mut spec = c.spectral.forward(&data)?;
        for (s, k) in spec.iter_mut().zip(&c.kernel_hat) {
            *s *= k;
        }
        let out = c.spectral.inverse(spec)?;
        let p = u.padding();
        let mut core = Vec::with_capacity(u.core_len());
        if self.dim() == 1 {
            core.extend_from_slice(&out[p..p + self.axes[0].len]);
            if tilt != 0.0 {
                for (i, v) in core.iter_mut().enumerate() {
                    *v *= (tilt * self.axes[0].coord(i as isize)).exp();
                }
            }
        } else {
            for i in 0..self.axes[0].len {
                let row = (i + p) * m1 + p;
                core.extend_from_slice(&out[row..row + self.axes[1].len]);
            }
        }
        Ok(core)
    }

    /// Direct `O(N J)` evaluation of [`OperatorPlan::convolve`].
    pub fn convolve_direct(&self, u: &GridField) -> Result<Vec<f64>> {
        self.check_field(u)?;
        let p = u.padding() as isize;
        let v = u.values();
        let f1 = if u.dim() == 2 { u.full_len(1) as isize } else { 1 };
        let (n0, n1) = (self.axes[0].len, self.axes.get(1).map_or(1, |a| a.len));
        let mut out = vec![0.0; n0 * n1];
        for i in 0..n0 {
            for j in 0..n1 {
                let mut acc = 0.0;
                for (o, w) in self.lattice.offsets.iter().zip(&self.lattice.weights) {
                    let a = i as isize + p + o[0];
                    let b = if u.dim() == 2 { j as isize + p + o[1] } else { 0 };
                    if a < 0 || b < 0 || a >= u.full_len(0) as isize || b >= f1 {
                        return Err(PideError::OutOfDomain("jump leaves the padded grid".into()));
                    }
                    acc += w * v[(a * f1 + b) as usize];
                }
                out[i * n1 + j] = acc;
            }
        }
        Ok(out)
    }

    /// Gradient of `u` on the core in the plan's gradient mode.
    pub fn gradients(&self, u: &GridField) -> Result<Vec<Vec<f64>>> {
        match self.config.gradient {
            GradientMode::Spectral => {
                let sp = Spectral::for_field(u)?;
                let core = u.core();
                (0..u.dim()).map(|d| sp.derivative(&core, d)).collect()
            }
            GradientMode::Fd4 => (0..u.dim()).map(|d| derivative_fd4(u, d)).collect(),
        }
    }

    /// `½ Σ σ²_ab ∂_a∂_b u`, or `None` when the correction vanishes.
    fn correction_term(&self, u: &GridField) -> Result<Option<Vec<f64>>> {
        let s = self.sigma2;
        if s.iter().flatten().all(|v| *v == 0.0) {
            return Ok(None);
        }
        let n = u.dim();
        let mut out = vec![0.0; u.core_len()];
        let needs_cross = n == 2 && s[0][1] != 0.0;
        if self.config.gradient == GradientMode::Spectral || needs_cross {
            let sp = Spectral::for_field(u)?;
            let r = sp.apply_multiplier(&u.core(), |k| {
                let mut q = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        q -= s[a][b] * k[a] * k[b];
                    }
                }
                Complex64::new(0.5 * q, 0.0)
            })?;
            return Ok(Some(r));
        }
        for d in 0..n {
            let dd = second_derivative_fd4(u, d)?;
            for (o, v) in out.iter_mut().zip(dd) {
                *o += 0.5 * s[d][d] * v;
            }
        }
        Ok(Some(out))
    }

    fn check_grad(&self, u: &GridField, grad: &[Vec<f64>]) -> Result<()> {
        if grad.len() != u.dim() || grad.iter().any(|g| g.len() != u.core_len()) {
            return Err(PideError::GridMismatch(
                "gradient must have one core-length component per axis".into(),
            ));
        }
        Ok(())
    }

    /// Resolved shifts for the plan's core abscissae at time `τ`.
    pub fn shift_table(&self, tau: f64) -> Result<Arc<ShiftTable>> {
        let Some(q) = &self.quad else {
            return Err(PideError::PlanInvalid(
                "identity-shift plans have no shift table".into(),
            ));
        };
        let mut guard = self.shift_cache.lock().expect("shift cache poisoned");
        if let Some(t) = guard.as_ref() {
            if t.tau == tau || self.shift.strategy.is_time_independent() {
                return Ok(Arc::clone(t));
            }
        }
        let ax = self.axes[0];
        let k = q.z.len();
        let rows: Vec<Vec<f64>> = (0..ax.len)
            .into_par_iter()
            .map(|i| {
                let x = ax.coord(i as isize);
                q.z.iter()
                    .map(|&z| self.shift.resolve(tau, x, z))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let xi: Vec<f64> = rows.into_iter().flatten().collect();
        let max_abs = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let t = Arc::new(ShiftTable {
            tau,
            nodes: k,
            xi,
            max_abs,
        });
        *guard = Some(Arc::clone(&t));
        Ok(t)
    }

    /// Quadrature-path sum `Σ_k w_k [u(x+ξ_k) - u(x) - c(ξ_k) u'(x)]` with
    /// `c(ξ) = ξ` or `e^ξ - 1`, for closures `u`, `u'`.
    fn quadrature_sum(
        &self,
        tau: f64,
        u_at: &(dyn Fn(usize, f64) -> Result<f64> + Sync),
        u_core: &[f64],
        du: &[f64],
        compensated: bool,
    ) -> Result<Vec<f64>> {
        let q = self.quad.as_ref().expect("quadrature nodes");
        let table = self.shift_table(tau)?;
        let ax = self.axes[0];
        (0..ax.len)
            .into_par_iter()
            .map(|i| {
                let x = ax.coord(i as isize);
                let row = table.row(i);
                let mut acc = 0.0;
                for ((w, xi), _) in q.w.iter().zip(row).zip(&q.z) {
                    let jump = u_at(i, x + xi)? - u_core[i];
                    let c = if compensated { xi.exp_m1() } else { *xi };
                    acc += w * (jump - c * du[i]);
                }
                Ok(acc)
            })
            .collect()
    }

    fn check_reach(&self, u: &GridField, tau: f64) -> Result<()> {
        let t = self.shift_table(tau)?;
        if t.max_abs > u.reach() {
            return Err(PideError::OutOfDomain(format!(
                "largest shift {} exceeds the padding reach {} (need {} padding cells)",
                t.max_abs,
                u.reach(),
                self.required_padding_for_shift(t.max_abs)
            )));
        }
        Ok(())
    }

    /// Jump integral over `ε ≤ |z| ≤ R` only, without the small-jump
    /// diffusion. `compensated` selects the `f̃` form (one-dimensional).
    pub fn jump_part(&self, u: &GridField, grad: &[Vec<f64>], tau: f64, compensated: bool) -> Result<Vec<f64>> {
        self.check_field(u)?;
        self.check_grad(u, grad)?;
        if compensated && self.dim() != 1 {
            return Err(PideError::Unsupported("f̃ is one-dimensional".into()));
        }
        let core = u.core();
        if self.quad.is_some() {
            self.check_reach(u, tau)?;
            return self.quadrature_sum(tau, &|_, x| u.interpolate_1d(x), &core, &grad[0], compensated);
        }
        let mut c = self.convolve(u)?;
        for (j, v) in c.iter_mut().enumerate() {
            *v -= self.mass * core[j];
            if compensated {
                *v -= self.exp_sum * grad[0][j];
            } else {
                for d in 0..u.dim() {
                    *v -= self.mean[d] * grad[d][j];
                }
            }
        }
        Ok(c)
    }

    /// Bound on the explicit jump part: `2 Σ w + |c| π / Δ`, where `c` is
    /// the largest first-order coefficient (`Σ w z` or `Σ w (e^ξ - 1)`).
    pub fn explicit_lipschitz(&self) -> Result<f64> {
        let kmax = self
            .axes
            .iter()
            .map(|a| std::f64::consts::PI / a.spacing)
            .fold(0.0, f64::max);
        match &self.quad {
            None => {
                let c = self.mean[0].abs().max(self.mean[1].abs()).max(self.exp_sum.abs());
                Ok(2.0 * self.mass + c * kmax)
            }
            Some(q) => {
                let t = self.shift_table(0.0)?;
                let mass: f64 = q.w.iter().sum();
                let mut c: f64 = 0.0;
                for i in 0..self.axes[0].len {
                    let row = t.row(i);
                    let a: f64 = q.w.iter().zip(row).map(|(w, xi)| w * xi).sum();
                    let b: f64 = q.w.iter().zip(row).map(|(w, xi)| w * xi.exp_m1()).sum();
                    c = c.max(a.abs()).max(b.abs());
                }
                Ok(2.0 * mass + c * kmax)
            }
        }
    }

    /// `f(u)` at time `τ` (the time only matters for time-dependent shifts).
    pub fn apply_f_at(&self, u: &GridField, grad: &[Vec<f64>], tau: f64) -> Result<GridField> {
        let mut out = self.jump_part(u, grad, tau, false)?;
        if let Some(corr) = self.correction_term(u)? {
            for (o, c) in out.iter_mut().zip(corr) {
                *o += c;
            }
        }
        u.like_with_core(&out)
    }

    /// `f(u)` for identity or time-independent shifts.
    pub fn apply_f(&self, u: &GridField, grad: &[Vec<f64>]) -> Result<GridField> {
        self.apply_f_at(u, grad, u.time())
    }

    /// `f̃(u) = f(u) - δ ∂ₓu` at time `τ` (one-dimensional).
    pub fn apply_f_tilde_at(&self, u: &GridField, grad: &[Vec<f64>], tau: f64) -> Result<GridField> {
        let mut out = self.jump_part(u, grad, tau, true)?;
        let du = &grad[0];
        if let Some(corr) = self.correction_term(u)? {
            let s = 0.5 * self.sigma2[0][0];
            for ((o, c), d) in out.iter_mut().zip(corr).zip(du) {
                *o += c - s * d;
            }
        }
        u.like_with_core(&out)
    }

    pub fn apply_f_tilde(&self, u: &GridField, grad: &[Vec<f64>]) -> Result<GridField> {
        self.apply_f_tilde_at(u, grad, u.time())
    }

    /// `f̃(u)` on the core for a function known in closed form: `u`, `∂ₓu`
    /// and `∂²ₓu` are evaluated directly (no interpolation). On the lattice
    /// path the closure is sampled at the lattice points.
    pub fn apply_f_tilde_fn(
        &self,
        tau: f64,
        u: &(dyn Fn(f64) -> f64 + Sync),
        du: &(dyn Fn(f64) -> f64 + Sync),
        d2u: &(dyn Fn(f64) -> f64 + Sync),
    ) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(PideError::Unsupported("f̃ is one-dimensional".into()));
        }
        let ax = self.axes[0];
        let xs: Vec<f64> = (0..ax.len).map(|i| ax.coord(i as isize)).collect();
        let core: Vec<f64> = xs.iter().map(|&x| u(x)).collect();
        let dcore: Vec<f64> = xs.iter().map(|&x| du(x)).collect();
        let mut out = if self.quad.is_some() {
            self.quadrature_sum(tau, &|_, x| Ok(u(x)), &core, &dcore, true)?
        } else {
            let field = GridField::from_fn_1d(ax, self.required_padding(), u)?;
            let mut c = self.convolve(&field)?;
            for (j, v) in c.iter_mut().enumerate() {
                *v -= self.mass * core[j] + self.exp_sum * dcore[j];
            }
            c
        };
        let s = 0.5 * self.sigma2[0][0];
        if s != 0.0 {
            for (j, o) in out.iter_mut().enumerate() {
                *o += s * (d2u(xs[j]) - dcore[j]);
            }
        }
        Ok(out)
    }

    /// `δ(τ, x_i) = Σ_k w_k (e^{ξ_k} - 1 - ξ_k)` plus the small-jump band,
    /// consistent with [`OperatorPlan::apply_f_tilde_at`].
    pub fn delta_profile(&self, tau: f64) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(PideError::Unsupported("δ is one-dimensional".into()));
        }
        let n = self.axes[0].len;
        let band = 0.5 * self.sigma2[0][0];
        match &self.quad {
            None => Ok(vec![self.lattice_delta(); n]),
            Some(q) => {
                let t = self.shift_table(tau)?;
                Ok((0..n)
                    .map(|i| {
                        q.w.iter()
                            .zip(t.row(i))
                            .map(|(w, xi)| w * exp_compensator(*xi))
                            .sum::<f64>()
                            + band
                    })
                    .collect())
            }
        }
    }

    /// Measured multiplier of `f` on `e^{ikx}`: `f` is applied to `cos` and
    /// `sin` separately (padding filled with the plane wave, exact
    /// gradient), and the result projected onto `e^{ikx}`.
    pub fn measured_symbol(&self, k: f64) -> Result<Complex64> {
        if self.dim() != 1 {
            return Err(PideError::Unsupported("plane-wave symbol is measured in 1-D".into()));
        }
        let ax = self.axes[0];
        let pad = self.required_padding() + 3;
        let c = GridField::from_fn_1d(ax, pad, |x| (k * x).cos())?;
        let s = GridField::from_fn_1d(ax, pad, |x| (k * x).sin())?;
        let xs: Vec<f64> = (0..ax.len).map(|i| ax.coord(i as isize)).collect();
        let dc: Vec<f64> = xs.iter().map(|x| -k * (k * x).sin()).collect();
        let ds: Vec<f64> = xs.iter().map(|x| k * (k * x).cos()).collect();
        let fc = self.apply_f(&c, &[dc])?.core();
        let fs = self.apply_f(&s, &[ds])?.core();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &x) in xs.iter().enumerate() {
            let val = Complex64::new(fc[j], fs[j]);
            acc += val * Complex64::from_polar(1.0, -k * x);
        }
        Ok(acc / xs.len() as f64)
    }

    /// Admissible range check for the `f`-bound: `1/2 ≤ γ < 1` and
    /// `γ > (α - n) / (2ω)`.
    pub fn check_bound_gamma(&self, gamma: f64) -> Result<()> {
        if !(0.5..1.0).contains(&gamma) {
            return Err(PideError::domain(format!("γ = {gamma} violates 1/2 ≤ γ < 1")));
        }
        let omega = self.shift.strategy.holder_exponent();
        let n = self.dim() as f64;
        let lower = (self.alpha - n) / (2.0 * omega);
        if !(gamma > lower) {
            return Err(PideError::domain(format!(
                "γ = {gamma} violates γ > (α - n)/(2ω) = {lower} (α = {}, n = {n}, ω = {omega})",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Ratios `‖f(u)‖_{L²} / ‖∇u‖_{X^{γ-1/2}}` for each sample; zero samples
/// give `None`.
pub fn f_bound_probe(plan: &OperatorPlan, samples: &[GridField], gamma: f64) -> Result<Vec<Option<f64>>> {
    plan.check_bound_gamma(gamma)?;
    samples
        .iter()
        .map(|u| {
            let grad_norm = gradient_xgamma_norm(u, gamma)?;
            if grad_norm == 0.0 {
                return Ok(None);
            }
            let g = plan.gradients(u)?;
            let f = plan.apply_f(u, &g)?;
            Ok(Some(f.l2_norm() / grad_norm))
        })
        .collect()
}

/// Fixed sample fields for the operator-bound probes: Gaussians
/// `e^{-(x-c)²/(2s²)}` for `c ∈ {-0.5, 0, 0.7}`, `s ∈ {0.3, 0.6}`, each
/// plain and modulated by `cos 3x`. The padding is filled from the formula.
pub fn bound_probe_family(axis: Axis, padding: usize) -> Result<Vec<GridField>> {
    let mut out = Vec::new();
    for c in [-0.5, 0.0, 0.7] {
        for s in [0.3, 0.6] {
            for k in [0.0, 3.0] {
                out.push(GridField::from_fn_1d(axis, padding, |x: f64| {
                    (-(x - c) * (x - c) / (2.0 * s * s)).exp() * (k * x).cos()
                })?);
            }
        }
    }
    Ok(out)
}

/// Shift pairs `(ξ₁, ξ₂)` sampled on the core of `axis` for the `Q`-map
/// probe: `ξ₁ = a sin x`, `ξ₂ = ξ₁ + b cos 2x` with `(a, b)` from a fixed list.
pub fn q_probe_shifts(axis: Axis) -> Vec<(Vec<f64>, Vec<f64>)> {
    let xs: Vec<f64> = (0..axis.len).map(|i| axis.coord(i as isize)).collect();
    [(0.05, 0.01), (0.05, 0.002), (0.1, 0.02), (0.02, 0.005)]
        .iter()
        .map(|&(a, b)| {
            let x1: Vec<f64> = xs.iter().map(|x| a * x.sin()).collect();
            let x2: Vec<f64> = xs.iter().zip(&x1).map(|(x, v)| v + b * (2.0 * x).cos()).collect();
            (x1, x2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::{ShiftMode, TradingStrategy};

    fn merton() -> LevyMeasure {
        LevyMeasure::merton(0.5, &[-0.1], 0.2).unwrap()
    }

    #[test]
    fn constant_is_annihilated() {
        let ax = Axis::centred(0.0, 4.0, 256).unwrap();
        let plan = OperatorPlan::new(&merton(), &ShiftModel::identity(), ax, &OperatorConfig::default()).unwrap();
        let u = GridField::from_fn_1d(ax, plan.required_padding(), |_| 3.0).unwrap();
        let f = plan.apply_f(&u, &[vec![0.0; 256]]).unwrap();
        assert!(f.max_abs_core() < 1e-13);
    }

    #[test]
    fn fft_matches_direct_sum() {
        let ax = Axis::centred(0.0, 4.0, 128).unwrap();
        let plan = OperatorPlan::new(&merton(), &ShiftModel::identity(), ax, &OperatorConfig::default()).unwrap();
        let u = GridField::from_fn_1d(ax, plan.required_padding(), |x| (-(x - 0.3) * (x - 0.3)).exp()).unwrap();
        let a = plan.convolve(&u).unwrap();
        let b = plan.convolve_direct(&u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn exponential_annihilated_by_f_tilde() {
        let ax = Axis::centred(0.0, 3.0, 512).unwrap();
        for m in [merton(), LevyMeasure::kou(1.0, 0.4, 3.0, 2.0).unwrap()] {
            let plan = OperatorPlan::new(&m, &ShiftModel::identity(), ax, &OperatorConfig::default()).unwrap();
            let u = GridField::from_fn_1d(ax, plan.required_padding(), f64::exp).unwrap();
            let g: Vec<f64> = u.core();
            let f = plan.apply_f_tilde(&u, &[g]).unwrap();
            // FFT rounding scales with the largest padded value.
            let top = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(f.max_abs_core() < 1e-14 * top, "{}", f.max_abs_core());
            assert!(f.max_abs_core() < 1e-10, "{}", f.max_abs_core());
        }
    }

    #[test]
    fn symbol_relates_to_levy_exponent() {
        // m(k) = -φ(k) - ik ∫_{|z|>1} z ν(dz) with b = 0, a = 0.
        let m = merton();
        let k = 2.0;
        let sym = compensated_symbol(&m, k, 1e-11).unwrap();
        let phi = m.levy_exponent(&[k], &[0.0], &[vec![0.0]], 1e-11).unwrap();
        let r = m.tail_radius(false, 1e-13);
        let far = m
            .integrate_1d(|z| if z.abs() > 1.0 { z } else { 0.0 }, 1.0, r, 1e-11)
            .unwrap();
        let rhs = -phi - Complex64::new(0.0, k * far);
        assert!((sym - rhs).norm() < 1e-9);
    }

    #[test]
    fn drop_policy_rejects_infinite_activity() {
        let ax = Axis::centred(0.0, 4.0, 64).unwrap();
        let heavy = LevyMeasure::exponential_tail(1.0, 1.5, 2.0, 1).unwrap();
        let cfg = OperatorConfig {
            policy: Some(SmallJumpPolicy::Drop),
            ..OperatorConfig::default()
        };
        assert!(matches!(
            OperatorPlan::new(&heavy, &ShiftModel::identity(), ax, &cfg),
            Err(PideError::PlanInvalid(_))
        ));
        let plan = OperatorPlan::new(&heavy, &ShiftModel::identity(), ax, &OperatorConfig::default()).unwrap();
        assert_eq!(plan.policy(), SmallJumpPolicy::DiffusionCorrection);
        assert!(plan.sigma2_correction()[0][0] > 0.0);
    }

    #[test]
    fn quadrature_path_matches_lattice() {
        let ax = Axis::centred(0.0, 6.0, 1024).unwrap();
        let m = merton();
        let lat = OperatorPlan::new(&m, &ShiftModel::identity(), ax, &OperatorConfig::default()).unwrap();
        let cfg = OperatorConfig {
            force_quadrature: true,
            ..OperatorConfig::default()
        };
        let quad = OperatorPlan::new(&m, &ShiftModel::identity(), ax, &cfg).unwrap();
        assert!(!quad.uses_lattice());
        let pad = lat
            .required_padding()
            .max(quad.required_padding_for_shift(quad.r_out()))
            + 2;
        let u = GridField::from_fn_1d(ax, pad, |x| (-(x * x)).exp() * (1.0 + 0.3 * x)).unwrap();
        let g = lat.gradients(&u).unwrap();
        let a = lat.apply_f(&u, &g).unwrap();
        let b = quad.apply_f(&u, &g).unwrap();
        let diff: Vec<f64> = a.core().iter().zip(b.core()).map(|(x, y)| x - y).collect();
        let rel = crate::grid::l2_norm(&diff, ax.spacing) / a.l2_norm();
        assert!(rel < 1e-5, "{rel}");
    }

    #[test]
    fn nonidentity_shift_uses_quadrature() {
        let ax = Axis::centred(0.0, 4.0, 256).unwrap();
        let shift = ShiftModel::new(
            TradingStrategy::sin(1.0, 1.0, 0.0).unwrap(),
            0.01,
            ShiftMode::FixedPoint,
        )
        .unwrap();
        let plan = OperatorPlan::new(&merton(), &shift, ax, &OperatorConfig::default()).unwrap();
        assert!(!plan.uses_lattice());
        let d = plan.delta_profile(0.0).unwrap();
        assert!(d.iter().any(|v| (v - d[0]).abs() > 1e-8));
        let tiny = GridField::from_fn_1d(ax, 2, |x| (-(x * x)).exp()).unwrap();
        assert!(matches!(
            plan.apply_f(&tiny, &[vec![0.0; 256]]),
            Err(PideError::OutOfDomain(_))
        ));
    }
}
