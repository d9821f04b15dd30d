//! Uniform tensor grids with explicit boundary padding.
//!
//! A [`GridField`] stores `len + 2 * padding` samples per axis. The `len`
//! core points carry the unknowns; padding cells hold values outside the
//! core (zeros for decaying fields, closed-form values for explicitly known
//! functions) so that shifted evaluations `u(x + z)` stay on the grid.

use crate::error::{PideError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    /// Coordinate of core index `anchor`; coordinates are computed relative
    /// to it so that the anchor node is exact.
    pub origin: f64,
    pub anchor: isize,
    pub spacing: f64,
    /// Number of core points.
    pub len: usize,
}

impl Axis {
    pub fn new(start: f64, spacing: f64, len: usize) -> Result<Self> {
        if !(spacing > 0.0) || len < 4 {
            return Err(PideError::GridMismatch(format!(
                "axis needs positive spacing and at least 4 points (spacing = {spacing}, len = {len})"
            )));
        }
        Ok(Self {
            origin: start,
            anchor: 0,
            spacing,
            len,
        })
    }

    /// `len` points covering `[lo, hi)` with period `hi - lo`.
    pub fn periodic(lo: f64, hi: f64, len: usize) -> Result<Self> {
        Self::new(lo, (hi - lo) / len as f64, len)
    }

    /// Axis of `len` points with `centre` placed exactly on core index `len / 2`.
    pub fn centred(centre: f64, half_width: f64, len: usize) -> Result<Self> {
        let spacing = 2.0 * half_width / len as f64;
        let mut ax = Self::new(centre, spacing, len)?;
        ax.anchor = (len / 2) as isize;
        Ok(ax)
    }

    /// Coordinate of core index `i` (negative and `≥ len` address padding).
    pub fn coord(&self, i: isize) -> f64 {
        self.origin + (i - self.anchor) as f64 * self.spacing
    }

    /// Coordinate of core index 0.
    pub fn start(&self) -> f64 {
        self.coord(0)
    }

    /// Fractional core index of coordinate `x`.
    pub fn index_of(&self, x: f64) -> f64 {
        (x - self.origin) / self.spacing + self.anchor as f64
    }

    pub fn period(&self) -> f64 {
        self.len as f64 * self.spacing
    }

    pub fn end(&self) -> f64 {
        self.coord(self.len as isize - 1)
    }

    /// Angular wavenumbers of the periodic core grid in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.len as isize;
        let scale = 2.0 * std::f64::consts::PI / self.period();
        (0..n)
            .map(|k| {
                let kk = if k <= n / 2 { k } else { k - n };
                kk as f64 * scale
            })
            .collect()
    }
}

/// Samples of a function on a uniform grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    axes: Vec<Axis>,
    padding: usize,
    values: Vec<f64>,
    time: f64,
}

impl GridField {
    pub fn zeros(axes: &[Axis], padding: usize) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(PideError::GridMismatch(format!(
                "grids must be 1- or 2-dimensional, got {}",
                axes.len()
            )));
        }
        let total: usize = axes.iter().map(|a| a.len + 2 * padding).product();
        Ok(Self {
            axes: axes.to_vec(),
            padding,
            values: vec![0.0; total],
            time: 0.0,
        })
    }

    /// Samples `f` at every point, padding included.
    pub fn from_fn_1d(axis: Axis, padding: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut g = Self::zeros(&[axis], padding)?;
        let p = padding as isize;
        for (j, v) in g.values.iter_mut().enumerate() {
            *v = f(axis.coord(j as isize - p));
        }
        g.check_finite()?;
        Ok(g)
    }

    pub fn from_fn_2d(ax0: Axis, ax1: Axis, padding: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut g = Self::zeros(&[ax0, ax1], padding)?;
        let p = padding as isize;
        let w = ax1.len + 2 * padding;
        for (idx, v) in g.values.iter_mut().enumerate() {
            let (i, j) = (idx / w, idx % w);
            *v = f(ax0.coord(i as isize - p), ax1.coord(j as isize - p));
        }
        g.check_finite()?;
        Ok(g)
    }

    /// Core values embedded in a padded grid whose padding cells are zero.
    pub fn from_core(axes: &[Axis], padding: usize, core: &[f64]) -> Result<Self> {
        let mut g = Self::zeros(axes, padding)?;
        g.set_core(core)?;
        Ok(g)
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(PideError::GridMismatch(format!(
                "non-finite grid value at flat index {k}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> Axis {
        self.axes[k]
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    /// Total samples along axis `k` including padding.
    pub fn full_len(&self, k: usize) -> usize {
        self.axes[k].len + 2 * self.padding
    }

    /// Coordinate of full-grid index `j` along axis `k`.
    pub fn full_coord(&self, k: usize, j: usize) -> f64 {
        self.axes[k].coord(j as isize - self.padding as isize)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn core_len(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    /// Core samples in row-major order.
    pub fn core(&self) -> Vec<f64> {
        let p = self.padding;
        match self.axes.len() {
            1 => self.values[p..p + self.axes[0].len].to_vec(),
            _ => {
                let (n0, n1) = (self.axes[0].len, self.axes[1].len);
                let w = n1 + 2 * p;
                let mut out = Vec::with_capacity(n0 * n1);
                for i in 0..n0 {
                    let row = (i + p) * w + p;
                    out.extend_from_slice(&self.values[row..row + n1]);
                }
                out
            }
        }
    }

    pub fn set_core(&mut self, core: &[f64]) -> Result<()> {
        if core.len() != self.core_len() {
            return Err(PideError::GridMismatch(format!(
                "core length {} does not match grid core {}",
                core.len(),
                self.core_len()
            )));
        }
        let p = self.padding;
        match self.axes.len() {
            1 => self.values[p..p + core.len()].copy_from_slice(core),
            _ => {
                let (n0, n1) = (self.axes[0].len, self.axes[1].len);
                let w = n1 + 2 * p;
                for i in 0..n0 {
                    let row = (i + p) * w + p;
                    self.values[row..row + n1].copy_from_slice(&core[i * n1..(i + 1) * n1]);
                }
            }
        }
        Ok(())
    }

    /// Same grid, new core values, zero padding.
    pub fn like_with_core(&self, core: &[f64]) -> Result<Self> {
        let mut g = Self::zeros(&self.axes, self.padding)?;
        g.time = self.time;
        g.set_core(core)?;
        Ok(g)
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.axes == other.axes && self.padding == other.padding
    }

    /// Cell volume `Δx` or `Δx₀ Δx₁`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    /// Discrete `L²` norm over the core.
    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.core(), self.cell_volume())
    }

    pub fn max_abs_core(&self) -> f64 {
        self.core().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cubic (four-point Lagrange) interpolation of a 1-D field at `x`,
    /// using the full padded grid.
    pub fn interpolate_1d(&self, x: f64) -> Result<f64> {
        debug_assert_eq!(self.dim(), 1);
        let ax = self.axes[0];
        let s = ax.index_of(x) + self.padding as f64;
        let i = s.floor();
        let n = self.full_len(0) as f64;
        if !(i >= 1.0 && i + 2.0 < n) {
            return Err(PideError::OutOfDomain(format!(
                "interpolation point {x} outside the padded grid [{}, {}]",
                self.full_coord(0, 1),
                self.full_coord(0, self.full_len(0) - 3)
            )));
        }
        let t = s - i;
        let i = i as usize;
        let v = &self.values;
        Ok(cubic_weights(t).iter().enumerate().map(|(k, w)| w * v[i + k - 1]).sum())
    }

    /// Tensor-product cubic interpolation of a 2-D field at `(x0, x1)`.
    pub fn interpolate_2d(&self, x0: f64, x1: f64) -> Result<f64> {
        debug_assert_eq!(self.dim(), 2);
        let mut idx = [0usize; 2];
        let mut w = [[0.0; 4]; 2];
        for (d, x) in [x0, x1].into_iter().enumerate() {
            let ax = self.axes[d];
            let s = ax.index_of(x) + self.padding as f64;
            let i = s.floor();
            if !(i >= 1.0 && i + 2.0 < self.full_len(d) as f64) {
                return Err(PideError::OutOfDomain(format!(
                    "interpolation point ({x0}, {x1}) outside the padded grid along axis {d}"
                )));
            }
            idx[d] = i as usize;
            w[d] = cubic_weights(s - i);
        }
        let width = self.full_len(1);
        let mut acc = 0.0;
        for (a, wa) in w[0].iter().enumerate() {
            let row = (idx[0] + a - 1) * width;
            let mut inner = 0.0;
            for (b, wb) in w[1].iter().enumerate() {
                inner += wb * self.values[row + idx[1] + b - 1];
            }
            acc += wa * inner;
        }
        Ok(acc)
    }

    /// Maximum shift reachable from any core point while staying inside the
    /// stencil of [`GridField::interpolate_1d`].
    pub fn reach(&self) -> f64 {
        (self.padding as f64 - 2.0).max(0.0) * self.axes[0].spacing
    }
}

/// Lagrange weights for nodes `-1, 0, 1, 2` at offset `t ∈ [0, 1)`.
pub fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

pub fn l2_norm(values: &[f64], cell_volume: f64) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * cell_volume).sqrt()
}

/// Fourth-order central first derivative at core points of a 1-D field,
/// drawing on padding cells for the stencil.
pub fn gradient_fd4(u: &GridField) -> Result<Vec<f64>> {
    fd4_axis(u, 0, &[1.0, -8.0, 0.0, 8.0, -1.0], 12.0, 1)
}

/// Fourth-order central first derivative along axis `d`.
pub fn derivative_fd4(u: &GridField, d: usize) -> Result<Vec<f64>> {
    fd4_axis(u, d, &[1.0, -8.0, 0.0, 8.0, -1.0], 12.0, 1)
}

/// Fourth-order central second derivative along axis `d`.
pub fn second_derivative_fd4(u: &GridField, d: usize) -> Result<Vec<f64>> {
    fd4_axis(u, d, &[-1.0, 16.0, -30.0, 16.0, -1.0], 12.0, 2)
}

fn fd4_axis(u: &GridField, d: usize, stencil: &[f64; 5], denom: f64, order: i32) -> Result<Vec<f64>> {
    if d >= u.dim() {
        return Err(PideError::GridMismatch(format!(
            "axis {d} on a {}-dimensional field",
            u.dim()
        )));
    }
    let p = u.padding();
    if p < 2 {
        return Err(PideError::OutOfDomain(
            "fd4 stencils need at least 2 padding cells".into(),
        ));
    }
    let scale = 1.0 / (denom * u.axis(d).spacing.powi(order));
    let v = u.values();
    let w = if u.dim() == 2 { u.full_len(1) } else { 1 };
    let stride = if d == 0 { w } else { 1 };
    let (n0, n1) = if u.dim() == 2 {
        (u.axis(0).len, u.axis(1).len)
    } else {
        (u.axis(0).len, 1)
    };
    let mut out = Vec::with_capacity(n0 * n1);
    for i in 0..n0 {
        for j in 0..n1 {
            let c = if u.dim() == 2 { (i + p) * w + j + p } else { i + p };
            let mut acc = 0.0;
            for (k, s) in stencil.iter().enumerate() {
                if *s != 0.0 {
                    acc += s * v[c + k * stride - 2 * stride];
                }
            }
            out.push(acc * scale);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_roundtrip_2d() {
        let a = Axis::new(0.0, 0.5, 4).unwrap();
        let b = Axis::new(-1.0, 0.25, 6).unwrap();
        let g = GridField::from_fn_2d(a, b, 2, |x, y| x + 10.0 * y).unwrap();
        let core = g.core();
        assert_eq!(core.len(), 24);
        assert_eq!(core[0], -10.0);
        assert_eq!(core[7], 0.5 + 10.0 * -0.75);
        let h = g.like_with_core(&core).unwrap();
        assert_eq!(h.core(), core);
        assert_eq!(h.values()[0], 0.0);
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let ax = Axis::new(-1.0, 0.1, 20).unwrap();
        let g = GridField::from_fn_1d(ax, 3, |x| x * x * x - 2.0 * x + 1.0).unwrap();
        for &x in &[-0.93, 0.0, 0.4449, 1.0] {
            let v = g.interpolate_1d(x).unwrap();
            assert!((v - (x * x * x - 2.0 * x + 1.0)).abs() < 1e-12);
        }
        assert!(matches!(g.interpolate_1d(5.0), Err(PideError::OutOfDomain(_))));
    }

    #[test]
    fn fd4_on_exponential() {
        let ax = Axis::new(-1.0, 0.01, 200).unwrap();
        let g = GridField::from_fn_1d(ax, 2, f64::exp).unwrap();
        let d = gradient_fd4(&g).unwrap();
        for (i, v) in d.iter().enumerate() {
            let x = ax.coord(i as isize);
            assert!((v - x.exp()).abs() < 1e-9 * x.exp());
        }
    }

    #[test]
    fn centred_axis_hits_centre() {
        let ax = Axis::centred(0.3, 2.0, 64).unwrap();
        assert_eq!(ax.coord(32), 0.3);
    }
}
