//! Discrete Fourier transforms on the periodic core of a [`GridField`].

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PideError, Result};
use crate::grid::{Axis, GridField};

/// Planned forward/inverse transforms for one core shape (1-D or 2-D,
/// row-major with axis 0 slow).
#[derive(Clone)]
pub struct Spectral {
    axes: Vec<Axis>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
    k: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("axes", &self.axes).finish()
    }
}

impl Spectral {
    pub fn new(axes: &[Axis]) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(PideError::GridMismatch(
                "spectral grids must be 1- or 2-dimensional".into(),
            ));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            axes: axes.to_vec(),
            fwd: axes.iter().map(|a| planner.plan_fft_forward(a.len)).collect(),
            inv: axes.iter().map(|a| planner.plan_fft_inverse(a.len)).collect(),
            k: axes.iter().map(Axis::wavenumbers).collect(),
        })
    }

    pub fn for_field(u: &GridField) -> Result<Self> {
        Self::new(u.axes())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Wavenumbers along axis `d` in FFT order.
    pub fn wavenumbers(&self, d: usize) -> &[f64] {
        &self.k[d]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(PideError::GridMismatch(format!(
                "spectral plan for {} points applied to {n}",
                self.len()
            )));
        }
        Ok(())
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        match self.axes.len() {
            1 => plans[0].process(data),
            _ => {
                let (n0, n1) = (self.axes[0].len, self.axes[1].len);
                for row in data.chunks_exact_mut(n1) {
                    plans[1].process(row);
                }
                let mut col = vec![Complex64::new(0.0, 0.0); n0];
                for j in 0..n1 {
                    for i in 0..n0 {
                        col[i] = data[i * n1 + j];
                    }
                    plans[0].process(&mut col);
                    for i in 0..n0 {
                        data[i * n1 + j] = col[i];
                    }
                }
            }
        }
    }

    /// Unnormalised forward DFT of real core data.
    pub fn forward(&self, core: &[f64]) -> Result<Vec<Complex64>> {
        self.check(core.len())?;
        let mut data: Vec<Complex64> = core.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        Ok(data)
    }

    /// Inverse DFT (normalised), complex output.
    pub fn inverse_complex(&self, mut spec: Vec<Complex64>) -> Result<Vec<Complex64>> {
        self.check(spec.len())?;
        self.transform(&mut spec, &self.inv);
        let scale = 1.0 / self.len() as f64;
        for v in &mut spec {
            *v *= scale;
        }
        Ok(spec)
    }

    /// Inverse DFT (normalised), real part.
    pub fn inverse(&self, spec: Vec<Complex64>) -> Result<Vec<f64>> {
        Ok(self.inverse_complex(spec)?.into_iter().map(|c| c.re).collect())
    }

    /// Visits every frequency bin with its wavevector.
    pub fn for_each_mode(&self, spec: &mut [Complex64], mut m: impl FnMut(&[f64], &mut Complex64)) {
        match self.axes.len() {
            1 => {
                for (v, &k) in spec.iter_mut().zip(&self.k[0]) {
                    m(&[k], v);
                }
            }
            _ => {
                let n1 = self.axes[1].len;
                for (idx, v) in spec.iter_mut().enumerate() {
                    m(&[self.k[0][idx / n1], self.k[1][idx % n1]], v);
                }
            }
        }
    }

    /// Applies the Fourier multiplier `m(k)` to real core data and returns
    /// the real part of the result.
    pub fn apply_multiplier(&self, core: &[f64], m: impl Fn(&[f64]) -> Complex64) -> Result<Vec<f64>> {
        let mut spec = self.forward(core)?;
        self.for_each_mode(&mut spec, |k, v| *v *= m(k));
        self.inverse(spec)
    }

    /// Spectral partial derivative along axis `d`; the Nyquist mode is
    /// dropped so the result stays real.
    pub fn derivative(&self, core: &[f64], d: usize) -> Result<Vec<f64>> {
        let n = self.axes[d].len;
        let nyq = if n.is_multiple_of(2) {
            (n / 2) as f64 * 2.0 * std::f64::consts::PI / self.axes[d].period()
        } else {
            f64::NAN
        };
        self.apply_multiplier(core, |k| {
            if (k[d] - nyq).abs() < 1e-9 * nyq.abs() {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k[d])
            }
        })
    }

    /// `Σ_k w(k) |û_k|²` scaled so that `w ≡ 1` gives the squared grid `L²` norm.
    pub fn weighted_energy(&self, core: &[f64], w: impl Fn(&[f64]) -> f64) -> Result<f64> {
        let mut spec = self.forward(core)?;
        let mut s = 0.0;
        self.for_each_mode(&mut spec, |k, v| s += w(k) * v.norm_sqr());
        let vol: f64 = self.axes.iter().map(|a| a.spacing).product();
        Ok(s * vol / self.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let a = Axis::periodic(0.0, 1.0, 8).unwrap();
        let b = Axis::periodic(0.0, 2.0, 6).unwrap();
        let sp = Spectral::new(&[a, b]).unwrap();
        let core: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = sp.inverse(sp.forward(&core).unwrap()).unwrap();
        for (x, y) in core.iter().zip(&back) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_of_mode() {
        let ax = Axis::periodic(0.0, 2.0 * std::f64::consts::PI, 64).unwrap();
        let sp = Spectral::new(&[ax]).unwrap();
        let core: Vec<f64> = (0..64).map(|i| (3.0 * ax.coord(i)).sin()).collect();
        let d = sp.derivative(&core, 0).unwrap();
        for (i, v) in d.iter().enumerate() {
            assert!((v - 3.0 * (3.0 * ax.coord(i as isize)).cos()).abs() < 1e-12);
        }
    }
}
