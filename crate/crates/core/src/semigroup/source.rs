//! Closed-form test sources. The Gaussian packet has an exact phase-space
//! Fourier transform, a smooth compactly supported time profile and a
//! semi-closed-form L2 norm, which removes forward-transform error from the
//! pipeline entirely.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientPath;
use crate::error::{invalid, Result};
use crate::quadrature::{gauss_legendre, pairwise_sum};

/// A time-dependent source with a closed-form transform
/// fhat(t, xi, eta) = int e^{i(xi.x + eta.v)} f(t,x,v) dx dv,
/// evaluable at arbitrary frequencies.
pub trait SpectralSource: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, xi: &[f64], eta: &[f64]) -> Complex64;
    /// Support of the time profile (the transform vanishes outside).
    fn time_window(&self) -> (f64, f64);
    /// Extents guiding frequency-grid construction: (|xi| center, |eta| center, bandwidth).
    fn freq_envelope(&self) -> (f64, f64, f64);
}

/// Gaussian packet: real-valued by construction,
/// fhat(t,xi,eta) = amp w(t) [G(xi-xi0, eta-eta0) + G(xi+xi0, eta+eta0)],
/// G(a,b) = exp(-(|a|^2+|b|^2)/(2 s_b^2)), with a C-infinity bump w supported
/// on [t_a, t_b].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub center_xi: Vec<f64>,
    pub center_eta: Vec<f64>,
    pub bandwidth: f64,
    pub time_window: (f64, f64),
    #[serde(default = "default_profile_exponent")]
    pub profile_exponent: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_profile_exponent() -> f64 {
    1.0
}
fn default_amplitude() -> f64 {
    1.0
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.center_xi.len() != self.center_eta.len() || self.center_xi.is_empty() {
            return Err(invalid("source: frequency centers must share a nonzero dimension"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(invalid("source: bandwidth must be positive"));
        }
        if !(self.time_window.0 < self.time_window.1) {
            return Err(invalid("source: empty time window"));
        }
        if !(self.profile_exponent > 0.0) {
            return Err(invalid("source: profile exponent must be positive"));
        }
        Ok(())
    }

    /// Smooth bump supported on [t_a, t_b], equal to 1 at the midpoint:
    /// w(t) = exp(-p u^2 / (1 - u^2)), u the affine map onto (-1, 1).
    pub fn window_profile(&self, t: f64) -> f64 {
        let (a, b) = self.time_window;
        if t <= a || t >= b {
            return 0.0;
        }
        let u = (2.0 * t - a - b) / (b - a);
        (-self.profile_exponent * u * u / (1.0 - u * u)).exp()
    }

    fn gauss(&self, dxi: &[f64], deta: &[f64]) -> f64 {
        let s2 = 2.0 * self.bandwidth * self.bandwidth;
        let q: f64 = dxi.iter().map(|x| x * x).sum::<f64>()
            + deta.iter().map(|x| x * x).sum::<f64>();
        (-q / s2).exp()
    }

    /// Physical-space packet value (inverse transform in closed form).
    pub fn value(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        let d = self.dim();
        let s2 = self.bandwidth * self.bandwidth;
        let phase: f64 = self
            .center_xi
            .iter()
            .zip(x)
            .map(|(k, y)| k * y)
            .sum::<f64>()
            + self
                .center_eta
                .iter()
                .zip(v)
                .map(|(k, y)| k * y)
                .sum::<f64>();
        let q: f64 = x.iter().map(|y| y * y).sum::<f64>() + v.iter().map(|y| y * y).sum::<f64>();
        self.amplitude
            * self.window_profile(t)
            * (s2 / (2.0 * std::f64::consts::PI)).powi(d as i32)
            * 2.0
            * phase.cos()
            * (-0.5 * s2 * q).exp()
    }

    /// ||f(t,.,.)||_2 as a function of t: closed form in the Gaussian
    /// parameters times the window profile.
    pub fn l2_slice_norm(&self, t: f64) -> f64 {
        self.l2_spatial_factor() * self.window_profile(t)
    }

    fn l2_spatial_factor(&self) -> f64 {
        let d = self.dim() as i32;
        let s2 = self.bandwidth * self.bandwidth;
        let pi = std::f64::consts::PI;
        let k2: f64 = self.center_xi.iter().map(|x| x * x).sum::<f64>()
            + self.center_eta.iter().map(|x| x * x).sum::<f64>();
        let sq = (2.0 * pi).powi(-2 * d)
            * self.amplitude
            * self.amplitude
            * 2.0
            * (pi * s2).powi(d)
            * (1.0 + (-k2 / s2).exp());
        sq.sqrt()
    }

    /// Full space-time L2 norm; the time factor integrates the squared bump
    /// with spectral-accuracy Gauss panels.
    pub fn l2_norm(&self) -> f64 {
        let (a, b) = self.time_window;
        let gl = gauss_legendre(32);
        let n_panels = 8;
        let mut terms = Vec::with_capacity(n_panels);
        for k in 0..n_panels {
            let pa = a + (b - a) * k as f64 / n_panels as f64;
            let pb = a + (b - a) * (k + 1) as f64 / n_panels as f64;
            terms.push(gl.integrate_mapped(pa, pb, |t| {
                let w = self.window_profile(t);
                w * w
            }));
        }
        let time_sq = pairwise_sum(&terms);
        self.l2_spatial_factor() * time_sq.sqrt()
    }
}

impl SpectralSource for SourceSpec {
    fn dim(&self) -> usize {
        self.center_xi.len()
    }

    fn eval(&self, t: f64, xi: &[f64], eta: &[f64]) -> Complex64 {
        let w = self.window_profile(t);
        if w == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let dm: Vec<f64> = xi.iter().zip(&self.center_xi).map(|(a, c)| a - c).collect();
        let dem: Vec<f64> = eta
            .iter()
            .zip(&self.center_eta)
            .map(|(a, c)| a - c)
            .collect();
        let dp: Vec<f64> = xi.iter().zip(&self.center_xi).map(|(a, c)| a + c).collect();
        let dep: Vec<f64> = eta
            .iter()
            .zip(&self.center_eta)
            .map(|(a, c)| a + c)
            .collect();
        Complex64::new(
            self.amplitude * w * (self.gauss(&dm, &dem) + self.gauss(&dp, &dep)),
            0.0,
        )
    }

    fn time_window(&self) -> (f64, f64) {
        self.time_window
    }

    fn freq_envelope(&self) -> (f64, f64, f64) {
        let xc = self.center_xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ec = self.center_eta.iter().map(|x| x * x).sum::<f64>().sqrt();
        (xc, ec, self.bandwidth)
    }
}

/// The packet with its time profile frozen to 1: a fixed function of (x, v)
/// for semigroup-only experiments.
#[derive(Debug, Clone)]
pub struct FrozenSource(pub SourceSpec);

impl SpectralSource for FrozenSource {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, _t: f64, xi: &[f64], eta: &[f64]) -> Complex64 {
        let mid = 0.5 * (self.0.time_window.0 + self.0.time_window.1);
        self.0.eval(mid, xi, eta) / self.0.window_profile(mid)
    }
    fn time_window(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }
    fn freq_envelope(&self) -> (f64, f64, f64) {
        self.0.freq_envelope()
    }
}

/// The transformed source of the scaling identity:
/// ftilde(t,x,v) = f(r^alpha t + t0, r^{1+alpha} x + x0 + Pi_{t0, r^alpha t + t0} v0, r v + v0).
/// Its transform picks up a dilation, a Jacobian factor and a time-dependent
/// modulation from the sheared center.
pub struct RescaledSource<'a> {
    pub inner: &'a dyn SpectralSource,
    pub path: &'a CoefficientPath,
    pub r: f64,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub alpha: f64,
}

impl<'a> RescaledSource<'a> {
    pub fn new(
        inner: &'a dyn SpectralSource,
        path: &'a CoefficientPath,
        r: f64,
        t0: f64,
        x0: Vec<f64>,
        v0: Vec<f64>,
    ) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("rescaled source: r must be positive"));
        }
        let d = inner.dim();
        if x0.len() != d || v0.len() != d || path.dim != d {
            return Err(invalid("rescaled source: dimension mismatch"));
        }
        Ok(Self {
            alpha: path.alpha(),
            inner,
            path,
            r,
            t0,
            x0,
            v0,
        })
    }
}

impl<'a> SpectralSource for RescaledSource<'a> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, t: f64, xi: &[f64], eta: &[f64]) -> Complex64 {
        let d = self.dim();
        let ra = self.r.powf(self.alpha);
        let rx = self.r.powf(1.0 + self.alpha);
        let t_orig = ra * t + self.t0;
        // sheared x-center at the point's own (original) time
        let pi = self.path.flow_matrix(self.t0, t_orig);
        let v0 = nalgebra::DVector::from_column_slice(&self.v0);
        let shift = pi * v0;
        let b: Vec<f64> = self.x0.iter().zip(shift.iter()).map(|(a, s)| a + s).collect();

        let xi_in: Vec<f64> = xi.iter().map(|z| z / rx).collect();
        let eta_in: Vec<f64> = eta.iter().map(|z| z / self.r).collect();
        let phase: f64 = xi_in.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()
            + eta_in.iter().zip(&self.v0).map(|(a, c)| a * c).sum::<f64>();
        let jac = self.r.powf(-((2.0 + self.alpha) * d as f64));
        let modulation = Complex64::from_polar(1.0, -phase);
        self.inner.eval(t_orig, &xi_in, &eta_in) * jac * modulation
    }

    fn time_window(&self) -> (f64, f64) {
        let (a, b) = self.inner.time_window();
        let ra = self.r.powf(self.alpha);
        ((a - self.t0) / ra, (b - self.t0) / ra)
    }

    fn freq_envelope(&self) -> (f64, f64, f64) {
        let (xc, ec, w) = self.inner.freq_envelope();
        let rx = self.r.powf(1.0 + self.alpha);
        // conservative: scale centers and width by the larger dilation factor
        (
            xc * rx,
            ec * self.r,
            w * self.r.max(rx).max(1.0 / self.r.min(rx)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn packet_1d() -> SourceSpec {
        SourceSpec {
            center_xi: vec![0.8],
            center_eta: vec![1.4],
            bandwidth: 1.0,
            time_window: (0.0, 1.0),
            profile_exponent: 1.0,
            amplitude: 2.0,
        }
    }

    #[test]
    fn window_is_a_bump() {
        let s = packet_1d();
        assert_eq!(s.window_profile(0.0), 0.0);
        assert_eq!(s.window_profile(1.0), 0.0);
        assert_eq!(s.window_profile(-5.0), 0.0);
        assert_relative_eq!(s.window_profile(0.5), 1.0);
        assert!(s.window_profile(0.25) > 0.0 && s.window_profile(0.25) < 1.0);
    }

    #[test]
    fn transform_is_real_and_symmetric() {
        let s = packet_1d();
        let v = s.eval(0.5, &[0.3], &[-0.7]);
        assert_eq!(v.im, 0.0);
        let w = s.eval(0.5, &[-0.3], &[0.7]);
        assert_relative_eq!(v.re, w.re, max_relative = 1e-14);
    }

    #[test]
    fn value_matches_numerical_inverse_transform() {
        // reconstruct f(t,x,v) from fhat with a fine trapezoid rule
        let s = packet_1d();
        let (t, x, v) = (0.5, 0.4, -0.3);
        let h = 0.05;
        let n = 400i64;
        let mut acc = 0.0;
        for i in -n..=n {
            for j in -n..=n {
                let xi = i as f64 * h;
                let eta = j as f64 * h;
                let fh = s.eval(t, &[xi], &[eta]).re;
                acc += fh * (x * xi + v * eta).cos();
            }
        }
        let rec = acc * h * h / (2.0 * std::f64::consts::PI).powi(2);
        assert_relative_eq!(rec, s.value(t, &[x], &[v]), max_relative = 1e-8);
    }

    #[test]
    fn l2_norm_matches_direct_grid_sum() {
        let s = packet_1d();
        // brute-force physical-space norm on a fine grid
        let h = 0.05;
        let n = 200i64;
        let mut space_time = 0.0;
        let nt = 400;
        for kt in 0..nt {
            let t = (kt as f64 + 0.5) / nt as f64;
            let mut slice = 0.0;
            for i in -n..=n {
                for j in -n..=n {
                    let val = s.value(t, &[i as f64 * h], &[j as f64 * h]);
                    slice += val * val;
                }
            }
            space_time += slice * h * h / nt as f64;
        }
        assert_relative_eq!(space_time.sqrt(), s.l2_norm(), max_relative = 1e-6);
        // slice norm agrees too
        let t = 0.37;
        let mut slice = 0.0;
        for i in -n..=n {
            for j in -n..=n {
                let val = s.value(t, &[i as f64 * h], &[j as f64 * h]);
                slice += val * val;
            }
        }
        assert_relative_eq!(
            (slice * h * h).sqrt(),
            s.l2_slice_norm(t),
            max_relative = 1e-8
        );
    }
}
