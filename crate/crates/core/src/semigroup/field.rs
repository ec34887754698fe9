//! Spectral fields: resolvent (or source) transforms tabulated on a tensor
//! quadrature grid in (s, xi, eta), the Plancherel fractional norms, and
//! direct (non-FFT) reconstruction on physical lattices.
//!
//! Frequency axes are uniform symmetric grids with envelope-driven extent and
//! spacing; for integrands with Gaussian envelopes the truncated trapezoid
//! rule converges spectrally (Poisson summation) and keeps +-node symmetry
//! exact, so Hermitian pairing cancels imaginary parts to rounding.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coefficients::CoefficientPath;
use crate::error::{invalid, CoreError, Result};
use crate::quadrature::{gauss_legendre, pairwise_sum};
use crate::semigroup::{resolvent_hat, SpectralSource};

/// Quadrature controls for field assembly. `scale` is the global multiplier
/// applied by `--quad-scale`: node densities grow linearly with it.
#[derive(Debug, Clone)]
pub struct FieldQuad {
    /// frequency nodes per source bandwidth (spacing = bandwidth / this)
    pub nodes_per_bandwidth: f64,
    /// envelope cut in bandwidths for the frequency extent
    pub envelope_cut: f64,
    /// relative tolerance of the adaptive resolvent time quadrature
    pub resolvent_tol: f64,
    /// Gauss nodes per unit-time panel of the s-mesh core
    pub s_nodes_per_panel: usize,
    /// width of core s-panels
    pub s_panel_width: f64,
    /// truncation threshold for the exponential s-tail
    pub tail_cut: f64,
    pub scale: f64,
}

impl Default for FieldQuad {
    fn default() -> Self {
        Self {
            nodes_per_bandwidth: 3.0,
            envelope_cut: 8.5,
            resolvent_tol: 1e-9,
            s_nodes_per_panel: 8,
            s_panel_width: 0.35,
            tail_cut: 1e-10,
            scale: 1.0,
        }
    }
}

impl FieldQuad {
    pub fn scaled(&self, factor: f64) -> Self {
        let mut q = self.clone();
        q.scale *= factor;
        q
    }
}

/// One frequency axis: uniform symmetric nodes, common trapezoid weight.
#[derive(Debug, Clone)]
pub struct FreqAxis {
    pub nodes: Vec<f64>,
    pub weight: f64,
}

impl FreqAxis {
    fn uniform(extent: f64, spacing: f64) -> Self {
        let k = (extent / spacing).ceil() as i64;
        let nodes = (-k..=k).map(|j| j as f64 * spacing).collect();
        Self {
            nodes,
            weight: spacing,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub dim: usize,
    pub s_nodes: Vec<f64>,
    pub s_weights: Vec<f64>,
    pub xi_axes: Vec<FreqAxis>,
    pub eta_axes: Vec<FreqAxis>,
}

impl FieldGrid {
    pub fn n_freq(&self) -> usize {
        self.xi_axes.iter().map(|a| a.nodes.len()).product::<usize>()
            * self.eta_axes.iter().map(|a| a.nodes.len()).product::<usize>()
    }

    /// Decode a flat frequency index into (xi, eta, combined weight).
    pub fn freq_node(&self, mut flat: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let mut dims: Vec<usize> = self
            .xi_axes
            .iter()
            .chain(self.eta_axes.iter())
            .map(|a| a.nodes.len())
            .collect();
        dims.reverse();
        let mut idx = Vec::with_capacity(dims.len());
        for n in dims {
            idx.push(flat % n);
            flat /= n;
        }
        idx.reverse();
        let mut xi = Vec::with_capacity(self.dim);
        let mut eta = Vec::with_capacity(self.dim);
        let mut w = 1.0;
        for (k, a) in self.xi_axes.iter().enumerate() {
            xi.push(a.nodes[idx[k]]);
            w *= a.weight;
        }
        for (k, a) in self.eta_axes.iter().enumerate() {
            eta.push(a.nodes[idx[self.dim + k]]);
            w *= a.weight;
        }
        (xi, eta, w)
    }
}

/// Tabulated transform values u^(s, xi, eta) with their quadrature grid.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub grid: FieldGrid,
    /// layout: values[s_idx * n_freq + flat_freq]
    pub values: Vec<Complex64>,
    pub lambda: Option<f64>,
}

fn build_s_mesh(
    window: (f64, f64),
    lambda: Option<f64>,
    quad: &FieldQuad,
) -> (Vec<f64>, Vec<f64>) {
    let (t_a, t_b) = window;
    let nodes_per_panel = ((quad.s_nodes_per_panel as f64 * quad.scale).round() as usize).max(2);
    let gl = gauss_legendre(nodes_per_panel);
    let mut s_nodes = Vec::new();
    let mut s_weights = Vec::new();
    let mut push_panel = |a: f64, b: f64| {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            s_nodes.push(c + h * x);
            s_weights.push(h * w);
        }
    };
    match lambda {
        None => {
            // source-only field: mesh covers the window
            let span = t_b - t_a;
            let n_panels = ((span / quad.s_panel_width).ceil() as usize).max(1);
            for k in 0..n_panels {
                let a = t_a + span * k as f64 / n_panels as f64;
                let b = t_a + span * (k + 1) as f64 / n_panels as f64;
                push_panel(a, b);
            }
        }
        Some(lam) => {
            // resolvent field: core panels plus a geometric exponential tail
            let back = (2.0 / lam).min(2.0);
            let core_lo = t_a - back;
            let span = t_b - core_lo;
            let n_panels = ((span / quad.s_panel_width).ceil() as usize).max(1);
            for k in 0..n_panels {
                let a = core_lo + span * k as f64 / n_panels as f64;
                let b = core_lo + span * (k + 1) as f64 / n_panels as f64;
                push_panel(a, b);
            }
            // tail: e^{2 lambda (s - t_a)} mass below the cut
            let needed = (1.0 / quad.tail_cut).ln() / (2.0 * lam);
            let mut lo = core_lo;
            let mut width = 2.0 * quad.s_panel_width;
            while t_a - lo < needed && t_a - lo < 200.0 {
                push_panel(lo - width, lo);
                lo -= width;
                width *= 2.0;
            }
        }
    }
    // ascending order keeps reductions deterministic and readable
    let mut order: Vec<usize> = (0..s_nodes.len()).collect();
    order.sort_by(|&i, &j| s_nodes[i].partial_cmp(&s_nodes[j]).unwrap());
    (
        order.iter().map(|&i| s_nodes[i]).collect(),
        order.iter().map(|&i| s_weights[i]).collect(),
    )
}

fn build_freq_axes(
    path: Option<&CoefficientPath>,
    source: &dyn SpectralSource,
    quad: &FieldQuad,
) -> (Vec<FreqAxis>, Vec<FreqAxis>) {
    let d = source.dim();
    let (xc, ec, width) = source.freq_envelope();
    let spacing = width / (quad.nodes_per_bandwidth * quad.scale);
    let xi_extent = xc + quad.envelope_cut * width;
    let mut eta_extent = ec + quad.envelope_cut * width;
    if let Some(p) = path {
        // shear allowance: the eta-support of the sheared transform moves by
        // |Pi_{s,t}| |xi| over the times where the field carries mass
        let u_sup = p.u_sup_norm();
        let (t_a, t_b) = source.time_window();
        let core_span = (t_b - t_a) + 2.0;
        // beyond the core, mass requires the accumulated symbol to stay small:
        // kappa (t-s)^{1+alpha} |xi|^alpha <= A_cut bounds (t-s) |xi|
        let alpha = p.alpha();
        let kappa_lo = (0..p.nu.len())
            .map(|i| {
                let sym = p.symbol_of_piece(i);
                crate::quadrature::sphere_directions(d, 128)
                    .iter()
                    .map(|e| sym.eval(e).unwrap_or(f64::INFINITY))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
            .max(1e-8);
        let a_cut = 30.0f64;
        let tail_reach = (a_cut * (1.0 + alpha) / kappa_lo).powf(1.0 / alpha);
        eta_extent += u_sup * (core_span * xi_extent + tail_reach);
    }
    let xi_axes = (0..d)
        .map(|_| FreqAxis::uniform(xi_extent, spacing))
        .collect();
    let eta_axes = (0..d)
        .map(|_| FreqAxis::uniform(eta_extent, spacing))
        .collect();
    (xi_axes, eta_axes)
}

/// Crate-internal access to the envelope-driven axis builder.
pub(crate) fn build_freq_axes_pub(
    path: Option<&CoefficientPath>,
    source: &dyn SpectralSource,
    quad: &FieldQuad,
) -> (Vec<FreqAxis>, Vec<FreqAxis>) {
    build_freq_axes(path, source, quad)
}

impl SpectralField {
    /// Tabulate the resolvent transform on an envelope-adapted grid.
    pub fn resolvent(
        path: &CoefficientPath,
        source: &dyn SpectralSource,
        lambda: f64,
        quad: &FieldQuad,
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("resolvent field: lambda must be positive"));
        }
        let (xi_axes, eta_axes) = build_freq_axes(Some(path), source, quad);
        let (s_nodes, s_weights) = build_s_mesh(source.time_window(), Some(lambda), quad);
        let grid = FieldGrid {
            dim: source.dim(),
            s_nodes,
            s_weights,
            xi_axes,
            eta_axes,
        };
        let n_freq = grid.n_freq();
        let n_total = grid.s_nodes.len() * n_freq;
        let tol = quad.resolvent_tol;
        let values: Result<Vec<Complex64>> = (0..n_total)
            .into_par_iter()
            .map(|flat| {
                let s = grid.s_nodes[flat / n_freq];
                let (xi, eta, _) = grid.freq_node(flat % n_freq);
                resolvent_hat(path, source, lambda, s, &xi, &eta, tol)
            })
            .collect();
        Ok(Self {
            grid,
            values: values?,
            lambda: Some(lambda),
        })
    }

    /// Tabulate the source transform itself (no semigroup).
    pub fn from_source(source: &dyn SpectralSource, quad: &FieldQuad) -> Result<Self> {
        let (xi_axes, eta_axes) = build_freq_axes(None, source, quad);
        let (s_nodes, s_weights) = build_s_mesh(source.time_window(), None, quad);
        let grid = FieldGrid {
            dim: source.dim(),
            s_nodes,
            s_weights,
            xi_axes,
            eta_axes,
        };
        let n_freq = grid.n_freq();
        let values: Vec<Complex64> = (0..grid.s_nodes.len() * n_freq)
            .into_par_iter()
            .map(|flat| {
                let s = grid.s_nodes[flat / n_freq];
                let (xi, eta, _) = grid.freq_node(flat % n_freq);
                source.eval(s, &xi, &eta)
            })
            .collect();
        Ok(Self {
            grid,
            values,
            lambda: None,
        })
    }

    /// Pointwise multiplier map m(s_idx, xi, eta) applied to the values.
    pub fn map_multiplier<F>(&self, m: F) -> Self
    where
        F: Fn(usize, &[f64], &[f64]) -> Complex64 + Sync,
    {
        let n_freq = self.grid.n_freq();
        let values: Vec<Complex64> = (0..self.values.len())
            .into_par_iter()
            .map(|flat| {
                let (xi, eta, _) = self.grid.freq_node(flat % n_freq);
                self.values[flat] * m(flat / n_freq, &xi, &eta)
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
            lambda: self.lambda,
        }
    }

    /// Pointwise linear combination with another field on the identical grid.
    pub fn combine<F>(&self, other: &Self, f: F) -> Result<Self>
    where
        F: Fn(usize, &[f64], &[f64], Complex64, Complex64) -> Complex64 + Sync,
    {
        if self.values.len() != other.values.len() {
            return Err(invalid("combine: fields must share the grid"));
        }
        let n_freq = self.grid.n_freq();
        let values: Vec<Complex64> = (0..self.values.len())
            .into_par_iter()
            .map(|flat| {
                let (xi, eta, _) = self.grid.freq_node(flat % n_freq);
                f(
                    flat / n_freq,
                    &xi,
                    &eta,
                    self.values[flat],
                    other.values[flat],
                )
            })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            lambda: self.lambda,
        })
    }

    /// Hermitian-symmetry defect max |u(s,-xi,-eta) - conj(u(s,xi,eta))|.
    pub fn hermitian_defect(&self) -> f64 {
        let n_freq = self.grid.n_freq();
        let nx: Vec<usize> = self
            .grid
            .xi_axes
            .iter()
            .chain(self.grid.eta_axes.iter())
            .map(|a| a.nodes.len())
            .collect();
        let mut worst = 0.0f64;
        for (flat, v) in self.values.iter().enumerate() {
            let s_idx = flat / n_freq;
            let mut rem = flat % n_freq;
            let mut idx = vec![0usize; nx.len()];
            for k in (0..nx.len()).rev() {
                idx[k] = rem % nx[k];
                rem /= nx[k];
            }
            // mirrored index (axes are symmetric by construction)
            let mut mflat = 0usize;
            for k in 0..nx.len() {
                mflat = mflat * nx[k] + (nx[k] - 1 - idx[k]);
            }
            let m = self.values[s_idx * n_freq + mflat];
            worst = worst.max((m - v.conj()).norm());
        }
        worst
    }

    /// Check all values finite.
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid("field: empty"));
        }
        if self
            .values
            .iter()
            .any(|v| !(v.re.is_finite() && v.im.is_finite()))
        {
            return Err(CoreError::Consistency("field: non-finite values".into()));
        }
        Ok(())
    }

    /// CSV export with the documented column order.
    pub fn export_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.dim;
        let mut header = String::from("s");
        for k in 0..d {
            header.push_str(&format!(",xi{k}"));
        }
        for k in 0..d {
            header.push_str(&format!(",eta{k}"));
        }
        header.push_str(",re,im,weight");
        writeln!(w, "{header}")?;
        let n_freq = self.grid.n_freq();
        for (flat, v) in self.values.iter().enumerate() {
            let s_idx = flat / n_freq;
            let (xi, eta, wq) = self.grid.freq_node(flat % n_freq);
            let mut line = format!("{:.17e}", self.grid.s_nodes[s_idx]);
            for z in xi.iter().chain(eta.iter()) {
                line.push_str(&format!(",{z:.17e}"));
            }
            line.push_str(&format!(
                ",{:.17e},{:.17e},{:.17e}",
                v.re,
                v.im,
                wq * self.grid.s_weights[s_idx]
            ));
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// || Delta_x^{bx} Delta_v^{bv} u ||_2 by Plancherel: the operator Delta^b
/// carries the multiplier -|.|^{2b}, so the squared norm integrates
/// |xi|^{4 bx} |eta|^{4 bv} |u^|^2 against the quadrature weights.
pub fn frac_norm_l2(field: &SpectralField, beta_x: f64, beta_v: f64) -> Result<f64> {
    field.validate()?;
    if beta_x < 0.0 || beta_v < 0.0 {
        return Err(invalid("frac_norm_l2: orders must be nonnegative"));
    }
    let n_freq = field.grid.n_freq();
    let d = field.grid.dim as i32;
    let norm_const = (2.0 * std::f64::consts::PI).powi(-2 * d);
    let per_s: Vec<f64> = (0..field.grid.s_nodes.len())
        .into_par_iter()
        .map(|s_idx| {
            let terms: Vec<f64> = (0..n_freq)
                .map(|j| {
                    let (xi, eta, w) = field.grid.freq_node(j);
                    let xin = xi.iter().map(|z| z * z).sum::<f64>().sqrt();
                    let etn = eta.iter().map(|z| z * z).sum::<f64>().sqrt();
                    let mut fac = w;
                    if beta_x > 0.0 {
                        fac *= xin.powf(4.0 * beta_x);
                    }
                    if beta_v > 0.0 {
                        fac *= etn.powf(4.0 * beta_v);
                    }
                    fac * field.values[s_idx * n_freq + j].norm_sqr()
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let weighted: Vec<f64> = per_s
        .iter()
        .zip(&field.grid.s_weights)
        .map(|(v, w)| v * w)
        .collect();
    Ok((norm_const * pairwise_sum(&weighted)).max(0.0).sqrt())
}

/// Uniform midpoint lattice in (x, v).
#[derive(Debug, Clone)]
pub struct PhysGrid {
    pub dim: usize,
    pub x_extent: f64,
    pub v_extent: f64,
    pub nx: usize,
    pub nv: usize,
}

impl PhysGrid {
    pub fn new(dim: usize, x_extent: f64, v_extent: f64, nx: usize, nv: usize) -> Self {
        Self {
            dim,
            x_extent,
            v_extent,
            nx,
            nv,
        }
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        let h = 2.0 * self.x_extent / self.nx as f64;
        (0..self.nx)
            .map(|i| -self.x_extent + (i as f64 + 0.5) * h)
            .collect()
    }

    pub fn v_nodes(&self) -> Vec<f64> {
        let h = 2.0 * self.v_extent / self.nv as f64;
        (0..self.nv)
            .map(|i| -self.v_extent + (i as f64 + 0.5) * h)
            .collect()
    }

    /// Cell volume of the (x, v) lattice (d-dim per variable).
    pub fn cell_volume(&self) -> f64 {
        let hx = 2.0 * self.x_extent / self.nx as f64;
        let hv = 2.0 * self.v_extent / self.nv as f64;
        hx.powi(self.dim as i32) * hv.powi(self.dim as i32)
    }
}

/// Real-valued reconstruction u(s, x, v) on a lattice with its s-weights.
#[derive(Debug, Clone)]
pub struct PhysicalField {
    pub s_nodes: Vec<f64>,
    pub s_weights: Vec<f64>,
    pub grid: PhysGrid,
    /// layout: data[s][x_idx * nv + v_idx] (d = 1)
    pub data: Vec<Vec<f64>>,
}

/// Direct quadrature reconstruction
/// u(s,x,v) = (2 pi)^{-2d} sum_nodes w e^{-i(x.xi + v.eta)} u^(s,xi,eta).
/// Only d = 1 carries the factorized fast path; the imaginary residue must
/// stay below 1e-8 of the real amplitude or a consistency error is raised.
pub fn inverse_transform_grid(field: &SpectralField, phys: &PhysGrid) -> Result<PhysicalField> {
    field.validate()?;
    if field.grid.dim != 1 || phys.dim != 1 {
        return Err(invalid(
            "inverse_transform_grid: physical reconstruction implemented for d = 1",
        ));
    }
    let xi = &field.grid.xi_axes[0];
    let eta = &field.grid.eta_axes[0];
    let n_xi = xi.nodes.len();
    let n_eta = eta.nodes.len();
    let xs = phys.x_nodes();
    let vs = phys.v_nodes();
    let norm = (2.0 * std::f64::consts::PI).powi(-2) * xi.weight * eta.weight;

    let data: Vec<Vec<f64>> = (0..field.grid.s_nodes.len())
        .into_par_iter()
        .map(|s_idx| {
            let slice = &field.values[s_idx * n_xi * n_eta..(s_idx + 1) * n_xi * n_eta];
            // stage 1: contract eta for each (xi_i, v)
            let mut m1 = vec![Complex64::new(0.0, 0.0); n_xi * vs.len()];
            for (i, _) in xi.nodes.iter().enumerate() {
                for (vi, v) in vs.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, e) in eta.nodes.iter().enumerate() {
                        let phase = Complex64::from_polar(1.0, -v * e);
                        acc += slice[i * n_eta + j] * phase;
                    }
                    m1[i * vs.len() + vi] = acc;
                }
            }
            // stage 2: contract xi for each (x, v)
            let mut out = vec![0.0f64; xs.len() * vs.len()];
            let mut max_im = 0.0f64;
            let mut max_re = 0.0f64;
            for (xi_idx, xnode) in xs.iter().enumerate() {
                for vi in 0..vs.len() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, z) in xi.nodes.iter().enumerate() {
                        let phase = Complex64::from_polar(1.0, -xnode * z);
                        acc += m1[i * vs.len() + vi] * phase;
                    }
                    let val = acc * norm;
                    max_im = max_im.max(val.im.abs());
                    max_re = max_re.max(val.re.abs());
                    out[xi_idx * vs.len() + vi] = val.re;
                }
            }
            (out, max_im, max_re)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(out, max_im, max_re)| {
            if max_im > 1e-8 * max_re.max(1e-300) {
                Err(CoreError::Consistency(format!(
                    "inverse transform: imaginary residue {max_im:.3e} vs real {max_re:.3e} \
                     (broken Hermitian symmetry)"
                )))
            } else {
                Ok(out)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PhysicalField {
        s_nodes: field.grid.s_nodes.clone(),
        s_weights: field.grid.s_weights.clone(),
        grid: phys.clone(),
        data,
    })
}

/// Discrete L^p norm of a single slice: (sum |u|^p vol)^{1/p}.
pub fn lp_norm(values: &[f64], p: f64, cell_volume: f64) -> f64 {
    let terms: Vec<f64> = values.iter().map(|u| u.abs().powf(p) * cell_volume).collect();
    pairwise_sum(&terms).powf(1.0 / p)
}

impl PhysicalField {
    /// Space-time L^p norm including the s-quadrature weights.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = self.grid.cell_volume();
        let per_s: Vec<f64> = self
            .data
            .iter()
            .map(|slice| {
                let terms: Vec<f64> = slice.iter().map(|u| u.abs().powf(p) * vol).collect();
                pairwise_sum(&terms)
            })
            .collect();
        let weighted: Vec<f64> = per_s
            .iter()
            .zip(&self.s_weights)
            .map(|(v, w)| v * w)
            .collect();
        pairwise_sum(&weighted).powf(1.0 / p)
    }
}
