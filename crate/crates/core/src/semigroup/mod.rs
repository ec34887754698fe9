//! Fourier-side machinery of the kinetic semigroup: the accumulated symbol
//! A(s,t,xi,eta) = int_s^t psi^{nu_r}_{sigma_r}(Pi*_{r,t} xi + eta) dr, the
//! characteristic function exp(-A), the transformed Markov operator and the
//! resolvent integral.
//!
//! On each coefficient piece the shear argument is affine in r, so the atomic
//! part of the time integral has a closed form and the isotropic part reduces
//! to a smooth integral of cosh^{1+alpha} after a sinh substitution. This
//! keeps the semigroup property additive to machine precision, which the
//! consistency checks rely on.

mod field;
mod generator;
mod source;

pub use field::*;
pub use generator::*;
pub use source::*;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::coefficients::CoefficientPath;
use crate::error::{invalid, Result};
use crate::quadrature::{gauss_legendre, pairwise_sum};

/// Exact integral int_0^L |a + b u|^alpha du.
fn scalar_power_integral(a: f64, b: f64, l: f64, alpha: f64) -> f64 {
    if l == 0.0 {
        return 0.0;
    }
    if b == 0.0 || b.abs() * l <= 1e-6 * a.abs() {
        // midpoint expansion; relative error O((bL/a)^2)
        let mid = a + 0.5 * b * l;
        return l * mid.abs().powf(alpha);
    }
    let f = |x: f64| x.abs().powf(alpha + 1.0).copysign(x) / (alpha + 1.0);
    (f(a + b * l) - f(a)) / b
}

/// int_0^L (|p + u q|^2)^(alpha/2) du for vectors p, q via u - u0 = (m/|q|) sinh y.
fn vector_power_integral(p: &DVector<f64>, q: &DVector<f64>, l: f64, alpha: f64) -> f64 {
    let qn = q.norm();
    if l == 0.0 {
        return 0.0;
    }
    if qn == 0.0 {
        return l * p.norm().powf(alpha);
    }
    let pq = p.dot(q);
    let u0 = -pq / (qn * qn);
    let m2 = (p.norm_squared() - pq * pq / (qn * qn)).max(0.0);
    let m = m2.sqrt();
    if m <= 1e-9 * (p.norm() + qn * l) {
        // p nearly parallel to q: scalar case along q-hat
        return scalar_power_integral(pq / qn, qn, l, alpha);
    }
    let y_of = |u: f64| ((u - u0) * qn / m).asinh();
    let (y1, y2) = (y_of(0.0), y_of(l));
    // panels of unit width keep the cosh^{1+alpha} factor well resolved
    let n_panels = ((y2 - y1).abs().ceil() as usize).max(1);
    let gl = gauss_legendre(16);
    let mut acc = Vec::with_capacity(n_panels);
    for k in 0..n_panels {
        let a = y1 + (y2 - y1) * k as f64 / n_panels as f64;
        let b = y1 + (y2 - y1) * (k + 1) as f64 / n_panels as f64;
        acc.push(gl.integrate_mapped(a, b, |y| (m * y.cosh()).powf(1.0 + alpha) / qn));
    }
    pairwise_sum(&acc)
}

/// A(s,t,xi,eta) = int_s^t psi^{nu_r}_{sigma_r}(Pi*_{r,t} xi + eta) dr, exact
/// in time for piecewise-constant coefficients. Errors when s > t.
pub fn accumulated_symbol(
    path: &CoefficientPath,
    s: f64,
    t: f64,
    xi: &[f64],
    eta: &[f64],
) -> Result<f64> {
    if s > t {
        return Err(invalid("accumulated_symbol: requires s <= t"));
    }
    let d = path.dim;
    if xi.len() != d || eta.len() != d {
        return Err(invalid("accumulated_symbol: frequency dimension mismatch"));
    }
    if s == t {
        return Ok(0.0);
    }
    let xi_v = DVector::from_column_slice(xi);
    let eta_v = DVector::from_column_slice(eta);
    let cuts = path.piece_boundaries(s, t);
    let mut terms = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let idx = path.piece_index(mid);
        let sigma_t = path.sigma[idx].transpose();
        let u_t = path.u[idx].transpose();
        // zeta(r) = sigma^T (Pi*_{r,t} xi + eta) = p + (b - r) q on the piece
        let pi_bt = path.flow_matrix(b, t);
        let p = &sigma_t * (pi_bt.transpose() * &xi_v + &eta_v);
        let q = &sigma_t * (&u_t * &xi_v);
        let l = b - a;
        let sym = path.symbol_of_piece(idx);
        let measure = &sym.measure;
        let alpha = measure.alpha;

        let mut piece = 0.0;
        for (dir, wgt) in &measure.atoms {
            if *wgt == 0.0 {
                continue;
            }
            let th = DVector::from_column_slice(dir);
            piece += wgt * scalar_power_integral(p.dot(&th), q.dot(&th), l, alpha);
        }
        if measure.iso_weight > 0.0 {
            let iso_moment = crate::stable_levy::sphere_cos_moment(d, alpha);
            piece += measure.iso_weight * iso_moment * vector_power_integral(&p, &q, l, alpha);
        }
        terms.push(sym.one_d_constant * piece);
    }
    Ok(pairwise_sum(&terms))
}

/// E exp(i <(xi,eta), K_{s,t}>) = exp(-A(s,t,xi,eta)); real, in (0, 1].
pub fn char_function(
    path: &CoefficientPath,
    s: f64,
    t: f64,
    xi: &[f64],
    eta: &[f64],
) -> Result<f64> {
    Ok((-accumulated_symbol(path, s, t, xi, eta)?).exp())
}

/// Fourier transform of the Markov operator applied to a closed-form source:
/// (T_{s,t} f)^(xi,eta) = exp(-A(s,t,xi,eta - Pi*_{s,t} xi)) fhat(t, xi, eta - Pi*_{s,t} xi).
/// The shear is evaluated exactly at off-node frequencies; no interpolation.
pub fn apply_semigroup_hat(
    path: &CoefficientPath,
    fhat: &dyn SpectralSource,
    s: f64,
    t: f64,
    xi: &[f64],
    eta: &[f64],
) -> Result<Complex64> {
    if s > t {
        return Err(invalid("apply_semigroup_hat: requires s <= t"));
    }
    let sheared = sheared_eta(path, s, t, xi, eta);
    let a = accumulated_symbol(path, s, t, xi, &sheared)?;
    Ok(fhat.eval(t, xi, &sheared) * (-a).exp())
}

/// eta - Pi*_{s,t} xi.
pub fn sheared_eta(path: &CoefficientPath, s: f64, t: f64, xi: &[f64], eta: &[f64]) -> Vec<f64> {
    let pi = path.flow_matrix(s, t);
    let xi_v = DVector::from_column_slice(xi);
    let shift = pi.transpose() * xi_v;
    eta.iter().zip(shift.iter()).map(|(e, s)| e - s).collect()
}

/// Resolvent transform u^lambda(s,xi,eta) = int_s^infty e^{lambda(s-t)}
/// (T_{s,t} f(t))^(xi,eta) dt. The source has compact time support, so the
/// integral truncates exactly at its upper window end.
pub fn resolvent_hat(
    path: &CoefficientPath,
    source: &dyn SpectralSource,
    lambda: f64,
    s: f64,
    xi: &[f64],
    eta: &[f64],
    tol: f64,
) -> Result<Complex64> {
    if !(lambda > 0.0) {
        return Err(invalid("resolvent_hat: lambda must be positive"));
    }
    let (t_a, t_b) = source.time_window();
    let lo = s.max(t_a);
    if s >= t_b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // split at coefficient breakpoints for quadrature friendliness
    let cuts = path.piece_boundaries(lo, t_b);
    let mut acc = Complex64::new(0.0, 0.0);
    for w in cuts.windows(2) {
        acc += adaptive_gk_complex(w[0], w[1], tol, 1e-300, |t| {
            let sheared = sheared_eta(path, s, t, xi, eta);
            let a = accumulated_symbol(path, s, t, xi, &sheared)
                .expect("s <= t inside the resolvent integral");
            source.eval(t, xi, &sheared) * ((lambda * (s - t) - a).exp())
        })?;
    }
    Ok(acc)
}

/// Complex-valued adaptive Gauss-Kronrod built on the 15(7) pair.
pub fn adaptive_gk_complex<F: FnMut(f64) -> Complex64>(
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
    mut f: F,
) -> Result<Complex64> {
    // reuse the real kernel on interleaved parts in one pass
    const XGK15: [f64; 8] = [
        0.991455371120813,
        0.949107912342759,
        0.864864423359769,
        0.741531185599394,
        0.586087235467691,
        0.405845151377397,
        0.207784955007898,
        0.0,
    ];
    const WGK15: [f64; 8] = [
        0.022935322010529,
        0.063092092629979,
        0.104790010322250,
        0.140653259715525,
        0.169004726639267,
        0.190350578064785,
        0.204432940075298,
        0.209482141084728,
    ];
    const WG7: [f64; 4] = [
        0.129484966168870,
        0.279705391489277,
        0.381830050505119,
        0.417959183673469,
    ];
    fn k15<F: FnMut(f64) -> Complex64>(a: f64, b: f64, f: &mut F) -> (Complex64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut rk = fc * WGK15[7];
        let mut rg = fc * WG7[3];
        for j in 0..7 {
            let x = h * XGK15[j];
            let s = f(c - x) + f(c + x);
            rk += s * WGK15[j];
            if j % 2 == 1 {
                rg += s * WG7[j / 2];
            }
        }
        (rk * h, (rk - rg).norm() * h)
    }
    if a == b {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let (v, e) = k15(a, b, &mut f);
    let mut segs: Vec<(f64, f64, f64, Complex64)> = vec![(e, a, b, v)];
    loop {
        let total: Complex64 = segs.iter().map(|s| s.3).sum();
        let err: f64 = segs.iter().map(|s| s.0).sum();
        if err <= (rel_tol * total.norm()).max(abs_floor) {
            return Ok(total);
        }
        if segs.len() >= 2000 {
            return Err(crate::error::CoreError::Accuracy(format!(
                "adaptive_gk_complex: tolerance {rel_tol:.1e} not reached (err {err:.3e})"
            )));
        }
        let (i, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.partial_cmp(&y.1 .0).unwrap())
            .unwrap();
        let (_, sa, sb, _) = segs.swap_remove(i);
        let m = 0.5 * (sa + sb);
        let (v1, e1) = k15(sa, m, &mut f);
        let (v2, e2) = k15(m, sb, &mut f);
        segs.push((e1, sa, m, v1));
        segs.push((e2, m, sb, v2));
    }
}
