//! The anisotropic quasi-metric of the kinetic geometry, its sheared balls,
//! maximal/sharp functions on phase-space lattices, BMO seminorms and the
//! engulfing/sandwich property trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::CoefficientPath;
use crate::error::{invalid, Result};
use crate::quadrature::pairwise_sum;

#[derive(Debug, Clone, PartialEq)]
pub struct KineticPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl KineticPoint {
    pub fn new(t: f64, x: Vec<f64>, v: Vec<f64>) -> Self {
        Self { t, x, v }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            t: 0.0,
            x: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone)]
pub struct KineticBall {
    pub center: KineticPoint,
    pub radius: f64,
}

impl KineticBall {
    pub fn new(center: KineticPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("kinetic ball: radius must be positive"));
        }
        Ok(Self { center, radius })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|z| z * z).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Quasi-metric rho(z0, z1) = |t0 - t1|^{1/a} + |v0 - v1|
///   + |x0 - x1 + Pi_{t0,t1} v1|^{1/(1+a)} + |x1 - x0 + Pi_{t1,t0} v0|^{1/(1+a)}.
/// Symmetric by construction; zero iff the points coincide.
pub fn quasi_metric(
    path: &CoefficientPath,
    z0: &KineticPoint,
    z1: &KineticPoint,
    alpha: f64,
) -> f64 {
    let dt = (z0.t - z1.t).abs().powf(1.0 / alpha);
    let dv = norm(&sub(&z0.v, &z1.v));
    let pi01 = path.flow_matrix(z0.t, z1.t);
    let pi10 = path.flow_matrix(z1.t, z0.t);
    let v1 = nalgebra::DVector::from_column_slice(&z1.v);
    let v0 = nalgebra::DVector::from_column_slice(&z0.v);
    let shift01 = pi01 * v1;
    let shift10 = pi10 * v0;
    let a: Vec<f64> = z0
        .x
        .iter()
        .zip(&z1.x)
        .zip(shift01.iter())
        .map(|((x0, x1), s)| x0 - x1 + s)
        .collect();
    let b: Vec<f64> = z1
        .x
        .iter()
        .zip(&z0.x)
        .zip(shift10.iter())
        .map(|((x1, x0), s)| x1 - x0 + s)
        .collect();
    dt + dv + norm(&a).powf(1.0 / (1.0 + alpha)) + norm(&b).powf(1.0 / (1.0 + alpha))
}

/// Membership in the sheared ball (open-ball convention):
/// t in B_{r^a}(t0), x in B_{r^{1+a}}(x0 + Pi_{t0,t} v0), v in B_r(v0).
pub fn ball_contains(
    path: &CoefficientPath,
    ball: &KineticBall,
    z: &KineticPoint,
    alpha: f64,
) -> bool {
    let r = ball.radius;
    let c = &ball.center;
    if (z.t - c.t).abs() >= r.powf(alpha) {
        return false;
    }
    if norm(&sub(&z.v, &c.v)) >= r {
        return false;
    }
    let pi = path.flow_matrix(c.t, z.t);
    let v0 = nalgebra::DVector::from_column_slice(&c.v);
    let shift = pi * v0;
    let center_x: Vec<f64> = c.x.iter().zip(shift.iter()).map(|(a, s)| a + s).collect();
    norm(&sub(&z.x, &center_x)) < r.powf(1.0 + alpha)
}

/// The engulfing constant of the kinetic balls:
/// c1 = 3^{1/a} max 3 max (3 + 4 |U|)^{1/(1+a)}.
pub fn engulfing_constant(alpha: f64, u_sup: f64) -> f64 {
    (3.0f64)
        .powf(1.0 / alpha)
        .max(3.0)
        .max((3.0 + 4.0 * u_sup).powf(1.0 / (1.0 + alpha)))
}

fn random_unit_ball<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    // rejection from the cube
    loop {
        let p: Vec<f64> = (0..dim).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        if norm(&p) < 1.0 {
            return p;
        }
    }
}

fn random_point_in_ball<R: Rng>(
    path: &CoefficientPath,
    ball: &KineticBall,
    alpha: f64,
    rng: &mut R,
) -> KineticPoint {
    let r = ball.radius;
    let c = &ball.center;
    let t = c.t + (2.0 * rng.gen::<f64>() - 1.0) * r.powf(alpha);
    let v: Vec<f64> = random_unit_ball(c.v.len(), rng)
        .iter()
        .zip(&c.v)
        .map(|(u, cv)| cv + u * r)
        .collect();
    let pi = path.flow_matrix(c.t, t);
    let v0 = nalgebra::DVector::from_column_slice(&c.v);
    let shift = pi * v0;
    let x: Vec<f64> = random_unit_ball(c.x.len(), rng)
        .iter()
        .zip(&c.x)
        .zip(shift.iter())
        .map(|((u, cx), s)| cx + s + u * r.powf(1.0 + alpha))
        .collect();
    KineticPoint::new(t, x, v)
}

/// Randomized engulfing trials: sample intersecting equal-radius balls, then
/// test 64 points of the first ball for membership in the c1-dilate of the
/// second. Returns the violation count (expected 0 with the true constant).
pub fn engulf_check(
    path: &CoefficientPath,
    alpha: f64,
    n_trials: usize,
    r_range: (f64, f64),
    c1: f64,
    seed: u64,
) -> Result<usize> {
    if n_trials == 0 {
        return Err(invalid("engulf_check: need at least one trial"));
    }
    let dim = path.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..n_trials {
        let u: f64 = rng.gen();
        let r = r_range.0 * (r_range.1 / r_range.0).powf(u);
        // first center anywhere in a moderate box
        let z0 = KineticPoint::new(
            4.0 * rng.gen::<f64>() - 2.0,
            (0..dim).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect(),
            (0..dim).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect(),
        );
        let b0 = KineticBall::new(z0.clone(), r)?;
        // common point of both balls
        let z = random_point_in_ball(path, &b0, alpha, &mut rng);
        // second center chosen so that z lies in its ball
        let t0p = z.t + (2.0 * rng.gen::<f64>() - 1.0) * r.powf(alpha);
        let v0p: Vec<f64> = random_unit_ball(dim, &mut rng)
            .iter()
            .zip(&z.v)
            .map(|(u, zv)| zv + u * r)
            .collect();
        let pi = path.flow_matrix(t0p, z.t);
        let v0p_vec = nalgebra::DVector::from_column_slice(&v0p);
        let shift = pi * v0p_vec;
        let x0p: Vec<f64> = random_unit_ball(dim, &mut rng)
            .iter()
            .zip(&z.x)
            .zip(shift.iter())
            .map(|((u, zx), s)| zx - s + u * r.powf(1.0 + alpha))
            .collect();
        let z0p = KineticPoint::new(t0p, x0p, v0p);
        let b0p = KineticBall::new(z0p, r)?;
        debug_assert!(ball_contains(path, &b0p, &z, alpha));
        let dilate = KineticBall::new(b0p.center.clone(), c1 * r)?;
        for _ in 0..64 {
            let p = random_point_in_ball(path, &b0, alpha, &mut rng);
            if !ball_contains(path, &dilate, &p, alpha) {
                violations += 1;
            }
        }
    }
    Ok(violations)
}

/// Randomized check of the metric-ball sandwich
/// Qtilde_r subset Q_r subset Qtilde_{c1 r}: counts violations of either
/// implication over points sampled around random centers.
pub fn metric_ball_sandwich_check(
    path: &CoefficientPath,
    alpha: f64,
    n_trials: usize,
    r_range: (f64, f64),
    c1: f64,
    seed: u64,
) -> Result<usize> {
    if n_trials == 0 {
        return Err(invalid("sandwich check: need at least one trial"));
    }
    let dim = path.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..n_trials {
        let u: f64 = rng.gen();
        let r = r_range.0 * (r_range.1 / r_range.0).powf(u);
        let z0 = KineticPoint::new(
            4.0 * rng.gen::<f64>() - 2.0,
            (0..dim).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect(),
            (0..dim).map(|_| 4.0 * rng.gen::<f64>() - 2.0).collect(),
        );
        let ball = KineticBall::new(z0.clone(), r)?;
        // sample both inside the parallelepiped ball and in a slightly
        // larger shell, to exercise both inclusions
        for k in 0..32 {
            let p = if k % 2 == 0 {
                random_point_in_ball(path, &ball, alpha, &mut rng)
            } else {
                let grown = KineticBall::new(z0.clone(), 1.5 * r)?;
                random_point_in_ball(path, &grown, alpha, &mut rng)
            };
            let rho = quasi_metric(path, &z0, &p, alpha);
            let inside = ball_contains(path, &ball, &p, alpha);
            if rho < r && !inside {
                violations += 1;
            }
            if inside && rho >= c1 * r {
                violations += 1;
            }
        }
    }
    Ok(violations)
}

/// Monte Carlo ball volume via its exact product parameterization box.
pub fn ball_volume_mc(
    path: &CoefficientPath,
    alpha: f64,
    r: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    // the parameterization (t, x-offset, v-offset) is exactly the box
    // [t0 +- r^a] x B_{r^{1+a}} x B_r, so sample the box and count the
    // Euclidean-ball constraints on the offsets
    let d = path.dim as i32;
    let _ = path;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let xo: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let vo: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        if norm(&xo) < 1.0 && norm(&vo) < 1.0 {
            hits += 1;
        }
    }
    let box_vol = 2.0 * r.powf(alpha)
        * (2.0 * r.powf(1.0 + alpha)).powi(d)
        * (2.0 * r).powi(d);
    box_vol * hits as f64 / n_samples as f64
}

/// Gridded function on a phase-space-time lattice (d = 1).
#[derive(Debug, Clone)]
pub struct PhaseLattice {
    pub t_nodes: Vec<f64>,
    pub x_nodes: Vec<f64>,
    pub v_nodes: Vec<f64>,
    /// data[t][x * nv + v]
    pub data: Vec<Vec<f64>>,
}

impl PhaseLattice {
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(
        t_nodes: Vec<f64>,
        x_nodes: Vec<f64>,
        v_nodes: Vec<f64>,
        f: F,
    ) -> Self {
        let data = t_nodes
            .iter()
            .map(|&t| {
                x_nodes
                    .iter()
                    .flat_map(|&x| v_nodes.iter().map(move |&v| (x, v)))
                    .map(|(x, v)| f(t, x, v))
                    .collect()
            })
            .collect();
        Self {
            t_nodes,
            x_nodes,
            v_nodes,
            data,
        }
    }

    fn extent(&self) -> (f64, f64, f64, f64, f64, f64) {
        (
            self.t_nodes[0],
            *self.t_nodes.last().unwrap(),
            self.x_nodes[0],
            *self.x_nodes.last().unwrap(),
            self.v_nodes[0],
            *self.v_nodes.last().unwrap(),
        )
    }
}

/// Average of |f| (or |f - a|) over the lattice cells whose centers lie in
/// the ball; `clipped` reports that the ball was not fully covered.
pub struct BallAverage {
    pub mean: f64,
    pub cells: usize,
    pub clipped: bool,
}

fn ball_average(
    path: &CoefficientPath,
    lat: &PhaseLattice,
    ball: &KineticBall,
    alpha: f64,
    subtract: Option<f64>,
) -> BallAverage {
    let r = ball.radius;
    let c = &ball.center;
    let (t_lo, t_hi, x_lo, x_hi, v_lo, v_hi) = lat.extent();
    let ra = r.powf(alpha);
    let rx = r.powf(1.0 + alpha);
    // clip detection against the lattice bounding box (x-window sheared)
    let mut clipped = c.t - ra < t_lo || c.t + ra > t_hi;
    clipped |= c.v[0] - r < v_lo || c.v[0] + r > v_hi;
    let mut terms = Vec::new();
    let nv = lat.v_nodes.len();
    for (ti, &t) in lat.t_nodes.iter().enumerate() {
        if (t - c.t).abs() >= ra {
            continue;
        }
        let pi = path.flow_matrix(c.t, t);
        let cx = c.x[0] + pi[(0, 0)] * c.v[0];
        if cx - rx < x_lo || cx + rx > x_hi {
            clipped = true;
        }
        for (xi, &x) in lat.x_nodes.iter().enumerate() {
            if (x - cx).abs() >= rx {
                continue;
            }
            for (vi, &v) in lat.v_nodes.iter().enumerate() {
                if (v - c.v[0]).abs() >= r {
                    continue;
                }
                let val = lat.data[ti][xi * nv + vi];
                terms.push(match subtract {
                    Some(a) => (val - a).abs(),
                    None => val.abs(),
                });
            }
        }
    }
    if terms.is_empty() {
        return BallAverage {
            mean: 0.0,
            cells: 0,
            clipped: true,
        };
    }
    BallAverage {
        mean: pairwise_sum(&terms) / terms.len() as f64,
        cells: terms.len(),
        clipped,
    }
}

fn plain_ball_mean(
    path: &CoefficientPath,
    lat: &PhaseLattice,
    ball: &KineticBall,
    alpha: f64,
) -> Option<f64> {
    let r = ball.radius;
    let c = &ball.center;
    let ra = r.powf(alpha);
    let rx = r.powf(1.0 + alpha);
    let nv = lat.v_nodes.len();
    let mut terms = Vec::new();
    for (ti, &t) in lat.t_nodes.iter().enumerate() {
        if (t - c.t).abs() >= ra {
            continue;
        }
        let pi = path.flow_matrix(c.t, t);
        let cx = c.x[0] + pi[(0, 0)] * c.v[0];
        for (xi, &x) in lat.x_nodes.iter().enumerate() {
            if (x - cx).abs() >= rx {
                continue;
            }
            for (vi, &v) in lat.v_nodes.iter().enumerate() {
                if (v - c.v[0]).abs() >= r {
                    continue;
                }
                terms.push(lat.data[ti][xi * nv + vi]);
            }
        }
    }
    if terms.is_empty() {
        None
    } else {
        Some(pairwise_sum(&terms) / terms.len() as f64)
    }
}

/// Result of a maximal- or sharp-function evaluation.
pub struct LatticeSup {
    pub value: f64,
    /// true when some contributing ball escaped the lattice
    pub clipped: bool,
}

/// Hardy-Littlewood maximal function over the documented radius list.
pub fn maximal_function(
    path: &CoefficientPath,
    lat: &PhaseLattice,
    z: &KineticPoint,
    radii: &[f64],
    alpha: f64,
) -> LatticeSup {
    let mut best = 0.0f64;
    let mut clipped = false;
    for &r in radii {
        let ball = KineticBall {
            center: z.clone(),
            radius: r,
        };
        let avg = ball_average(path, lat, &ball, alpha, None);
        if avg.cells > 0 {
            best = best.max(avg.mean);
            clipped |= avg.clipped;
        }
    }
    LatticeSup {
        value: best,
        clipped,
    }
}

/// Sharp function: sup over radii of the mean deviation from the ball mean.
pub fn sharp_function(
    path: &CoefficientPath,
    lat: &PhaseLattice,
    z: &KineticPoint,
    radii: &[f64],
    alpha: f64,
) -> LatticeSup {
    let mut best = 0.0f64;
    let mut clipped = false;
    for &r in radii {
        let ball = KineticBall {
            center: z.clone(),
            radius: r,
        };
        if let Some(mean) = plain_ball_mean(path, lat, &ball, alpha) {
            let avg = ball_average(path, lat, &ball, alpha, Some(mean));
            best = best.max(avg.mean);
            clipped |= avg.clipped;
        }
    }
    LatticeSup {
        value: best,
        clipped,
    }
}

/// BMO seminorm: max of the sharp function over sample points; clipped balls
/// are excluded from the statistic.
pub fn bmo_seminorm(
    path: &CoefficientPath,
    lat: &PhaseLattice,
    points: &[KineticPoint],
    radii: &[f64],
    alpha: f64,
) -> f64 {
    let mut best = 0.0f64;
    for z in points {
        let s = sharp_function(path, lat, z, radii, alpha);
        if !s.clipped {
            best = best.max(s.value);
        }
    }
    best
}

/// Default log-spaced radius list over [cell scale, lattice extent].
pub fn default_radii(lat: &PhaseLattice, alpha: f64, n: usize) -> Vec<f64> {
    let dv = lat.v_nodes[1] - lat.v_nodes[0];
    let dt = lat.t_nodes[1] - lat.t_nodes[0];
    let dx = lat.x_nodes[1] - lat.x_nodes[0];
    let r_min = dv
        .max(dt.powf(1.0 / alpha))
        .max(dx.powf(1.0 / (1.0 + alpha)));
    let extent = (lat.v_nodes.last().unwrap() - lat.v_nodes[0]) * 0.5;
    let r_max = extent.max(2.0 * r_min);
    (0..n)
        .map(|k| r_min * (r_max / r_min).powf(k as f64 / (n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_levy::StableMeasure;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn path_1d() -> CoefficientPath {
        CoefficientPath::constant(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            StableMeasure::isotropic(1.0, 1, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn quasi_metric_axioms_and_example() {
        let p = path_1d();
        let z0 = KineticPoint::new(0.0, vec![0.0], vec![0.0]);
        let z1 = KineticPoint::new(1.0, vec![0.0], vec![1.0]);
        assert_eq!(quasi_metric(&p, &z0, &z0, 1.0), 0.0);
        // hand evaluation: 1 + 1 + |0-0+Pi_{0,1}*1|^{1/2} + |0-0+Pi_{1,0}*0|^{1/2} = 3
        assert_relative_eq!(quasi_metric(&p, &z0, &z1, 1.0), 3.0, max_relative = 1e-14);
        // symmetry
        let z2 = KineticPoint::new(-0.4, vec![0.7], vec![0.2]);
        assert_relative_eq!(
            quasi_metric(&p, &z1, &z2, 1.0),
            quasi_metric(&p, &z2, &z1, 1.0),
            max_relative = 1e-14
        );
        // equal times: rho = |dv| + 2 |dx|^{1/(1+a)}
        let z3 = KineticPoint::new(0.0, vec![0.5], vec![0.3]);
        assert_relative_eq!(
            quasi_metric(&p, &z0, &z3, 1.0),
            0.3 + 2.0 * 0.5f64.powf(0.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn ball_membership_examples() {
        let p = path_1d();
        let center = KineticPoint::new(0.0, vec![0.0], vec![1.0]);
        let ball = KineticBall::new(center.clone(), 1.0).unwrap();
        assert!(ball_contains(&p, &ball, &center, 1.0));
        // boundary in v excluded (open convention)
        let edge = KineticPoint::new(0.0, vec![0.0], vec![2.0]);
        assert!(!ball_contains(&p, &ball, &edge, 1.0));
        // sheared membership: x-center at t = 0.5 is Pi_{0,0.5} * 1 = 0.5
        let probe = KineticPoint::new(0.5, vec![0.5], vec![1.2]);
        assert!(ball_contains(&p, &ball, &probe, 1.0));
    }

    #[test]
    fn quasi_triangle_constant_is_finite_and_stable() {
        let p = path_1d();
        let fit = |seed: u64| -> f64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut c0 = 0.0f64;
            for _ in 0..200_000 {
                let rand_pt = |rng: &mut ChaCha8Rng| {
                    KineticPoint::new(
                        4.0 * rng.gen::<f64>() - 2.0,
                        vec![4.0 * rng.gen::<f64>() - 2.0],
                        vec![4.0 * rng.gen::<f64>() - 2.0],
                    )
                };
                let a = rand_pt(&mut rng);
                let b = rand_pt(&mut rng);
                let c = rand_pt(&mut rng);
                let lhs = quasi_metric(&p, &a, &c, 1.0);
                let rhs = quasi_metric(&p, &a, &b, 1.0) + quasi_metric(&p, &b, &c, 1.0);
                if rhs > 0.0 {
                    c0 = c0.max(lhs / rhs);
                }
            }
            c0
        };
        let c_a = fit(1);
        let c_b = fit(2);
        assert!(c_a.is_finite() && c_a > 0.0);
        assert!(c_a / c_b < 2.0 && c_b / c_a < 2.0, "{c_a} vs {c_b}");
    }

    #[test]
    fn engulfing_holds_with_paper_constant() {
        let p = path_1d();
        for &alpha in &[0.5f64, 1.0, 1.5] {
            let c1 = engulfing_constant(alpha, p.u_sup_norm());
            let v = engulf_check(&p, alpha, 2000, (0.25, 2.0), c1, 42).unwrap();
            assert_eq!(v, 0, "alpha = {alpha}");
        }
        // negative control: c1 = 1.01 must produce violations
        let v = engulf_check(&p, 1.0, 500, (0.25, 2.0), 1.01, 43).unwrap();
        assert!(v > 0);
    }

    #[test]
    fn engulfing_trivial_when_centers_equal() {
        // any c1 >= 1 engulfs a ball by itself
        let p = path_1d();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ball = KineticBall::new(KineticPoint::origin(1), 1.3).unwrap();
        let dilate = KineticBall::new(KineticPoint::origin(1), 1.3f64 * 1.0).unwrap();
        for _ in 0..512 {
            let z = random_point_in_ball(&p, &ball, 1.0, &mut rng);
            assert!(ball_contains(&p, &dilate, &z, 1.0));
        }
    }

    #[test]
    fn sandwich_holds_for_alpha_ge_one() {
        let p = path_1d();
        for &alpha in &[1.0f64, 1.5] {
            let c1 = (4.0 + p.u_sup_norm()).powf(alpha);
            let v = metric_ball_sandwich_check(&p, alpha, 3000, (0.3, 2.0), c1, 4).unwrap();
            assert_eq!(v, 0, "alpha = {alpha}");
        }
    }

    #[test]
    fn ball_volume_exponent_fit() {
        let p = path_1d();
        for &alpha in &[0.7, 1.0, 1.4] {
            let radii = [0.5f64, 1.0, 2.0, 4.0];
            let vols: Vec<f64> = radii
                .iter()
                .map(|&r| ball_volume_mc(&p, alpha, r, 400_000, 11))
                .collect();
            // least-squares slope of log V against log r
            let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
            let ys: Vec<f64> = vols.iter().map(|v| v.ln()).collect();
            let mx = xs.iter().sum::<f64>() / 4.0;
            let my = ys.iter().sum::<f64>() / 4.0;
            let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let slope = sxy / sxx;
            let want = alpha + (2.0 + alpha) * 1.0;
            assert!(
                (slope - want).abs() / want < 0.01,
                "alpha {alpha}: slope {slope} vs {want}"
            );
        }
    }

    fn make_lattice<F: Fn(f64, f64, f64) -> f64>(n: usize, ext: f64, f: F) -> PhaseLattice {
        let nodes = |n: usize, e: f64| -> Vec<f64> {
            (0..n).map(|i| -e + 2.0 * e * (i as f64 + 0.5) / n as f64).collect()
        };
        PhaseLattice::from_fn(nodes(n, ext), nodes(n, ext), nodes(n, ext), f)
    }

    #[test]
    fn maximal_function_basics() {
        let p = path_1d();
        let lat = make_lattice(24, 2.0, |_, _, _| 3.0);
        let radii = default_radii(&lat, 1.0, 12);
        let z = KineticPoint::origin(1);
        let m = maximal_function(&p, &lat, &z, &radii, 1.0);
        assert_relative_eq!(m.value, 3.0, max_relative = 1e-14);
        // homogeneity: doubling f doubles M f
        let lat2 = make_lattice(24, 2.0, |_, _, _| 6.0);
        let m2 = maximal_function(&p, &lat2, &z, &radii, 1.0);
        assert_relative_eq!(m2.value, 2.0 * m.value, max_relative = 1e-14);
        // indicator of a corner cell: the maximal function decreases with
        // distance from the cell
        let lat3 = make_lattice(24, 2.0, |t, x, v| {
            if t > 1.7 && x > 1.7 && v > 1.7 {
                1.0
            } else {
                0.0
            }
        });
        let near = maximal_function(
            &p,
            &lat3,
            &KineticPoint::new(1.5, vec![1.5], vec![1.5]),
            &radii,
            1.0,
        );
        let far = maximal_function(&p, &lat3, &KineticPoint::origin(1), &radii, 1.0);
        assert!(near.value >= far.value);
    }

    #[test]
    fn sharp_function_of_constant_vanishes_and_linear_growth() {
        let p = path_1d();
        let lat = make_lattice(32, 2.0, |_, _, _| 1.234);
        let radii = default_radii(&lat, 1.0, 12);
        let s = sharp_function(&p, &lat, &KineticPoint::origin(1), &radii, 1.0);
        assert!(s.value < 1e-14);

        // linear function a*v: mean deviation over a ball grows ~ r a / 2
        let a = 0.8;
        let lat = make_lattice(48, 4.0, move |_, _, v| a * v);
        let z = KineticPoint::origin(1);
        let r1 = 0.8;
        let r2 = 1.6;
        let b1 = KineticBall::new(z.clone(), r1).unwrap();
        let b2 = KineticBall::new(z.clone(), r2).unwrap();
        let m1 = plain_ball_mean(&p, &lat, &b1, 1.0).unwrap();
        let d1 = ball_average(&p, &lat, &b1, 1.0, Some(m1)).mean;
        let m2 = plain_ball_mean(&p, &lat, &b2, 1.0).unwrap();
        let d2 = ball_average(&p, &lat, &b2, 1.0, Some(m2)).mean;
        assert_relative_eq!(d2 / d1, r2 / r1, max_relative = 0.05);
    }

    #[test]
    fn sharp_dominated_by_twice_maximal() {
        let p = path_1d();
        let lat = make_lattice(28, 2.5, |t, x, v| (t + 0.5 * x).sin() + 0.3 * v * v);
        let radii = default_radii(&lat, 1.0, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let z = KineticPoint::new(
                2.0 * rng.gen::<f64>() - 1.0,
                vec![2.0 * rng.gen::<f64>() - 1.0],
                vec![2.0 * rng.gen::<f64>() - 1.0],
            );
            let m = maximal_function(&p, &lat, &z, &radii, 1.0);
            let s = sharp_function(&p, &lat, &z, &radii, 1.0);
            assert!(
                s.value <= 2.0 * m.value + 1e-12,
                "sharp {} vs maximal {}",
                s.value,
                m.value
            );
        }
    }

    #[test]
    fn bmo_seminorm_flags_and_excludes_clipped() {
        let p = path_1d();
        let lat = make_lattice(20, 1.5, |_, x, _| x);
        let radii = default_radii(&lat, 1.0, 8);
        let pts = vec![KineticPoint::origin(1)];
        let b = bmo_seminorm(&p, &lat, &pts, &radii, 1.0);
        assert!(b >= 0.0);
    }
}
