//! Piecewise-constant coefficient paths sigma_t, U_t, nu_t with the exact
//! flow matrix Pi_{s,t} = int_s^t U_r dr and the non-degeneracy constant
//! kappa_0. Values extend constantly beyond the breakpoint range.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};
use crate::stable_levy::{measure_leq, LevySymbol, StableMeasure};

/// Operator 2-norm via singular values.
pub fn opnorm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn invert(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().try_inverse()
}

#[derive(Debug, Clone)]
pub struct CoefficientPath {
    /// Strictly increasing interior breakpoints t_0 < ... < t_K.
    pub breakpoints: Vec<f64>,
    /// K+1 matrices; entry i is the value on the i-th piece.
    pub sigma: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
    pub nu: Vec<StableMeasure>,
    pub dim: usize,
    symbols: Vec<LevySymbol>,
}

/// Serde-friendly description (matrices row-major).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientPathSpec {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub nu: Vec<StableMeasure>,
}

impl CoefficientPathSpec {
    pub fn build(&self) -> Result<CoefficientPath> {
        let n = self.nu.len();
        if n == 0 || self.sigma.len() != n || self.u.len() != n {
            return Err(invalid("path spec: sigma, u, nu must have equal nonzero length"));
        }
        let d = self.nu[0].dim;
        let to_mat = |rows: &Vec<f64>| -> Result<DMatrix<f64>> {
            if rows.len() != d * d {
                return Err(invalid("path spec: matrix entry count must be d*d"));
            }
            Ok(DMatrix::from_row_slice(d, d, rows))
        };
        let sigma = self.sigma.iter().map(to_mat).collect::<Result<Vec<_>>>()?;
        let u = self.u.iter().map(to_mat).collect::<Result<Vec<_>>>()?;
        CoefficientPath::new(self.breakpoints.clone(), sigma, u, self.nu.clone())
    }
}

impl CoefficientPath {
    pub fn new(
        breakpoints: Vec<f64>,
        sigma: Vec<DMatrix<f64>>,
        u: Vec<DMatrix<f64>>,
        nu: Vec<StableMeasure>,
    ) -> Result<Self> {
        let pieces = breakpoints.len() + 1;
        if sigma.len() != pieces || u.len() != pieces || nu.len() != pieces {
            return Err(invalid(format!(
                "path: with {} breakpoints, expected {pieces} values per coefficient",
                breakpoints.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("path: breakpoints must be strictly increasing"));
        }
        let dim = nu[0].dim;
        let alpha = nu[0].alpha;
        for m in &nu {
            if m.dim != dim {
                return Err(invalid("path: all measures must share the dimension"));
            }
            if (m.alpha - alpha).abs() > 1e-14 {
                return Err(invalid("path: all measures must share the stability index"));
            }
        }
        for m in sigma.iter().chain(u.iter()) {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(invalid("path: matrix dimension mismatch"));
            }
            let sv = m.clone().svd(false, false).singular_values;
            let (mx, mn) = (sv.max(), sv.min());
            if mn <= 0.0 || mx / mn > 1e8 {
                return Err(CoreError::Degenerate(
                    "path: sigma and U must be invertible with condition number <= 1e8".into(),
                ));
            }
        }
        let symbols = nu
            .iter()
            .zip(&sigma)
            .map(|(m, s)| LevySymbol::new(m.clone(), s.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            breakpoints,
            sigma,
            u,
            nu,
            dim,
            symbols,
        })
    }

    /// Constant-coefficient path.
    pub fn constant(sigma: DMatrix<f64>, u: DMatrix<f64>, nu: StableMeasure) -> Result<Self> {
        Self::new(vec![], vec![sigma], vec![u], vec![nu])
    }

    pub fn alpha(&self) -> f64 {
        self.nu[0].alpha
    }

    /// Index of the piece containing time t (right-continuous, constant
    /// extension outside the breakpoint range).
    pub fn piece_index(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= t)
    }

    pub fn sigma_at(&self, t: f64) -> &DMatrix<f64> {
        &self.sigma[self.piece_index(t)]
    }

    pub fn u_at(&self, t: f64) -> &DMatrix<f64> {
        &self.u[self.piece_index(t)]
    }

    pub fn nu_at(&self, t: f64) -> &StableMeasure {
        &self.nu[self.piece_index(t)]
    }

    pub fn symbol_at(&self, t: f64) -> &LevySymbol {
        &self.symbols[self.piece_index(t)]
    }

    pub fn symbol_of_piece(&self, i: usize) -> &LevySymbol {
        &self.symbols[i]
    }

    /// Sub-interval boundaries of [s, t] induced by the breakpoints,
    /// including both endpoints.
    pub fn piece_boundaries(&self, s: f64, t: f64) -> Vec<f64> {
        let mut cuts = vec![s];
        for &b in &self.breakpoints {
            if b > s && b < t {
                cuts.push(b);
            }
        }
        cuts.push(t);
        cuts
    }

    /// Pi_{s,t} = int_s^t U_r dr, exact for piecewise-constant U.
    /// For s > t returns -Pi_{t,s}.
    pub fn flow_matrix(&self, s: f64, t: f64) -> DMatrix<f64> {
        if s > t {
            return -self.flow_matrix(t, s);
        }
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        let cuts = self.piece_boundaries(s, t);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            acc += self.u_at(mid) * (b - a);
        }
        acc
    }

    /// Norm bounds entering kappa_0.
    pub fn sigma_sup_norm(&self) -> f64 {
        self.sigma.iter().map(opnorm).fold(0.0, f64::max)
    }

    pub fn sigma_inv_sup_norm(&self) -> f64 {
        self.sigma
            .iter()
            .map(|m| opnorm(&invert(m).expect("sigma invertible by construction")))
            .fold(0.0, f64::max)
    }

    pub fn u_sup_norm(&self) -> f64 {
        self.u.iter().map(opnorm).fold(0.0, f64::max)
    }

    /// Empirical kappa_0 over the supplied (s, t) lattice:
    /// |sigma|_inf + |sigma^{-1}|_inf + |U|_inf + sup (t-s) |Pi_{s,t}^{-1}|.
    pub fn kappa0(&self, lattice: &[(f64, f64)]) -> Result<f64> {
        if lattice.is_empty() {
            return Err(invalid("kappa0: lattice must be non-empty"));
        }
        let mut flow_term = 0.0f64;
        for &(s, t) in lattice {
            if !(s < t) {
                return Err(invalid("kappa0: lattice pairs must satisfy s < t"));
            }
            let pi = self.flow_matrix(s, t);
            let inv = invert(&pi).ok_or_else(|| {
                CoreError::Degenerate(format!("kappa0: Pi({s}, {t}) is singular"))
            })?;
            let v = (t - s) * opnorm(&inv);
            if !v.is_finite() || v > 1e12 {
                return Err(CoreError::Degenerate(format!(
                    "kappa0: Pi({s}, {t}) is numerically singular"
                )));
            }
            flow_term = flow_term.max(v);
        }
        Ok(self.sigma_sup_norm() + self.sigma_inv_sup_norm() + self.u_sup_norm() + flow_term)
    }

    /// Default (s, t) lattice: log-spaced spans over [1e-3, 1e3] anchored at
    /// several points plus pairs straddling each breakpoint.
    pub fn default_lattice(&self) -> Vec<(f64, f64)> {
        let mut anchors = vec![0.0];
        anchors.extend(self.breakpoints.iter().copied());
        let mut out = Vec::new();
        for &a in &anchors {
            for k in 0..13 {
                let span = 1e-3 * 10f64.powf(k as f64 * 0.5);
                out.push((a, a + span));
                out.push((a - 0.5 * span, a + 0.5 * span));
            }
        }
        out
    }

    /// Envelope sandwich nu1 <= nu_s <= nu2 for every piece.
    pub fn check_sandwich(&self, nu1: &StableMeasure, nu2: &StableMeasure) -> Result<bool> {
        for m in &self.nu {
            if !(measure_leq(nu1, m)? && measure_leq(m, nu2)?) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Time rescaling of the scaling lemma: breakpoints map by
    /// t -> (t - t0) / r^alpha; matrix and measure values are unchanged.
    pub fn time_rescale(&self, r: f64, t0: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("time_rescale: r must be positive"));
        }
        let ra = r.powf(self.alpha());
        let breakpoints = self.breakpoints.iter().map(|&t| (t - t0) / ra).collect();
        Self::new(
            breakpoints,
            self.sigma.clone(),
            self.u.clone(),
            self.nu.clone(),
        )
    }
}
