//! Inequality-constrained linear programs `min cᵀx s.t. Ax − b ≤ 0`, their
//! KKT conditions, and the projection dynamics whose equilibria are the KKT
//! points:
//!
//! ```text
//! dx/dt = −(c + Aᵀ (u + Ax − b)⁺)
//! du/dt = (u + Ax − b)⁺ − u
//! ```
//!
//! A fixed-step integrator over this field is the reference solution that the
//! neural solver is checked against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, norm_inf, Matrix};

/// States with `||y||_inf` above this abort integration.
pub const DIVERGENCE_BOUND: f64 = 1e9;

/// Linear program with inequality rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    cost: Vec<f64>,
    a: Matrix,
    b: Vec<f64>,
}

impl LpProblem {
    pub fn new(cost: Vec<f64>, a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.cols() != cost.len() {
            return Err(Error::Dimension(format!(
                "A has {} columns but cost has {} entries",
                a.cols(),
                cost.len()
            )));
        }
        if a.rows() != b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has {} entries",
                a.rows(),
                b.len()
            )));
        }
        if !a.is_finite() || cost.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LP data".into()));
        }
        Ok(Self { cost, a, b })
    }

    /// Number of primal variables.
    pub fn n(&self) -> usize {
        self.cost.len()
    }

    /// Number of inequality rows.
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.cost, x)
    }

    /// `Ax − b`.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.a.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        r
    }

    fn check_state(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(Error::Dimension(format!(
                "state ({}, {}) does not match LP ({}, {})",
                x.len(),
                u.len(),
                self.n(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Primal-dual state `y = (x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl KktState {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Self {
        Self { x, u }
    }

    pub fn zeros(lp: &LpProblem) -> Self {
        Self {
            x: vec![0.0; lp.n()],
            u: vec![0.0; lp.m()],
        }
    }

    /// Splits a concatenated vector `(x, u)` after `n` primal entries.
    pub fn from_concat(y: &[f64], n: usize) -> Self {
        Self {
            x: y[..n].to_vec(),
            u: y[n..].to_vec(),
        }
    }

    pub fn to_concat(&self) -> Vec<f64> {
        self.x.iter().chain(&self.u).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.x).max(norm_inf(&self.u))
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.u).all(|v| v.is_finite())
    }
}

/// Norms of the four KKT conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `||c + Aᵀu||₂`
    pub stationarity: f64,
    /// `|uᵀ(Ax − b)|`
    pub complementarity: f64,
    /// `||max(0, Ax − b)||₂`
    pub primal_violation: f64,
    /// `||max(0, −u)||₂`
    pub dual_violation: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.complementarity)
            .max(self.primal_violation)
            .max(self.dual_violation)
    }
}

/// `cᵀx + uᵀ(Ax − b)`.
pub fn lagrangian(lp: &LpProblem, x: &[f64], u: &[f64]) -> Result<f64> {
    lp.check_state(x, u)?;
    Ok(lp.objective(x) + dot(u, &lp.constraint_values(x)))
}

pub fn kkt_residual(lp: &LpProblem, x: &[f64], u: &[f64]) -> Result<KktResidual> {
    lp.check_state(x, u)?;
    let mut grad = lp.a.tr_mul_vec(u);
    for (g, c) in grad.iter_mut().zip(&lp.cost) {
        *g += c;
    }
    let g = lp.constraint_values(x);
    let primal: Vec<f64> = g.iter().map(|v| v.max(0.0)).collect();
    let dual: Vec<f64> = u.iter().map(|v| (-v).max(0.0)).collect();
    Ok(KktResidual {
        stationarity: norm2(&grad),
        complementarity: dot(u, &g).abs(),
        primal_violation: norm2(&primal),
        dual_violation: norm2(&dual),
    })
}

/// Projection pieces shared by [`phi`] and the neural loss gradient:
/// returns `(u + Ax − b)⁺` and the activity mask.
pub(crate) fn projected_multipliers(lp: &LpProblem, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let z = lp.constraint_values(x);
    let mut p = Vec::with_capacity(z.len());
    let mut active = Vec::with_capacity(z.len());
    for (zi, ui) in z.iter().zip(u) {
        let v = ui + zi;
        active.push(v > 0.0);
        p.push(v.max(0.0));
    }
    (p, active)
}

/// Writes `φ(x, u)` into `out` (length `n + m`). No dimension checks.
pub(crate) fn phi_into(lp: &LpProblem, x: &[f64], u: &[f64], out: &mut [f64]) {
    let (p, _) = projected_multipliers(lp, x, u);
    let at_p = lp.a.tr_mul_vec(&p);
    let n = lp.n();
    for i in 0..n {
        out[i] = -(lp.cost[i] + at_p[i]);
    }
    for (j, (pj, uj)) in p.iter().zip(u).enumerate() {
        out[n + j] = pj - uj;
    }
}

/// Time derivative of the KKT projection dynamics at `y`.
pub fn phi(lp: &LpProblem, y: &KktState) -> Result<KktState> {
    lp.check_state(&y.x, &y.u)?;
    let mut out = vec![0.0; y.len()];
    phi_into(lp, &y.x, &y.u, &mut out);
    Ok(KktState::from_concat(&out, lp.n()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Time-ordered samples of an integrated state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(f64, KktState)>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &KktState {
        &self.points.last().expect("trajectory is never empty").1
    }

    pub fn start(&self) -> &KktState {
        &self.points[0].1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn axpy_into(out: &mut [f64], y: &[f64], h: f64, k: &[f64]) {
    for ((o, yi), ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + h * ki;
    }
}

/// Fixed-step integration of [`phi`] from `y0` at `t = 0` to `t_end`. The
/// final step is shortened so the trajectory ends exactly at `t_end`.
pub fn integrate(
    lp: &LpProblem,
    y0: &KktState,
    t_end: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory> {
    lp.check_state(&y0.x, &y0.u)?;
    if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "integration needs dt > 0 and t_end > 0 (got dt = {dt}, t_end = {t_end})"
        )));
    }
    if !y0.is_finite() {
        return Err(Error::NonFinite("initial state".into()));
    }
    let n = lp.n();
    let dim = y0.len();
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;

    let field = |y: &[f64], out: &mut [f64]| phi_into(lp, &y[..n], &y[n..], out);

    let mut points = Vec::with_capacity(steps + 1);
    let mut y = y0.to_concat();
    let mut t = 0.0;
    points.push((t, y0.clone()));

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];

    for step in 1..=steps {
        let t_next = if step == steps {
            t_end
        } else {
            step as f64 * dt
        };
        let h = t_next - t;
        field(&y, &mut k1);
        match method {
            Method::Euler => {
                for (yi, ki) in y.iter_mut().zip(&k1) {
                    *yi += h * ki;
                }
            }
            Method::Rk4 => {
                axpy_into(&mut tmp, &y, 0.5 * h, &k1);
                field(&tmp, &mut k2);
                axpy_into(&mut tmp, &y, 0.5 * h, &k2);
                field(&tmp, &mut k3);
                axpy_into(&mut tmp, &y, h, &k3);
                field(&tmp, &mut k4);
                for i in 0..dim {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
        if y.iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND)
        {
            return Err(Error::Divergence {
                t: t_next,
                last_valid_t: t,
            });
        }
        t = t_next;
        points.push((t, KktState::from_concat(&y, n)));
    }
    Ok(Trajectory { points })
}
