//! Grasp model: grasp map, friction-cone and joint-effort matrix
//! inequalities, the force-closure certificate, and extraction of the linear
//! program handed to the solvers.
//!
//! Contact forces are expressed in the object frame, so column block `i` of
//! the grasp map is `[I₃; skew(p_i)]`. Friction cones are evaluated in each
//! contact's local frame `(t₁, t₂, c_i)`, where `c_i` is the inward cone axis
//! and `(t₁, t₂)` comes from [`tangent_basis`]; for `c_i = e₃` the local and
//! object frames coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::LpProblem;
use crate::linalg::{is_psd, min_eigval, norm2, skew, Matrix, SymMatrix, Vec3};
use crate::lmi::{Lmi, Sense};

/// Default `ε` of the `GGᵀ ⪰ εI` test when a scenario omits it.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Default slack for the strict cone inequality and `Gf = 0`.
pub const DEFAULT_CERT_TOL: f64 = 1e-9;

const AXIS_UNIT_TOL: f64 = 1e-9;

/// Point contact with friction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Object frame, meters.
    pub position: Vec3,
    /// Unit inward normal (friction cone axis).
    pub axis: Vec3,
    pub mu: f64,
}

impl Contact {
    pub fn new(position: Vec3, axis: Vec3, mu: f64) -> Self {
        Self { position, axis, mu }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() || !self.axis.is_finite() || !self.mu.is_finite() {
            return Err(Error::NonFinite("contact data".into()));
        }
        if (self.axis.norm() - 1.0).abs() > AXIS_UNIT_TOL {
            return Err(Error::InvalidArgument(format!(
                "axis has norm {}, expected 1",
                self.axis.norm()
            )));
        }
        if self.mu < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "negative friction coefficient {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// `(tangential₁, tangential₂, normal)` components of an object-frame force.
    pub fn local_components(&self, f: Vec3) -> Vec3 {
        let (t1, t2) = tangent_basis(self.axis);
        Vec3::new(t1.dot(f), t2.dot(f), self.axis.dot(f))
    }
}

/// Orthonormal tangents `(t₁, t₂)` with `t₁ × t₂ = axis`. For `axis = e₃`
/// this returns `(e₁, e₂)`.
pub fn tangent_basis(axis: Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() > 0.9 {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(1.0, 0.0, 0.0)
    };
    let t1 = (helper - axis * helper.dot(axis)).normalized();
    let t2 = axis.cross(t1);
    (t1, t2)
}

/// `Σ coefficients·x (sense) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
    pub sense: RowSense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl LinearRow {
    /// `coefficients·x − rhs` for `<=`, `rhs − coefficients·x` for `>=`.
    /// Nonpositive means satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coefficients.iter().zip(x).map(|(a, b)| a * b).sum();
        match self.sense {
            RowSense::Le => lhs - self.rhs,
            RowSense::Ge => self.rhs - lhs,
        }
    }

    /// Nonnegative when satisfied.
    pub fn slack(&self, x: &[f64]) -> f64 {
        -self.violation(x)
    }
}

/// Contacts, hand Jacobian, joint-effort bounds and external load.
///
/// `hand_jacobian` is `3k × q`; joint torques are `J_hᵀ x`. An empty Jacobian
/// (`q = 0`) means no joint-effort constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspScenario {
    #[serde(default)]
    pub contacts: Vec<Contact>,
    #[serde(default = "empty_matrix")]
    pub hand_jacobian: Matrix,
    #[serde(default)]
    pub tau_lower: Vec<f64>,
    #[serde(default)]
    pub tau_upper: Vec<f64>,
    #[serde(default)]
    pub tau_ext: Vec<f64>,
    /// Object wrench `g₀` (force then moment).
    #[serde(default)]
    pub external_load: [f64; 6],
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub extra_linear_rows: Vec<LinearRow>,
}

fn empty_matrix() -> Matrix {
    Matrix::zeros(0, 0)
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl GraspScenario {
    /// Joint count `q`.
    pub fn joints(&self) -> usize {
        self.hand_jacobian.cols()
    }

    /// Length of the decision vector: `3k` with contacts, otherwise the
    /// Jacobian row count or the width of the linear rows.
    pub fn var_count(&self) -> usize {
        if !self.contacts.is_empty() {
            3 * self.contacts.len()
        } else if self.hand_jacobian.rows() > 0 {
            self.hand_jacobian.rows()
        } else {
            self.extra_linear_rows
                .first()
                .map_or(0, |r| r.coefficients.len())
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.contacts.iter().enumerate() {
            c.validate().map_err(|e| match e {
                Error::InvalidArgument(m) => Error::InvalidArgument(format!("contacts[{i}]: {m}")),
                Error::NonFinite(m) => Error::NonFinite(format!("contacts[{i}]: {m}")),
                other => other,
            })?;
        }
        let m = self.var_count();
        let q = self.joints();
        if q > 0 && self.hand_jacobian.rows() != m {
            return Err(Error::Dimension(format!(
                "hand_jacobian has {} rows, expected {m}",
                self.hand_jacobian.rows()
            )));
        }
        for (name, v) in [
            ("tau_lower", &self.tau_lower),
            ("tau_upper", &self.tau_upper),
            ("tau_ext", &self.tau_ext),
        ] {
            if v.len() != q {
                return Err(Error::Dimension(format!(
                    "{name} has {} entries, expected {q}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        if let Some(j) = (0..q).find(|&j| self.tau_lower[j] > self.tau_upper[j]) {
            return Err(Error::InvalidArgument(format!(
                "tau_lower[{j}] = {} exceeds tau_upper[{j}] = {}",
                self.tau_lower[j], self.tau_upper[j]
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.external_load.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("external_load".into()));
        }
        for (i, row) in self.extra_linear_rows.iter().enumerate() {
            if row.coefficients.len() != m {
                return Err(Error::Dimension(format!(
                    "extra_linear_rows[{i}] has {} coefficients, expected {m}",
                    row.coefficients.len()
                )));
            }
            if row.coefficients.iter().any(|v| !v.is_finite()) || !row.rhs.is_finite() {
                return Err(Error::NonFinite(format!("extra_linear_rows[{i}]")));
            }
        }
        Ok(())
    }
}

/// `6 × 3k` grasp map with column blocks `[I₃; skew(p_i)]`.
pub fn grasp_map(contacts: &[Contact]) -> Matrix {
    let mut g = Matrix::zeros(6, 3 * contacts.len());
    for (i, c) in contacts.iter().enumerate() {
        let s = skew(c.position);
        for r in 0..3 {
            g[(r, 3 * i + r)] = 1.0;
            for col in 0..3 {
                g[(3 + r, 3 * i + col)] = s[(r, col)];
            }
        }
    }
    g
}

/// `sqrt(x₁² + x₂²) / μ` for local components `(x₁, x₂, x₃)`.
pub fn weighted_norm_pcwf(x: Vec3, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weighted norm needs a positive friction coefficient, got {mu}"
        )));
    }
    Ok(x.x.hypot(x.y) / mu)
}

/// Membership in `{x₃ ≥ 0, ||x_t||_w ≤ x₃}` for local components.
pub fn in_friction_cone(x: Vec3, mu: f64) -> Result<bool> {
    Ok(x.z >= 0.0 && weighted_norm_pcwf(x, mu)? <= x.z)
}

/// The 3×3 block `[[μn, 0, t₁], [0, μn, t₂], [t₁, t₂, μn]]` for local
/// components `(t₁, t₂, n)`.
pub fn pcwf_block(local: Vec3, mu: f64) -> SymMatrix {
    let mut p = SymMatrix::from_diag(&[mu * local.z; 3]);
    p.set(0, 2, local.x);
    p.set(1, 2, local.y);
    p
}

/// `P(x) = Blockdiag(P₁..P_k) = Σ x_l S_l ⪰ 0` over object-frame forces.
///
/// `S_l = ∂P/∂x_l` is constant because `P` is linear in `x`; `P` has no
/// constant term.
pub fn friction_lmi(contacts: &[Contact]) -> Lmi {
    let k = contacts.len();
    let dim = 3 * k;
    let mut coeffs = Vec::with_capacity(dim);
    for (i, c) in contacts.iter().enumerate() {
        for axis in 0..3 {
            let mut unit = [0.0; 3];
            unit[axis] = 1.0;
            let local = c.local_components(Vec3::from(unit));
            let block = pcwf_block(local, c.mu);
            let mut s = SymMatrix::zeros(dim);
            for r in 0..3 {
                for col in r..3 {
                    s.set(3 * i + r, 3 * i + col, block.get(r, col));
                }
            }
            coeffs.push(s);
        }
    }
    Lmi::new(SymMatrix::zeros(dim), coeffs, Sense::Psd).expect("blocks share the stacked dimension")
}

/// Per-contact block `P_i` at object-frame forces `x`.
pub fn friction_block(contact: &Contact, force: Vec3) -> SymMatrix {
    pcwf_block(contact.local_components(force), contact.mu)
}

/// `T(x) = diag(J_hᵀx + τ_ext − τᴸ, −J_hᵀx − τ_ext + τᵁ) ⪰ 0`.
pub fn torque_lmi(scenario: &GraspScenario) -> Lmi {
    let q = scenario.joints();
    let m = scenario.var_count();
    let j = &scenario.hand_jacobian;
    let mut d0 = Vec::with_capacity(2 * q);
    d0.extend((0..q).map(|i| scenario.tau_ext[i] - scenario.tau_lower[i]));
    d0.extend((0..q).map(|i| scenario.tau_upper[i] - scenario.tau_ext[i]));
    let coeffs = (0..m)
        .map(|l| {
            let mut d = Vec::with_capacity(2 * q);
            if q > 0 {
                d.extend(j.row(l).iter().copied());
                d.extend(j.row(l).iter().map(|v| -v));
            }
            SymMatrix::from_diag(&d)
        })
        .collect();
    Lmi::new(SymMatrix::from_diag(&d0), coeffs, Sense::Psd)
        .expect("diagonal blocks share dimension 2q")
}

/// `D(x) = Blockdiag(P(x), T(x))` of dimension `3k + 2q`.
pub fn combined_lmi(scenario: &GraspScenario) -> Result<Lmi> {
    Lmi::block_diag(&[&friction_lmi(&scenario.contacts), &torque_lmi(scenario)])
}

/// `||G x + g₀||₂`.
pub fn equilibrium_residual(scenario: &GraspScenario, x: &[f64]) -> Result<f64> {
    let g = grasp_map(&scenario.contacts);
    if x.len() != g.cols() {
        return Err(Error::Dimension(format!(
            "expected {} force entries, got {}",
            g.cols(),
            x.len()
        )));
    }
    let w: Vec<f64> = g
        .mul_vec(x)
        .iter()
        .zip(&scenario.external_load)
        .map(|(a, b)| a + b)
        .collect();
    Ok(norm2(&w))
}

/// Outcome of the three force-closure tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceClosureReport {
    /// `λ_min(GGᵀ) ≥ ε − tol`
    pub grasp_map_ok: bool,
    pub grasp_map_min_eig: f64,
    /// `||Gf|| ≤ tol`
    pub equilibrium_ok: bool,
    pub equilibrium_residual: f64,
    /// `f_iᵀc_i − |f_i|/sqrt(μ² + 1) > tol`, per contact
    pub cone_ok: Vec<bool>,
    pub cone_margins: Vec<f64>,
    pub epsilon: f64,
    pub tol: f64,
}

impl ForceClosureReport {
    pub fn passed(&self) -> bool {
        self.grasp_map_ok && self.equilibrium_ok && self.cone_ok.iter().all(|&ok| ok)
    }
}

/// Checks `GGᵀ ⪰ εI`, `Gf = 0` and strict cone membership of every force.
pub fn force_closure_certificate(
    contacts: &[Contact],
    forces: &[Vec3],
    epsilon: f64,
    tol: f64,
) -> Result<ForceClosureReport> {
    if contacts.len() != forces.len() {
        return Err(Error::Dimension(format!(
            "{} contacts but {} forces",
            contacts.len(),
            forces.len()
        )));
    }
    let g = grasp_map(contacts);
    let ggt = SymMatrix::symmetric_part(&g.matmul(&g.transpose())?)?;
    let grasp_map_min_eig = min_eigval(&ggt)?.unwrap_or(0.0);

    let flat: Vec<f64> = forces.iter().flat_map(|f| f.to_array()).collect();
    let equilibrium_residual = norm2(&g.mul_vec(&flat));

    let cone_margins: Vec<f64> = contacts
        .iter()
        .zip(forces)
        .map(|(c, f)| f.dot(c.axis) - f.norm() / (c.mu * c.mu + 1.0).sqrt())
        .collect();

    Ok(ForceClosureReport {
        grasp_map_ok: grasp_map_min_eig >= epsilon - tol,
        grasp_map_min_eig,
        equilibrium_ok: equilibrium_residual <= tol,
        equilibrium_residual,
        cone_ok: cone_margins.iter().map(|&m| m > tol).collect(),
        cone_margins,
        epsilon,
        tol,
    })
}

/// Objective for [`scenario_to_lp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpObjective {
    SumOfVariables,
    Custom(Vec<f64>),
}

/// Assembles `min cᵀx` subject to every extra linear row and both sides of
/// every joint-effort bound, all in `Ax − b ≤ 0` form. The friction blocks are
/// not linearized; check them on the solution with [`friction_lmi`].
pub fn scenario_to_lp(scenario: &GraspScenario, objective: &LpObjective) -> Result<LpProblem> {
    scenario.validate()?;
    let m = scenario.var_count();
    let cost = match objective {
        LpObjective::SumOfVariables => vec![1.0; m],
        LpObjective::Custom(c) if c.len() == m => c.clone(),
        LpObjective::Custom(c) => {
            return Err(Error::Dimension(format!(
                "objective has {} entries, expected {m}",
                c.len()
            )))
        }
    };
    let mut rows = Vec::new();
    let mut b = Vec::new();
    for row in &scenario.extra_linear_rows {
        match row.sense {
            RowSense::Le => {
                rows.push(row.coefficients.clone());
                b.push(row.rhs);
            }
            RowSense::Ge => {
                rows.push(row.coefficients.iter().map(|v| -v).collect());
                b.push(-row.rhs);
            }
        }
    }
    let q = scenario.joints();
    let jt = scenario.hand_jacobian.transpose();
    for j in 0..q {
        // τᴸ ≤ (J_hᵀx)_j + τ_ext
        rows.push(jt.row(j).iter().map(|v| -v).collect());
        b.push(scenario.tau_ext[j] - scenario.tau_lower[j]);
    }
    for j in 0..q {
        // (J_hᵀx)_j + τ_ext ≤ τᵁ
        rows.push(jt.row(j).to_vec());
        b.push(scenario.tau_upper[j] - scenario.tau_ext[j]);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(
            "scenario has no linear constraints".into(),
        ));
    }
    LpProblem::new(cost, Matrix::from_rows(&rows)?, b)
}

/// PSD checks of the friction and joint-effort blocks at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmiFeasibility {
    pub cone: bool,
    pub torque: bool,
    pub combined: bool,
}

pub fn lmi_feasibility(scenario: &GraspScenario, x: &[f64], tol: f64) -> Result<LmiFeasibility> {
    let cone = if scenario.contacts.is_empty() {
        true
    } else {
        let p = crate::lmi::lmi_eval(&friction_lmi(&scenario.contacts), x)?;
        is_psd(&p, tol)
    };
    let torque = if scenario.joints() == 0 {
        true
    } else {
        is_psd(&crate::lmi::lmi_eval(&torque_lmi(scenario), x)?, tol)
    };
    let combined = if scenario.contacts.is_empty() && scenario.joints() == 0 {
        true
    } else {
        is_psd(&crate::lmi::lmi_eval(&combined_lmi(scenario)?, x)?, tol)
    };
    Ok(LmiFeasibility {
        cone,
        torque,
        combined,
    })
}
