//! Linear and bilinear matrix inequalities, the lifting of a BMI to a
//! relaxed LMI over `(x, X)`, and rank-one recovery from the lifted block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_psd, sym_eigvals, SymMatrix};

/// Default acceptance ratio `lambda2 / lambda1` for [`rank_one_recover`].
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Direction of a matrix inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `F(x) ⪰ 0`
    Psd,
    /// `F(x) ⪯ 0`
    Nsd,
}

/// Affine matrix inequality `F0 + Σ x_i F_i (sense) 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    f0: SymMatrix,
    fi: Vec<SymMatrix>,
    sense: Sense,
}

impl Lmi {
    pub fn new(f0: SymMatrix, fi: Vec<SymMatrix>, sense: Sense) -> Result<Self> {
        let n = f0.dim();
        if let Some(i) = fi.iter().position(|f| f.dim() != n) {
            return Err(Error::Dimension(format!(
                "F_{} is {}x{}, expected {n}x{n}",
                i + 1,
                fi[i].dim(),
                fi[i].dim()
            )));
        }
        Ok(Self { f0, fi, sense })
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    pub fn var_count(&self) -> usize {
        self.fi.len()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn f0(&self) -> &SymMatrix {
        &self.f0
    }

    pub fn coefficients(&self) -> &[SymMatrix] {
        &self.fi
    }

    /// Block-diagonal stacking of LMIs over the same variable vector. All
    /// parts must share the same sense.
    pub fn block_diag(parts: &[&Lmi]) -> Result<Lmi> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no LMI blocks to stack".into()))?;
        let m = first.var_count();
        if let Some(p) = parts
            .iter()
            .find(|p| p.var_count() != m || p.sense != first.sense)
        {
            return Err(Error::Dimension(format!(
                "cannot stack LMI over {} variables ({:?}) with one over {m} ({:?})",
                p.var_count(),
                p.sense,
                first.sense
            )));
        }
        let f0 = SymMatrix::block_diag(&parts.iter().map(|p| &p.f0).collect::<Vec<_>>());
        let fi = (0..m)
            .map(|l| SymMatrix::block_diag(&parts.iter().map(|p| &p.fi[l]).collect::<Vec<_>>()))
            .collect();
        Lmi::new(f0, fi, first.sense)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!(
            "expected {expected} variables, got {got}"
        )));
    }
    Ok(())
}

/// `F0 + Σ x_i F_i`.
pub fn lmi_eval(lmi: &Lmi, x: &[f64]) -> Result<SymMatrix> {
    check_len(lmi.var_count(), x.len())?;
    let mut out = lmi.f0.clone();
    for (xi, fi) in x.iter().zip(&lmi.fi) {
        if *xi != 0.0 {
            out.axpy(*xi, fi);
        }
    }
    Ok(out)
}

/// Whether `x` satisfies the LMI in its declared sense, with eigenvalue
/// slack `tol`.
pub fn lmi_feasible(lmi: &Lmi, x: &[f64], tol: f64) -> Result<bool> {
    let f = lmi_eval(lmi, x)?;
    Ok(match lmi.sense {
        Sense::Psd => is_psd(&f, tol),
        Sense::Nsd => is_psd(&-&f, tol),
    })
}

/// Bilinear matrix inequality `F0 + Σ x_i F_i + Σ_i Σ_j x_i x_j F_ij ⪰ 0`.
///
/// The cross terms are stored in canonical symmetric form: the coefficient of
/// `x_i x_j` is `(F_ij + F_ji) / 2` in both slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Bmi {
    f0: SymMatrix,
    fi: Vec<SymMatrix>,
    fij: Vec<Vec<SymMatrix>>,
}

impl Bmi {
    pub fn new(f0: SymMatrix, fi: Vec<SymMatrix>, fij: Vec<Vec<SymMatrix>>) -> Result<Self> {
        let n = f0.dim();
        let vars = fi.len();
        if fij.len() != vars || fij.iter().any(|row| row.len() != vars) {
            return Err(Error::Dimension(format!("F_ij grid must be {vars}x{vars}")));
        }
        let all_dims_ok = fi.iter().chain(fij.iter().flatten()).all(|f| f.dim() == n);
        if !all_dims_ok {
            return Err(Error::Dimension(format!(
                "all BMI coefficients must be {n}x{n}"
            )));
        }
        let folded = (0..vars)
            .map(|i| {
                (0..vars)
                    .map(|j| {
                        let mut s = fij[i][j].clone();
                        s.axpy(1.0, &fij[j][i]);
                        s.scaled(0.5)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            f0,
            fi,
            fij: folded,
        })
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    pub fn var_count(&self) -> usize {
        self.fi.len()
    }

    pub fn cross_term(&self, i: usize, j: usize) -> &SymMatrix {
        &self.fij[i][j]
    }
}

/// `F0 + Σ x_i F_i + ΣΣ x_i x_j F_ij`.
pub fn bmi_eval(bmi: &Bmi, x: &[f64]) -> Result<SymMatrix> {
    check_len(bmi.var_count(), x.len())?;
    let mut out = bmi.f0.clone();
    for (i, xi) in x.iter().enumerate() {
        out.axpy(*xi, &bmi.fi[i]);
        for (j, xj) in x.iter().enumerate() {
            let w = xi * xj;
            if w != 0.0 {
                out.axpy(w, &bmi.fij[i][j]);
            }
        }
    }
    Ok(out)
}

/// A BMI with every product `x_i x_j` replaced by a free entry `X_ij`.
///
/// The extended variable vector is `(x_1..x_N, X_11, X_12, .., X_NN)` with `X`
/// flattened row-major. Feasibility additionally requires the block
/// `M = [[X, x], [xᵀ, 1]] ⪰ 0`; the rank-one condition on `M` is not imposed.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSdp {
    base: Lmi,
    n: usize,
}

impl LiftedSdp {
    pub fn base(&self) -> &Lmi {
        &self.base
    }

    /// Number of original variables `N`.
    pub fn original_vars(&self) -> usize {
        self.n
    }

    /// `N + N²`.
    pub fn var_count(&self) -> usize {
        self.base.var_count()
    }

    /// Splits an extended point into `(x, X)`.
    pub fn split<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        check_len(self.var_count(), z.len())?;
        Ok(z.split_at(self.n))
    }

    /// The `(N+1)×(N+1)` block `[[X, x], [xᵀ, 1]]`, using the symmetric part
    /// of `X`.
    pub fn m_block(&self, z: &[f64]) -> Result<SymMatrix> {
        let (x, big_x) = self.split(z)?;
        Ok(m_block_from(x, big_x))
    }

    /// Extended point `(x, vec(x xᵀ))`.
    pub fn rank_one_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        Ok(rank_one_point(x))
    }

    /// Lifted LMI holds and the `M` block is PSD.
    pub fn feasible(&self, z: &[f64], tol: f64) -> Result<bool> {
        Ok(lmi_feasible(&self.base, z, tol)? && is_psd(&self.m_block(z)?, tol))
    }
}

pub(crate) fn rank_one_point(x: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    for xi in x {
        for xj in x {
            z.push(xi * xj);
        }
    }
    z
}

/// `[[X, x], [xᵀ, 1]]` with `X` given row-major (`N²` entries).
pub fn m_block_from(x: &[f64], big_x: &[f64]) -> SymMatrix {
    let n = x.len();
    let mut m = SymMatrix::zeros(n + 1);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, 0.5 * (big_x[i * n + j] + big_x[j * n + i]));
        }
        m.set(i, n, x[i]);
    }
    m.set(n, n, 1.0);
    m
}

/// Lifts a BMI to an LMI over `(x, X)`.
pub fn bmi_to_sdp(bmi: &Bmi) -> LiftedSdp {
    let n = bmi.var_count();
    let mut coeffs = bmi.fi.clone();
    for i in 0..n {
        for j in 0..n {
            coeffs.push(bmi.fij[i][j].clone());
        }
    }
    let base = Lmi::new(bmi.f0.clone(), coeffs, Sense::Psd)
        .expect("lifted coefficients share the BMI dimension");
    LiftedSdp { base, n }
}

/// Reads `x` from the last column of a rank-one `M = [[X, x], [xᵀ, 1]]`.
///
/// Fails with [`Error::RankDeficit`] carrying `max_{k≥2} |λ_k| / λ_1` when
/// that ratio exceeds `tol`.
pub fn rank_one_recover(m: &SymMatrix, tol: f64) -> Result<Vec<f64>> {
    let dim = m.dim();
    if dim == 0 {
        return Err(Error::Dimension("empty M block".into()));
    }
    let n = dim - 1;
    if (m.get(n, n) - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "M block must have bottom-right entry 1, got {}",
            m.get(n, n)
        )));
    }
    let eig = sym_eigvals(m)?;
    let lead = eig[0];
    let rest = eig[1..].iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let residual = if lead > 0.0 {
        rest / lead
    } else {
        f64::INFINITY
    };
    if residual > tol {
        return Err(Error::RankDeficit(residual));
    }
    Ok((0..n).map(|i| m.get(i, n)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> SymMatrix {
        SymMatrix::from_diag(&[v])
    }

    /// 1x1 BMI: -1 + 0.5 x1 x2 + 0.5 x2 x1.
    fn product_bmi() -> Bmi {
        Bmi::new(
            scalar(-1.0),
            vec![scalar(0.0), scalar(0.0)],
            vec![
                vec![scalar(0.0), scalar(0.5)],
                vec![scalar(0.5), scalar(0.0)],
            ],
        )
        .unwrap()
    }

    #[test]
    fn lmi_eval_examples() {
        let lmi = Lmi::new(
            -&SymMatrix::identity(2),
            vec![SymMatrix::identity(2)],
            Sense::Psd,
        )
        .unwrap();
        assert_eq!(lmi_eval(&lmi, &[2.0]).unwrap(), SymMatrix::identity(2));
        assert_eq!(lmi_eval(&lmi, &[0.0]).unwrap(), *lmi.f0());
        assert!(lmi_eval(&lmi, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn benchmark_row_as_scalar_lmi() {
        // b - aᵀx ⪰ 0
        let a = [3.18, 2.72, 1.42, 3.81];
        let lmi = Lmi::new(
            scalar(7.81),
            a.iter().map(|v| scalar(-v)).collect(),
            Sense::Psd,
        )
        .unwrap();
        assert_eq!(lmi_eval(&lmi, &[0.0; 4]).unwrap(), scalar(7.81));
    }

    #[test]
    fn lmi_feasible_examples() {
        let zero = Lmi::new(scalar(0.0), vec![scalar(0.0)], Sense::Psd).unwrap();
        assert!(lmi_feasible(&zero, &[123.0], 0.0).unwrap());

        let lmi = Lmi::new(
            -&SymMatrix::identity(2),
            vec![SymMatrix::identity(2)],
            Sense::Psd,
        )
        .unwrap();
        assert!(!lmi_feasible(&lmi, &[0.5], 1e-9).unwrap());
        assert!(lmi_feasible(&lmi, &[1.0], 1e-9).unwrap());
    }

    #[test]
    fn nsd_sense_negates() {
        let lmi = Lmi::new(
            -&SymMatrix::identity(2),
            vec![SymMatrix::identity(2)],
            Sense::Nsd,
        )
        .unwrap();
        assert!(lmi_feasible(&lmi, &[0.5], 0.0).unwrap());
        assert!(!lmi_feasible(&lmi, &[1.5], 0.0).unwrap());
    }

    #[test]
    fn bmi_eval_examples() {
        let bmi = product_bmi();
        assert_eq!(bmi_eval(&bmi, &[1.0, 1.0]).unwrap(), scalar(0.0));
        assert_eq!(bmi_eval(&bmi, &[2.0, 1.0]).unwrap(), scalar(1.0));
        assert_eq!(bmi_eval(&bmi, &[0.0, 0.0]).unwrap(), scalar(-1.0));
    }

    #[test]
    fn asymmetric_cross_terms_are_folded() {
        let lopsided = Bmi::new(
            scalar(-1.0),
            vec![scalar(0.0), scalar(0.0)],
            vec![
                vec![scalar(0.0), scalar(1.0)],
                vec![scalar(0.0), scalar(0.0)],
            ],
        )
        .unwrap();
        assert_eq!(lopsided, product_bmi());
    }

    #[test]
    fn lifting_shape() {
        let lifted = bmi_to_sdp(&product_bmi());
        assert_eq!(lifted.var_count(), 6);
        let z = lifted.rank_one_point(&[1.0, 2.0]).unwrap();
        assert_eq!(&z[2..], &[1.0, 2.0, 2.0, 4.0]);
        let m = lifted.m_block(&z).unwrap();
        assert_eq!(m.dim(), 3);
        let eig = sym_eigvals(&m).unwrap();
        assert!(eig[1].abs() < 1e-12 && eig[2].abs() < 1e-12);
    }

    #[test]
    fn lifted_feasibility_matches_bmi() {
        let bmi = product_bmi();
        let lifted = bmi_to_sdp(&bmi);
        for x in [[1.0, 1.0], [2.0, 1.0], [0.5, 0.5], [-1.0, 3.0]] {
            let direct = is_psd(&bmi_eval(&bmi, &x).unwrap(), 1e-9);
            let z = lifted.rank_one_point(&x).unwrap();
            assert_eq!(direct, lifted.feasible(&z, 1e-9).unwrap(), "x = {x:?}");
        }
    }

    #[test]
    fn recover_examples() {
        let m = m_block_from(&[1.0, 2.0], &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(
            rank_one_recover(&m, DEFAULT_RANK_TOL).unwrap(),
            vec![1.0, 2.0]
        );

        match rank_one_recover(&SymMatrix::identity(3), DEFAULT_RANK_TOL) {
            Err(Error::RankDeficit(r)) => assert!((r - 1.0).abs() < 1e-12),
            other => panic!("expected rank deficit, got {other:?}"),
        }
    }

    #[test]
    fn recover_tolerates_tiny_noise() {
        let mut m = m_block_from(&[1.0, 2.0], &[1.0, 2.0, 2.0, 4.0]);
        let noise = [3e-13, -7e-13, 5e-13, 1e-12, -2e-13, 6e-13];
        let mut k = 0;
        for i in 0..3 {
            for j in i..3 {
                if (i, j) != (2, 2) {
                    m.add_at(i, j, noise[k]);
                    k += 1;
                }
            }
        }
        let x = rank_one_recover(&m, DEFAULT_RANK_TOL).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 2.0).abs() < 1e-6);
    }
}
