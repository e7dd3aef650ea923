//! Grasp wrench space and the largest-minimum-resisted-wrench quality.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp::{tangent_basis, Contact};
use crate::linalg::{Matrix, Vec3};

pub type Wrench = [f64; 6];

/// Distance at or below which the origin counts as inside the hull.
pub const ORIGIN_TOL: f64 = 1e-9;

/// Stopping gap of [`min_norm_point`], relative to the squared point scale.
pub const MIN_NORM_GAP: f64 = 1e-10;

/// Upper limit for the exhaustive facet search.
pub const EXACT_MAX_POINTS: usize = 30;

pub const DEFAULT_EDGES: usize = 8;

const DIM: usize = 6;

/// Discretized contact wrenches, torques already divided by `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrenchSet {
    pub points: Vec<Wrench>,
    pub lambda: f64,
}

impl WrenchSet {
    /// Union over contacts of the `m` edge wrenches.
    pub fn from_contacts(contacts: &[Contact], m: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let mut points = Vec::with_capacity(contacts.len() * m);
        for c in contacts {
            points.extend(contact_wrenches(c, &cone_edges(c, m)?, lambda));
        }
        let set = Self { points, lambda };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("wrench set is empty".into()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("wrench set".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityMethod {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub q_lrw: f64,
    pub contains_origin: bool,
    pub method: QualityMethod,
    /// Supporting facets found (exact) or directions sampled.
    pub count: usize,
}

/// `m` unit-normal-force edges `axis + μ(cos θ_j t₁ + sin θ_j t₂)`.
pub fn cone_edges(contact: &Contact, m: usize) -> Result<Vec<Vec3>> {
    if m < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 cone edges, got {m}"
        )));
    }
    contact.validate()?;
    let (t1, t2) = tangent_basis(contact.axis);
    Ok((0..m)
        .map(|j| {
            let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            contact.axis + (t1 * th.cos() + t2 * th.sin()) * contact.mu
        })
        .collect())
}

/// `(f, (p × f) / lambda)` for each edge force `f`.
pub fn contact_wrenches(contact: &Contact, edges: &[Vec3], lambda: f64) -> Vec<Wrench> {
    edges
        .iter()
        .map(|&f| {
            let tau = contact.position.cross(f);
            [
                f.x,
                f.y,
                f.z,
                tau.x / lambda,
                tau.y / lambda,
                tau.z / lambda,
            ]
        })
        .collect()
}

fn dot6(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(points: &[Vec<f64>], idx: &[usize], w: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; points[0].len()];
    for (&i, &wi) in idx.iter().zip(w) {
        for (xk, pk) in x.iter_mut().zip(&points[i]) {
            *xk += wi * pk;
        }
    }
    x
}

/// Minimizer of `||Σ w_i p_i||` over the affine hull of the corral.
fn affine_minimizer(points: &[Vec<f64>], idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    let mut sys = Matrix::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            sys[(a, b)] = dot6(&points[idx[a]], &points[idx[b]]);
        }
        sys[(a, k)] = 1.0;
        sys[(k, a)] = 1.0;
    }
    let mut rhs = vec![0.0; k + 1];
    rhs[k] = 1.0;
    let scale = (0..k).map(|a| sys[(a, a)]).fold(1.0, f64::max);
    let sol = sys.solve(&rhs, 1e-14 * scale)?;
    Some(sol[..k].to_vec())
}

/// Minimum-norm point of the convex hull by Wolfe's corral method.
///
/// Works in any dimension. Returns the point and its norm; a norm of zero
/// means the origin lies in the hull.
pub fn min_norm_point(points: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "min_norm_point needs at least one point".into(),
        ));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Dimension("points have mixed dimensions".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hull points".into()));
    }
    let scale2 = points.iter().map(|p| dot6(p, p)).fold(0.0, f64::max);
    if scale2 == 0.0 {
        return Ok((vec![0.0; dim], 0.0));
    }
    let gap_tol = MIN_NORM_GAP * scale2;

    let start = (0..points.len())
        .min_by(|&a, &b| dot6(&points[a], &points[a]).total_cmp(&dot6(&points[b], &points[b])))
        .unwrap();
    let mut idx = vec![start];
    let mut w = vec![1.0];
    let mut x = points[start].clone();
    let max_iter = 100 * (points.len() + dim) + 1000;
    let mut gap = f64::INFINITY;

    for _ in 0..max_iter {
        let xx = dot6(&x, &x);
        let (j, xp) = points
            .iter()
            .enumerate()
            .map(|(j, p)| (j, dot6(&x, p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        gap = xx - xp;
        if gap <= gap_tol || xx <= gap_tol || idx.contains(&j) {
            let d = xx.sqrt();
            return Ok((x, d));
        }
        idx.push(j);
        w.push(0.0);

        // Minor cycles: move toward the affine minimizer until it lies in the
        // relative interior of the corral.
        loop {
            let Some(v) = affine_minimizer(points, &idx) else {
                return Err(Error::MinNormNoConvergence { gap });
            };
            if v.iter().all(|&vi| vi > 1e-14) {
                w = v;
                x = combine(points, &idx, &w);
                break;
            }
            let mut theta = 1.0f64;
            for (&wi, &vi) in w.iter().zip(&v) {
                if vi <= 1e-14 && wi - vi > 0.0 {
                    theta = theta.min(wi / (wi - vi));
                }
            }
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = theta * vi + (1.0 - theta) * *wi;
            }
            let mut k = 0;
            while k < idx.len() {
                if w[k] <= 1e-14 {
                    idx.remove(k);
                    w.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= total);
            x = combine(points, &idx, &w);
            if idx.len() == 1 {
                break;
            }
        }
    }
    Err(Error::MinNormNoConvergence { gap })
}

fn as_vecs(points: &[Wrench]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.to_vec()).collect()
}

fn point_scale(points: &[Wrench]) -> f64 {
    points
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE)
}

/// Dimension of the affine hull.
fn affine_rank(points: &[Wrench], tol: f64) -> usize {
    let rows: Vec<[f64; DIM]> = points[1..]
        .iter()
        .map(|p| std::array::from_fn(|k| p[k] - points[0][k]))
        .collect();
    let mut m = rows;
    let mut rank = 0;
    for col in 0..DIM {
        let Some(piv) =
            (rank..m.len()).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
        else {
            break;
        };
        if m[piv][col].abs() <= tol {
            continue;
        }
        m.swap(rank, piv);
        for r in rank + 1..m.len() {
            let f = m[r][col] / m[rank][col];
            for c in col..DIM {
                m[r][c] -= f * m[rank][c];
            }
        }
        rank += 1;
    }
    rank
}

/// Unit normal of the hyperplane through six points, if they are affinely
/// independent.
fn hyperplane_normal(p: [&Wrench; DIM], tol: f64) -> Option<[f64; DIM]> {
    let mut m: [[f64; DIM]; DIM - 1] =
        std::array::from_fn(|r| std::array::from_fn(|c| p[r + 1][c] - p[0][c]));
    let mut pivots = [usize::MAX; DIM - 1];
    let mut free = None;
    let mut row = 0;
    for col in 0..DIM {
        if row == DIM - 1 {
            free.get_or_insert(col);
            continue;
        }
        let piv = (row..DIM - 1)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[piv][col].abs() <= tol {
            if free.replace(col).is_some() {
                return None;
            }
            continue;
        }
        m.swap(row, piv);
        for r in 0..DIM - 1 {
            if r != row {
                let f = m[r][col] / m[row][col];
                for c in col..DIM {
                    m[r][c] -= f * m[row][c];
                }
            }
        }
        pivots[row] = col;
        row += 1;
    }
    let free = free?;
    if row != DIM - 1 {
        return None;
    }
    let mut n = [0.0; DIM];
    n[free] = 1.0;
    for r in 0..DIM - 1 {
        n[pivots[r]] = -m[r][free] / m[r][pivots[r]];
    }
    let len = dot6(&n, &n).sqrt();
    Some(n.map(|v| v / len))
}

fn next_combination(c: &mut [usize; DIM], n: usize) -> bool {
    let mut i = DIM;
    while i > 0 {
        i -= 1;
        if c[i] < n - DIM + i {
            c[i] += 1;
            for j in i + 1..DIM {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Origin containment and affine dimension check shared by both methods.
fn interior(points: &[Wrench]) -> Result<bool> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("wrench set is empty".into()));
    }
    let (_, dist) = min_norm_point(&as_vecs(points))?;
    let scale = point_scale(points);
    Ok(dist <= ORIGIN_TOL * scale.max(1.0) && affine_rank(points, 1e-9 * scale) == DIM)
}

/// Exact `q_lrw` by enumerating every six-point supporting hyperplane.
///
/// Point sets whose hull does not contain the origin in its interior,
/// including sets that do not span R⁶, give `q = 0`.
pub fn q_lrw_exact(points: &[Wrench]) -> Result<QualityReport> {
    if points.len() > EXACT_MAX_POINTS {
        return Err(Error::InvalidArgument(format!(
            "exact method supports at most {EXACT_MAX_POINTS} points, got {}; use sampling",
            points.len()
        )));
    }
    if !interior(points)? {
        return Ok(QualityReport {
            q_lrw: 0.0,
            contains_origin: false,
            method: QualityMethod::Exact,
            count: 0,
        });
    }
    let n = points.len();
    let scale = point_scale(points);
    let tol = 1e-9 * scale;
    let mut best = f64::INFINITY;
    let mut facets = 0;
    let mut c: [usize; DIM] = std::array::from_fn(|i| i);
    loop {
        let sel = c.map(|i| &points[i]);
        if let Some(nrm) = hyperplane_normal(sel, tol) {
            let d = dot6(&nrm, sel[0]);
            let (mut above, mut below) = (false, false);
            for p in points {
                let s = dot6(&nrm, p) - d;
                above |= s > tol;
                below |= s < -tol;
                if above && below {
                    break;
                }
            }
            if !(above && below) {
                facets += 1;
                best = best.min(d.abs());
            }
        }
        if !next_combination(&mut c, n) {
            break;
        }
    }
    if facets == 0 {
        return Err(Error::DegenerateHull);
    }
    Ok(QualityReport {
        q_lrw: best,
        contains_origin: true,
        method: QualityMethod::Exact,
        count: facets,
    })
}

/// Upper bound on `q_lrw`: the smallest support value over `n_dirs` seeded
/// uniform unit directions.
pub fn q_lrw_sampled(points: &[Wrench], n_dirs: usize, seed: u64) -> Result<QualityReport> {
    if n_dirs == 0 {
        return Err(Error::InvalidArgument("need at least one direction".into()));
    }
    if !interior(points)? {
        return Ok(QualityReport {
            q_lrw: 0.0,
            contains_origin: false,
            method: QualityMethod::Sampled,
            count: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..n_dirs {
        let mut u: [f64; DIM] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let len = dot6(&u, &u).sqrt();
        u.iter_mut().for_each(|v| *v /= len);
        let support = points
            .iter()
            .map(|p| dot6(&u, p))
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.min(support);
    }
    Ok(QualityReport {
        q_lrw: best.max(0.0),
        contains_origin: true,
        method: QualityMethod::Sampled,
        count: n_dirs,
    })
}
