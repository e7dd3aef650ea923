//! Browser bindings for three interactive operations: KKT dynamics on a
//! user-edited LP, the friction-cone matrix check, and grasp quality of an
//! equatorial grasp. Each export returns a JSON string; the plain Rust
//! functions underneath are what the tests call.

use gfo_core::grasp::{friction_block, in_friction_cone, Contact};
use gfo_core::kkt::{integrate, kkt_residual, KktState, LpProblem, Method};
use gfo_core::linalg::{default_psd_tol, is_psd, sym_eigvals, Matrix, Vec3};
use gfo_core::quality::{q_lrw_exact, q_lrw_sampled, WrenchSet, EXACT_MAX_POINTS};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_SAMPLES: usize = 400;

fn to_json(v: impl Serialize) -> String {
    serde_json::to_string(&v).expect("plain data serializes")
}

/// Integrates the projection dynamics of `min cᵀx s.t. a·x ≤ b` (one row)
/// from zero and returns up to 400 evenly spaced samples.
pub fn trajectory(cost: &[f64], a: &[f64], b: f64, t_end: f64, dt: f64) -> Result<String, String> {
    let lp = LpProblem::new(
        cost.to_vec(),
        Matrix::from_rows(&[a.to_vec()]).map_err(|e| e.to_string())?,
        vec![b],
    )
    .map_err(|e| e.to_string())?;
    let tr =
        integrate(&lp, &KktState::zeros(&lp), t_end, dt, Method::Rk4).map_err(|e| e.to_string())?;
    let stride = tr.len().div_ceil(MAX_SAMPLES).max(1);
    let mut samples: Vec<_> = tr.points.iter().step_by(stride).collect();
    if samples.last().map(|p| p.0) != tr.points.last().map(|p| p.0) {
        samples.push(tr.points.last().unwrap());
    }
    let end = tr.endpoint();
    let residual = kkt_residual(&lp, &end.x, &end.u).map_err(|e| e.to_string())?;
    Ok(to_json(json!({
        "t": samples.iter().map(|p| p.0).collect::<Vec<_>>(),
        "y": samples.iter().map(|p| p.1.to_concat()).collect::<Vec<_>>(),
        "x": end.x,
        "u": end.u,
        "objective": lp.objective(&end.x),
        "residuals": residual,
    })))
}

/// Friction block of force `f` at a contact with axis `e₃`, its eigenvalues
/// and both membership tests.
pub fn friction(fx: f64, fy: f64, fz: f64, mu: f64) -> Result<String, String> {
    let contact = Contact::new(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), mu);
    contact.validate().map_err(|e| e.to_string())?;
    let f = Vec3::new(fx, fy, fz);
    let p = friction_block(&contact, f);
    let eig = sym_eigvals(&p).map_err(|e| e.to_string())?;
    let cone = in_friction_cone(contact.local_components(f), mu).map_err(|e| e.to_string())?;
    Ok(to_json(json!({
        "block": p.to_rows(),
        "eigenvalues": eig,
        "psd": is_psd(&p, default_psd_tol(&p)),
        "in_cone": cone,
    })))
}

/// `q_lrw` for `k` contacts evenly spaced on the unit equator, pushing
/// toward the center.
pub fn equatorial_quality(
    k: usize,
    mu: f64,
    edges: usize,
    lambda: f64,
    seed: u64,
) -> Result<String, String> {
    if !(2..=12).contains(&k) {
        return Err(format!("contact count must be between 2 and 12, got {k}"));
    }
    let contacts: Vec<Contact> = (0..k)
        .map(|i| {
            let th = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            let p = Vec3::new(th.cos(), th.sin(), 0.0);
            Contact::new(p, -p, mu)
        })
        .collect();
    let set = WrenchSet::from_contacts(&contacts, edges, lambda).map_err(|e| e.to_string())?;
    let report = if set.points.len() <= EXACT_MAX_POINTS {
        q_lrw_exact(&set.points)
    } else {
        q_lrw_sampled(&set.points, 20_000, seed)
    }
    .map_err(|e| e.to_string())?;
    Ok(to_json(
        json!({ "points": set.points.len(), "report": report }),
    ))
}

#[wasm_bindgen(js_name = kktTrajectory)]
pub fn kkt_trajectory_js(
    cost: Vec<f64>,
    a: Vec<f64>,
    b: f64,
    t_end: f64,
    dt: f64,
) -> Result<String, JsError> {
    trajectory(&cost, &a, b, t_end, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = frictionCheck)]
pub fn friction_check_js(fx: f64, fy: f64, fz: f64, mu: f64) -> Result<String, JsError> {
    friction(fx, fy, fz, mu).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = graspQuality)]
pub fn grasp_quality_js(
    k: usize,
    mu: f64,
    edges: usize,
    lambda: f64,
    seed: u64,
) -> Result<String, JsError> {
    equatorial_quality(k, mu, edges, lambda, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn benchmark_trajectory_reaches_the_face() {
        let a = [3.18, 2.72, 1.42, 3.81];
        let c: Vec<f64> = a.iter().map(|v| -3.0 * v).collect();
        let out = parse(&trajectory(&c, &a, 7.81, 10.0, 0.001).unwrap());
        let x: Vec<f64> = serde_json::from_value(out["x"].clone()).unwrap();
        let ax: f64 = x.iter().zip(&a).map(|(p, q)| p * q).sum();
        assert!((ax - 7.81).abs() < 1e-3);
        let t = out["t"].as_array().unwrap();
        assert!(t.len() <= MAX_SAMPLES + 1);
        assert_eq!(t.last().unwrap().as_f64(), Some(10.0));
    }

    #[test]
    fn trajectory_rejects_mismatched_row() {
        assert!(trajectory(&[1.0, 2.0], &[1.0], 1.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn friction_agrees_with_cone() {
        let inside = parse(&friction(0.1, 0.0, 1.0, 0.5).unwrap());
        assert_eq!(inside["psd"], true);
        assert_eq!(inside["in_cone"], true);
        let outside = parse(&friction(1.0, 0.0, 1.0, 0.5).unwrap());
        assert_eq!(outside["psd"], false);
        assert_eq!(outside["in_cone"], false);
        assert!(friction(0.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn three_contacts_are_force_closure() {
        let out = parse(&equatorial_quality(3, 0.8, 8, 1.0, 0).unwrap());
        assert_eq!(out["points"], 24);
        assert!(out["report"]["q_lrw"].as_f64().unwrap() > 0.0);
        let pair = parse(&equatorial_quality(2, 0.5, 8, 1.0, 0).unwrap());
        assert_eq!(pair["report"]["q_lrw"], 0.0);
        assert!(equatorial_quality(1, 0.5, 8, 1.0, 0).is_err());
    }
}
