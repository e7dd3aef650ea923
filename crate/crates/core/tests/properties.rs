use gfo_core::grasp::{
    combined_lmi, force_closure_certificate, friction_block, friction_lmi, grasp_map,
    in_friction_cone, torque_lmi, Contact, GraspScenario, DEFAULT_EPSILON,
};
use gfo_core::kkt::{integrate, kkt_residual, phi, KktState, LpProblem, Method};
use gfo_core::linalg::{default_psd_tol, is_psd, skew, sym_eigvals, Matrix, SymMatrix, Vec3};
use gfo_core::lmi::{
    bmi_eval, bmi_to_sdp, lmi_eval, lmi_feasible, m_block_from, rank_one_recover, Bmi, Lmi, Sense,
};
use proptest::prelude::*;

fn sym(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-3.0f64..3.0, n * n)
        .prop_map(move |v| SymMatrix::from_fn(n, |i, j| v[i * n + j]))
}

fn gram(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
        let q = Matrix::from_fn(n, n, |i, j| v[i * n + j]);
        SymMatrix::symmetric_part(&q.transpose().matmul(&q).unwrap()).unwrap()
    })
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(m: &SymMatrix) -> f64 {
    let n = m.dim();
    let mut a = m.to_rows();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

fn vec3() -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-3.0f64..3.0).prop_map(Vec3::from)
}

fn unit3() -> impl Strategy<Value = Vec3> {
    vec3()
        .prop_filter("nonzero", |v| v.norm() > 1e-3)
        .prop_map(|v| v.normalized())
}

fn benchmark_lp() -> LpProblem {
    let a = vec![3.18, 2.72, 1.42, 3.81];
    let c = a.iter().map(|v| -3.0 * v).collect();
    LpProblem::new(c, Matrix::from_rows(&[a]).unwrap(), vec![7.81]).unwrap()
}

fn random_bmi(dim: usize, n: usize) -> impl Strategy<Value = Bmi> {
    (
        sym(dim),
        prop::collection::vec(sym(dim), n),
        prop::collection::vec(sym(dim), n * n),
    )
        .prop_map(move |(f0, fi, flat)| {
            let fij = (0..n).map(|i| flat[i * n..(i + 1) * n].to_vec()).collect();
            Bmi::new(f0, fi, fij).unwrap()
        })
}

proptest! {
    #[test]
    fn eigenvalues_sum_to_trace_and_multiply_to_det(m in (1usize..=10).prop_flat_map(sym)) {
        let eig = sym_eigvals(&m).unwrap();
        let sum: f64 = eig.iter().sum();
        prop_assert!((sum - m.trace()).abs() <= 1e-9 * (1.0 + m.norm_fro()));
        let prod: f64 = eig.iter().product();
        let d = det(&m);
        let scale = eig.iter().map(|l| l.abs().max(1e-300)).product::<f64>().max(d.abs());
        prop_assert!((prod - d).abs() <= 1e-8 * scale.max(1e-12), "{} vs {}", prod, d);
    }

    #[test]
    fn psd_closed_under_addition((a, b) in (1usize..=8).prop_flat_map(|n| (gram(n), gram(n)))) {
        // Gram matrices are PSD up to rounding; judge them with the default slack.
        prop_assume!(is_psd(&a, default_psd_tol(&a)) && is_psd(&b, default_psd_tol(&b)));
        let sum = &a + &b;
        prop_assert!(is_psd(&sum, default_psd_tol(&sum)));
    }

    #[test]
    fn skew_is_antisymmetric(x in vec3()) {
        let s = skew(x);
        prop_assert_eq!(s.transpose(), Matrix::from_fn(3, 3, |i, j| -s[(i, j)]));
    }

    #[test]
    fn lmi_is_affine(
        (f0, fi, x, y) in (1usize..5, 1usize..4).prop_flat_map(|(d, n)| (
            sym(d),
            prop::collection::vec(sym(d), n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(-2.0f64..2.0, n),
        ))
    ) {
        let lmi = Lmi::new(f0.clone(), fi, Sense::Psd).unwrap();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let lhs = &(&lmi_eval(&lmi, &x).unwrap() + &lmi_eval(&lmi, &y).unwrap()) + &(-&f0);
        let rhs = lmi_eval(&lmi, &xy).unwrap();
        for i in 0..lhs.dim() {
            for j in 0..lhs.dim() {
                prop_assert!((lhs.get(i, j) - rhs.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lifted_lmi_matches_bmi_at_rank_one_points(
        (bmi, x) in (1usize..5, 1usize..4)
            .prop_flat_map(|(d, n)| (random_bmi(d, n), prop::collection::vec(-2.0f64..2.0, n)))
    ) {
        let lifted = bmi_to_sdp(&bmi);
        let direct = bmi_eval(&bmi, &x).unwrap();
        let via = lmi_eval(lifted.base(), &lifted.rank_one_point(&x).unwrap()).unwrap();
        for i in 0..direct.dim() {
            for j in 0..direct.dim() {
                prop_assert!((direct.get(i, j) - via.get(i, j)).abs() <= 1e-12 * (1.0 + direct.norm_inf()));
            }
        }
    }

    #[test]
    fn rank_one_recovery_is_identity(x in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let big_x: Vec<f64> = x.iter().flat_map(|a| x.iter().map(move |b| a * b)).collect();
        let back = rank_one_recover(&m_block_from(&x, &big_x), 1e-6).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn phi_vanishes_on_the_benchmark_optimal_face(w in prop::array::uniform4(-1.0f64..1.0)) {
        let lp = benchmark_lp();
        let a = lp.a().row(0).to_vec();
        let aa: f64 = a.iter().map(|v| v * v).sum();
        let aw: f64 = a.iter().zip(&w).map(|(p, q)| p * q).sum();
        // Project onto aᵀx = 7.81.
        let x: Vec<f64> = w.iter().zip(&a).map(|(wi, ai)| wi + (7.81 - aw) / aa * ai).collect();
        let f = phi(&lp, &KktState::new(x, vec![3.0])).unwrap();
        prop_assert!(f.norm_inf() <= 1e-12, "{:?}", f);
    }

    #[test]
    fn friction_psd_matches_cone_membership(f in vec3(), axis in unit3(), mu in 1e-3f64..2.0) {
        let c = Contact::new(Vec3::ZERO, axis, mu);
        let p = friction_block(&c, f);
        let local = c.local_components(f);
        prop_assert_eq!(is_psd(&p, default_psd_tol(&p)), in_friction_cone(local, mu).unwrap());
    }

    #[test]
    fn combined_lmi_is_conjunction(
        forces in prop::collection::vec(-1.0f64..1.0, 6),
        jac in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let s = GraspScenario {
            contacts: vec![
                Contact::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), 0.6),
                Contact::new(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), 0.6),
            ],
            hand_jacobian: Matrix::from_fn(6, 2, |i, j| jac[2 * i + j]),
            tau_lower: vec![-1.0, -0.5],
            tau_upper: vec![1.0, 0.5],
            tau_ext: vec![0.1, 0.0],
            external_load: [0.0; 6],
            epsilon: DEFAULT_EPSILON,
            extra_linear_rows: vec![],
        };
        let tol = 1e-9;
        let both = lmi_feasible(&friction_lmi(&s.contacts), &forces, tol).unwrap()
            && lmi_feasible(&torque_lmi(&s), &forces, tol).unwrap();
        prop_assert_eq!(lmi_feasible(&combined_lmi(&s).unwrap(), &forces, tol).unwrap(), both);
    }

    #[test]
    fn translating_contacts_shifts_moment_rows(
        ps in prop::collection::vec(vec3(), 1..4),
        d in vec3(),
        raw in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let k = ps.len();
        let f = &raw[..3 * k];
        let axis = Vec3::new(0.0, 0.0, 1.0);
        let base: Vec<Contact> = ps.iter().map(|&p| Contact::new(p, axis, 0.5)).collect();
        let moved: Vec<Contact> = ps.iter().map(|&p| Contact::new(p + d, axis, 0.5)).collect();
        let w0 = grasp_map(&base).mul_vec(f);
        let w1 = grasp_map(&moved).mul_vec(f);
        let total = (0..k).fold(Vec3::ZERO, |acc, i| acc + Vec3::from_slice(&f[3 * i..3 * i + 3]));
        let shift = skew(d).mul_vec(&total.to_array());
        for r in 0..3 {
            prop_assert!((w1[r] - w0[r]).abs() < 1e-12);
            prop_assert!((w1[3 + r] - w0[3 + r] - shift[r]).abs() < 1e-9);
        }
    }

    #[test]
    fn certificate_signs_are_scale_invariant(
        forces in prop::collection::vec(vec3(), 3),
        s in 0.01f64..100.0,
    ) {
        let contacts: Vec<Contact> = (0..3)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / 3.0;
                let p = Vec3::new(th.cos(), th.sin(), 0.0);
                Contact::new(p, -p, 0.8)
            })
            .collect();
        let scaled: Vec<Vec3> = forces.iter().map(|f| *f * s).collect();
        let a = force_closure_certificate(&contacts, &forces, 0.1, 0.0).unwrap();
        let b = force_closure_certificate(&contacts, &scaled, 0.1, 0.0).unwrap();
        for (ma, mb) in a.cone_margins.iter().zip(&b.cone_margins) {
            prop_assert!((mb - s * ma).abs() <= 1e-9 * (1.0 + s * ma.abs()));
        }
        prop_assert_eq!(a.cone_ok, b.cone_ok);
        prop_assert!((b.equilibrium_residual - s * a.equilibrium_residual).abs() <= 1e-9 * (1.0 + s));
    }
}

#[test]
fn benchmark_trajectory_is_deterministic_and_stationary() {
    let lp = benchmark_lp();
    let y0 = KktState::zeros(&lp);
    let a = integrate(&lp, &y0, 10.0, 0.001, Method::Euler).unwrap();
    let b = integrate(&lp, &y0, 10.0, 0.001, Method::Euler).unwrap();
    assert_eq!(a, b);
    let start = kkt_residual(&lp, &y0.x, &y0.u).unwrap().stationarity;
    let end = a.endpoint();
    let stop = kkt_residual(&lp, &end.x, &end.u).unwrap().stationarity;
    assert!(stop <= 0.01 * start, "{stop} vs {start}");
}
