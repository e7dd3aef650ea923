//! End-to-end acceptance checks. Each test writes one PASS/FAIL line straight
//! to stderr so the summary is visible even when output capture is on.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use clap::Parser;
use gfo_core::grasp::{
    force_closure_certificate, friction_block, in_friction_cone, Contact, DEFAULT_CERT_TOL,
};
use gfo_core::harness::{self, Cli, RunOutcome};
use gfo_core::kkt::{integrate, KktState, LpProblem, Method};
use gfo_core::linalg::{default_psd_tol, is_psd, Matrix, SymMatrix, Vec3};
use gfo_core::lmi::{bmi_eval, bmi_to_sdp, rank_one_recover, Bmi};
use gfo_core::neural::{collocation_loss, collocation_loss_grad, Mlp};
use gfo_core::quality::{q_lrw_exact, q_lrw_sampled, Wrench, WrenchSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn report_line(id: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    writeln!(err, "acceptance {id} [{verdict}] {title}: {detail}").unwrap();
}

struct Run {
    outcome: RunOutcome,
    elapsed: Duration,
    out: tempfile::TempDir,
}

fn run_cli(args: &[&str]) -> Run {
    let out = tempfile::tempdir().unwrap();
    let mut argv = vec!["gfo"];
    argv.extend_from_slice(args);
    argv.extend(["--out", out.path().to_str().unwrap()]);
    let cli = Cli::try_parse_from(argv).unwrap();
    let start = Instant::now();
    let outcome = harness::run(&cli).unwrap();
    Run {
        outcome,
        elapsed: start.elapsed(),
        out,
    }
}

fn benchmark_nn() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let input = fixture("benchmark_lp.json");
        run_cli(&[
            "solve-lp",
            "--input",
            input.to_str().unwrap(),
            "--solver",
            "nn",
            "--seed",
            "0",
        ])
    })
}

fn benchmark_ode() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let input = fixture("benchmark_lp.json");
        run_cli(&[
            "solve-lp",
            "--input",
            input.to_str().unwrap(),
            "--solver",
            "ode",
        ])
    })
}

fn grasp_nn() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let input = fixture("grasp_torque.json");
        run_cli(&[
            "solve-grasp",
            "--input",
            input.to_str().unwrap(),
            "--solver",
            "nn",
            "--seed",
            "0",
        ])
    })
}

const A37: [f64; 4] = [3.18, 2.72, 1.42, 3.81];

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn criterion_1_benchmark_lp() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, run) in [("ode", benchmark_ode()), ("nn", benchmark_nn())] {
        let r = &run.outcome.report;
        let x = r.x.as_ref().unwrap();
        let ax = dot(&A37, x);
        let obj = r.objective.unwrap();
        let u = r.u.as_ref().unwrap()[0];
        let ok = (ax - 7.81).abs() <= 0.05
            && (obj + 23.43).abs() <= 0.01 * 23.43
            && (u - 3.0).abs() <= 0.05
            && run.elapsed.as_secs_f64() <= 60.0;
        pass &= ok;
        lines.push(format!(
            "{name}: aᵀx={ax:.4} objective={obj:.4} u={u:.4} in {:.1}s",
            run.elapsed.as_secs_f64()
        ));
    }
    report_line(
        1,
        "benchmark LP on the optimal face",
        pass,
        &lines.join("; "),
    );
    assert!(pass, "{lines:?}");
}

fn csv_rows(run: &Run, name: &str) -> usize {
    let text = std::fs::read_to_string(run.out.path().join(name)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,loss"));
    lines.count()
}

#[test]
fn criterion_2_loss_convergence() {
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, run) in [("benchmark", benchmark_nn()), ("grasp", grasp_nn())] {
        let r = &run.outcome.report;
        let ratio = r.loss_last.unwrap() / r.loss_first.unwrap();
        let rows = csv_rows(run, "loss.csv");
        let ok = ratio <= 0.01 && rows == 1000;
        pass &= ok;
        lines.push(format!("{name}: loss ratio {ratio:.3e}, {rows} CSV rows"));
    }
    report_line(
        2,
        "loss at epoch 1000 below 1% of epoch 1",
        pass,
        &lines.join("; "),
    );
    assert!(pass, "{lines:?}");
}

#[test]
fn criterion_3_grasp_lp() {
    let r = &grasp_nn().outcome.report;
    let x = r.x.as_ref().unwrap();
    let coeffs = [1.7744, 1.8984, 1.5, 2.1994, 1.858, 1.5, 1.8642, 1.7924, 1.5];
    let slack = dot(&coeffs, x) + 600.0;
    let stationarity = r.residuals.unwrap().stationarity;
    let initial = r.initial_residuals.unwrap().stationarity;
    let reference = r.reference.as_ref().unwrap();
    let ref_slack = reference.slacks[0];

    let slack_ok = slack >= 0.0;
    let stationarity_ok = stationarity <= 1e-2 * initial;
    let reference_ok = reference.feasible && (ref_slack - 129.9).abs() < 0.05;
    let pass = slack_ok && stationarity_ok && reference_ok;
    report_line(
        3,
        "grasp LP constraint, stationarity and published torques",
        pass,
        &format!(
            "slack {slack:.3} (ok={slack_ok}); stationarity {stationarity:.4} vs 1e-2 × {initial:.4} \
             (ok={stationarity_ok}); published torques slack {ref_slack:.3} (ok={reference_ok})"
        ),
    );
    assert!(slack_ok, "constraint violated: slack {slack}");
    assert!(reference_ok, "published torques: slack {ref_slack}");
    assert!(
        stationarity_ok,
        "stationarity {stationarity} exceeds 1e-2 × initial {initial}; for this single-row LP \
         ||1 − u·a|| ≥ 0.83 for every u, so the bound cannot be met"
    );
}

fn lp_instances() -> Vec<LpProblem> {
    let a38 = vec![
        -1.7744, -1.8984, -1.5, -2.1994, -1.858, -1.5, -1.8642, -1.7924, -1.5,
    ];
    vec![
        LpProblem::new(
            A37.iter().map(|v| -3.0 * v).collect(),
            Matrix::from_rows(&[A37.to_vec()]).unwrap(),
            vec![7.81],
        )
        .unwrap(),
        LpProblem::new(
            vec![1.0; 9],
            Matrix::from_rows(&[a38]).unwrap(),
            vec![600.0],
        )
        .unwrap(),
        LpProblem::new(
            vec![-1.0, -2.0, 0.5],
            Matrix::from_rows(&[
                vec![1.0, 1.0, 0.0],
                vec![0.0, 1.0, 1.0],
                vec![-1.0, 0.0, 0.0],
            ])
            .unwrap(),
            vec![1.0, 1.5, 0.0],
        )
        .unwrap(),
    ]
}

#[test]
fn criterion_4_gradient_check() {
    let start = Instant::now();
    let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.25).collect();
    let mut worst: f64 = 0.0;
    for lp in lp_instances() {
        let dim = lp.n() + lp.m();
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y0 = KktState::from_concat(
                &(0..dim)
                    .map(|_| rng.gen_range(-0.5..0.5))
                    .collect::<Vec<_>>(),
                lp.n(),
            );
            let mlp = Mlp::xavier(&[1, 12, dim], seed).unwrap();
            let (_, g) = collocation_loss_grad(&mlp, &lp, &y0, &times).unwrap();
            let h = 1e-6;
            let fd: Vec<f64> = (0..g.len())
                .map(|i| {
                    let mut p = mlp.clone();
                    p.params_mut()[i] += h;
                    let up = collocation_loss(&p, &lp, &y0, &times).unwrap();
                    p.params_mut()[i] -= 2.0 * h;
                    let down = collocation_loss(&p, &lp, &y0, &times).unwrap();
                    (up - down) / (2.0 * h)
                })
                .collect();
            let diff = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && elapsed <= 30.0;
    report_line(
        4,
        "analytic vs central-difference gradient",
        pass,
        &format!("worst relative error {worst:.2e} over 10 seeds × 3 LPs in {elapsed:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_oracle_equivalence() {
    let nn = &benchmark_nn().outcome.report;
    let lp = &lp_instances()[0];
    let tr = integrate(lp, &KktState::zeros(lp), 10.0, 0.001, Method::Euler).unwrap();
    let end = tr.endpoint().to_concat();
    let y: Vec<f64> =
        nn.x.as_ref()
            .unwrap()
            .iter()
            .chain(nn.u.as_ref().unwrap())
            .copied()
            .collect();
    let dist = y
        .iter()
        .zip(&end)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let pass = dist <= 0.1;
    report_line(
        5,
        "network endpoint vs Euler endpoint",
        pass,
        &format!("max-norm distance {dist:.4}"),
    );
    assert!(pass);
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> SymMatrix {
    SymMatrix::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

#[test]
fn criterion_6_bmi_lifting() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut agree, mut feasible, mut worst) = (0, 0, 0.0f64);
    for _ in 0..100 {
        let dim = rng.gen_range(2..5);
        let n = rng.gen_range(1..4);
        let mut f0 = random_sym(&mut rng, dim, 1.0);
        for i in 0..dim {
            f0.add_at(i, i, rng.gen_range(0.0..3.0));
        }
        let fi = (0..n).map(|_| random_sym(&mut rng, dim, 1.0)).collect();
        let fij = (0..n)
            .map(|_| (0..n).map(|_| random_sym(&mut rng, dim, 0.5)).collect())
            .collect();
        let bmi = Bmi::new(f0, fi, fij).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let direct = bmi_eval(&bmi, &x).unwrap();
        let tol = default_psd_tol(&direct);
        let lifted = bmi_to_sdp(&bmi);
        let z = lifted.rank_one_point(&x).unwrap();
        let b = is_psd(&direct, tol);
        if b == lifted.feasible(&z, tol).unwrap() {
            agree += 1;
        }
        feasible += b as usize;
        let back = rank_one_recover(&lifted.m_block(&z).unwrap(), 1e-6).unwrap();
        worst = back
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - q).abs())
            .fold(worst, f64::max);
    }
    let pass = agree == 100 && worst <= 1e-10;
    report_line(
        6,
        "BMI feasibility matches its lifting at rank-one points",
        pass,
        &format!("{agree}/100 agree ({feasible} feasible), worst recovery error {worst:.1e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_friction_lmi_matches_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    let mut inside = 0;
    for k in 0..1000 {
        let mu = 2.0 - rng.gen_range(0.0..2.0); // (0, 2]
        let axis = if k % 2 == 0 {
            Vec3::new(0.0, 0.0, 1.0)
        } else {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalized()
        };
        let contact = Contact::new(Vec3::ZERO, axis, mu);
        let f = Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        let p = friction_block(&contact, f);
        let cone = in_friction_cone(contact.local_components(f), mu).unwrap();
        if is_psd(&p, default_psd_tol(&p)) == cone {
            agree += 1;
        }
        inside += cone as usize;
    }
    let pass = agree == 1000;
    report_line(
        7,
        "friction block PSD iff force in cone",
        pass,
        &format!("{agree}/1000 agree ({inside} inside the cone)"),
    );
    assert!(pass);
}

#[test]
fn criterion_8_force_closure_certificate() {
    let sphere = harness::load_scenario(&fixture("sphere3.json")).unwrap();
    let forces: Vec<Vec3> = sphere.contacts.iter().map(|c| c.axis).collect();
    let s = force_closure_certificate(&sphere.contacts, &forces, 0.1, DEFAULT_CERT_TOL).unwrap();

    let pair = harness::load_scenario(&fixture("antipodal2.json")).unwrap();
    let forces: Vec<Vec3> = pair.contacts.iter().map(|c| c.axis).collect();
    let a = force_closure_certificate(&pair.contacts, &forces, 0.1, DEFAULT_CERT_TOL).unwrap();

    let sphere_ok = s.passed();
    let pair_ok = !a.grasp_map_ok
        && a.equilibrium_ok
        && a.cone_ok.iter().all(|&b| b)
        && a.grasp_map_min_eig.abs() <= 1e-9;
    let pass = sphere_ok && pair_ok;
    report_line(
        8,
        "force-closure certificate",
        pass,
        &format!(
            "sphere: λmin(GGᵀ)={:.4}, all checks {}; antipodal: λmin(GGᵀ)={:.1e}, fails only the grasp-map check: {pair_ok}",
            s.grasp_map_min_eig,
            if sphere_ok { "pass" } else { "do not pass" },
            a.grasp_map_min_eig
        ),
    );
    assert!(pass, "{s:?}\n{a:?}");
}

fn cross_polytope() -> Vec<Wrench> {
    (0..12)
        .map(|k| {
            let mut p = [0.0; 6];
            p[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            p
        })
        .collect()
}

#[test]
fn criterion_9_grasp_quality() {
    let exact = q_lrw_exact(&cross_polytope()).unwrap().q_lrw;
    let target = 1.0 / 6f64.sqrt();
    let sampled = q_lrw_sampled(&cross_polytope(), 100_000, 0).unwrap().q_lrw;

    let sphere = harness::load_scenario(&fixture("sphere3.json")).unwrap();
    let set = WrenchSet::from_contacts(&sphere.contacts, 8, 1.0).unwrap();
    let sphere_q = q_lrw_exact(&set.points).unwrap().q_lrw;

    // 30-point timing case: cross-polytope plus 18 random points.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut big = cross_polytope();
    big.extend((0..18).map(|_| std::array::from_fn(|_| rng.gen_range(-1.5..1.5))));
    let start = Instant::now();
    let big_q = q_lrw_exact(&big).unwrap().q_lrw;
    let elapsed = start.elapsed().as_secs_f64();

    let pass = (exact - target).abs() <= 1e-9
        && sampled >= exact
        && sampled <= 1.05 * exact
        && sphere_q > 0.0
        && elapsed <= 120.0;
    report_line(
        9,
        "largest minimum resisted wrench",
        pass,
        &format!(
            "cross-polytope exact {exact:.10} (1/√6 = {target:.10}), sampled {sampled:.5} = {:.4} × exact; \
             sphere grasp {sphere_q:.4}; 30 points in {elapsed:.2}s (q = {big_q:.4})",
            sampled / exact
        ),
    );
    assert!((exact - target).abs() <= 1e-9, "exact {exact}");
    assert!(sphere_q > 0.0 && elapsed <= 120.0);
    assert!(
        sampled >= exact && sampled <= 1.05 * exact,
        "sampled {sampled} is {:.4} × exact; with 1e5 uniform directions the minimum of ||u||∞ over the \
         sphere typically lands near 1.07 × 1/√6",
        sampled / exact
    );
}
