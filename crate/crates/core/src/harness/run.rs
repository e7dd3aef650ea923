//! Command-line interface and experiment orchestration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::io::{self, LoadedLp};
use super::{HarnessError, EXIT_INFEASIBLE, EXIT_OK};
use crate::grasp::{
    force_closure_certificate, lmi_feasibility, scenario_to_lp, ForceClosureReport, LpObjective,
};
use crate::kkt::{integrate, kkt_residual, KktResidual, KktState, LpProblem, Method};
use crate::linalg::{default_psd_tol, is_psd, norm_inf};
use crate::lmi::{bmi_eval, bmi_to_sdp, lmi_eval, rank_one_recover, DEFAULT_RANK_TOL};
use crate::neural::{ansatz, solve_lp_nn, Optimizer, TrainConfig};
use crate::quality::{q_lrw_exact, q_lrw_sampled, QualityReport, WrenchSet, DEFAULT_EDGES};

/// Relative slack allowed on linear and matrix constraints when judging an
/// approximate solution: `tol = FEASIBILITY_TOL · (1 + scale)`.
pub const FEASIBILITY_TOL: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "gfo", version, about = "Grasp force optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for report.json and CSV outputs.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve an LP file (or a scenario's LP) with the neural or ODE solver.
    SolveLp(SolveArgs),
    /// Solve the LP extracted from a grasp scenario and check its constraints.
    SolveGrasp(SolveArgs),
    /// Grasp quality of a scenario's discretized wrench space.
    Quality(QualityArgs),
    /// Force-closure certificate for a scenario.
    Certify(ScenarioArgs),
    /// Lift a BMI, evaluate both forms at a point and recover it.
    LiftBmi(InputArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Nn,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Lbfgs,
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QualityMethodArg {
    Exact,
    Sampled,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, visible_alias = "scenario")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SolverKind::Nn)]
    pub solver: SolverKind,
    #[arg(long, env = "GFO_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    /// Collocation spacing (nn, default 0.01) or step size (ode, default 0.001).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Lbfgs)]
    pub optimizer: OptimizerArg,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Euler)]
    pub integrator: IntegratorArg,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    #[arg(long, visible_alias = "input")]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EDGES)]
    pub edges: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value_t = QualityMethodArg::Exact)]
    pub method: QualityMethodArg,
    #[arg(long, default_value_t = 100_000)]
    pub dirs: usize,
    #[arg(long, env = "GFO_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, visible_alias = "input")]
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
}

/// Checks of a BMI point against its lifting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftSummary {
    pub original_vars: usize,
    pub lifted_vars: usize,
    pub bmi_min_eig: f64,
    pub bmi_feasible: bool,
    pub lifted_feasible: bool,
    pub recovered_x: Vec<f64>,
    pub recovery_error: f64,
}

/// Constraint slacks of a published solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub slacks: Vec<f64>,
    pub feasible: bool,
}

/// Everything a run reports. Feasibility flags are recomputed from the
/// returned solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub id: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<KktResidual>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_residuals: Option<KktResidual>,
    pub feasibility: BTreeMap<String, bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_lrw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<ForceClosureReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_first: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_last: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl RunReport {
    fn new(id: String, command: &str) -> Self {
        Self {
            id,
            command: command.into(),
            solver: None,
            x: None,
            u: None,
            objective: None,
            residuals: None,
            initial_residuals: None,
            feasibility: BTreeMap::new(),
            q_lrw: None,
            quality: None,
            certificate: None,
            lift: None,
            reference: None,
            loss_first: None,
            loss_last: None,
            wall_clock_seconds: 0.0,
        }
    }

    pub fn all_feasible(&self) -> bool {
        self.feasibility.values().all(|&ok| ok)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

struct Solved {
    x: Vec<f64>,
    u: Vec<f64>,
    loss: Option<Vec<f64>>,
    trajectory: Vec<(f64, Vec<f64>)>,
}

fn solve(lp: &LpProblem, args: &SolveArgs) -> crate::Result<Solved> {
    let y0 = KktState::zeros(lp);
    match args.solver {
        SolverKind::Nn => {
            let config = TrainConfig {
                t_end: args.t_end,
                dt: args.dt.unwrap_or(0.01),
                epochs: args.epochs,
                learning_rate: args.lr,
                seed: args.seed,
                hidden_sizes: vec![args.hidden],
                optimizer: match args.optimizer {
                    OptimizerArg::Lbfgs => Optimizer::Lbfgs,
                    OptimizerArg::Adam => Optimizer::Adam,
                    OptimizerArg::Sgd => Optimizer::Sgd,
                },
                ..TrainConfig::default()
            };
            let sol = solve_lp_nn(lp, &config)?;
            let trajectory = config
                .collocation_times()
                .into_iter()
                .map(|t| Ok((t, ansatz(&sol.mlp, t, &y0)?.to_concat())))
                .collect::<crate::Result<_>>()?;
            Ok(Solved {
                x: sol.x,
                u: sol.u,
                loss: Some(sol.loss_history.0),
                trajectory,
            })
        }
        SolverKind::Ode => {
            let method = match args.integrator {
                IntegratorArg::Euler => Method::Euler,
                IntegratorArg::Rk4 => Method::Rk4,
            };
            let tr = integrate(lp, &y0, args.t_end, args.dt.unwrap_or(0.001), method)?;
            let end = tr.endpoint().clone();
            Ok(Solved {
                x: end.x,
                u: end.u,
                loss: None,
                trajectory: io::ode_trajectory_points(&tr),
            })
        }
    }
}

/// Per-row tolerance `FEASIBILITY_TOL · (1 + |b_i|)`.
fn rows_feasible(lp: &LpProblem, x: &[f64]) -> (Vec<f64>, bool) {
    let slacks: Vec<f64> = lp.constraint_values(x).iter().map(|v| -v).collect();
    let ok = slacks
        .iter()
        .zip(lp.b())
        .all(|(s, b)| *s >= -FEASIBILITY_TOL * (1.0 + b.abs()));
    (slacks, ok)
}

fn write(
    out: &Path,
    name: &str,
    contents: &str,
    files: &mut Vec<PathBuf>,
) -> Result<(), HarnessError> {
    let path = out.join(name);
    std::fs::write(&path, contents).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    files.push(path);
    Ok(())
}

fn run_solve(
    cmd: &str,
    args: &SolveArgs,
    out: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<RunReport, HarnessError> {
    let (loaded, scenario) = if cmd == "solve-grasp" {
        let file = io::load_scenario_file(&args.input)?;
        let lp = scenario_to_lp(&file.scenario, &LpObjective::SumOfVariables)?;
        let id = file.id.clone().unwrap_or_else(|| stem(&args.input));
        (
            LoadedLp {
                id,
                lp,
                reference_solution: file.reference_solution.clone(),
            },
            Some(file.scenario),
        )
    } else {
        (io::load_lp(&args.input)?, None)
    };
    let lp = &loaded.lp;
    let mut report = RunReport::new(loaded.id.clone(), cmd);
    report.solver = Some(match args.solver {
        SolverKind::Nn => "nn".into(),
        SolverKind::Ode => "ode-oracle".into(),
    });

    let solved = solve(lp, args)?;
    let zeros = KktState::zeros(lp);
    report.initial_residuals = Some(kkt_residual(lp, &zeros.x, &zeros.u)?);
    report.residuals = Some(kkt_residual(lp, &solved.x, &solved.u)?);
    report.objective = Some(lp.objective(&solved.x));

    let (_, rows_ok) = rows_feasible(lp, &solved.x);
    report.feasibility.insert("linear".into(), rows_ok);
    if let Some(s) = &scenario {
        let scale = 1.0 + norm_inf(&solved.x);
        let checks = lmi_feasibility(s, &solved.x, FEASIBILITY_TOL * scale)?;
        if !s.contacts.is_empty() {
            report.feasibility.insert("cone".into(), checks.cone);
        }
        if s.joints() > 0 {
            report.feasibility.insert("torque".into(), checks.torque);
        }
        if !s.contacts.is_empty() || s.joints() > 0 {
            report.feasibility.insert("lmi".into(), checks.combined);
        }
    }
    if let Some(reference) = &loaded.reference_solution {
        if reference.len() != lp.n() {
            return Err(crate::Error::Dimension(format!(
                "reference_solution has {} entries, expected {}",
                reference.len(),
                lp.n()
            ))
            .into());
        }
        let (slacks, feasible) = rows_feasible(lp, reference);
        report.reference = Some(ReferenceCheck { slacks, feasible });
    }

    if let Some(loss) = &solved.loss {
        report.loss_first = loss.first().copied();
        report.loss_last = loss.last().copied();
        write(out, "loss.csv", &io::loss_csv(loss), files)?;
    }
    write(
        out,
        "trajectory.csv",
        &io::trajectory_csv(&solved.trajectory),
        files,
    )?;
    report.x = Some(solved.x);
    report.u = Some(solved.u);
    Ok(report)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn run_quality(
    args: &QualityArgs,
    out: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<RunReport, HarnessError> {
    let file = io::load_scenario_file(&args.scenario)?;
    let mut report = RunReport::new(
        file.id.clone().unwrap_or_else(|| stem(&args.scenario)),
        "quality",
    );
    let set = WrenchSet::from_contacts(&file.scenario.contacts, args.edges, args.lambda)?;
    let q = match args.method {
        QualityMethodArg::Exact => q_lrw_exact(&set.points)?,
        QualityMethodArg::Sampled => q_lrw_sampled(&set.points, args.dirs, args.seed)?,
    };
    write(out, "wrenches.csv", &io::wrench_csv(&set.points), files)?;
    report
        .feasibility
        .insert("force_closure".into(), q.contains_origin && q.q_lrw > 0.0);
    report.q_lrw = Some(q.q_lrw);
    report.quality = Some(q);
    Ok(report)
}

fn run_certify(args: &ScenarioArgs) -> Result<RunReport, HarnessError> {
    let file = io::load_scenario_file(&args.scenario)?;
    let mut report = RunReport::new(
        file.id.clone().unwrap_or_else(|| stem(&args.scenario)),
        "certify",
    );
    let contacts = &file.scenario.contacts;
    let forces = file
        .forces
        .clone()
        .unwrap_or_else(|| contacts.iter().map(|c| c.axis).collect());
    let cert = force_closure_certificate(
        contacts,
        &forces,
        file.scenario.epsilon,
        crate::grasp::DEFAULT_CERT_TOL,
    )?;
    report
        .feasibility
        .insert("grasp_map".into(), cert.grasp_map_ok);
    report
        .feasibility
        .insert("equilibrium".into(), cert.equilibrium_ok);
    report
        .feasibility
        .insert("cone".into(), cert.cone_ok.iter().all(|&b| b));
    report.certificate = Some(cert);
    Ok(report)
}

fn run_lift(args: &InputArgs) -> Result<RunReport, HarnessError> {
    let file = io::load_bmi(&args.input)?;
    let mut report = RunReport::new(
        file.id.clone().unwrap_or_else(|| stem(&args.input)),
        "lift-bmi",
    );
    let bmi = file.to_bmi().map_err(|e| HarnessError::Invalid {
        path: args.input.clone(),
        source: e,
    })?;
    let lifted = bmi_to_sdp(&bmi);
    let direct = bmi_eval(&bmi, &file.x)?;
    let z = lifted.rank_one_point(&file.x)?;
    let tol = default_psd_tol(&direct);
    let bmi_feasible = is_psd(&direct, tol);
    let lifted_feasible =
        is_psd(&lmi_eval(lifted.base(), &z)?, tol) && is_psd(&lifted.m_block(&z)?, tol);
    let recovered_x = rank_one_recover(&lifted.m_block(&z)?, DEFAULT_RANK_TOL)?;
    let recovery_error = recovered_x
        .iter()
        .zip(&file.x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    report.feasibility.insert("bmi".into(), bmi_feasible);
    report.feasibility.insert("lifted".into(), lifted_feasible);
    report.x = Some(file.x.clone());
    report.lift = Some(LiftSummary {
        original_vars: lifted.original_vars(),
        lifted_vars: lifted.var_count(),
        bmi_min_eig: crate::linalg::min_eigval(&direct)?.unwrap_or(0.0),
        bmi_feasible,
        lifted_feasible,
        recovered_x,
        recovery_error,
    });
    Ok(report)
}

/// Runs one command, writing `report.json` and any CSV outputs under
/// `cli.out`.
pub fn run(cli: &Cli) -> Result<RunOutcome, HarnessError> {
    let start = Instant::now();
    std::fs::create_dir_all(&cli.out).map_err(|source| HarnessError::Io {
        path: cli.out.clone(),
        source,
    })?;
    let mut files = Vec::new();
    let mut report = match &cli.command {
        Command::SolveLp(args) => run_solve("solve-lp", args, &cli.out, &mut files)?,
        Command::SolveGrasp(args) => run_solve("solve-grasp", args, &cli.out, &mut files)?,
        Command::Quality(args) => run_quality(args, &cli.out, &mut files)?,
        Command::Certify(args) => run_certify(args)?,
        Command::LiftBmi(args) => run_lift(args)?,
    };
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
    write(&cli.out, "report.json", &(json + "\n"), &mut files)?;
    let exit_code = if report.all_feasible() {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    };
    Ok(RunOutcome {
        report,
        exit_code,
        files,
    })
}
