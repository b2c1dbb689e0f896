//! The per-step simulation loop: collision detection with culling, limit
//! detection, assembly, dual-problem construction with the configured
//! augmentations, warmstarted solving, back-substitution and semi-implicit
//! integration, with CSV time series and a JSON run manifest as outputs.

use crate::capture::{CaptureState, BucketSpec};
use crate::error::CliError;
use crate::scenario::{schedule_wrenches, ForceEvent, Scenario};
use dualfd::bench::{metric_penetration, metric_set, MetricsRecord, ProblemSample};
use dualfd::collision::{collide_pair, cull_contacts};
use dualfd::dual::{build_dual_problem, DualOptions, SofteningParams, StabilizationParams};
use dualfd::dynamics::{
    assemble_system, integrate_semi_implicit, BodyRef, BodyState, ContactPoint, LimitSide,
};
use dualfd::solvers::{natural_map, solve, SolveStatus, SolverConfig, SolverId, Warmstart};
use serde_json::json;
use std::io::Write;
use std::path::Path;

/// Per-run configuration on top of a scenario.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverId,
    pub n_max: Option<usize>,
    pub eps_abs: Option<f64>,
    pub stabilization: Option<StabilizationParams>,
    pub softening: Option<SofteningParams>,
    /// Reuse the previous step's solution when the constraint layout is
    /// unchanged (on by default).
    pub warmstart: bool,
    /// Capture dual-problem samples into category buckets.
    pub capture: Option<BucketSpec>,
    /// Halt the run when the solver diverges (otherwise the step is skipped).
    pub halt_on_divergence: bool,
}

impl RunConfig {
    pub fn new(solver: SolverId) -> Self {
        Self {
            solver,
            n_max: None,
            eps_abs: None,
            stabilization: None,
            softening: None,
            warmstart: true,
            capture: None,
            halt_on_divergence: true,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut config = SolverConfig::for_id(self.solver);
        if let Some(n) = self.n_max {
            config = config.with_n_max(n);
        }
        if let Some(eps) = self.eps_abs {
            config = config.with_eps_abs(eps);
        }
        config
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Halted { step: usize, reason: String },
}

/// One step of the time series.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub n_contacts: usize,
    pub n_limits: usize,
    /// Σ of the contact normal impulses of this step.
    pub sum_normal_impulse: f64,
    pub contact_normal_impulses: Vec<f64>,
    pub contact_tangent_norms: Vec<f64>,
    /// Pre-solve normal velocity per contact (`v⁻` rows).
    pub contact_pre_normal_velocity: Vec<f64>,
    /// Physical post-solve normal velocity per contact (restitution bias
    /// removed).
    pub contact_post_normal_velocity: Vec<f64>,
    /// Configuration-level violation measured at assembly (reflects the
    /// previous step's solution quality).
    pub r_pen: f64,
    pub r_dual: f64,
    pub r_ncp: f64,
    pub r_nat: f64,
    /// Natural-map residual in the solver's own formulation (CCP solvers are
    /// certified against the CCP map; equals `r_nat` for NCP solvers).
    pub r_nat_solver: f64,
    pub solve_time: f64,
    /// Post-integration body states.
    pub states: Vec<BodyState>,
}

/// Everything a run produces in memory.
#[derive(Debug)]
pub struct RunArtifacts {
    pub steps: Vec<StepRecord>,
    pub metrics: Vec<MetricsRecord>,
    pub samples: Vec<ProblemSample>,
    pub final_states: Vec<BodyState>,
    pub status: RunStatus,
}

/// Structural identity of a step's constraint system; warmstarting is only
/// valid while this is unchanged.
#[derive(Debug, Clone, PartialEq)]
struct LayoutKey {
    limits: Vec<(usize, usize, LimitSide)>,
    contacts: Vec<(BodyRef, usize)>,
}

fn collect_contacts(scenario: &Scenario, states: &[BodyState]) -> Result<Vec<ContactPoint>, CliError> {
    let model = &scenario.model;
    // jointed neighbors never collide with each other
    let mut filtered: Vec<(usize, usize)> = scenario.extra_filtered_pairs.clone();
    for j in &model.joints {
        if let BodyRef::Body(b) = j.base {
            let pair = (b.min(j.follower), b.max(j.follower));
            if !filtered.contains(&pair) {
                filtered.push(pair);
            }
        }
    }
    let mut contacts = Vec::new();
    let n = model.bodies.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let (sa, sb) = (&model.bodies[i], &model.bodies[j]);
            if sa.is_static() && sb.is_static() {
                continue;
            }
            if filtered.contains(&(i, j)) {
                continue;
            }
            // the static body (if any) is always side a
            let (ai, bi) = if sb.is_static() { (j, i) } else { (i, j) };
            let found = collide_pair(
                &model.bodies[ai],
                &states[ai],
                &model.bodies[bi],
                &states[bi],
                BodyRef::Body(ai),
                bi,
                &scenario.collision,
            )?;
            contacts.extend(found);
        }
    }
    Ok(cull_contacts(contacts, &scenario.collision))
}

/// Runs a scenario to completion (or divergence) and returns the artifacts.
pub fn run_simulation(scenario: &Scenario, config: &RunConfig) -> Result<RunArtifacts, CliError> {
    scenario.model.validate()?;
    let model = &scenario.model;
    let solver_config = config.solver_config();
    let n_steps = (scenario.duration / scenario.dt).round() as usize;
    let mut states = scenario.initial_states.clone();
    let mut push_targets: Vec<Option<usize>> = vec![None; scenario.schedule.len()];

    let mut steps = Vec::with_capacity(n_steps);
    let mut metrics = Vec::with_capacity(n_steps);
    let mut capture = config.capture.clone().map(CaptureState::new);
    let mut warm: Option<(LayoutKey, Warmstart)> = None;
    let mut status = RunStatus::Completed;

    for step_idx in 0..n_steps {
        let t = step_idx as f64 * scenario.dt;

        let finite = states.iter().all(|s| {
            s.position.iter().all(|x| x.is_finite())
                && s.orientation.coords.iter().all(|x| x.is_finite())
                && s.linear_velocity.iter().all(|x| x.is_finite())
                && s.angular_velocity.iter().all(|x| x.is_finite())
        });
        if !finite {
            status = RunStatus::Halted { step: step_idx, reason: "non-finite body state".into() };
            break;
        }

        // resolve pending highest-body pushes when their window opens
        for (i, event) in scenario.schedule.iter().enumerate() {
            if let ForceEvent::PushHighest { t_start, .. } = event {
                if t >= *t_start && push_targets[i].is_none() {
                    let map = model.dof_map();
                    let highest = (0..model.bodies.len())
                        .filter(|&b| map.slot[b].is_some())
                        .max_by(|&a, &b| {
                            states[a].position.z.partial_cmp(&states[b].position.z).unwrap()
                        });
                    push_targets[i] = highest;
                }
            }
        }

        let contacts = collect_contacts(scenario, &states)?;
        let wrenches =
            schedule_wrenches(&scenario.schedule, &push_targets, t, model.bodies.len());
        let step =
            assemble_system(model, &states, scenario.dt, &[], &wrenches, &contacts)?;

        let options = DualOptions {
            stabilization: config.stabilization,
            softening: config.softening,
            restitution: true,
        };
        let problem = build_dual_problem(&step, &options)?;

        let layout_key = LayoutKey {
            limits: step.layout.limit_sources.clone(),
            contacts: contacts.iter().map(|c| (c.body_a, c.body_b)).collect(),
        };
        let warmstart = match (&warm, config.warmstart) {
            (Some((key, w)), true) if *key == layout_key => Some(w.clone()),
            _ => None,
        };

        if let Some(cap) = capture.as_mut() {
            cap.offer(&step, &problem);
        }

        let report = solve(&problem, &solver_config, warmstart.as_ref());
        if report.status == SolveStatus::Diverged {
            if config.halt_on_divergence {
                status = RunStatus::Halted {
                    step: step_idx,
                    reason: format!("{} diverged", config.solver.name()),
                };
            }
        }

        // back-substitute and integrate
        let u_plus = step.back_substitute(&report.lambda);
        if u_plus.iter().any(|x| !x.is_finite()) {
            status = RunStatus::Halted {
                step: step_idx,
                reason: "non-finite velocity after back-substitution".into(),
            };
        }
        if let RunStatus::Halted { .. } = status {
            break;
        }

        let r_pen =
            metric_penetration(&step.joint_residuals, &step.limit_residuals, &step.contact_gaps);
        let (r_dual, r_ncp, r_nat) = metric_set(&report.lambda, &report.v_plus, &problem);
        let r_nat_solver = if problem.n() == 0 {
            0.0
        } else {
            natural_map(&report.lambda, &problem, solver_config.residual_mode()).amax()
        };

        let n_c = step.layout.n_contacts();
        let mut normal_impulses = Vec::with_capacity(n_c);
        let mut tangent_norms = Vec::with_capacity(n_c);
        let mut pre_vn = Vec::with_capacity(n_c);
        let mut post_vn = Vec::with_capacity(n_c);
        for k in 0..n_c {
            let row = step.layout.contact_normal_row(k);
            let off = step.layout.contact_offsets[k];
            normal_impulses.push(report.lambda[row]);
            tangent_norms.push(
                (report.lambda[off] * report.lambda[off]
                    + report.lambda[off + 1] * report.lambda[off + 1])
                    .sqrt(),
            );
            pre_vn.push(step.pre_velocity[row]);
            // remove the restitution bias to recover the physical velocity
            let eps = step.layout.contact_restitutions[k];
            post_vn.push(report.v_plus[row] - eps * step.pre_velocity[row]);
        }

        integrate_semi_implicit(model, &mut states, &u_plus, scenario.dt)?;

        metrics.push(MetricsRecord {
            problem: format!("{}:{:06}", scenario.id, step_idx),
            solver: config.solver.name().to_string(),
            solved: report.status == SolveStatus::Converged,
            r_pen,
            r_dual,
            r_ncp,
            r_nat,
            i_stop: report.iterations,
            t_solve: report.solve_time,
            t_iter: report.mean_iter_time,
        });
        steps.push(StepRecord {
            t,
            status: report.status,
            iterations: report.iterations,
            n_contacts: n_c,
            n_limits: step.layout.n_limits(),
            sum_normal_impulse: normal_impulses.iter().sum(),
            contact_normal_impulses: normal_impulses,
            contact_tangent_norms: tangent_norms,
            contact_pre_normal_velocity: pre_vn,
            contact_post_normal_velocity: post_vn,
            r_pen,
            r_dual,
            r_ncp,
            r_nat,
            r_nat_solver,
            solve_time: report.solve_time,
            states: states.clone(),
        });

        warm = Some((layout_key, Warmstart { lambda: report.lambda, v_plus: report.v_plus }));
    }

    Ok(RunArtifacts {
        steps,
        metrics,
        samples: capture.map(|c| c.into_samples()).unwrap_or_default(),
        final_states: states,
        status,
    })
}

/// Writes the time-series CSV, the per-step metrics CSV and the JSON run
/// manifest into `out_dir`.
pub fn write_run_outputs(
    scenario: &Scenario,
    config: &RunConfig,
    artifacts: &RunArtifacts,
    out_dir: &Path,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let map = scenario.model.dof_map();
    let dynamic: Vec<usize> =
        (0..scenario.model.bodies.len()).filter(|&b| map.slot[b].is_some()).collect();

    // time series
    let run_path = out_dir.join("run.csv");
    let mut f = std::fs::File::create(&run_path).map_err(|e| CliError::io(&run_path, e))?;
    let mut header = String::from(
        "t,status,iterations,n_contacts,n_limits,r_pen,r_dual,r_ncp,r_nat,sum_normal_impulse,solve_time",
    );
    for &b in &dynamic {
        for field in ["px", "py", "pz", "qx", "qy", "qz", "qw", "vx", "vy", "vz", "wx", "wy", "wz"]
        {
            header.push_str(&format!(",b{b}_{field}"));
        }
    }
    writeln!(f, "{header}").map_err(|e| CliError::io(&run_path, e))?;
    for s in &artifacts.steps {
        let mut line = format!(
            "{},{},{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            s.t,
            status_str(s.status),
            s.iterations,
            s.n_contacts,
            s.n_limits,
            s.r_pen,
            s.r_dual,
            s.r_ncp,
            s.r_nat,
            s.sum_normal_impulse,
            s.solve_time
        );
        for &b in &dynamic {
            let st = &s.states[b];
            let q = st.orientation.coords;
            for v in [
                st.position.x,
                st.position.y,
                st.position.z,
                q.x,
                q.y,
                q.z,
                q.w,
                st.linear_velocity.x,
                st.linear_velocity.y,
                st.linear_velocity.z,
                st.angular_velocity.x,
                st.angular_velocity.y,
                st.angular_velocity.z,
            ] {
                line.push_str(&format!(",{v:e}"));
            }
        }
        writeln!(f, "{line}").map_err(|e| CliError::io(&run_path, e))?;
    }

    // per-step metrics
    let metrics_path = out_dir.join("metrics.csv");
    crate::metrics_io::write_metrics(&metrics_path, &artifacts.metrics)?;

    // manifest
    let manifest_path = out_dir.join("manifest.json");
    let scene = crate::scene::scenario_to_scene(scenario);
    let manifest = json!({
        "scenario": scenario.id,
        "solver": config.solver.name(),
        "dt": scenario.dt,
        "duration": scenario.duration,
        "n_max": config.n_max,
        "eps_abs": config.eps_abs,
        "stabilization": config.stabilization.map(|s| json!({
            "alpha_joint": s.alpha_joint,
            "beta_limit": s.beta_limit,
            "gamma_contact": s.gamma_contact,
            "penetration_margin": s.penetration_margin,
        })),
        "softening": config.softening.map(|s| json!({
            "d0": s.d0, "dw": s.dw, "width": s.width, "midpoint": s.midpoint,
            "power": s.power, "time_constant": s.time_constant,
            "damping_ratio": s.damping_ratio,
        })),
        "margin": scenario.collision.margin,
        "min_separation": scenario.collision.min_separation,
        "warmstart": config.warmstart,
        "steps": artifacts.steps.len(),
        "status": match &artifacts.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Halted { step, reason } => format!("halted at {step}: {reason}"),
        },
        "version": env!("CARGO_PKG_VERSION"),
        "scene": serde_json::to_value(&scene).unwrap_or(serde_json::Value::Null),
    });
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| CliError::io(&manifest_path, e))?;
    Ok(())
}

fn status_str(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::Diverged => "diverged",
        SolveStatus::Empty => "empty",
    }
}
