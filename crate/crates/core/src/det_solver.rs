//! Deterministic Arrow-Hurwicz solver with an augmented-Lagrangian terminal
//! constraint.
//!
//! One engine serves three problems on the same discretization:
//!
//! * the nominal mission: minimize fuel subject to hitting the target,
//! * the recourse problem: same objective, started mid-mission after an
//!   engine outage (control forced to zero during the outage),
//! * the projection problem: closest admissible target-hitting control to a
//!   given half-step control (used by the stochastic outer loop).
//!
//! Each iteration integrates the state forward, pulls the transversality
//! costate backward (element rows upsilon + c*delta, mass row -1 for fuel
//! problems, 0 for projections), steps the control against the Hamiltonian
//! gradient with a pointwise unit-ball projection, and runs a dual ascent
//! step on upsilon. Termination is a stall test on the deviation norm; a
//! stalled nonzero deviation with growing multipliers signals an unreachable
//! target (closest-approach solution).

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    target_deviation, ControlVec, DynamicsError, Mat6, MissionSpec, SatState, Vec3, Vec6, Vec7,
};
use crate::failures::FailureScenario;
use crate::propagation::{
    backward_sweep, constraint_sensitivity_gram, flow_nodes,
    ControlTrajectory, StateTrajectory, TimeGrid,
};

/// Diminishing step rule alpha/(beta + k). With beta large relative to the
/// iteration budget this is effectively a constant step alpha/beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub alpha: f64,
    pub beta: f64,
}

impl StepRule {
    pub fn at(&self, k: usize) -> f64 {
        self.alpha / (self.beta + k as f64)
    }
}

/// Parameters of the augmented-Lagrangian Arrow-Hurwicz iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugLagParams {
    /// Augmentation weight on the terminal constraint.
    pub c: f64,
    pub max_iters: usize,
    /// Deviations at or below this norm count as hitting the target.
    pub tol_target: f64,
    /// The deviation norm has stalled when its variation over the stall
    /// window drops below this.
    pub tol_stall: f64,
    pub stall_window: usize,
    /// Control update step schedule.
    pub eps_u: StepRule,
    /// Multiplier (dual ascent) step schedule, used by the fuel solves.
    pub eps_upsilon: StepRule,
    /// Projection solves take this fraction of the Newton dual step
    /// (G^-1 + c I) delta, with G the control-authority Gram matrix; plain
    /// ascent stalls there in weakly actuated element directions.
    pub dual_newton_frac: f64,
    /// Budget for the primal polish pass run after a fuel solve converges;
    /// 0 disables it. Costate gradients read off the solution are sensitive
    /// to unsettled switch-boundary intervals, so solves feeding gradient
    /// consumers keep a generous budget while throwaway solves can skip it.
    pub polish_iters: usize,
}

impl Default for AugLagParams {
    fn default() -> Self {
        // Near-constant steps: beta dwarfs the typical iteration count, so
        // the decay only damps late-stage jitter.
        AugLagParams {
            c: 10.0,
            max_iters: 60_000,
            tol_target: 1e-5,
            tol_stall: 1e-6,
            stall_window: 200,
            eps_u: StepRule { alpha: 5_000.0, beta: 50_000.0 },
            eps_upsilon: StepRule { alpha: 100_000.0, beta: 50_000.0 },
            dual_newton_frac: 0.05,
            polish_iters: 4000,
        }
    }
}

impl AugLagParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c > 0.0) {
            return Err(format!("augmentation weight c = {} must be positive", self.c));
        }
        if !(self.tol_target > 0.0 && self.tol_stall > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.stall_window < 2 {
            return Err("stall window must cover at least 2 iterations".into());
        }
        if !(self.dual_newton_frac > 0.0 && self.dual_newton_frac <= 1.0) {
            return Err(format!(
                "dual Newton fraction {} must lie in (0, 1]",
                self.dual_newton_frac
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Deviation stalled at or below tol_target.
    ConvergedHit,
    /// Deviation stalled at a nonzero closest approach while the multipliers
    /// kept growing: target unreachable from this state.
    ConvergedMissed,
    /// No stall within the iteration budget.
    Diverged,
}

/// One iteration of the convergence history.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord {
    pub iter: usize,
    pub delta_norm: f64,
    pub consumption: f64,
    pub al_value: f64,
    /// L2 density norm of the control update applied this iteration.
    pub move_l2: f64,
    pub upsilon: [f64; 6],
}

/// Output of a deterministic solve (nominal, recourse, or projection).
#[derive(Debug, Clone)]
pub struct DetSolution {
    pub u_star: ControlTrajectory,
    pub x_star: StateTrajectory,
    /// Fuel consumed from mission start: x_i mass minus final mass.
    pub consumption: f64,
    pub upsilon: Vec6,
    pub delta: Vec6,
    pub status: SolveStatus,
    pub iters: usize,
    /// Per-iteration records; filled only when requested.
    pub history: Vec<IterRecord>,
}

impl DetSolution {
    pub fn delta_norm(&self) -> f64 {
        self.delta.norm()
    }
}

enum CostMode<'a> {
    /// Minimize fuel: terminal mass costate -1.
    Consumption,
    /// Minimize 1/2 * integral ||u - u_ref||^2 dt: terminal mass costate 0.
    Tracking { u_ref: &'a [ControlVec] },
}

struct EngineSetup<'a> {
    spec: &'a MissionSpec,
    params: &'a AugLagParams,
    /// First optimized interval; the horizon is [node j0, final node].
    j0: usize,
    x0: SatState,
    mode: CostMode<'a>,
    record_history: bool,
}

/// Deviation band (in units of tol_target) inside which a stalled
/// non-hitting iterate is left to keep refining instead of being declared a
/// miss; real closest-approach misses sit far outside it.
const MISS_BAND: f64 = 10.0;

/// Projection solves exit once the control has stopped moving for this many
/// consecutive iterations (with the target hit); this pins the numerical
/// projection tightly enough to be idempotent.
const TRACK_SETTLE_STREAK: usize = 20;

/// Per-iteration movement (L2 density norm) counted as "stopped" for the
/// tracking settle rule, as a fraction of tol_stall.
const TRACK_SETTLE_FACTOR: f64 = 1e-3;

/// Iterations between refreshes of the control-authority Gram matrix used to
/// precondition the projection dual step; it varies slowly with the control.
const GRAM_REFRESH: usize = 250;

/// Movement (L2 per sqrt-time) below which the polish pass stops.
const POLISH_EXIT: f64 = 1e-13;

fn run_engine(
    setup: &EngineSetup,
    u: &mut ControlTrajectory,
    upsilon0: Vec6,
) -> Result<DetSolution, DynamicsError> {
    let spec = setup.spec;
    let params = setup.params;
    let grid = *u.grid();
    let n = grid.n_steps();
    let j0 = setup.j0;
    let h = grid.h();
    let w = params.stall_window;

    let mut upsilon = upsilon0;
    let mut grad: Vec<Vec3> = Vec::new();
    let mut kink: Vec<f64> = Vec::new();
    let mut dn_hist: Vec<f64> = Vec::new();
    let mut ups_hist: Vec<f64> = Vec::new();
    let mut history: Vec<IterRecord> = Vec::new();

    let mut xtraj = flow_nodes(&setup.x0, u, j0, n, spec)?;
    let mut status = SolveStatus::Diverged;
    let mut iters = 0;
    let mut settle_streak = 0usize;
    let mut last_move = 0.0f64;
    let mut dual_mat: Option<Mat6> = None;
    let mut gram_age = GRAM_REFRESH;
    let tracking = matches!(setup.mode, CostMode::Tracking { .. });

    for k in 0..params.max_iters {
        let xf = *xtraj.final_state();
        let delta = target_deviation(&xf, spec);
        let dn = delta.norm();
        let consumption = spec.x_i.m - xf.m;

        let cost = match setup.mode {
            CostMode::Consumption => consumption,
            CostMode::Tracking { u_ref } => {
                0.5 * h
                    * u.values()[j0..]
                        .iter()
                        .zip(&u_ref[j0..])
                        .map(|(a, b)| (a.to_vec3() - b.to_vec3()).norm_squared())
                        .sum::<f64>()
            }
        };
        let al_value = cost + upsilon.dot(&delta) + 0.5 * params.c * dn * dn;

        if setup.record_history {
            history.push(IterRecord {
                iter: k,
                delta_norm: dn,
                consumption,
                al_value,
                move_l2: last_move,
                upsilon: upsilon.into(),
            });
        }
        dn_hist.push(dn);
        ups_hist.push(upsilon.norm());
        iters = k + 1;

        // Projection solves converge in the control long after the deviation
        // is small; exit once both have settled.
        if tracking && dn <= params.tol_target && settle_streak >= TRACK_SETTLE_STREAK {
            status = SolveStatus::ConvergedHit;
            break;
        }

        // Stall test over the trailing window.
        if k + 1 >= w {
            let win = &dn_hist[k + 1 - w..];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in win {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            if hi - lo < params.tol_stall {
                if !tracking && dn <= params.tol_target {
                    status = SolveStatus::ConvergedHit;
                    break;
                }
                if dn > MISS_BAND * params.tol_target {
                    // Unreachable target shows up as a stalled deviation fed
                    // into ever-growing multipliers.
                    let ups_growth = ups_hist[k] - ups_hist[k + 1 - w];
                    let eps_sum: f64 = if dual_mat.is_some() {
                        w as f64 * params.dual_newton_frac * params.c
                    } else {
                        (k + 1 - w..=k).map(|i| params.eps_upsilon.at(i)).sum()
                    };
                    if ups_growth > (0.05 * eps_sum * dn).max(1e-12) {
                        status = SolveStatus::ConvergedMissed;
                        break;
                    }
                }
            }
        }

        // Transversality: element rows upsilon + c*delta; mass row fixed by
        // the cost mode (-1 for fuel, 0 for tracking).
        let mut lambda_f = Vec7::zeros();
        for i in 0..6 {
            lambda_f[i] = upsilon[i] + params.c * delta[i];
        }
        lambda_f[6] = match setup.mode {
            CostMode::Consumption => -1.0,
            CostMode::Tracking { .. } => 0.0,
        };
        debug_assert!(matches!(setup.mode, CostMode::Tracking { .. }) || lambda_f[6] == -1.0);

        backward_sweep_with_kink(&xtraj, u, &lambda_f, spec, &mut grad, &mut kink)?;

        if tracking {
            if gram_age >= GRAM_REFRESH {
                let g = constraint_sensitivity_gram(&xtraj, u, spec)?;
                let ridge = 1e-10 * g.trace().max(1e-12);
                dual_mat = (g + ridge * Mat6::identity())
                    .try_inverse()
                    .map(|gi| gi + params.c * Mat6::identity());
                gram_age = 0;
            }
            gram_age += 1;
        }

        let eps = params.eps_u.at(k);
        last_move = match setup.mode {
            CostMode::Consumption => fuel_prox_update(u, &grad, &kink, eps, spec, j0),
            CostMode::Tracking { u_ref } => {
                let mut move_sq = 0.0;
                for j in j0..n {
                    let gj = grad[j - j0] / h;
                    let uj = u.values()[j].to_vec3();
                    let track = uj - u_ref[j].to_vec3();
                    let clamped = ControlVec::from_vec3(&(uj - eps * (gj + track))).clamp_to_ball();
                    move_sq += (clamped.to_vec3() - uj).norm_squared();
                    u.values_mut()[j] = clamped;
                }
                (move_sq * h).sqrt()
            }
        };
        if last_move < TRACK_SETTLE_FACTOR * params.tol_stall {
            settle_streak += 1;
        } else {
            settle_streak = 0;
        }

        match dual_mat.as_ref() {
            Some(m) => upsilon += params.dual_newton_frac * (m * delta),
            None => upsilon += params.eps_upsilon.at(k) * delta,
        }

        xtraj = flow_nodes(&setup.x0, u, j0, n, spec)?;
    }

    // The stall test can fire while switch-boundary intervals are still
    // settling, and costate gradients read off the solution are first-order
    // sensitive to that residual. Finish converged fuel solves with
    // primal-only proximal steps at the frozen multiplier until the control
    // stops moving. A step that pushes the deviation back outside tolerance
    // is rolled back and ends the pass: past that point the frozen
    // multiplier's own error is trading feasibility for stationarity, and
    // the hit-status contract keeps the deviation inside tolerance.
    if !tracking && matches!(status, SolveStatus::ConvergedHit) {
        let eps = params.eps_u.at(iters);
        for _ in 0..params.polish_iters {
            let delta = target_deviation(xtraj.final_state(), spec);
            let mut lambda_f = Vec7::zeros();
            for i in 0..6 {
                lambda_f[i] = upsilon[i] + params.c * delta[i];
            }
            lambda_f[6] = -1.0;
            backward_sweep_with_kink(&xtraj, u, &lambda_f, spec, &mut grad, &mut kink)?;
            let before = u.clone();
            let moved = fuel_prox_update(u, &grad, &kink, eps, spec, j0);
            let stepped = flow_nodes(&setup.x0, u, j0, n, spec)?;
            if target_deviation(stepped.final_state(), spec).norm() > params.tol_target {
                *u = before;
                break;
            }
            xtraj = stepped;
            if moved < POLISH_EXIT {
                break;
            }
        }
    }

    let xf = *xtraj.final_state();
    let delta = target_deviation(&xf, spec);
    Ok(DetSolution {
        u_star: u.clone(),
        x_star: xtraj,
        consumption: spec.x_i.m - xf.m,
        upsilon,
        delta,
        status,
        iters,
        history,
    })
}

/// One proximal descent pass of the fuel objective: plain step on the smooth
/// part (terminal cost, multiplier and penalty terms), then the exact
/// proximal map of the kink gamma*||u|| (radial shrinkage, so coast arcs sit
/// exactly at zero instead of chattering around it), then the ball clamp.
/// Returns the L2 control movement.
pub(crate) fn fuel_prox_update(
    u: &mut ControlTrajectory,
    grad: &[Vec3],
    kink: &[f64],
    eps: f64,
    spec: &MissionSpec,
    j0: usize,
) -> f64 {
    let h = u.grid().h();
    let n = u.grid().n_steps();
    let gamma = -spec.thrust / spec.g0_isp;
    let mut move_sq = 0.0;
    for j in j0..n {
        let gj = grad[j - j0] / h;
        let uj = u.values()[j].to_vec3();
        let kappa = gamma * kink[j - j0] / h;
        let un = uj.norm();
        let smooth = if un > 0.0 { gj - (kappa / un) * uj } else { gj };
        let v = uj - eps * smooth;
        let new = if kappa > 0.0 {
            let vn = v.norm();
            if vn <= eps * kappa {
                Vec3::zeros()
            } else {
                v * (1.0 - eps * kappa / vn)
            }
        } else {
            // Mass costate turned nonnegative (pathological); fall back to
            // the plain subgradient step.
            uj - eps * gj
        };
        let clamped = ControlVec::from_vec3(&new).clamp_to_ball();
        move_sq += (clamped.to_vec3() - uj).norm_squared();
        u.values_mut()[j] = clamped;
    }
    (move_sq * h).sqrt()
}

/// Backward sweep returning both the per-interval discrete cost gradient and
/// the per-interval weight of the ||u|| kink (sum of stage mass multipliers).
fn backward_sweep_with_kink(
    xtraj: &StateTrajectory,
    u: &ControlTrajectory,
    lambda_f: &Vec7,
    spec: &MissionSpec,
    grad: &mut Vec<Vec3>,
    kink: &mut Vec<f64>,
) -> Result<(), DynamicsError> {
    backward_sweep(xtraj, u, lambda_f, &[], spec, Some((grad, kink)))?;
    Ok(())
}

/// Full-tangential-thrust control, the standard initial guess for the
/// nominal mission.
pub fn default_initial_control(grid: TimeGrid) -> ControlTrajectory {
    ControlTrajectory::constant(grid, ControlVec::new(0.0, 1.0, 0.0))
}

/// Solve the nominal fuel-optimal rendezvous on the full horizon.
pub fn solve_deterministic(
    spec: &MissionSpec,
    params: &AugLagParams,
    u0: &ControlTrajectory,
    record_history: bool,
) -> Result<DetSolution, DynamicsError> {
    let mut u = u0.clone();
    let setup = EngineSetup {
        spec,
        params,
        j0: 0,
        x0: spec.x_i,
        mode: CostMode::Consumption,
        record_history,
    };
    run_engine(&setup, &mut u, Vec6::zeros())
}

/// Solve the recourse problem for a failure at state `x_tp` (the state at
/// the node nearest t_p): coast with zero control through the outage, then
/// minimize fuel to the target on what remains of the horizon. Warm-started
/// from the nominal control `v0` and multiplier `upsilon0`.
pub fn solve_recourse_warm(
    x_tp: &SatState,
    scen: &FailureScenario,
    spec: &MissionSpec,
    params: &AugLagParams,
    v0: &ControlTrajectory,
    upsilon0: Vec6,
) -> Result<DetSolution, DynamicsError> {
    assert!(scen.t_p < spec.t_f, "recourse needs a failure inside the mission window");
    let grid = *v0.grid();
    let n = grid.n_steps();
    let j_p = grid.snap(scen.t_p);
    let j_r = grid.snap((scen.t_p + scen.t_d).min(grid.t_f()));

    let zero = ControlTrajectory::zero(grid);
    let coast = flow_nodes(x_tp, &zero, j_p, j_r, spec)?;

    if j_r >= n {
        // The outage swallows the rest of the mission: nothing to optimize,
        // the drift endpoint decides the outcome.
        let xf = *coast.final_state();
        let delta = target_deviation(&xf, spec);
        let status = if delta.norm() <= params.tol_target {
            SolveStatus::ConvergedHit
        } else {
            SolveStatus::ConvergedMissed
        };
        return Ok(DetSolution {
            u_star: zero,
            x_star: coast,
            consumption: spec.x_i.m - xf.m,
            upsilon: Vec6::zeros(),
            delta,
            status,
            iters: 0,
            history: Vec::new(),
        });
    }

    let mut u = v0.masked(0, j_r);
    let setup = EngineSetup {
        spec,
        params,
        j0: j_r,
        x0: *coast.final_state(),
        mode: CostMode::Consumption,
        record_history: false,
    };
    run_engine(&setup, &mut u, upsilon0)
}

/// Recourse solve at a frozen multiplier: primal proximal iterations only,
/// no dual ascent. With upsilon held fixed the solve is a plain minimization
/// of the augmented Lagrangian in u, so the value inherits a clean costate
/// gradient with no multiplier-motion cross term. Used to finite-difference
/// the recourse value when checking the adjoint oracle.
pub fn solve_recourse_frozen(
    x_tp: &SatState,
    scen: &FailureScenario,
    spec: &MissionSpec,
    params: &AugLagParams,
    v0: &ControlTrajectory,
    upsilon: Vec6,
    budget: usize,
) -> Result<DetSolution, DynamicsError> {
    assert!(scen.t_p < spec.t_f, "recourse needs a failure inside the mission window");
    let grid = *v0.grid();
    let n = grid.n_steps();
    let j_p = grid.snap(scen.t_p);
    let j_r = grid.snap((scen.t_p + scen.t_d).min(grid.t_f()));

    let zero = ControlTrajectory::zero(grid);
    let coast = flow_nodes(x_tp, &zero, j_p, j_r, spec)?;
    assert!(j_r < n, "frozen recourse polish needs a powered tail");

    let mut u = v0.masked(0, j_r);
    let x0 = *coast.final_state();
    let eps = params.eps_u.at(0);
    let mut grad = vec![Vec3::zeros(); n - j_r];
    let mut kink = vec![0.0; n - j_r];
    let mut xtraj = flow_nodes(&x0, &u, j_r, n, spec)?;
    let mut iters = 0;
    for k in 0..budget {
        iters = k + 1;
        let delta = target_deviation(xtraj.final_state(), spec);
        let mut lambda_f = Vec7::zeros();
        for i in 0..6 {
            lambda_f[i] = upsilon[i] + params.c * delta[i];
        }
        lambda_f[6] = -1.0;
        backward_sweep_with_kink(&xtraj, &u, &lambda_f, spec, &mut grad, &mut kink)?;
        let moved = fuel_prox_update(&mut u, &grad, &kink, eps, spec, j_r);
        xtraj = flow_nodes(&x0, &u, j_r, n, spec)?;
        if moved < POLISH_EXIT {
            break;
        }
    }
    let xf = *xtraj.final_state();
    let delta = target_deviation(&xf, spec);
    Ok(DetSolution {
        u_star: u,
        x_star: xtraj,
        consumption: spec.x_i.m - xf.m,
        upsilon,
        delta,
        status: SolveStatus::ConvergedHit,
        iters,
        history: Vec::new(),
    })
}

/// Recourse solve without a multiplier warm start.
pub fn solve_recourse(
    x_tp: &SatState,
    scen: &FailureScenario,
    spec: &MissionSpec,
    params: &AugLagParams,
    v0: &ControlTrajectory,
) -> Result<DetSolution, DynamicsError> {
    solve_recourse_warm(x_tp, scen, spec, params, v0, Vec6::zeros())
}

/// Project a half-step control onto the admissible target-hitting set:
/// minimize 1/2 * integral ||u - u_half||^2 dt subject to the dynamics, the
/// pointwise unit ball and the terminal rendezvous constraint.
pub fn project_control_warm(
    u_half: &ControlTrajectory,
    spec: &MissionSpec,
    params: &AugLagParams,
    upsilon0: Vec6,
    record_history: bool,
) -> Result<DetSolution, DynamicsError> {
    let mut u = u_half.clone();
    for v in u.values_mut() {
        *v = v.clamp_to_ball();
    }
    let setup = EngineSetup {
        spec,
        params,
        j0: 0,
        x0: spec.x_i,
        mode: CostMode::Tracking { u_ref: u_half.values() },
        record_history,
    };
    run_engine(&setup, &mut u, upsilon0)
}

/// Projection without a multiplier warm start.
pub fn project_control(
    u_half: &ControlTrajectory,
    spec: &MissionSpec,
    params: &AugLagParams,
) -> Result<DetSolution, DynamicsError> {
    project_control_warm(u_half, spec, params, Vec6::zeros(), false)
}

/// L2 norm of the first-order optimality residual of a fuel solve, measured
/// on the intervals where the control is interior to the unit ball. On coast
/// intervals the residual is the excess of the switching-function norm over
/// the fuel kink weight (the subdifferential condition for u = 0).
pub fn kkt_residual_l2(
    sol: &DetSolution,
    spec: &MissionSpec,
    params: &AugLagParams,
) -> Result<f64, DynamicsError> {
    let grid = *sol.u_star.grid();
    let h = grid.h();
    let j0 = sol.x_star.first_node();
    let n = grid.n_steps();
    let mut lambda_f = Vec7::zeros();
    for i in 0..6 {
        lambda_f[i] = sol.upsilon[i] + params.c * sol.delta[i];
    }
    lambda_f[6] = -1.0;
    let mut grad = Vec::new();
    let mut kink = Vec::new();
    backward_sweep_with_kink(&sol.x_star, &sol.u_star, &lambda_f, spec, &mut grad, &mut kink)?;
    let gamma = -spec.thrust / spec.g0_isp;
    let mut acc = 0.0;
    for j in j0..n {
        let uj = sol.u_star.values()[j].to_vec3();
        let un = uj.norm();
        if un >= 1.0 - 1e-3 {
            continue; // boundary arc: handled by the ball projection
        }
        let g = grad[j - j0] / h;
        let kappa = gamma * kink[j - j0] / h;
        let r = if un == 0.0 {
            (g.norm() - kappa).max(0.0)
        } else {
            g.norm()
        };
        acc += r * r * h;
    }
    Ok(acc.sqrt())
}

/// Thrust-magnitude profile switch times: crossings of ||u|| through 0.5,
/// located by linear interpolation between interval midpoints.
pub fn switch_times(u: &ControlTrajectory) -> Vec<f64> {
    let grid = u.grid();
    let h = grid.h();
    let mags: Vec<f64> = u.values().iter().map(|v| v.norm()).collect();
    let mut out = Vec::new();
    for j in 1..mags.len() {
        let (a, b) = (mags[j - 1], mags[j]);
        if (a - 0.5) * (b - 0.5) < 0.0 {
            let frac = (0.5 - a) / (b - a);
            out.push(grid.node(j - 1) + 0.5 * h + frac * h);
        }
    }
    out
}
