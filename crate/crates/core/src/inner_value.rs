//! Value and sensitivities of the post-failure recourse problem.
//!
//! Given the state at failure onset, a scenario and the current probability
//! multiplier mu, this evaluates the smoothed penalty value
//!
//!   W_r = (K - mu) * I_r(||delta*||)
//!
//! where K is the whole-mission fuel consumption of the recourse solution,
//! delta* its closest terminal deviation and I_r the ramp indicator. The
//! case analysis keeps W_r nonpositive: saving fuel relative to mu while
//! hitting (or nearly hitting, within radius r) the target counts; anything
//! else is "do nothing" with value zero, because a recourse that misses by
//! more than r, or spends more than mu, can always be replaced by giving up.
//!
//! Gradients with respect to the failure-time state are costates of the
//! recourse problem propagated backward through the engine-off coast arc, so
//! they live at t_p where the outer stochastic loop applies its adjoint jump.

use crate::det_solver::{solve_recourse_warm, AugLagParams, DetSolution, SolveStatus};
use crate::dynamics::{DynamicsError, MissionSpec, SatState, Vec6, Vec7};
use crate::failures::FailureScenario;
use crate::propagation::{backward_sweep, flow_nodes, ControlTrajectory};
use crate::smoothing::indicator_smooth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerStatus {
    /// Recourse abandoned (worthless or worse than giving up): value 0.
    DoNothing,
    /// Recourse hits the target and beats mu.
    HitExact,
    /// Recourse misses by at most r and beats mu: smoothed-indicator case.
    NearMiss,
    /// Recourse solver did not converge; the caller skips this sample.
    Diverged,
}

impl InnerStatus {
    /// Short tag used in run logs and CSV columns.
    pub fn label(self) -> &'static str {
        match self {
            InnerStatus::DoNothing => "do_nothing",
            InnerStatus::HitExact => "hit",
            InnerStatus::NearMiss => "near_miss",
            InnerStatus::Diverged => "diverged",
        }
    }
}

/// Value, gradients and the underlying recourse solution.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub value: f64,
    /// d(value)/d(state at t_p), a 7-vector costate.
    pub grad_x: Vec7,
    /// d(value)/d(mu), in [-1, 0].
    pub grad_mu: f64,
    pub status: InnerStatus,
    pub recourse: DetSolution,
}

/// Evaluate W_r and its partial gradients for a failure at `x_tp` (state at
/// the node nearest scen.t_p). The recourse solve warm-starts from the
/// nominal control `v0` and multiplier `upsilon0`.
#[allow(clippy::too_many_arguments)]
pub fn eval_w(
    x_tp: &SatState,
    scen: &FailureScenario,
    mu: f64,
    r: f64,
    spec: &MissionSpec,
    params: &AugLagParams,
    v0: &ControlTrajectory,
    upsilon0: Vec6,
) -> Result<InnerSolution, DynamicsError> {
    assert!(mu >= 0.0, "multiplier mu must be nonnegative");
    assert!(r > 0.0, "smoothing radius must be positive");
    assert!(scen.t_p < spec.t_f, "inner problem needs a failure inside the mission window");

    let sol = solve_recourse_warm(x_tp, scen, spec, params, v0, upsilon0)?;

    let zeros = InnerSolution {
        value: 0.0,
        grad_x: Vec7::zeros(),
        grad_mu: 0.0,
        status: InnerStatus::DoNothing,
        recourse: sol.clone(),
    };

    if sol.status == SolveStatus::Diverged {
        return Ok(InnerSolution { status: InnerStatus::Diverged, ..zeros });
    }

    let dn = sol.delta_norm();
    let gain = sol.consumption - mu;

    // Exact-hit branch whenever the solver reached the target; the 1/r
    // chain rule below is reserved for genuine closest-approach misses.
    if sol.status == SolveStatus::ConvergedHit {
        if gain >= 0.0 {
            return Ok(zeros);
        }
        // Report the augmented-Lagrangian value and seed the costate with
        // upsilon + c*delta. Both reduce to the plain consumption and
        // multiplier at an exact hit, but at the solver's finite residual
        // they form a consistent value/gradient pair: the value is
        // stationary in the control, so its state sensitivity is entirely
        // the costate below.
        let value =
            gain + sol.upsilon.dot(&sol.delta) + 0.5 * params.c * sol.delta.norm_squared();
        let mut lambda_f = Vec7::zeros();
        for i in 0..6 {
            lambda_f[i] = sol.upsilon[i] + params.c * sol.delta[i];
        }
        lambda_f[6] = -1.0;
        let grad_x = backprop_to_tp(&sol, scen, spec, x_tp, &lambda_f)?;
        return Ok(InnerSolution {
            value,
            grad_x,
            grad_mu: -1.0,
            status: InnerStatus::HitExact,
            ..zeros
        });
    }

    if dn <= r && gain < 0.0 {
        let ind = indicator_smooth(dn, r);
        let mut lambda_f = Vec7::zeros();
        // I_r * dK/dx + (K - mu) * I_r'(||delta||) * d||delta||/dx, with
        // d||delta||/dx the unit deviation through the element rows.
        for i in 0..6 {
            lambda_f[i] = gain * (-1.0 / r) * (sol.delta[i] / dn);
        }
        lambda_f[6] = -ind;
        let grad_x = backprop_to_tp(&sol, scen, spec, x_tp, &lambda_f)?;
        return Ok(InnerSolution {
            value: gain * ind,
            grad_x,
            grad_mu: -ind,
            status: InnerStatus::NearMiss,
            ..zeros
        });
    }

    Ok(zeros)
}

/// Carry a terminal costate of the recourse problem back to the failure
/// onset: first along the recourse arc under its converged control, then
/// through the engine-off coast.
fn backprop_to_tp(
    sol: &DetSolution,
    scen: &FailureScenario,
    spec: &MissionSpec,
    x_tp: &SatState,
    lambda_f: &Vec7,
) -> Result<Vec7, DynamicsError> {
    let grid = *sol.u_star.grid();
    let n = grid.n_steps();
    let j_p = grid.snap(scen.t_p);
    let j_r = grid.snap((scen.t_p + scen.t_d).min(grid.t_f())).min(n);
    let zero = ControlTrajectory::zero(grid);

    let lambda_jr = if j_r < n {
        let lams = backward_sweep(&sol.x_star, &sol.u_star, lambda_f, &[], spec, None)?;
        lams[0]
    } else {
        *lambda_f
    };
    if j_p == j_r {
        return Ok(lambda_jr);
    }
    let coast = flow_nodes(x_tp, &zero, j_p, j_r, spec)?;
    let lams = backward_sweep(&coast, &zero, &lambda_jr, &[], spec, None)?;
    Ok(lams[0])
}
