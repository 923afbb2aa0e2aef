//! Fixed-step propagation: forward state flow, failure flow (thrust cut off
//! for the outage, recourse control afterwards), and the backward adjoint
//! sweep used for gradients.
//!
//! Controls are piecewise constant on a uniform grid and the integrator takes
//! one classical RK4 step per interval. The adjoint is the exact discrete
//! adjoint of that scheme (reverse-mode transpose of the four stages), so
//! gradients of terminal costs are consistent with the discrete flow to
//! machine precision rather than just to integrator order.

use std::io::{self, Write};

use crate::dynamics::{
    dfdu_ctx, dfdx_ctx, gauss_rhs_ctx, ControlVec, DynamicsError, Mat3x6, Mat6, Mat7x6,
    MissionSpec, SatState, StateCtx, Vec3, Vec7,
};
use crate::failures::FailureScenario;

/// Uniform time grid on [t_i, t_f]; node i sits at t_i + i*h.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_i: f64,
    t_f: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_i: f64, t_f: f64, n_steps: usize) -> Result<Self, String> {
        if !(t_i < t_f) {
            return Err(format!("grid needs t_i < t_f, got [{t_i}, {t_f}]"));
        }
        if n_steps < 2 {
            return Err(format!("grid needs at least 2 steps, got {n_steps}"));
        }
        Ok(TimeGrid { t_i, t_f, n_steps })
    }

    pub fn t_i(&self) -> f64 {
        self.t_i
    }

    pub fn t_f(&self) -> f64 {
        self.t_f
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn h(&self) -> f64 {
        (self.t_f - self.t_i) / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        self.t_i + i as f64 * self.h()
    }

    /// Nearest node index to `t`, clamped to the grid.
    pub fn snap(&self, t: f64) -> usize {
        let raw = ((t - self.t_i) / self.h()).round();
        (raw.max(0.0) as usize).min(self.n_steps)
    }

    /// Signed error committed by snapping `t` to its nearest node.
    pub fn snap_error(&self, t: f64) -> f64 {
        self.node(self.snap(t)) - t
    }
}

/// Piecewise-constant control: one `ControlVec` per grid interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    grid: TimeGrid,
    values: Vec<ControlVec>,
}

impl ControlTrajectory {
    pub fn new(grid: TimeGrid, values: Vec<ControlVec>) -> Result<Self, String> {
        if values.len() != grid.n_steps() {
            return Err(format!(
                "control needs one value per interval: {} values for {} intervals",
                values.len(),
                grid.n_steps()
            ));
        }
        if let Some(bad) = values.iter().find(|u| u.norm() > 1.0 + 1e-9) {
            return Err(format!("control norm {} exceeds the unit ball", bad.norm()));
        }
        Ok(ControlTrajectory { grid, values })
    }

    pub fn constant(grid: TimeGrid, u: ControlVec) -> Self {
        ControlTrajectory { grid, values: vec![u; grid.n_steps()] }
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self::constant(grid, ControlVec::ZERO)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[ControlVec] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [ControlVec] {
        &mut self.values
    }

    /// Same control function on a grid `factor` times finer (each interval
    /// value repeated `factor` times).
    pub fn refined(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        let grid = TimeGrid { n_steps: self.grid.n_steps * factor, ..self.grid };
        let values = self.values.iter().flat_map(|u| std::iter::repeat_n(*u, factor)).collect();
        ControlTrajectory { grid, values }
    }

    /// Copy with zero control on intervals [j0, j1).
    pub fn masked(&self, j0: usize, j1: usize) -> Self {
        let mut out = self.clone();
        for v in &mut out.values_mut()[j0..j1] {
            *v = ControlVec::ZERO;
        }
        out
    }

    /// L2 distance sqrt(integral of ||u1 - u2||^2 dt); grids must agree.
    pub fn l2_distance(&self, other: &ControlTrajectory) -> f64 {
        assert_eq!(self.grid, other.grid, "L2 distance needs a common grid");
        let h = self.grid.h();
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.to_vec3() - b.to_vec3()).norm_squared())
            .sum();
        (sum * h).sqrt()
    }
}

/// States on the grid nodes of a (sub)horizon [first_node, last node].
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    grid: TimeGrid,
    first_node: usize,
    states: Vec<SatState>,
}

impl StateTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn first_node(&self) -> usize {
        self.first_node
    }

    pub fn last_node(&self) -> usize {
        self.first_node + self.states.len() - 1
    }

    /// State at global node index `j`.
    pub fn state_at_node(&self, j: usize) -> &SatState {
        &self.states[j - self.first_node]
    }

    pub fn states(&self) -> &[SatState] {
        &self.states
    }

    pub fn initial_state(&self) -> &SatState {
        self.states.first().expect("trajectory holds at least one node")
    }

    pub fn final_state(&self) -> &SatState {
        self.states.last().expect("trajectory holds at least one node")
    }
}

struct Rk4Stages {
    y: [SatState; 4],
    ctx: [StateCtx; 4],
    k: [Vec7; 4],
}

fn rk4_stages(
    x: &SatState,
    u: &ControlVec,
    h: f64,
    spec: &MissionSpec,
) -> Result<Rk4Stages, DynamicsError> {
    let y1 = *x;
    let c1 = StateCtx::new(&y1, spec)?;
    let k1 = gauss_rhs_ctx(&y1, u, spec, &c1);
    let y2 = SatState::from_vec7(&(x.to_vec7() + 0.5 * h * k1));
    let c2 = StateCtx::new(&y2, spec)?;
    let k2 = gauss_rhs_ctx(&y2, u, spec, &c2);
    let y3 = SatState::from_vec7(&(x.to_vec7() + 0.5 * h * k2));
    let c3 = StateCtx::new(&y3, spec)?;
    let k3 = gauss_rhs_ctx(&y3, u, spec, &c3);
    let y4 = SatState::from_vec7(&(x.to_vec7() + h * k3));
    let c4 = StateCtx::new(&y4, spec)?;
    let k4 = gauss_rhs_ctx(&y4, u, spec, &c4);
    Ok(Rk4Stages { y: [y1, y2, y3, y4], ctx: [c1, c2, c3, c4], k: [k1, k2, k3, k4] })
}

fn rk4_step(
    x: &SatState,
    u: &ControlVec,
    h: f64,
    spec: &MissionSpec,
) -> Result<SatState, DynamicsError> {
    let st = rk4_stages(x, u, h, spec)?;
    let next =
        x.to_vec7() + (h / 6.0) * (st.k[0] + 2.0 * st.k[1] + 2.0 * st.k[2] + st.k[3]);
    let next = SatState::from_vec7(&next);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite("rk4 step"))
    }
}

/// Integrate forward over the node span [j0, j1] of the control grid.
pub fn flow_nodes(
    x0: &SatState,
    u: &ControlTrajectory,
    j0: usize,
    j1: usize,
    spec: &MissionSpec,
) -> Result<StateTrajectory, DynamicsError> {
    assert!(j0 <= j1 && j1 <= u.grid().n_steps(), "node span [{j0}, {j1}] out of grid");
    let h = u.grid().h();
    let mut states = Vec::with_capacity(j1 - j0 + 1);
    states.push(*x0);
    let mut x = *x0;
    for j in j0..j1 {
        x = rk4_step(&x, &u.values()[j], h, spec)?;
        states.push(x);
    }
    Ok(StateTrajectory { grid: *u.grid(), first_node: j0, states })
}

/// Flow map over [s, s2]: final state plus the whole node trajectory.
/// `s` and `s2` are snapped to their nearest grid nodes.
pub fn flow(
    x0: &SatState,
    u: &ControlTrajectory,
    s: f64,
    s2: f64,
    spec: &MissionSpec,
) -> Result<StateTrajectory, DynamicsError> {
    let j0 = u.grid().snap(s);
    let j1 = u.grid().snap(s2);
    flow_nodes(x0, u, j0, j1.max(j0), spec)
}

/// Final state under a failure scenario: nominal control `u` until t_p, zero
/// control during the outage, recourse control `v` from t_p + t_d on.
/// Failure times are snapped to grid nodes.
pub fn failure_flow(
    x0: &SatState,
    u: &ControlTrajectory,
    v: &ControlTrajectory,
    scen: &FailureScenario,
    spec: &MissionSpec,
) -> Result<SatState, DynamicsError> {
    let grid = u.grid();
    let n = grid.n_steps();
    if scen.t_p >= grid.t_f() {
        return Ok(*flow_nodes(x0, u, 0, n, spec)?.final_state());
    }
    let j_p = grid.snap(scen.t_p);
    let j_r = grid.snap((scen.t_p + scen.t_d).min(grid.t_f()));
    let before = flow_nodes(x0, u, 0, j_p, spec)?;
    let zero = ControlTrajectory::zero(*grid);
    let coast = flow_nodes(before.final_state(), &zero, j_p, j_r, spec)?;
    if j_r >= n {
        return Ok(*coast.final_state());
    }
    assert_eq!(v.grid(), grid, "recourse control must share the nominal grid");
    Ok(*flow_nodes(coast.final_state(), v, j_r, n, spec)?.final_state())
}

/// Backward sweep shared by the adjoint map and the solvers: transposed RK4
/// stage recursion, optionally accumulating the cost gradient per control
/// interval (d cost / d u_j, exact for the discrete flow) together with the
/// interval's fuel-kink weight (sum of stage mass multipliers, the factor in
/// front of d||u||/du in the discrete gradient).
pub(crate) fn backward_sweep(
    xtraj: &StateTrajectory,
    u: &ControlTrajectory,
    lambda_f: &Vec7,
    jumps: &[(usize, Vec7)],
    spec: &MissionSpec,
    mut grad_u: Option<(&mut Vec<Vec3>, &mut Vec<f64>)>,
) -> Result<Vec<Vec7>, DynamicsError> {
    let h = xtraj.grid().h();
    let j0 = xtraj.first_node();
    let j1 = xtraj.last_node();
    for (jn, _) in jumps {
        assert!(*jn >= j0 && *jn <= j1, "jump node {jn} outside trajectory span [{j0}, {j1}]");
    }
    if let Some((g, kw)) = grad_u.as_mut() {
        g.clear();
        g.resize(j1 - j0, Vec3::zeros());
        kw.clear();
        kw.resize(j1 - j0, 0.0);
    }
    let mut out = vec![Vec7::zeros(); j1 - j0 + 1];
    let mut lambda = *lambda_f;
    for (jn, vjump) in jumps {
        if *jn == j1 {
            lambda += vjump;
        }
    }
    out[j1 - j0] = lambda;
    for j in (j0..j1).rev() {
        let uj = &u.values()[j];
        let st = rk4_stages(xtraj.state_at_node(j), uj, h, spec)?;
        // Reverse-mode pass through x_{n+1} = x_n + sum_i w_i k_i with stage
        // weights w = (h/6, h/3, h/3, h/6) and offsets a = (h/2, h/2, h).
        let jt = [
            dfdx_ctx(&st.y[0], uj, spec, &st.ctx[0]).transpose(),
            dfdx_ctx(&st.y[1], uj, spec, &st.ctx[1]).transpose(),
            dfdx_ctx(&st.y[2], uj, spec, &st.ctx[2]).transpose(),
            dfdx_ctx(&st.y[3], uj, spec, &st.ctx[3]).transpose(),
        ];
        let s4 = (h / 6.0) * lambda;
        let s3 = (h / 3.0) * lambda + h * (jt[3] * s4);
        let s2 = (h / 3.0) * lambda + 0.5 * h * (jt[2] * s3);
        let s1 = (h / 6.0) * lambda + 0.5 * h * (jt[1] * s2);
        if let Some((g, kw)) = grad_u.as_mut() {
            let bt = |i: usize, s: &Vec7| dfdu_ctx(&st.y[i], uj, spec, &st.ctx[i]).transpose() * s;
            g[j - j0] = bt(0, &s1) + bt(1, &s2) + bt(2, &s3) + bt(3, &s4);
            kw[j - j0] = s1[6] + s2[6] + s3[6] + s4[6];
        }
        lambda += jt[0] * s1 + jt[1] * s2 + jt[2] * s3 + jt[3] * s4;
        for (jn, vjump) in jumps {
            if *jn == j {
                lambda += vjump;
            }
        }
        if !lambda.iter().all(|v| v.is_finite()) {
            return Err(DynamicsError::NonFinite("adjoint sweep"));
        }
        out[j - j0] = lambda;
    }
    Ok(out)
}

/// Gram matrix of the terminal-element sensitivities to the control, in the
/// L2 density metric: G = integral (dC/du)(dC/du)^T dt, a 6x6 summary of how
/// strongly (and in which element directions) the control authority acts.
/// Built from one matrix-valued backward sweep (six adjoints at once).
pub(crate) fn constraint_sensitivity_gram(
    xtraj: &StateTrajectory,
    u: &ControlTrajectory,
    spec: &MissionSpec,
) -> Result<Mat6, DynamicsError> {
    let h = xtraj.grid().h();
    let mut gram = Mat6::zeros();
    visit_constraint_sensitivities(xtraj, u, spec, |_, d| {
        gram += d.transpose() * d / h;
    })?;
    Ok(gram)
}

/// Walks the same reverse recursion as `constraint_sensitivity_gram` and hands
/// each interval's raw sensitivity block d_j = (d delta / d u_j)^T (3x6, one
/// factor of h included) to the visitor, highest interval first.
pub(crate) fn visit_constraint_sensitivities<F: FnMut(usize, &Mat3x6)>(
    xtraj: &StateTrajectory,
    u: &ControlTrajectory,
    spec: &MissionSpec,
    mut visit: F,
) -> Result<(), DynamicsError> {
    let h = xtraj.grid().h();
    let j0 = xtraj.first_node();
    let j1 = xtraj.last_node();
    // Terminal condition: column i is d(element i)/dx = unit row i, mass 0.
    let mut lam = Mat7x6::zeros();
    for i in 0..6 {
        lam[(i, i)] = 1.0;
    }
    for j in (j0..j1).rev() {
        let uj = &u.values()[j];
        let st = rk4_stages(xtraj.state_at_node(j), uj, h, spec)?;
        let jt = [
            dfdx_ctx(&st.y[0], uj, spec, &st.ctx[0]).transpose(),
            dfdx_ctx(&st.y[1], uj, spec, &st.ctx[1]).transpose(),
            dfdx_ctx(&st.y[2], uj, spec, &st.ctx[2]).transpose(),
            dfdx_ctx(&st.y[3], uj, spec, &st.ctx[3]).transpose(),
        ];
        let s4 = (h / 6.0) * lam;
        let s3 = (h / 3.0) * lam + h * (jt[3] * s4);
        let s2 = (h / 3.0) * lam + 0.5 * h * (jt[2] * s3);
        let s1 = (h / 6.0) * lam + 0.5 * h * (jt[1] * s2);
        let bt = |i: usize| dfdu_ctx(&st.y[i], uj, spec, &st.ctx[i]).transpose();
        let d = bt(0) * s1 + bt(1) * s2 + bt(2) * s3 + bt(3) * s4;
        visit(j, &d);
        lam += jt[0] * s1 + jt[1] * s2 + jt[2] * s3 + jt[3] * s4;
    }
    Ok(())
}

/// Adjoint trajectory: integrates d(lambda)/dt = -(df/dx)^T lambda backward
/// from `lambda_f`, adding each jump vector when the sweep reaches its node
/// (the stored value at a jump node is the left limit, jump included).
/// Jump times must lie on grid nodes.
pub fn adjoint_flow(
    xtraj: &StateTrajectory,
    u: &ControlTrajectory,
    lambda_f: &Vec7,
    jumps: &[(f64, Vec7)],
    spec: &MissionSpec,
) -> Result<Vec<Vec7>, DynamicsError> {
    let grid = xtraj.grid();
    let node_jumps: Vec<(usize, Vec7)> = jumps
        .iter()
        .map(|(t, v)| {
            let j = grid.snap(*t);
            assert!(
                grid.snap_error(*t).abs() <= 1e-9 * (grid.t_f() - grid.t_i()),
                "jump time {t} is not a grid node"
            );
            (j, *v)
        })
        .collect();
    backward_sweep(xtraj, u, lambda_f, &node_jumps, spec, None)
}

pub(crate) fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

/// CSV export: t, p, e_x, e_y, h_x, h_y, l, m, q, s, w — one row per node,
/// the last row repeating the final interval's control.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    xtraj: &StateTrajectory,
    u: &ControlTrajectory,
) -> io::Result<()> {
    writeln!(out, "t,p,e_x,e_y,h_x,h_y,l,m,q,s,w")?;
    let grid = xtraj.grid();
    for (offset, x) in xtraj.states().iter().enumerate() {
        let j = xtraj.first_node() + offset;
        let uj = u.values()[j.min(u.values().len() - 1)];
        let cols = [
            grid.node(j),
            x.p,
            x.e_x,
            x.e_y,
            x.h_x,
            x.h_y,
            x.l,
            x.m,
            uj.q,
            uj.s,
            uj.w,
        ];
        let row: Vec<String> = cols.iter().map(|v| fmt9(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
