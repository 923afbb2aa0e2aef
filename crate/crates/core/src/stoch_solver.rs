//! Outer stochastic loop for the probability-constrained rendezvous.
//!
//! Each iteration draws one failure scenario from the conditional law,
//! evaluates the recourse value W and its partial gradients at the failure
//! node, assembles the combined adjoint (terminal fuel seed weighted by the
//! no-failure mass, plus a jump carrying the failure-branch sensitivity),
//! takes a proximal half step on the control, projects back onto the set of
//! unit-ball controls whose no-failure trajectory hits the target, and
//! finally moves the probability multiplier mu by the sampled constraint
//! slack. The nominal target constraint is handled by projection throughout;
//! only the probability constraint is priced by mu.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::det_solver::{fuel_prox_update, project_control_warm, AugLagParams, SolveStatus};
use crate::dynamics::{ControlVec, DynamicsError, MissionSpec, Vec3, Vec6, Vec7};
use crate::failures::{pi_f, sample_conditional, FailureScenario};
use crate::inner_value::{eval_w, InnerStatus};
use crate::propagation::{
    backward_sweep, flow_nodes, fmt9, ControlTrajectory, StateTrajectory, TimeGrid,
};
use crate::smoothing::Schedules;

#[derive(Debug, Error)]
pub enum StochError {
    #[error("stochastic run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("no-failure projection stalled at iteration {iter}")]
    ProjectionStalled { iter: usize },
    #[error("checkpoint does not match the run configuration: {0}")]
    CheckpointMismatch(String),
}

/// Everything a stochastic run needs besides the starting control.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StochRunConfig {
    pub spec: MissionSpec,
    pub schedules: Schedules,
    pub n_iters: usize,
    /// Starting value of the probability multiplier.
    pub mu0: f64,
    pub seed: u64,
    /// Parameters shared by the per-sample recourse solves and the
    /// no-failure projection solves.
    pub inner: AugLagParams,
    /// Checkpoint cadence in iterations for resumable drivers; 0 disables.
    /// The loop itself is oblivious to it (callers chunk runs with `resume`).
    pub checkpoint_every: usize,
}

impl StochRunConfig {
    /// Desk-scale run on the bundled mission: 5000 iterations, mu starting
    /// at 0.325, inner solves without the polish pass (the stochastic
    /// gradient carries O(1) sampling noise, so post-convergence polish is
    /// wasted work).
    pub fn reference(seed: u64) -> Self {
        StochRunConfig {
            spec: MissionSpec::reference(),
            schedules: Schedules::default(),
            n_iters: 5000,
            mu0: 0.325,
            seed,
            inner: AugLagParams {
                max_iters: 30_000,
                polish_iters: 0,
                ..AugLagParams::default()
            },
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<(), StochError> {
        self.spec.validate().map_err(StochError::Config)?;
        self.schedules.validate().map_err(StochError::Config)?;
        self.inner.validate().map_err(StochError::Config)?;
        if self.n_iters < 1 {
            return Err(StochError::Config("n_iters must be at least 1".into()));
        }
        if !(self.mu0 >= 0.0) {
            return Err(StochError::Config(format!(
                "initial multiplier mu0 = {} must be nonnegative",
                self.mu0
            )));
        }
        Ok(())
    }
}

/// One iteration of the run log: the sampled scenario (already snapped to
/// the grid), how the recourse ended, and the post-update multiplier and
/// no-failure consumption, plus the schedule values in force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioRecord {
    pub iter: usize,
    pub t_p: f64,
    pub t_d: f64,
    pub status: InnerStatus,
    pub mu: f64,
    pub consumption: f64,
    pub r: f64,
    pub eps_u: f64,
    pub eps_mu: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StochCounters {
    pub hit: usize,
    pub near_miss: usize,
    pub do_nothing: usize,
    pub diverged: usize,
}

/// Resumable snapshot of the loop state after iteration `k` - 1. The RNG is
/// stored as seed plus stream position, which reconstructs it exactly; the
/// two warm-start multipliers are part of the state because they steer the
/// inner solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub k: usize,
    pub mu: f64,
    pub seed: u64,
    pub rng_word_pos: u128,
    pub t_i: f64,
    pub t_f: f64,
    pub n_steps: usize,
    pub control: Vec<[f64; 3]>,
    pub upsilon_inner: [f64; 6],
    pub upsilon_proj: [f64; 6],
}

#[derive(Debug, Clone)]
pub struct StochRunResult {
    pub u_star: ControlTrajectory,
    pub x_star: StateTrajectory,
    /// Final multiplier (last entry of `mu_trace`, or mu0 for empty spans).
    pub mu_star: f64,
    pub mu_trace: Vec<f64>,
    pub consumption_trace: Vec<f64>,
    pub scenario_log: Vec<ScenarioRecord>,
    pub counters: StochCounters,
    /// State after the last iteration; feed to `resume` to continue the run.
    pub checkpoint: Checkpoint,
}

struct LoopState {
    k0: usize,
    u: ControlTrajectory,
    mu: f64,
    rng: ChaCha12Rng,
    upsilon_inner: Vec6,
    upsilon_proj: Vec6,
}

/// Run the loop from the deterministic warm start `u0` (expected to satisfy
/// the no-failure target constraint already; the first projection corrects
/// small violations as long as the control step is active).
pub fn run(cfg: &StochRunConfig, u0: &ControlTrajectory) -> Result<StochRunResult, StochError> {
    cfg.validate()?;
    let st = LoopState {
        k0: 0,
        u: u0.clone(),
        mu: cfg.mu0,
        rng: ChaCha12Rng::seed_from_u64(cfg.seed),
        upsilon_inner: Vec6::zeros(),
        upsilon_proj: Vec6::zeros(),
    };
    run_loop(cfg, st)
}

/// Continue a checkpointed run up to `cfg.n_iters`. Bit-identical to the
/// uninterrupted run: traces cover iterations `ckpt.k..cfg.n_iters`.
pub fn resume(cfg: &StochRunConfig, ckpt: &Checkpoint) -> Result<StochRunResult, StochError> {
    cfg.validate()?;
    if ckpt.k > cfg.n_iters {
        return Err(StochError::Config(format!(
            "checkpoint is at iteration {} but the run ends at {}",
            ckpt.k, cfg.n_iters
        )));
    }
    let grid = TimeGrid::new(ckpt.t_i, ckpt.t_f, ckpt.n_steps)
        .map_err(StochError::CheckpointMismatch)?;
    if (ckpt.t_i - cfg.spec.t_i).abs() > 1e-12 || (ckpt.t_f - cfg.spec.t_f).abs() > 1e-12 {
        return Err(StochError::CheckpointMismatch(format!(
            "checkpoint horizon [{}, {}] differs from the mission [{}, {}]",
            ckpt.t_i, ckpt.t_f, cfg.spec.t_i, cfg.spec.t_f
        )));
    }
    let values: Vec<ControlVec> = ckpt
        .control
        .iter()
        .map(|v| ControlVec::new(v[0], v[1], v[2]))
        .collect();
    let u = ControlTrajectory::new(grid, values).map_err(StochError::CheckpointMismatch)?;
    let mut rng = ChaCha12Rng::seed_from_u64(ckpt.seed);
    rng.set_word_pos(ckpt.rng_word_pos);
    let st = LoopState {
        k0: ckpt.k,
        u,
        mu: ckpt.mu,
        rng,
        upsilon_inner: Vec6::from(ckpt.upsilon_inner),
        upsilon_proj: Vec6::from(ckpt.upsilon_proj),
    };
    run_loop(cfg, st)
}

fn make_checkpoint(cfg: &StochRunConfig, st: &LoopState, k: usize) -> Checkpoint {
    let grid = st.u.grid();
    Checkpoint {
        k,
        mu: st.mu,
        seed: cfg.seed,
        rng_word_pos: st.rng.get_word_pos(),
        t_i: grid.t_i(),
        t_f: grid.t_f(),
        n_steps: grid.n_steps(),
        control: st.u.values().iter().map(|v| [v.q, v.s, v.w]).collect(),
        upsilon_inner: st.upsilon_inner.into(),
        upsilon_proj: st.upsilon_proj.into(),
    }
}

fn run_loop(cfg: &StochRunConfig, mut st: LoopState) -> Result<StochRunResult, StochError> {
    let spec = &cfg.spec;
    let grid = *st.u.grid();
    let n = grid.n_steps();
    let pif = pi_f(&spec.failure_law, spec.t_f);

    let span = cfg.n_iters - st.k0;
    let mut mu_trace = Vec::with_capacity(span);
    let mut consumption_trace = Vec::with_capacity(span);
    let mut scenario_log = Vec::with_capacity(span);
    let mut counters = StochCounters::default();
    let mut grad: Vec<Vec3> = Vec::new();
    let mut kink: Vec<f64> = Vec::new();

    let mut xtraj = flow_nodes(&spec.x_i, &st.u, 0, n, spec)?;

    for k in st.k0..cfg.n_iters {
        let r = cfg.schedules.radius(k);
        let eps_u = cfg.schedules.eps_u(k);
        let eps_mu = cfg.schedules.eps_mu(k);

        // Scenario, snapped so the adjoint jump lands on a grid node. Onsets
        // within half a step of t_f snap to the last interior node.
        let raw = sample_conditional(&spec.failure_law, spec.t_f, &mut st.rng);
        let j_p = grid.snap(raw.t_p).min(n - 1);
        let scen = FailureScenario { t_p: grid.node(j_p), t_d: raw.t_d };

        let x_tp = *xtraj.state_at_node(j_p);
        let (status, grad_x, grad_mu) = if st.mu == 0.0 {
            // Any recourse burns fuel, so at mu = 0 nothing beats giving up:
            // W vanishes identically and both partial gradients are zero.
            // Skipping the solve keeps the exhausted-multiplier regime cheap.
            (InnerStatus::DoNothing, Vec7::zeros(), 0.0)
        } else {
            let w = eval_w(&x_tp, &scen, st.mu, r, spec, &cfg.inner, &st.u, st.upsilon_inner)?;
            // Any recourse that reached the target leaves a useful dual warm
            // start, whether or not it was worth taking at the current mu.
            if w.recourse.status == SolveStatus::ConvergedHit {
                st.upsilon_inner = w.recourse.upsilon;
            }
            (w.status, w.grad_x, w.grad_mu)
        };
        match status {
            InnerStatus::Diverged => {
                // Unusable sample: log it and leave the iterates untouched.
                counters.diverged += 1;
                mu_trace.push(st.mu);
                consumption_trace.push(spec.x_i.m - xtraj.final_state().m);
                scenario_log.push(ScenarioRecord {
                    iter: k,
                    t_p: scen.t_p,
                    t_d: scen.t_d,
                    status,
                    mu: st.mu,
                    consumption: spec.x_i.m - xtraj.final_state().m,
                    r,
                    eps_u,
                    eps_mu,
                });
                continue;
            }
            InnerStatus::DoNothing => counters.do_nothing += 1,
            InnerStatus::HitExact => counters.hit += 1,
            InnerStatus::NearMiss => counters.near_miss += 1,
        }

        if eps_u > 0.0 {
            // Combined adjoint: terminal fuel seed weighted by the
            // no-failure mass, jump at the failure node carrying the
            // failure-branch state sensitivity.
            let mut lambda_f = Vec7::zeros();
            lambda_f[6] = -pif;
            let jumps = [(j_p, (1.0 - pif) * grad_x)];
            backward_sweep(&xtraj, &st.u, &lambda_f, &jumps, spec, Some((&mut grad, &mut kink)))?;
            let mut u_half = st.u.clone();
            fuel_prox_update(&mut u_half, &grad, &kink, eps_u, spec, 0);
            // An unchanged half step needs no projection; this also makes
            // frozen-step runs exact fixpoints.
            if u_half != st.u {
                let sol = project_control_warm(&u_half, spec, &cfg.inner, st.upsilon_proj, false)?;
                if sol.status != SolveStatus::ConvergedHit {
                    return Err(StochError::ProjectionStalled { iter: k });
                }
                st.upsilon_proj = sol.upsilon;
                st.u = sol.u_star;
                xtraj = sol.x_star;
            }
        }

        if eps_mu > 0.0 {
            st.mu = (st.mu + eps_mu * (spec.p - pif + (1.0 - pif) * grad_mu)).max(0.0);
        }

        let consumption = spec.x_i.m - xtraj.final_state().m;
        mu_trace.push(st.mu);
        consumption_trace.push(consumption);
        scenario_log.push(ScenarioRecord {
            iter: k,
            t_p: scen.t_p,
            t_d: scen.t_d,
            status,
            mu: st.mu,
            consumption,
            r,
            eps_u,
            eps_mu,
        });
    }

    let checkpoint = make_checkpoint(cfg, &st, cfg.n_iters);
    Ok(StochRunResult {
        mu_star: st.mu,
        u_star: st.u,
        x_star: xtraj,
        mu_trace,
        consumption_trace,
        scenario_log,
        counters,
        checkpoint,
    })
}

/// Convergence CSV: one row per iteration of the log.
pub fn write_trace_csv<W: Write>(out: &mut W, log: &[ScenarioRecord]) -> io::Result<()> {
    writeln!(out, "k,t_p,t_d,inner_status,mu,consumption,r_k,eps_u_k,eps_mu_k")?;
    for rec in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.iter,
            fmt9(rec.t_p),
            fmt9(rec.t_d),
            rec.status.label(),
            fmt9(rec.mu),
            fmt9(rec.consumption),
            fmt9(rec.r),
            fmt9(rec.eps_u),
            fmt9(rec.eps_mu),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::det_solver::{default_initial_control, solve_deterministic, DetSolution};
    use crate::propagation::flow;

    fn toy_mission(n_steps: usize) -> MissionSpec {
        let mut s = MissionSpec::reference();
        s.t_f = s.t_i + 1.0;
        let grid = TimeGrid::new(s.t_i, s.t_f, n_steps).unwrap();
        let mut gen = ControlTrajectory::zero(grid);
        let n = grid.n_steps();
        for j in 0..n {
            if j < 3 * n / 8 || j >= 3 * n / 4 {
                gen.values_mut()[j] = ControlVec::new(0.0, 1.0, 0.0);
            }
        }
        let endpoint = flow(&s.x_i, &gen, s.t_i, s.t_f, &s).unwrap();
        let e = endpoint.final_state().elements();
        s.x_f = [e[0], e[1], e[2], e[3], e[4], e[5]];
        s
    }

    fn toy_setup(n_steps: usize) -> (MissionSpec, DetSolution, AugLagParams) {
        let s = toy_mission(n_steps);
        let grid = TimeGrid::new(s.t_i, s.t_f, n_steps).unwrap();
        let params = AugLagParams {
            max_iters: 40_000,
            polish_iters: 0,
            ..AugLagParams::default()
        };
        let det = solve_deterministic(&s, &params, &default_initial_control(grid), false).unwrap();
        assert_eq!(det.status, SolveStatus::ConvergedHit);
        (s, det, params)
    }

    fn toy_config(s: &MissionSpec, params: &AugLagParams, n_iters: usize, seed: u64) -> StochRunConfig {
        StochRunConfig {
            spec: s.clone(),
            schedules: Schedules::default(),
            n_iters,
            mu0: 0.325,
            seed,
            inner: *params,
            checkpoint_every: 0,
        }
    }

    #[test]
    fn frozen_steps_leave_the_warm_start_untouched() {
        let (s, det, params) = toy_setup(32);
        let mut cfg = toy_config(&s, &params, 12, 7);
        cfg.schedules.alpha_u = 0.0;
        cfg.schedules.alpha_mu = 0.0;
        let res = run(&cfg, &det.u_star).unwrap();
        assert_eq!(res.u_star, det.u_star);
        assert!(res.mu_trace.iter().all(|m| *m == cfg.mu0));
        let k0 = res.consumption_trace[0];
        assert!(res.consumption_trace.iter().all(|c| *c == k0));
        assert_eq!(res.mu_star, cfg.mu0);
        assert_eq!(res.scenario_log.len(), 12);
    }

    #[test]
    fn multiplier_update_matches_the_formula() {
        let (s, det, params) = toy_setup(32);
        let mut cfg = toy_config(&s, &params, 8, 11);
        // Freeze the control so every sample sees the same recourse costs,
        // and price mu far above them so recourse is always worth taking
        // when the target is reachable at all.
        cfg.schedules.alpha_u = 0.0;
        cfg.mu0 = 0.5;
        cfg.spec.p = 0.97;
        let res = run(&cfg, &det.u_star).unwrap();
        let pif = pi_f(&s.failure_law, s.t_f);
        let mut mu = cfg.mu0;
        let mut checked = 0;
        for (k, rec) in res.scenario_log.iter().enumerate() {
            match rec.status {
                // Exact hits have unit mu-slope, so the ascent direction is
                // p - pi_f - (1 - pi_f) = p - 1; abandoned samples have
                // slope 0.
                InnerStatus::HitExact => {
                    mu = (mu + cfg.schedules.eps_mu(k) * (cfg.spec.p - 1.0)).max(0.0);
                    assert!((rec.mu - mu).abs() < 1e-15, "iteration {k}: {} vs {mu}", rec.mu);
                    checked += 1;
                }
                InnerStatus::DoNothing => {
                    mu = (mu + cfg.schedules.eps_mu(k) * (cfg.spec.p - pif)).max(0.0);
                    assert!((rec.mu - mu).abs() < 1e-15, "iteration {k}: {} vs {mu}", rec.mu);
                    checked += 1;
                }
                // Near misses scale the slope by the smoothed indicator,
                // which the log does not carry; take the logged value.
                _ => mu = rec.mu,
            }
        }
        assert!(checked >= 4, "only {checked} samples had a closed-form update");
        assert!(res.counters.hit >= 1);
    }

    #[test]
    fn seeded_runs_reproduce_bitwise() {
        let (s, det, params) = toy_setup(32);
        let cfg = toy_config(&s, &params, 6, 42);
        let a = run(&cfg, &det.u_star).unwrap();
        let b = run(&cfg, &det.u_star).unwrap();
        assert_eq!(a.mu_trace, b.mu_trace);
        assert_eq!(a.consumption_trace, b.consumption_trace);
        assert_eq!(a.scenario_log, b.scenario_log);
        assert_eq!(a.u_star, b.u_star);

        let other = toy_config(&s, &params, 6, 43);
        let c = run(&other, &det.u_star).unwrap();
        let scen_a: Vec<(f64, f64)> = a.scenario_log.iter().map(|r| (r.t_p, r.t_d)).collect();
        let scen_c: Vec<(f64, f64)> = c.scenario_log.iter().map(|r| (r.t_p, r.t_d)).collect();
        assert_ne!(scen_a, scen_c);
    }

    #[test]
    fn resumed_run_matches_the_uninterrupted_one() {
        let (s, det, params) = toy_setup(32);
        let cfg = toy_config(&s, &params, 8, 3);
        let full = run(&cfg, &det.u_star).unwrap();

        let mut head_cfg = cfg.clone();
        head_cfg.n_iters = 3;
        let head = run(&head_cfg, &det.u_star).unwrap();
        assert_eq!(head.checkpoint.k, 3);
        let tail = resume(&cfg, &head.checkpoint).unwrap();

        let mut mu = head.mu_trace.clone();
        mu.extend_from_slice(&tail.mu_trace);
        assert_eq!(mu, full.mu_trace);
        let mut cons = head.consumption_trace.clone();
        cons.extend_from_slice(&tail.consumption_trace);
        assert_eq!(cons, full.consumption_trace);
        assert_eq!(tail.u_star, full.u_star);
        assert_eq!(tail.checkpoint, full.checkpoint);

        // A checkpoint round trip through JSON changes nothing.
        let json = serde_json::to_string(&head.checkpoint).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back, head.checkpoint);
    }

    #[test]
    #[ignore]
    fn probe_reference_run_cost() {
        use crate::det_solver::project_control_warm;
        use crate::failures::sample_conditional;
        use crate::inner_value::eval_w;
        use rand::SeedableRng;

        let s = MissionSpec::reference();
        let grid = TimeGrid::new(s.t_i, s.t_f, 64).unwrap();
        let n = grid.n_steps();
        let params = AugLagParams { max_iters: 30_000, polish_iters: 0, ..AugLagParams::default() };
        let t0 = std::time::Instant::now();
        let det = solve_deterministic(&s, &params, &default_initial_control(grid), false).unwrap();
        println!("det 64: {:?} iters={} K={}", t0.elapsed(), det.iters, det.consumption);

        let sched = Schedules::default();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let mut u = det.u_star.clone();
        let mut xtraj = det.x_star.clone();
        let mut ups_inner = Vec6::zeros();
        let mut ups_proj = det.upsilon;
        let mu = 0.325;
        let mut grad = vec![crate::dynamics::Vec3::zeros(); n];
        let mut kink = vec![0.0; n];
        let (mut t_w, mut t_pj) = (std::time::Duration::ZERO, std::time::Duration::ZERO);
        let (mut it_w, mut it_pj, mut n_pj) = (0u64, 0u64, 0u64);
        let pif = pi_f(&s.failure_law, s.t_f);
        let rounds = 40;
        for k in 0..rounds {
            let raw = sample_conditional(&s.failure_law, s.t_f, &mut rng);
            let j_p = grid.snap(raw.t_p).min(n - 1);
            let scen = FailureScenario { t_p: grid.node(j_p), t_d: raw.t_d };
            let x_tp = *xtraj.state_at_node(j_p);
            let c0 = std::time::Instant::now();
            let w = eval_w(&x_tp, &scen, mu, sched.radius(k), &s, &params, &u, ups_inner).unwrap();
            t_w += c0.elapsed();
            it_w += w.recourse.iters as u64;
            if w.recourse.status == SolveStatus::ConvergedHit {
                ups_inner = w.recourse.upsilon;
            }
            let mut lambda_f = Vec7::zeros();
            lambda_f[6] = -pif;
            let jumps = [(j_p, (1.0 - pif) * w.grad_x)];
            backward_sweep(&xtraj, &u, &lambda_f, &jumps, &s, Some((&mut grad, &mut kink))).unwrap();
            let mut u_half = u.clone();
            fuel_prox_update(&mut u_half, &grad, &kink, sched.eps_u(k), &s, 0);
            if u_half != u {
                let c1 = std::time::Instant::now();
                let sol = project_control_warm(&u_half, &s, &params, ups_proj, false).unwrap();
                t_pj += c1.elapsed();
                it_pj += sol.iters as u64;
                n_pj += 1;
                ups_proj = sol.upsilon;
                u = sol.u_star;
                xtraj = sol.x_star;
            }
        }
        println!(
            "{rounds} rounds: eval_w {t_w:?} ({} iters avg), projection {t_pj:?} ({} calls, {} iters avg)",
            it_w / rounds as u64,
            n_pj,
            if n_pj > 0 { it_pj / n_pj } else { 0 },
        );
    }

    #[test]
    fn iterates_stay_feasible_under_active_steps() {
        let (s, det, params) = toy_setup(32);
        let mut cfg = toy_config(&s, &params, 10, 19);
        // Large mu keeps recourse samples active so the control really moves.
        cfg.mu0 = 0.5;
        cfg.spec.p = 0.97;
        let res = run(&cfg, &det.u_star).unwrap();
        assert!(res.counters.hit > 0);
        assert!(res.u_star.values().iter().all(|u| u.norm() <= 1.0 + 1e-12));
        let n = res.u_star.grid().n_steps();
        let xcheck = flow_nodes(&s.x_i, &res.u_star, 0, n, &s).unwrap();
        let xf = xcheck.final_state().elements();
        let target = Vec6::from(s.x_f);
        assert!((xf - target).norm() <= params.tol_target, "deviation {}", (xf - target).norm());
        assert!(res.u_star != det.u_star, "control should have moved under active samples");
        assert!(res.mu_trace.iter().all(|m| *m >= 0.0));
    }
}
