//! Satellite dynamics in equinoctial coordinates.
//!
//! State is x = (p, e_x, e_y, h_x, h_y, l, m): semi-latus rectum,
//! eccentricity vector, inclination vector, true longitude and mass, all in
//! scaled units. Thrust enters through Gauss' variational equations with a
//! control u = (q, s, w) (radial, tangential, normal components) constrained
//! to the unit ball. Jacobians with respect to control and state are analytic
//! and are cross-checked against finite differences in the tests.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::failures::FailureLaw;

pub type Vec3 = SVector<f64, 3>;
pub type Vec6 = SVector<f64, 6>;
pub type Vec7 = SVector<f64, 7>;
pub type Mat3 = SMatrix<f64, 3, 3>;
pub type Mat3x6 = SMatrix<f64, 3, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Mat7x3 = SMatrix<f64, 7, 3>;
pub type Mat7x6 = SMatrix<f64, 7, 6>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("orbit factor Z = {0} is not positive; equinoctial parameterization broke down")]
    NonpositiveZ(f64),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("semi-latus rectum p = {0} is not positive")]
    NonpositiveP(f64),
    #[error("mass m = {0} is not positive")]
    NonpositiveMass(f64),
    #[error("inclination {0} rad is at or past the tan(i/2) singularity")]
    InclinationSingular(f64),
}

/// Satellite state: five slow equinoctial elements, the (unwrapped) true
/// longitude, and the mass. Initial mass is 1 in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatState {
    pub p: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub h_x: f64,
    pub h_y: f64,
    /// True longitude, kept unwrapped (no modulo 2*pi) so that target
    /// deviations stay smooth across revolutions.
    pub l: f64,
    pub m: f64,
}

impl SatState {
    pub fn from_vec7(v: &Vec7) -> Self {
        SatState { p: v[0], e_x: v[1], e_y: v[2], h_x: v[3], h_y: v[4], l: v[5], m: v[6] }
    }

    pub fn to_vec7(&self) -> Vec7 {
        Vec7::from([self.p, self.e_x, self.e_y, self.h_x, self.h_y, self.l, self.m])
    }

    /// The six orbital components (mass excluded), the coordinates the
    /// rendezvous constraint acts on.
    pub fn elements(&self) -> Vec6 {
        Vec6::from([self.p, self.e_x, self.e_y, self.h_x, self.h_y, self.l])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec7().iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !self.is_finite() {
            return Err(DynamicsError::NonFinite("state"));
        }
        if self.p <= 0.0 {
            return Err(DynamicsError::NonpositiveP(self.p));
        }
        if self.m <= 0.0 {
            return Err(DynamicsError::NonpositiveMass(self.m));
        }
        Ok(())
    }
}

/// Thrust direction and magnitude: q radial, s tangential, w normal.
/// Norm at most 1 (fraction of maximum thrust).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlVec {
    pub q: f64,
    pub s: f64,
    pub w: f64,
}

impl ControlVec {
    pub const ZERO: ControlVec = ControlVec { q: 0.0, s: 0.0, w: 0.0 };

    pub fn new(q: f64, s: f64, w: f64) -> Self {
        ControlVec { q, s, w }
    }

    pub fn norm(&self) -> f64 {
        (self.q * self.q + self.s * self.s + self.w * self.w).sqrt()
    }

    pub fn to_vec3(&self) -> Vec3 {
        Vec3::from([self.q, self.s, self.w])
    }

    pub fn from_vec3(v: &Vec3) -> Self {
        ControlVec { q: v[0], s: v[1], w: v[2] }
    }

    /// Radial scaling onto the closed unit ball (closed-form projection).
    pub fn clamp_to_ball(&self) -> Self {
        let n = self.norm();
        if n <= 1.0 {
            *self
        } else {
            ControlVec { q: self.q / n, s: self.s / n, w: self.w / n }
        }
    }
}

/// Classical orbital elements, used only for input conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerianElements {
    /// Semi-major axis.
    pub a: f64,
    /// Eccentricity.
    pub e: f64,
    /// Inclination (radians).
    pub i: f64,
    /// Argument of periapsis (radians).
    pub omega: f64,
    /// Longitude of the ascending node (radians).
    pub raan: f64,
    /// True anomaly (radians).
    pub nu_an: f64,
}

/// Everything that defines one rendezvous mission: physical constants, the
/// time window, boundary states, the engine failure law and the required
/// success probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSpec {
    /// Maximum thrust (scaled).
    pub thrust: f64,
    /// Product g0 * Isp (scaled); thrust / g0_isp is the mass flow at full throttle.
    pub g0_isp: f64,
    /// Gravitational parameter (scaled).
    pub nu_grav: f64,
    pub t_i: f64,
    pub t_f: f64,
    pub x_i: SatState,
    /// Target values for the six orbital components at t_f.
    pub x_f: [f64; 6],
    pub failure_law: FailureLaw,
    /// Required probability of reaching the target despite failures.
    pub p: f64,
}

impl MissionSpec {
    /// The interplanetary transfer mission bundled as the default CLI config:
    /// a ~470-day scaled low-thrust rendezvous with exponential failure laws.
    pub fn reference() -> Self {
        MissionSpec {
            thrust: 0.0336750,
            g0_isp: 0.4936891,
            nu_grav: 1.0,
            t_i: 0.6888699,
            t_f: 8.7830909,
            x_i: SatState {
                p: 0.999702,
                e_x: -0.003359,
                e_y: 0.016942,
                h_x: -0.000011,
                h_y: 0.000007,
                l: 36.52939,
                m: 1.0,
            },
            x_f: [1.511514, 0.085367, -0.037923, 0.010474, 0.012275, 42.17610],
            failure_law: FailureLaw {
                t_p_min: 0.68887,
                scale_p: 15.1711,
                t_d_min: 0.03444,
                scale_d: 0.05350,
            },
            p: 0.95,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_i < self.t_f) {
            return Err(format!("t_i = {} must be < t_f = {}", self.t_i, self.t_f));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(format!("probability level p = {} must lie in (0, 1)", self.p));
        }
        if self.thrust <= 0.0 || self.g0_isp <= 0.0 || self.nu_grav <= 0.0 {
            return Err("thrust, g0_isp and nu_grav must be positive".into());
        }
        self.x_i.validate().map_err(|e| e.to_string())?;
        self.failure_law.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Fuel consumed at a final state: initial mass minus final mass.
    pub fn consumption(&self, final_state: &SatState) -> f64 {
        self.x_i.m - final_state.m
    }

    pub fn target(&self) -> Vec6 {
        Vec6::from(self.x_f)
    }
}

/// Quantities shared by the dynamics, its Jacobians and the integrator
/// stages; computing them once per state evaluation keeps the adjoint sweep
/// free of redundant trigonometry.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StateCtx {
    pub sinl: f64,
    pub cosl: f64,
    /// Z = 1 + e_x cos l + e_y sin l
    pub z: f64,
    /// A = e_x + (1 + Z) cos l
    pub a: f64,
    /// B = e_y + (1 + Z) sin l
    pub b: f64,
    /// F = h_x sin l - h_y cos l
    pub f: f64,
    /// X = 1 + h_x^2 + h_y^2
    pub x2: f64,
    /// K_a = sqrt(p/nu) * (T/m) / Z
    pub ka: f64,
    /// sqrt(nu / p^3)
    pub d: f64,
}

impl StateCtx {
    pub fn new(x: &SatState, spec: &MissionSpec) -> Result<Self, DynamicsError> {
        if x.p <= 0.0 {
            return Err(DynamicsError::NonpositiveP(x.p));
        }
        if x.m <= 0.0 {
            return Err(DynamicsError::NonpositiveMass(x.m));
        }
        let (sinl, cosl) = x.l.sin_cos();
        let z = 1.0 + x.e_x * cosl + x.e_y * sinl;
        if z <= 0.0 {
            return Err(DynamicsError::NonpositiveZ(z));
        }
        let sp = (x.p / spec.nu_grav).sqrt();
        let g = spec.thrust / x.m;
        Ok(StateCtx {
            sinl,
            cosl,
            z,
            a: x.e_x + (1.0 + z) * cosl,
            b: x.e_y + (1.0 + z) * sinl,
            f: x.h_x * sinl - x.h_y * cosl,
            x2: 1.0 + x.h_x * x.h_x + x.h_y * x.h_y,
            ka: sp * g / z,
            d: 1.0 / (sp * x.p),
        })
    }
}

pub(crate) fn gauss_rhs_ctx(x: &SatState, u: &ControlVec, spec: &MissionSpec, c: &StateCtx) -> Vec7 {
    let (q, s, w) = (u.q, u.s, u.w);
    Vec7::from([
        2.0 * x.p * c.ka * s,
        c.ka * (c.z * c.sinl * q + c.a * s - x.e_y * c.f * w),
        c.ka * (-c.z * c.cosl * q + c.b * s + x.e_x * c.f * w),
        0.5 * c.ka * c.x2 * c.cosl * w,
        0.5 * c.ka * c.x2 * c.sinl * w,
        c.d * c.z * c.z + c.ka * c.f * w,
        -(spec.thrust / spec.g0_isp) * u.norm(),
    ])
}

/// Time derivative of the state under Gauss' variational equations.
pub fn gauss_rhs(x: &SatState, u: &ControlVec, spec: &MissionSpec) -> Result<Vec7, DynamicsError> {
    let c = StateCtx::new(x, spec)?;
    let dx = gauss_rhs_ctx(x, u, spec, &c);
    if dx.iter().all(|v| v.is_finite()) {
        Ok(dx)
    } else {
        Err(DynamicsError::NonFinite("gauss_rhs"))
    }
}

pub(crate) fn dfdu_ctx(x: &SatState, u: &ControlVec, spec: &MissionSpec, c: &StateCtx) -> Mat7x3 {
    let mut j = Mat7x3::zeros();
    j[(0, 1)] = 2.0 * c.ka * x.p;
    j[(1, 0)] = c.ka * c.z * c.sinl;
    j[(1, 1)] = c.ka * c.a;
    j[(1, 2)] = -c.ka * x.e_y * c.f;
    j[(2, 0)] = -c.ka * c.z * c.cosl;
    j[(2, 1)] = c.ka * c.b;
    j[(2, 2)] = c.ka * x.e_x * c.f;
    j[(3, 2)] = 0.5 * c.ka * c.x2 * c.cosl;
    j[(4, 2)] = 0.5 * c.ka * c.x2 * c.sinl;
    j[(5, 2)] = c.ka * c.f;
    let n = u.norm();
    // Mass row is the gradient of -T/(g0 Isp) * ||u||; at u = 0 we return the
    // zero subgradient so that coast arcs stay well-defined update points.
    if n > 0.0 {
        let gamma = -spec.thrust / spec.g0_isp;
        j[(6, 0)] = gamma * u.q / n;
        j[(6, 1)] = gamma * u.s / n;
        j[(6, 2)] = gamma * u.w / n;
    }
    j
}

/// Jacobian of `gauss_rhs` with respect to the control components.
pub fn dfdu(x: &SatState, u: &ControlVec, spec: &MissionSpec) -> Result<Mat7x3, DynamicsError> {
    let c = StateCtx::new(x, spec)?;
    Ok(dfdu_ctx(x, u, spec, &c))
}

pub(crate) fn dfdx_ctx(x: &SatState, u: &ControlVec, spec: &MissionSpec, c: &StateCtx) -> Mat7 {
    let _ = spec;
    let (q, s, w) = (u.q, u.s, u.w);
    let (sinl, cosl) = (c.sinl, c.cosl);
    let (z, ka, d) = (c.z, c.ka, c.d);
    // Longitude derivatives of the trigonometric groups.
    let zl = -x.e_x * sinl + x.e_y * cosl;
    let fl = x.h_x * cosl + x.h_y * sinl;

    let mut j = Mat7::zeros();

    // Row 0: dp/dt = 2 p K_a s.
    let f0 = 2.0 * x.p * ka * s;
    j[(0, 0)] = 3.0 * ka * s;
    j[(0, 1)] = -f0 * cosl / z;
    j[(0, 2)] = -f0 * sinl / z;
    j[(0, 5)] = -f0 * zl / z;
    j[(0, 6)] = -f0 / x.m;

    // Row 1: de_x/dt = K_a * E2, E2 = Z sin l q + A s - e_y F w.
    let e2 = z * sinl * q + c.a * s - x.e_y * c.f * w;
    let e2_ex = cosl * sinl * q + (1.0 + cosl * cosl) * s;
    let e2_ey = sinl * sinl * q + sinl * cosl * s - c.f * w;
    let e2_l = (zl * sinl + z * cosl) * q + (-(1.0 + z) * sinl + cosl * zl) * s - x.e_y * fl * w;
    j[(1, 0)] = ka * e2 / (2.0 * x.p);
    j[(1, 1)] = ka * (e2_ex - e2 * cosl / z);
    j[(1, 2)] = ka * (e2_ey - e2 * sinl / z);
    j[(1, 3)] = -ka * x.e_y * sinl * w;
    j[(1, 4)] = ka * x.e_y * cosl * w;
    j[(1, 5)] = ka * (e2_l - e2 * zl / z);
    j[(1, 6)] = -ka * e2 / x.m;

    // Row 2: de_y/dt = K_a * E3, E3 = -Z cos l q + B s + e_x F w.
    let e3 = -z * cosl * q + c.b * s + x.e_x * c.f * w;
    let e3_ex = -cosl * cosl * q + sinl * cosl * s + c.f * w;
    let e3_ey = -sinl * cosl * q + (1.0 + sinl * sinl) * s;
    let e3_l = (-zl * cosl + z * sinl) * q + ((1.0 + z) * cosl + sinl * zl) * s + x.e_x * fl * w;
    j[(2, 0)] = ka * e3 / (2.0 * x.p);
    j[(2, 1)] = ka * (e3_ex - e3 * cosl / z);
    j[(2, 2)] = ka * (e3_ey - e3 * sinl / z);
    j[(2, 3)] = ka * x.e_x * sinl * w;
    j[(2, 4)] = -ka * x.e_x * cosl * w;
    j[(2, 5)] = ka * (e3_l - e3 * zl / z);
    j[(2, 6)] = -ka * e3 / x.m;

    // Row 3: dh_x/dt = (1/2) K_a X cos l w.
    let f3 = 0.5 * ka * c.x2 * cosl * w;
    j[(3, 0)] = f3 / (2.0 * x.p);
    j[(3, 1)] = -f3 * cosl / z;
    j[(3, 2)] = -f3 * sinl / z;
    j[(3, 3)] = ka * x.h_x * cosl * w;
    j[(3, 4)] = ka * x.h_y * cosl * w;
    j[(3, 5)] = -0.5 * ka * c.x2 * w * (zl * cosl / z + sinl);
    j[(3, 6)] = -f3 / x.m;

    // Row 4: dh_y/dt = (1/2) K_a X sin l w.
    let f4 = 0.5 * ka * c.x2 * sinl * w;
    j[(4, 0)] = f4 / (2.0 * x.p);
    j[(4, 1)] = -f4 * cosl / z;
    j[(4, 2)] = -f4 * sinl / z;
    j[(4, 3)] = ka * x.h_x * sinl * w;
    j[(4, 4)] = ka * x.h_y * sinl * w;
    j[(4, 5)] = 0.5 * ka * c.x2 * w * (-zl * sinl / z + cosl);
    j[(4, 6)] = -f4 / x.m;

    // Row 5: dl/dt = sqrt(nu/p^3) Z^2 + K_a F w.
    j[(5, 0)] = -1.5 * d * z * z / x.p + ka * c.f * w / (2.0 * x.p);
    j[(5, 1)] = 2.0 * d * z * cosl - ka * c.f * w * cosl / z;
    j[(5, 2)] = 2.0 * d * z * sinl - ka * c.f * w * sinl / z;
    j[(5, 3)] = ka * sinl * w;
    j[(5, 4)] = -ka * cosl * w;
    j[(5, 5)] = 2.0 * d * z * zl + ka * w * (fl - c.f * zl / z);
    j[(5, 6)] = -ka * c.f * w / x.m;

    // Row 6 (mass) does not depend on the state.
    j
}

/// Jacobian of `gauss_rhs` with respect to the state.
pub fn dfdx(x: &SatState, u: &ControlVec, spec: &MissionSpec) -> Result<Mat7, DynamicsError> {
    let c = StateCtx::new(x, spec)?;
    Ok(dfdx_ctx(x, u, spec, &c))
}

/// Hamiltonian lambda . f(x, u).
pub fn hamiltonian(
    x: &SatState,
    u: &ControlVec,
    lambda: &Vec7,
    spec: &MissionSpec,
) -> Result<f64, DynamicsError> {
    Ok(gauss_rhs(x, u, spec)?.dot(lambda))
}

/// Conversion from classical orbital elements to the six equinoctial
/// components (p, e_x, e_y, h_x, h_y, l).
pub fn keplerian_to_equinoctial(k: &KeplerianElements) -> Result<Vec6, DynamicsError> {
    if !(k.i >= 0.0 && k.i < std::f64::consts::PI) {
        return Err(DynamicsError::InclinationSingular(k.i));
    }
    let p = k.a * (1.0 - k.e * k.e).abs();
    let lon_peri = k.omega + k.raan;
    let ti2 = (0.5 * k.i).tan();
    Ok(Vec6::from([
        p,
        k.e * lon_peri.cos(),
        k.e * lon_peri.sin(),
        ti2 * k.raan.cos(),
        ti2 * k.raan.sin(),
        lon_peri + k.nu_an,
    ]))
}

/// Deviation of the six orbital components from the mission target
/// (Euclidean geometry on scaled coordinates; mass excluded).
pub fn target_deviation(x: &SatState, spec: &MissionSpec) -> Vec6 {
    x.elements() - spec.target()
}
