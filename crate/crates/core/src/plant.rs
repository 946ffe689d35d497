//! Nonlinear quadrotor model: X-frame mixer, Euler-angle rigid-body dynamics,
//! first-order motors, fixed-step RK4.
//!
//! Conventions: world frame z-up, ZYX (yaw-pitch-roll) Euler angles, body rates
//! taken as Euler-angle rates (`p = φ̇`, `q = θ̇`, `r = ψ̇`), which is valid near
//! level attitude. Rotor thrust is `k_thrust · ω²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometric factor of the X configuration, `√2 / 2`.
pub const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Rotational channel of the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Roll,
    Pitch,
    Yaw,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Roll, Channel::Pitch, Channel::Yaw];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Roll => "roll",
            Channel::Pitch => "pitch",
            Channel::Yaw => "yaw",
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "roll" => Ok(Channel::Roll),
            "pitch" => Ok(Channel::Pitch),
            "yaw" => Ok(Channel::Yaw),
            other => Err(Error::Parse(format!("unknown channel '{other}' (roll, pitch, yaw)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Propeller + rotor inertia, kg·m².
    pub jr: f64,
    /// Centre of gravity to rotor, m.
    pub arm_length: f64,
    pub gravity: f64,
    /// Yaw drag-to-thrust ratio; 1.0 reproduces the ±1 yaw row of the mixer.
    pub kappa: f64,
    /// Motor time constant, s.
    pub tau_m: f64,
    /// Thrust coefficient, N/(rad/s)².
    pub k_thrust: f64,
    /// Any state component beyond this magnitude aborts integration.
    pub divergence_bound: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            mass: 1.2,
            ix: 0.0123,
            iy: 0.0123,
            iz: 0.0224,
            jr: 6.0e-5,
            arm_length: 0.225,
            gravity: 9.81,
            kappa: 1.0,
            tau_m: 0.05,
            k_thrust: 1.14e-5,
            divergence_bound: 1e6,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("ix", self.ix),
            ("iy", self.iy),
            ("iz", self.iz),
            ("arm_length", self.arm_length),
            ("gravity", self.gravity),
            ("kappa", self.kappa),
            ("tau_m", self.tau_m),
            ("k_thrust", self.k_thrust),
            ("divergence_bound", self.divergence_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.jr >= 0.0 && self.jr.is_finite()) {
            return Err(Error::Config(format!("jr must be non-negative, got {}", self.jr)));
        }
        Ok(())
    }

    /// Rotor speed that produces `thrust` newtons.
    pub fn rotor_speed_for(&self, thrust: f64) -> f64 {
        (thrust.max(0.0) / self.k_thrust).sqrt()
    }

    pub fn hover_rotor_speed(&self) -> f64 {
        self.rotor_speed_for(self.mass * self.gravity / 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Rotor speeds, rad/s.
    pub w: [f64; 4],
}

/// `(ẋ, ẏ, ż, ẍ, ÿ, z̈, φ̇, θ̇, ψ̇, φ̈, θ̈, ψ̈)`, in [`State`] field order.
pub type StateDerivative = [f64; 12];

impl State {
    pub fn rigid(&self) -> [f64; 12] {
        [
            self.x, self.y, self.z, self.vx, self.vy, self.vz, self.phi, self.theta, self.psi,
            self.p, self.q, self.r,
        ]
    }

    pub fn with_rigid(&self, v: &[f64; 12]) -> State {
        State {
            x: v[0],
            y: v[1],
            z: v[2],
            vx: v[3],
            vy: v[4],
            vz: v[5],
            phi: v[6],
            theta: v[7],
            psi: v[8],
            p: v[9],
            q: v[10],
            r: v[11],
            w: self.w,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rigid().iter().chain(self.w.iter()).all(|v| v.is_finite())
    }

    fn max_abs(&self) -> f64 {
        self.rigid()
            .iter()
            .chain(self.w.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `U1` total thrust (N), `U2..U4` roll/pitch/yaw moments (N·m).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlVector {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
}

impl ControlVector {
    pub fn new(u1: f64, u2: f64, u3: f64, u4: f64) -> Self {
        ControlVector { u1, u2, u3, u4 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.u1, self.u2, self.u3, self.u4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorSet {
    /// Per-rotor thrust, N.
    pub thrust: [f64; 4],
    /// Gyroscopic speed sum, rad/s.
    pub omega_bar: f64,
}

impl RotorSet {
    pub fn from_speeds(w: [f64; 4], params: &QuadParams) -> RotorSet {
        RotorSet {
            thrust: w.map(|wi| params.k_thrust * wi * wi),
            omega_bar: gyro_sum(w[0], w[1], w[2], w[3]),
        }
    }
}

/// Thrusts to total thrust and body moments.
///
/// Rows 2–3 carry the moment arm `l·h`; row 4 is scaled by `kappa`.
pub fn mix_forces(f: &RotorSet, params: &QuadParams) -> Result<ControlVector> {
    if let Some(bad) = f.thrust.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Domain(format!(
            "rotor thrust must be finite and non-negative, got {bad}"
        )));
    }
    let [f1, f2, f3, f4] = f.thrust;
    let lh = params.arm_length * H;
    Ok(ControlVector {
        u1: f1 + f2 + f3 + f4,
        u2: lh * (f1 - f2 - f3 + f4),
        u3: lh * (f1 + f2 - f3 - f4),
        u4: params.kappa * (f1 - f2 + f3 - f4),
    })
}

/// Inverse of [`mix_forces`]; thrusts that would go negative are clipped at 0.
pub fn allocate(u: &ControlVector, params: &QuadParams) -> [f64; 4] {
    let lh = params.arm_length * H;
    let a = u.u1;
    let b = u.u2 / lh;
    let c = u.u3 / lh;
    let d = u.u4 / params.kappa;
    [
        0.25 * (a + b + c + d),
        0.25 * (a - b + c - d),
        0.25 * (a - b - c + d),
        0.25 * (a + b - c - d),
    ]
    .map(|f| f.max(0.0))
}

/// Gyroscopic speed sum with the rotor grouping `ω1 − ω3 + ω2 − ω4`.
pub fn gyro_sum(w1: f64, w2: f64, w3: f64, w4: f64) -> f64 {
    w1 - w3 + w2 - w4
}

pub fn rigid_body_derivatives(
    s: &State,
    u: &ControlVector,
    omega_bar: f64,
    params: &QuadParams,
) -> Result<StateDerivative> {
    if !s.is_finite() || !u.as_array().iter().all(|v| v.is_finite()) || !omega_bar.is_finite() {
        return Err(Error::Domain("non-finite state or input".into()));
    }
    let QuadParams {
        mass: m,
        ix,
        iy,
        iz,
        jr,
        gravity: g,
        ..
    } = *params;
    let (sphi, cphi) = s.phi.sin_cos();
    let (sth, cth) = s.theta.sin_cos();
    let (spsi, cpsi) = s.psi.sin_cos();
    let (dphi, dth, dpsi) = (s.p, s.q, s.r);

    let ax = (cphi * sth * cpsi + sphi * spsi) * u.u1 / m;
    let ay = (cphi * sth * spsi - sphi * cpsi) * u.u1 / m;
    // grouped so that the trim point cancels exactly
    let az = (cphi * cth * u.u1 - m * g) / m;
    let ddphi = u.u2 / ix + (iy - iz) / ix * dpsi * dth - jr / ix * omega_bar * dth;
    let ddth = u.u3 / iy + (iz - ix) / iy * dpsi * dphi - jr / iy * omega_bar * dphi;
    let ddpsi = u.u4 / iz + (ix - iy) / iz * dphi * dth;

    Ok([
        s.vx, s.vy, s.vz, ax, ay, az, dphi, dth, dpsi, ddphi, ddth, ddpsi,
    ])
}

/// Exact discretization of `ẇ = (w_cmd − w) / tau_m` over `dt`.
pub fn motor_step(w: f64, w_cmd: f64, tau_m: f64, dt: f64) -> f64 {
    w_cmd + (w - w_cmd) * (-dt / tau_m).exp()
}

/// One RK4 step with `u` as the commanded control vector.
///
/// The command is allocated to per-rotor speed set-points; rotor speeds follow
/// their first-order lag in closed form, and every RK4 stage sees the thrusts
/// and gyroscopic sum of the rotors at that stage's time.
pub fn step_rk4(s: &State, u: &ControlVector, dt: f64, params: &QuadParams) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let w_cmd = allocate(u, params).map(|f| params.rotor_speed_for(f));
    let rotors_at = |tau: f64| -> [f64; 4] {
        let mut w = [0.0; 4];
        for i in 0..4 {
            w[i] = motor_step(s.w[i], w_cmd[i], params.tau_m, tau);
        }
        w
    };
    let eval = |x: &[f64; 12], tau: f64| -> Result<[f64; 12]> {
        let w = if tau == 0.0 { s.w } else { rotors_at(tau) };
        let rotors = RotorSet::from_speeds(w, params);
        let u_eff = mix_forces(&rotors, params)?;
        rigid_body_derivatives(&s.with_rigid(x), &u_eff, rotors.omega_bar, params)
    };
    let axpy = |x: &[f64; 12], k: &[f64; 12], h: f64| -> [f64; 12] {
        let mut out = *x;
        for i in 0..12 {
            out[i] += h * k[i];
        }
        out
    };

    let x0 = s.rigid();
    let k1 = eval(&x0, 0.0)?;
    let k2 = eval(&axpy(&x0, &k1, dt / 2.0), dt / 2.0)?;
    let k3 = eval(&axpy(&x0, &k2, dt / 2.0), dt / 2.0)?;
    let k4 = eval(&axpy(&x0, &k3, dt), dt)?;
    let mut x1 = x0;
    for i in 0..12 {
        x1[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    let mut next = s.with_rigid(&x1);
    next.w = rotors_at(dt);
    if !next.is_finite() || next.max_abs() > params.divergence_bound {
        return Err(Error::Integration(format!(
            "state magnitude {:.3e} exceeds bound {:.3e}",
            next.max_abs(),
            params.divergence_bound
        )));
    }
    Ok(next)
}

/// Level hover: zero kinematic state, rotors spinning at hover speed, `U1 = m·g`.
pub fn trim_hover(params: &QuadParams) -> (State, ControlVector) {
    let w = params.hover_rotor_speed();
    let state = State {
        w: [w; 4],
        ..State::default()
    };
    (
        state,
        ControlVector::new(params.mass * params.gravity, 0.0, 0.0, 0.0),
    )
}
