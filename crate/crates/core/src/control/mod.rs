//! Cascade PID loops, state-space realization of polynomial models, LQR and
//! closed-loop rollouts.

mod closed_loop;
mod lqr;
mod pid;
mod statespace;

pub use closed_loop::{closedloop_simulate, ChannelPlant, Controller, ModelPlant, RolloutOptions};
pub use lqr::{lqr_design, Lqr, RICCATI_TOLERANCE};
pub use pid::{cascade_step, pid_step, CascadeConfig, CascadeState, InjectionPort, PidGains, PidState};
pub use statespace::{augment_with_angle, poly_to_statespace, StateSpace};
