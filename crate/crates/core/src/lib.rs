//! Black-box identification of quadrotor attitude dynamics, end to end in software.
//!
//! The crate simulates a quadrotor under cascade attitude control, excites one
//! rotational channel at a time with a maximal-length PRBS injected at the
//! controller output, fits ARX / instrumental-variable / ARMAX models to the
//! logged closed-loop data, screens them with fit and residual tests plus a
//! closed-loop replay, and re-tunes PID and LQR controllers on the winner.
//!
//! Module map:
//!
//! - [`plant`]: rigid-body dynamics, mixer, first-order motors, RK4.
//! - [`sensing`]: IMU model, low-pass and complementary filtering.
//! - [`excitation`]: PRBS design and generation, persistency of excitation.
//! - [`control`]: PID / cascade loops, state-space realization, LQR, closed-loop rollouts.
//! - [`estimation`]: polynomial models and their estimators.
//! - [`validation`]: residual correlation tests and model ranking.
//! - [`pipeline`]: experiments, identification, re-tuning and report files.

pub mod control;
pub mod datalog;
pub mod error;
pub mod estimation;
pub mod excitation;
pub mod linalg;
pub mod numfmt;
pub mod pipeline;
pub mod plant;
pub mod sensing;
pub mod signal;
pub mod validation;

pub use error::{Error, Result};
pub use signal::Signal;
