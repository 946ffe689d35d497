//! Polynomial input-output models and their estimators.

mod analysis;
mod approach;
mod armax;
mod arx;
mod data;
mod model;

pub use analysis::{
    aic, bode, fit_percent, frequency_response, predict_one_step, simulate_model, BodePoint,
    Prediction,
};
pub use approach::{select_approach, Approach, ApproachFlags};
pub use armax::{estimate_armax, ArmaxOptions};
pub use arx::{estimate_arx, estimate_iv};
pub use data::{build_regressors, detrend, first_row, DataRole, Dataset, Regression};
pub use model::{PolyModel, Structure, MODEL_FORMAT_HEADER};
