//! Ground-truth plants and the exogenous signals acting on them.
//!
//! Nothing here is visible to the model-free controller; the simulator
//! integrates these models and hands the controller only measurements.

mod disturbance;
mod dynamics;
mod events;
mod noise;

pub use disturbance::{disturbance_value, DisturbanceSignal, DisturbanceTerm, Disturbances};
pub use dynamics::{
    check_full_column_rank, eval_dynamics, input_map_sigma_min, ControlAffine, LinearPlant, Pendulum, Plant,
};
pub use events::{apply_event_schedule, Environment, Event, EventAction, EventSchedule};
pub use noise::{add_measurement_noise, MeasurementNoise, NoiseSpec};
