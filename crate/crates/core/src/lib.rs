//! Road vs. sidewalk recognition for e-scooters from a single IMU.
//!
//! Raw 100 Hz accelerometer and gyroscope samples are low-pass filtered,
//! decimated to 20 Hz, leveled and cut into `S`-second windows that feed
//! one of five binary classifiers (three neural networks, a linear SVM and
//! a random forest).

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imu;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod simride;
pub mod stream;

pub use dataset::{Dataset, Drive, LabeledWindow, WindowConfig, ROAD, SIDEWALK};
pub use error::{Error, Result};
pub use imu::{ImuSample, ImuSeries, G0};
pub use model::{load_model, save_model, Classifier, ModelArch, TrainOptions};
pub use nn::{Arch, Network, Prediction, TrainConfig};
pub use preprocess::{preprocess_pipeline, Attitude, LeveledSeries, Pipeline};
pub use eval::{evaluate, Confusion, Metrics, MetricsReport};
pub use simride::{generate_ride, Ride, RideScript, SurfaceProfile};
pub use stream::{run_stream, StreamConfig, StreamDecision, StreamState};
