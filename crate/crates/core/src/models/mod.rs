//! The SA2SL Bi-LSTM network, its LSTM and CNN baselines, training and
//! inference.

pub mod bundle;
pub mod config;
pub mod network;
pub mod predict;
pub mod train;

pub use bundle::{bundle_kind, load_model, load_params, save_params, AnyModel};
pub use config::{apply_config_text, set_config_value, Architecture, ModelConfig, TrainConfig};
pub use network::{Body, NetParams};
pub use predict::{argmax, build_model, decode, NeuralModel, Prediction, Predictor};
pub use train::{train, train_model, EpochRecord, TrainingHistory};
