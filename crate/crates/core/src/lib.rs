pub mod corpus;
pub mod dialog;
pub mod eval;
pub mod inference;
pub mod model;
pub mod rng;
pub mod training;

pub use model::Scalar;

pub type ModelParamsF32 = model::ModelParams<f32>;
pub type ModelParamsF64 = model::ModelParams<f64>;
pub type EncoderOutputF32 = model::EncoderOutput<f32>;
pub type DecoderOutputF32 = model::DecoderOutput<f32>;
