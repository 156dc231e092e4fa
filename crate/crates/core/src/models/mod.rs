//! Generators, classifiers and the nearest-neighbour wrapper.

pub mod classifier;
pub mod generator;
pub mod mlp;
pub mod projection;
pub mod training;

pub use classifier::{ClassifierKind, ClassifierModel};
pub use generator::{latent_sample, sample_latent, GeneratorKind, GeneratorModel, GradientCapability};
pub use mlp::{Activation, Dense, Mlp};
pub use projection::{project, Projection, ProjectionConfig};
pub use training::{train_mlp_classifier, LabelRule, TrainingConfig, TrainingReport};
