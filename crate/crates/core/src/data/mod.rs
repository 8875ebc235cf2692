//! Synthetic shapes, dataset assembly and run configuration.

mod config;
mod dataset;
mod shapes;

pub use config::RunConfig;
pub use dataset::{
    build_item, generate_dataset, random_shape_spec, read_dataset, split, write_dataset, DatasetItem,
};
pub use shapes::{sample_shape, ShapeKind, ShapeSpec};
