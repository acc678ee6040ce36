//! File formats: MNIST IDX data and weight manifests.

pub mod mnist;
pub mod weights;

pub use mnist::{pixel_level, pixel_value, write_idx, Dataset};
pub use weights::{check_lenet5, load_weights, save_weights};
