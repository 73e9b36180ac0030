pub mod bench;
pub mod descriptor;
pub mod error;
pub mod fit;
pub mod group_reps;
pub mod image;
pub mod io;
pub mod keypoints;
pub mod linalg;
pub mod matcher;

pub use error::{Error, Result};
