//! Scene files, the reflect/wavefront pipelines, exporters and the
//! verification suite behind the `twistor` binary.

pub mod export;
pub mod expr;
pub mod run;
pub mod scene;
pub mod verify;

pub use run::RunOptions;
pub use scene::{parse_scene, SceneConfig, SceneError};
