//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use morin_core::model::Scene;

/// Path of a scene shipped in the repository's `scenes/` directory.
pub fn scene_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(format!("{name}.toml"))
}

pub fn load(name: &str) -> Scene {
    Scene::load(scene_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}
