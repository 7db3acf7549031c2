#![allow(dead_code)]

use std::path::PathBuf;

use cfnav::scenario::SensorSpec;
use cfnav::Scenario;

pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// One noiseless sensor covering the whole arena.
pub fn perfect_sensor(id: u32) -> SensorSpec {
    SensorSpec {
        id,
        position: [0.0, 0.0],
        fov: vec![[-50.0, -50.0], [50.0, -50.0], [50.0, 50.0], [-50.0, 50.0]],
        noise_sigma: 0.0,
        detection_rate: 1.0,
        false_positive_rate: 0.0,
        appearance_noise: 0.0,
        occlusions: Vec::new(),
    }
}
