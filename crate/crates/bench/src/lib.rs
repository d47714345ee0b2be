//! Shared fixtures for the criterion benchmarks.

use witloc_core::channel::{ChannelConfig, Material, Scene, SceneSpec};
use witloc_core::dataset::ScenarioConfig;

/// Full-scale single-BS link: 64 antennas, 32 active subcarriers.
pub fn full_scale_config() -> ScenarioConfig {
    ScenarioConfig {
        scene: SceneSpec {
            roi_x: (0.0, 600.0),
            roi_y: (0.0, 600.0),
            n_transmitters: 16,
            n_scatterers: 20,
            n_movable: 12,
            tx_height: 1.5,
            rrh_height: 20.0,
            scatterer_max_height: 10.0,
            grid_spacing: 0.0,
        },
        channel: ChannelConfig {
            carrier_hz: 3.5e9,
            bandwidth_hz: 20e6,
            n_subcarriers: 512,
            stride: 16,
            max_paths: 4,
            tx_power_dbm: 20.0,
            rain_attenuation_db: 3.0,
            nlos_extra_loss: 1.0,
            materials: vec![
                Material { name: "concrete".into(), amplitude: 0.5 },
                Material { name: "brick".into(), amplitude: 0.45 },
                Material { name: "metal".into(), amplitude: 0.9 },
                Material { name: "wood".into(), amplitude: 0.35 },
            ],
        },
        mx: 8,
        mz: 8,
        n_rrh: 1,
        snapshots: 2,
        sigma_z: 1.0,
        sigma_n: 0.1,
        p_rain: 0.3,
        power_threshold_dbm: -130.0,
        threads: 1,
    }
}

pub fn sample_scene(cfg: &ScenarioConfig, seed: u64) -> Scene {
    witloc_core::channel::build_scene(&cfg.scene, cfg.n_rrh, cfg.channel.materials.len(), seed)
        .expect("valid spec")
}
