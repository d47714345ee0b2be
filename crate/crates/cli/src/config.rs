//! Plain-text `key = value` configuration files.
//!
//! Lines starting with `#` (or the remainder of a line after `#`) are
//! comments. Every key has a documented default; unknown and duplicate keys
//! are rejected.

use std::collections::HashMap;

use witloc_core::channel::{ChannelConfig, Material, SceneSpec};
use witloc_core::dataset::ScenarioConfig;
use witloc_core::error::{Error, Result};
use witloc_core::model::PoolingMode;

#[derive(Clone, Debug)]
pub struct ModelSettings {
    pub d_model: usize,
    pub dropout: f64,
    pub pooling: PoolingMode,
    pub gamma: f64,
    pub beta: f64,
    pub blocks: usize,
    pub learn_layer_norm: bool,
}

#[derive(Clone, Debug)]
pub struct TrainingSettings {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Early-stop patience; applied to the base DNN only.
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub model: ModelSettings,
    pub training: TrainingSettings,
    pub split_ratio: f64,
    pub normalize_train_only: bool,
}

const KEYS: &[&str] = &[
    // scenario
    "r",
    "t",
    "s",
    "s_movable",
    "m",
    "mx",
    "mz",
    "f_c_hz",
    "bandwidth_hz",
    "n_c",
    "stride",
    "l_paths",
    "sigma_z_m",
    "sigma_n_m",
    "p_rain",
    "rain_db",
    "tx_power_dbm",
    "power_threshold_dbm",
    "roi_x_min",
    "roi_x_max",
    "roi_y_min",
    "roi_y_max",
    "tx_height_m",
    "rrh_height_m",
    "scatterer_max_height_m",
    "grid_spacing_m",
    "materials",
    "nlos_extra_loss",
    "normalize_train_only",
    "split_ratio",
    // model
    "d_model",
    "dropout",
    "pooling",
    "gamma",
    "beta",
    "blocks",
    "learn_layer_norm",
    // training
    "lr",
    "batch",
    "epochs",
    "patience",
    "weight_decay",
    "seed",
];

fn parse_pairs(text: &str) -> Result<HashMap<String, String>> {
    let mut pairs = HashMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {raw:?}", line_no + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key {key:?}", line_no + 1)));
        }
        if pairs.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", line_no + 1)));
        }
    }
    Ok(pairs)
}

struct Reader {
    pairs: HashMap<String, String>,
}

impl Reader {
    fn f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.pairs.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("key {key}: not a number: {v:?}"))),
        }
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.pairs.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("key {key}: not an integer: {v:?}"))),
        }
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.pairs.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("key {key}: not an integer: {v:?}"))),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.pairs.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!("key {key}: expected true/false, got {v:?}"))),
        }
    }

    fn pooling(&self, key: &str, default: PoolingMode) -> Result<PoolingMode> {
        match self.pairs.get(key).map(String::as_str) {
            None => Ok(default),
            Some("avg") => Ok(PoolingMode::Average),
            Some("lid") => Ok(PoolingMode::Lid),
            Some(v) => Err(Error::Config(format!("key {key}: expected avg or lid, got {v:?}"))),
        }
    }

    fn materials(&self, key: &str) -> Result<Vec<Material>> {
        let default = "concrete:0.5,brick:0.45,metal:0.9,wood:0.35";
        let spec = self.pairs.get(key).map(String::as_str).unwrap_or(default);
        let mut out = Vec::new();
        for entry in spec.split(',') {
            let entry = entry.trim();
            if entry.is_empty() {
                continue;
            }
            let (name, amp) = entry.split_once(':').ok_or_else(|| {
                Error::Config(format!("materials entry {entry:?}: expected name:amplitude"))
            })?;
            let amplitude = amp
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("materials entry {entry:?}: bad amplitude")))?;
            out.push(Material {
                name: name.trim().to_string(),
                amplitude,
            });
        }
        if out.is_empty() {
            return Err(Error::Config("materials list is empty".into()));
        }
        Ok(out)
    }
}

/// Parse a config file body, filling unset keys with the documented
/// defaults (single-BS S-scenario numerology).
pub fn parse_config(text: &str) -> Result<Config> {
    let reader = Reader {
        pairs: parse_pairs(text)?,
    };
    let r = &reader;

    let scenario = ScenarioConfig {
        scene: SceneSpec {
            roi_x: (r.f64("roi_x_min", 0.0)?, r.f64("roi_x_max", 600.0)?),
            roi_y: (r.f64("roi_y_min", 0.0)?, r.f64("roi_y_max", 600.0)?),
            n_transmitters: r.usize("r", 360)?,
            n_scatterers: r.usize("s", 20)?,
            n_movable: r.usize("s_movable", 12)?,
            tx_height: r.f64("tx_height_m", 1.5)?,
            rrh_height: r.f64("rrh_height_m", 20.0)?,
            scatterer_max_height: r.f64("scatterer_max_height_m", 10.0)?,
            grid_spacing: r.f64("grid_spacing_m", 0.0)?,
        },
        channel: ChannelConfig {
            carrier_hz: r.f64("f_c_hz", 3.5e9)?,
            bandwidth_hz: r.f64("bandwidth_hz", 20e6)?,
            n_subcarriers: r.usize("n_c", 512)?,
            stride: r.usize("stride", 16)?,
            max_paths: r.usize("l_paths", 4)?,
            tx_power_dbm: r.f64("tx_power_dbm", 20.0)?,
            rain_attenuation_db: r.f64("rain_db", 3.0)?,
            nlos_extra_loss: r.f64("nlos_extra_loss", 1.0)?,
            materials: r.materials("materials")?,
        },
        mx: r.usize("mx", 8)?,
        mz: r.usize("mz", 8)?,
        n_rrh: r.usize("m", 1)?,
        snapshots: r.usize("t", 200)?,
        sigma_z: r.f64("sigma_z_m", 1.0)?,
        sigma_n: r.f64("sigma_n_m", 0.1)?,
        p_rain: r.f64("p_rain", 0.3)?,
        power_threshold_dbm: r.f64("power_threshold_dbm", -130.0)?,
        threads: 0,
    };
    let model = ModelSettings {
        d_model: r.usize("d_model", 650)?,
        dropout: r.f64("dropout", 0.1)?,
        pooling: r.pooling("pooling", PoolingMode::Average)?,
        gamma: r.f64("gamma", 1.0)?,
        beta: r.f64("beta", 1e-4)?,
        blocks: r.usize("blocks", 1)?,
        learn_layer_norm: r.bool("learn_layer_norm", false)?,
    };
    let training = TrainingSettings {
        lr: r.f64("lr", 3e-4)?,
        batch: r.usize("batch", 512)?,
        epochs: r.usize("epochs", 300)?,
        patience: r.usize("patience", 80)?,
        weight_decay: r.f64("weight_decay", 1e-4)?,
        seed: r.u64("seed", 1)?,
    };
    Ok(Config {
        scenario,
        model,
        training,
        split_ratio: r.f64("split_ratio", 0.75)?,
        normalize_train_only: r.bool("normalize_train_only", false)?,
    })
}

/// Built-in preset bodies, shipped verbatim from `presets/`.
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "tiny" => Some(include_str!("../presets/tiny.cfg")),
        "s-static" => Some(include_str!("../presets/s-static.cfg")),
        "s-dynamic" => Some(include_str!("../presets/s-dynamic.cfg")),
        "hb-das" => Some(include_str!("../presets/hb-das.cfg")),
        _ => None,
    }
}

pub fn preset_names() -> &'static [&'static str] {
    &["tiny", "s-static", "s-dynamic", "hb-das"]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_single_bs_numerology() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.scenario.channel.delta_f(), 39_062.5);
        assert_eq!(cfg.scenario.channel.active_subcarriers().len(), 32);
        assert_eq!(cfg.scenario.n_antennas(), 64);
        assert_eq!(cfg.model.d_model, 650);
        assert_eq!(cfg.training.lr, 3e-4);
        assert_eq!(cfg.split_ratio, 0.75);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config("nonsense = 1\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(parse_config("lr = 0.1\nlr = 0.2\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = parse_config("# full comment\n\nlr = 0.01  # trailing\n").unwrap();
        assert_eq!(cfg.training.lr, 0.01);
    }

    #[test]
    fn materials_parse() {
        let cfg = parse_config("materials = steel:0.8, glass:0.2\n").unwrap();
        assert_eq!(cfg.scenario.channel.materials.len(), 2);
        assert_eq!(cfg.scenario.channel.materials[0].name, "steel");
        assert_eq!(cfg.scenario.channel.materials[1].amplitude, 0.2);
    }

    #[test]
    fn pooling_values() {
        assert_eq!(
            parse_config("pooling = lid\n").unwrap().model.pooling,
            PoolingMode::Lid
        );
        assert!(parse_config("pooling = mean\n").is_err());
    }

    #[test]
    fn all_presets_parse() {
        for name in preset_names() {
            let body = preset(name).unwrap();
            let cfg = parse_config(body)
                .unwrap_or_else(|e| panic!("preset {name} failed to parse: {e}"));
            assert!(cfg.scenario.scene.n_transmitters > 0);
        }
    }

    #[test]
    fn tiny_preset_dimensions() {
        let cfg = parse_config(preset("tiny").unwrap()).unwrap();
        assert_eq!(cfg.scenario.scene.n_transmitters, 100);
        assert_eq!(cfg.scenario.snapshots, 20);
        assert_eq!(cfg.scenario.n_antennas(), 8);
        assert_eq!(cfg.scenario.channel.active_subcarriers().len(), 16);
        assert_eq!(cfg.model.d_model, 64);
        assert_eq!(cfg.training.epochs, 60);
    }
}
