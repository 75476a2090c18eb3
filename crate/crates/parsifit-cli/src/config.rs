//! Run configuration: defaults, an optional flat `key=value` file, and
//! command-line overrides, applied in that order.

use parsifit::{Criterion, FitConfig};

/// Optional overrides collected from command-line flags.
#[derive(Debug, Default, Clone)]
pub struct ConfigOverrides {
    pub criterion: Option<Criterion>,
    pub max_curves: Option<usize>,
    pub comparator_c: Option<f64>,
    pub m0: Option<usize>,
    pub ll_cap: Option<f64>,
    pub noise_sd: Option<f64>,
    pub anneal_loops: Option<usize>,
    pub seed: Option<u64>,
    pub sigma_stop: Option<bool>,
    pub curve_param_cost: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, config: &mut FitConfig) {
        if let Some(v) = self.criterion {
            config.criterion = v;
        }
        if let Some(v) = self.max_curves {
            config.max_curves = v;
        }
        if let Some(v) = self.comparator_c {
            config.comparator_c = v;
        }
        if let Some(v) = self.m0 {
            config.m0 = Some(v);
        }
        if let Some(v) = self.ll_cap {
            config.ll_cap = v;
        }
        if let Some(v) = self.noise_sd {
            config.noise_sd = v;
        }
        if let Some(v) = self.anneal_loops {
            config.anneal_loops = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.sigma_stop {
            config.sigma_stop = v;
        }
        if let Some(v) = self.curve_param_cost {
            config.curve_param_cost = v;
        }
    }
}

/// Applies a flat `key=value` config file on top of `config`. Blank lines
/// and `#` comments are ignored. `m0=auto` restores the adaptive default.
pub fn apply_config_file(text: &str, config: &mut FitConfig) -> Result<(), String> {
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {lineno}: expected key=value"))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| format!("line {lineno}: invalid {what} {value:?}");
        match key {
            "criterion" => {
                config.criterion =
                    Criterion::parse(value).ok_or_else(|| bad("criterion"))?;
            }
            "max_curves" => {
                config.max_curves = value.parse().map_err(|_| bad("max_curves"))?;
            }
            "comparator_c" => {
                config.comparator_c = value.parse().map_err(|_| bad("comparator_c"))?;
            }
            "m0" => {
                config.m0 = if value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("m0"))?)
                };
            }
            "ll_cap" => {
                config.ll_cap = value.parse().map_err(|_| bad("ll_cap"))?;
            }
            "noise_sd" => {
                config.noise_sd = value.parse().map_err(|_| bad("noise_sd"))?;
            }
            "anneal_loops" => {
                config.anneal_loops = value.parse().map_err(|_| bad("anneal_loops"))?;
            }
            "seed" => {
                config.seed = value.parse().map_err(|_| bad("seed"))?;
            }
            "sigma_stop" => {
                config.sigma_stop = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad("sigma_stop")),
                };
            }
            "curve_param_cost" => {
                config.curve_param_cost = value.parse().map_err(|_| bad("curve_param_cost"))?;
            }
            _ => return Err(format!("line {lineno}: unknown key {key:?}")),
        }
    }
    Ok(())
}

/// Fixed-order JSON snapshot of the effective configuration for manifests.
pub fn config_json(config: &FitConfig) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    map.insert("criterion".into(), config.criterion.as_str().into());
    map.insert("max_curves".into(), (config.max_curves as u64).into());
    map.insert("comparator_c".into(), config.comparator_c.into());
    map.insert(
        "m0".into(),
        match config.m0 {
            Some(v) => (v as u64).into(),
            None => serde_json::Value::Null,
        },
    );
    map.insert("ll_cap".into(), config.ll_cap.into());
    map.insert("noise_sd".into(), config.noise_sd.into());
    map.insert("anneal_loops".into(), (config.anneal_loops as u64).into());
    map.insert("seed".into(), config.seed.into());
    map.insert("sigma_stop".into(), config.sigma_stop.into());
    map.insert("curve_param_cost".into(), (config.curve_param_cost as u64).into());
    serde_json::Value::Object(map)
}
