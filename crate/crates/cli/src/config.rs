//! Run configuration: `config.txt` key=value pairs, then `BUBBLEFLOW_OUT`,
//! then command-line overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bubbleflow::lab::Recipe;
use bubbleflow::{BubbleParams, StabilityConfig};

/// Every recognised key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("bubble.a1", "0"),
    ("bubble.a2", "0"),
    ("bubble.r", "1"),
    ("bubble.gamma", "1.0471975511965979"),
    ("bubble.theta", "0"),
    ("grid.n", "64"),
    ("flow.dt", "1e-3"),
    ("flow.T", "5"),
    ("perturb.kind", "generic"),
    ("perturb.amplitude", "1e-2"),
    ("seed", "7"),
    ("out.dir", "out"),
    ("snapshots.every", "0"),
    ("verify.gamma_points", "25"),
];

/// A bad value, reported with the key it came from.
#[derive(Debug)]
pub struct KeyError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for KeyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid value for `{}`: {}", self.key, self.message)
    }
}

fn key_error(key: &str, message: impl Into<String>) -> KeyError {
    KeyError { key: key.to_string(), message: message.into() }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub stability: StabilityConfig,
    pub out_dir: PathBuf,
    pub gamma_points: usize,
    /// Effective key=value pairs after all overrides.
    pub pairs: BTreeMap<String, String>,
}

/// Merge layers left to right (later wins) and validate.
pub fn resolve(layers: &[BTreeMap<String, String>]) -> Result<RunConfig, KeyError> {
    let mut pairs: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for layer in layers {
        for (k, v) in layer {
            if !pairs.contains_key(k) {
                return Err(key_error(k, "unknown key"));
            }
            pairs.insert(k.clone(), v.clone());
        }
    }
    let f = |key: &str| -> Result<f64, KeyError> {
        let s = &pairs[key];
        s.parse::<f64>().map_err(|_| key_error(key, format!("expected a number, got {s:?}")))
    };
    let u = |key: &str| -> Result<usize, KeyError> {
        let s = &pairs[key];
        s.parse::<usize>().map_err(|_| key_error(key, format!("expected a non-negative integer, got {s:?}")))
    };
    let recipe = match pairs["perturb.kind"].as_str() {
        "generic" => Recipe::Generic,
        other => match other.strip_prefix("null").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if (1..=5).contains(&k) => Recipe::NullMode(k),
            _ => return Err(key_error("perturb.kind", format!("expected generic or null1..null5, got {other:?}"))),
        },
    };
    let seed = pairs["seed"].parse::<u64>().map_err(|_| key_error("seed", format!("expected an integer, got {:?}", pairs["seed"])))?;
    let stability = StabilityConfig {
        bubble: BubbleParams {
            a1: f("bubble.a1")?,
            a2: f("bubble.a2")?,
            r: f("bubble.r")?,
            gamma: f("bubble.gamma")?,
            theta: f("bubble.theta")?,
        },
        n: u("grid.n")?,
        dt: f("flow.dt")?,
        t_end: f("flow.T")?,
        epsilon: f("perturb.amplitude")?,
        seed,
        recipe,
        snapshot_every: u("snapshots.every")?,
        ..StabilityConfig::default()
    };
    stability.validate().map_err(|e| {
        let msg = match e {
            bubbleflow::Error::Domain(m) => m,
            other => other.to_string(),
        };
        let (field, why) = msg.split_once(": ").unwrap_or(("", msg.as_str()));
        key_error(config_key(field), why)
    })?;
    let gamma_points = u("verify.gamma_points")?;
    if gamma_points == 0 {
        return Err(key_error("verify.gamma_points", "must be at least 1"));
    }
    let out_dir = PathBuf::from(&pairs["out.dir"]);
    Ok(RunConfig { stability, out_dir, gamma_points, pairs })
}

/// Config-file spelling of a `StabilityConfig` field.
fn config_key(field: &str) -> &'static str {
    match field {
        "a1" => "bubble.a1",
        "a2" => "bubble.a2",
        "r" => "bubble.r",
        "gamma" => "bubble.gamma",
        "theta" => "bubble.theta",
        "n" => "grid.n",
        "dt" => "flow.dt",
        "t_end" => "flow.T",
        "epsilon" => "perturb.amplitude",
        "recipe" => "perturb.kind",
        _ => "config",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_3;

    fn layer(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_match_the_library() {
        let c = resolve(&[]).unwrap();
        assert_eq!(c.stability, StabilityConfig::default());
        assert_eq!(c.stability.bubble.gamma, FRAC_PI_3);
    }

    #[test]
    fn later_layers_win() {
        let c = resolve(&[layer(&[("grid.n", "32")]), layer(&[("grid.n", "48")])]).unwrap();
        assert_eq!(c.stability.n, 48);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(resolve(&[layer(&[("bubble.r", "-1")])]).unwrap_err().key, "bubble.r");
        assert_eq!(resolve(&[layer(&[("flow.T", "x")])]).unwrap_err().key, "flow.T");
        assert_eq!(resolve(&[layer(&[("perturb.kind", "null9")])]).unwrap_err().key, "perturb.kind");
        assert_eq!(resolve(&[layer(&[("bogus", "1")])]).unwrap_err().key, "bogus");
        assert_eq!(resolve(&[layer(&[("grid.n", "4")])]).unwrap_err().key, "grid.n");
    }
}
