//! Scenario documents compiled into the binary.

use std::path::Path;

use super::config::{parse_config, ScenarioConfig};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy)]
pub struct ShippedScenario {
    pub name: &'static str,
    pub text: &'static str,
    /// Runs that are expected to fail or be rejected.
    pub negative: bool,
}

macro_rules! shipped {
    ($name:literal, $negative:literal) => {
        ShippedScenario {
            name: $name,
            text: include_str!(concat!("../../scenarios/", $name, ".toml")),
            negative: $negative,
        }
    };
}

pub const SHIPPED: &[ShippedScenario] = &[
    shipped!("free", false),
    shipped!("positive_potential_radial", false),
    shipped!("well_with_barrier", false),
    shipped!("self_similar_W", false),
    shipped!("self_similar_W_large", false),
    shipped!("cubic_nls_small", false),
    shipped!("morawetz_radial", false),
    shipped!("negative_flipped_q", true),
    shipped!("negative_corrupt_derivative", true),
    shipped!("negative_focusing", true),
    shipped!("negative_morawetz_sign", true),
];

pub fn find_shipped(name: &str) -> Option<&'static ShippedScenario> {
    SHIPPED.iter().find(|s| s.name == name)
}

/// `(name, description)` of every shipped scenario. Descriptions of
/// documents that do not parse (the rejected negatives) are read raw.
pub fn list_scenarios() -> Vec<(String, String)> {
    SHIPPED
        .iter()
        .map(|s| {
            let description = toml::from_str::<toml::Table>(s.text)
                .ok()
                .and_then(|t| t.get("description").and_then(|d| d.as_str()).map(str::to_string))
                .unwrap_or_default();
            (s.name.to_string(), description)
        })
        .collect()
}

/// A path to a document, or the name of a shipped scenario.
pub fn load_scenario(spec: &str) -> Result<ScenarioConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        return parse_config(&std::fs::read_to_string(path)?);
    }
    match find_shipped(spec) {
        Some(s) => parse_config(s.text),
        None => Err(LabError::config("<path>", format!("no such file or shipped scenario: {spec}"))),
    }
}
