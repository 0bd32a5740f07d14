use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, Epsilons, GridError, MarketData, NetworkGraph, ParticipantProfile, ScenarioDay};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    network: NetworkSection,
    market: MarketSection,
    participants: Vec<ParticipantProfile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    u0: f64,
    u_min: Vec<f64>,
    u_max: Vec<f64>,
    edges: Vec<Edge>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketSection {
    steps: usize,
    mva_base: f64,
    tariff_import: Vec<f64>,
    tariff_export: Vec<f64>,
    epsilons: Epsilons,
    #[serde(default)]
    day_ahead_price: Option<Vec<f64>>,
    #[serde(default)]
    regulation_up: Option<Vec<f64>>,
    #[serde(default)]
    regulation_down: Option<Vec<f64>>,
}

impl MarketSection {
    /// Missing settlement prices default to the tariff midpoint for the
    /// day-ahead reference and to the tariffs themselves for regulation.
    fn into_market(self) -> MarketData {
        let mid: Vec<f64> = self
            .tariff_import
            .iter()
            .zip(&self.tariff_export)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        MarketData {
            steps: self.steps,
            mva_base: self.mva_base,
            day_ahead_price: self.day_ahead_price.unwrap_or(mid),
            regulation_up: self.regulation_up.unwrap_or_else(|| self.tariff_import.clone()),
            regulation_down: self.regulation_down.unwrap_or_else(|| self.tariff_export.clone()),
            tariff_import: self.tariff_import,
            tariff_export: self.tariff_export,
            epsilons: self.epsilons,
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioDay, GridError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
    let n = file.network.edges.len() + 1;
    let network = NetworkGraph::from_edges(
        n,
        &file.network.edges,
        file.network.u0,
        file.network.u_min,
        file.network.u_max,
    )?;
    ScenarioDay::new(file.name, network, file.participants, file.market.into_market())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioDay, GridError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

pub fn scenario_to_string(sc: &ScenarioDay) -> String {
    let m = &sc.market;
    let file = ScenarioFile {
        name: sc.name.clone(),
        network: NetworkSection {
            u0: sc.network.u0,
            u_min: sc.network.u_min.clone(),
            u_max: sc.network.u_max.clone(),
            edges: sc.network.edges(),
        },
        market: MarketSection {
            steps: m.steps,
            mva_base: m.mva_base,
            tariff_import: m.tariff_import.clone(),
            tariff_export: m.tariff_export.clone(),
            epsilons: m.epsilons,
            day_ahead_price: Some(m.day_ahead_price.clone()),
            regulation_up: Some(m.regulation_up.clone()),
            regulation_down: Some(m.regulation_down.clone()),
        },
        participants: sc.participants().cloned().collect(),
    };
    toml::to_string(&file).expect("scenario serializes to TOML")
}

pub fn save_scenario(sc: &ScenarioDay, path: impl AsRef<Path>) -> Result<(), GridError> {
    std::fs::write(path, scenario_to_string(sc))?;
    Ok(())
}
