//! Command-line tools and the live websocket session for the simulator.

pub mod cli;
pub mod server;
pub mod transport;

use std::time::Duration;

use guidesim_core::engine::{EngineError, ProviderConfig, Sim, SimConfig};
use guidesim_core::gridworld::World;
use guidesim_core::interaction::GroundedAnswerer;
use guidesim_core::narrator::ExternalProvider;

use crate::transport::HttpTransport;

/// Builds a simulator whose description provider follows `config.provider`.
pub fn build_sim(world: World, config: SimConfig) -> Result<Sim, EngineError> {
    match &config.provider {
        ProviderConfig::Template => Sim::new(world, config),
        ProviderConfig::External { endpoint, timeout_ms } => {
            let provider = ExternalProvider {
                transport: HttpTransport::new(endpoint.clone(), Duration::from_millis(*timeout_ms)),
            };
            let answerer = GroundedAnswerer {
                keywords: config.keywords.clone(),
            };
            Sim::with_providers(world, config, Box::new(provider), Box::new(answerer))
        }
    }
}
