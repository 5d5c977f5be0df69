use std::time::Duration;

use guidesim_core::narrator::{ProviderError, ProviderRequest, Transport};

/// Posts provider requests as JSON to an HTTP endpoint.
pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn exchange(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let unavailable = |e: ureq::Error| ProviderError::Unavailable(e.to_string());
        let body = serde_json::to_string(request).expect("requests serialise");
        let mut reply = self
            .agent
            .post(&self.endpoint)
            .header("content-type", "application/json")
            .send(body)
            .map_err(unavailable)?;
        reply.body_mut().read_to_string().map_err(unavailable)
    }
}
