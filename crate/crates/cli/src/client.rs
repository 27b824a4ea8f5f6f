//! Blocking HTTP client for the channel service.

use std::time::Duration;

use agrisense_core::channel::{format_timestamp, FeedPage, FIELD_COUNT};
use agrisense_core::gateway::{ChannelTransport, TransportError, UpdateReply, UpdateRequest};
use reqwest::blocking::Client;
use reqwest::StatusCode;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot reach {endpoint}: {message}")]
    Network { endpoint: String, message: String },
    #[error("service answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unreadable response: {0}")]
    Data(String),
}

#[derive(Debug, Clone)]
pub struct ServiceClient {
    base: String,
    http: Client,
    write_key: Option<String>,
    read_key: Option<String>,
}

impl ServiceClient {
    pub fn new(endpoint: &str) -> Result<Self, ClientError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| ClientError::Network { endpoint: endpoint.into(), message: e.to_string() })?;
        Ok(ServiceClient {
            base: endpoint.trim_end_matches('/').to_string(),
            http,
            write_key: None,
            read_key: None,
        })
    }

    pub fn with_write_key(mut self, key: impl Into<String>) -> Self {
        self.write_key = Some(key.into());
        self
    }

    pub fn with_read_key(mut self, key: Option<String>) -> Self {
        self.read_key = key;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn network(&self, e: reqwest::Error) -> ClientError {
        ClientError::Network { endpoint: self.base.clone(), message: e.to_string() }
    }

    /// `GET /channels/{id}/feeds.json`, or the single-field variant when
    /// `field` is given.
    pub fn feeds(&self, channel: u64, results: usize, field: Option<u8>) -> Result<FeedPage, ClientError> {
        let url = match field {
            Some(n) => format!("{}/channels/{channel}/fields/{n}.json", self.base),
            None => format!("{}/channels/{channel}/feeds.json", self.base),
        };
        let mut query = vec![("results", results.to_string())];
        if let Some(key) = &self.read_key {
            query.push(("api_key", key.clone()));
        }
        let response = self.http.get(url).query(&query).send().map_err(|e| self.network(e))?;
        let status = response.status();
        let body = response.text().map_err(|e| self.network(e))?;
        if !status.is_success() {
            return Err(ClientError::Status { status: status.as_u16(), body: body.trim().to_string() });
        }
        FeedPage::from_json(&body).map_err(|e| ClientError::Data(e.to_string()))
    }

    /// `POST /update`. Returns the raw reply classification.
    pub fn update(&self, request: &UpdateRequest) -> Result<UpdateReply, ClientError> {
        let key = self.write_key.clone().unwrap_or_default();
        let mut form = vec![("api_key".to_string(), key)];
        for (n, value) in request.fields.iter().enumerate().take(FIELD_COUNT) {
            if let Some(v) = value {
                form.push((format!("field{}", n + 1), v.clone()));
            }
        }
        if let Some(t) = &request.created_at {
            form.push(("created_at".into(), format_timestamp(t)));
        }
        let response = self
            .http
            .post(format!("{}/update", self.base))
            .form(&form)
            .send()
            .map_err(|e| self.network(e))?;
        let status = response.status();
        let body = response.text().map_err(|e| self.network(e))?;
        let body = body.trim();
        if status == StatusCode::OK {
            return match body.parse::<u64>() {
                Ok(0) => Ok(UpdateReply::RateLimited),
                Ok(id) => Ok(UpdateReply::Accepted(id)),
                Err(_) => Err(ClientError::Data(format!("update returned {body:?}"))),
            };
        }
        if status.is_client_error() {
            return Ok(UpdateReply::Rejected(format!("{}: {body}", status.as_u16())));
        }
        Err(ClientError::Status { status: status.as_u16(), body: body.to_string() })
    }
}

impl ChannelTransport for ServiceClient {
    fn update(&mut self, request: &UpdateRequest) -> Result<UpdateReply, TransportError> {
        ServiceClient::update(self, request).map_err(|e| TransportError(e.to_string()))
    }
}
