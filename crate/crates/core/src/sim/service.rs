use std::fmt;
use std::net::{IpAddr, Ipv4Addr};
use std::num::NonZeroUsize;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdaptationState, ImageProvider, Observables, PowerMode};

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;
pub const EXTERNAL_IMAGE_LATENCY_MS: f64 = 80.0;
const LOCAL_IMAGE_LATENCY_MS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceRole {
    Webui,
    Auth,
    Persistence,
    Recommender,
    Image,
    /// User-defined service without TeaStore business endpoints.
    Custom,
}

impl ServiceRole {
    /// Infers the role from a conventional node id.
    pub fn from_node_id(id: &str) -> ServiceRole {
        match id {
            "webui" => ServiceRole::Webui,
            "auth" => ServiceRole::Auth,
            "persistence" => ServiceRole::Persistence,
            "recommender" => ServiceRole::Recommender,
            "image" => ServiceRole::Image,
            _ => ServiceRole::Custom,
        }
    }

    /// Business path a page view touches on this service.
    pub fn page_path(self, item: u32) -> String {
        match self {
            ServiceRole::Webui => "/products".into(),
            ServiceRole::Auth => "/login".into(),
            ServiceRole::Persistence => format!("/products/{item}"),
            ServiceRole::Recommender => "/recommend".into(),
            ServiceRole::Image => format!("/image/{item}"),
            ServiceRole::Custom => "/".into(),
        }
    }
}

impl fmt::Display for ServiceRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        f.write_str(s.as_ref().and_then(|v| v.as_str()).unwrap_or("custom"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRequest {
    pub path: String,
    pub client_ip: IpAddr,
}

impl SimRequest {
    pub fn new(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            client_ip: IpAddr::V4(Ipv4Addr::LOCALHOST),
        }
    }

    pub fn from_ip(mut self, ip: IpAddr) -> Self {
        self.client_ip = ip;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimResponse {
    Page { body: String },
    Maintenance { body: String },
    LoggedIn { token: String },
    Data { body: String, from_cache: bool },
    Recommendations { items: Vec<String> },
    Image { url: String, latency_ms: f64 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ServiceError {
    #[error("service unavailable: circuit breaker open")]
    ServiceUnavailable,
    #[error("database unavailable")]
    DatabaseUnavailable,
    #[error("no route for `{path}`")]
    NotFound { path: String },
}

/// Coarse classification recorded in request logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseClass {
    Ok,
    Maintenance,
    Rejected,
    Error,
    Unreachable,
}

impl ResponseClass {
    pub fn of(result: &Result<SimResponse, ServiceError>) -> ResponseClass {
        match result {
            Ok(SimResponse::Maintenance { .. }) => ResponseClass::Maintenance,
            Ok(_) => ResponseClass::Ok,
            Err(ServiceError::ServiceUnavailable) => ResponseClass::Rejected,
            Err(_) => ResponseClass::Error,
        }
    }
}

/// Read-through cache in front of the simulated database. It is kept warm
/// on every successful read; `cache_enabled` decides whether it answers.
#[derive(Debug)]
pub struct ResponseCache {
    entries: LruCache<String, String>,
}

impl ResponseCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            entries: LruCache::new(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for ResponseCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

const POPULAR_ITEMS: [&str; 3] = ["green-tea", "earl-grey", "rooibos"];

/// Serves one business request given the node's current adaptation state.
pub fn handle_request(
    role: ServiceRole,
    state: &AdaptationState,
    observables: &mut Observables,
    cache: &mut ResponseCache,
    request: &SimRequest,
) -> Result<SimResponse, ServiceError> {
    let path = request.path.as_str();
    let not_found = || ServiceError::NotFound { path: path.to_string() };
    if state.maintenance && role == ServiceRole::Webui {
        return Ok(SimResponse::Maintenance {
            body: "TeaStore is under maintenance. Please come back later.".into(),
        });
    }
    if state.circuit_open {
        return Err(ServiceError::ServiceUnavailable);
    }
    match role {
        ServiceRole::Webui => match path {
            "/" | "/products" | "/cart" => Ok(SimResponse::Page {
                body: format!("page {path}"),
            }),
            _ => Err(not_found()),
        },
        ServiceRole::Auth => match path {
            "/login" => Ok(SimResponse::LoggedIn {
                token: format!("session-{}", request.client_ip),
            }),
            _ => Err(not_found()),
        },
        ServiceRole::Recommender => match path {
            "/recommend" => Ok(SimResponse::Recommendations {
                items: match state.power_mode {
                    PowerMode::Normal => POPULAR_ITEMS.iter().map(|s| s.to_string()).collect(),
                    PowerMode::Low => Vec::new(),
                },
            }),
            _ => Err(not_found()),
        },
        ServiceRole::Image => {
            let id = path.strip_prefix("/image/").ok_or_else(not_found)?;
            Ok(match state.image_provider {
                ImageProvider::Local => SimResponse::Image {
                    url: format!("/images/{id}.png"),
                    latency_ms: LOCAL_IMAGE_LATENCY_MS,
                },
                ImageProvider::External => SimResponse::Image {
                    url: format!("https://images.external.invalid/{id}.png"),
                    latency_ms: LOCAL_IMAGE_LATENCY_MS + EXTERNAL_IMAGE_LATENCY_MS,
                },
            })
        }
        ServiceRole::Persistence => {
            let key = match path {
                "/cart" => "cart",
                p => p.strip_prefix("/products/").ok_or_else(not_found)?,
            };
            match observables.database.query(key) {
                Some(body) => {
                    let from_cache = state.cache_enabled && cache.entries.contains(key);
                    cache.entries.put(key.to_string(), body.clone());
                    Ok(SimResponse::Data { body, from_cache })
                }
                None if state.cache_enabled => cache
                    .entries
                    .get(key)
                    .map(|body| SimResponse::Data {
                        body: body.clone(),
                        from_cache: true,
                    })
                    .ok_or(ServiceError::DatabaseUnavailable),
                None => Err(ServiceError::DatabaseUnavailable),
            }
        }
        ServiceRole::Custom => match path {
            "/" => Ok(SimResponse::Page { body: "ok".into() }),
            _ => Err(not_found()),
        },
    }
}
