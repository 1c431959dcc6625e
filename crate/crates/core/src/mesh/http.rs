use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::http::{Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde_json::Value;
use tokio::sync::oneshot;

use super::{MeshError, Method, ServiceNode, Transport, TransportKind, WireRequest, WireResponse};

const CLIENT_TIMEOUT: Duration = Duration::from_secs(10);

/// A node served over a TCP socket. Dropping the handle stops the server.
pub struct HttpEndpoint {
    address: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl HttpEndpoint {
    /// Binds `address` (use port 0 for an ephemeral port) and serves `node`
    /// on a dedicated thread.
    pub fn serve(node: Arc<ServiceNode>, address: &str) -> Result<Self, MeshError> {
        let listener = std::net::TcpListener::bind(address).map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => MeshError::AddressInUse(address.to_string()),
            _ => MeshError::Io(format!("{address}: {e}")),
        })?;
        let io = |e: std::io::Error| MeshError::Io(e.to_string());
        listener.set_nonblocking(true).map_err(io)?;
        let local = listener.local_addr().map_err(io)?;
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(io)?;
        let thread = std::thread::Builder::new()
            .name(format!("http-{}", node.id()))
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            tracing::error!("listener: {e}");
                            return;
                        }
                    };
                    let app = Router::new().fallback(move |method: HttpMethod, uri: Uri, body: Bytes| {
                        dispatch(node.clone(), method, uri, body)
                    });
                    let shutdown = async {
                        let _ = rx.await;
                    };
                    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                        tracing::error!("server: {e}");
                    }
                })
            })
            .map_err(io)?;
        Ok(Self {
            address: local,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn address(&self) -> SocketAddr {
        self.address
    }
}

impl Drop for HttpEndpoint {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

async fn dispatch(node: Arc<ServiceNode>, method: HttpMethod, uri: Uri, body: Bytes) -> Response {
    let method = match method {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        _ => return StatusCode::METHOD_NOT_ALLOWED.into_response(),
    };
    let body = if body.is_empty() {
        None
    } else {
        match serde_json::from_slice::<Value>(&body) {
            Ok(v) => Some(v),
            Err(e) => {
                let r = WireResponse::error(400, format!("malformed body: {e}"));
                return (StatusCode::BAD_REQUEST, axum::Json(r.body)).into_response();
            }
        }
    };
    let path = uri
        .path_and_query()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| uri.path().to_string());
    let request = WireRequest { method, path, body };
    let response = match tokio::task::spawn_blocking(move || node.handle(request)).await {
        Ok(r) => r,
        Err(e) => WireResponse::error(500, e),
    };
    let status = StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, axum::Json(response.body)).into_response()
}

/// Blocking HTTP client transport. Addresses are `host:port`.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(CLIENT_TIMEOUT))
            .http_status_as_error(false)
            .proxy(None)
            .build();
        Self { agent: config.into() }
    }
}

impl HttpTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }
}

impl Transport for HttpTransport {
    fn kind(&self) -> TransportKind {
        TransportKind::Socket
    }

    fn send(&self, to: &str, request: &WireRequest) -> Result<WireResponse, MeshError> {
        let url = format!("http://{to}{}", request.path);
        let unreachable = |e: ureq::Error| MeshError::TargetUnreachable(format!("{to}: {e}"));
        let mut response = match (request.method, &request.body) {
            (Method::Get, _) => self.agent.get(&url).call().map_err(unreachable)?,
            (Method::Post, Some(body)) => self.agent.post(&url).send_json(body).map_err(unreachable)?,
            (Method::Post, None) => self.agent.post(&url).send_empty().map_err(unreachable)?,
        };
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| MeshError::Protocol(e.to_string()))?;
        Ok(WireResponse { status, body })
    }
}
