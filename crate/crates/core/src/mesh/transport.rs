use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Weak};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{MeshError, Notification, NotificationAck, ServiceNode, WireRequest, WireResponse};
use crate::actions::{ActionError, ActionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Loopback,
    Socket,
}

/// Request/response delivery between nodes.
pub trait Transport: Send + Sync {
    fn kind(&self) -> TransportKind;

    fn send(&self, to: &str, request: &WireRequest) -> Result<WireResponse, MeshError>;
}

/// In-process transport. Requests still round-trip through JSON text so that
/// wire documents are exercised exactly as on sockets.
#[derive(Default)]
pub struct LoopbackTransport {
    nodes: RwLock<BTreeMap<String, Weak<ServiceNode>>>,
    partitioned: RwLock<BTreeSet<String>>,
}

impl LoopbackTransport {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Registers `node` under `loop://{id}` or under the given address.
    pub fn serve(&self, node: &Arc<ServiceNode>, address: Option<&str>) -> Result<String, MeshError> {
        let address = address
            .map(str::to_string)
            .unwrap_or_else(|| format!("loop://{}", node.id()));
        let mut nodes = self.nodes.write();
        if nodes.get(&address).is_some_and(|w| w.strong_count() > 0) {
            return Err(MeshError::AddressInUse(address));
        }
        nodes.insert(address.clone(), Arc::downgrade(node));
        Ok(address)
    }

    pub fn close(&self, address: &str) {
        self.nodes.write().remove(address);
    }

    /// Makes `address` unreachable until healed.
    pub fn partition(&self, address: &str) {
        self.partitioned.write().insert(address.to_string());
    }

    pub fn heal(&self, address: &str) {
        self.partitioned.write().remove(address);
    }
}

fn round_trip<T: Serialize + serde::de::DeserializeOwned>(value: &T) -> Result<T, MeshError> {
    let text = serde_json::to_string(value).map_err(|e| MeshError::Protocol(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| MeshError::Protocol(e.to_string()))
}

impl Transport for LoopbackTransport {
    fn kind(&self) -> TransportKind {
        TransportKind::Loopback
    }

    fn send(&self, to: &str, request: &WireRequest) -> Result<WireResponse, MeshError> {
        if self.partitioned.read().contains(to) {
            return Err(MeshError::TargetUnreachable(to.to_string()));
        }
        let node = self
            .nodes
            .read()
            .get(to)
            .and_then(Weak::upgrade)
            .ok_or_else(|| MeshError::TargetUnreachable(to.to_string()))?;
        let request = round_trip(request)?;
        round_trip(&node.handle(request))
    }
}

fn decode<T: serde::de::DeserializeOwned>(body: Value) -> Result<T, MeshError> {
    serde_json::from_value(body).map_err(|e| MeshError::Protocol(e.to_string()))
}

/// Posts a notification to the node at `address`.
pub fn deliver_notification(
    transport: &dyn Transport,
    address: &str,
    notification: &Notification,
) -> Result<NotificationAck, MeshError> {
    let body = serde_json::to_value(notification).map_err(|e| MeshError::Protocol(e.to_string()))?;
    let response = transport.send(address, &WireRequest::post("/adaptiflow/events/notify", body))?;
    if !response.is_success() {
        return Err(MeshError::Rejected {
            status: response.status,
            message: response.error_message().unwrap_or_default().to_string(),
        });
    }
    decode(response.body)
}

/// Invokes `action` on the node at `address`.
pub fn invoke_action(
    transport: &dyn Transport,
    address: &str,
    action: &str,
    origin: Option<&str>,
) -> Result<ActionOutcome, ActionError> {
    let body = serde_json::json!({ "origin": origin });
    let path = format!("/adaptiflow/actions/{action}");
    let response = transport
        .send(address, &WireRequest::post(path, body))
        .map_err(|e| ActionError::TargetUnreachable(format!("{address}: {e}")))?;
    match response.status {
        200 => decode(response.body).map_err(|e| ActionError::TargetUnreachable(e.to_string())),
        404 => Err(ActionError::UnknownAction(action.to_string())),
        _ => match decode::<ActionOutcome>(response.body) {
            Ok(outcome) => Err(ActionError::ActionFailed(outcome)),
            Err(e) => Err(ActionError::TargetUnreachable(e.to_string())),
        },
    }
}
