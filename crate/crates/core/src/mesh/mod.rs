//! Service nodes, their wire endpoints, and the transports between them.

mod http;
mod node;
mod timeline;
mod transport;
mod wire;

use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::ActionError;
use crate::events::EventError;
use crate::metrics::MetricsError;
use crate::scheduler::Timestamp;
use crate::sim::{Fault, ResponseClass, SimRequest};

pub use http::{HttpEndpoint, HttpTransport};
pub use node::{
    EventListing, EventVerdict, NotificationAck, NotificationBinding, ServiceNode, SubscriptionInfo,
    FAILURE_HOOK_DEBOUNCE_MS,
};
pub use timeline::{
    Cause, CheckSummary, EventCheck, SubscriberTrace, TickReport, Timeline, TimelineEntry, TimelineEvent,
};
pub use transport::{deliver_notification, invoke_action, LoopbackTransport, Transport, TransportKind};
pub use wire::{Method, WireRequest, WireResponse};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("address `{0}` already in use")]
    AddressInUse(String),
    #[error("target `{0}` unreachable")]
    TargetUnreachable(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` cannot be its own peer")]
    SelfPeer(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("no transport configured")]
    NoTransport,
    #[error("peer answered {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Action(#[from] ActionError),
}

/// A peer-to-peer status message such as `DDoSAttackEvent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub event_name: String,
    #[serde(rename = "origin_node")]
    pub origin: String,
    pub sent_at: Timestamp,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

enum Endpoint {
    Loopback(String),
    Http(HttpEndpoint),
}

/// A set of served nodes that all know each other.
pub struct Mesh {
    nodes: BTreeMap<String, Arc<ServiceNode>>,
    transport: Arc<dyn Transport>,
    loopback: Option<Arc<LoopbackTransport>>,
    endpoints: Vec<Endpoint>,
}

impl Mesh {
    /// Serves every node over `kind` and registers all nodes as each
    /// other's peers. Socket nodes without an address bind an ephemeral
    /// port on 127.0.0.1.
    pub fn start(nodes: Vec<Arc<ServiceNode>>, kind: TransportKind) -> Result<Mesh, MeshError> {
        let mut by_id = BTreeMap::new();
        for node in nodes {
            if by_id.insert(node.id().to_string(), node.clone()).is_some() {
                return Err(MeshError::DuplicateNode(node.id().to_string()));
            }
        }
        let mut endpoints = Vec::new();
        let (transport, loopback): (Arc<dyn Transport>, _) = match kind {
            TransportKind::Loopback => {
                let t = LoopbackTransport::new();
                for node in by_id.values() {
                    let requested = node.address();
                    let address = t.serve(node, requested.as_deref())?;
                    node.set_address(&address);
                    endpoints.push(Endpoint::Loopback(address));
                }
                (t.clone(), Some(t))
            }
            TransportKind::Socket => {
                for node in by_id.values() {
                    let requested = node.address().unwrap_or_else(|| "127.0.0.1:0".to_string());
                    let endpoint = HttpEndpoint::serve(node.clone(), &requested)?;
                    node.set_address(&endpoint.address().to_string());
                    endpoints.push(Endpoint::Http(endpoint));
                }
                (HttpTransport::new(), None)
            }
        };
        for node in by_id.values() {
            node.set_transport(transport.clone());
            for peer in by_id.values().filter(|p| p.id() != node.id()) {
                let address = peer.address().unwrap_or_default();
                node.add_peer(peer.id(), &address)?;
            }
        }
        Ok(Mesh {
            nodes: by_id,
            transport,
            loopback,
            endpoints,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Arc<ServiceNode>> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&Arc<ServiceNode>> {
        self.nodes.get(id)
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.keys().cloned().collect()
    }

    pub fn transport(&self) -> &Arc<dyn Transport> {
        &self.transport
    }

    pub fn kind(&self) -> TransportKind {
        self.transport.kind()
    }

    /// Cuts `node` off the loopback network. No-op on sockets.
    pub fn partition(&self, node: &str) -> Result<(), MeshError> {
        let n = self
            .nodes
            .get(node)
            .ok_or_else(|| MeshError::UnknownNode(node.to_string()))?;
        if let (Some(t), Some(address)) = (&self.loopback, n.address()) {
            t.partition(&address);
        }
        Ok(())
    }

    pub fn inject_fault(&self, target: &str, fault: &Fault) -> Result<(), MeshError> {
        self.nodes
            .get(target)
            .ok_or_else(|| MeshError::UnknownNode(target.to_string()))?
            .inject_fault(fault);
        Ok(())
    }

    /// One storefront page view: every node receives its role's request
    /// for `item`. Returns the class of the WebUI response, or of the first
    /// node when there is no WebUI.
    pub fn page_view(&self, now: Timestamp, ip: IpAddr, item: u32) -> ResponseClass {
        let mut front = None;
        for node in self.nodes.values() {
            let request = SimRequest::new(node.role().page_path(item)).from_ip(ip);
            let class = ResponseClass::of(&node.serve_request(&request, now));
            if node.id() == "webui" || front.is_none() {
                front = Some(class);
            }
        }
        front.unwrap_or(ResponseClass::Unreachable)
    }
}

impl Drop for Mesh {
    fn drop(&mut self) {
        for endpoint in self.endpoints.drain(..) {
            match endpoint {
                Endpoint::Loopback(address) => {
                    if let Some(t) = &self.loopback {
                        t.close(&address);
                    }
                }
                Endpoint::Http(h) => drop(h),
            }
        }
    }
}
