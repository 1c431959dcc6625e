use std::collections::BTreeMap;
use std::sync::Arc;

use adaptiflow::actions::{role_catalog, ActionError, OutcomeStatus};
use adaptiflow::mesh::{
    deliver_notification, invoke_action, HttpEndpoint, LoopbackTransport, Mesh, MeshError, Notification, ServiceNode,
    TimelineEvent, TransportKind, WireRequest,
};
use adaptiflow::scenarios::{build_nodes, load_scenario, load_shipped, ScenarioSpec};
use adaptiflow::scheduler::{Timestamp, VirtualClock};
use adaptiflow::sim::{Observables, PowerMode, ServiceRole};
use serde_json::Value;

const ROLES: [&str; 5] = ["webui", "auth", "persistence", "recommender", "image"];

fn start(spec: &ScenarioSpec, kind: TransportKind) -> Mesh {
    let clock = Arc::new(VirtualClock::new(Timestamp::ZERO));
    Mesh::start(build_nodes(spec, clock, 5000).unwrap(), kind).unwrap()
}

fn bare_teastore() -> ScenarioSpec {
    let nodes: Vec<Value> = ROLES.iter().map(|id| serde_json::json!({ "id": id })).collect();
    load_scenario(&serde_json::json!({ "name": "bare", "nodes": nodes }).to_string()).unwrap()
}

fn lone(id: &str) -> Arc<ServiceNode> {
    let clock = Arc::new(VirtualClock::new(Timestamp::ZERO));
    Arc::new(ServiceNode::new(
        id,
        ServiceRole::from_node_id(id),
        clock,
        Observables::default(),
    ))
}

#[test]
fn socket_metrics_endpoint_serves_a_document() {
    let spec = load_shipped("self_healing").unwrap();
    let mesh = start(&spec, TransportKind::Socket);
    let persistence = mesh.node("persistence").unwrap();
    persistence.collect_metrics("local-db", Timestamp::ZERO).unwrap();
    let address = persistence.address().unwrap();
    let body: Value = ureq::get(&format!("http://{address}/adaptiflow/metrics"))
        .call()
        .unwrap()
        .body_mut()
        .read_json()
        .unwrap();
    assert_eq!(body["node"], "persistence");
    let samples = body["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0]["values"]["network_ok"], true);
    assert!(samples[0]["values"]["response_time_ms"].is_number());
}

#[test]
fn two_nodes_on_one_address_are_refused() {
    let first = HttpEndpoint::serve(lone("a"), "127.0.0.1:0").unwrap();
    let taken = first.address().to_string();
    assert!(matches!(
        HttpEndpoint::serve(lone("b"), &taken),
        Err(MeshError::AddressInUse(_))
    ));

    let t = LoopbackTransport::new();
    let (a, b) = (lone("a"), lone("b"));
    t.serve(&a, Some("loop://shared")).unwrap();
    assert!(matches!(
        t.serve(&b, Some("loop://shared")),
        Err(MeshError::AddressInUse(_))
    ));
}

#[test]
fn every_catalogued_action_is_reachable_from_a_peer() {
    for kind in [TransportKind::Loopback, TransportKind::Socket] {
        let mesh = start(&bare_teastore(), kind);
        let transport = mesh.transport().clone();
        let mut reached: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for node in mesh.nodes() {
            let caller = if node.id() == "webui" { "auth" } else { "webui" };
            let address = node.address().unwrap();
            let listed = transport
                .send(&address, &WireRequest::get("/adaptiflow/actions"))
                .unwrap();
            let ids: Vec<String> = listed
                .body
                .as_array()
                .unwrap()
                .iter()
                .map(|a| a["id"].as_str().unwrap().to_string())
                .collect();
            let manifest: Vec<String> = role_catalog(node.role()).iter().map(|s| s.to_string()).collect();
            assert_eq!(ids, manifest, "{} listing", node.id());
            for action in &manifest {
                let outcome = invoke_action(transport.as_ref(), &address, action, Some(caller)).unwrap();
                assert_eq!(&outcome.action_id, action);
                assert_ne!(outcome.status, OutcomeStatus::Failed);
                reached.entry(node.id().to_string()).or_default().push(action.clone());
            }
            assert!(matches!(
                invoke_action(transport.as_ref(), &address, "NoSuchAction", Some(caller)),
                Err(ActionError::UnknownAction(_))
            ));
        }
        let total: usize = reached.values().map(Vec::len).sum();
        let expected: usize = ROLES
            .iter()
            .map(|r| role_catalog(ServiceRole::from_node_id(r)).len())
            .sum();
        assert_eq!(total, expected);
    }
}

#[test]
fn database_unavailable_notification_puts_webui_in_maintenance() {
    for kind in [TransportKind::Loopback, TransportKind::Socket] {
        let mesh = start(&load_shipped("self_healing").unwrap(), kind);
        let persistence = mesh.node("persistence").unwrap();
        persistence
            .apply_action("DatabaseUnavailableEventBroadcast", Timestamp(20_000))
            .unwrap();
        let webui = mesh.node("webui").unwrap();
        assert!(webui.state().maintenance);
        assert_eq!(mesh.node("recommender").unwrap().state().power_mode, PowerMode::Low);
        let applied = webui.timeline().into_iter().any(|e| {
            matches!(&e.event, TimelineEvent::Action { outcome, .. }
                if outcome.action_id == "EnableMaintenanceMode" && outcome.status == OutcomeStatus::Applied)
        });
        assert!(applied);
    }
}

#[test]
fn ddos_notification_only_arms_auth() {
    let mesh = start(&load_shipped("self_protection").unwrap(), TransportKind::Loopback);
    mesh.node("webui")
        .unwrap()
        .apply_action("DDoSAttackEventBroadcast", Timestamp(90_000))
        .unwrap();
    let auth = mesh.node("auth").unwrap().state();
    assert!(auth.ddos_armed);
    assert!(!auth.circuit_open);
}

#[test]
fn partitioned_node_is_unreachable_and_others_still_hear() {
    let mesh = start(&load_shipped("self_healing").unwrap(), TransportKind::Loopback);
    mesh.partition("webui").unwrap();
    let webui_address = mesh.node("webui").unwrap().address().unwrap();
    let n = Notification {
        event_name: "DatabaseUnavailableEvent".into(),
        origin: "persistence".into(),
        sent_at: Timestamp(1),
        payload: BTreeMap::new(),
    };
    assert!(matches!(
        deliver_notification(mesh.transport().as_ref(), &webui_address, &n),
        Err(MeshError::TargetUnreachable(_))
    ));

    let persistence = mesh.node("persistence").unwrap();
    persistence
        .apply_action("DatabaseUnavailableEventBroadcast", Timestamp(2))
        .unwrap();
    assert!(!mesh.node("webui").unwrap().state().maintenance);
    assert_eq!(mesh.node("recommender").unwrap().state().power_mode, PowerMode::Low);
    let sends: BTreeMap<String, bool> = persistence
        .timeline()
        .into_iter()
        .filter_map(|e| match e.event {
            TimelineEvent::NotificationSent { to, delivered, .. } => Some((to, delivered)),
            _ => None,
        })
        .collect();
    assert_eq!(sends.get("webui"), Some(&false));
    assert_eq!(sends.get("recommender"), Some(&true));
}

#[test]
fn bad_notification_bodies_are_rejected() {
    let mesh = start(&bare_teastore(), TransportKind::Socket);
    let address = mesh.node("auth").unwrap().address().unwrap();
    let response = mesh
        .transport()
        .send(
            &address,
            &WireRequest::post("/adaptiflow/events/notify", serde_json::json!({"x": 1})),
        )
        .unwrap();
    assert_eq!(response.status, 400);
    let events = mesh
        .transport()
        .send(&address, &WireRequest::get("/adaptiflow/events"))
        .unwrap();
    assert_eq!(events.status, 200);
    assert_eq!(events.body, serde_json::json!([]));
}
