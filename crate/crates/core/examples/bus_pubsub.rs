//! Topics and services on the in-process bus.

use std::time::Duration;

use contact_bridge::bus::{Bus, Float64ArrayMsg, Payload};
use serde_json::json;

fn main() -> anyhow::Result<()> {
    let bus = Bus::new();
    let talker = bus.node("talker");
    let listener = bus.node("listener");

    let sub = listener.subscribe("demo/numbers");
    for k in 1..=3u64 {
        talker.send(
            "demo/numbers",
            k * 1_000_000,
            Payload::Float64Array(Float64ArrayMsg::new(vec![k as f64; 2])),
        )?;
    }
    while let Some(env) = sub.recv_timeout(Duration::from_millis(10)) {
        println!("{} @ {} ns: {:?}", env.topic, env.stamp_ns, env.payload);
    }

    // the service stays advertised while `_server` lives
    let _server = listener.advertise_service("demo/add", |req| {
        let a = req["a"].as_f64().ok_or("`a` must be a number")?;
        let b = req["b"].as_f64().ok_or("`b` must be a number")?;
        Ok(json!({ "sum": a + b }))
    })?;
    println!("demo/add -> {}", bus.call("demo/add", json!({"a": 2, "b": 40}))?);
    println!("demo/add -> {:?}", bus.call("demo/add", json!({"a": "two"})));

    for edge in bus.graph() {
        println!("{:>10} {:?} {}", edge.node, edge.kind, edge.name);
    }
    Ok(())
}
