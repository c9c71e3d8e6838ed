//! A WebSocket client subscribing to a bus topic through the JSON gateway.

use std::time::Duration;

use contact_bridge::bus::gateway::Gateway;
use contact_bridge::bus::{Bus, ClockMsg, Payload};
use serde_json::json;
use tungstenite::Message;

fn main() -> anyhow::Result<()> {
    let bus = Bus::new();
    let gateway = Gateway::serve(&bus, "127.0.0.1:0")?;
    let (mut ws, _) = tungstenite::connect(format!("ws://{}", gateway.local_addr()))?;
    ws.send(Message::text(json!({"op": "sub", "topic": "rpbi/clock"}).to_string()))?;
    std::thread::sleep(Duration::from_millis(100));

    let clock = bus.node("clock");
    for k in 1..=3u64 {
        clock.send(
            "rpbi/clock",
            k * 4_166_667,
            Payload::Clock(ClockMsg {
                sim_time_ns: k * 4_166_667,
            }),
        )?;
    }
    for _ in 0..3 {
        println!("{}", ws.read()?);
    }
    ws.close(None)?;
    gateway.shutdown();
    Ok(())
}
