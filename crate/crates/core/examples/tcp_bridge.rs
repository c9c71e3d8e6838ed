//! Two buses joined over TCP: the listener exports a topic, the peer sees it.

use std::time::Duration;

use contact_bridge::bus::tcp::TcpBridge;
use contact_bridge::bus::{Bus, Payload, TextMsg};

fn main() -> anyhow::Result<()> {
    let sim_side = Bus::new();
    let server = TcpBridge::listen(&sim_side, "127.0.0.1:0", &["demo/status"])?;

    let remote = Bus::new();
    let client = TcpBridge::connect(&remote, server.local_addr(), &[])?;
    let sub = remote.node("remote_listener").subscribe("demo/status");
    // give the link a moment to carry the subscription
    std::thread::sleep(Duration::from_millis(100));

    let talker = sim_side.node("status");
    for k in 0..3u64 {
        talker.send(
            "demo/status",
            k + 1,
            Payload::Text(TextMsg {
                text: format!("tick {k}"),
            }),
        )?;
    }
    for _ in 0..3 {
        match sub.recv_timeout(Duration::from_secs(2)) {
            Some(env) => println!("remote got {} @ {}: {:?}", env.topic, env.stamp_ns, env.payload),
            None => println!("nothing arrived"),
        }
    }
    client.shutdown();
    server.shutdown();
    Ok(())
}
