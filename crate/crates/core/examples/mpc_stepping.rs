//! A controller that either free-runs at its rate or is stepped one
//! iteration at a time, here through the bus services.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use contact_bridge::bus::Bus;
use contact_bridge::utils::mpc::STEP_SERVICE;
use contact_bridge::utils::MpcController;
use serde_json::json;

fn main() -> anyhow::Result<()> {
    let solved = Arc::new(AtomicU64::new(0));
    let counter = solved.clone();
    let mpc = MpcController::new(
        10.0,
        Box::new(move |k| {
            counter.fetch_add(1, Ordering::SeqCst);
            println!("  solving iteration {k}");
        }),
    );

    println!("free running for 0.35 s of sim time at 10 Hz:");
    mpc.start();
    for t in (0..=350_000_000u64).step_by(50_000_000) {
        mpc.poll(t);
    }
    mpc.stop();

    let bus = Bus::new();
    let _services = mpc.advertise(&bus.node("mpc"))?;
    println!("stepping twice through {STEP_SERVICE}:");
    for _ in 0..2 {
        println!("  -> {}", bus.call(STEP_SERVICE, json!({}))?);
    }
    mpc.start();
    println!("stepping while running: {:?}", bus.call(STEP_SERVICE, json!({})));
    println!(
        "iterations {} = ticks {}",
        mpc.state().iterations,
        solved.load(Ordering::SeqCst)
    );
    Ok(())
}
