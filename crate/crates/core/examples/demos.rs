//! Runs the headless demos, or the one named on the command line.

use contact_bridge::app::demos::{run_demo, DEMOS};

fn main() -> anyhow::Result<()> {
    let names: Vec<String> = match std::env::args().nth(1) {
        Some(n) => vec![n],
        None => DEMOS.iter().map(|s| s.to_string()).collect(),
    };
    for name in names {
        let t0 = std::time::Instant::now();
        let report = run_demo(&name)?;
        println!("{report} ({:.1} s wall)", t0.elapsed().as_secs_f64());
    }
    Ok(())
}
