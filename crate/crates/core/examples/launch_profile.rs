//! Launches a profile headless, runs it as fast as possible and prints
//! loop statistics. Pass a profile path to try another one.

use contact_bridge::app::{LaunchOptions, LaunchProfile, System};
use contact_bridge::scene::assets_dir;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| assets_dir().join("pushing.yaml"));
    let profile = LaunchProfile::load(&path)?;
    let mut sys = System::launch(&profile, LaunchOptions::headless())?;
    println!("nodes: {:?}", sys.node_names());
    let stats = sys.run_for(5.0)?;
    println!(
        "{} steps in {:?}: {:.0} steps/s, mean {:?}, p99 {:?}",
        stats.steps,
        stats.wall,
        stats.steps_per_second(),
        stats.mean(),
        stats.percentile(99.0)
    );
    sys.shutdown()?;
    Ok(())
}
