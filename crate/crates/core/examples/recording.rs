//! Records a short simulated run to a bag, then summarises it and exports the
//! arm joint positions as CSV.

use std::sync::atomic::AtomicBool;

use contact_bridge::app::{LaunchOptions, LaunchProfile, Pacing, System};
use contact_bridge::recording::{export_csv, read_bag_file, BagInfo, CsvExportSpec, RecordHandle};
use contact_bridge::scene::assets_dir;

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("contact-bridge-recording");
    std::fs::create_dir_all(&dir)?;
    let bag = dir.join("pushing.bag");

    let profile = LaunchProfile::load(assets_dir().join("pushing.yaml"))?;
    let mut sys = System::launch(&profile, LaunchOptions::headless())?;
    let rec = RecordHandle::start(
        sys.bus(),
        &["rpbi/arm/joint_states", "rpbi/tf/target", "rpbi/clock"],
        &bag,
    )?;
    // real-time pacing lets the recorder thread keep up
    sys.run(1.0, Pacing::RealTime, &AtomicBool::new(false))?;
    sys.shutdown()?;
    let n = rec.stop()?;
    println!("recorded {n} messages to {}", bag.display());

    let records = read_bag_file(&bag)?;
    print!("{}", BagInfo::of(&records));
    let csv = export_csv(&CsvExportSpec::new("rpbi/arm/joint_states", &["position"]), &records)?;
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    Ok(())
}
