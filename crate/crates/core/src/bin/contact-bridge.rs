use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use contact_bridge::app::demos::run_demo;
use contact_bridge::app::{LaunchOptions, LaunchProfile, Pacing, System};
use contact_bridge::bus::tcp::TcpBridge;
use contact_bridge::bus::Bus;
use contact_bridge::recording::{export_csv, play, read_bag_file, BagInfo, CsvExportSpec, PlayOptions, RecordHandle};

#[derive(Parser)]
#[command(name = "contact-bridge", version, about = "Contact-simulation middleware")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Launch a profile: simulator, nodes and servers.
    Run {
        profile: PathBuf,
        /// Do not start the gateway, TCP bridge or HTTP server.
        #[arg(long)]
        headless: bool,
        /// Apply the profile's real_robot remaps.
        #[arg(long)]
        real_robot: bool,
        /// Stop after this many seconds of sim time.
        #[arg(long)]
        duration: Option<f64>,
        /// Step as fast as possible instead of in real time.
        #[arg(long)]
        fast: bool,
    },
    /// Run a scripted demo and exit non-zero if it fails.
    Demo {
        /// interaction, pushing or mpc
        name: String,
    },
    /// Bag tools (also available as `rpbag` through a symlink).
    #[command(subcommand)]
    Bag(BagCommand),
}

#[derive(Subcommand)]
enum BagCommand {
    /// Record topics exported by a running instance's TCP bridge.
    Record {
        #[arg(long)]
        connect: String,
        #[arg(long, short, num_args = 1.., required = true)]
        topics: Vec<String>,
        #[arg(long, short)]
        output: PathBuf,
        /// Seconds to record; until Ctrl-C when absent.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Publish a bag's records to a running instance's TCP bridge.
    Play {
        bag: PathBuf,
        #[arg(long)]
        connect: String,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
    },
    /// Flatten one topic to CSV.
    Export {
        bag: PathBuf,
        #[arg(long)]
        topic: String,
        #[arg(long, value_delimiter = ',', required = true)]
        fields: Vec<String>,
        /// Written to stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Summarise a bag.
    Info { bag: PathBuf },
}

fn stop_flag() -> Result<Arc<AtomicBool>> {
    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    ctrlc::set_handler(move || s.store(true, Ordering::Relaxed)).context("installing the Ctrl-C handler")?;
    Ok(stop)
}

fn run(profile: PathBuf, headless: bool, real_robot: bool, duration: Option<f64>, fast: bool) -> Result<()> {
    let profile = LaunchProfile::load(&profile)?;
    let opts = LaunchOptions {
        headless,
        real_robot: real_robot.then_some(true),
    };
    let mut sys = System::launch(&profile, opts)?;
    if let Some(a) = sys.gateway_addr() {
        log::info!("gateway on ws://{a}");
    }
    if let Some(a) = sys.tcp_addr() {
        log::info!("tcp bridge on {a}");
    }
    let stop = stop_flag()?;
    let pacing = if fast {
        Pacing::AsFastAsPossible
    } else {
        Pacing::RealTime
    };
    let stats = sys.run(duration.unwrap_or(f64::INFINITY), pacing, &stop)?;
    sys.shutdown()?;
    log::info!(
        "{} steps, {:.0} steps/s, mean {:?}, p99 {:?}",
        stats.steps,
        stats.steps_per_second(),
        stats.mean(),
        stats.percentile(99.0)
    );
    Ok(())
}

fn bag(cmd: BagCommand) -> Result<()> {
    match cmd {
        BagCommand::Record {
            connect,
            topics,
            output,
            duration,
        } => {
            let bus = Bus::new();
            let bridge =
                TcpBridge::connect(&bus, connect.as_str(), &[]).with_context(|| format!("connecting to {connect}"))?;
            let topics: Vec<&str> = topics.iter().map(String::as_str).collect();
            let rec = RecordHandle::start(&bus, &topics, &output)?;
            let stop = stop_flag()?;
            let t0 = std::time::Instant::now();
            while !stop.load(Ordering::Relaxed) && duration.is_none_or(|d| t0.elapsed().as_secs_f64() < d) {
                std::thread::sleep(Duration::from_millis(20));
            }
            let n = rec.stop()?;
            bridge.shutdown();
            eprintln!("wrote {n} records to {}", output.display());
        }
        BagCommand::Play { bag, connect, rate } => {
            let records = read_bag_file(&bag)?;
            let topics: std::collections::BTreeSet<&str> = records.iter().map(|r| r.topic.as_str()).collect();
            let topics: Vec<&str> = topics.into_iter().collect();
            let bus = Bus::new();
            let bridge = TcpBridge::connect(&bus, connect.as_str(), &topics)
                .with_context(|| format!("connecting to {connect}"))?;
            let n = play(&bus.node("rpbag_play"), &records, &PlayOptions::rate(rate))?;
            // let the bridge drain its queues before closing
            std::thread::sleep(Duration::from_millis(200));
            bridge.shutdown();
            eprintln!("played {n} records");
        }
        BagCommand::Export {
            bag,
            topic,
            fields,
            output,
        } => {
            let records = read_bag_file(&bag)?;
            let fields: Vec<&str> = fields.iter().map(String::as_str).collect();
            let csv = export_csv(&CsvExportSpec::new(topic, &fields), &records)?;
            match output {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        BagCommand::Info { bag } => {
            let records = read_bag_file(&bag)?;
            print!("{}", BagInfo::of(&records));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args: Vec<String> = std::env::args().collect();
    let invoked_as_rpbag = args
        .first()
        .and_then(|a| std::path::Path::new(a).file_stem())
        .is_some_and(|s| s == "rpbag");
    if invoked_as_rpbag {
        args.insert(1, "bag".into());
    }
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Command::Run {
            profile,
            headless,
            real_robot,
            duration,
            fast,
        } => run(profile, headless, real_robot, duration, fast),
        Command::Demo { name } => run_demo(&name).map_err(Into::into).and_then(|r| {
            println!("{r}");
            if !r.passed {
                bail!("demo `{}` failed", r.name);
            }
            Ok(())
        }),
        Command::Bag(cmd) => bag(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
