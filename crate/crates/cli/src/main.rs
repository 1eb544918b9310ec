//! Command line entry point: launches, scenario runs, config and bag tools.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use humanoid_core::config::{parse_tree, ConfigServer};
use humanoid_core::launch::{self, LaunchSpec, System};
use humanoid_core::messages::Message;
use humanoid_core::motion::{KeyframeMotion, MotionLibrary, PlannedMotion};
use humanoid_core::msgbus::Bus;
use humanoid_core::perception::lut::{read_samples, ColorLut};
use humanoid_core::telemetry::{Bag, Client, Gateway, GatewayContext, PlotStore, Replayer, TopicHistory};
use humanoid_core::topics;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

const DEFAULT_GATEWAY: &str = "ws://127.0.0.1:9090";

#[derive(Parser)]
#[command(name = "humanoid", version, about = "Humanoid soccer robot control stack")]
struct Cli {
    /// log level filter (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Start the nodes of a launch file
    Launch {
        file: PathBuf,
        /// warn about unknown keys instead of failing
        #[arg(long)]
        lenient: bool,
        /// stop after this many seconds
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Read and change parameters, in a file or on a running system
    #[command(subcommand)]
    Config(ConfigCmd),
    /// Inspect and play keyframe motions
    #[command(subcommand)]
    Motion(MotionCmd),
    /// Record, replay and inspect bags
    #[command(subcommand)]
    Bag(BagCmd),
    /// Color lookup table tools
    #[command(subcommand)]
    Lut(LutCmd),
    /// Simulation runs
    #[command(subcommand)]
    Sim(SimCmd),
}

#[derive(Args, Clone)]
struct Target {
    /// operate on this config file instead of a running system
    #[arg(long)]
    file: Option<PathBuf>,
    /// gateway of the running system
    #[arg(long, default_value = DEFAULT_GATEWAY)]
    gateway: String,
}

#[derive(Subcommand)]
enum ConfigCmd {
    Get {
        path: String,
        #[command(flatten)]
        target: Target,
    },
    Set {
        path: String,
        value: String,
        #[command(flatten)]
        target: Target,
    },
    /// Write the running system's whole tree to a file (server side)
    Save {
        file: PathBuf,
        #[arg(long, default_value = DEFAULT_GATEWAY)]
        gateway: String,
    },
    /// Apply a config file to the running system (server side)
    Load {
        file: PathBuf,
        #[arg(long, default_value = DEFAULT_GATEWAY)]
        gateway: String,
    },
}

#[derive(Subcommand)]
enum MotionCmd {
    /// Ask a running system to play a motion
    Play {
        name: String,
        #[arg(long, default_value = DEFAULT_GATEWAY)]
        gateway: String,
    },
    /// List motions with their planned durations
    List {
        /// motion directory (bundled motions if absent)
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Validate a motion file and report time scaling
    Check { file: PathBuf },
    /// Scale all keyframe times by a factor
    Retime {
        file: PathBuf,
        factor: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sample the planned trajectory as CSV
    Sample {
        file: PathBuf,
        #[arg(long, default_value_t = 125.0)]
        rate: f64,
    },
}

#[derive(Subcommand)]
enum BagCmd {
    /// Launch a system in lockstep and record its bus traffic
    Record {
        launch_file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        /// topics to record (default: all but images)
        #[arg(long)]
        topic: Vec<String>,
    },
    /// Publish a bag onto a fresh bus served by a gateway
    Replay {
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// gateway address to serve the replay on
        #[arg(long, default_value = "127.0.0.1:9090")]
        serve: String,
    },
    /// Print header and per-topic counts
    Info { file: PathBuf },
}

#[derive(Subcommand)]
enum LutCmd {
    /// Fit a lookup table from labeled samples (CSV class,y,u,v)
    Fit {
        samples: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// acceptance radius in YUV counts for every class
        #[arg(long, default_value_t = 40.0)]
        radius: f64,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run a scenario headless in lockstep; exit code 0 on success
    Run {
        /// bundled scenario name or scenario file
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
        /// write a bag of the run
        #[arg(long)]
        bag: Option<PathBuf>,
    },
    /// List bundled scenarios
    List,
}

fn stop_flag() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || s.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install signal handler: {e}");
    }
    stop
}

fn gateway_request(url: &str, op: &str, path: Option<&str>, payload: Value) -> Result<Value> {
    let mut c = Client::connect(url).with_context(|| format!("connecting to {url}"))?;
    let f = c.request(op, path, payload)?;
    c.close();
    if f.op == "error" {
        bail!("{}", f.payload["message"].as_str().unwrap_or("gateway error"));
    }
    Ok(f.payload)
}

/// Parses a command-line value the way the config file would.
fn parse_value(text: &str) -> Result<toml::Value> {
    let doc: toml::Table = toml::from_str(&format!("v = {text}"))
        .or_else(|_| toml::from_str(&format!("v = {}", toml::Value::String(text.to_string()))))
        .map_err(|e| anyhow!("bad value `{text}`: {e}"))?;
    Ok(doc["v"].clone())
}

fn config_cmd(cmd: ConfigCmd) -> Result<()> {
    match cmd {
        ConfigCmd::Get { path, target } => match target.file {
            Some(file) => {
                let text = std::fs::read_to_string(&file)?;
                let (_, v) = parse_tree(&text)?
                    .into_iter()
                    .find(|(p, _)| *p == path)
                    .ok_or_else(|| anyhow!("{path} is not set in {}", file.display()))?;
                println!("{}", serde_json::to_string(&v)?);
            }
            None => {
                let v = gateway_request(&target.gateway, "config.get", Some(&path), Value::Null)?;
                println!("{}", v["value"]);
            }
        },
        ConfigCmd::Set { path, value, target } => {
            let v = parse_value(&value)?;
            match target.file {
                Some(file) => {
                    let text = std::fs::read_to_string(&file).unwrap_or_default();
                    let mut root: toml::Table = toml::from_str(&text)?;
                    let segs: Vec<&str> = path.trim_start_matches('/').split('/').collect();
                    let mut t = &mut root;
                    for s in &segs[..segs.len() - 1] {
                        t = t
                            .entry(s.to_string())
                            .or_insert_with(|| toml::Value::Table(Default::default()))
                            .as_table_mut()
                            .ok_or_else(|| anyhow!("{path} crosses a value"))?;
                    }
                    t.insert(segs[segs.len() - 1].to_string(), v);
                    let out = toml::to_string(&root)?;
                    // refuse to write something the config server would not load
                    ConfigServer::new().load_str(&out)?;
                    std::fs::write(&file, out)?;
                }
                None => {
                    let value: Value = serde_json::to_value(&v)?;
                    let r = gateway_request(&target.gateway, "config.set", Some(&path), json!({ "value": value }))?;
                    println!("{}", r["value"]);
                }
            }
        }
        ConfigCmd::Save { file, gateway } => {
            gateway_request(&gateway, "config.save", None, json!({ "file": file }))?;
        }
        ConfigCmd::Load { file, gateway } => {
            gateway_request(&gateway, "config.load", None, json!({ "file": file }))?;
        }
    }
    Ok(())
}

fn plan_file(file: &Path) -> Result<PlannedMotion> {
    let m = KeyframeMotion::load(file)?;
    Ok(m.plan()?)
}

fn motion_cmd(cmd: MotionCmd) -> Result<()> {
    match cmd {
        MotionCmd::Play { name, gateway } => {
            let r = gateway_request(
                &gateway,
                "call",
                Some(topics::SRV_MOTION_PLAY),
                serde_json::to_value(Message::MotionRequest { name })?,
            )?;
            println!("{r}");
        }
        MotionCmd::List { dir } => {
            let lib = match dir {
                Some(d) => MotionLibrary::load_dir(&d)?,
                None => MotionLibrary::bundled(),
            };
            for name in lib.names() {
                let m = lib.get(&name).expect("listed");
                match m.plan() {
                    Ok(p) => println!("{name}\t{:.3} s\t{} keyframes", p.end_time(), m.keyframes.len()),
                    Err(e) => println!("{name}\tinvalid: {e}"),
                }
            }
        }
        MotionCmd::Check { file } => {
            let p = plan_file(&file)?;
            println!("{}: ok, {:.3} s", p.motion.name, p.end_time());
            for (seg, scale) in p.scaled_segments() {
                println!("segment {seg} stretched by {scale:.3} to respect limits");
            }
        }
        MotionCmd::Retime { file, factor, output } => {
            let m = KeyframeMotion::load(&file)?.retimed(factor)?;
            m.save(&output)?;
        }
        MotionCmd::Sample { file, rate } => {
            if !(rate > 0.0) {
                bail!("rate must be positive");
            }
            let p = plan_file(&file)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let mut header = vec!["t".to_string()];
            header.extend(p.motion.joints.iter().cloned());
            w.write_record(&header)?;
            let n = (p.end_time() * rate).floor() as usize;
            for k in 0..=n {
                let t = (k as f64 / rate).min(p.end_time());
                let s = p.sample(t)?;
                let mut row = vec![t.to_string()];
                row.extend(s.position.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn bag_cmd(cmd: BagCmd) -> Result<()> {
    match cmd {
        BagCmd::Record {
            launch_file,
            output,
            duration,
            topic,
        } => {
            let mut spec = LaunchSpec::load(&launch_file, false)?;
            if !spec.has_node("telemetry") {
                spec.nodes.push("telemetry".into());
            }
            spec.telemetry.bag = Some(output.clone());
            spec.telemetry.record = topic;
            spec.clock = humanoid_core::control::ClockMode::Lockstep;
            if duration.is_some() {
                spec.duration = duration;
            }
            let mut sys = System::launch(spec)?;
            sys.run(&stop_flag())?;
            sys.stop();
            println!("wrote {}", output.display());
        }
        BagCmd::Replay { file, speed, serve } => {
            let bag = Bag::load(&file)?;
            let bus = Bus::new();
            let plots = Arc::new(PlotStore::new(bag.records.len().max(1)));
            let history = Arc::new(TopicHistory::new(bag.records.len().max(1)));
            let ctx = GatewayContext::new(bus.clone(), ConfigServer::new(), plots.clone(), history.clone());
            let gw = Gateway::serve(&serve, ctx)?;
            println!("replaying {} records on {}", bag.records.len(), gw.url());
            let monitor = bus.monitor(1 << 16)?;
            let stop = stop_flag();
            let feeder = {
                let stop = stop.clone();
                std::thread::spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        if let Some(m) = monitor.recv_timeout(std::time::Duration::from_millis(50)) {
                            for (p, v) in launch::plot_samples(&m.topic, &m.payload) {
                                plots.record_if_newer(&p, m.stamp, v);
                            }
                            history.push(m);
                        }
                    }
                })
            };
            let n = Replayer::new(bag).run_wall_clock(&bus, speed, &stop)?;
            println!("replayed {n} records; Ctrl-C to exit");
            while !stop.load(Ordering::Relaxed) {
                std::thread::sleep(std::time::Duration::from_millis(100));
            }
            let _ = feeder.join();
        }
        BagCmd::Info { file } => {
            let bag = Bag::load(&file)?;
            println!("version {}", bag.header.version);
            println!("span    {:.3} .. {:.3} s", bag.header.start, bag.header.end);
            println!("records {}", bag.records.len());
            for (topic, n) in bag.counts() {
                let schema = bag.header.schemas.get(&topic).map(String::as_str).unwrap_or("?");
                println!("  {topic}\t{schema}\t{n}");
            }
        }
    }
    Ok(())
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match cli.cmd {
        Cmd::Launch {
            file,
            lenient,
            duration,
            seed,
        } => {
            let mut spec = LaunchSpec::load(&file, lenient)?;
            if duration.is_some() {
                spec.duration = duration;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let mut sys = System::launch(spec)?;
            if let Some(a) = sys.gateway_addr() {
                println!("gateway on ws://{a}");
            }
            let report = sys.run(&stop_flag())?;
            sys.stop();
            if let Some(t) = report.timing {
                println!(
                    "{} cycles, mean period {:.3} ms, p99 jitter {:.3} ms, {} overruns",
                    t.cycles, t.mean_period_ms, t.p99_jitter_ms, t.overruns
                );
            }
            if let Some(f) = report.fault {
                bail!("control fault: {f}");
            }
        }
        Cmd::Config(c) => config_cmd(c)?,
        Cmd::Motion(c) => motion_cmd(c)?,
        Cmd::Bag(c) => bag_cmd(c)?,
        Cmd::Lut(LutCmd::Fit {
            samples,
            output,
            radius,
        }) => {
            let s = read_samples(&samples)?;
            ColorLut::fit(&s, &[radius; 6])?.save(&output)?;
            println!("fitted {} samples into {}", s.len(), output.display());
        }
        Cmd::Sim(SimCmd::List) => {
            for (name, _) in humanoid_core::world::scenario::BUNDLED_SCENARIOS {
                println!("{name}");
            }
        }
        Cmd::Sim(SimCmd::Run {
            scenario,
            seed,
            duration,
            bag,
        }) => {
            let sc = humanoid_core::world::Scenario::resolve(&scenario)?;
            let mut spec = LaunchSpec {
                seed: seed.unwrap_or(sc.seed),
                scenario: Some(scenario.clone()),
                duration,
                ..LaunchSpec::default()
            };
            spec.telemetry.bag = bag;
            let mut sys = System::launch(spec)?;
            let out = sys.run_scenario()?;
            sys.stop();
            let r = &out.report;
            println!(
                "{}: {} ({:?}) t={:.2} s score {}:{} falls {} recovered {}",
                out.name,
                if out.success { "SUCCESS" } else { "FAILURE" },
                out.criterion,
                r.time,
                r.score[0],
                r.score[1],
                r.falls,
                r.recoveries
            );
            return Ok(out.exit_code());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
