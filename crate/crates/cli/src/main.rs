use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magsteer::harness::{
    default_out_dir, export_plan, parse_override, replay_paced, run_batch_config, run_config, ConfigError,
    HarnessError, LiveSession, RunConfig, Tier,
};
use magsteer::sim::TrialLog;

mod serve;

#[derive(Parser)]
#[command(name = "magsteer", version, about = "Shared-control millirobot simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Override a config key, e.g. `--set params.dt=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replace the configured seeds with this one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $MAGSTEER_LOG_DIR or ./magsteer-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and write its log and metrics.
    Run(ConfigArgs),
    /// Run the policy × tier × seed grid and write logs and reports.
    Batch {
        #[command(flatten)]
        args: ConfigArgs,
        /// Worker threads (default: from the config).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Serve a live session over a websocket at /ws.
    Serve {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Simulation rate relative to real time.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Directory of static console assets served at /.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Re-stream a recorded log.
    Replay {
        log: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Serve over a websocket on this port instead of printing frames.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Export the centerline, arm waypoints and heatmaps for a tier.
    Plan {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        tier: Option<Tier>,
    },
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("seeds".into(), format!("[{seed}]")));
        }
        RunConfig::load(&self.config, &overrides)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(default_out_dir)
    }
}

fn fail(e: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn harness_fail(e: HarnessError) -> ExitCode {
    fail(&e, e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e, 1),
            };
            match run_config(&cfg, &args.out_dir()) {
                Ok(out) => {
                    println!("log: {}", out.log_path.display());
                    println!("metrics: {}", out.metrics_path.display());
                    let m = &out.metrics;
                    println!(
                        "status {:?}  CT {:.2} s  PL {:.3} cm  Va {:.3} cm/s  CC {}  S_raw {:.3}",
                        m.status, m.ct, m.pl, m.va, m.cc, m.s_raw
                    );
                    if out.reached() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => harness_fail(e),
            }
        }
        Command::Batch { args, jobs } => {
            let cfg = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e, 1),
            };
            let out = args.out_dir();
            match run_batch_config(&cfg, &out, jobs) {
                Ok(b) => {
                    println!(
                        "{} of {} trials completed; report in {}",
                        b.manifest.completed,
                        b.manifest.cells,
                        out.display()
                    );
                    for f in &b.manifest.failures {
                        eprintln!("failed: {}/{} seed {}: {}", f.condition, f.tier, f.seed, f.error);
                    }
                    if b.manifest.failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => harness_fail(e),
            }
        }
        Command::Serve {
            args,
            host,
            port,
            speed,
            static_dir,
        } => {
            let cfg = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e, 1),
            };
            if !(speed > 0.0 && speed.is_finite()) {
                return fail("--speed must be positive", 1);
            }
            let session = match cfg
                .load_phantom()
                .map_err(HarnessError::from)
                .and_then(|p| Ok(cfg.setup(&p, cfg.tier, &cfg.policy, cfg.seeds[0])?))
                .and_then(|s| Ok(LiveSession::new(s, cfg.live)?))
            {
                Ok(s) => s,
                Err(e) => return harness_fail(e),
            };
            let addr: SocketAddr = match format!("{host}:{port}").parse() {
                Ok(a) => a,
                Err(e) => return fail(format!("bad address: {e}"), 1),
            };
            let opts = serve::ServeOptions {
                addr,
                speed,
                out_dir: args.out_dir().join("live"),
                static_dir,
            };
            match serve::run_live(session, cfg.live.input_queue, opts) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e, 1),
            }
        }
        Command::Replay { log, speed, port, host } => {
            let trial = match std::fs::File::open(&log)
                .map_err(|e| e.to_string())
                .and_then(|f| TrialLog::read_jsonl(std::io::BufReader::new(f)).map_err(|e| e.to_string()))
            {
                Ok(t) => t,
                Err(e) => return fail(format!("{}: {e}", log.display()), 1),
            };
            if !(speed > 0.0 && speed.is_finite()) {
                return fail("--speed must be positive", 1);
            }
            match port {
                Some(port) => {
                    let addr: SocketAddr = match format!("{host}:{port}").parse() {
                        Ok(a) => a,
                        Err(e) => return fail(format!("bad address: {e}"), 1),
                    };
                    match serve::run_replay(trial, speed, addr) {
                        Ok(()) => ExitCode::SUCCESS,
                        Err(e) => fail(e, 1),
                    }
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut out = stdout.lock();
                    replay_paced(&trial, speed, |f| {
                        writeln!(out, "{}", f.to_json()).and_then(|_| out.flush()).is_ok()
                    });
                    ExitCode::SUCCESS
                }
            }
        }
        Command::Plan { args, tier } => {
            let mut cfg = match args.load() {
                Ok(c) => c,
                Err(e) => return fail(e, 1),
            };
            if let Some(t) = tier {
                cfg.tier = t;
            }
            let out = args.out_dir();
            match export_plan(&cfg, &out) {
                Ok(p) => {
                    println!(
                        "{} tier: {} waypoints, {:.2} mm, {} arm samples; files in {}",
                        p.tier,
                        p.path.len(),
                        p.length_mm,
                        p.plan.len(),
                        out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => harness_fail(e),
            }
        }
    }
}
