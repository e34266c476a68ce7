//! `legtwin`: sweeps, figure data, headless episodes, metrics rows, link dumps and
//! the live teleop server.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use legtwin::gait::{GaitKind, GaitParams, GaitPlayer};
use legtwin::harness::{self, Figure, SweepSpec};
use legtwin::link::{
    decode_command, encode_command, Channel, ChannelModel, LinkConfig, Mode, Receiver,
    StreamScheduler, Verdict, COMMAND_LEN,
};
use legtwin::metrics::{MetricsInput, MetricsRow};
use legtwin::sim::{jump_episode, run_episode_with, EpisodeOptions, EpisodeReport, JUMP_CROUCH_Y, JUMP_EXTEND_Y};
use legtwin::teleop::ScriptEntry;
use legtwin::Config;

#[derive(Parser)]
#[command(name = "legtwin", version, about = "Five-bar quadruped control stack twin")]
struct Cli {
    /// TOML file with [geometry], [actuator], [robot], [gait] and [link] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cartesian-product gait sweep to CSV.
    Sweep(SweepArgs),
    /// Regenerate figure CSVs.
    FigureData(FigureArgs),
    /// One headless episode; writes episode.json and optionally trace.csv.
    Run(RunArgs),
    /// Table-style metrics row from an episode report.
    Metrics(MetricsArgs),
    /// Stream gait frames through a simulated link and print them.
    Linkdump(LinkdumpArgs),
    /// Live teleop server.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep spec; axis flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    stride: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    freq: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    duty: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    gait: Option<Vec<GaitKind>>,
    #[arg(long, value_delimiter = ',')]
    payload: Option<Vec<f64>>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FigureArgs {
    /// workspace, gaitplot or sweep; all three when omitted.
    #[arg(value_parser = parse_figure)]
    which: Vec<Figure>,
    /// Also write fk-vectors.json.
    #[arg(long)]
    fk_vectors: bool,
}

fn parse_figure(s: &str) -> Result<Figure, String> {
    s.parse().map_err(|e: harness::HarnessError| e.to_string())
}

#[derive(Args)]
struct LinkFlags {
    /// Command-frame drop probability.
    #[arg(long)]
    drop: Option<f64>,
    #[arg(long)]
    latency_ticks: Option<u32>,
    #[arg(long)]
    jitter_ticks: Option<u32>,
}

impl LinkFlags {
    fn any(&self) -> bool {
        self.drop.is_some() || self.latency_ticks.is_some() || self.jitter_ticks.is_some()
    }

    fn apply(&self, mut m: ChannelModel) -> ChannelModel {
        if let Some(d) = self.drop {
            m.drop_prob = d;
        }
        if let Some(l) = self.latency_ticks {
            m.latency_ticks = l;
        }
        if let Some(j) = self.jitter_ticks {
            m.jitter_ticks = j;
        }
        m
    }
}

#[derive(Args)]
struct GaitFlags {
    #[arg(long)]
    gait: Option<GaitKind>,
    #[arg(long)]
    stride: Option<f64>,
    #[arg(long)]
    freq: Option<f64>,
    #[arg(long)]
    duty: Option<f64>,
    #[arg(long)]
    turn: Option<f64>,
}

impl GaitFlags {
    fn apply(&self, mut g: GaitParams<f64>) -> GaitParams<f64> {
        if let Some(v) = self.gait {
            g.gait = v;
        }
        if let Some(v) = self.stride {
            g.stride_len = v;
        }
        if let Some(v) = self.freq {
            g.frequency = v;
        }
        if let Some(v) = self.duty {
            g.duty = v;
        }
        if let Some(v) = self.turn {
            g.turn = v;
        }
        g
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    gait: GaitFlags,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stream through the simulated link; implied by any link flag.
    #[arg(long)]
    link: bool,
    #[command(flatten)]
    link_flags: LinkFlags,
    /// Also write trace.csv.
    #[arg(long)]
    trace: bool,
    /// Run a jump instead and write jump.json.
    #[arg(long)]
    jump: bool,
    #[arg(long, default_value_t = JUMP_CROUCH_Y)]
    crouch_y: f64,
    #[arg(long, default_value_t = JUMP_EXTEND_Y)]
    extend_y: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct MetricsArgs {
    /// EpisodeReport JSON as written by `run`.
    report: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Report the episode's yaw rate as the turning rate.
    #[arg(long)]
    with_turning_rate: bool,
}

#[derive(Args)]
struct LinkdumpArgs {
    #[command(flatten)]
    link_flags: LinkFlags,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ticks to simulate.
    #[arg(long, default_value_t = 20)]
    ticks: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[command(flatten)]
    link_flags: LinkFlags,
    #[arg(long)]
    seed: Option<u64>,
    /// Step as fast as possible instead of at wall-clock rate.
    #[arg(long)]
    fast: bool,
    /// Directory of static assets served under `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// JSON array of {"t", "command"} entries replayed from session start.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Stop stepping after this many ticks.
    #[arg(long)]
    max_ticks: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let config = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Config::default(),
    };
    match cli.cmd {
        Cmd::Sweep(a) => sweep(&config, &cli.out, a),
        Cmd::FigureData(a) => figure_data(&config, &cli.out, a).map(|_| ExitCode::SUCCESS),
        Cmd::Run(a) => run(&config, &cli.out, a).map(|_| ExitCode::SUCCESS),
        Cmd::Metrics(a) => metrics(a).map(|_| ExitCode::SUCCESS),
        Cmd::Linkdump(a) => linkdump(&config, a).map(|_| ExitCode::SUCCESS),
        Cmd::Serve(a) => serve(config, a).map(|_| ExitCode::SUCCESS),
    }
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn sweep(config: &Config, out: &Path, a: SweepArgs) -> Result<ExitCode> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SweepSpec {
            base: config.gait,
            ..SweepSpec::default()
        },
    };
    if let Some(v) = a.stride {
        spec.stride_len = v;
    }
    if let Some(v) = a.freq {
        spec.frequency = v;
    }
    if let Some(v) = a.duty {
        spec.duty = v;
    }
    if let Some(v) = a.gait {
        spec.gait = v;
    }
    if let Some(v) = a.payload {
        spec.payload = v;
    }
    if let Some(v) = a.duration {
        spec.duration = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    spec.validate()?;
    let cfg = config.robot_config()?;
    eprintln!("sweep: {} combinations", spec.len());
    let rows = harness::sweep(&cfg, &spec)?;
    let path = spec.output.clone().unwrap_or_else(|| out.join("sweep.csv"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_out(dir)?;
    }
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    harness::write_sweep_csv(&rows, std::io::BufWriter::new(file))?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.is_ok()).collect();
    eprintln!("wrote {} ({} rows, {} failed)", path.display(), rows.len(), failed.len());
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for r in &failed {
            let p = &r.point;
            eprintln!(
                "  failed: gait={} stride={} freq={} duty={} payload={}: {}",
                p.gait,
                p.stride_len,
                p.frequency,
                p.duty,
                p.payload,
                r.error.as_deref().unwrap_or("")
            );
        }
        Ok(ExitCode::from(1))
    }
}

fn figure_data(config: &Config, out: &Path, a: FigureArgs) -> Result<()> {
    let cfg = config.robot_config()?;
    let which = if a.which.is_empty() { Figure::ALL.to_vec() } else { a.which };
    for f in which {
        for p in harness::figure_data(&cfg, &config.gait, f, out)? {
            println!("{}", p.display());
        }
    }
    if a.fk_vectors {
        create_out(out)?;
        let p = out.join("fk-vectors.json");
        let mut text = serde_json::to_string_pretty(&harness::fk_test_vectors(&cfg.geom))?;
        text.push('\n');
        fs::write(&p, text)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn run(config: &Config, out: &Path, a: RunArgs) -> Result<()> {
    let cfg = config.robot_config()?;
    create_out(out)?;
    if a.jump {
        let r = jump_episode(&cfg, a.crouch_y, a.extend_y)?;
        let p = out.join("jump.json");
        fs::write(&p, serde_json::to_string_pretty(&r)? + "\n")?;
        println!(
            "takeoff {:.4} m/s  apex {:.4} m (integrated {:.4} m)  -> {}",
            r.takeoff_speed,
            r.apex_height,
            r.apex_integrated,
            p.display()
        );
        return Ok(());
    }
    let gait = a.gait.apply(config.gait);
    gait.validate_for(&cfg.geom)?;
    let link = (a.link || a.link_flags.any()).then(|| {
        let mut l = config.link;
        l.command = a.link_flags.apply(l.command);
        l.telemetry = a.link_flags.apply(l.telemetry);
        l
    });
    let opts = EpisodeOptions {
        link,
        record_trace: a.trace,
    };
    let mut report = run_episode_with(&cfg, &gait, a.duration, a.seed, &opts)?;
    if let Some(trace) = report.trace.take() {
        let p = out.join("trace.csv");
        let f = fs::File::create(&p)?;
        harness::write_trace_csv(&trace, std::io::BufWriter::new(f))?;
        println!("{}", p.display());
    }
    let p = out.join("episode.json");
    fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")?;
    println!(
        "v_ss {:.5} m/s  yaw_rate {:.4} rad/s  mean_current {:.4} A  cot {}  -> {}",
        report.v_ss,
        report.yaw_rate,
        report.mean_current,
        report.cot.map_or("n/a".to_string(), |c| format!("{c:.3}")),
        p.display()
    );
    Ok(())
}

fn metrics(a: MetricsArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let r: EpisodeReport = serde_json::from_str(&text).context("parsing episode report")?;
    let input = MetricsInput {
        voltage: r.bus_voltage,
        mean_current: r.mean_current,
        mass: r.mass,
        v_ss: r.v_ss,
        body_len: r.body_len,
        payload: r.payload,
        robot_mass: r.robot_mass,
        battery_capacity: r.battery_capacity,
    };
    let row = MetricsRow::compute(&input, a.with_turning_rate.then_some(r.yaw_rate));
    let stdout = std::io::stdout();
    match a.format {
        Format::Json => {
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &row)?;
            writeln!(lock)?;
        }
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(harness::fmt_g9).unwrap_or_default();
            let mut w = csv::Writer::from_writer(stdout.lock());
            w.write_record(MetricsRow::CSV_HEADER)?;
            w.write_record([
                harness::fmt_g9(row.ground_velocity),
                harness::fmt_g9(row.normalized_speed),
                opt(row.turning_rate),
                harness::fmt_g9(row.max_payload),
                harness::fmt_g9(row.normalized_payload),
                harness::fmt_g9(row.normalized_workload),
                opt(row.cot),
                harness::fmt_g9(row.runtime_h),
                harness::fmt_g9(row.bus_voltage),
                row.bus_voltage_assumed.to_string(),
            ])?;
            w.flush()?;
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn linkdump(config: &Config, a: LinkdumpArgs) -> Result<()> {
    let cfg = config.robot_config()?;
    let model = ChannelModel {
        seed: a.seed,
        ..a.link_flags.apply(config.link.command)
    };
    model.validate().map_err(anyhow::Error::msg)?;
    let tick_hz = (1.0 / cfg.dt).round() as u32;
    let mut player = GaitPlayer::new(cfg.geom, config.gait)?;
    let mut sched = StreamScheduler::new(config.link.rate_hz, tick_hz, cfg.act);
    let mut chan: Channel<[u8; COMMAND_LEN]> = Channel::new(model);
    let mut rx = Receiver::new();
    println!(
        "# drop={} latency_ticks={} jitter_ticks={} seed={}",
        model.drop_prob, model.latency_ticks, model.jitter_ticks, model.seed
    );
    for tick in 0..a.ticks {
        let targets = player.targets()?;
        if let Some(frame) = sched.poll(tick, &targets, Mode::Stream) {
            let bytes = encode_command(&frame)?;
            let kept = chan.submit(tick, bytes);
            println!(
                "tx {tick:>5} seq={:<5} {} mode={:?} pos={:?}{}",
                frame.seq,
                hex(&bytes),
                frame.mode,
                frame.positions,
                if kept { "" } else { " DROPPED" }
            );
        }
        for bytes in chan.deliver(tick) {
            match decode_command(&bytes) {
                Ok(frame) => {
                    let verdict = match rx.apply(frame) {
                        Verdict::Accept => "applied",
                        Verdict::Reject => "stale",
                    };
                    println!("rx {tick:>5} seq={:<5} {verdict}", frame.seq);
                }
                Err(e) => println!("rx {tick:>5} {}: {e}", hex(&bytes)),
            }
        }
        player.advance(cfg.dt);
    }
    let s = chan.stats;
    println!(
        "# sent={} dropped={} delivered={} applied={} stale={} in_flight={}",
        s.submitted,
        s.dropped,
        s.delivered,
        rx.stats.accepted,
        rx.stats.rejected,
        chan.in_flight()
    );
    Ok(())
}

fn serve(mut config: Config, a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let mut link: LinkConfig = config.link;
    link.command = a.link_flags.apply(link.command);
    link.telemetry = a.link_flags.apply(link.telemetry);
    if let Some(seed) = a.seed {
        link.command.seed = seed;
        link.telemetry.seed = seed ^ 0x5EED_7E1E;
    }
    link.command.validate().map_err(anyhow::Error::msg)?;
    config.link = link;
    let script: Vec<ScriptEntry> = match &a.script {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Vec::new(),
    };
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", a.host, a.port))?;
    if let Some(dir) = &a.static_dir {
        if !dir.is_dir() {
            bail!("static directory {} does not exist", dir.display());
        }
    }
    let opts = legtwin_serve::ServeOptions {
        config,
        pacing: if a.fast {
            legtwin_serve::Pacing::Fast
        } else {
            legtwin_serve::Pacing::RealTime
        },
        static_dir: a.static_dir,
        script,
        max_ticks: a.max_ticks,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let server = legtwin_serve::start(opts, addr).await?;
        println!("listening on http://{}", server.addr);
        tokio::signal::ctrl_c().await?;
        server.shutdown().await?;
        Ok(())
    })
}
