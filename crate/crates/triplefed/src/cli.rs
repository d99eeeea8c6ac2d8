//! Command-line interface.
//!
//! Two ways to run:
//!
//! - **In-process** (the default): `query` and `workload` spin up a whole
//!   cluster inside one process, load the `--data` file, run, and exit.
//!   Handy for experiments and tests; nothing survives the process.
//! - **TCP** (`--transport tcp`): `serve` runs a master or worker node;
//!   `load`, `query`, `update`, `workload`, `metrics`, and `shutdown`
//!   talk to the running master as clients.
//!
//! Results go to stdout and are deterministic for a given dataset and
//! command sequence; timings and progress chatter go to stderr.

use std::fs;
use std::io::Write as _;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::cluster::tcp::{
    master_mesh, read_client_reply, worker_mesh, write_client_request, ClientReply, ClientRequest,
};
use crate::config::{Config, TransportKind};
use crate::error::{Error, Result};
use crate::master::Cluster;
use crate::sparql::parse_query_file;

#[derive(Debug, Parser)]
#[command(
    name = "triplefed",
    version,
    about = "Adaptive distributed RDF store: semi-join queries that turn parallel for hot shapes"
)]
struct Cli {
    /// key=value config file; flags below override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Number of workers.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// `inproc` or `tcp`.
    #[arg(long, global = true)]
    transport: Option<String>,
    /// Master address (tcp): where workers and clients connect.
    #[arg(long, global = true, value_name = "ADDR")]
    master_addr: Option<String>,
    /// Seed for randomized placement decisions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Queries of one shape beyond this count trigger redistribution.
    #[arg(long, global = true, value_name = "N")]
    freq_threshold: Option<u64>,
    /// Template positions with more distinct values than this generalize
    /// to a variable when redistributing.
    #[arg(long, global = true, value_name = "N")]
    proactivity_threshold: Option<u64>,
    /// Replication cap as a fraction of the dataset (`inf` to disable).
    #[arg(long, global = true, value_name = "R")]
    rho_max: Option<String>,
    /// Placement pin file (exact terms or `prefix*` to worker ids).
    #[arg(long, global = true, value_name = "FILE")]
    pin_file: Option<PathBuf>,
    /// Membership predicate excluded from scoring.
    #[arg(long, global = true, value_name = "PRED")]
    type_predicate: Option<String>,
    /// Barrier timeout in milliseconds.
    #[arg(long, global = true, value_name = "MS")]
    timeout_ms: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one cluster node over TCP (master first, then the workers).
    Serve {
        /// `master` or `worker`.
        #[arg(long)]
        role: String,
        /// Worker id, 0-based. Required for workers.
        #[arg(long)]
        id: Option<u32>,
        /// Worker data-plane listen address; port 0 picks a free port.
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
    },
    /// Bulk-load a triple file into the running master (tcp only).
    Load {
        file: PathBuf,
        /// Per-triple placement: one worker id per line, aligned with the
        /// triple file. Round-robin without it.
        #[arg(long, value_name = "FILE")]
        placement: Option<PathBuf>,
    },
    /// Answer one query and print the rows.
    Query {
        /// Query text, inline.
        #[arg(required_unless_present = "file", conflicts_with = "file")]
        text: Option<String>,
        /// Read the query from a file instead.
        #[arg(long, value_name = "FILE")]
        file: Option<PathBuf>,
        /// In-process runs: triple file to load first.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// In-process runs: placement file for --data.
        #[arg(long, value_name = "FILE")]
        placement: Option<PathBuf>,
    },
    /// Apply an update batch (`+ s p o` / `- s p o` lines).
    Update {
        /// Update text, inline.
        #[arg(required_unless_present = "file", conflicts_with = "file")]
        text: Option<String>,
        /// Read the updates from a file instead.
        #[arg(long, value_name = "FILE")]
        file: Option<PathBuf>,
    },
    /// Run a `---`-separated query file sequentially; print one CSV line
    /// per query with mode, timing, replication, and traffic.
    Workload {
        file: PathBuf,
        /// In-process runs: triple file to load first.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
        /// In-process runs: placement file for --data.
        #[arg(long, value_name = "FILE")]
        placement: Option<PathBuf>,
    },
    /// Print storage and traffic counters.
    Metrics,
    /// Stop the running master and its workers (tcp only).
    Shutdown,
}

pub fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("triplefed: {e}");
            std::process::exit(1);
        }
    }
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if let Some(v) = cli.workers {
        cfg.set("n_workers", &v.to_string())?;
    }
    if let Some(v) = &cli.transport {
        cfg.set("transport", v)?;
    }
    if let Some(v) = &cli.master_addr {
        cfg.set("master_addr", v)?;
    }
    if let Some(v) = cli.seed {
        cfg.set("seed", &v.to_string())?;
    }
    if let Some(v) = cli.freq_threshold {
        cfg.set("freq_threshold", &v.to_string())?;
    }
    if let Some(v) = cli.proactivity_threshold {
        cfg.set("proactivity_threshold", &v.to_string())?;
    }
    if let Some(v) = &cli.rho_max {
        cfg.set("rho_max", v)?;
    }
    if let Some(v) = &cli.pin_file {
        cfg.set("hash_pin_file", &v.display().to_string())?;
    }
    if let Some(v) = &cli.type_predicate {
        cfg.set("type_predicate", v)?;
    }
    if let Some(v) = cli.timeout_ms {
        cfg.set("barrier_timeout_ms", &v.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::Serve { role, id, listen } => serve(cfg, &role, id, &listen),
        Command::Load { file, placement } => {
            require_tcp(&cfg, "load")?;
            let text = fs::read_to_string(&file)?;
            let assign = placement.as_deref().map(read_placement).transpose()?;
            print_reply(client_call(&cfg, &ClientRequest::Load { text, assign })?)
        }
        Command::Query { text, file, data, placement } => {
            let text = inline_or_file(text, file.as_deref())?;
            match cfg.transport {
                TransportKind::Tcp => {
                    print_reply(client_call(&cfg, &ClientRequest::Query { text })?)
                }
                TransportKind::Inproc => {
                    let mut cluster = oneshot_cluster(cfg, data.as_deref(), placement.as_deref())?;
                    let result = cluster.query_text(&text);
                    cluster.shutdown()?;
                    let out = result?;
                    print_query(out.mode.as_str(), out.redistributed, out.wall_us, &out.header, &out.rows);
                    Ok(0)
                }
            }
        }
        Command::Update { text, file } => {
            require_tcp(&cfg, "update")?;
            let text = inline_or_file(text, file.as_deref())?;
            print_reply(client_call(&cfg, &ClientRequest::Update { text })?)
        }
        Command::Workload { file, data, placement } => {
            let text = fs::read_to_string(&file)?;
            match cfg.transport {
                TransportKind::Tcp => {
                    print_reply(client_call(&cfg, &ClientRequest::Workload { text })?)
                }
                TransportKind::Inproc => {
                    let mut cluster = oneshot_cluster(cfg, data.as_deref(), placement.as_deref())?;
                    let result = run_workload(&mut cluster, &text);
                    cluster.shutdown()?;
                    print!("{}", result?);
                    Ok(0)
                }
            }
        }
        Command::Metrics => {
            require_tcp(&cfg, "metrics")?;
            print_reply(client_call(&cfg, &ClientRequest::Metrics)?)
        }
        Command::Shutdown => {
            require_tcp(&cfg, "shutdown")?;
            print_reply(client_call(&cfg, &ClientRequest::Shutdown)?)
        }
    }
}

fn require_tcp(cfg: &Config, what: &str) -> Result<()> {
    match cfg.transport {
        TransportKind::Tcp => Ok(()),
        TransportKind::Inproc => Err(Error::Config(format!(
            "`{what}` needs a running cluster: pass --transport tcp (and --master-addr)"
        ))),
    }
}

fn inline_or_file(text: Option<String>, file: Option<&Path>) -> Result<String> {
    match (text, file) {
        (Some(t), None) => Ok(t),
        (None, Some(p)) => Ok(fs::read_to_string(p)?),
        _ => Err(Error::Config("pass the text inline or --file, not both".into())),
    }
}

fn read_placement(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|_| {
            Error::Config(format!("placement file line {}: bad worker id `{line}`", i + 1))
        })?);
    }
    Ok(out)
}

fn oneshot_cluster(
    cfg: Config,
    data: Option<&Path>,
    placement: Option<&Path>,
) -> Result<Cluster> {
    let Some(data) = data else {
        return Err(Error::Config(
            "in-process runs need --data FILE (or use --transport tcp against a running master)"
                .into(),
        ));
    };
    let text = fs::read_to_string(data)?;
    let assign = placement.map(read_placement).transpose()?;
    let mut cluster = Cluster::start_inproc(cfg)?;
    let loaded = cluster.load_text(&text, assign.as_deref());
    match loaded {
        Ok(n) => {
            eprintln!("loaded {n} triples");
            Ok(cluster)
        }
        Err(e) => {
            let _ = cluster.shutdown();
            Err(e)
        }
    }
}

/// One CSV line per query: sequence number, execution mode, this query's
/// wall time, running total, and the replication/traffic state after it.
pub fn run_workload(cluster: &mut Cluster, text: &str) -> Result<String> {
    let queries = parse_query_file(text)?;
    let mut csv =
        String::from("query_seq,mode,wall_ms,cumulative_ms,replication_ratio,remote_bytes\n");
    let mut cumulative_ms = 0.0;
    for (i, q) in queries.iter().enumerate() {
        let out = cluster.run_query(q)?;
        let wall_ms = out.wall_us as f64 / 1000.0;
        cumulative_ms += wall_ms;
        let metrics = cluster.metrics();
        csv.push_str(&format!(
            "{},{},{:.3},{:.3},{:.6},{}\n",
            i + 1,
            out.mode,
            wall_ms,
            cumulative_ms,
            metrics.replication_ratio(),
            metrics.remote_bytes()
        ));
    }
    Ok(csv)
}

// -- tcp client ------------------------------------------------------------

fn client_call(cfg: &Config, req: &ClientRequest) -> Result<ClientReply> {
    let mut stream = TcpStream::connect(&cfg.master_addr)
        .map_err(|e| Error::Transport(format!("connect to {} failed: {e}", cfg.master_addr)))?;
    write_client_request(&mut stream, req)?;
    read_client_reply(&mut stream)
}

fn print_reply(reply: ClientReply) -> Result<i32> {
    match reply {
        ClientReply::Rows { mode, redistributed, wall_us, header, rows } => {
            print_query(&mode, redistributed, wall_us, &header, &rows);
            Ok(0)
        }
        ClientReply::Csv(csv) | ClientReply::Text(csv) => {
            print!("{csv}");
            if !csv.ends_with('\n') {
                println!();
            }
            Ok(0)
        }
        ClientReply::Ok { wall_us } => {
            eprintln!("ok ({:.3} ms)", wall_us as f64 / 1000.0);
            Ok(0)
        }
        ClientReply::Error(e) => {
            eprintln!("triplefed: {e}");
            Ok(1)
        }
    }
}

/// Stable stdout shape: mode line, then either `true`/`false` for
/// variable-free queries or a tab-joined header plus one row per line.
fn print_query(mode: &str, redistributed: bool, wall_us: u64, header: &[String], rows: &[Vec<String>]) {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let _ = w.write_all(crate::master::render_rows(mode, header, rows).as_bytes());
    drop(w);
    eprintln!(
        "{} rows in {:.3} ms{}",
        rows.len(),
        wall_us as f64 / 1000.0,
        if redistributed { " (redistributed first)" } else { "" }
    );
}

// -- tcp server ------------------------------------------------------------

fn serve(cfg: Config, role: &str, id: Option<u32>, listen: &str) -> Result<i32> {
    match role {
        "master" => serve_master(cfg),
        "worker" => {
            let id = id.ok_or_else(|| Error::Config("worker needs --id".into()))?;
            if id as usize >= cfg.n_workers {
                return Err(Error::Config(format!(
                    "worker id {id} out of range for {} workers",
                    cfg.n_workers
                )));
            }
            let transport = worker_mesh(&cfg.master_addr, listen, id)?;
            let mut worker = crate::worker::Worker::new(id, transport, &cfg)?;
            eprintln!("worker {id}: meshed via {}", cfg.master_addr);
            worker.run()?;
            eprintln!("worker {id}: stopped");
            Ok(0)
        }
        other => Err(Error::Config(format!("unknown role `{other}` (master or worker)"))),
    }
}

fn serve_master(cfg: Config) -> Result<i32> {
    let listener = TcpListener::bind(&cfg.master_addr)
        .map_err(|e| Error::Transport(format!("bind {} failed: {e}", cfg.master_addr)))?;
    let n = cfg.n_workers as u32;
    eprintln!("master: waiting for {n} workers on {}", cfg.master_addr);
    let transport = master_mesh(&listener, n)?;
    let mut cluster = Cluster::attach(cfg, transport);
    eprintln!("master: mesh ready, serving clients");
    loop {
        let (mut stream, _) = match listener.accept() {
            Ok(conn) => conn,
            Err(e) => {
                eprintln!("master: accept failed: {e}");
                continue;
            }
        };
        let req = match crate::cluster::tcp::read_client_request(&mut stream) {
            Ok(req) => req,
            Err(e) => {
                eprintln!("master: bad client request: {e}");
                continue;
            }
        };
        let stop = matches!(req, ClientRequest::Shutdown);
        let reply = dispatch(&mut cluster, req);
        if let Err(e) = crate::cluster::tcp::write_client_reply(&mut stream, &reply) {
            eprintln!("master: reply failed: {e}");
        }
        if stop {
            break;
        }
    }
    cluster.shutdown()?;
    eprintln!("master: stopped");
    Ok(0)
}

fn dispatch(cluster: &mut Cluster, req: ClientRequest) -> ClientReply {
    match req {
        ClientRequest::Load { text, assign } => {
            match cluster.load_text(&text, assign.as_deref()) {
                Ok(n) => ClientReply::Text(format!("loaded {n} triples")),
                Err(e) => ClientReply::Error(e.to_string()),
            }
        }
        ClientRequest::Query { text } => match cluster.query_text(&text) {
            Ok(out) => ClientReply::Rows {
                mode: out.mode.as_str().to_owned(),
                redistributed: out.redistributed,
                wall_us: out.wall_us,
                header: out.header,
                rows: out.rows,
            },
            Err(e) => ClientReply::Error(e.to_string()),
        },
        ClientRequest::Update { text } => match cluster.update_text(&text) {
            Ok(out) => ClientReply::Text(format!("applied {} updates", out.applied)),
            Err(e) => ClientReply::Error(e.to_string()),
        },
        ClientRequest::Metrics => ClientReply::Text(cluster.metrics().render()),
        ClientRequest::Workload { text } => match run_workload(cluster, &text) {
            Ok(csv) => ClientReply::Csv(csv),
            Err(e) => ClientReply::Error(e.to_string()),
        },
        ClientRequest::Shutdown => ClientReply::Ok { wall_us: 0 },
    }
}
