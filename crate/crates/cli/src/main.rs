//! `ndpfs` command-line front end.
//!
//! Talks to a device over TCP (`--addr`, or `NDPFS_DEVICE_ADDR` which takes
//! precedence) or opens a volume in-process with `--volume PATH`.

use std::fs::File;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ndpfs::bench::{run_bench, BenchParams};
use ndpfs::device::{Device, DeviceConfig, Notify, OpResult, TriggerAction, TriggerEvent, TriggerPayload};
use ndpfs::expr::{parse_mutation, parse_predicate, parse_program, Mutation, ParseError};
use ndpfs::host::{DcFile, GetTarget, HostFs, Mode, Outcome};
use ndpfs::ingest::ingest_csv;
use ndpfs::item::{Item, ItemSchema};
use ndpfs::volume::{Volume, VolumeOptions};
use ndpfs::wire::{serve, OpenFlags};

const ADDR_ENV: &str = "NDPFS_DEVICE_ADDR";

#[derive(Parser)]
#[clap(name = "ndpfs", version, about = "Data-centric file system client and device")]
struct Cli {
    /// Device address (host:port). NDPFS_DEVICE_ADDR overrides it.
    #[clap(long, global = true)]
    addr: Option<String>,

    /// Open this volume in-process instead of connecting to a device.
    #[clap(long, global = true)]
    volume: Option<PathBuf>,

    #[clap(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or inspect a volume directory.
    #[clap(subcommand)]
    Volume(VolumeCmd),
    /// Serve a volume over TCP until killed.
    Serve {
        path: PathBuf,
        #[clap(long, default_value = "127.0.0.1:7070")]
        listen: String,
        /// Maximum unretrieved asynchronous requests.
        #[clap(long)]
        queue_depth: Option<usize>,
    },
    /// Manage containers.
    #[clap(subcommand)]
    Container(ContainerCmd),
    /// Append the rows of a CSV file to a container.
    Ingest {
        name: String,
        file: PathBuf,
        /// Create the container with this schema if it does not exist.
        #[clap(long)]
        schema: Option<String>,
    },
    /// Run a data-centric request against a container.
    Query(QueryArgs),
    /// Run all journaled delayed requests now.
    Flush,
    /// Manage triggers.
    #[clap(subcommand)]
    Trigger(TriggerCmd),
    /// Compare classic and data-centric traffic for a filter.
    Bench {
        #[clap(long, default_value_t = 100_000)]
        n: u64,
        #[clap(long, default_value_t = 0.01)]
        selectivity: f64,
        #[clap(long, default_value_t = 32)]
        item_bytes: u32,
        #[clap(long, default_value_t = 42)]
        seed: u64,
        /// Write the deterministic key=value report here.
        #[clap(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VolumeCmd {
    Create { path: PathBuf },
    /// List containers without starting a device.
    Info { path: PathBuf },
}

#[derive(Subcommand)]
enum ContainerCmd {
    Create {
        name: String,
        /// Field list such as `city:utf8(16),temp:f64,alert:bool`.
        #[clap(long)]
        schema: String,
    },
}

#[derive(Subcommand)]
enum TriggerCmd {
    Add {
        name: String,
        #[clap(long, value_enum)]
        on: EventArg,
        /// Predicate selecting the items that fire the trigger.
        #[clap(long = "when")]
        when: String,
        /// Mutation applied to matching items.
        #[clap(long = "set", conflicts_with = "program", required_unless_present = "program")]
        set: Option<String>,
        /// Scalar program logged per event batch.
        #[clap(long)]
        program: Option<String>,
    },
    List,
    Rm { id: u64 },
    /// Print the trigger log of a container.
    Log { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum EventArg {
    Append,
    Set,
    Delete,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sync,
    Async,
    Delayed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Verb {
    Get,
    Set,
    Execute,
}

#[derive(clap::Args)]
struct QueryArgs {
    name: String,
    #[clap(value_enum)]
    verb: Verb,
    /// Predicate for get and set, program for execute.
    expr: String,
    /// Mutation for set.
    expr2: Option<String>,
    #[clap(long, value_enum, default_value = "sync")]
    mode: ModeArg,
    /// Poll for the completion every K milliseconds (sync mode).
    #[clap(long, conflicts_with = "interrupt")]
    poll_ms: Option<u64>,
    /// Wait for a pushed completion (sync mode, the default).
    #[clap(long)]
    interrupt: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Volume(VolumeCmd::Create { path }) => {
            Device::create(path, DeviceConfig::default())
                .with_context(|| format!("creating volume {}", path.display()))?;
            println!("created volume {}", path.display());
            Ok(())
        }
        Command::Volume(VolumeCmd::Info { path }) => volume_info(path),
        Command::Serve { path, listen, queue_depth } => {
            let mut config = DeviceConfig::default();
            if let Some(q) = queue_depth {
                config.queue_depth = *q;
            }
            let dev = Arc::new(Device::open(path, config).with_context(|| format!("opening {}", path.display()))?);
            let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
            let handle = serve(dev, listener)?;
            println!("serving {} on {}", path.display(), handle.local_addr());
            handle.wait();
            Ok(())
        }
        Command::Bench { n, selectivity, item_bytes, seed, out } => {
            let params = BenchParams {
                n: *n,
                selectivity: *selectivity,
                item_bytes: *item_bytes,
                seed: *seed,
            };
            params.validate()?;
            let scratch;
            let host = match device_addr(&cli) {
                Some(_) => connect(&cli)?,
                None if cli.volume.is_some() => connect(&cli)?,
                None => {
                    scratch = tempfile::tempdir()?;
                    let path = scratch.path().join("bench.vol");
                    HostFs::loopback(Arc::new(Device::create(&path, DeviceConfig::default())?))
                }
            };
            let report = run_bench(&host, params)?;
            println!("{report}");
            if let Some(out) = out {
                std::fs::write(out, report.report_file()).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
        cmd => {
            let host = connect(&cli)?;
            let before = host.ledger();
            client_command(&host, cmd)?;
            let d = host.ledger().since(&before);
            eprintln!("traffic: sent={} received={} total={} bytes", d.bytes_sent, d.bytes_received, d.total());
            Ok(())
        }
    }
}

fn device_addr(cli: &Cli) -> Option<String> {
    std::env::var(ADDR_ENV).ok().filter(|a| !a.is_empty()).or_else(|| cli.addr.clone())
}

fn connect(cli: &Cli) -> Result<HostFs> {
    if let Some(addr) = device_addr(cli) {
        return HostFs::connect(&addr).with_context(|| format!("connecting to {addr}"));
    }
    match &cli.volume {
        Some(path) => {
            let dev = Device::open(path, DeviceConfig::default()).with_context(|| format!("opening {}", path.display()))?;
            Ok(HostFs::loopback(Arc::new(dev)))
        }
        None => bail!("no device: pass --addr, set {ADDR_ENV}, or pass --volume"),
    }
}

fn volume_info(path: &Path) -> Result<()> {
    let vol = Volume::open(path, VolumeOptions::default()).with_context(|| format!("opening {}", path.display()))?;
    println!("volume {}", path.display());
    for c in vol.containers() {
        println!(
            "{:>4}  {:<20} items={} live={} generation={} schema={}",
            c.id,
            c.name,
            c.item_count,
            c.live_count(),
            c.generation,
            c.schema
        );
    }
    Ok(())
}

fn client_command(host: &HostFs, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Container(ContainerCmd::Create { name, schema }) => {
            let schema: ItemSchema = schema.parse().map_err(|e| anyhow!("bad schema: {e}"))?;
            let id = host.client().create_container(name, &schema)?;
            println!("created container {name} id={id}");
        }
        Command::Ingest { name, file, schema } => {
            let schema = schema
                .as_deref()
                .map(|s| s.parse::<ItemSchema>().map_err(|e| anyhow!("bad schema: {e}")))
                .transpose()?;
            let flags = OpenFlags {
                create: schema.is_some(),
                read_only: false,
            };
            let dc = host.open_dc(name, flags, schema.as_ref())?;
            let input = File::open(file).with_context(|| format!("opening {}", file.display()))?;
            let n = ingest_csv(host, &dc, std::io::BufReader::new(input))?;
            println!("ingested {n} rows into {name}");
            host.close_dc(&dc)?;
        }
        Command::Query(q) => query(host, q)?,
        Command::Flush => {
            let done = host.flush_delayed()?;
            for rec in &done {
                match &rec.status {
                    Ok(r) => println!("seq={} {}", rec.seq, summarize(r)),
                    Err(e) => println!("seq={} error: {e}", rec.seq),
                }
            }
            println!("flushed {} requests", done.len());
        }
        Command::Trigger(t) => trigger(host, t)?,
        Command::Volume(_) | Command::Serve { .. } | Command::Bench { .. } => unreachable!(),
    }
    Ok(())
}

fn parsed<T>(src: &str, r: Result<T, ParseError>) -> Result<T> {
    r.map_err(|e| anyhow!(e.render(src)))
}

fn query(host: &HostFs, q: &QueryArgs) -> Result<()> {
    let mode = match q.mode {
        ModeArg::Sync => match q.poll_ms {
            Some(ms) => Mode::Sync(Notify::Poll(Duration::from_millis(ms))),
            None => Mode::Sync(Notify::Interrupt),
        },
        ModeArg::Async => Mode::Async,
        ModeArg::Delayed => Mode::Delayed,
    };
    let dc = host.open_dc(&q.name, OpenFlags::default(), None)?;
    let schema = dc.schema().clone();
    let result = match q.verb {
        Verb::Get => {
            if q.expr2.is_some() {
                bail!("get takes one expression");
            }
            let pred = parsed(&q.expr, parse_predicate(&schema, &q.expr))?;
            finish(host, host.dc_get(GetTarget::File(&dc), &pred, mode)?.map(OpResult::Handle))?
        }
        Verb::Set => {
            let Some(src) = &q.expr2 else {
                bail!("set needs a predicate and a mutation");
            };
            let pred = parsed(&q.expr, parse_predicate(&schema, &q.expr))?;
            let mutation = parsed(src, parse_mutation(&schema, src))?;
            finish(host, host.dc_set(&dc, &pred, &mutation, mode)?.map(OpResult::Count))?
        }
        Verb::Execute => {
            if q.expr2.is_some() {
                bail!("execute takes one program");
            }
            let program = parsed(&q.expr, parse_program(&schema, &q.expr))?;
            finish(host, host.dc_execute(program, &[&dc], mode)?)?
        }
    };
    if let Some(result) = result {
        print_result(host, &schema, result)?;
    }
    host.close_dc(&dc)?;
    Ok(())
}

trait MapOutcome<T> {
    fn map<U>(self, f: impl FnOnce(T) -> U) -> Outcome<U>;
}

impl<T> MapOutcome<T> for Outcome<T> {
    fn map<U>(self, f: impl FnOnce(T) -> U) -> Outcome<U> {
        match self {
            Outcome::Done(v) => Outcome::Done(f(v)),
            Outcome::Ticket(s) => Outcome::Ticket(s),
            Outcome::Journaled(s) => Outcome::Journaled(s),
        }
    }
}

/// Waits out an async ticket; a journaled request has no result yet.
fn finish(host: &HostFs, outcome: Outcome<OpResult>) -> Result<Option<OpResult>> {
    match outcome {
        Outcome::Done(r) => Ok(Some(r)),
        Outcome::Journaled(seq) => {
            println!("journaled seq={seq}");
            Ok(None)
        }
        Outcome::Ticket(seq) => {
            println!("submitted seq={seq}");
            loop {
                let rec = host.next_completion(true)?.ok_or_else(|| anyhow!("completion {seq} never arrived"))?;
                if rec.seq == seq {
                    return Ok(Some(rec.status?));
                }
                log::warn!("skipping completion {} from an earlier submission", rec.seq);
            }
        }
    }
}

fn print_result(host: &HostFs, schema: &ItemSchema, result: OpResult) -> Result<()> {
    match result {
        OpResult::Handle(h) => {
            let rows = host.dc_read_all(&h)?;
            print_rows(schema, &rows);
            println!("{} rows", rows.len());
        }
        OpResult::Items { schema, items } => {
            print_rows(&schema, &items);
            println!("{} rows", items.len());
        }
        other => println!("{}", summarize(&other)),
    }
    Ok(())
}

fn summarize(r: &OpResult) -> String {
    match r {
        OpResult::Unit => "ok".into(),
        OpResult::Handle(h) => format!("handle {} with {} rows", h.handle_id, h.cardinality),
        OpResult::Items { items, .. } => format!("{} rows", items.len()),
        OpResult::Count(n) => format!("count={n}"),
        OpResult::Scalar(v) => format!("result={v}"),
        OpResult::Container(id) => format!("container={id}"),
        OpResult::Token(t) => format!("token={}", t.token_id),
        OpResult::Appended { first_index, generation } => {
            format!("appended at {first_index}, generation={generation}")
        }
        OpResult::TriggerRecords(r) => format!("{} trigger records", r.len()),
    }
}

fn print_rows(schema: &ItemSchema, rows: &[(u64, Item)]) {
    for (idx, item) in rows {
        let cells: Vec<String> = schema
            .fields()
            .iter()
            .zip(item.values())
            .map(|(f, v)| format!("{}={v}", f.name))
            .collect();
        println!("[{idx}] {}", cells.join(" "));
    }
}

fn show_mutation(m: &Mutation) -> String {
    m.assignments
        .iter()
        .map(|a| format!("${} := {}", a.field, a.expr))
        .collect::<Vec<_>>()
        .join(", ")
}

fn trigger(host: &HostFs, cmd: &TriggerCmd) -> Result<()> {
    match cmd {
        TriggerCmd::Add { name, on, when, set, program } => {
            let dc = host.open_dc(name, OpenFlags::default(), None)?;
            let schema = dc.schema().clone();
            let pred = parsed(when, parse_predicate(&schema, when))?;
            let action = match (set, program) {
                (Some(src), _) => TriggerAction::Mutation(parsed(src, parse_mutation(&schema, src))?),
                (None, Some(src)) => TriggerAction::Program(parsed(src, parse_program(&schema, src))?),
                (None, None) => bail!("a trigger needs --set or --program"),
            };
            let event = match on {
                EventArg::Append => TriggerEvent::OnAppend,
                EventArg::Set => TriggerEvent::OnSet,
                EventArg::Delete => TriggerEvent::OnDelete,
            };
            let id = host.register_trigger_hf(&dc, event, pred, action)?;
            println!("trigger {id}");
            host.close_dc(&dc)?;
        }
        TriggerCmd::List => {
            for reg in host.client().list_triggers()? {
                let s = &reg.spec;
                let action = match &s.action {
                    TriggerAction::Mutation(m) => format!("set {}", show_mutation(m)),
                    TriggerAction::Program(p) => format!("program {p}"),
                };
                println!(
                    "{:>4}  container={} on={:?} when {} -> {action}{}",
                    reg.trigger_id,
                    s.container_id,
                    s.event,
                    s.predicate.0,
                    if s.enabled { "" } else { " (disabled)" }
                );
            }
        }
        TriggerCmd::Rm { id } => {
            host.unregister_trigger_hf(*id)?;
            println!("removed trigger {id}");
        }
        TriggerCmd::Log { name } => {
            let dc: DcFile = host.open_dc(name, OpenFlags::default(), None)?;
            for rec in host.read_trigger_log(&dc)? {
                let payload = match rec.payload {
                    TriggerPayload::Scalar(v) => format!("scalar={v}"),
                    TriggerPayload::Index(i) => format!("index={i}"),
                };
                println!("trigger={} seq={} on={:?} {payload}", rec.trigger_id, rec.seq, rec.event);
            }
            host.close_dc(&dc)?;
        }
    }
    Ok(())
}
