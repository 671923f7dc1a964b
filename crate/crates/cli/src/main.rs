//! `dsukit`: KeySSIs, DSUs, the anchoring benchmark and APIHub from the shell.
//!
//! Exit codes: 0 success, 1 the operation failed, 2 bad usage or missing
//! configuration. Every flag can also be set through a `DSUKIT_*` variable.

mod wallet;

use std::fs;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsukit_apihub::{serve, HubConfig, HubLocator};
use dsukit_bench::{run_anchoring_bench, BenchError, BenchParams, BenchReport};
use dsukit_core::anchoring::{ExecutionMode, HashLink};
use dsukit_core::bdns::Bdns;
use dsukit_core::crypto::{b64, sha256};
use dsukit_core::dsu::{
    create_dsu, history, load_dsu, publish_const, resolve_const, DsuError, DsuHandle, ServiceLocator,
};
use dsukit_core::keyssi::{
    create_const_ssi, derive, generate_secret_ssi, generate_seed_ssi, secret_ssi_from_entropy,
    seed_ssi_from_entropy, AccessLevel, KeySsi, KeySsiError, SsiType, ENTROPY_LEN,
};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use wallet::{Staged, Wallet};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<KeySsiError> for CliError {
    fn from(e: KeySsiError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<DsuError> for CliError {
    fn from(e: DsuError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Params(m) => CliError::Usage(m),
            other => CliError::Domain(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "dsukit", version, about = "Data Sharing Units over anchored ledgers")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true, env = "DSUKIT_JSON")]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, derive and inspect KeySSIs.
    #[command(subcommand)]
    Keyssi(KeyssiCmd),
    /// Work with the DSU held in a local wallet.
    Dsu(DsuArgs),
    /// Benchmarks against a simulated chain.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Run an APIHub.
    #[command(subcommand)]
    Hub(HubCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Seed,
    Secret,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Optimistic,
    Validated,
}

impl From<ModeArg> for ExecutionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Optimistic => ExecutionMode::Optimistic,
            ModeArg::Validated => ExecutionMode::Validated,
        }
    }
}

#[derive(Subcommand)]
enum KeyssiCmd {
    /// A fresh owner KeySSI.
    Gen {
        #[arg(long, env = "DSUKIT_DOMAIN")]
        domain: String,
        #[arg(long, value_enum, default_value = "seed", env = "DSUKIT_FAMILY")]
        family: FamilyArg,
        /// 32 bytes of hex entropy instead of the OS generator.
        #[arg(long, env = "DSUKIT_ENTROPY_HEX")]
        entropy_hex: Option<String>,
    },
    /// The next lower rank of a KeySSI.
    Derive {
        ssi: String,
        /// Print the whole chain down to the lowest rank.
        #[arg(long)]
        all: bool,
    },
    /// Parsed fields as JSON.
    Inspect { ssi: String },
    /// The const identifier for a memorable name.
    Const {
        #[arg(long, env = "DSUKIT_DOMAIN")]
        domain: String,
        name: String,
    },
}

#[derive(Args)]
struct DsuArgs {
    /// APIHub base URL serving every domain.
    #[arg(long, global = true, env = "DSUKIT_HUB")]
    hub: Option<String>,
    /// BDNS table used to find hubs per domain.
    #[arg(long, global = true, env = "DSUKIT_BDNS", conflicts_with = "hub")]
    bdns: Option<PathBuf>,
    /// Wallet root. Defaults to ~/.dsukit.
    #[arg(long, global = true, env = "DSUKIT_HOME")]
    home: Option<PathBuf>,
    #[arg(long, global = true, env = "DSUKIT_WALLET", default_value = "default")]
    wallet: String,
    #[command(subcommand)]
    command: DsuCmd,
}

#[derive(Subcommand)]
enum DsuCmd {
    /// Create a DSU and keep its owner key in the wallet.
    Create {
        #[arg(long, env = "DSUKIT_DOMAIN")]
        domain: String,
        #[arg(long, value_enum, default_value = "seed", env = "DSUKIT_FAMILY")]
        family: FamilyArg,
        #[arg(long)]
        force: bool,
    },
    /// Keep an existing KeySSI in the wallet.
    Attach {
        ssi: String,
        #[arg(long)]
        force: bool,
    },
    /// Print the wallet's KeySSI, or a lower rank of it.
    Ssi {
        /// Type token to derive down to, e.g. sread.
        #[arg(long)]
        rank: Option<String>,
    },
    /// Stage a file for the next commit. `-` reads standard input.
    Write { path: String, file: PathBuf },
    /// Stage a deletion.
    Delete { path: String },
    /// Stage a mount of another DSU.
    Mount { point: String, ssi: String },
    /// Anchor the staged changes.
    Commit {
        #[arg(long, value_enum, default_value = "validated", env = "DSUKIT_MODE")]
        mode: ModeArg,
    },
    /// Print a file.
    Read {
        path: String,
        #[arg(long)]
        version: Option<String>,
    },
    /// List files and mounts.
    Ls {
        #[arg(long)]
        version: Option<String>,
    },
    /// Anchored versions, oldest first.
    History {
        /// Include this hub's unconfirmed optimistic entries.
        #[arg(long)]
        pending: bool,
    },
    /// Open a version and summarize or export it.
    Load {
        #[arg(long)]
        version: Option<String>,
        /// Write every file under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bind a memorable name to a read rank of the wallet's DSU.
    PublishConst {
        name: String,
        /// Identifier to publish instead of the derived read rank.
        #[arg(long)]
        ssi: Option<String>,
    },
    /// The identifier published under a name.
    ResolveConst {
        #[arg(long, env = "DSUKIT_DOMAIN")]
        domain: String,
        name: String,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Single-anchor writers committing against a simulated chain.
    Anchoring(AnchoringArgs),
}

#[derive(Args)]
struct AnchoringArgs {
    /// Sequential commits per writer.
    #[arg(long, default_value_t = 3, env = "DSUKIT_CALLS")]
    calls: usize,
    /// Chain confirmation latency.
    #[arg(long, default_value_t = 2000, env = "DSUKIT_LATENCY")]
    latency: u64,
    /// Chain throughput cap in transactions per second.
    #[arg(long, default_value_t = 300.0, env = "DSUKIT_CAP")]
    cap: f64,
    #[arg(long, value_enum, default_value = "validated", env = "DSUKIT_MODE")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1, env = "DSUKIT_WRITERS")]
    writers: usize,
    #[arg(long, default_value_t = 0, env = "DSUKIT_SEED")]
    seed: u64,
    /// Offered load over all writers; closed loop when absent.
    #[arg(long, env = "DSUKIT_RATE")]
    rate: Option<f64>,
    #[arg(long, default_value_t = 64, env = "DSUKIT_PAYLOAD")]
    payload: usize,
    /// Report without waiting for optimistic entries to settle.
    #[arg(long, env = "DSUKIT_NO_DRAIN")]
    no_drain: bool,
    #[arg(long, default_value_t = 60_000, env = "DSUKIT_DRAIN_TIMEOUT_MS")]
    drain_timeout_ms: u64,
}

#[derive(Subcommand)]
enum HubCmd {
    /// Serve until interrupted.
    Serve {
        /// JSON hub configuration. Without one, domains are served from memory.
        #[arg(long, env = "DSUKIT_HUB_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, env = "DSUKIT_LISTEN")]
        listen: Option<SocketAddr>,
        #[arg(long, env = "DSUKIT_LABEL")]
        label: Option<String>,
        /// In-memory domains, when no config is given.
        #[arg(long = "domain", env = "DSUKIT_DOMAINS", value_delimiter = ',')]
        domains: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = Output { json: cli.json };
    match cli.command {
        Command::Keyssi(cmd) => keyssi(&out, cmd),
        Command::Dsu(args) => dsu(&out, args),
        Command::Bench(BenchCmd::Anchoring(args)) => bench(&out, args),
        Command::Hub(HubCmd::Serve {
            config,
            listen,
            label,
            domains,
        }) => hub_serve(&out, config, listen, label, domains),
    }
}

struct Output {
    json: bool,
}

impl Output {
    /// JSON when asked for, otherwise the human rendering.
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) {
        let text = if self.json {
            serde_json::to_string_pretty(value).expect("output serializes")
        } else {
            human()
        };
        println!("{text}");
    }
}

/// Two aligned columns.
fn table<K: AsRef<str>, V: AsRef<str>>(rows: &[(K, V)]) -> String {
    let width = rows.iter().map(|(k, _)| k.as_ref().len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{:<width$}  {}", k.as_ref(), v.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_ssi(text: &str) -> Result<KeySsi, CliError> {
    Ok(KeySsi::parse(text.trim())?)
}

fn entropy(hex_text: &str) -> Result<[u8; ENTROPY_LEN], CliError> {
    let bytes = hex::decode(hex_text.trim()).map_err(|e| CliError::Usage(format!("--entropy-hex: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| CliError::Usage(format!("--entropy-hex must be {ENTROPY_LEN} bytes")))
}

fn generate(domain: &str, family: FamilyArg, entropy_hex: Option<&str>) -> Result<KeySsi, CliError> {
    let ssi = match (family, entropy_hex) {
        (FamilyArg::Seed, Some(h)) => seed_ssi_from_entropy(domain, &entropy(h)?)?,
        (FamilyArg::Secret, Some(h)) => secret_ssi_from_entropy(domain, &entropy(h)?)?,
        (FamilyArg::Seed, None) => generate_seed_ssi(domain, &mut rand::rngs::OsRng)?,
        (FamilyArg::Secret, None) => generate_secret_ssi(domain, &mut rand::rngs::OsRng)?,
    };
    Ok(ssi)
}

fn inspect_json(ssi: &KeySsi) -> serde_json::Value {
    json!({
        "schema": "ssi",
        "type_name": ssi.ssi_type().token(),
        "domain": ssi.domain(),
        "type_specific": ssi.type_specific(),
        "control": ssi.control(),
        "version": ssi.version(),
        "hint": ssi.hint(),
        "family": ssi.family().map(|f| f.owner_type().token()),
        "access_level": ssi.access_level().map(|l| l.to_string()),
        "canonical": ssi.serialize(),
    })
}

fn keyssi(out: &Output, cmd: KeyssiCmd) -> Result<(), CliError> {
    match cmd {
        KeyssiCmd::Gen {
            domain,
            family,
            entropy_hex,
        } => {
            let ssi = generate(&domain, family, entropy_hex.as_deref())?;
            out.emit(&json!({ "ssi": ssi }), || ssi.to_string());
        }
        KeyssiCmd::Derive { ssi, all } => {
            let mut current = parse_ssi(&ssi)?;
            let mut chain = vec![derive(&current)?];
            if all {
                current = chain[0].clone();
                while let Ok(next) = derive(&current) {
                    chain.push(next.clone());
                    current = next;
                }
            }
            let text = chain.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n");
            if all {
                out.emit(&json!({ "chain": chain }), || text);
            } else {
                out.emit(&json!({ "ssi": chain[0] }), || text);
            }
        }
        KeyssiCmd::Inspect { ssi } => {
            let parsed = parse_ssi(&ssi)?;
            println!("{}", serde_json::to_string_pretty(&inspect_json(&parsed)).expect("json"));
        }
        KeyssiCmd::Const { domain, name } => {
            let ssi = create_const_ssi(&domain, &name)?;
            out.emit(&json!({ "ssi": ssi }), || ssi.to_string());
        }
    }
    Ok(())
}

/// Derives `ssi` until its rank is at most `level`.
fn derive_to(ssi: &KeySsi, level: AccessLevel) -> Result<KeySsi, CliError> {
    let mut current = ssi.clone();
    while current.access_level().is_some_and(|l| l > level) {
        current = derive(&current)?;
    }
    Ok(current)
}

fn derive_to_type(ssi: &KeySsi, token: &str) -> Result<KeySsi, CliError> {
    let target = SsiType::from_token(token).ok_or_else(|| CliError::Usage(format!("unknown rank {token:?}")))?;
    let mut current = ssi.clone();
    loop {
        if current.ssi_type() == target {
            return Ok(current);
        }
        current = derive(&current).map_err(|_| {
            CliError::Domain(format!("{} cannot be derived from {}", token, ssi.ssi_type().token()))
        })?;
    }
}

fn default_home() -> Result<PathBuf, CliError> {
    std::env::var_os("HOME")
        .map(|h| PathBuf::from(h).join(".dsukit"))
        .ok_or_else(|| CliError::Usage("HOME is not set; pass --home or set DSUKIT_HOME".into()))
}

fn locator(args: &DsuArgs) -> Result<Arc<dyn ServiceLocator>, CliError> {
    match (&args.hub, &args.bdns) {
        (Some(url), _) => Ok(Arc::new(HubLocator::fixed(url))),
        (None, Some(path)) => {
            let bdns = Bdns::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Ok(Arc::new(HubLocator::bdns(Arc::new(bdns))))
        }
        (None, None) => Err(CliError::Usage(
            "no hub configured: pass --hub URL or --bdns FILE, or set DSUKIT_HUB or DSUKIT_BDNS".into(),
        )),
    }
}

fn parse_version(v: Option<&str>) -> Result<Option<HashLink>, CliError> {
    v.map(|t| HashLink::parse(t).map_err(|e| CliError::Usage(format!("--version: {e}"))))
        .transpose()
}

/// The DSU as committed plus the wallet's staged changes.
fn open_working(env: &Arc<dyn ServiceLocator>, wallet: &Wallet) -> Result<DsuHandle, CliError> {
    let mut dsu = load_dsu(env, &wallet.ssi()?, None)?;
    wallet.apply(&mut dsu)?;
    Ok(dsu)
}

fn open_at(env: &Arc<dyn ServiceLocator>, wallet: &Wallet, version: Option<&str>) -> Result<DsuHandle, CliError> {
    match parse_version(version)? {
        Some(v) => Ok(load_dsu(env, &wallet.ssi()?, Some(&v))?),
        None => open_working(env, wallet),
    }
}

/// Checks `op` against the working DSU, then stages it.
fn stage(env: &Arc<dyn ServiceLocator>, wallet: &Wallet, op: Staged) -> Result<(), CliError> {
    let mut dsu = open_working(env, wallet)?;
    wallet::apply_one(wallet, &mut dsu, &op)?;
    wallet.stage(op)
}

fn dsu(out: &Output, args: DsuArgs) -> Result<(), CliError> {
    let home = match &args.home {
        Some(h) => h.clone(),
        None => default_home()?,
    };
    let wallet = Wallet::at(&home, &args.wallet)?;
    match &args.command {
        DsuCmd::Attach { ssi, force } => {
            let ssi = parse_ssi(ssi)?;
            wallet.store(&ssi, *force)?;
            let rank = ssi.access_level().map_or("none".to_owned(), |l| l.to_string());
            out.emit(&json!({ "wallet": wallet.dir(), "ssi": ssi, "access_level": rank }), || {
                table(&[("wallet", wallet.dir().display().to_string()), ("rank", rank.clone())])
            });
            return Ok(());
        }
        DsuCmd::Ssi { rank } => {
            let ssi = wallet.ssi()?;
            let ssi = match rank {
                Some(token) => derive_to_type(&ssi, token)?,
                None => ssi,
            };
            out.emit(&json!({ "ssi": ssi }), || ssi.to_string());
            return Ok(());
        }
        _ => {}
    }

    let env = locator(&args)?;
    match args.command {
        DsuCmd::Attach { .. } | DsuCmd::Ssi { .. } => unreachable!("handled above"),
        DsuCmd::Create { domain, family, force } => {
            if !force && wallet.ssi().is_ok() {
                return Err(CliError::Domain(format!(
                    "wallet {} already holds a key; pass --force to replace it",
                    wallet.dir().display()
                )));
            }
            let ssi = generate(&domain, family, None)?;
            let dsu = create_dsu(&env, &ssi)?;
            wallet.store(&ssi, true)?;
            let anchor = dsu.anchor_id().to_string();
            out.emit(
                &json!({ "wallet": wallet.dir(), "ssi": ssi, "anchor_id": anchor }),
                || table(&[("wallet", wallet.dir().display().to_string()), ("anchor", anchor.clone())]),
            );
        }
        DsuCmd::Write { path, file } => {
            let data = if file.as_os_str() == "-" {
                let mut buf = Vec::new();
                io::stdin()
                    .read_to_end(&mut buf)
                    .map_err(|e| CliError::Domain(format!("stdin: {e}")))?;
                buf
            } else {
                fs::read(&file).map_err(|e| CliError::Domain(format!("{}: {e}", file.display())))?
            };
            let blob = wallet.put_blob(&data)?;
            stage(&env, &wallet, Staged::Write { path: path.clone(), blob })?;
            out.emit(&json!({ "staged": "write", "path": path, "size": data.len() }), || {
                format!("staged write {path} ({} bytes)", data.len())
            });
        }
        DsuCmd::Delete { path } => {
            stage(&env, &wallet, Staged::Delete { path: path.clone() })?;
            out.emit(&json!({ "staged": "delete", "path": path }), || format!("staged delete {path}"));
        }
        DsuCmd::Mount { point, ssi } => {
            let target = parse_ssi(&ssi)?;
            stage(
                &env,
                &wallet,
                Staged::Mount {
                    point: point.clone(),
                    ssi: target.to_string(),
                },
            )?;
            out.emit(&json!({ "staged": "mount", "point": point, "ssi": target }), || {
                format!("staged mount {point}")
            });
        }
        DsuCmd::Commit { mode } => {
            let mode = ExecutionMode::from(mode);
            let mut dsu = open_working(&env, &wallet)?;
            let link = dsu.commit(mode)?;
            wallet.clear_staged()?;
            out.emit(&json!({ "version": link, "mode": mode }), || link.to_string());
        }
        DsuCmd::Read { path, version } => {
            let dsu = open_at(&env, &wallet, version.as_deref())?;
            let data = dsu.read_file(&path)?;
            if out.json {
                out.emit(&json!({ "path": path, "size": data.len(), "base64": b64(&data) }), String::new);
            } else {
                io::stdout()
                    .write_all(&data)
                    .map_err(|e| CliError::Domain(format!("stdout: {e}")))?;
            }
        }
        DsuCmd::Ls { version } => {
            let dsu = open_at(&env, &wallet, version.as_deref())?;
            let files = dsu.list("/")?;
            let mounts: Vec<(String, String)> = dsu.mounts().map(|(p, s)| (p.to_owned(), s.to_string())).collect();
            out.emit(&json!({ "files": files, "mounts": mounts.iter().map(|(p, s)| json!({"point": p, "ssi": s})).collect::<Vec<_>>() }), || {
                files
                    .iter()
                    .cloned()
                    .chain(mounts.iter().map(|(p, s)| format!("{p} -> {s}")))
                    .collect::<Vec<_>>()
                    .join("\n")
            });
        }
        DsuCmd::History { pending } => {
            let versions = history(&env, &wallet.ssi()?, pending)?;
            let rows: Vec<serde_json::Value> = versions
                .iter()
                .enumerate()
                .map(|(i, v)| json!({ "index": i, "link": v.link, "status": v.status, "timestamp": v.timestamp }))
                .collect();
            out.emit(&rows, || {
                versions
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let status = serde_json::to_value(v.status).ok().and_then(|s| s.as_str().map(str::to_owned));
                        format!("{i}  {}  {}", status.unwrap_or_default(), v.link)
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            });
        }
        DsuCmd::Load { version, out: dir } => {
            let dsu = open_at(&env, &wallet, version.as_deref())?;
            let snapshot = dsu.snapshot()?;
            if let Some(dir) = &dir {
                export(dir, &snapshot)?;
            }
            let files: Vec<serde_json::Value> = snapshot
                .iter()
                .map(|(p, d)| json!({ "path": p, "size": d.len(), "sha256": hex::encode(sha256(d)) }))
                .collect();
            let shown = dsu.version().map(ToString::to_string);
            out.emit(&json!({ "version": shown, "files": files }), || {
                let mut rows = vec![("version".to_owned(), shown.clone().unwrap_or_else(|| "(none)".into()))];
                rows.extend(
                    snapshot
                        .iter()
                        .map(|(p, d)| (p.clone(), format!("{} bytes  {}", d.len(), hex::encode(sha256(d))))),
                );
                table(&rows)
            });
        }
        DsuCmd::PublishConst { name, ssi } => {
            let own = wallet.ssi()?;
            let strong = match ssi {
                Some(text) => parse_ssi(&text)?,
                None => derive_to(&own, AccessLevel::Read)?,
            };
            let const_ssi = create_const_ssi(own.domain(), &name)?;
            let link = publish_const(&env, &const_ssi, &strong)?;
            out.emit(&json!({ "const": const_ssi, "ssi": strong, "version": link }), || {
                table(&[("const", const_ssi.to_string()), ("ssi", strong.to_string())])
            });
        }
        DsuCmd::ResolveConst { domain, name } => {
            let const_ssi = create_const_ssi(&domain, &name)?;
            let ssi = resolve_const(&env, &const_ssi)?;
            out.emit(&json!({ "const": const_ssi, "ssi": ssi }), || ssi.to_string());
        }
    }
    Ok(())
}

fn export(dir: &Path, snapshot: &std::collections::BTreeMap<String, Vec<u8>>) -> Result<(), CliError> {
    for (path, data) in snapshot {
        let target = dir.join(path.trim_start_matches('/'));
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Domain(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&target, data).map_err(|e| CliError::Domain(format!("{}: {e}", target.display())))?;
    }
    Ok(())
}

fn bench(out: &Output, args: AnchoringArgs) -> Result<(), CliError> {
    let params = BenchParams {
        calls: args.calls,
        writers: args.writers,
        latency_ms: args.latency,
        cap_tps: args.cap,
        mode: args.mode.into(),
        seed: args.seed,
        rate_tps: args.rate,
        payload_bytes: args.payload,
        drain: !args.no_drain,
        drain_timeout: Duration::from_millis(args.drain_timeout_ms),
    };
    let report = run_anchoring_bench(&params)?;
    out.emit(&report, || render_report(&report));
    Ok(())
}

fn render_report(r: &BenchReport) -> String {
    table(&[
        ("mode", r.mode.to_string()),
        ("writers", r.writers.to_string()),
        ("calls/writer", r.calls.to_string()),
        ("acked", format!("{} ({} errors)", r.acked, r.errors)),
        ("elapsed", format!("{:.1} ms", r.elapsed_ms)),
        ("ack rate", format!("{:.1} tx/s", r.ack_rate_tps)),
        ("latency p50", format!("{:.2} ms", r.latency_p50_ms)),
        ("latency p95", format!("{:.2} ms", r.latency_p95_ms)),
        ("latency max", format!("{:.2} ms", r.latency_max_ms)),
        ("confirmed", r.confirmed.to_string()),
        ("confirmed rate", format!("{:.1} tx/s", r.confirmed_tps)),
        ("invalidations", r.invalidations.to_string()),
        ("pending at end", r.pending_at_end.to_string()),
        ("schedule", r.schedule_digest.clone()),
    ])
}

fn hub_serve(
    out: &Output,
    config: Option<PathBuf>,
    listen: Option<SocketAddr>,
    label: Option<String>,
    domains: Vec<String>,
) -> Result<(), CliError> {
    let mut cfg = match &config {
        Some(path) => HubConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => {
            if domains.is_empty() {
                return Err(CliError::Usage("pass --config FILE or at least one --domain".into()));
            }
            let names: Vec<&str> = domains.iter().map(String::as_str).collect();
            HubConfig::in_memory("apihub", &names)
        }
    };
    cfg.apply_env().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(listen) = listen {
        cfg.listen = listen;
    }
    if let Some(label) = label {
        cfg.label = label;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let filter = tracing_subscriber::EnvFilter::try_from_env("DSUKIT_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(io::stderr)
        .init();

    let handle = serve(cfg).map_err(|e| CliError::Domain(e.to_string()))?;
    let url = handle.url();
    let label = handle.label().to_owned();
    // One line, so supervisors can read the address before serving starts.
    if out.json {
        println!("{}", json!({ "event": "listening", "url": url, "label": label }));
    } else {
        println!("apihub {label} listening on {url}");
    }
    io::stdout().flush().ok();
    handle.wait().map_err(|e| CliError::Domain(e.to_string()))
}
