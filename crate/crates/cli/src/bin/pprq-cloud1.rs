//! Primary cloud daemon: holds the encrypted table and, for protocol 2,
//! key share 1.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use pprq_cli::config::{pick, require};
use pprq_cli::{accept_link, bind, connect, finish, load_key, parse_args, rng_source, timeout, CliError, Config};
use pprq_core::paillier::{KeyFile, ShareIndex};
use pprq_core::pprq::primary::serve_user;
use pprq_core::pprq::{default_parallelism, Allowlist, PrimaryContext};
use pprq_core::store::EncryptedTable;

#[derive(Parser)]
#[command(name = "pprq-cloud1", version, about = "Primary cloud: stores the encrypted table and drives queries")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Serve(Serve),
}

#[derive(clap::Args)]
struct Serve {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    /// Address of the secondary cloud.
    #[arg(long)]
    peer: Option<String>,
    /// Key share 1; enables protocol 2.
    #[arg(long)]
    share: Option<PathBuf>,
    /// Authorized user names, comma separated. Empty admits everyone.
    #[arg(long, value_delimiter = ',')]
    allow: Option<Vec<String>>,
    /// Comparison or multiplication instances in flight per query.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Socket timeout in seconds, 0 for none.
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    unsafe_seed: Option<u64>,
    #[arg(long)]
    allow_unsafe_seed: bool,
}

fn main() {
    let Command::Serve(args) = parse_args::<Args>().command;
    pprq_cli::init_logging();
    finish(serve(args));
}

fn serve(args: Serve) -> Result<(), CliError> {
    let config = Config::load_optional(args.config.as_deref())?;
    let table_path = require(args.table, &config.table, "table")?;
    let listen = require(args.listen, &config.listen, "listen")?;
    let peer = require(args.peer, &config.peer, "peer")?;
    let share = match pick(args.share, &config.share) {
        None => None,
        Some(path) => match load_key(&path)? {
            KeyFile::Share(s) if s.index() == ShareIndex::First => Some(s),
            _ => return Err(CliError::Usage(format!("{}: the primary cloud needs key share 1", path.display()))),
        },
    };
    let table = EncryptedTable::load(&table_path)?;
    let mut ctx = PrimaryContext::new(table, share).map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.allowlist = Allowlist::new(pick(args.allow, &config.allow).unwrap_or_default());
    ctx.parallelism = pick(args.parallelism, &config.parallelism).unwrap_or_else(default_parallelism).max(1);
    let allow_seed = args.allow_unsafe_seed || config.allow_unsafe_seed.unwrap_or(false);
    ctx.rng = rng_source(pick(args.unsafe_seed, &config.unsafe_seed), allow_seed)?;
    let timeout = timeout(pick(args.timeout_secs, &config.timeout_secs));

    log::info!(
        "table {}: {} rows x {} columns, {}-bit domain, {}-bit key; protocols {:?}",
        table_path.display(),
        ctx.table.num_rows(),
        ctx.table.num_cols(),
        ctx.table.domain_bits(),
        ctx.table.public_key().bits(),
        ctx.protocols().iter().map(|p| p.number()).collect::<Vec<_>>()
    );
    let listener = bind(&listen)?;
    let ctx = Arc::new(ctx);
    let peer = Arc::new(peer);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let (ctx, peer) = (Arc::clone(&ctx), Arc::clone(&peer));
        std::thread::spawn(move || {
            let bob = match accept_link(stream, timeout) {
                Ok(l) => l,
                Err(e) => return log::warn!("connection setup failed: {e}"),
            };
            if let Err(e) = serve_user(&ctx, bob, || connect(&peer, timeout)) {
                log::warn!("session failed: {e}");
            }
        });
    }
    Ok(())
}
