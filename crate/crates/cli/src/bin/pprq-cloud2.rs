//! Secondary cloud daemon: holds the secret key (protocol 1) or key share
//! 2 (protocol 2), never the table.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use pprq_cli::config::{pick, require};
use pprq_cli::{accept_link, bind, finish, load_key, parse_args, rng_source, timeout, CliError, Config};
use pprq_core::paillier::{KeyFile, ShareIndex};
use pprq_core::pprq::secondary::handle_connection;
use pprq_core::pprq::{Allowlist, PendingSessions, SecondaryContext};
use pprq_core::protocol::DecryptionKey;

#[derive(Parser)]
#[command(name = "pprq-cloud2", version, about = "Secondary cloud: answers subprotocol rounds and filters results")]
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
    listen: Option<String>,
    /// Secret key; serves protocol 1.
    #[arg(long, conflicts_with = "share")]
    sk: Option<PathBuf>,
    /// Key share 2; serves protocol 2.
    #[arg(long)]
    share: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    allow: Option<Vec<String>>,
    /// Socket timeout in seconds, 0 for none. Also bounds how long the
    /// primary cloud's connection waits for the user's.
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
    let listen = require(args.listen, &config.listen, "listen")?;
    let key = match (pick(args.sk, &config.sk), pick(args.share, &config.share)) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --sk or --share, not both".into())),
        (Some(path), None) => match load_key(&path)? {
            KeyFile::Secret(sk) => DecryptionKey::Secret(sk),
            _ => return Err(CliError::Usage(format!("{}: not a secret key", path.display()))),
        },
        (None, Some(path)) => match load_key(&path)? {
            KeyFile::Share(s) if s.index() == ShareIndex::Second => DecryptionKey::Share(s),
            _ => return Err(CliError::Usage(format!("{}: the secondary cloud needs key share 2", path.display()))),
        },
        (None, None) => return Err(CliError::Usage("--sk or --share is required".into())),
    };
    let mut ctx = SecondaryContext::new(key);
    ctx.allowlist = Allowlist::new(pick(args.allow, &config.allow).unwrap_or_default());
    let allow_seed = args.allow_unsafe_seed || config.allow_unsafe_seed.unwrap_or(false);
    ctx.rng = rng_source(pick(args.unsafe_seed, &config.unsafe_seed), allow_seed)?;
    let timeout = timeout(pick(args.timeout_secs, &config.timeout_secs));
    ctx.wait = timeout.unwrap_or(Duration::from_secs(3600));

    log::info!(
        "{}-bit key, serving protocol {}",
        ctx.responder.public_key().bits(),
        ctx.protocol().number()
    );
    let listener = bind(&listen)?;
    let ctx = Arc::new(ctx);
    let pending = PendingSessions::new();
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let (ctx, pending) = (Arc::clone(&ctx), pending.clone());
        std::thread::spawn(move || {
            let link = match accept_link(stream, timeout) {
                Ok(l) => l,
                Err(e) => return log::warn!("connection setup failed: {e}"),
            };
            if let Err(e) = handle_connection(&ctx, link, &pending) {
                log::warn!("session failed: {e}");
            }
        });
    }
    Ok(())
}
