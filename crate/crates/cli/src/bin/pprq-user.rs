//! User tool: runs a range query and prints the matching rows as CSV.

use std::io;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};

use pprq_cli::config::{pick, require};
use pprq_cli::{cached_user_key, connect, finish, local_rng, parse_args, rng_source, CliError, Config};
use pprq_core::pprq::user::run_query;
use pprq_core::pprq::{QueryRequest, RangeQuery};
use pprq_core::wire::ProtocolKind;

#[derive(Parser)]
#[command(name = "pprq-user", version, about = "Queries an encrypted table held by two clouds")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Query(Query),
}

#[derive(clap::Args)]
struct Query {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attribute to filter on, 1-based.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    alpha: Option<u64>,
    #[arg(long)]
    beta: Option<u64>,
    /// 1 or 2.
    #[arg(long)]
    protocol: Option<u8>,
    #[arg(long)]
    c1: Option<String>,
    #[arg(long)]
    c2: Option<String>,
    #[arg(long)]
    user: Option<String>,
    /// Directory for the cached protocol 1 key pair.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Size of the protocol 1 key pair; at least the table key size.
    #[arg(long)]
    key_bits: Option<u32>,
    /// Sort rows by attribute k instead of arrival order.
    #[arg(long)]
    sort: bool,
    /// Seconds to wait for results, 0 for no limit.
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    unsafe_seed: Option<u64>,
    #[arg(long)]
    allow_unsafe_seed: bool,
}

fn main() {
    let Command::Query(args) = parse_args::<Args>().command;
    pprq_cli::init_logging();
    finish(query(args));
}

fn query(args: Query) -> Result<(), CliError> {
    let config = Config::load_optional(args.config.as_deref())?;
    let protocol = match pick(args.protocol, &config.protocol).unwrap_or(1) {
        1 => ProtocolKind::Pprq1,
        2 => ProtocolKind::Pprq2,
        p => return Err(CliError::Usage(format!("unknown protocol {p}; expected 1 or 2"))),
    };
    let c1 = require(args.c1, &config.c1, "c1")?;
    let c2 = require(args.c2, &config.c2, "c2")?;
    let user = pick(args.user, &config.user).unwrap_or_else(|| "user".into());
    let allow_seed = args.allow_unsafe_seed || config.allow_unsafe_seed.unwrap_or(false);
    let source = rng_source(pick(args.unsafe_seed, &config.unsafe_seed), allow_seed)?;
    let k = require(args.k, &config.k, "k")?;
    let alpha = require(args.alpha, &config.alpha, "alpha")?;
    let beta = require(args.beta, &config.beta, "beta")?;

    let user_key = match protocol {
        ProtocolKind::Pprq1 => {
            let dir = pick(args.keys, &config.keys).unwrap_or_else(|| PathBuf::from("pprq-user-keys"));
            let bits = pick(args.key_bits, &config.key_bits).unwrap_or(1024);
            Some(cached_user_key(&dir, bits, source)?.0)
        }
        _ => None,
    };
    let request = QueryRequest { user, protocol, query: RangeQuery::new(k, alpha, beta), user_key };

    // Results arrive only after the clouds finish the whole table, so reads
    // are unbounded unless asked otherwise.
    let wait = match pick(args.timeout_secs, &config.timeout_secs).unwrap_or(0) {
        0 => None,
        s => Some(Duration::from_secs(s)),
    };
    let link1 = connect(&c1, wait).map_err(|e| CliError::Io(format!("cannot reach {c1}: {e}")))?;
    let link2 = connect(&c2, wait).map_err(|e| CliError::Io(format!("cannot reach {c2}: {e}")))?;
    let outcome = run_query(link1, link2, &request, &mut local_rng(source, 4))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }

    let mut rows = outcome.rows;
    if args.sort || config.sort.unwrap_or(false) {
        let k = k as usize - 1;
        rows.sort_by(|a, b| a[k].cmp(&b[k]).then_with(|| a.cmp(b)));
    }
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    for row in &rows {
        out.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    out.flush()?;
    eprintln!("{} matching rows of {}", rows.len(), outcome.table_rows);
    Ok(())
}
