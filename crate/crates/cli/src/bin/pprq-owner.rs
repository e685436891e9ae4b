//! Data owner tool: key generation, table encryption and the comparison
//! benchmark.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::RngCore;
use rug::Integer;

use pprq_cli::config::{pick, require};
use pprq_cli::{finish, load_key, local_rng, parse_args, rng_source, save_key, CliError, Config};
use pprq_core::bench::run_sc_bench;
use pprq_core::paillier::{combine, keygen, split_secret_key, KeyFile, SecretKey};
use pprq_core::store::{encrypt_table, ingest_csv};

#[derive(Parser)]
#[command(name = "pprq-owner", version, about = "Key generation and table encryption for the data owner")]
struct Args {
    /// Config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fixed RNG seed. Insecure; needs --allow-unsafe-seed.
    #[arg(long, global = true)]
    unsafe_seed: Option<u64>,
    #[arg(long, global = true)]
    allow_unsafe_seed: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes public.key plus secret.key (standard) or share1.key and
    /// share2.key (threshold).
    Keygen {
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encrypts a CSV of non-negative integers into a .pprq table.
    Encrypt {
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Domain width in bits.
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        pk: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: Bench,
    },
}

#[derive(Subcommand)]
enum Bench {
    /// Times the comparison protocol per domain width.
    Sc {
        #[arg(long, value_delimiter = ',')]
        m_list: Option<Vec<u32>>,
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Standard,
    Threshold,
}

fn main() {
    let args: Args = parse_args();
    pprq_cli::init_logging();
    finish(run(args));
}

fn run(args: Args) -> Result<(), CliError> {
    let config = Config::load_optional(args.config.as_deref())?;
    let allow = args.allow_unsafe_seed || config.allow_unsafe_seed.unwrap_or(false);
    let source = rng_source(pick(args.unsafe_seed, &config.unsafe_seed), allow)?;
    match args.command {
        Command::Keygen { bits, mode, out } => {
            let bits = require(bits, &config.bits, "bits")?;
            let mode = match (mode, config.mode.as_deref()) {
                (Some(m), _) => m,
                (None, Some(text)) => Mode::from_str(text, true).map_err(|_| CliError::Usage(format!("unknown mode {text:?}")))?,
                (None, None) => Mode::Standard,
            };
            let out = require(out, &config.out, "out")?;
            keygen_cmd(bits, mode, &out, &mut local_rng(source, 1))
        }
        Command::Encrypt { csv, m, pk, out } => {
            let csv = require(csv, &config.csv, "csv")?;
            let m = require(m, &config.m, "m")?;
            let pk = require(pk, &config.pk, "pk")?;
            let out = require(out, &config.out, "out")?;
            let key = load_key(&pk)?;
            let plain = ingest_csv(&csv, m)?;
            let table = encrypt_table(key.public_key(), &plain, &mut local_rng(source, 2))?;
            table.save(&out)?;
            eprintln!(
                "encrypted {} rows x {} columns ({m}-bit domain) into {} ({} bytes)",
                table.num_rows(),
                table.num_cols(),
                out.display(),
                table.file_size()
            );
            Ok(())
        }
        Command::Bench { which: Bench::Sc { m_list, bits, trials } } => {
            let m_list = pick(m_list, &config.m_list).unwrap_or_else(|| vec![20, 40, 60, 80, 100]);
            let bits = pick(bits, &config.bits).unwrap_or(1024);
            let trials = pick(trials, &config.trials).unwrap_or(50);
            bench_sc(&m_list, bits, trials, &mut local_rng(source, 3))
        }
    }
}

fn keygen_cmd<R: RngCore + rand::CryptoRng>(bits: u32, mode: Mode, out: &Path, rng: &mut R) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let (pk, sk) = keygen(bits, rng)?;
    self_test(&sk, rng)?;
    let mut files = vec![("public.key", KeyFile::Public(pk))];
    match mode {
        Mode::Standard => files.push(("secret.key", KeyFile::Secret(sk))),
        Mode::Threshold => {
            let (s1, s2) = split_secret_key(&sk, rng);
            let c = sk.public_key().encrypt_u64(77, rng)?;
            if combine(sk.public_key(), &s1.partial_decrypt(&c)?, &s2.partial_decrypt(&c)?)? != 77 {
                return Err(CliError::Protocol("key shares failed the self-test".into()));
            }
            files.push(("share1.key", KeyFile::Share(s1)));
            files.push(("share2.key", KeyFile::Share(s2)));
        }
    }
    for (name, key) in &files {
        let path = out.join(name);
        save_key(key, &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn self_test<R: RngCore + rand::CryptoRng>(sk: &SecretKey, rng: &mut R) -> Result<(), CliError> {
    let pk = sk.public_key();
    let n1 = Integer::from(pk.modulus() - 1u32);
    for m in [Integer::new(), Integer::from(12345), n1] {
        let c = pk.encrypt(&m, rng)?;
        if sk.decrypt(&c)? != m || sk.decrypt(&pk.add(&c, &pk.encrypt_u64(1, rng)?))? != (m + 1u32) % pk.modulus() {
            return Err(CliError::Protocol("generated key failed the self-test".into()));
        }
    }
    Ok(())
}

fn bench_sc<R: RngCore + rand::CryptoRng>(m_list: &[u32], bits: u32, trials: usize, rng: &mut R) -> Result<(), CliError> {
    let (_, sk) = keygen(bits, rng)?;
    println!("m,key_bits,trials,mean_ms,correct,success_rate,analytic_success");
    let mut means = Vec::new();
    for &m in m_list {
        let b = run_sc_bench(&sk, m, trials, false, rng).map_err(|e| CliError::Usage(e.to_string()))?;
        println!(
            "{},{},{},{:.3},{},{:.6},{}",
            b.domain_bits,
            b.key_bits,
            b.trials,
            b.mean.as_secs_f64() * 1e3,
            b.correct,
            b.success_rate(),
            b.analytic
        );
        means.push(b.mean.as_secs_f64());
    }
    if let (Some(first), Some(last)) = (means.first(), means.last()) {
        if means.len() > 1 && *first > 0.0 {
            eprintln!("time(m={})/time(m={}) = {:.2}", m_list[m_list.len() - 1], m_list[0], last / first);
        }
    }
    Ok(())
}
