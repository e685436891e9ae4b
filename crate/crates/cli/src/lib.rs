//! Plumbing shared by the owner, user and cloud executables: error to exit
//! code mapping, config handling, sockets and key files.

pub mod config;

use std::fs;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Parser;
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use pprq_core::paillier::{keygen, KeyFile, PaillierError, SecretKey};
use pprq_core::pprq::{PprqError, RngSource};
use pprq_core::store::StoreError;
use pprq_core::wire::{FramedLink, WireError};

pub use config::Config;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PROTOCOL: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config or input files.
    #[error("{0}")]
    Usage(String),
    /// A session failed or a peer refused it.
    #[error("{0}")]
    Protocol(String),
    /// Filesystem or network trouble.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<PprqError> for CliError {
    fn from(e: PprqError) -> Self {
        match e {
            PprqError::Wire(WireError::Io(_) | WireError::Closed) => CliError::Io(e.to_string()),
            PprqError::Store(s) => s.into(),
            PprqError::Query(_) => CliError::Usage(e.to_string()),
            _ => CliError::Protocol(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PaillierError> for CliError {
    fn from(e: PaillierError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Parses flags; help and version exit 0, anything else malformed exits 1.
pub fn parse_args<T: Parser>() -> T {
    match T::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    }
}

pub fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
}

/// Runs `body` and exits with its status.
pub fn finish(result: Result<(), CliError>) -> ! {
    match result {
        Ok(()) => std::process::exit(0),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

/// Fixed seeds make every session reproducible and are refused unless
/// explicitly allowed.
pub fn rng_source(seed: Option<u64>, allowed: bool) -> Result<RngSource, CliError> {
    match seed {
        None => Ok(RngSource::Os),
        Some(_) if !allowed => Err(CliError::Usage("refusing --unsafe-seed without --allow-unsafe-seed".into())),
        Some(s) => {
            log::warn!("using fixed seed {s}; sessions are reproducible and NOT secure");
            Ok(RngSource::Seeded(s))
        }
    }
}

/// A generator for one-off work such as key generation.
pub fn local_rng(source: RngSource, salt: u8) -> ChaCha20Rng {
    match source {
        RngSource::Os => ChaCha20Rng::from_rng(OsRng).expect("OS entropy"),
        seeded => seeded.session_rng(&[0u8; 16], salt),
    }
}

pub fn timeout(secs: Option<u64>) -> Option<Duration> {
    match secs.unwrap_or(300) {
        0 => None,
        s => Some(Duration::from_secs(s)),
    }
}

fn prepare(stream: &TcpStream, timeout: Option<Duration>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(timeout)?;
    stream.set_write_timeout(timeout)
}

pub fn connect(addr: &str, timeout: Option<Duration>) -> io::Result<FramedLink> {
    let target = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {addr}")))?;
    let stream = match timeout {
        Some(t) => TcpStream::connect_timeout(&target, t)?,
        None => TcpStream::connect(target)?,
    };
    prepare(&stream, timeout)?;
    Ok(FramedLink::new(stream))
}

pub fn accept_link(stream: TcpStream, timeout: Option<Duration>) -> io::Result<FramedLink> {
    prepare(&stream, timeout)?;
    Ok(FramedLink::new(stream))
}

/// Binds and announces the bound address on stdout, which matters when
/// the port is 0.
pub fn bind(addr: &str) -> Result<TcpListener, CliError> {
    let listener = TcpListener::bind(addr).map_err(|e| CliError::Io(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr()?;
    println!("listening on {local}");
    io::stdout().flush()?;
    Ok(listener)
}

pub fn load_key(path: &Path) -> Result<KeyFile, CliError> {
    match KeyFile::load(path) {
        Ok(k) => Ok(k),
        Err(e) if e.kind() == io::ErrorKind::InvalidData => {
            Err(CliError::Usage(format!("{}: not a key file: {e}", path.display())))
        }
        Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
    }
}

pub fn save_key(key: &KeyFile, path: &Path) -> Result<(), CliError> {
    key.save(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// The user's protocol 1 key pair, generated on first use and kept in
/// `dir` as `user-<bits>.key`.
pub fn cached_user_key(dir: &Path, bits: u32, source: RngSource) -> Result<(SecretKey, PathBuf), CliError> {
    let path = dir.join(format!("user-{bits}.key"));
    if path.exists() {
        return match load_key(&path)? {
            KeyFile::Secret(sk) if sk.public_key().bits() == bits => Ok((sk, path)),
            _ => Err(CliError::Usage(format!("{}: expected a {bits}-bit secret key", path.display()))),
        };
    }
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    log::info!("generating a {bits}-bit user key in {}", path.display());
    let (_, sk) = keygen(bits, &mut local_rng(source, 9))?;
    save_key(&KeyFile::Secret(sk.clone()), &path)?;
    Ok((sk, path))
}
