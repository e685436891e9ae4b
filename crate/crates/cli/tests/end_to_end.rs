//! Drives the four executables over loopback TCP.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use tempfile::TempDir;

const DEMO_CSV: &str = "20,3\n30,4\n18,7\n";

fn bin(name: &str) -> Command {
    let path = match name {
        "owner" => env!("CARGO_BIN_EXE_pprq-owner"),
        "cloud1" => env!("CARGO_BIN_EXE_pprq-cloud1"),
        "cloud2" => env!("CARGO_BIN_EXE_pprq-cloud2"),
        "user" => env!("CARGO_BIN_EXE_pprq-user"),
        _ => unreachable!(),
    };
    let mut cmd = Command::new(path);
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.stdin(Stdio::null()).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Kills the daemon when dropped.
struct Daemon {
    child: Child,
    addr: String,
}

impl Daemon {
    fn spawn(mut cmd: Command) -> Self {
        let mut child = cmd
            .args(["--listen", "127.0.0.1:0"])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn daemon");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("bad banner {line:?}"));
        Daemon { addr: addr.to_string(), child }
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Deployment {
    dir: TempDir,
    _c2: Daemon,
    _c1: Daemon,
    c1: String,
    c2: String,
}

impl Deployment {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn query(&self, protocol: u8, user: &str, k: u32, alpha: u64, beta: u64) -> Output {
        let mut cmd = bin("user");
        cmd.arg("query")
            .args(["--protocol", &protocol.to_string(), "--user", user])
            .args(["--k", &k.to_string(), "--alpha", &alpha.to_string(), "--beta", &beta.to_string()])
            .args(["--c1", &self.c1, "--c2", &self.c2, "--timeout-secs", "60"])
            .args(["--key-bits", "512", "--sort"])
            .arg("--keys")
            .arg(self.path("user-keys"));
        run(&mut cmd)
    }
}

fn keygen(dir: &Path, mode: &str) -> Output {
    run(bin("owner").args(["keygen", "--bits", "512", "--mode", mode, "--out"]).arg(dir))
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

/// Keys, an encrypted demo table and both clouds.
fn deploy(mode: &str, allow: Option<&str>) -> Deployment {
    let dir = TempDir::new().unwrap();
    let keys = dir.path().join("keys");
    assert!(keygen(&keys, mode).status.success());
    let csv = dir.path().join("table.csv");
    std::fs::write(&csv, DEMO_CSV).unwrap();
    let table = dir.path().join("table.pprq");
    let o = run(bin("owner").arg("encrypt").arg("--csv").arg(&csv).args(["--m", "8", "--pk"]).arg(keys.join("public.key")).arg("--out").arg(&table));
    assert!(o.status.success(), "{}", stderr(&o));

    let mut c2 = bin("cloud2");
    c2.arg("serve");
    let mut c1 = bin("cloud1");
    c1.arg("serve").arg("--table").arg(&table);
    if mode == "threshold" {
        c2.arg("--share").arg(keys.join("share2.key"));
        c1.arg("--share").arg(keys.join("share1.key"));
    } else {
        c2.arg("--sk").arg(keys.join("secret.key"));
    }
    if let Some(a) = allow {
        c1.args(["--allow", a]);
        c2.args(["--allow", a]);
    }
    let c2 = Daemon::spawn(c2);
    c1.args(["--peer", &c2.addr]);
    let c1 = Daemon::spawn(c1);
    Deployment { c1: c1.addr.clone(), c2: c2.addr.clone(), _c1: c1, _c2: c2, dir }
}

#[test]
fn keygen_writes_expected_files() {
    let dir = TempDir::new().unwrap();
    let std_dir = dir.path().join("std");
    let thr_dir = dir.path().join("thr");
    let o = keygen(&std_dir, "standard");
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(files_in(&std_dir), ["public.key", "secret.key"]);
    assert!(keygen(&thr_dir, "threshold").status.success());
    assert_eq!(files_in(&thr_dir), ["public.key", "share1.key", "share2.key"]);
}

#[test]
fn demo_query_protocol_one() {
    let d = deploy("standard", None);
    let o = d.query(1, "bob", 1, 18, 25);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "18,7\n20,3\n");
    // The user key is cached for the next query.
    assert!(d.path("user-keys").join("user-512.key").exists());
    let o = d.query(1, "bob", 2, 4, 7);
    assert_eq!(stdout(&o), "30,4\n18,7\n");
}

#[test]
fn demo_query_protocol_two() {
    let d = deploy("threshold", None);
    let o = d.query(2, "bob", 1, 18, 25);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "18,7\n20,3\n");
    let o = d.query(2, "bob", 1, 0, 255);
    assert_eq!(stdout(&o), "18,7\n20,3\n30,4\n");
}

#[test]
fn refusals_exit_with_protocol_code() {
    let d = deploy("standard", Some("alice"));
    let o = d.query(1, "mallory", 1, 18, 25);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    // A standard deployment cannot serve protocol 2.
    let o = d.query(2, "alice", 1, 18, 25);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = d.query(1, "alice", 1, 18, 25);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn inverted_range_warns_and_returns_nothing() {
    let d = deploy("threshold", None);
    let o = d.query(2, "bob", 1, 25, 18);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn config_file_matches_flags() {
    let d = deploy("threshold", None);
    let cfg = d.path("user.toml");
    std::fs::write(
        &cfg,
        format!("c1 = {:?}\nc2 = {:?}\nprotocol = 2\nuser = \"bob\"\nk = 1\nalpha = 18\nbeta = 25\nsort = true\n", d.c1, d.c2),
    )
    .unwrap();
    let o = run(bin("user").arg("query").arg("--config").arg(&cfg));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), stdout(&d.query(2, "bob", 1, 18, 25)));
    // Flags override the file.
    let o = run(bin("user").arg("query").arg("--config").arg(&cfg).args(["--alpha", "19"]));
    assert_eq!(stdout(&o), "20,3\n");
}

#[test]
fn usage_errors_exit_with_one() {
    let o = run(bin("user").args(["query", "--alpha", "1"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(bin("owner").args(["keygen", "--bits", "512", "--mode", "bogus", "--out", "x"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(bin("owner").args(["frobnicate"]));
    assert_eq!(o.status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "colour = 3\n").unwrap();
    let o = run(bin("cloud2").arg("serve").arg("--config").arg(&cfg));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unsafe_seed_needs_opt_in() {
    let dir = TempDir::new().unwrap();
    let o = run(bin("owner").args(["--unsafe-seed", "7", "keygen", "--bits", "512", "--out"]).arg(dir.path().join("a")));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("allow-unsafe-seed"));

    // With the opt-in, the same seed gives the same keys.
    for name in ["b", "c"] {
        let o = run(bin("owner")
            .args(["--unsafe-seed", "7", "--allow-unsafe-seed", "keygen", "--bits", "512", "--out"])
            .arg(dir.path().join(name)));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |n: &str| std::fs::read(dir.path().join(n).join("secret.key")).unwrap();
    assert_eq!(read("b"), read("c"));
}

#[test]
fn missing_files_exit_with_io_code() {
    let dir = TempDir::new().unwrap();
    let o = run(bin("owner")
        .args(["encrypt", "--m", "8", "--csv"])
        .arg(dir.path().join("absent.csv"))
        .arg("--pk")
        .arg(dir.path().join("absent.key"))
        .arg("--out")
        .arg(dir.path().join("t.pprq")));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bench_prints_csv() {
    let o = run(bin("owner").args(["bench", "sc", "--m-list", "4,8", "--bits", "512", "--trials", "3"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines[0], "m,key_bits,trials,mean_ms,correct,success_rate,analytic_success");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("4,512,3,"));
    assert!(lines[2].starts_with("8,512,3,"));
}
