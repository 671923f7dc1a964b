//! The `dsukit` binary end to end.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Output, Stdio};

use common::{bin, HubProcess};

use dsukit_core::keyssi::{create_const_ssi, derive, seed_ssi_from_entropy, KeySsi};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dsukit")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

struct Wallet<'a> {
    home: &'a Path,
    name: &'a str,
    hub: &'a str,
}

impl Wallet<'_> {
    fn cmd(&self, args: &[&str]) -> Output {
        bin()
            .args(["dsu", "--home"])
            .arg(self.home)
            .args(["--wallet", self.name, "--hub", self.hub])
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.cmd(args);
        assert!(o.status.success(), "dsu {args:?} failed: {}", stderr(&o));
        stdout(&o)
    }
}

#[test]
fn inspect_prints_every_field() {
    let v: Value = serde_json::from_str(&ok(&["keyssi", "inspect", "ssi:seed:ePI.pharma:RANDOMSEEDKEY:HASHRANDOMKEY"])).unwrap();
    assert_eq!(v["type_name"], "seed");
    assert_eq!(v["domain"], "ePI.pharma");
    assert_eq!(v["type_specific"], "RANDOMSEEDKEY");
    assert_eq!(v["control"], "HASHRANDOMKEY");
    assert_eq!(v["version"], "v0");
    assert_eq!(v["hint"], Value::Null);
}

#[test]
fn parse_errors_exit_one_with_message() {
    let o = run(&["keyssi", "inspect", "ssi:nope:d:a:b"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("type"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn deriving_a_terminal_rank_fails() {
    let seed = seed_ssi_from_entropy("d", &[4; 32]).unwrap();
    let sza = derive(&derive(&seed).unwrap()).unwrap();
    let o = run(&["keyssi", "derive", &sza.to_string()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("terminal rank"));
}

#[test]
fn gen_twice_is_distinct() {
    let a = ok(&["keyssi", "gen", "--domain", "d"]);
    let b = ok(&["keyssi", "gen", "--domain", "d"]);
    assert_ne!(a, b);
    KeySsi::parse(a.trim()).unwrap();
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["keyssi", "frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "anchoring", "--calls", "x"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "anchoring", "--writers", "0"]).status.code(), Some(2));
    let home = tempfile::tempdir().unwrap();
    let o = bin().args(["dsu", "--home"]).arg(home.path()).arg("ls").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no hub configured"));
}

#[test]
fn flags_read_from_environment() {
    let out = bin()
        .args(["keyssi", "gen"])
        .env("DSUKIT_DOMAIN", "env.domain")
        .env("DSUKIT_ENTROPY_HEX", "11".repeat(32))
        .env("DSUKIT_JSON", "true")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = seed_ssi_from_entropy("env.domain", &[0x11; 32]).unwrap();
    assert_eq!(v["ssi"], expected.to_string());
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/keyssi_transcript.txt")
}

/// A fixed command sequence whose output is compared with a stored
/// transcript and with the same calls made through the library.
#[test]
fn keyssi_transcript_matches_golden_and_library() {
    let entropy = "42".repeat(32);
    let steps: Vec<Vec<String>> = vec![
        vec!["keyssi", "gen", "--domain", "ePI.pharma", "--entropy-hex", &entropy],
        vec!["keyssi", "gen", "--domain", "ePI.pharma", "--family", "secret", "--entropy-hex", &entropy],
        vec!["keyssi", "const", "--domain", "ePI.pharma", "leaflet-registry"],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(str::to_owned).collect())
    .collect();
    let mut transcript = String::new();
    let mut outputs = Vec::new();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let out = ok(&args);
        transcript.push_str(&format!("$ dsukit {}\n{out}", step.join(" ")));
        outputs.push(out.trim().to_owned());
    }
    for owner in outputs[..2].to_vec() {
        let chain_out = ok(&["keyssi", "derive", "--all", &owner]);
        transcript.push_str(&format!("$ dsukit keyssi derive --all {owner}\n{chain_out}"));

        let mut expected = Vec::new();
        let mut cur = KeySsi::parse(&owner).unwrap();
        while let Ok(next) = derive(&cur) {
            expected.push(next.to_string());
            cur = next;
        }
        assert_eq!(chain_out.lines().collect::<Vec<_>>(), expected);
    }
    let seed = seed_ssi_from_entropy("ePI.pharma", &[0x42; 32]).unwrap();
    assert_eq!(outputs[0], seed.to_string());
    assert_eq!(outputs[2], create_const_ssi("ePI.pharma", "leaflet-registry").unwrap().to_string());

    let path = golden_path();
    if std::env::var_os("DSUKIT_REGEN_GOLDEN").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &transcript).unwrap();
    }
    assert_eq!(transcript, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn wallet_round_trip_across_machines() {
    let hub = HubProcess::start(&["--domain", "pharma"]);
    let alice_home = tempfile::tempdir().unwrap();
    let bob_home = tempfile::tempdir().unwrap();
    let alice = Wallet { home: alice_home.path(), name: "alice", hub: &hub.url };
    let bob = Wallet { home: bob_home.path(), name: "bob", hub: &hub.url };

    let o = alice.cmd(&["create", "--domain", "pharma"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("unencrypted"), "plaintext warning missing");
    assert!(alice.cmd(&["create", "--domain", "pharma"]).status.code() == Some(1));

    let payload: Vec<u8> = (0..300_000u32).map(|i| (i * 31 % 251) as u8).collect();
    let file = alice_home.path().join("leaflet.bin");
    std::fs::write(&file, &payload).unwrap();
    alice.ok(&["write", "/docs/leaflet.bin", file.to_str().unwrap()]);
    alice.ok(&["commit"]);

    for i in 0..2 {
        let mut child = bin()
            .args(["dsu", "--home"])
            .arg(alice.home)
            .args(["--wallet", "alice", "--hub", &hub.url, "write", "/counter", "-"])
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(format!("{i}").as_bytes()).unwrap();
        assert!(child.wait().unwrap().success());
        alice.ok(&["commit", "--mode", if i == 0 { "optimistic" } else { "validated" }]);
    }
    let history = alice.ok(&["history"]);
    assert_eq!(history.lines().count(), 3, "{history}");
    assert!(history.lines().all(|l| l.contains("ssi:hashlink:pharma:")));

    let ls = alice.ok(&["ls"]);
    assert_eq!(ls.lines().collect::<Vec<_>>(), ["/counter", "/docs/leaflet.bin"]);

    // A second machine with only the read rank sees identical bytes.
    let sread = alice.ok(&["ssi", "--rank", "sread"]);
    bob.ok(&["attach", sread.trim()]);
    let read = bob.cmd(&["read", "/docs/leaflet.bin"]);
    assert!(read.status.success(), "{}", stderr(&read));
    assert_eq!(read.stdout, payload);
    assert_eq!(bob.cmd(&["write", "/x", file.to_str().unwrap()]).status.code(), Some(1));

    // An older version stays readable.
    let first = history.lines().next().unwrap().split_whitespace().last().unwrap();
    let old = bob.ok(&["--json", "read", "/docs/leaflet.bin", "--version", first]);
    let v: Value = serde_json::from_str(&old).unwrap();
    assert_eq!(v["size"], payload.len());
    assert_eq!(bob.cmd(&["read", "/counter", "--version", first]).status.code(), Some(1));

    let export = tempfile::tempdir().unwrap();
    bob.ok(&["load", "--out", export.path().to_str().unwrap()]);
    assert_eq!(std::fs::read(export.path().join("docs/leaflet.bin")).unwrap(), payload);
    assert_eq!(std::fs::read(export.path().join("counter")).unwrap(), b"1");

    // Zero access: history yes, content no.
    let sza = alice.ok(&["ssi", "--rank", "sza"]);
    bob.ok(&["attach", "--force", sza.trim()]);
    let denied = bob.cmd(&["read", "/docs/leaflet.bin"]);
    assert_eq!(denied.status.code(), Some(1));
    assert!(stderr(&denied).contains("rank"), "{}", stderr(&denied));
    assert_eq!(bob.ok(&["history"]).lines().count(), 3);
}

#[test]
fn mounts_and_const_names_through_the_cli() {
    let hub = HubProcess::start(&["--domain", "pharma"]);
    let home = tempfile::tempdir().unwrap();
    let inner = Wallet { home: home.path(), name: "inner", hub: &hub.url };
    let outer = Wallet { home: home.path(), name: "outer", hub: &hub.url };
    let f = home.path().join("f");
    std::fs::write(&f, b"mounted content").unwrap();

    inner.ok(&["create", "--domain", "pharma"]);
    inner.ok(&["write", "/data", f.to_str().unwrap()]);
    inner.ok(&["commit"]);
    let inner_read = inner.ok(&["ssi", "--rank", "sread"]);

    outer.ok(&["create", "--domain", "pharma", "--family", "secret"]);
    outer.ok(&["mount", "/lib", inner_read.trim()]);
    outer.ok(&["commit"]);
    let o = outer.cmd(&["read", "/lib/data"]);
    assert_eq!(o.stdout, b"mounted content", "{}", stderr(&o));
    assert!(outer.ok(&["ls"]).contains("/lib -> ssi:sread:pharma:"));

    let published: Value = serde_json::from_str(&inner.ok(&["--json", "publish-const", "catalogue"])).unwrap();
    let resolved = inner.ok(&["resolve-const", "--domain", "pharma", "catalogue"]);
    assert_eq!(resolved.trim(), published["ssi"].as_str().unwrap());
    assert_eq!(resolved.trim(), inner_read.trim());
    assert_eq!(inner.cmd(&["publish-const", "catalogue"]).status.code(), Some(1));
    assert_eq!(inner.cmd(&["resolve-const", "--domain", "pharma", "missing"]).status.code(), Some(1));
}

#[test]
fn bench_json_report_is_deterministic_in_counts() {
    let args = [
        "--json", "bench", "anchoring", "--calls", "4", "--writers", "3", "--latency", "10", "--cap", "500",
        "--mode", "optimistic", "--seed", "11",
    ];
    let a: Value = serde_json::from_str(&ok(&args)).unwrap();
    let b: Value = serde_json::from_str(&ok(&args)).unwrap();
    for key in ["schedule_digest", "acked", "confirmed", "invalidations", "total_calls"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    assert_eq!(a["acked"], 12);
    let table = ok(&["bench", "anchoring", "--calls", "1", "--latency", "1"]);
    assert!(table.contains("latency p95") && table.contains("confirmed rate"));
}
