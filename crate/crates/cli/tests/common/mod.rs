//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};

use serde_json::Value;

/// The `dsukit` binary with no `DSUKIT_*` variables inherited.
pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dsukit"));
    for (key, _) in std::env::vars() {
        if key.starts_with("DSUKIT_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

/// A hub child process, killed on drop.
pub struct HubProcess {
    child: Child,
    pub url: String,
}

impl HubProcess {
    pub fn start(args: &[&str]) -> HubProcess {
        let mut child = bin()
            .args(["--json", "hub", "serve", "--listen", "127.0.0.1:0"])
            .args(args)
            .env("DSUKIT_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn hub");
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("piped stdout"))
            .read_line(&mut line)
            .expect("hub ready line");
        let ready: Value = serde_json::from_str(&line).unwrap_or_else(|e| panic!("hub did not start: {e}: {line:?}"));
        HubProcess {
            child,
            url: ready["url"].as_str().expect("url in ready line").to_owned(),
        }
    }

    pub fn with_config(path: &Path) -> HubProcess {
        HubProcess::start(&["--config", path.to_str().expect("utf-8 path")])
    }
}

impl Drop for HubProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
