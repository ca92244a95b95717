#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

use cryptosearch_core::fixture::patient_records;
use tempfile::TempDir;

pub const BIN: &str = env!("CARGO_BIN_EXE_cryptosearch");
pub const PASS: &str = "Corr3ct#Horse";

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stdout: {}\nstderr: {}", self.stdout, self.stderr);
        self
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {:?}", self.stdout))
    }
}

/// A key service child process plus the shared storage directory.
pub struct Deployment {
    pub dir: TempDir,
    url: String,
    cost: u32,
    child: Child,
}

impl Deployment {
    pub fn start() -> Self {
        Self::with_cost(4)
    }

    pub fn with_cost(cost: u32) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut child = Command::new(BIN)
            .args(["serve", "--listen", "127.0.0.1:0", "--state"])
            .arg(dir.path().join("ttp"))
            .arg("--storage-root")
            .arg(dir.path().join("store"))
            .env_remove("CRYPTOSEARCH_CONFIG")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected serve output {line:?}"))
            .to_owned();
        Deployment { dir, url, cost, child }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs the CLI as `who`, each identity with its own session file.
    pub fn cli(&self, who: &str, args: &[&str]) -> Run {
        let out = Command::new(BIN)
            .args(args)
            .env("CRYPTOSEARCH_TTP_URL", &self.url)
            .env("CRYPTOSEARCH_STORAGE_ROOT", self.path("store"))
            .env("CRYPTOSEARCH_SESSION_PATH", self.path(&format!("{who}.session.json")))
            .env("CRYPTOSEARCH_COST", self.cost.to_string())
            .env_remove("CRYPTOSEARCH_PASSPHRASE")
            .env_remove("CRYPTOSEARCH_CONFIG")
            .stdin(Stdio::null())
            .output()
            .unwrap();
        Run {
            code: out.status.code().unwrap_or(-1),
            stdout: String::from_utf8(out.stdout).unwrap(),
            stderr: String::from_utf8(out.stderr).unwrap(),
        }
    }

    pub fn join(&self, email: &str) {
        self.cli(email, &["signup", "--email", email, "--passphrase", PASS]).ok();
        self.cli(email, &["login", "--email", email, "--passphrase", PASS]).ok();
    }
}

impl Drop for Deployment {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Writes the patient fixture to `dir`; returns (path, keywords) pairs.
pub fn write_patients(dir: &Path) -> Vec<(PathBuf, String)> {
    std::fs::create_dir_all(dir).unwrap();
    patient_records()
        .into_iter()
        .map(|item| {
            let p = dir.join(&item.name);
            std::fs::write(&p, &item.content).unwrap();
            (p, item.keywords)
        })
        .collect()
}

/// Owner uploads the patient fixture into a new folder and shares it with
/// `user`. Returns the folder ID and `name -> fileId`.
pub fn ehr_world(d: &Deployment, owner: &str, user: &str) -> (String, Vec<(String, String)>) {
    d.join(owner);
    d.join(user);
    let folder = d.cli(owner, &["mkdir", "--name", "EHR"]).ok().stdout.trim().to_owned();
    let files = write_patients(&d.path("plain"));
    let mut args = vec!["upload".to_owned(), "--json".into(), "--folder".into(), folder.clone()];
    for (p, kw) in &files {
        args.extend(["--file".into(), p.to_str().unwrap().to_owned(), "--keywords".into(), kw.clone()]);
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let up = d.cli(owner, &args).ok().json();
    let ids = up["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["name"].as_str().unwrap().to_owned(), f["fileId"].as_str().unwrap().to_owned()))
        .collect();
    let shared = d.cli(owner, &["share", "--json", "--folder", &folder, "--email", user]).ok().json();
    assert_eq!(shared["granted"], true);
    (folder, ids)
}
