//! `cryptosearch`: sign up, upload encrypted files with keywords, share,
//! search and download, against a key service started with
//! `cryptosearch serve`.

mod commands;
mod config;
mod error;
mod session;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cryptosearch_core::workflow::scenario::Scenario;

use crate::config::PartialConfig;
use crate::error::{EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "cryptosearch", version, about = "Keyword search over encrypted files")]
struct Cli {
    /// JSON file with any of the configuration keys.
    #[arg(long, global = true, env = "CRYPTOSEARCH_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    ttp_url: Option<String>,
    /// Directory holding stored files, or `memory`.
    #[arg(long, global = true)]
    storage_root: Option<String>,
    #[arg(long = "session", global = true)]
    session_path: Option<PathBuf>,
    /// bcrypt cost used at signup.
    #[arg(long, global = true)]
    cost: Option<u32>,
    #[arg(long, global = true)]
    index_file_name: Option<String>,
    /// Document IV as 32 hex digits.
    #[arg(long, global = true)]
    iv: Option<String>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Passphrase {
    /// Falls back to CRYPTOSEARCH_PASSPHRASE, then to a prompt.
    #[arg(long, env = "CRYPTOSEARCH_PASSPHRASE", hide_env_values = true)]
    passphrase: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    Signup {
        #[arg(long)]
        email: String,
        #[command(flatten)]
        pass: Passphrase,
    },
    Login {
        #[arg(long)]
        email: String,
        #[command(flatten)]
        pass: Passphrase,
    },
    Logout,
    /// Create a folder and print its ID.
    Mkdir {
        #[arg(long)]
        name: String,
    },
    /// List visible folders, or the files of one folder.
    Ls {
        #[arg(long)]
        folder: Option<String>,
    },
    /// Encrypt and upload files; each --file takes the --keywords at the same position.
    Upload {
        #[arg(long)]
        folder: String,
        #[arg(long = "file", required = true)]
        files: Vec<PathBuf>,
        #[arg(long = "keywords", required = true)]
        keywords: Vec<String>,
    },
    Share {
        #[arg(long)]
        folder: String,
        #[arg(long)]
        email: String,
    },
    Search {
        #[arg(long)]
        folder: String,
        /// Comma-separated keywords.
        #[arg(long)]
        query: String,
    },
    Download {
        #[arg(long)]
        file_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a complete protocol walkthrough in memory and print the transcript.
    Scenario {
        #[arg(long)]
        which: Scenario,
        #[arg(long, default_value = "Diabetes")]
        query: String,
    },
    /// Run the key service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8700")]
        listen: SocketAddr,
        /// Directory for the user, key and invite records.
        #[arg(long, default_value = "cryptosearch-ttp")]
        state: PathBuf,
    },
}

impl Cli {
    fn flag_layer(&self) -> PartialConfig {
        PartialConfig {
            ttp_url: self.ttp_url.clone(),
            storage_root: self.storage_root.clone(),
            session_path: self.session_path.clone(),
            cost: self.cost,
            index_file_name: self.index_file_name.clone(),
            iv: self.iv.clone(),
        }
    }
}

fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(dispatch(std::env::args_os()));
}
