//! The `formgate` command line: seed a store, run the service, and inspect decisions
//! offline.
//!
//! Offline commands read the store file directly and trust the local operator. They
//! refuse to run while a service holds the store's lock file.

use std::fs::OpenOptions;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use formgate_core::{Action, DescriptorKind, SharedStore, Store, UserView};
use formgate_server::AppState;

#[derive(Debug, Parser)]
#[command(
    name = "formgate",
    version,
    about = "Field-level RBAC for generated grids and forms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a seed document into a new store file.
    Seed {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, env = "FORMGATE_STORE")]
        store: PathBuf,
        /// Replace an existing store.
        #[arg(long)]
        force: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "FORMGATE_STORE")]
        store: PathBuf,
        #[arg(long, env = "FORMGATE_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 60)]
        session_minutes: u64,
    },
    /// Print a user's effective matrix, one `table field action decision` line each.
    Matrix {
        #[arg(long, env = "FORMGATE_STORE")]
        store: PathBuf,
        #[arg(long)]
        user: String,
    },
    /// Replay how one decision was reached.
    Explain {
        #[arg(long, env = "FORMGATE_STORE")]
        store: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        table: String,
        /// Omit for Delete, which is decided per table.
        #[arg(long)]
        field: Option<String>,
        #[arg(long)]
        action: Action,
    },
    /// Print the descriptor a user would be served, byte for byte.
    ExportDescriptor {
        #[arg(long, env = "FORMGATE_STORE")]
        store: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        table: String,
        #[arg(long, value_parser = parse_kind)]
        kind: DescriptorKind,
    },
    /// Print the store as a canonical seed document.
    ExportSeed {
        #[arg(long, env = "FORMGATE_STORE")]
        store: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<DescriptorKind, String> {
    s.parse()
}

pub fn lock_path(store: &Path) -> PathBuf {
    let mut name = store.as_os_str().to_owned();
    name.push(".lock");
    PathBuf::from(name)
}

/// Marks a store as held by a running service; removed on drop.
struct StoreLock(PathBuf);

impl StoreLock {
    fn acquire(store: &Path) -> Result<Self> {
        let path = lock_path(store);
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .with_context(|| {
                format!(
                    "cannot lock {} (is a service already running?)",
                    store.display()
                )
            })?;
        Ok(StoreLock(path))
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn ensure_unlocked(store: &Path) -> Result<()> {
    let lock = lock_path(store);
    if lock.exists() {
        bail!(
            "{} is held by a running service; stop it or remove {}",
            store.display(),
            lock.display()
        );
    }
    Ok(())
}

fn open_offline(store: &Path) -> Result<Store> {
    ensure_unlocked(store)?;
    Store::load_file(store).with_context(|| format!("cannot open store {}", store.display()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Seed { file, store, force } => {
            ensure_unlocked(&store)?;
            if store.exists() && !force {
                bail!(
                    "{} already exists; pass --force to replace it",
                    store.display()
                );
            }
            let text = std::fs::read_to_string(&file)
                .with_context(|| format!("cannot read {}", file.display()))?;
            let seeded = Store::from_seed(&text)
                .with_context(|| format!("invalid seed {}", file.display()))?;
            seeded.save_file(&store)?;
            writeln!(
                out,
                "seeded {} at policy version {}",
                store.display(),
                seeded.policy_version()
            )?;
        }
        Command::Serve {
            store,
            addr,
            session_minutes,
        } => {
            let _lock = StoreLock::acquire(&store)?;
            let shared = SharedStore::open(&store)
                .with_context(|| format!("cannot open store {}", store.display()))?;
            let state = AppState::new(shared, Duration::from_secs(session_minutes * 60));
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(formgate_server::serve(state, addr))?;
        }
        Command::Matrix { store, user } => {
            let store = open_offline(&store)?;
            let view = UserView::new(&store, &user)?;
            for line in view.report().to_lines() {
                writeln!(out, "{line}")?;
            }
        }
        Command::Explain {
            store,
            user,
            table,
            field,
            action,
        } => {
            let store = open_offline(&store)?;
            let trace = store.explain(&user, action, &table, field.as_deref())?;
            for line in trace.to_lines() {
                writeln!(out, "{line}")?;
            }
        }
        Command::ExportDescriptor {
            store,
            user,
            table,
            kind,
        } => {
            let store = open_offline(&store)?;
            let view = UserView::new(&store, &user)?;
            out.write_all(view.descriptor_text(&table, kind)?.as_bytes())?;
        }
        Command::ExportSeed { store } => {
            let store = open_offline(&store)?;
            out.write_all(store.to_seed().as_bytes())?;
        }
    }
    Ok(())
}
