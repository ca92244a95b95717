use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use cryptosearch_core::crypto::RsaKeyPair;
use cryptosearch_core::fixture::patient_records;
use cryptosearch_core::ids::{FileId, FolderId};
use cryptosearch_core::storage::{LocalDirStorage, MemoryStorage, StorageBackend};
use cryptosearch_core::ttp::{Outbox, RegistryStore, TtpConfig, TtpService};
use cryptosearch_core::workflow::scenario::{run_scenario, Scenario, ScenarioEnv};
use cryptosearch_core::workflow::{
    Client, Notification, SearchHit, UploadItem, UploadRequest, UserSession, WorkflowError,
};
use cryptosearch_net::{spawn_background, HttpKeyService};
use serde::Serialize;
use serde_json::json;

use crate::config::{CliConfig, PartialConfig, StorageRoot};
use crate::error::CliError;
use crate::session::SessionFile;
use crate::{Cli, Command, Passphrase};

type Result<T> = std::result::Result<T, CliError>;

struct Ctx {
    cfg: CliConfig,
    json: bool,
}

impl Ctx {
    /// Prints `value` as JSON with `--json`, otherwise the human lines.
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> Vec<String>) {
        let mut out = std::io::stdout().lock();
        if self.json {
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(value).expect("serializable"));
        } else {
            for line in human() {
                let _ = writeln!(out, "{line}");
            }
        }
    }

    fn storage(&self) -> Result<Arc<dyn StorageBackend>> {
        match &self.cfg.storage_root {
            StorageRoot::Dir(p) => Ok(Arc::new(LocalDirStorage::open(p).map_err(|e| {
                CliError::internal(format!("storage root {}: {e}", p.display()))
            })?)),
            StorageRoot::Memory => Err(CliError::usage(
                "storage_root \"memory\" does not outlive one command; point it at a directory",
            )),
        }
    }

    fn client(&self, storage: Arc<dyn StorageBackend>) -> Result<Client> {
        let ttp = HttpKeyService::new(&self.cfg.ttp_url)?;
        let progress = |n: &Notification| eprintln!("[{}] {}", n.stage, n.message);
        Ok(Client::new(Arc::new(ttp), storage, self.cfg.workflow()).with_observer(Arc::new(progress)))
    }

    /// A client resumed from the cached session.
    fn session(&self) -> Result<(UserSession, SessionFile)> {
        let file = SessionFile::load(&self.cfg.session_path)?;
        let client = self.client(self.storage()?)?;
        let session = client.resume(&file.email, &file.token);
        if let Some(pem) = &file.private_key_pem {
            let pair = RsaKeyPair::from_private_pem(pem).map_err(|e| CliError::auth(format!("cached key: {e}")))?;
            session.set_keypair(pair);
        }
        Ok((session, file))
    }
}

fn passphrase(p: Passphrase) -> Result<String> {
    match p.passphrase {
        Some(p) => Ok(p),
        None => rpassword::prompt_password("Passphrase: ")
            .map_err(|e| CliError::usage(format!("no passphrase given and cannot prompt: {e}"))),
    }
}

fn guess_mime(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "pdf" => "application/pdf",
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "docx" => "application/vnd.openxmlformats-officedocument.wordprocessingml.document",
        "txt" => "text/plain",
        "json" => "application/json",
        _ => "application/octet-stream",
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref().map(PartialConfig::from_file).transpose()?;
    let env = PartialConfig::from_env(|k| std::env::var(k).ok())?;
    let cfg = CliConfig::resolve(file, env, cli.flag_layer(), std::env::var("HOME").ok())?;
    let ctx = Ctx { cfg, json: cli.json };
    match cli.command {
        Command::Signup { email, pass } => signup(&ctx, &email, &passphrase(pass)?),
        Command::Login { email, pass } => login(&ctx, &email, &passphrase(pass)?),
        Command::Logout => logout(&ctx),
        Command::Mkdir { name } => mkdir(&ctx, &name),
        Command::Ls { folder } => ls(&ctx, folder.map(FolderId::new)),
        Command::Upload {
            folder,
            files,
            keywords,
        } => {
            if files.len() != keywords.len() {
                return Err(CliError::usage(format!(
                    "{} --file but {} --keywords; give one --keywords per --file",
                    files.len(),
                    keywords.len()
                )));
            }
            upload(&ctx, FolderId::new(folder), files.iter().map(|f| f.as_path()).zip(keywords))
        }
        Command::Share { folder, email } => share(&ctx, &FolderId::new(folder), &email),
        Command::Search { folder, query } => search(&ctx, &FolderId::new(folder), &query),
        Command::Download { file_id, out } => download(&ctx, &FileId::new(file_id), &out),
        Command::Scenario { which, query } => scenario(&ctx, which, &query),
        Command::Serve { listen, state } => serve(&ctx, listen, &state),
    }
}

fn signup(ctx: &Ctx, email: &str, pass: &str) -> Result<()> {
    let client = ctx.client(Arc::new(MemoryStorage::new()))?;
    let email = client.signup(email, pass)?;
    ctx.emit(&json!({ "email": email }), || vec![format!("signed up {email}")]);
    Ok(())
}

fn login(ctx: &Ctx, email: &str, pass: &str) -> Result<()> {
    let ttp = HttpKeyService::new(&ctx.cfg.ttp_url)?;
    let resp = cryptosearch_core::ttp::KeyService::login(
        &ttp,
        &cryptosearch_core::ttp::api::LoginRequest {
            email: email.to_owned(),
            passphrase: pass.to_owned(),
        },
    )?;
    let file = SessionFile {
        email: resp.email.clone(),
        token: resp.token,
        expires_at: resp.expires_at,
        private_key_pem: None,
    };
    file.save(&ctx.cfg.session_path)?;
    ctx.emit(&json!({ "email": resp.email, "expiresAt": resp.expires_at }), || {
        vec![format!("logged in as {} until {}", resp.email, resp.expires_at.to_rfc3339())]
    });
    Ok(())
}

fn logout(ctx: &Ctx) -> Result<()> {
    let removed = SessionFile::remove(&ctx.cfg.session_path)?;
    ctx.emit(&json!({ "loggedOut": removed }), || {
        vec![if removed { "logged out" } else { "no session" }.to_owned()]
    });
    Ok(())
}

fn mkdir(ctx: &Ctx, name: &str) -> Result<()> {
    let (session, _) = ctx.session()?;
    let id = session.create_folder(name)?;
    ctx.emit(&json!({ "folderId": id, "name": name }), || vec![id.to_string()]);
    Ok(())
}

fn ls(ctx: &Ctx, folder: Option<FolderId>) -> Result<()> {
    let (session, _) = ctx.session()?;
    let storage = session.client().storage();
    let me = session.email();
    match folder {
        None => {
            let folders = storage.list_folders(me).map_err(WorkflowError::from)?;
            ctx.emit(&folders, || {
                folders
                    .iter()
                    .map(|f| format!("{}\t{}\t{}", f.folder_id, f.name, f.owner))
                    .collect()
            });
        }
        Some(id) => {
            let files = storage
                .list_folder(&id, me)
                .map_err(WorkflowError::from)?;
            ctx.emit(&files, || {
                files
                    .iter()
                    .map(|f| format!("{}\t{}\t{}", f.file_id, f.size, f.name))
                    .collect()
            });
        }
    }
    Ok(())
}

fn upload<'a>(ctx: &Ctx, folder: FolderId, files: impl Iterator<Item = (&'a Path, String)>) -> Result<()> {
    let mut items = Vec::new();
    for (path, keywords) in files {
        let content =
            fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CliError::usage(format!("{} has no usable file name", path.display())))?;
        items.push(UploadItem::new(name, guess_mime(path), content, keywords));
    }
    let (session, _) = ctx.session()?;
    let ids = session.owner_upload(&UploadRequest {
        folder_id: folder.clone(),
        items: items.clone(),
    })?;
    let rows: Vec<_> = items
        .iter()
        .zip(&ids)
        .map(|(item, id)| json!({ "name": item.name, "fileId": id }))
        .collect();
    ctx.emit(&json!({ "folderId": folder, "files": rows }), || {
        items
            .iter()
            .zip(&ids)
            .map(|(item, id)| format!("{}\t{}", id, item.name))
            .collect()
    });
    Ok(())
}

fn share(ctx: &Ctx, folder: &FolderId, email: &str) -> Result<()> {
    let (session, _) = ctx.session()?;
    let granted = session.owner_share(folder, email)?;
    ctx.emit(&json!({ "folderId": folder, "email": email, "granted": granted }), || {
        vec![if granted {
            format!("shared {folder} with {email}")
        } else {
            format!("{email} is not registered; invitation sent. Share again once they sign up.")
        }]
    });
    Ok(())
}

#[derive(Serialize)]
struct SearchOutput<'a> {
    query: &'a str,
    matches: Vec<SearchHit>,
}

/// One line per file; a file hit by several keywords lists them all.
fn search_lines(hits: &[SearchHit]) -> Vec<String> {
    let mut rows: Vec<(&FileId, &str, Vec<&str>)> = Vec::new();
    for h in hits {
        match rows.iter_mut().find(|r| r.0 == &h.file_id) {
            Some(r) => r.2.push(&h.keyword),
            None => rows.push((&h.file_id, &h.name, vec![&h.keyword])),
        }
    }
    rows.into_iter()
        .map(|(id, name, kws)| format!("{name}\t{id}\t{}", kws.join(", ")))
        .collect()
}

fn search(ctx: &Ctx, folder: &FolderId, query: &str) -> Result<()> {
    let (session, _) = ctx.session()?;
    let matches = session.search_hits(folder, query)?;
    ctx.emit(&SearchOutput { query, matches: matches.clone() }, || search_lines(&matches));
    Ok(())
}

fn download(ctx: &Ctx, file: &FileId, out: &Path) -> Result<()> {
    let (session, mut cached) = ctx.session()?;
    let plain = session.user_download(file)?;
    fs::write(out, &plain).map_err(|e| CliError::internal(format!("cannot write {}: {e}", out.display())))?;
    if cached.private_key_pem.is_none() {
        cached.private_key_pem = Some(session.keypair()?.private_pem().map_err(WorkflowError::from)?);
        cached.save(&ctx.cfg.session_path)?;
    }
    ctx.emit(
        &json!({ "fileId": file, "out": out, "bytes": plain.len() }),
        || vec![format!("wrote {} bytes to {}", plain.len(), out.display())],
    );
    Ok(())
}

fn scenario(ctx: &Ctx, which: Scenario, query: &str) -> Result<()> {
    let env = ScenarioEnv::with_config(ctx.cfg.workflow(), TtpConfig::default());
    let t = run_scenario(which, &patient_records(), query, &env)
        .map_err(|e| CliError::new(e.source.kind(), e.to_string()))?;
    for n in &t.notifications {
        eprintln!("[{}] {}", n.stage, n.message);
    }
    let steps: Vec<_> = t
        .steps
        .iter()
        .map(|s| {
            json!({
                "number": s.number,
                "actor": s.actor,
                "description": s.description,
                "messages": t.messages_in_step(s.number).count(),
                "detail": s.detail,
            })
        })
        .collect();
    let recovered: Vec<_> = t
        .recovered
        .iter()
        .map(|(name, ok)| json!({ "name": name, "matches": ok }))
        .collect();
    let value = json!({
        "scenario": which.label(),
        "query": t.query,
        "steps": steps,
        "hits": t.hits,
        "recovered": recovered,
        "invites": t.invites.len(),
        "leaks": t.leaks,
    });
    ctx.emit(&value, || {
        let mut lines: Vec<String> = t.render().lines().map(str::to_owned).collect();
        lines.push(format!("hits: {}", t.hits.join(", ")));
        lines.push(if t.leaks.is_empty() {
            "wire check: no keyword, key or plaintext leaked".to_owned()
        } else {
            format!("wire check: {} leak(s)", t.leaks.len())
        });
        lines
    });
    let completed = t.completed_steps();
    let expected: Vec<u32> = (1..=which.step_count()).collect();
    if completed != expected {
        return Err(CliError::internal(format!("completed steps {completed:?}, expected 1..={}", which.step_count())));
    }
    if !t.leaks.is_empty() || t.recovered.iter().any(|(_, ok)| !ok) {
        return Err(CliError::internal("scenario finished with leaks or corrupted downloads"));
    }
    Ok(())
}

fn serve(ctx: &Ctx, listen: std::net::SocketAddr, state: &Path) -> Result<()> {
    let storage: Arc<dyn StorageBackend> = ctx.storage()?;
    let outbox = Outbox::open(state.join("outbox.jsonl"))?;
    let ttp = TtpService::new(
        TtpConfig::default(),
        RegistryStore::Dir(state.to_path_buf()),
        outbox,
        storage,
    )?;
    let handle = spawn_background(listen, Arc::new(ttp))
        .map_err(|e| CliError::internal(format!("cannot listen on {listen}: {e}")))?;
    println!("listening on {}", handle.base_url());
    let _ = std::io::stdout().flush();
    loop {
        std::thread::park();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hit(kw: &str, id: &str, name: &str) -> SearchHit {
        SearchHit {
            keyword: kw.into(),
            file_id: FileId::new(id),
            name: name.into(),
        }
    }

    #[test]
    fn one_line_per_file() {
        let lines = search_lines(&[
            hit("Diabetes", "1a", "Patient 1.pdf"),
            hit("Diabetes", "1c", "Patient 3.pdf"),
            hit("MCN1573", "1a", "Patient 1.pdf"),
        ]);
        assert_eq!(
            lines,
            vec!["Patient 1.pdf\t1a\tDiabetes, MCN1573", "Patient 3.pdf\t1c\tDiabetes"]
        );
    }

    #[test]
    fn mime_from_extension() {
        assert_eq!(guess_mime(Path::new("a/Patient 1.PDF")), "application/pdf");
        assert_eq!(guess_mime(Path::new("scan.png")), "image/png");
        assert_eq!(guess_mime(Path::new("noext")), "application/octet-stream");
    }
}
