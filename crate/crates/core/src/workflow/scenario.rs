//! Scripted end-to-end runs of the three protocol scenarios, one numbered
//! step at a time, with every wire message captured.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::capture::{Channel, Direction, RecordingKeyService, RecordingStorage, WireLog, WireMessage};
use super::{
    Client, CollectingObserver, Notification, UploadItem, UploadRequest, UserSession,
    WorkflowConfig, WorkflowError,
};
use crate::crypto::{encrypt_keyword, DocumentKey, SecretKey, WrappedKey};
use crate::encoding::b64_encode;
use crate::ids::FolderId;
use crate::index::{InvertedIndex, KeywordSet, QueryTerm, SearchMode};
use crate::storage::{MemoryStorage, StorageBackend};
use crate::ttp::api::Binding;
use crate::ttp::{Invite, TtpConfig, TtpService};

pub const OWNER_EMAIL: &str = "owner@hospital.example";
pub const USER_EMAIL: &str = "doctor@clinic.example";
const OWNER_PASS: &str = "Owner#Pass1";
const USER_PASS: &str = "Doctor#Pass1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// The owner uploads, then searches and decrypts their own files.
    Owner,
    /// A registered user, already granted the folder, searches and decrypts.
    UserRegistered,
    /// The user has no account when the owner shares; they are invited,
    /// register, and the share is retried before they search.
    UserUnregistered,
}

impl Scenario {
    pub fn step_count(self) -> u32 {
        match self {
            Scenario::Owner => 17,
            Scenario::UserRegistered => 18,
            Scenario::UserUnregistered => 16,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Owner => "1",
            Scenario::UserRegistered => "2a",
            Scenario::UserUnregistered => "2b",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "owner" => Ok(Scenario::Owner),
            "2a" | "user-registered" => Ok(Scenario::UserRegistered),
            "2b" | "user-unregistered" => Ok(Scenario::UserUnregistered),
            other => Err(format!("unknown scenario {other:?}; expected 1, 2a or 2b")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub number: u32,
    pub actor: &'static str,
    pub description: &'static str,
    pub detail: Vec<String>,
}

#[derive(Debug)]
pub struct ScenarioError {
    pub step: u32,
    pub source: WorkflowError,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} failed: {}", self.step, self.source)
    }
}

impl std::error::Error for ScenarioError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

#[derive(Debug)]
pub struct Transcript {
    pub scenario: Scenario,
    pub query: String,
    pub steps: Vec<StepRecord>,
    pub wire: Vec<WireMessage>,
    pub notifications: Vec<Notification>,
    pub invites: Vec<Invite>,
    /// Names of the files the search returned.
    pub hits: Vec<String>,
    /// Per decrypted file: name and whether it equals the original.
    pub recovered: Vec<(String, bool)>,
    /// Any leakage the runner found in the capture; empty on success.
    pub leaks: Vec<String>,
}

impl Transcript {
    pub fn completed_steps(&self) -> Vec<u32> {
        self.steps.iter().map(|s| s.number).collect()
    }

    pub fn messages_in_step(&self, step: u32) -> impl Iterator<Item = &WireMessage> {
        self.wire.iter().filter(move |m| m.step == step)
    }

    pub fn render(&self) -> String {
        let mut out = format!("scenario {} (query {:?})\n", self.scenario.label(), self.query);
        for s in &self.steps {
            let n = self.messages_in_step(s.number).count();
            out.push_str(&format!(
                "{:>2}. [{}] {} ({} message{})\n",
                s.number,
                s.actor,
                s.description,
                n,
                if n == 1 { "" } else { "s" }
            ));
            for d in &s.detail {
                out.push_str(&format!("      {d}\n"));
            }
        }
        out
    }
}

/// A clean key service and storage for one run.
pub struct ScenarioEnv {
    pub storage: Arc<MemoryStorage>,
    pub ttp: Arc<TtpService>,
    pub config: WorkflowConfig,
}

impl ScenarioEnv {
    pub fn in_memory() -> Self {
        Self::with_config(WorkflowConfig::default(), TtpConfig::default())
    }

    pub fn with_config(config: WorkflowConfig, ttp_config: TtpConfig) -> Self {
        let storage = Arc::new(MemoryStorage::new());
        let ttp = Arc::new(
            TtpService::new(
                ttp_config,
                crate::ttp::RegistryStore::Memory,
                crate::ttp::Outbox::in_memory(),
                storage.clone(),
            )
            .expect("memory registry"),
        );
        ScenarioEnv {
            storage,
            ttp,
            config,
        }
    }
}

struct Runner {
    log: WireLog,
    steps: Vec<StepRecord>,
}

impl Runner {
    fn step<T>(
        &mut self,
        number: u32,
        actor: &'static str,
        description: &'static str,
        f: impl FnOnce() -> Result<(T, String), WorkflowError>,
    ) -> Result<T, ScenarioError> {
        let last = self.steps.last().map_or(0, |s| s.number);
        assert!(
            number == last || number == last + 1,
            "steps must run in order: {last} then {number}"
        );
        self.log.set_step(number);
        let (value, detail) = f().map_err(|source| ScenarioError { step: number, source })?;
        match self.steps.last_mut() {
            Some(s) if s.number == number => s.detail.push(detail),
            _ => self.steps.push(StepRecord {
                number,
                actor,
                description,
                detail: vec![detail],
            }),
        }
        Ok(value)
    }

    fn setup<T>(&mut self, f: impl FnOnce() -> Result<T, WorkflowError>) -> Result<T, ScenarioError> {
        self.log.set_step(0);
        f().map_err(|source| ScenarioError { step: 0, source })
    }
}

fn check(cond: bool, what: &str) -> Result<(), WorkflowError> {
    if cond {
        Ok(())
    } else {
        Err(WorkflowError::InvalidQuery(format!("check failed: {what}")))
    }
}

/// Step numbers the owner phase maps onto, in action order: request keys,
/// keys generated, keys received, encrypt+upload, FileIDs returned, index
/// built, index uploaded, keys registered.
type OwnerSteps = [u32; 8];
/// Trapdoor request, trapdoor issued, index download, index received,
/// local search, ciphertext request, ciphertext received, key request, key
/// checked, wrapped key received, key unwrapped, document decrypted.
type SearchSteps = [u32; 12];

fn owner_phase(
    r: &mut Runner,
    owner: &UserSession,
    folder: &FolderId,
    fixture: &[UploadItem],
    s: OwnerSteps,
) -> Result<(), ScenarioError> {
    let n = fixture.len() as u32;
    let (sk, keys): (SecretKey, Vec<DocumentKey>) =
        r.step(s[0], "DO → TTP", "request secret and document keys", || {
            let out = owner.request_keys(n, Some(folder))?;
            Ok((out, format!("asked for {n} document keys")))
        })?;
    r.step(s[1], "TTP", "generate secret key and reference-numbered keys", || {
        let refs: Vec<u64> = keys.iter().map(|k| k.ref_num()).collect();
        check(refs.windows(2).all(|w| w[1] == w[0] + 1), "consecutive reference numbers")?;
        Ok(((), format!("reference numbers {:?}", refs)))
    })?;
    r.step(s[2], "TTP → DO", "deliver keys to the owner", || {
        Ok(((), format!("{}-byte secret key, {} document keys", sk.to_bytes().len(), keys.len())))
    })?;
    let mut ids = Vec::new();
    r.step(s[3], "DO → CSP", "encrypt documents and upload", || {
        for (item, key) in fixture.iter().zip(&keys) {
            ids.push(owner.encrypt_and_upload(folder, &item.name, &item.mime, &item.content, key)?);
        }
        Ok(((), format!("{} ciphertexts uploaded", ids.len())))
    })?;
    r.step(s[4], "CSP → DO", "return a FileID per document", || {
        check(ids.iter().collect::<HashSet<_>>().len() == ids.len(), "distinct FileIDs")?;
        Ok(((), format!("{} FileIDs", ids.len())))
    })?;
    let index = r.step(s[5], "DO", "build the inverted index from keywords and FileIDs", || {
        let mut index = InvertedIndex::new();
        for (item, id) in fixture.iter().zip(&ids) {
            if item.keywords.trim().is_empty() {
                continue;
            }
            let set = KeywordSet::parse(&item.keywords)?;
            let tds = set.iter().map(|k| encrypt_keyword(k, &sk)).collect::<Result<Vec<_>, _>>()?;
            index.add_document(tds.iter(), id);
        }
        let detail = format!("{} trapdoors, {} postings", index.len(), index.posting_count());
        Ok((index, detail))
    })?;
    let index_id = r.step(s[6], "DO → CSP", "upload the encrypted index", || {
        let id = owner.upload_index(folder, &index)?;
        Ok((id.clone(), format!("index file {id}")))
    })?;
    r.step(s[7], "DO → TTP", "register folder key and FileID/reference-number bindings", || {
        let bindings = fixture
            .iter()
            .zip(&ids)
            .zip(&keys)
            .map(|((item, id), key)| Binding {
                file_id: id.clone(),
                ref_num: key.ref_num(),
                name: Some(item.name.clone()),
            })
            .collect::<Vec<_>>();
        let n = bindings.len();
        owner.register(folder, &sk, bindings, index_id)?;
        Ok(((), format!("{n} bindings registered")))
    })?;
    Ok(())
}

/// Hit names, and per decrypted file its name and whether it matched.
type SearchOutcome = (Vec<String>, Vec<(String, bool)>);

#[allow(clippy::too_many_arguments)]
fn search_phase(
    r: &mut Runner,
    who: &UserSession,
    actor_is_owner: bool,
    folder: &FolderId,
    query: &str,
    owner_sk: Option<&SecretKey>,
    fixture: &[UploadItem],
    s: SearchSteps,
) -> Result<SearchOutcome, ScenarioError> {
    let (me, to_ttp, from_ttp, to_csp, from_csp) = if actor_is_owner {
        ("DO", "DO → TTP", "TTP → DO", "DO → CSP", "CSP → DO")
    } else {
        ("DU", "DU → TTP", "TTP → DU", "DU → CSP", "CSP → DU")
    };
    let keywords = KeywordSet::parse(query).map_err(|e| ScenarioError {
        step: s[0],
        source: e.into(),
    })?;
    let mut terms = Vec::new();
    r.step(s[0], to_ttp, "send plaintext keyword for a trapdoor", || {
        for kw in keywords.iter() {
            terms.push(QueryTerm::new(kw, who.request_trapdoor(folder, kw)?));
        }
        Ok(((), format!("{} term(s)", terms.len())))
    })?;
    r.step(s[1], from_ttp, "verify caller and return the encrypted keyword", || {
        for t in &terms {
            check(t.trapdoor.as_str().len() == 2 * t.keyword.len(), "trapdoor length")?;
            if let Some(sk) = owner_sk {
                check(encrypt_keyword(&t.keyword, sk)? == t.trapdoor, "trapdoor matches owner's key")?;
            }
        }
        Ok(((), "trapdoor received".to_owned()))
    })?;
    let storage = who.client().storage().clone();
    let raw = r.step(s[2], to_csp, "request the encrypted index", || {
        let id = storage
            .find_by_name(who.email(), folder, &who.client().config().index_file_name)?
            .ok_or_else(|| WorkflowError::IndexMissing(folder.clone()))?;
        Ok((storage.download(who.email(), &id)?, format!("index file {id}")))
    })?;
    let index = r.step(s[3], from_csp, "receive the encrypted index", || {
        let index = InvertedIndex::from_json_bytes(&raw)?;
        let d = format!("{} bytes, {} trapdoors", raw.len(), index.len());
        Ok((index, d))
    })?;
    let found = r.step(s[4], me, "search the index with the trapdoor", || {
        let res = who.search_local(&index, &terms, SearchMode::Any)?;
        let ids = res.file_ids();
        let d = format!("{} FileID(s)", ids.len());
        Ok((ids, d))
    })?;
    let mut cts = Vec::new();
    r.step(s[5], to_csp, "request the encrypted documents", || {
        for id in &found {
            cts.push(who.fetch_ciphertext(id)?);
        }
        Ok(((), format!("{} download(s)", cts.len())))
    })?;
    let names = r.step(s[6], from_csp, "receive the encrypted documents", || {
        let listing = storage.list_folder(folder, who.email())?;
        let names: Vec<String> = found
            .iter()
            .map(|id| {
                listing
                    .iter()
                    .find(|e| &e.file_id == id)
                    .map(|e| e.name.clone())
                    .unwrap_or_default()
            })
            .collect();
        Ok((names.clone(), names.join(", ")))
    })?;
    let mut wrapped: Vec<(WrappedKey, u64)> = Vec::new();
    r.step(s[7], to_ttp, "send FileIDs and an RSA public key", || {
        let bits = who.keypair()?.modulus_bits();
        for id in &found {
            wrapped.push(who.request_wrapped_key(id)?);
        }
        Ok(((), format!("{bits}-bit public key, {} request(s)", wrapped.len())))
    })?;
    r.step(s[8], "TTP", "look up the registered decryption keys", || {
        let refs: Vec<u64> = wrapped.iter().map(|w| w.1).collect();
        Ok(((), format!("reference numbers {refs:?}")))
    })?;
    r.step(s[9], from_ttp, "return keys wrapped under the public key", || {
        let lens: HashSet<usize> = wrapped.iter().map(|w| w.0.len()).collect();
        Ok(((), format!("wrapped key length(s) {lens:?}")))
    })?;
    let mut keys = Vec::new();
    r.step(s[10], me, "unwrap the keys with the private key", || {
        for (wk, rn) in &wrapped {
            keys.push(who.unwrap(wk, *rn)?);
        }
        Ok(((), format!("{} key(s) unwrapped", keys.len())))
    })?;
    let recovered = r.step(s[11], me, "decrypt the documents", || {
        let mut out = Vec::new();
        for ((ct, key), name) in cts.iter().zip(&keys).zip(&names) {
            let plain = who.decrypt(ct, key);
            let original = fixture.iter().find(|i| &i.name == name);
            out.push((name.clone(), original.is_some_and(|o| o.content == plain)));
        }
        check(out.iter().all(|(_, ok)| *ok), "decrypted bytes equal the originals")?;
        let d = format!("{} document(s) match", out.len());
        Ok((out, d))
    })?;
    Ok((names, recovered))
}

/// Runs `which` against a clean `env`, uploading `fixture` and searching
/// for `query`.
pub fn run_scenario(
    which: Scenario,
    fixture: &[UploadItem],
    query: &str,
    env: &ScenarioEnv,
) -> Result<Transcript, ScenarioError> {
    let log = WireLog::new();
    let observer = Arc::new(CollectingObserver::new());
    let client = Client::new(
        Arc::new(RecordingKeyService::new(env.ttp.clone(), log.clone())),
        Arc::new(RecordingStorage::new(env.storage.clone(), log.clone())),
        env.config.clone(),
    )
    .with_observer(observer.clone());
    let mut r = Runner {
        log: log.clone(),
        steps: Vec::new(),
    };

    let owner = r.setup(|| {
        client.signup(OWNER_EMAIL, OWNER_PASS)?;
        client.login(OWNER_EMAIL, OWNER_PASS)
    })?;
    let folder = r.setup(|| owner.create_folder("EHR records"))?;

    let (hits, recovered) = match which {
        Scenario::Owner => {
            owner_phase(&mut r, &owner, &folder, fixture, [1, 2, 3, 4, 5, 5, 6, 7])?;
            let sk = env
                .ttp
                .state()
                .folder_keys
                .get(&folder)
                .map(|k| k.secret_key.clone());
            search_phase(
                &mut r,
                &owner,
                true,
                &folder,
                query,
                sk.as_ref(),
                fixture,
                [8, 9, 10, 11, 12, 13, 14, 15, 16, 16, 17, 17],
            )?
        }
        Scenario::UserRegistered => {
            let user = r.setup(|| {
                client.signup(USER_EMAIL, USER_PASS)?;
                let u = client.login(USER_EMAIL, USER_PASS)?;
                owner.owner_share(&folder, USER_EMAIL)?;
                Ok(u)
            })?;
            owner_phase(&mut r, &owner, &folder, fixture, [1, 2, 2, 3, 4, 5, 6, 7])?;
            search_phase(
                &mut r,
                &user,
                false,
                &folder,
                query,
                None,
                fixture,
                [8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 18],
            )?
        }
        Scenario::UserUnregistered => {
            r.setup(|| {
                owner.owner_upload(&UploadRequest {
                    folder_id: folder.clone(),
                    items: fixture.to_vec(),
                })
            })?;
            let email = r.step(1, "DO", "name the user to share with", || {
                Ok((USER_EMAIL.to_owned(), USER_EMAIL.to_owned()))
            })?;
            r.step(2, "Web app", "accept the address", || {
                check(email.contains('@'), "address has a domain")?;
                Ok(((), format!("folder {folder}")))
            })?;
            let registered = r.step(3, "Web app → TTP", "ask whether the address has an account", || {
                let shared = owner.owner_share(&folder, &email)?;
                Ok((shared, format!("shared immediately: {shared}")))
            })?;
            r.step(4, "TTP", "check the registry", || {
                check(!registered, "user is not yet registered")?;
                check(owner.pending_shares().len() == 1, "share is pending")?;
                Ok(((), "no account; share pending".to_owned()))
            })?;
            let user = r.step(5, "TTP → DU", "email an invite; user registers; share retried", || {
                let invites = env.ttp.outbox().entries();
                check(
                    invites.iter().any(|i| i.to == email && i.folder_id.as_ref() == Some(&folder)),
                    "invite in outbox",
                )?;
                client.signup(&email, USER_PASS)?;
                let user = client.login(&email, USER_PASS)?;
                let done = owner.retry_pending_shares()?;
                check(done.len() == 1, "pending share completed")?;
                check(
                    env.storage.access(&folder, &email)?.can_read(),
                    "grant recorded",
                )?;
                Ok((user, format!("{} invite(s); user registered; folder shared", invites.len())))
            })?;
            search_phase(
                &mut r,
                &user,
                false,
                &folder,
                query,
                None,
                fixture,
                [6, 7, 8, 9, 9, 10, 11, 12, 13, 14, 15, 16],
            )?
        }
    };

    let expected: Vec<u32> = (1..=which.step_count()).collect();
    assert_eq!(r.steps.iter().map(|s| s.number).collect::<Vec<_>>(), expected);

    let wire = log.messages();
    let leaks = find_leaks(&wire, fixture, &document_keys(&env.ttp));
    Ok(Transcript {
        scenario: which,
        query: query.to_owned(),
        steps: r.steps,
        wire,
        notifications: observer.take(),
        invites: env.ttp.outbox().entries(),
        hits,
        recovered,
        leaks,
    })
}

fn document_keys(ttp: &TtpService) -> Vec<[u8; 32]> {
    ttp.state().files.values().map(|f| f.key).collect()
}

/// Checks the capture: no keyword or document key toward storage and no
/// document plaintext toward the key service.
pub fn find_leaks(wire: &[WireMessage], fixture: &[UploadItem], doc_keys: &[[u8; 32]]) -> Vec<String> {
    let mut leaks = Vec::new();
    let keywords: HashSet<String> = fixture
        .iter()
        .filter_map(|i| KeywordSet::parse(&i.keywords).ok())
        .flat_map(|s| s.into_vec())
        .collect();
    for m in wire.iter().filter(|m| m.channel == Channel::Storage && m.direction == Direction::Request) {
        for kw in &keywords {
            if m.contains(kw.as_bytes()) {
                leaks.push(format!("keyword {kw:?} in storage {} #{}", m.op, m.seq));
            }
        }
        for k in doc_keys {
            if m.contains(k) || m.contains(b64_encode(k).as_bytes()) || m.contains(hex::encode(k).as_bytes()) {
                leaks.push(format!("document key in storage {} #{}", m.op, m.seq));
            }
        }
    }
    for m in wire.iter().filter(|m| m.channel == Channel::Ttp && m.direction == Direction::Request) {
        for item in fixture.iter().filter(|i| !i.content.is_empty()) {
            let window = 32.min(item.content.len());
            let leaked = item
                .content
                .chunks(window)
                .filter(|c| c.len() == window)
                .any(|c| m.contains(c));
            if leaked {
                leaks.push(format!("plaintext of {} in key-service {} #{}", item.name, m.op, m.seq));
            }
        }
    }
    leaks
}
