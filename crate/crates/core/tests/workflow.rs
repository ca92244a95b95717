mod common;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use cryptosearch_core::crypto::{CryptoError, WrappedKey};
use cryptosearch_core::fixture::{patient_records, symptom_documents};
use cryptosearch_core::storage::{
    Access, FileEntry, FolderInfo, MemoryStorage, ShareGrant, StorageBackend, StorageError,
};
use cryptosearch_core::ttp::TtpError;
use cryptosearch_core::workflow::capture::{Channel, RecordingStorage, WireLog};
use cryptosearch_core::workflow::{ErrorKind, Stage, UploadItem, UploadRequest, WorkflowError};
use cryptosearch_core::{FileId, FolderId};

fn names_for(w: &World, s: &cryptosearch_core::UserSession, folder: &FolderId, q: &str) -> BTreeSet<String> {
    let ids = s.user_search(folder, q).unwrap().file_ids();
    let listing = w.storage.list_folder(folder, OWNER).unwrap();
    ids.iter()
        .map(|id| listing.iter().find(|e| &e.file_id == id).unwrap().name.clone())
        .collect()
}

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn upload_patients(w: &World) -> (cryptosearch_core::UserSession, FolderId, Vec<FileId>) {
    let owner = w.session(OWNER);
    let folder = owner.create_folder("EHR").unwrap();
    let ids = owner
        .owner_upload(&UploadRequest {
            folder_id: folder.clone(),
            items: patient_records(),
        })
        .unwrap();
    (owner, folder, ids)
}

#[test]
fn patient_queries_return_exact_sets() {
    let w = World::new();
    let (owner, folder, _) = upload_patients(&w);
    assert_eq!(names_for(&w, &owner, &folder, "PID202295894"), set(&["Patient 1.pdf"]));
    assert_eq!(names_for(&w, &owner, &folder, "MCN1573"), set(&["Patient 1.pdf"]));
    assert_eq!(names_for(&w, &owner, &folder, "Aliana Lucy"), set(&["Patient 2.pdf"]));
    assert_eq!(names_for(&w, &owner, &folder, "Diabetes"), set(&["Patient 1.pdf", "Patient 3.pdf"]));
    assert_eq!(names_for(&w, &owner, &folder, "Stroke"), set(&["Patient 4.pdf", "Patient 5.pdf"]));
    let miss = owner.user_search(&folder, "Kidney Problems").unwrap_err();
    assert!(matches!(miss, WorkflowError::NoFileFound));
    assert_eq!(miss.to_string(), "No file found");
    assert_eq!(miss.kind(), ErrorKind::NotFound);
}

#[test]
fn index_shape_after_patient_upload() {
    let w = World::new();
    let (owner, folder, ids) = upload_patients(&w);
    let index = owner.fetch_index(&folder).unwrap();
    // PID, MCN, Diabetes, Aliana Lucy, High Blood Pressure, Stroke
    assert_eq!(index.len(), 6);
    let p1_entries = index.trapdoors().filter(|t| index.lookup(t).unwrap().any(|f| f == &ids[0])).count();
    assert_eq!(p1_entries, 3);
    let stroke = owner.request_trapdoor(&folder, "Stroke").unwrap();
    let files: Vec<_> = index.lookup(&stroke).unwrap().cloned().collect();
    assert_eq!(files, vec![ids[3].clone(), ids[4].clone()]);
}

#[test]
fn symptom_documents_postings() {
    let w = World::new();
    let owner = w.session(OWNER);
    let folder = owner.create_folder("symptoms").unwrap();
    owner
        .owner_upload(&UploadRequest {
            folder_id: folder.clone(),
            items: symptom_documents(),
        })
        .unwrap();
    assert_eq!(names_for(&w, &owner, &folder, "Cold"), set(&["D5.pdf", "D7.pdf"]));
    assert_eq!(
        names_for(&w, &owner, &folder, "Headache"),
        set(&["D3.pdf", "D5.pdf", "D7.pdf", "D10.pdf"])
    );
}

#[test]
fn upload_notifications_follow_the_four_stages() {
    let w = World::new();
    upload_patients(&w);
    let stages = w.observer.stages();
    let mut expected = vec![Stage::SecretKeyGenerated];
    expected.extend([Stage::FileUploaded; 5]);
    expected.extend([Stage::IndexGenerated, Stage::FilesRetrieved]);
    assert_eq!(stages, expected);
}

#[test]
fn upload_preconditions() {
    let w = World::new();
    let owner = w.session(OWNER);
    let folder = owner.create_folder("f").unwrap();
    let empty = owner.owner_upload(&UploadRequest { folder_id: folder.clone(), items: vec![] });
    assert!(matches!(empty, Err(WorkflowError::EmptyUpload)));
    let bad = owner.owner_upload(&UploadRequest {
        folder_id: folder.clone(),
        items: vec![UploadItem::new("a", "x", b"a".to_vec(), " , ,")],
    });
    assert!(matches!(bad, Err(WorkflowError::InvalidKeywords { .. })));
    // Nothing was stored for the rejected requests.
    assert!(w.storage.list_folder(&folder, OWNER).unwrap().is_empty());

    let ids = owner
        .owner_upload(&UploadRequest {
            folder_id: folder.clone(),
            items: vec![
                UploadItem::new("quiet", "x", b"unsearchable".to_vec(), ""),
                UploadItem::new("loud", "x", b"searchable".to_vec(), "tag"),
            ],
        })
        .unwrap();
    let index = owner.fetch_index(&folder).unwrap();
    assert!(!index.contains_file(&ids[0]));
    assert!(index.contains_file(&ids[1]));
    assert_eq!(owner.user_download(&ids[0]).unwrap(), b"unsearchable");
}

#[test]
fn search_without_index_is_an_error() {
    let w = World::new();
    let owner = w.session(OWNER);
    let folder = owner.create_folder("f").unwrap();
    let err = owner.user_search(&folder, "anything").unwrap_err();
    assert!(matches!(err, WorkflowError::IndexMissing(ref f) if *f == folder));
    assert_eq!(err.kind(), ErrorKind::NotFound);
}

#[test]
fn download_requires_a_grant() {
    let w = World::new();
    let (owner, folder, ids) = upload_patients(&w);
    let user = w.session(USER);
    let err = user.user_download(&ids[0]).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::AccessDenied);
    let err = user.user_search(&folder, "Diabetes").unwrap_err();
    assert_eq!(err.kind(), ErrorKind::AccessDenied);

    assert!(owner.owner_share(&folder, USER).unwrap());
    assert!(owner.owner_share(&folder, USER).unwrap());
    assert_eq!(w.storage.grants(&folder).unwrap().len(), 1);
    assert_eq!(user.user_download(&ids[0]).unwrap(), patient_records()[0].content);
    assert_eq!(names_for(&w, &user, &folder, "Diabetes"), set(&["Patient 1.pdf", "Patient 3.pdf"]));
}

#[test]
fn sharing_with_an_unregistered_address_invites_then_retries() {
    let w = World::new();
    let (owner, folder, _) = upload_patients(&w);
    assert!(!owner.owner_share(&folder, "New@Example.org").unwrap());
    assert!(!owner.owner_share(&folder, "new@example.org").unwrap());
    assert_eq!(w.ttp.outbox().len(), 1);
    assert_eq!(owner.pending_shares().len(), 1);
    assert!(owner.retry_pending_shares().unwrap().is_empty());
    assert_eq!(w.storage.access(&folder, "new@example.org").unwrap(), Access::None);

    let newbie = w.session("new@example.org");
    let done = owner.retry_pending_shares().unwrap();
    assert_eq!(done, vec![(folder.clone(), "new@example.org".to_owned())]);
    assert!(owner.pending_shares().is_empty());
    assert_eq!(newbie.user_search(&folder, "Stroke").unwrap().file_ids().len(), 2);
    assert!(w.observer.stages().contains(&Stage::FileShared));
}

#[test]
fn only_the_owner_can_share() {
    let w = World::new();
    let (_, folder, _) = upload_patients(&w);
    let user = w.session(USER);
    let err = user.owner_share(&folder, OTHER).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::AccessDenied);
    assert!(matches!(err, WorkflowError::Storage(StorageError::NotOwner)));
}

#[test]
fn tampered_wrapped_key_fails_to_unwrap() {
    let w = World::new();
    let (owner, _, ids) = upload_patients(&w);
    let (wk, rn) = owner.request_wrapped_key(&ids[1]).unwrap();
    let mut bytes = wk.as_bytes().to_vec();
    bytes[10] ^= 0x01;
    let err = owner.unwrap(&WrappedKey::from_bytes(bytes), rn).unwrap_err();
    assert!(matches!(err, WorkflowError::Crypto(CryptoError::Unwrap)));
    assert!(owner.unwrap(&wk, rn).is_ok());
}

#[test]
fn session_keypair_is_generated_once() {
    let w = World::new();
    let (owner, _, ids) = upload_patients(&w);
    let first = owner.keypair().unwrap().public_pem().unwrap();
    owner.user_download(&ids[0]).unwrap();
    owner.user_download(&ids[1]).unwrap();
    assert_eq!(owner.keypair().unwrap().public_pem().unwrap(), first);
    // A fresh login gets a fresh pair.
    let again = w.session(OWNER);
    assert_ne!(again.keypair().unwrap().public_pem().unwrap(), first);
}

#[test]
fn later_batches_stay_searchable_and_refresh_readers() {
    let w = World::new();
    let (owner, folder, _) = upload_patients(&w);
    let user = w.session(USER);
    assert!(owner.owner_share(&folder, USER).unwrap());
    assert_eq!(user.user_search(&folder, "Stroke").unwrap().file_ids().len(), 2);

    owner
        .owner_upload(&UploadRequest {
            folder_id: folder.clone(),
            items: vec![UploadItem::new("Patient 6.pdf", "application/pdf", b"%PDF-six".to_vec(), "Stroke, Asthma")],
        })
        .unwrap();
    // Exactly one index file remains after replacement.
    let indexes = w
        .storage
        .list_folder(&folder, OWNER)
        .unwrap()
        .into_iter()
        .filter(|e| e.name == "inverted_index.json")
        .count();
    assert_eq!(indexes, 1);
    assert_eq!(user.user_search(&folder, "Stroke").unwrap().file_ids().len(), 3);
    assert_eq!(names_for(&w, &user, &folder, "Asthma"), set(&["Patient 6.pdf"]));
    assert_eq!(names_for(&w, &user, &folder, "MCN1573"), set(&["Patient 1.pdf"]));
}

#[test]
fn search_hits_carry_names() {
    let w = World::new();
    let (owner, folder, ids) = upload_patients(&w);
    let hits = owner.search_hits(&folder, "Diabetes, Stroke").unwrap();
    let got: Vec<(&str, &str)> = hits.iter().map(|h| (h.keyword.as_str(), h.name.as_str())).collect();
    assert_eq!(
        got,
        [
            ("Diabetes", "Patient 1.pdf"),
            ("Diabetes", "Patient 3.pdf"),
            ("Stroke", "Patient 4.pdf"),
            ("Stroke", "Patient 5.pdf"),
        ]
    );
    assert_eq!(hits[0].file_id, ids[0]);
}

#[test]
fn plaintext_query_never_reaches_storage() {
    let log = WireLog::new();
    let storage = Arc::new(MemoryStorage::new());
    let l = log.clone();
    let w = World::with_storage(storage, move |s| Arc::new(RecordingStorage::new(s, l)));
    let (owner, folder, _) = upload_patients(&w);
    let user = w.session(USER);
    assert!(owner.owner_share(&folder, USER).unwrap());
    user.user_search(&folder, "Aliana Lucy").unwrap();
    let _ = user.user_search(&folder, "Kidney Problems");
    for m in log.requests_to(Channel::Storage) {
        for kw in ["Aliana Lucy", "Kidney Problems", "Diabetes", "MCN1573", "Stroke"] {
            assert!(!m.contains(kw.as_bytes()), "{kw} sent to storage in {}", m.op);
        }
    }
}

/// Storage that fails the n-th upload.
struct FlakyStorage {
    inner: Arc<MemoryStorage>,
    uploads: AtomicUsize,
    fail_at: usize,
}

impl StorageBackend for FlakyStorage {
    fn create_folder(&self, owner: &str, name: &str) -> Result<FolderId, StorageError> {
        self.inner.create_folder(owner, name)
    }
    fn folder_info(&self, f: &FolderId) -> Result<FolderInfo, StorageError> {
        self.inner.folder_info(f)
    }
    fn list_folders(&self, caller: &str) -> Result<Vec<FolderInfo>, StorageError> {
        self.inner.list_folders(caller)
    }
    fn upload(&self, caller: &str, f: &FolderId, name: &str, mime: &str, content: &[u8]) -> Result<FileId, StorageError> {
        if self.uploads.fetch_add(1, Ordering::SeqCst) + 1 == self.fail_at {
            return Err(StorageError::Io("connection reset".into()));
        }
        self.inner.upload(caller, f, name, mime, content)
    }
    fn download(&self, caller: &str, id: &FileId) -> Result<Vec<u8>, StorageError> {
        self.inner.download(caller, id)
    }
    fn delete(&self, caller: &str, id: &FileId) -> Result<(), StorageError> {
        self.inner.delete(caller, id)
    }
    fn list_folder(&self, f: &FolderId, caller: &str) -> Result<Vec<FileEntry>, StorageError> {
        self.inner.list_folder(f, caller)
    }
    fn share_folder(&self, f: &FolderId, g: &str, caller: &str) -> Result<ShareGrant, StorageError> {
        self.inner.share_folder(f, g, caller)
    }
    fn grants(&self, f: &FolderId) -> Result<Vec<ShareGrant>, StorageError> {
        self.inner.grants(f)
    }
    fn find_by_name(&self, caller: &str, f: &FolderId, name: &str) -> Result<Option<FileId>, StorageError> {
        self.inner.find_by_name(caller, f, name)
    }
    fn folder_of(&self, id: &FileId) -> Result<FolderId, StorageError> {
        self.inner.folder_of(id)
    }
}

#[test]
fn partial_failure_registers_completed_items() {
    let storage = Arc::new(MemoryStorage::new());
    let w = World::with_storage(storage, |s| {
        Arc::new(FlakyStorage { inner: s, uploads: AtomicUsize::new(0), fail_at: 3 })
    });
    let owner = w.session(OWNER);
    let folder = owner.create_folder("EHR").unwrap();
    let err = owner
        .owner_upload(&UploadRequest { folder_id: folder.clone(), items: patient_records() })
        .unwrap_err();
    let WorkflowError::Partial { completed, failed_item, source } = err else {
        panic!("expected a partial failure, got {err:?}");
    };
    assert_eq!(completed.len(), 2);
    assert_eq!(failed_item, "Patient 3.pdf");
    assert_eq!(source.kind(), ErrorKind::Internal);
    for id in &completed {
        assert!(w.ttp.file_info(id).is_some());
    }
    assert_eq!(w.ttp.state().files.len(), 2);
    // What did get stored is consistent: searchable and decryptable.
    assert_eq!(names_for(&w, &owner, &folder, "Diabetes"), set(&["Patient 1.pdf"]));
    assert_eq!(owner.user_download(&completed[1]).unwrap(), patient_records()[1].content);
}

#[test]
fn wrong_passphrase_and_weak_signup() {
    let w = World::new();
    w.session(OWNER);
    let err = w.client.login(OWNER, "Wr0ng#Pass").unwrap_err();
    assert!(matches!(err, WorkflowError::Ttp(TtpError::IncorrectPassphrase)));
    assert_eq!(err.to_string(), "Incorrect Passphrase Provided");
    assert_eq!(err.kind(), ErrorKind::Auth);
    let weak = w.client.signup(OTHER, "short").unwrap_err();
    assert_eq!(weak.kind(), ErrorKind::Usage);
    let dup = w.client.signup(OWNER, PASS).unwrap_err();
    assert_eq!(dup.to_string(), "email id already exists");
}
