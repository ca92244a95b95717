use std::sync::Arc;

use cryptosearch_core::crypto::hash_passphrase;
use cryptosearch_core::fixture::patient_records;
use cryptosearch_core::storage::{MemoryStorage, StorageBackend};
use cryptosearch_core::ttp::api::*;
use cryptosearch_core::ttp::{Outbox, RegistryStore, TtpConfig, TtpError, TtpService};
use cryptosearch_core::workflow::{Client, UploadRequest, WorkflowConfig};
use cryptosearch_net::{spawn_background, HttpKeyService, ServerHandle};

const PASS: &str = "Corr3ct#Horse";

struct Remote {
    storage: Arc<MemoryStorage>,
    ttp: Arc<TtpService>,
    server: ServerHandle,
    http: HttpKeyService,
}

fn remote() -> Remote {
    let storage = Arc::new(MemoryStorage::new());
    let ttp = Arc::new(
        TtpService::new(
            TtpConfig {
                min_rsa_bits: 2048,
                ..TtpConfig::default()
            },
            RegistryStore::Memory,
            Outbox::in_memory(),
            storage.clone(),
        )
        .unwrap(),
    );
    let server = spawn_background("127.0.0.1:0".parse().unwrap(), ttp.clone()).unwrap();
    let http = HttpKeyService::new(&server.base_url()).unwrap();
    Remote {
        storage,
        ttp,
        server,
        http,
    }
}

fn client(r: &Remote) -> Client {
    Client::new(
        Arc::new(r.http.clone()),
        r.storage.clone(),
        WorkflowConfig {
            bcrypt_cost: 4,
            rsa_bits: 2048,
            ..WorkflowConfig::default()
        },
    )
}

#[test]
fn status_codes_and_error_bodies() {
    let r = remote();
    let raw = reqwest::blocking::Client::new();
    let base = r.server.base_url();
    let hash = hash_passphrase(PASS, 4).unwrap();
    let body = serde_json::json!({ "email": "a@example.org", "passHash": hash.as_str() });

    let resp = raw.post(format!("{base}/signup")).json(&body).send().unwrap();
    assert_eq!(resp.status(), 201);
    let resp = raw.post(format!("{base}/signup")).json(&body).send().unwrap();
    assert_eq!(resp.status(), 409);
    let err: serde_json::Value = resp.json().unwrap();
    assert_eq!(err["error"], "DUPLICATE_EMAIL");
    assert_eq!(err["message"], "email id already exists");

    let resp = raw
        .post(format!("{base}/login"))
        .json(&serde_json::json!({ "email": "a@example.org", "passphrase": "nope" }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 401);
    let err: serde_json::Value = resp.json().unwrap();
    assert_eq!(err["message"], "Incorrect Passphrase Provided");

    let resp = raw
        .post(format!("{base}/keys/setup"))
        .json(&serde_json::json!({ "n": 1 }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 401);

    let login: serde_json::Value = raw
        .post(format!("{base}/login"))
        .json(&serde_json::json!({ "email": "a@example.org", "passphrase": PASS }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let token = login["token"].as_str().unwrap();
    let keys: serde_json::Value = raw
        .post(format!("{base}/keys/setup"))
        .bearer_auth(token)
        .json(&serde_json::json!({ "n": 2 }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(keys["documentKeys"].as_array().unwrap().len(), 2);
    assert!(keys["documentKeys"][0]["refNum"].is_u64());
    assert_eq!(keys["secretKey"].as_str().unwrap().len(), 64);

    let folder = r.storage.create_folder("a@example.org", "f").unwrap();
    let file = r.storage.upload("a@example.org", &folder, "x", "x", b"x").unwrap();
    let resp = raw
        .post(format!("{base}/keys/register"))
        .bearer_auth(token)
        .json(&serde_json::json!({
            "folderId": folder,
            "secretKey": keys["secretKey"],
            "bindings": [{ "fileId": file, "refNum": keys["documentKeys"][0]["refNum"] }],
            "indexFileId": "1index",
        }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 204);

    let resp = raw
        .post(format!("{base}/trapdoor"))
        .bearer_auth(token)
        .json(&serde_json::json!({ "folderId": folder, "keyword": "Cold" }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), 200);
    let td: serde_json::Value = resp.json().unwrap();
    assert_eq!(td["trapdoor"].as_str().unwrap().len(), 8);

    let resp = raw
        .get(format!("{base}/users/exists"))
        .query(&[("email", "nobody@example.org"), ("folderId", folder.as_str())])
        .send()
        .unwrap();
    let v: serde_json::Value = resp.json().unwrap();
    assert_eq!(v["registered"], false);
    assert_eq!(r.ttp.outbox().len(), 1);

    let resp = raw.get(format!("{base}/health")).send().unwrap();
    assert_eq!(resp.text().unwrap(), "ok");
}

#[test]
fn errors_survive_the_round_trip() {
    let r = remote();
    let c = client(&r);
    c.signup("a@example.org", PASS).unwrap();
    assert_eq!(
        c.signup("a@example.org", PASS).unwrap_err().to_string(),
        "email id already exists"
    );
    let err = r
        .http
        .login(&LoginRequest {
            email: "a@example.org".into(),
            passphrase: "bad".into(),
        })
        .unwrap_err();
    assert_eq!(err, TtpError::IncorrectPassphrase);
    let err = r
        .http
        .setup_keys("forged", &SetupKeysRequest { n: 1, folder_id: None })
        .unwrap_err();
    assert_eq!(err, TtpError::Unauthenticated);
    let err = r
        .http
        .user_exists(&UserExistsQuery {
            email: "x".into(),
            folder_id: None,
        })
        .unwrap_err();
    assert!(matches!(err, TtpError::InvalidEmail(_)));
}

#[test]
fn full_workflow_over_http() {
    let r = remote();
    let c = client(&r);
    c.signup("owner@example.org", PASS).unwrap();
    c.signup("user@example.org", PASS).unwrap();
    let owner = c.login("owner@example.org", PASS).unwrap();
    let folder = owner.create_folder("EHR").unwrap();
    let ids = owner
        .owner_upload(&UploadRequest {
            folder_id: folder.clone(),
            items: patient_records(),
        })
        .unwrap();
    assert!(owner.owner_share(&folder, "user@example.org").unwrap());
    let user = c.login("user@example.org", PASS).unwrap();
    let found = user.user_search(&folder, "Diabetes").unwrap().file_ids();
    assert_eq!(found, vec![ids[0].clone(), ids[2].clone()]);
    for (id, item) in ids.iter().zip(patient_records()) {
        assert_eq!(user.user_download(id).unwrap(), item.content);
    }
}

#[test]
fn concurrent_clients() {
    let r = remote();
    let c = client(&r);
    c.signup("o@example.org", PASS).unwrap();
    let token = c.login("o@example.org", PASS).unwrap().token().to_owned();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let http = r.http.clone();
            let token = token.clone();
            std::thread::spawn(move || {
                http.setup_keys(&token, &SetupKeysRequest { n: 10, folder_id: None })
                    .unwrap()
                    .document_keys
                    .into_iter()
                    .map(|k| k.ref_num)
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    let mut all: Vec<u64> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), 80);
}
