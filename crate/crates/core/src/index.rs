//! The encrypted inverted index: trapdoor → ordered, de-duplicated FileIDs.
//!
//! The index never sees plaintext keywords. Owners insert trapdoors computed
//! with the folder key; searchers probe with trapdoors obtained from the key
//! service. One probe per query term, so search cost does not depend on how
//! many documents or entries the index holds.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexSet;
use serde_json::Value;
use thiserror::Error;

use crate::crypto::Trapdoor;
use crate::ids::FileId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("keyword set is empty")]
    EmptyKeywordSet,
    #[error("query has no terms")]
    EmptyQuery,
    #[error("No file found")]
    NoFileFound,
    #[error("malformed index: {0}")]
    MalformedIndex(String),
}

/// Keywords attached to one document (or one query), split on commas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet(Vec<String>);

impl KeywordSet {
    /// Splits on commas, trims every piece, drops empties and duplicates
    /// (first occurrence wins).
    pub fn parse(raw: &str) -> Result<Self, IndexError> {
        let mut seen = IndexSet::new();
        for piece in raw.split(',') {
            let piece = piece.trim();
            if !piece.is_empty() {
                seen.insert(piece.to_owned());
            }
        }
        if seen.is_empty() {
            return Err(IndexError::EmptyKeywordSet);
        }
        Ok(KeywordSet(seen.into_iter().collect()))
    }

    pub fn from_keywords<I, S>(keywords: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_owned())
            .collect();
        if joined.iter().any(|k| k.contains(',')) {
            return Err(IndexError::MalformedIndex("keyword contains a comma".into()));
        }
        Self::parse(&joined.join(","))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}

pub fn parse_keyword_set(raw: &str) -> Result<KeywordSet, IndexError> {
    KeywordSet::parse(raw)
}

/// One query term: the plaintext keyword stays with the searcher and is only
/// echoed back in the result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTerm {
    pub keyword: String,
    pub trapdoor: Trapdoor,
}

impl QueryTerm {
    pub fn new(keyword: impl Into<String>, trapdoor: Trapdoor) -> Self {
        QueryTerm {
            keyword: keyword.into(),
            trapdoor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Every term is answered independently.
    #[default]
    Any,
    /// Only files matching every term are returned.
    All,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordMatch {
    pub keyword: String,
    pub trapdoor: Trapdoor,
    pub file_ids: Vec<FileId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SearchResult {
    pub matches: Vec<KeywordMatch>,
}

impl SearchResult {
    /// All matched FileIDs, de-duplicated in first-seen order.
    pub fn file_ids(&self) -> Vec<FileId> {
        let mut out = IndexSet::new();
        for m in &self.matches {
            out.extend(m.file_ids.iter().cloned());
        }
        out.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    entries: HashMap<Trapdoor, IndexSet<FileId>>,
}

impl PartialEq for InvertedIndex {
    fn eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().all(|(t, ids)| {
                other
                    .entries
                    .get(t)
                    .is_some_and(|o| ids.iter().eq(o.iter()))
            })
    }
}

impl Eq for InvertedIndex {}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        InvertedIndex {
            entries: HashMap::with_capacity(n),
        }
    }

    /// Number of distinct trapdoors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn posting_count(&self) -> usize {
        self.entries.values().map(IndexSet::len).sum()
    }

    pub fn trapdoors(&self) -> impl Iterator<Item = &Trapdoor> {
        self.entries.keys()
    }

    pub fn contains_file(&self, file_id: &FileId) -> bool {
        self.entries.values().any(|ids| ids.contains(file_id))
    }

    /// Records `file_id` under one trapdoor. Returns false if it was already there.
    pub fn insert(&mut self, trapdoor: Trapdoor, file_id: FileId) -> bool {
        self.entries.entry(trapdoor).or_default().insert(file_id)
    }

    pub fn add_document<'a, I>(&mut self, trapdoors: I, file_id: &FileId)
    where
        I: IntoIterator<Item = &'a Trapdoor>,
    {
        for t in trapdoors {
            if let Some(ids) = self.entries.get_mut(t) {
                ids.insert(file_id.clone());
            } else {
                self.insert(t.clone(), file_id.clone());
            }
        }
    }

    /// Drops `file_id` everywhere and prunes trapdoors left without files.
    pub fn remove_file(&mut self, file_id: &FileId) {
        self.entries.retain(|_, ids| {
            ids.shift_remove(file_id);
            !ids.is_empty()
        });
    }

    pub fn lookup(&self, trapdoor: &Trapdoor) -> Option<impl Iterator<Item = &FileId>> {
        self.entries.get(trapdoor).map(|ids| ids.iter())
    }

    pub fn search(&self, terms: &[QueryTerm]) -> Result<SearchResult, IndexError> {
        self.search_with(terms, SearchMode::Any)
    }

    pub fn search_with(&self, terms: &[QueryTerm], mode: SearchMode) -> Result<SearchResult, IndexError> {
        if terms.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        let mut matches: Vec<KeywordMatch> = terms
            .iter()
            .filter_map(|term| {
                self.entries.get(&term.trapdoor).map(|ids| KeywordMatch {
                    keyword: term.keyword.clone(),
                    trapdoor: term.trapdoor.clone(),
                    file_ids: ids.iter().cloned().collect(),
                })
            })
            .collect();

        if mode == SearchMode::All {
            if matches.len() < terms.len() {
                return Err(IndexError::NoFileFound);
            }
            let mut common: IndexSet<FileId> = matches[0].file_ids.iter().cloned().collect();
            for m in &matches[1..] {
                common.retain(|id| m.file_ids.contains(id));
            }
            for m in &mut matches {
                m.file_ids.retain(|id| common.contains(id));
            }
            matches.retain(|m| !m.file_ids.is_empty());
        }

        if matches.is_empty() {
            return Err(IndexError::NoFileFound);
        }
        Ok(SearchResult { matches })
    }

    /// Canonical compact JSON: keys sorted, `{"<trapdoor>":["<fileId>",...]}`.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let sorted: BTreeMap<&str, Vec<&str>> = self
            .entries
            .iter()
            .map(|(t, ids)| (t.as_str(), ids.iter().map(FileId::as_str).collect()))
            .collect();
        serde_json::to_vec(&sorted).expect("string map always serializes")
    }

    /// Accepts any key order and silently drops duplicate FileIDs.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let value: Value =
            serde_json::from_slice(bytes).map_err(|e| IndexError::MalformedIndex(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(IndexError::MalformedIndex("expected a JSON object".into()));
        };
        let mut index = InvertedIndex::with_capacity(map.len());
        for (key, ids) in map {
            let trapdoor =
                Trapdoor::parse(&key).map_err(|e| IndexError::MalformedIndex(e.to_string()))?;
            let Value::Array(ids) = ids else {
                return Err(IndexError::MalformedIndex(format!("entry {key} is not an array")));
            };
            for id in ids {
                match id {
                    Value::String(s) if !s.is_empty() => {
                        index.insert(trapdoor.clone(), FileId::new(s));
                    }
                    other => {
                        return Err(IndexError::MalformedIndex(format!(
                            "entry {key} holds a non-FileID value {other}"
                        )))
                    }
                }
            }
        }
        Ok(index)
    }
}

pub fn serialize(index: &InvertedIndex) -> Vec<u8> {
    index.to_json_bytes()
}

pub fn deserialize(bytes: &[u8]) -> Result<InvertedIndex, IndexError> {
    InvertedIndex::from_json_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_secret_key, encrypt_keyword, SecretKey};
    use proptest::prelude::*;

    fn sk() -> SecretKey {
        derive_secret_key(&[1; 32], "test", &[2; 16], &[3; 16]).unwrap()
    }

    fn td(w: &str) -> Trapdoor {
        encrypt_keyword(w, &sk()).unwrap()
    }

    fn term(w: &str) -> QueryTerm {
        QueryTerm::new(w, td(w))
    }

    fn fid(s: &str) -> FileId {
        FileId::new(s)
    }

    #[test]
    fn parse_keyword_sets() {
        assert_eq!(
            KeywordSet::parse("Aliana Lucy, High Blood Pressure").unwrap().into_vec(),
            vec!["Aliana Lucy", "High Blood Pressure"]
        );
        assert_eq!(KeywordSet::parse("Diabetes").unwrap().into_vec(), vec!["Diabetes"]);
        assert_eq!(KeywordSet::parse(" , ,"), Err(IndexError::EmptyKeywordSet));
        assert_eq!(
            KeywordSet::parse("a, b ,a,,c").unwrap().into_vec(),
            vec!["a", "b", "c"]
        );
    }

    #[test]
    fn same_keyword_two_files_share_an_entry() {
        let mut idx = InvertedIndex::new();
        idx.add_document([&td("Stroke")], &fid("p4"));
        idx.add_document([&td("Stroke")], &fid("p5"));
        assert_eq!(idx.len(), 1);
        let ids: Vec<_> = idx.lookup(&td("Stroke")).unwrap().cloned().collect();
        assert_eq!(ids, vec![fid("p4"), fid("p5")]);
    }

    #[test]
    fn add_is_idempotent() {
        let mut idx = InvertedIndex::new();
        idx.add_document([&td("x")], &fid("f"));
        let snapshot = idx.clone();
        idx.add_document([&td("x")], &fid("f"));
        assert_eq!(idx, snapshot);
        assert_eq!(idx.posting_count(), 1);
    }

    #[test]
    fn search_union_and_no_file_found() {
        let mut idx = InvertedIndex::new();
        idx.add_document([&td("Diabetes"), &td("MCN1573")], &fid("p1"));
        idx.add_document([&td("Diabetes")], &fid("p3"));
        let r = idx.search(&[term("Diabetes")]).unwrap();
        assert_eq!(r.file_ids(), vec![fid("p1"), fid("p3")]);
        assert_eq!(r.matches[0].keyword, "Diabetes");

        let r = idx.search(&[term("MCN1573"), term("Kidney Problems")]).unwrap();
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.file_ids(), vec![fid("p1")]);

        assert_eq!(idx.search(&[term("Kidney Problems")]), Err(IndexError::NoFileFound));
        assert_eq!(idx.search(&[]), Err(IndexError::EmptyQuery));
    }

    #[test]
    fn conjunctive_mode_intersects() {
        let mut idx = InvertedIndex::new();
        idx.add_document([&td("Diabetes"), &td("MCN1573")], &fid("p1"));
        idx.add_document([&td("Diabetes")], &fid("p3"));
        let r = idx
            .search_with(&[term("Diabetes"), term("MCN1573")], SearchMode::All)
            .unwrap();
        assert_eq!(r.file_ids(), vec![fid("p1")]);
        assert_eq!(
            idx.search_with(&[term("Diabetes"), term("Nope")], SearchMode::All),
            Err(IndexError::NoFileFound)
        );
    }

    #[test]
    fn remove_prunes_empty_entries() {
        let mut idx = InvertedIndex::new();
        idx.add_document([&td("Diabetes"), &td("PID202295894")], &fid("p1"));
        idx.add_document([&td("Diabetes")], &fid("p3"));
        idx.remove_file(&fid("p3"));
        assert_eq!(idx.lookup(&td("Diabetes")).unwrap().count(), 1);
        idx.remove_file(&fid("p1"));
        assert!(idx.is_empty());
        assert_eq!(idx.search(&[term("PID202295894")]), Err(IndexError::NoFileFound));

        let mut empty = InvertedIndex::new();
        empty.remove_file(&fid("zz"));
        assert!(empty.is_empty());
    }

    #[test]
    fn empty_index_serializes_to_braces() {
        assert_eq!(InvertedIndex::new().to_json_bytes(), b"{}");
        assert!(InvertedIndex::from_json_bytes(b"{}").unwrap().is_empty());
    }

    #[test]
    fn single_entry_shape() {
        let mut idx = InvertedIndex::new();
        idx.insert(Trapdoor::parse("392d23a9b79085eec4").unwrap(), fid("17pek60jXU_aiQpiP_0XA0cH5Wa4coFm"));
        assert_eq!(
            String::from_utf8(idx.to_json_bytes()).unwrap(),
            r#"{"392d23a9b79085eec4":["17pek60jXU_aiQpiP_0XA0cH5Wa4coFm"]}"#
        );
    }

    #[test]
    fn loads_pretty_printed_index_with_duplicates() {
        let doc = r#"{
            "3c3636a3a08d94f4": [
                "17EKMJcf0-NF8D05WZrsYy82Ee6IYzeKy",
                "1xsjqCncks6d74ZFv3F47EGG1ZpCQ011X",
                "17EKMJcf0-NF8D05WZrsYy82Ee6IYzeKy"
            ],
            "2a3a24b1ac8b90f3d8c7a928f0a53010129a4c": [
                "1tq9Nm070snaRT4w8xyBi00LjUKJ54qYs"
            ]
        }"#;
        let idx = InvertedIndex::from_json_bytes(doc.as_bytes()).unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(idx.posting_count(), 3);
        let canonical = String::from_utf8(idx.to_json_bytes()).unwrap();
        assert!(canonical.starts_with(r#"{"2a3a24b1ac8b90f3d8c7a928f0a53010129a4c""#));
    }

    #[test]
    fn rejects_malformed_documents() {
        for bad in [
            &b"[1,2]"[..],
            b"not json",
            br#"{"abcd": "x"}"#,
            br#"{"abcd": [1]}"#,
            br#"{"abcd": [""]}"#,
            br#"{"XYZ": ["a"]}"#,
            br#"{"abc": ["a"]}"#,
        ] {
            assert!(
                matches!(InvertedIndex::from_json_bytes(bad), Err(IndexError::MalformedIndex(_))),
                "{}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    fn arb_index() -> impl Strategy<Value = InvertedIndex> {
        prop::collection::vec(
            (prop::collection::vec(any::<u8>(), 1..12), prop::collection::vec("[A-Za-z0-9_-]{1,8}", 1..5)),
            0..30,
        )
        .prop_map(|entries| {
            let mut idx = InvertedIndex::new();
            for (key, ids) in entries {
                let t = Trapdoor::parse(&hex::encode(key)).unwrap();
                for id in ids {
                    idx.insert(t.clone(), FileId::new(id));
                }
            }
            idx
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_is_identity(idx in arb_index()) {
            let bytes = idx.to_json_bytes();
            let back = InvertedIndex::from_json_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &idx);
            prop_assert_eq!(back.to_json_bytes(), bytes);
        }

        #[test]
        fn remove_undoes_add_of_fresh_file(idx in arb_index(),
                                           keys in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..6), 1..4)) {
            let fresh = FileId::new("not-in-arb-index-because-too-long");
            let mut changed = idx.clone();
            let trapdoors: Vec<Trapdoor> = keys.iter().map(|k| Trapdoor::parse(&hex::encode(k)).unwrap()).collect();
            changed.add_document(&trapdoors, &fresh);
            prop_assert!(changed.contains_file(&fresh));
            changed.remove_file(&fresh);
            prop_assert_eq!(changed, idx);
        }
    }
}
