//! Built-in document sets used by the scenario runner, the CLI and tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::workflow::UploadItem;

pub const PDF_MIME: &str = "application/pdf";
pub const PNG_MIME: &str = "image/png";
pub const DOCX_MIME: &str =
    "application/vnd.openxmlformats-officedocument.wordprocessingml.document";

pub const PDF_MAGIC: &[u8] = b"%PDF-";
pub const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
pub const DOCX_MAGIC: &[u8] = b"PK\x03\x04";

/// Small but structurally plausible PDF carrying `body` as its page text.
pub fn synthetic_pdf(title: &str, body: &str) -> Vec<u8> {
    let stream = format!("BT /F1 12 Tf 72 720 Td ({title}) Tj 0 -18 Td ({body}) Tj ET");
    let objects = [
        "<< /Type /Catalog /Pages 2 0 R >>".to_owned(),
        "<< /Type /Pages /Kids [3 0 R] /Count 1 >>".to_owned(),
        "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Contents 4 0 R \
         /Resources << /Font << /F1 5 0 R >> >> >>"
            .to_owned(),
        format!("<< /Length {} >>\nstream\n{stream}\nendstream", stream.len()),
        "<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>".to_owned(),
    ];
    let mut out = b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n".to_vec();
    let mut offsets = Vec::new();
    for (i, obj) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n{obj}\nendobj\n", i + 1).as_bytes());
    }
    let xref = out.len();
    out.extend_from_slice(format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1).as_bytes());
    for off in offsets {
        out.extend_from_slice(format!("{off:010} 00000 n \n").as_bytes());
    }
    out.extend_from_slice(
        format!(
            "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{xref}\n%%EOF\n",
            objects.len() + 1
        )
        .as_bytes(),
    );
    out
}

/// 1×1 PNG.
pub fn sample_png() -> Vec<u8> {
    let mut v = PNG_MAGIC.to_vec();
    v.extend_from_slice(&[
        0x00, 0x00, 0x00, 0x0d, b'I', b'H', b'D', b'R', 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
        0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1f, 0x15, 0xc4, 0x89, 0x00, 0x00, 0x00, 0x0d, b'I',
        b'D', b'A', b'T', 0x78, 0x9c, 0x63, 0x00, 0x01, 0x00, 0x00, 0x05, 0x00, 0x01, 0x0d, 0x0a,
        0x2d, 0xb4, 0x00, 0x00, 0x00, 0x00, b'I', b'E', b'N', b'D', 0xae, 0x42, 0x60, 0x82,
    ]);
    v
}

/// Leading local-file header of a DOCX (zip) archive plus a stored entry.
pub fn sample_docx() -> Vec<u8> {
    let name = b"[Content_Types].xml";
    let body = br#"<?xml version="1.0" encoding="UTF-8"?><Types xmlns="http://schemas.openxmlformats.org/package/2006/content-types"/>"#;
    let mut v = DOCX_MAGIC.to_vec();
    v.extend_from_slice(&[0x14, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]);
    v.extend_from_slice(&[0, 0, 0, 0]); // crc not checked by anything here
    v.extend_from_slice(&(body.len() as u32).to_le_bytes());
    v.extend_from_slice(&(body.len() as u32).to_le_bytes());
    v.extend_from_slice(&(name.len() as u16).to_le_bytes());
    v.extend_from_slice(&[0, 0]);
    v.extend_from_slice(name);
    v.extend_from_slice(body);
    v
}

pub fn sample_pdf() -> Vec<u8> {
    synthetic_pdf("Sample", "Lorem ipsum dolor sit amet")
}

/// The five patient records and their keyword sets.
pub fn patient_records() -> Vec<UploadItem> {
    let rows: [(&str, &str, &str); 5] = [
        (
            "Patient 1",
            "PID202295894, MCN1573, Diabetes",
            "Patient ID PID202295894. Medicare MCN1573. History: type 2 diabetes, metformin 500mg.",
        ),
        (
            "Patient 2",
            "Aliana Lucy, High Blood Pressure",
            "Name: Aliana Lucy. Presenting with hypertension, BP 160/100.",
        ),
        (
            "Patient 3",
            "Diabetes",
            "History: type 1 diabetes since childhood. Insulin pump.",
        ),
        (
            "Patient 4",
            "Stroke",
            "Admitted after ischaemic stroke. Left-side weakness.",
        ),
        (
            "Patient 5",
            "Stroke",
            "Follow-up six months after haemorrhagic stroke.",
        ),
    ];
    rows.iter()
        .map(|(name, keywords, body)| {
            UploadItem::new(
                format!("{name}.pdf"),
                PDF_MIME,
                synthetic_pdf(name, body),
                *keywords,
            )
        })
        .collect()
}

/// Ten documents D1..D10 whose keyword sets produce the postings
/// Headache → D3 D5 D7 D10, Diabetes → D2 D3, Cold → D5 D7,
/// Allergies → D2 D3 D6.
pub fn symptom_documents() -> Vec<UploadItem> {
    const POSTINGS: [(&str, &[usize]); 4] = [
        ("Headache", &[3, 5, 7, 10]),
        ("Diabetes", &[2, 3]),
        ("Cold", &[5, 7]),
        ("Allergies", &[2, 3, 6]),
    ];
    (1..=10)
        .map(|d| {
            let keywords: Vec<&str> = POSTINGS
                .iter()
                .filter(|(_, docs)| docs.contains(&d))
                .map(|(k, _)| *k)
                .collect();
            let name = format!("D{d}");
            UploadItem::new(
                format!("{name}.pdf"),
                PDF_MIME,
                synthetic_pdf(&name, &format!("record {d}")),
                keywords.join(", "),
            )
        })
        .collect()
}

/// Bounds for [`random_corpus`].
#[derive(Debug, Clone, Copy)]
pub struct CorpusShape {
    pub max_docs: usize,
    pub max_vocabulary: usize,
    pub max_keywords_per_doc: usize,
    pub max_doc_len: usize,
}

impl Default for CorpusShape {
    fn default() -> Self {
        CorpusShape {
            max_docs: 200,
            max_vocabulary: 50,
            max_keywords_per_doc: 5,
            max_doc_len: 4096,
        }
    }
}

/// A random vocabulary word: letters, digits, occasionally a space or a
/// non-ASCII letter, so multi-word and UTF-8 keywords get exercised.
pub fn random_keyword<R: Rng + ?Sized>(rng: &mut R) -> String {
    const ALPHABET: &[char] = &[
        'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r',
        's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'A', 'M', 'Q', 'Z', '0', '1', '7', '9', 'é', 'ß',
    ];
    let len = rng.gen_range(2..=12);
    let mut s: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.15) {
        s.push(' ');
        s.extend((0..rng.gen_range(1..=6)).map(|_| *ALPHABET.choose(rng).unwrap()));
    }
    s
}

/// Random documents with 1..=max keywords each drawn from a random
/// vocabulary. Keyword strings are comma-joined as a user would type them.
pub fn random_corpus<R: Rng + ?Sized>(rng: &mut R, shape: CorpusShape) -> Vec<UploadItem> {
    let vocab_len = rng.gen_range(1..=shape.max_vocabulary);
    let mut vocabulary: Vec<String> = Vec::with_capacity(vocab_len);
    while vocabulary.len() < vocab_len {
        let w = random_keyword(rng);
        if !vocabulary.contains(&w) {
            vocabulary.push(w);
        }
    }
    let docs = rng.gen_range(1..=shape.max_docs);
    (0..docs)
        .map(|i| {
            let k = rng.gen_range(1..=shape.max_keywords_per_doc.min(vocabulary.len()));
            let chosen: Vec<&str> = vocabulary
                .choose_multiple(rng, k)
                .map(String::as_str)
                .collect();
            let len = rng.gen_range(0..=shape.max_doc_len);
            let mut content = vec![0u8; len];
            rng.fill_bytes(&mut content);
            UploadItem::new(
                format!("doc-{i:03}.bin"),
                "application/octet-stream",
                content,
                chosen.join(", "),
            )
        })
        .collect()
}
