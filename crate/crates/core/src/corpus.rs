//! Claims, evidence and provenance: the data model plus line-delimited
//! manifest ingestion and persistence.
//!
//! A corpus is two manifests. The claims manifest holds one JSON object per
//! line with `id`, `caption`, `image_ref`, `label` and `split`; the evidence
//! manifest holds one object per line with `id`, `claim_id`, `modality`,
//! `content`, `provenance` and `kind`. Images are always stored by reference.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CLAIMS_FILE: &str = "claims.jsonl";
pub const EVIDENCE_FILE: &str = "evidence.jsonl";

const CLAIM_FIELDS: &[&str] = &["id", "caption", "image_ref", "label", "split"];
const EVIDENCE_FIELDS: &[&str] = &["id", "claim_id", "modality", "content", "provenance", "kind"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: I/O error: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse { path: PathBuf, line: usize, field: String, message: String },
    #[error("{path}:{line}: unknown field `{field}`")]
    UnknownField { path: PathBuf, line: usize, field: String },
    #[error("record `{id}` is invalid: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate {what} id `{id}`")]
    DuplicateId { what: &'static str, id: String },
    #[error("evidence `{evidence_id}` references unknown claim `{claim_id}`")]
    DanglingClaim { evidence_id: String, claim_id: String },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    True,
    False,
}

impl Label {
    pub fn from_bool(value: bool) -> Self {
        if value {
            Label::True
        } else {
            Label::False
        }
    }

    pub fn is_true(self) -> bool {
        self == Label::True
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Clean,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollutionKind {
    None,
    Entity,
    Support,
    Refute,
    ImageVariation,
}

impl PollutionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PollutionKind::None => "none",
            PollutionKind::Entity => "entity",
            PollutionKind::Support => "support",
            PollutionKind::Refute => "refute",
            PollutionKind::ImageVariation => "image_variation",
        }
    }

    pub fn is_text_kind(self) -> bool {
        matches!(self, PollutionKind::Entity | PollutionKind::Support | PollutionKind::Refute)
    }
}

impl fmt::Display for PollutionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An (image, caption) pair whose veracity is judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub caption: String,
    pub image_ref: String,
    pub label: Label,
    pub split: Split,
}

impl Claim {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::Invalid { id: self.id.clone(), reason: reason.to_string() };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.caption.trim().is_empty() {
            return Err(invalid("empty caption"));
        }
        if self.image_ref.is_empty() {
            return Err(invalid("empty image reference"));
        }
        Ok(())
    }
}

/// One piece of textual or visual evidence attached to a claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub id: String,
    pub claim_id: String,
    pub modality: Modality,
    /// Text payload for text evidence, an image reference for image evidence.
    pub content: String,
    pub provenance: Provenance,
    pub kind: PollutionKind,
}

impl EvidenceItem {
    pub fn is_clean(&self) -> bool {
        self.provenance == Provenance::Clean
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: String| CorpusError::Invalid { id: self.id.clone(), reason };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.content.trim().is_empty() {
            return Err(invalid(format!("empty {} content", self.modality)));
        }
        match (self.provenance, self.modality, self.kind) {
            (Provenance::Clean, _, PollutionKind::None) => Ok(()),
            (Provenance::Clean, _, kind) => Err(invalid(format!("clean evidence cannot have kind `{kind}`"))),
            (Provenance::Generated, Modality::Text, kind) if kind.is_text_kind() => Ok(()),
            (Provenance::Generated, Modality::Image, PollutionKind::ImageVariation) => Ok(()),
            (Provenance::Generated, modality, kind) => {
                Err(invalid(format!("generated {modality} evidence cannot have kind `{kind}`")))
            }
        }
    }
}

/// Ingestion options. Strict mode rejects unknown fields, lenient mode drops
/// them with a warning.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { strict: true }
    }
}

/// Immutable collection of claims and their evidence.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    claims: Vec<Claim>,
    evidence: Vec<EvidenceItem>,
    claim_index: HashMap<String, usize>,
    by_claim: Vec<Vec<usize>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.claims == other.claims && self.evidence == other.evidence
    }
}

impl Corpus {
    /// Builds a corpus, checking every type invariant plus id uniqueness and
    /// referential integrity.
    pub fn new(claims: Vec<Claim>, evidence: Vec<EvidenceItem>) -> Result<Self, CorpusError> {
        let mut claim_index = HashMap::with_capacity(claims.len());
        for (i, claim) in claims.iter().enumerate() {
            claim.validate()?;
            if claim_index.insert(claim.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId { what: "claim", id: claim.id.clone() });
            }
        }
        let mut by_claim = vec![Vec::new(); claims.len()];
        let mut seen = HashSet::with_capacity(evidence.len());
        for (i, item) in evidence.iter().enumerate() {
            item.validate()?;
            if !seen.insert(item.id.as_str()) {
                return Err(CorpusError::DuplicateId { what: "evidence", id: item.id.clone() });
            }
            let Some(&ci) = claim_index.get(&item.claim_id) else {
                return Err(CorpusError::DanglingClaim {
                    evidence_id: item.id.clone(),
                    claim_id: item.claim_id.clone(),
                });
            };
            by_claim[ci].push(i);
        }
        Ok(Corpus { claims, evidence, claim_index, by_claim })
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    pub fn evidence(&self) -> &[EvidenceItem] {
        &self.evidence
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn claim(&self, id: &str) -> Option<&Claim> {
        self.claim_index.get(id).map(|&i| &self.claims[i])
    }

    pub fn contains_claim(&self, id: &str) -> bool {
        self.claim_index.contains_key(id)
    }

    /// Evidence of one claim in manifest order.
    pub fn evidence_for<'a>(&'a self, claim_id: &str) -> impl Iterator<Item = &'a EvidenceItem> + 'a {
        let indices: &[usize] = match self.claim_index.get(claim_id) {
            Some(&ci) => &self.by_claim[ci],
            None => &[],
        };
        indices.iter().map(move |&i| &self.evidence[i])
    }

    pub fn evidence_by<'a>(
        &'a self,
        claim_id: &str,
        modality: Modality,
    ) -> impl Iterator<Item = &'a EvidenceItem> + 'a {
        self.evidence_for(claim_id).filter(move |e| e.modality == modality)
    }

    /// Number of text evidence items of a claim.
    pub fn text_count(&self, claim_id: &str) -> usize {
        self.evidence_by(claim_id, Modality::Text).count()
    }

    /// Number of image evidence items of a claim.
    pub fn image_count(&self, claim_id: &str) -> usize {
        self.evidence_by(claim_id, Modality::Image).count()
    }

    pub fn into_parts(self) -> (Vec<Claim>, Vec<EvidenceItem>) {
        (self.claims, self.evidence)
    }
}

fn parse_record<T: DeserializeOwned>(
    path: &Path,
    line_no: usize,
    line: &str,
    known: &[&str],
    opts: LoadOptions,
) -> Result<T, CorpusError> {
    let parse_err =
        |field: String, message: String| CorpusError::Parse { path: path.to_path_buf(), line: line_no, field, message };
    let mut value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| parse_err("<record>".into(), e.to_string()))?;
    let Some(map) = value.as_object_mut() else {
        return Err(parse_err("<record>".into(), "expected a JSON object".into()));
    };
    let unknown: Vec<String> = map.keys().filter(|k| !known.contains(&k.as_str())).cloned().collect();
    for field in unknown {
        if opts.strict {
            return Err(CorpusError::UnknownField { path: path.to_path_buf(), line: line_no, field });
        }
        log::warn!("{}:{line_no}: ignoring unknown field `{field}`", path.display());
        map.remove(&field);
    }
    for field in known {
        if !map.contains_key(*field) {
            return Err(parse_err(field.to_string(), "missing field".into()));
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        parse_err(field, e.into_inner().to_string())
    })
}

fn read_lines<T: DeserializeOwned>(path: &Path, known: &[&str], opts: LoadOptions) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(path, i + 1, &line, known, opts)?);
    }
    Ok(out)
}

pub fn read_claims_manifest(path: &Path, opts: LoadOptions) -> Result<Vec<Claim>, CorpusError> {
    read_lines(path, CLAIM_FIELDS, opts)
}

/// Reads an evidence manifest without resolving claims. Used for generated
/// pools, which are validated against a corpus at injection time.
pub fn read_evidence_manifest(path: &Path, opts: LoadOptions) -> Result<Vec<EvidenceItem>, CorpusError> {
    let items: Vec<EvidenceItem> = read_lines(path, EVIDENCE_FIELDS, opts)?;
    for item in &items {
        item.validate()?;
    }
    Ok(items)
}

pub fn load_corpus(claims_manifest: &Path, evidence_manifest: &Path) -> Result<Corpus, CorpusError> {
    load_corpus_with(claims_manifest, evidence_manifest, LoadOptions::default())
}

pub fn load_corpus_with(
    claims_manifest: &Path,
    evidence_manifest: &Path,
    opts: LoadOptions,
) -> Result<Corpus, CorpusError> {
    let claims = read_claims_manifest(claims_manifest, opts)?;
    let evidence = read_lines(evidence_manifest, EVIDENCE_FIELDS, opts)?;
    Corpus::new(claims, evidence)
}

/// Loads `claims.jsonl` and `evidence.jsonl` from a directory.
pub fn load_corpus_dir(dir: &Path, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    load_corpus_with(&dir.join(CLAIMS_FILE), &dir.join(EVIDENCE_FILE), opts)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("manifest records always serialize");
        w.write_all(line.as_bytes()).and_then(|_| w.write_all(b"\n")).map_err(|e| CorpusError::io(path, e))?;
    }
    w.flush().map_err(|e| CorpusError::io(path, e))
}

pub fn write_evidence_manifest(path: &Path, items: &[EvidenceItem]) -> Result<(), CorpusError> {
    write_lines(path, items)
}

pub fn write_claims_manifest(path: &Path, claims: &[Claim]) -> Result<(), CorpusError> {
    write_lines(path, claims)
}

/// Writes both manifests into `out_dir` and returns their paths.
pub fn save_corpus(corpus: &Corpus, out_dir: &Path) -> Result<(PathBuf, PathBuf), CorpusError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;
    let claims_path = out_dir.join(CLAIMS_FILE);
    let evidence_path = out_dir.join(EVIDENCE_FILE);
    write_claims_manifest(&claims_path, &corpus.claims)?;
    write_evidence_manifest(&evidence_path, &corpus.evidence)?;
    Ok((claims_path, evidence_path))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub claims: usize,
    pub clean_text: usize,
    pub generated_text: usize,
    pub clean_image: usize,
    pub generated_image: usize,
}

impl StatsRow {
    fn tally(&mut self, item: &EvidenceItem) {
        let slot = match (item.modality, item.provenance) {
            (Modality::Text, Provenance::Clean) => &mut self.clean_text,
            (Modality::Text, Provenance::Generated) => &mut self.generated_text,
            (Modality::Image, Provenance::Clean) => &mut self.clean_image,
            (Modality::Image, Provenance::Generated) => &mut self.generated_image,
        };
        *slot += 1;
    }
}

/// Per-split tallies of claims and evidence by modality and provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsTable {
    rows: BTreeMap<Split, StatsRow>,
}

impl StatsTable {
    pub fn row(&self, split: Split) -> StatsRow {
        self.rows.get(&split).copied().unwrap_or_default()
    }

    pub fn total(&self) -> StatsRow {
        self.rows.values().fold(StatsRow::default(), |acc, r| StatsRow {
            claims: acc.claims + r.claims,
            clean_text: acc.clean_text + r.clean_text,
            generated_text: acc.generated_text + r.generated_text,
            clean_image: acc.clean_image + r.clean_image,
            generated_image: acc.generated_image + r.generated_image,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,claims,clean_text,generated_text,clean_image,generated_image\n");
        for split in Split::ALL {
            let r = self.row(split);
            out.push_str(&format!(
                "{split},{},{},{},{},{}\n",
                r.claims, r.clean_text, r.generated_text, r.clean_image, r.generated_image
            ));
        }
        out
    }
}

impl fmt::Display for StatsTable {
    /// Categories as rows, splits as columns.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        type Getter = fn(&StatsRow) -> usize;
        let rows: [(&str, Getter); 5] = [
            ("Claim", |r| r.claims),
            ("Clean Text", |r| r.clean_text),
            ("Generated Text", |r| r.generated_text),
            ("Clean Image", |r| r.clean_image),
            ("Generated Image", |r| r.generated_image),
        ];
        writeln!(f, "{:<16}{:>12}{:>12}{:>12}", "", "Train", "Validation", "Test")?;
        for (name, get) in rows {
            write!(f, "{name:<16}")?;
            for split in Split::ALL {
                write!(f, "{:>12}", get(&self.row(split)))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Tallies claims and evidence per split. Evidence counts under the split of
/// the claim it belongs to.
pub fn corpus_stats(corpus: &Corpus) -> StatsTable {
    let mut rows: BTreeMap<Split, StatsRow> = Split::ALL.iter().map(|&s| (s, StatsRow::default())).collect();
    for (ci, claim) in corpus.claims.iter().enumerate() {
        let row = rows.get_mut(&claim.split).expect("all splits seeded");
        row.claims += 1;
        for &ei in &corpus.by_claim[ci] {
            row.tally(&corpus.evidence[ei]);
        }
    }
    StatsTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn claim(id: &str) -> Claim {
        Claim {
            id: id.into(),
            caption: format!("caption of {id}"),
            image_ref: format!("img/{id}.jpg"),
            label: Label::True,
            split: Split::Test,
        }
    }

    fn item(id: &str, claim_id: &str, modality: Modality, provenance: Provenance, kind: PollutionKind) -> EvidenceItem {
        EvidenceItem {
            id: id.into(),
            claim_id: claim_id.into(),
            modality,
            content: format!("content {id}"),
            provenance,
            kind,
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    const CLAIMS: &str = r#"{"id":"c1","caption":"BBC3 wins RTS award","image_ref":"img/c1.jpg","label":"true","split":"test"}
{"id":"c2","caption":"Flood in the city","image_ref":"img/c2.jpg","label":"false","split":"test"}
"#;
    const EVIDENCE: &str = r#"{"id":"e1","claim_id":"c1","modality":"text","content":"BBC Three won.","provenance":"clean","kind":"none"}
{"id":"e2","claim_id":"c1","modality":"image","content":"img/e2.jpg","provenance":"clean","kind":"none"}
{"id":"e3","claim_id":"c2","modality":"text","content":"A storm hit.","provenance":"clean","kind":"none"}
{"id":"e4","claim_id":"c2","modality":"image","content":"img/e4.jpg","provenance":"clean","kind":"none"}
"#;

    #[test]
    fn loads_fixture_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "claims.jsonl", CLAIMS);
        let e = write(dir.path(), "evidence.jsonl", EVIDENCE);
        let corpus = load_corpus(&c, &e).unwrap();
        assert_eq!(corpus.claims().len(), 2);
        for id in ["c1", "c2"] {
            assert_eq!(corpus.text_count(id), 1);
            assert_eq!(corpus.image_count(id), 1);
        }
        assert_eq!(corpus.claim("c2").unwrap().label, Label::False);
    }

    #[test]
    fn dangling_claim_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "claims.jsonl", CLAIMS);
        let e = write(
            dir.path(),
            "evidence.jsonl",
            r#"{"id":"e9","claim_id":"c999","modality":"text","content":"x","provenance":"clean","kind":"none"}"#,
        );
        let err = load_corpus(&c, &e).unwrap_err();
        assert!(matches!(err, CorpusError::DanglingClaim { .. }));
        assert!(err.to_string().contains("c999"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![claim("a"), claim("a")], vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { what: "claim", .. }));
        let ev = item("e", "a", Modality::Text, Provenance::Clean, PollutionKind::None);
        let err = Corpus::new(vec![claim("a")], vec![ev.clone(), ev]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { what: "evidence", .. }));
    }

    #[test]
    fn parse_error_reports_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "claims.jsonl",
            "{\"id\":\"c1\",\"caption\":\"x\",\"image_ref\":\"i\",\"label\":\"true\",\"split\":\"test\"}\n\
             {\"id\":\"c2\",\"caption\":\"x\",\"image_ref\":\"i\",\"label\":\"maybe\",\"split\":\"test\"}\n",
        );
        let err = read_claims_manifest(&c, LoadOptions::default()).unwrap_err();
        match err {
            CorpusError::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "label");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "claims.jsonl", r#"{"id":"c1","caption":"x","image_ref":"i","split":"test"}"#);
        let err = read_claims_manifest(&c, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, ref field, .. } if field == "label"));
    }

    #[test]
    fn unknown_fields_strict_vs_lenient() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "claims.jsonl",
            r#"{"id":"c1","caption":"x","image_ref":"i","label":"true","split":"test","source":"web"}"#,
        );
        let err = read_claims_manifest(&c, LoadOptions { strict: true }).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownField { ref field, .. } if field == "source"));
        let claims = read_claims_manifest(&c, LoadOptions { strict: false }).unwrap();
        assert_eq!(claims.len(), 1);
    }

    #[test]
    fn provenance_kind_invariants() {
        let bad = [
            item("a", "c", Modality::Text, Provenance::Clean, PollutionKind::Entity),
            item("b", "c", Modality::Text, Provenance::Generated, PollutionKind::None),
            item("c", "c", Modality::Text, Provenance::Generated, PollutionKind::ImageVariation),
            item("d", "c", Modality::Image, Provenance::Generated, PollutionKind::Support),
        ];
        for it in bad {
            assert!(it.validate().is_err(), "{it:?}");
        }
        assert!(item("e", "c", Modality::Image, Provenance::Generated, PollutionKind::ImageVariation)
            .validate()
            .is_ok());
        let mut empty = item("f", "c", Modality::Text, Provenance::Clean, PollutionKind::None);
        empty.content.clear();
        assert!(empty.validate().is_err());
    }

    #[test]
    fn empty_caption_rejected() {
        let mut c = claim("x");
        c.caption = "  ".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn stats_of_empty_corpus_are_zero() {
        let stats = corpus_stats(&Corpus::default());
        for split in Split::ALL {
            assert_eq!(stats.row(split), StatsRow::default());
        }
    }

    #[test]
    fn stats_count_provenance() {
        let mut ev = Vec::new();
        for i in 0..3 {
            ev.push(item(&format!("c{i}"), "a", Modality::Text, Provenance::Clean, PollutionKind::None));
        }
        for i in 0..2 {
            ev.push(item(&format!("g{i}"), "a", Modality::Text, Provenance::Generated, PollutionKind::Refute));
        }
        let corpus = Corpus::new(vec![claim("a")], ev).unwrap();
        let row = corpus_stats(&corpus).row(Split::Test);
        assert_eq!((row.clean_text, row.generated_text, row.clean_image, row.generated_image), (3, 2, 0, 0));
        let table = corpus_stats(&corpus).to_string();
        assert!(table.contains("Generated Text"));
    }

    #[test]
    fn unicode_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = claim("ü1");
        c.caption = "Überschwemmung in 東京 · “quoted” 🌊".into();
        let corpus = Corpus::new(vec![c.clone()], vec![]).unwrap();
        let (cp, ep) = save_corpus(&corpus, dir.path()).unwrap();
        let back = load_corpus(&cp, &ep).unwrap();
        assert_eq!(back.claims()[0].caption.as_bytes(), c.caption.as_bytes());
        assert_eq!(back, corpus);
    }
}
