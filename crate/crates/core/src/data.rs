//! Triple files, vocabularies and the encoded triple store.
//!
//! Files are UTF-8, one `head\trelation\ttail` triple per line. The labeled
//! variant (FB13/WN11 style) carries a fourth field, `1` or `-1`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Line layout of a triple file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    #[default]
    Plain,
    Labeled,
}

impl std::str::FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(TripleFormat::Plain),
            "labeled" => Ok(TripleFormat::Labeled),
            other => Err(Error::Argument(format!("unknown triple format `{other}`"))),
        }
    }
}

impl std::fmt::Display for TripleFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TripleFormat::Plain => "plain",
            TripleFormat::Labeled => "labeled",
        })
    }
}

/// A triple as read from disk, before encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    /// `Some(1)` or `Some(-1)` for labeled files.
    pub label: Option<i8>,
}

impl RawTriple {
    pub fn new(head: &str, relation: &str, tail: &str) -> Self {
        RawTriple {
            head: head.to_owned(),
            relation: relation.to_owned(),
            tail: tail.to_owned(),
            label: None,
        }
    }
}

/// Parses a stream of lines. Blank lines are skipped; everything else must
/// have exactly 3 (plain) or 4 (labeled) tab-separated, non-empty fields.
pub fn parse_triples<R: BufRead>(source: R, format: TripleFormat) -> Result<Vec<RawTriple>> {
    let expected = match format {
        TripleFormat::Plain => 3,
        TripleFormat::Labeled => 4,
    };
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {expected} tab-separated fields, found {}", fields.len()),
            });
        }
        if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("field {} is empty", pos + 1),
            });
        }
        let label = if format == TripleFormat::Labeled {
            match fields[3].trim() {
                "1" | "+1" => Some(1),
                "-1" => Some(-1),
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("label must be 1 or -1, found `{other}`"),
                    })
                }
            }
        } else {
            None
        };
        out.push(RawTriple {
            head: fields[0].to_owned(),
            relation: fields[1].to_owned(),
            tail: fields[2].to_owned(),
            label,
        });
    }
    Ok(out)
}

/// Reads and parses one triple file.
pub fn read_triples(path: &Path, format: TripleFormat) -> Result<Vec<RawTriple>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_triples(BufReader::new(file), format).map_err(|e| match e {
        Error::Parse { line, message } => Error::ParseFile {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Writes triples in the plain (or labeled, when any label is set) layout.
pub fn write_triples(path: &Path, triples: &[RawTriple]) -> Result<()> {
    let mut text = String::new();
    for t in triples {
        text.push_str(&t.head);
        text.push('\t');
        text.push_str(&t.relation);
        text.push('\t');
        text.push_str(&t.tail);
        if let Some(l) = t.label {
            text.push('\t');
            text.push_str(&l.to_string());
        }
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Dense, first-appearance-ordered ids for entities and relations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entity_ids: HashMap<String, usize>,
    entity_names: Vec<String>,
    relation_ids: HashMap<String, usize>,
    relation_names: Vec<String>,
}

impl Vocabulary {
    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<usize> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entity_names.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<&str> {
        self.relation_names.get(id).map(String::as_str)
    }

    pub fn intern_entity(&mut self, name: &str) -> usize {
        intern(&mut self.entity_ids, &mut self.entity_names, name)
    }

    pub fn intern_relation(&mut self, name: &str) -> usize {
        intern(&mut self.relation_ids, &mut self.relation_names, name)
    }
}

fn intern(ids: &mut HashMap<String, usize>, names: &mut Vec<String>, name: &str) -> usize {
    if let Some(&id) = ids.get(name) {
        return id;
    }
    let id = names.len();
    ids.insert(name.to_owned(), id);
    names.push(name.to_owned());
    id
}

/// Builds the vocabulary over every triple given, in order of first
/// appearance (head, then relation, then tail within a line).
pub fn build_vocabulary<'a, I>(triples: I) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a RawTriple>,
{
    let mut vocab = Vocabulary::default();
    let mut seen_any = false;
    for t in triples {
        seen_any = true;
        vocab.intern_entity(&t.head);
        vocab.intern_relation(&t.relation);
        vocab.intern_entity(&t.tail);
    }
    if !seen_any {
        return Err(Error::Argument("cannot build a vocabulary from zero triples".into()));
    }
    Ok(vocab)
}

/// An integer-encoded fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub h: usize,
    pub r: usize,
    pub t: usize,
}

impl Triple {
    pub const fn new(h: usize, r: usize, t: usize) -> Self {
        Triple { h, r, t }
    }
}

/// Raw (unencoded) train/valid/test splits.
#[derive(Debug, Clone, Default)]
pub struct RawSplits {
    pub train: Vec<RawTriple>,
    pub valid: Vec<RawTriple>,
    pub test: Vec<RawTriple>,
}

impl RawSplits {
    pub fn all(&self) -> impl Iterator<Item = &RawTriple> {
        self.train.iter().chain(self.valid.iter()).chain(self.test.iter())
    }
}

/// Encoded splits plus the indexes derived from them. Immutable once built.
#[derive(Debug, Clone)]
pub struct TripleStore {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    num_entities: usize,
    num_relations: usize,
    by_relation: Vec<Vec<(usize, usize)>>,
    known: HashSet<Triple>,
}

impl TripleStore {
    /// Assembles a store from already-encoded splits.
    pub fn from_splits(
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        num_entities: usize,
        num_relations: usize,
    ) -> Result<Self> {
        for t in train.iter().chain(&valid).chain(&test) {
            if t.h >= num_entities || t.t >= num_entities || t.r >= num_relations {
                return Err(Error::Index(format!(
                    "triple ({}, {}, {}) outside N_e={num_entities}, N_r={num_relations}",
                    t.h, t.r, t.t
                )));
            }
        }
        let mut by_relation = vec![Vec::new(); num_relations];
        for t in &train {
            by_relation[t.r].push((t.h, t.t));
        }
        let known = train.iter().chain(&valid).chain(&test).copied().collect();
        Ok(TripleStore {
            train,
            valid,
            test,
            num_entities,
            num_relations,
            by_relation,
            known,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    /// `(h, t)` pairs of the train triples using relation `r`.
    pub fn by_relation(&self, r: usize) -> &[(usize, usize)] {
        &self.by_relation[r]
    }

    /// Membership over train ∪ valid ∪ test.
    pub fn is_known(&self, triple: &Triple) -> bool {
        self.known.contains(triple)
    }

    pub fn known(&self) -> &HashSet<Triple> {
        &self.known
    }
}

/// Encodes raw splits against `vocab`. With `drop_negatives`, triples
/// labeled `-1` are left out of every split.
pub fn encode_dataset(raw: &RawSplits, vocab: &Vocabulary, drop_negatives: bool) -> Result<TripleStore> {
    let encode = |split: &[RawTriple]| -> Result<Vec<Triple>> {
        split
            .iter()
            .filter(|t| !(drop_negatives && t.label == Some(-1)))
            .map(|t| {
                let lookup_e = |name: &str| {
                    vocab
                        .entity_id(name)
                        .ok_or_else(|| Error::Encoding(format!("unknown entity `{name}`")))
                };
                let r = vocab
                    .relation_id(&t.relation)
                    .ok_or_else(|| Error::Encoding(format!("unknown relation `{}`", t.relation)))?;
                Ok(Triple::new(lookup_e(&t.head)?, r, lookup_e(&t.tail)?))
            })
            .collect()
    };
    TripleStore::from_splits(
        encode(&raw.train)?,
        encode(&raw.valid)?,
        encode(&raw.test)?,
        vocab.num_entities(),
        vocab.num_relations(),
    )
}

/// Paths of a dataset on disk. `valid` is optional.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: PathBuf,
    pub format: TripleFormat,
}

impl DatasetPaths {
    /// `<dir>/train.txt`, `<dir>/valid.txt`, `<dir>/test.txt`.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            train: dir.join("train.txt"),
            valid: Some(dir.join("valid.txt")),
            test: dir.join("test.txt"),
            format: TripleFormat::Plain,
        }
    }
}

/// A loaded dataset: names plus encoded triples.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub store: TripleStore,
}

impl Dataset {
    pub fn load(paths: &DatasetPaths) -> Result<Self> {
        let raw = RawSplits {
            train: read_triples(&paths.train, paths.format)?,
            valid: match &paths.valid {
                Some(p) => read_triples(p, paths.format)?,
                None => Vec::new(),
            },
            test: read_triples(&paths.test, paths.format)?,
        };
        Self::from_raw(&raw)
    }

    pub fn from_raw(raw: &RawSplits) -> Result<Self> {
        let vocab = build_vocabulary(raw.all())?;
        let store = encode_dataset(raw, &vocab, true)?;
        Ok(Dataset { vocab, store })
    }
}

/// Bernoulli corruption statistics of one relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationStat {
    /// Mean number of tails per distinct head.
    pub tph: f64,
    /// Mean number of heads per distinct tail.
    pub hpt: f64,
    pub p_corrupt_head: f64,
}

impl RelationStat {
    pub fn p_corrupt_tail(&self) -> f64 {
        self.hpt / (self.tph + self.hpt)
    }
}

/// Per-relation statistics; `None` for relations absent from train.
#[derive(Debug, Clone, Default)]
pub struct RelationStats {
    stats: Vec<Option<RelationStat>>,
}

impl RelationStats {
    pub fn get(&self, r: usize) -> Option<&RelationStat> {
        self.stats.get(r).and_then(Option::as_ref)
    }

    /// Probability of replacing the head; 0.5 when the relation has no
    /// train triples.
    pub fn p_corrupt_head(&self, r: usize) -> f64 {
        self.get(r).map_or(0.5, |s| s.p_corrupt_head)
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Overrides the head-corruption probability of `r`.
    pub fn set_p_corrupt_head(&mut self, r: usize, p: f64) {
        if r >= self.stats.len() {
            self.stats.resize(r + 1, None);
        }
        let entry = self.stats[r].get_or_insert(RelationStat {
            tph: 1.0,
            hpt: 1.0,
            p_corrupt_head: 0.5,
        });
        entry.p_corrupt_head = p;
    }
}

pub fn compute_relation_stats(store: &TripleStore) -> Result<RelationStats> {
    if store.train.is_empty() {
        return Err(Error::Argument("relation statistics need a nonempty train split".into()));
    }
    let stats = (0..store.num_relations())
        .map(|r| {
            let pairs = store.by_relation(r);
            if pairs.is_empty() {
                return None;
            }
            let heads: HashSet<usize> = pairs.iter().map(|&(h, _)| h).collect();
            let tails: HashSet<usize> = pairs.iter().map(|&(_, t)| t).collect();
            let n = pairs.len() as f64;
            let tph = n / heads.len() as f64;
            let hpt = n / tails.len() as f64;
            Some(RelationStat {
                tph,
                hpt,
                p_corrupt_head: tph / (tph + hpt),
            })
        })
        .collect();
    Ok(RelationStats { stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_plain(text: &str) -> Result<Vec<RawTriple>> {
        parse_triples(text.as_bytes(), TripleFormat::Plain)
    }

    #[test]
    fn parses_plain_line() {
        let t = parse_plain("alice\tknows\tbob\n").unwrap();
        assert_eq!(t, vec![RawTriple::new("alice", "knows", "bob")]);
    }

    #[test]
    fn parses_labeled_line() {
        let t = parse_triples("a\tr\tb\t-1\n".as_bytes(), TripleFormat::Labeled).unwrap();
        assert_eq!(t[0].label, Some(-1));
        assert_eq!(t[0].head, "a");
    }

    #[test]
    fn short_line_reports_line_number() {
        match parse_plain("a\tr") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_plain("a\tr\tb\nc\t\td") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("empty"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_label_is_rejected() {
        assert!(parse_triples("a\tr\tb\t0".as_bytes(), TripleFormat::Labeled).is_err());
    }

    #[test]
    fn vocabulary_counts() {
        let v = build_vocabulary(&[RawTriple::new("a", "r", "b")]).unwrap();
        assert_eq!((v.num_entities(), v.num_relations()), (2, 1));
        let v = build_vocabulary(&[RawTriple::new("a", "r", "a")]).unwrap();
        assert_eq!((v.num_entities(), v.num_relations()), (1, 1));
        assert!(build_vocabulary(&[]).is_err());
    }

    #[test]
    fn encode_counts_and_drops_negatives() {
        let raw = RawSplits {
            train: parse_plain("a\tr\tb\nb\tr\tc\nc\tr\td").unwrap(),
            valid: parse_plain("a\tr\tc").unwrap(),
            test: parse_plain("a\tr\td").unwrap(),
        };
        let ds = Dataset::from_raw(&raw).unwrap();
        assert_eq!(
            (ds.store.train.len(), ds.store.valid.len(), ds.store.test.len()),
            (3, 1, 1)
        );

        let labeled = RawSplits {
            train: parse_plain("a\tr\tb").unwrap(),
            valid: vec![],
            test: parse_triples("a\tr\tb\t1\nc\tr\td\t-1".as_bytes(), TripleFormat::Labeled).unwrap(),
        };
        let vocab = build_vocabulary(labeled.all()).unwrap();
        let store = encode_dataset(&labeled, &vocab, true).unwrap();
        assert_eq!(store.test.len(), 1);
        let store = encode_dataset(&labeled, &vocab, false).unwrap();
        assert_eq!(store.test.len(), 2);
    }

    #[test]
    fn encode_unknown_symbol_is_named() {
        let vocab = build_vocabulary(&[RawTriple::new("a", "r", "b")]).unwrap();
        let raw = RawSplits {
            train: vec![RawTriple::new("a", "r", "zed")],
            ..Default::default()
        };
        let err = encode_dataset(&raw, &vocab, true).unwrap_err();
        assert!(err.to_string().contains("zed"));
    }

    fn store_of(train: &[(usize, usize, usize)]) -> TripleStore {
        let ne = train.iter().map(|&(h, _, t)| h.max(t)).max().unwrap() + 1;
        let nr = train.iter().map(|&(_, r, _)| r).max().unwrap() + 1;
        let train = train.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect();
        TripleStore::from_splits(train, vec![], vec![], ne, nr).unwrap()
    }

    #[test]
    fn relation_stats_match_hand_counts() {
        // {(a,r,b),(a,r,c)}: one head with two tails.
        let s = compute_relation_stats(&store_of(&[(0, 0, 1), (0, 0, 2)])).unwrap();
        let st = s.get(0).unwrap();
        assert_eq!((st.tph, st.hpt), (2.0, 1.0));
        assert!((st.p_corrupt_head - 2.0 / 3.0).abs() < 1e-15);

        let s = compute_relation_stats(&store_of(&[(0, 0, 1)])).unwrap();
        assert_eq!(s.get(0).unwrap().p_corrupt_head, 0.5);

        // {(a,r,b),(c,r,b)}
        let s = compute_relation_stats(&store_of(&[(0, 0, 1), (2, 0, 1)])).unwrap();
        let st = s.get(0).unwrap();
        assert_eq!((st.tph, st.hpt), (1.0, 2.0));
        assert!((st.p_corrupt_head - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_relation_falls_back() {
        let s = compute_relation_stats(&store_of(&[(0, 1, 1)])).unwrap();
        assert!(s.get(0).is_none());
        assert_eq!(s.p_corrupt_head(0), 0.5);
    }

    fn arb_triples() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
        prop::collection::vec((0usize..30, 0usize..4, 0usize..30), 1..200)
    }

    fn to_text(triples: &[(usize, usize, usize)]) -> String {
        triples
            .iter()
            .map(|(h, r, t)| format!("e{h}\tr{r}\te{t}\n"))
            .collect()
    }

    proptest! {
        #[test]
        fn vocabulary_round_trips(triples in arb_triples()) {
            let raw = parse_plain(&to_text(&triples)).unwrap();
            let v = build_vocabulary(&raw).unwrap();
            for id in 0..v.num_entities() {
                prop_assert_eq!(v.entity_id(v.entity_name(id).unwrap()), Some(id));
            }
            for id in 0..v.num_relations() {
                prop_assert_eq!(v.relation_id(v.relation_name(id).unwrap()), Some(id));
            }
        }

        #[test]
        fn probabilities_are_complementary(triples in arb_triples()) {
            let s = compute_relation_stats(&store_of(&triples)).unwrap();
            for r in 0..s.len() {
                if let Some(st) = s.get(r) {
                    prop_assert!(st.tph >= 1.0 && st.hpt >= 1.0);
                    prop_assert!((st.p_corrupt_head + st.p_corrupt_tail() - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn known_agrees_with_linear_scan(
            train in arb_triples(), test in arb_triples(), probe in arb_triples()
        ) {
            let enc = |v: &[(usize, usize, usize)]| -> Vec<Triple> {
                v.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect()
            };
            let store = TripleStore::from_splits(enc(&train), vec![], enc(&test), 30, 4).unwrap();
            for &(h, r, t) in &probe {
                let q = Triple::new(h, r, t);
                let scan = store.train.iter().chain(&store.test).any(|x| *x == q);
                prop_assert_eq!(store.is_known(&q), scan);
            }
        }

        #[test]
        fn shuffled_file_gives_same_multiset(
            (triples, perm) in arb_triples().prop_flat_map(|v| {
                let n = v.len();
                (Just(v), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
            })
        ) {
            let shuffled: Vec<_> = perm.iter().map(|&i| triples[i]).collect();
            let decode = |text: String| {
                let raw = RawSplits { train: parse_plain(&text).unwrap(), ..Default::default() };
                let ds = Dataset::from_raw(&raw).unwrap();
                let mut named: Vec<(String, String, String)> = ds.store.train.iter().map(|t| (
                    ds.vocab.entity_name(t.h).unwrap().to_owned(),
                    ds.vocab.relation_name(t.r).unwrap().to_owned(),
                    ds.vocab.entity_name(t.t).unwrap().to_owned(),
                )).collect();
                named.sort();
                named
            };
            prop_assert_eq!(decode(to_text(&triples)), decode(to_text(&shuffled)));
        }
    }
}
