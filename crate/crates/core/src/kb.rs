//! Interned entity/type identifiers and knowledge-base snapshots.
//!
//! A [`Kb`] owns the two symbol tables; every [`KbSnapshot`] loaded through it
//! carries the owning table's tag so that snapshots from unrelated tables are
//! never compared.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};
use crate::io_util;

/// A dense integer identifier backed by a [`Vocab`].
pub trait Id: Copy + Eq + Ord + Hash + fmt::Debug {
    const KIND: &'static str;
    fn from_index(index: usize) -> Self;
    fn index(self) -> usize;
}

macro_rules! dense_id {
    ($name:ident, $kind:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl Id for $name {
            const KIND: &'static str = $kind;

            fn from_index(index: usize) -> Self {
                $name(u32::try_from(index).expect("identifier space exhausted"))
            }

            fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}#{}", $kind, self.0)
            }
        }
    };
}

dense_id!(EntityId, "entity");
dense_id!(TypeId, "type");

/// Bijection between external symbols and ids contiguous from 0.
#[derive(Debug, Clone)]
pub struct Vocab<I> {
    symbols: Vec<String>,
    lookup: HashMap<String, I>,
}

impl<I: Id> Default for Vocab<I> {
    fn default() -> Self {
        Vocab {
            symbols: Vec::new(),
            lookup: HashMap::new(),
        }
    }
}

impl<I: Id> Vocab<I> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_symbols<S: AsRef<str>>(symbols: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Self::new();
        for s in symbols {
            vocab.intern(s.as_ref());
        }
        vocab
    }

    pub fn intern(&mut self, symbol: &str) -> I {
        if let Some(&id) = self.lookup.get(symbol) {
            return id;
        }
        let id = I::from_index(self.symbols.len());
        self.symbols.push(symbol.to_string());
        self.lookup.insert(symbol.to_string(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<I> {
        self.lookup.get(symbol).copied()
    }

    /// Like [`Vocab::get`], but reports a vocabulary error for unknown symbols.
    pub fn require(&self, symbol: &str) -> Result<I> {
        self.get(symbol).ok_or_else(|| KbcError::Vocabulary {
            kind: I::KIND,
            symbol: symbol.to_string(),
        })
    }

    pub fn symbol(&self, id: I) -> &str {
        &self.symbols[id.index()]
    }

    pub fn contains_id(&self, id: I) -> bool {
        id.index() < self.symbols.len()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = I> + '_ {
        (0..self.symbols.len()).map(I::from_index)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// What to do with symbols not yet in the vocabulary while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VocabMode {
    #[default]
    Extend,
    Reject,
}

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// The entity and type symbol tables shared by a family of snapshots.
#[derive(Debug)]
pub struct Kb {
    tag: u64,
    pub entities: Vocab<EntityId>,
    pub types: Vocab<TypeId>,
}

impl Default for Kb {
    fn default() -> Self {
        Kb::new()
    }
}

impl Kb {
    pub fn new() -> Self {
        Kb {
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
            entities: Vocab::new(),
            types: Vocab::new(),
        }
    }

    pub fn with_vocabs(entities: Vocab<EntityId>, types: Vocab<TypeId>) -> Self {
        Kb {
            entities,
            types,
            ..Kb::new()
        }
    }

    /// Interns a stream of `(entity, type)` symbol pairs into a snapshot.
    /// Duplicate pairs collapse to a single fact.
    pub fn load_snapshot<I, E, T>(&mut self, label: &str, facts: I, mode: VocabMode) -> Result<KbSnapshot>
    where
        I: IntoIterator<Item = (E, T)>,
        E: AsRef<str>,
        T: AsRef<str>,
    {
        let mut pairs = Vec::new();
        for (e, t) in facts {
            let (e, t) = (e.as_ref(), t.as_ref());
            let pair = match mode {
                VocabMode::Extend => (self.entities.intern(e), self.types.intern(t)),
                VocabMode::Reject => (self.entities.require(e)?, self.types.require(t)?),
            };
            pairs.push(pair);
        }
        Ok(KbSnapshot::from_pairs(label, self.tag, pairs))
    }

    pub fn load_snapshot_file(&mut self, path: &Path, label: &str, mode: VocabMode) -> Result<KbSnapshot> {
        let reader = io_util::open(path)?;
        let facts = read_facts(reader, &path.display().to_string())?;
        self.load_snapshot(label, facts, mode)
    }

    /// Builds a snapshot directly from already-interned ids.
    pub fn snapshot_from_ids(&self, label: &str, pairs: impl IntoIterator<Item = (EntityId, TypeId)>) -> Result<KbSnapshot> {
        let pairs: Vec<_> = pairs.into_iter().collect();
        for &(e, t) in &pairs {
            self.check_ids(e, t)?;
        }
        Ok(KbSnapshot::from_pairs(label, self.tag, pairs))
    }

    fn check_ids(&self, e: EntityId, t: TypeId) -> Result<()> {
        if !self.entities.contains_id(e) {
            return Err(KbcError::Domain(format!("{e} out of range (|E| = {})", self.entities.len())));
        }
        if !self.types.contains_id(t) {
            return Err(KbcError::Domain(format!("{t} out of range (|T| = {})", self.types.len())));
        }
        Ok(())
    }

    fn check_snapshot(&self, snapshot: &KbSnapshot) -> Result<()> {
        if snapshot.kb_tag != self.tag {
            return Err(KbcError::Domain(format!(
                "snapshot `{}` was not loaded against this vocabulary",
                snapshot.label
            )));
        }
        Ok(())
    }

    /// Checked membership query.
    pub fn contains(&self, snapshot: &KbSnapshot, e: EntityId, t: TypeId) -> Result<bool> {
        self.check_snapshot(snapshot)?;
        self.check_ids(e, t)?;
        Ok(snapshot.contains(e, t))
    }

    /// Facts present in `test` but not in `train`. Deletions are ignored.
    pub fn diff_snapshots(&self, train: &KbSnapshot, test: &KbSnapshot) -> Result<Vec<(EntityId, TypeId)>> {
        self.check_snapshot(train)?;
        self.check_snapshot(test)?;
        diff_snapshots(train, test)
    }
}

/// An immutable set of observed `(entity, type)` facts.
#[derive(Debug, Clone)]
pub struct KbSnapshot {
    label: String,
    kb_tag: u64,
    facts: Vec<(EntityId, TypeId)>,
    entity_types: Vec<Vec<TypeId>>,
    type_entities: Vec<Vec<EntityId>>,
}

impl KbSnapshot {
    fn from_pairs(label: &str, kb_tag: u64, mut facts: Vec<(EntityId, TypeId)>) -> Self {
        facts.sort_unstable();
        facts.dedup();
        let num_e = facts.iter().map(|(e, _)| e.index() + 1).max().unwrap_or(0);
        let num_t = facts.iter().map(|(_, t)| t.index() + 1).max().unwrap_or(0);
        let mut entity_types = vec![Vec::new(); num_e];
        let mut type_entities = vec![Vec::new(); num_t];
        // facts are sorted by (e, t), so both index lists come out sorted
        for &(e, t) in &facts {
            entity_types[e.index()].push(t);
            type_entities[t.index()].push(e);
        }
        KbSnapshot {
            label: label.to_string(),
            kb_tag,
            facts,
            entity_types,
            type_entities,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// All facts, sorted by `(entity, type)`.
    pub fn facts(&self) -> &[(EntityId, TypeId)] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Unchecked membership; ids the snapshot never saw are simply absent.
    pub fn contains(&self, e: EntityId, t: TypeId) -> bool {
        self.types_of(e).binary_search(&t).is_ok()
    }

    /// Observed types of `e`, ascending.
    pub fn types_of(&self, e: EntityId) -> &[TypeId] {
        self.entity_types.get(e.index()).map_or(&[], Vec::as_slice)
    }

    /// Entities observed with `t`, ascending.
    pub fn entities_of(&self, t: TypeId) -> &[EntityId] {
        self.type_entities.get(t.index()).map_or(&[], Vec::as_slice)
    }

    /// Number of facts per type; types without facts are absent.
    pub fn type_counts(&self) -> BTreeMap<TypeId, usize> {
        self.type_entities
            .iter()
            .enumerate()
            .filter(|(_, es)| !es.is_empty())
            .map(|(t, es)| (TypeId::from_index(t), es.len()))
            .collect()
    }
}

/// `test.facts \ train.facts`, sorted.
pub fn diff_snapshots(train: &KbSnapshot, test: &KbSnapshot) -> Result<Vec<(EntityId, TypeId)>> {
    if train.kb_tag != test.kb_tag {
        return Err(KbcError::Domain(format!(
            "snapshots `{}` and `{}` use different vocabularies",
            train.label, test.label
        )));
    }
    Ok(test
        .facts
        .iter()
        .copied()
        .filter(|&(e, t)| !train.contains(e, t))
        .collect())
}

/// Parses a facts TSV (`entity<TAB>type`, `#` comments, blank lines skipped).
pub fn read_facts(reader: impl BufRead, source_name: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KbcError::io(source_name, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(e), Some(t), None) if !e.is_empty() && !t.is_empty() => out.push((e.to_string(), t.to_string())),
            _ => return Err(KbcError::parse(source_name, n + 1, "expected `entity<TAB>type`")),
        }
    }
    Ok(out)
}

pub fn write_facts(mut w: impl Write, kb: &Kb, facts: &[(EntityId, TypeId)]) -> std::io::Result<()> {
    for &(e, t) in facts {
        writeln!(w, "{}\t{}", kb.entities.symbol(e), kb.types.symbol(t))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(kb: &mut Kb, pairs: &[(&str, &str)]) -> KbSnapshot {
        kb.load_snapshot("s", pairs.iter().copied(), VocabMode::Extend).unwrap()
    }

    #[test]
    fn load_deduplicates() {
        let mut kb = Kb::new();
        let s = load(&mut kb, &[("a", "/t1"), ("a", "/t1")]);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn load_empty_and_distinct() {
        let mut kb = Kb::new();
        assert!(load(&mut kb, &[]).is_empty());
        let s = load(&mut kb, &[("a", "/t1"), ("b", "/t2")]);
        assert_eq!(s.len(), 2);
        assert_eq!(kb.entities.len(), 2);
        assert_eq!(kb.types.len(), 2);
    }

    #[test]
    fn reject_mode_reports_unknown_symbol() {
        let mut kb = Kb::new();
        load(&mut kb, &[("a", "/t1")]);
        let err = kb
            .load_snapshot("s", [("b", "/t1")], VocabMode::Reject)
            .unwrap_err();
        assert!(matches!(err, KbcError::Vocabulary { kind: "entity", .. }));
    }

    #[test]
    fn contains_queries() {
        let mut kb = Kb::new();
        let s = load(&mut kb, &[("a", "t1")]);
        let b = kb.entities.intern("b");
        let (a, t1) = (kb.entities.require("a").unwrap(), kb.types.require("t1").unwrap());
        assert!(kb.contains(&s, a, t1).unwrap());
        assert!(!kb.contains(&s, b, t1).unwrap());
        let empty = load(&mut kb, &[]);
        assert!(!kb.contains(&empty, a, t1).unwrap());
        assert!(matches!(kb.contains(&s, EntityId(99), t1), Err(KbcError::Domain(_))));
    }

    #[test]
    fn diff_examples() {
        let mut kb = Kb::new();
        let train = load(&mut kb, &[("a", "t1")]);
        let test = load(&mut kb, &[("a", "t1"), ("b", "t1")]);
        let b = kb.entities.require("b").unwrap();
        let t1 = kb.types.require("t1").unwrap();
        assert_eq!(kb.diff_snapshots(&train, &test).unwrap(), vec![(b, t1)]);
        assert!(kb.diff_snapshots(&train, &train).unwrap().is_empty());
        let empty = load(&mut kb, &[]);
        assert!(kb.diff_snapshots(&train, &empty).unwrap().is_empty());

        let other = Kb::new();
        assert!(matches!(other.diff_snapshots(&train, &test), Err(KbcError::Domain(_))));
    }

    #[test]
    fn type_counts_example() {
        let mut kb = Kb::new();
        let s = load(&mut kb, &[("a", "t1"), ("b", "t1"), ("a", "t2")]);
        let counts: Vec<_> = s.type_counts().into_iter().collect();
        assert_eq!(counts, vec![(TypeId(0), 2), (TypeId(1), 1)]);
        assert!(load(&mut kb, &[]).type_counts().is_empty());
    }

    #[test]
    fn read_facts_reports_line_numbers() {
        let text = "# header\na\t/t1\n\nb /t2\n";
        let err = read_facts(text.as_bytes(), "facts.tsv").unwrap_err();
        match err {
            KbcError::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let ok = read_facts("a\t/t1\r\n# c\nb\t/t2\n".as_bytes(), "x").unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[0], ("a".to_string(), "/t1".to_string()));
    }
}
