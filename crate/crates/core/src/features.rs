//! Entity feature vectors: observed-type indicators plus tf-idf text blocks,
//! concatenated in a fixed `T, D, W` layout, and one-hot type vectors.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};
use crate::io_util::{escape_text, fmt_g9, unescape_text};
use crate::kb::{EntityId, Id, KbSnapshot, TypeId, Vocab, VocabMode};
use crate::sparse::SparseVector;

pub const DEFAULT_MIN_DF: usize = 2;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenStats {
    pub index: u32,
    pub document_frequency: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TextVocabulary {
    tokens: HashMap<String, TokenStats>,
    num_documents: usize,
}

impl TextVocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_documents(&self) -> usize {
        self.num_documents
    }

    pub fn get(&self, token: &str) -> Option<TokenStats> {
        self.tokens.get(token).copied()
    }

    /// Smoothed inverse document frequency `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, stats: TokenStats) -> f64 {
        ((1.0 + self.num_documents as f64) / (1.0 + stats.document_frequency as f64)).ln() + 1.0
    }
}

/// Builds the token vocabulary of a corpus with at most one document per
/// entity. Tokens seen in fewer than `min_df` documents are dropped; the
/// survivors are indexed in lexicographic order.
pub fn build_text_vocabulary<'a>(
    corpus: impl IntoIterator<Item = (EntityId, &'a str)>,
    min_df: usize,
) -> Result<TextVocabulary> {
    let mut seen = HashSet::new();
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut num_documents = 0;
    for (e, text) in corpus {
        if !seen.insert(e) {
            return Err(KbcError::Input(format!("duplicate document for {e}")));
        }
        num_documents += 1;
        let distinct: HashSet<String> = tokenize(text).collect();
        for token in distinct {
            *df.entry(token).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|&(_, n)| n >= min_df).collect();
    kept.sort_unstable();
    let tokens = kept
        .into_iter()
        .enumerate()
        .map(|(i, (tok, n))| {
            (
                tok,
                TokenStats {
                    index: i as u32,
                    document_frequency: n,
                },
            )
        })
        .collect();
    Ok(TextVocabulary { tokens, num_documents })
}

/// Raw-count tf times smoothed idf, L2-normalized. Unknown tokens are ignored.
pub fn tfidf_vector(text: &str, vocab: &TextVocabulary) -> SparseVector {
    let mut counts: BTreeMap<u32, (f64, TokenStats)> = BTreeMap::new();
    for token in tokenize(text) {
        if let Some(stats) = vocab.get(&token) {
            counts.entry(stats.index).or_insert((0.0, stats)).0 += 1.0;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(i, (tf, stats))| (i, tf * vocab.idf(stats)))
        .collect();
    SparseVector::from_sorted_unchecked(vocab.len(), entries).l2_normalized()
}

/// Boolean indicators of which selected types `e` has in the training snapshot.
pub fn type_feature_vector(e: EntityId, train: &KbSnapshot, types: &[TypeId]) -> SparseVector {
    let entries = types
        .iter()
        .enumerate()
        .filter(|(_, &t)| train.contains(e, t))
        .map(|(i, _)| (i as u32, 1.0))
        .collect();
    SparseVector::from_sorted_unchecked(types.len(), entries)
}

pub fn type_one_hot(t: TypeId, num_types: usize) -> Result<SparseVector> {
    SparseVector::one_hot(num_types, t.index())
}

/// One-hot type features for a model over `num_types` types.
pub fn one_hot_type_features(num_types: usize) -> Vec<SparseVector> {
    (0..num_types)
        .map(|t| SparseVector::one_hot(num_types, t).expect("in range"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// Observed types in the training snapshot.
    #[serde(rename = "T")]
    Types,
    /// Short KB description text.
    #[serde(rename = "D")]
    Description,
    /// Encyclopedia full text.
    #[serde(rename = "W")]
    Wikipedia,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::Types, BlockKind::Description, BlockKind::Wikipedia];

    pub fn code(self) -> &'static str {
        match self {
            BlockKind::Types => "T",
            BlockKind::Description => "D",
            BlockKind::Wikipedia => "W",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for BlockKind {
    type Err = KbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" => Ok(BlockKind::Types),
            "D" | "d" => Ok(BlockKind::Description),
            "W" | "w" => Ok(BlockKind::Wikipedia),
            _ => Err(KbcError::Usage(format!("unknown feature block `{s}` (expected T, D or W)"))),
        }
    }
}

/// Parses a block list such as `T+D+W` or `D,W`.
pub fn parse_blocks(spec: &str) -> Result<Vec<BlockKind>> {
    let mut blocks: Vec<BlockKind> = spec
        .split(['+', ','])
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    blocks.sort();
    blocks.dedup();
    if blocks.is_empty() {
        return Err(KbcError::Usage("empty feature block list".into()));
    }
    Ok(blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub kind: BlockKind,
    pub offset: usize,
    pub width: usize,
}

/// Layout of the concatenated entity feature space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    blocks: Vec<FeatureBlock>,
    total_dim: usize,
}

impl FeatureSpace {
    /// Lays out the given blocks in canonical `T, D, W` order.
    pub fn new(widths: &[(BlockKind, usize)]) -> Result<Self> {
        let mut sorted = widths.to_vec();
        sorted.sort_by_key(|&(k, _)| k);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(KbcError::Domain("feature block listed twice".into()));
        }
        let mut offset = 0;
        let blocks = sorted
            .into_iter()
            .map(|(kind, width)| {
                let b = FeatureBlock { kind, offset, width };
                offset += width;
                b
            })
            .collect();
        Ok(FeatureSpace {
            blocks,
            total_dim: offset,
        })
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    pub fn block(&self, kind: BlockKind) -> Option<FeatureBlock> {
        self.blocks.iter().copied().find(|b| b.kind == kind)
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }
}

/// Concatenates per-block vectors into the shared space.
pub fn compose_entity_features(blocks: &[(BlockKind, SparseVector)], space: &FeatureSpace) -> Result<SparseVector> {
    let mut by_kind: Vec<&(BlockKind, SparseVector)> = blocks.iter().collect();
    by_kind.sort_by_key(|(k, _)| *k);
    let mut entries = Vec::with_capacity(blocks.iter().map(|(_, v)| v.nnz()).sum());
    for (kind, v) in by_kind {
        let block = space
            .block(*kind)
            .ok_or_else(|| KbcError::Domain(format!("block {kind} not in feature space")))?;
        if v.dim() != block.width {
            return Err(KbcError::Domain(format!(
                "block {kind} has dimension {} but the space declares {}",
                v.dim(),
                block.width
            )));
        }
        v.shifted_into(block.offset, &mut entries);
    }
    SparseVector::new(space.total_dim(), entries)
}

/// Per-entity feature rows over one [`FeatureSpace`]. Entities without a row
/// read as the zero vector.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    space: FeatureSpace,
    rows: Vec<SparseVector>,
    empty: SparseVector,
}

impl FeatureMatrix {
    pub fn new(space: FeatureSpace, rows: Vec<SparseVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.dim() != space.total_dim()) {
            return Err(KbcError::Domain(format!(
                "feature row of dimension {} in a space of dimension {}",
                bad.dim(),
                space.total_dim()
            )));
        }
        let empty = SparseVector::zeros(space.total_dim());
        Ok(FeatureMatrix { space, rows, empty })
    }

    /// Builds a single-block matrix from dense rows; handy for toy problems.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let space = FeatureSpace::new(&[(BlockKind::Description, dim)])?;
        let rows = rows
            .iter()
            .map(|r| {
                SparseVector::new(
                    dim,
                    r.iter().enumerate().map(|(i, &w)| (i as u32, w)).collect(),
                )
            })
            .collect::<Result<_>>()?;
        FeatureMatrix::new(space, rows)
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, e: EntityId) -> &SparseVector {
        self.rows.get(e.index()).unwrap_or(&self.empty)
    }

    pub fn write(&self, mut w: impl Write, entities: &Vocab<EntityId>) -> std::io::Result<()> {
        writeln!(w, "#kbc-features v1")?;
        writeln!(w, "total_dim\t{}", self.space.total_dim())?;
        for b in &self.space.blocks {
            writeln!(w, "block\t{}\t{}\t{}", b.kind, b.offset, b.width)?;
        }
        for (i, row) in self.rows.iter().enumerate() {
            write!(w, "{}\t", entities.symbol(EntityId::from_index(i)))?;
            write_sparse_row(&mut w, row)?;
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a persisted matrix, interning entity symbols into `entities`.
    pub fn read(reader: impl BufRead, source_name: &str, entities: &mut Vocab<EntityId>, mode: VocabMode) -> Result<Self> {
        let mut total_dim = None;
        let mut widths = Vec::new();
        let mut rows: Vec<Option<SparseVector>> = Vec::new();
        let mut header_done = false;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| KbcError::io(source_name, e))?;
            let lineno = n + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line
                .split_once('\t')
                .ok_or_else(|| KbcError::parse(source_name, lineno, "missing tab"))?;
            if !header_done && key == "total_dim" {
                total_dim = Some(parse_num::<usize>(rest, source_name, lineno)?);
                continue;
            }
            if !header_done && key == "block" {
                let f: Vec<&str> = rest.split('\t').collect();
                if f.len() != 3 {
                    return Err(KbcError::parse(source_name, lineno, "expected `block<TAB>kind<TAB>offset<TAB>width`"));
                }
                let kind: BlockKind = f[0].parse().map_err(|_| KbcError::parse(source_name, lineno, "bad block kind"))?;
                widths.push((kind, parse_num::<usize>(f[2], source_name, lineno)?));
                continue;
            }
            header_done = true;
            let dim = total_dim.ok_or_else(|| KbcError::parse(source_name, lineno, "row before total_dim header"))?;
            let e = match mode {
                VocabMode::Extend => entities.intern(key),
                VocabMode::Reject => entities.require(key)?,
            };
            let row = parse_sparse_row(rest, dim, source_name, lineno)?;
            if rows.len() <= e.index() {
                rows.resize(e.index() + 1, None);
            }
            if rows[e.index()].replace(row).is_some() {
                return Err(KbcError::parse(source_name, lineno, format!("duplicate row for `{key}`")));
            }
        }
        let dim = total_dim.ok_or_else(|| KbcError::parse(source_name, 0, "missing total_dim header"))?;
        let space = FeatureSpace::new(&widths)?;
        if space.total_dim() != dim {
            return Err(KbcError::parse(source_name, 0, "block widths do not sum to total_dim"));
        }
        let rows = rows
            .into_iter()
            .map(|r| r.unwrap_or_else(|| SparseVector::zeros(dim)))
            .collect();
        FeatureMatrix::new(space, rows)
    }
}

pub(crate) fn write_sparse_row(w: &mut impl Write, v: &SparseVector) -> std::io::Result<()> {
    for (k, (i, x)) in v.iter().enumerate() {
        if k > 0 {
            write!(w, " ")?;
        }
        write!(w, "{}:{}", i, fmt_g9(x))?;
    }
    Ok(())
}

pub(crate) fn parse_sparse_row(s: &str, dim: usize, source_name: &str, line: usize) -> Result<SparseVector> {
    let entries = s
        .split_ascii_whitespace()
        .map(|tok| {
            let (i, w) = tok
                .split_once(':')
                .ok_or_else(|| KbcError::parse(source_name, line, format!("bad entry `{tok}`")))?;
            Ok((parse_num::<u32>(i, source_name, line)?, parse_num::<f64>(w, source_name, line)?))
        })
        .collect::<Result<Vec<_>>>()?;
    SparseVector::new(dim, entries).map_err(|e| KbcError::parse(source_name, line, e.to_string()))
}

pub(crate) fn parse_num<T: FromStr>(s: &str, source_name: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| KbcError::parse(source_name, line, format!("invalid number `{s}`")))
}

/// Reads a text corpus TSV: `entity<TAB>text` with `\t`, `\n`, `\\` escaped.
pub fn read_text_corpus(reader: impl BufRead, source_name: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KbcError::io(source_name, e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (e, text) = line
            .split_once('\t')
            .ok_or_else(|| KbcError::parse(source_name, n + 1, "expected `entity<TAB>text`"))?;
        let text = unescape_text(text).map_err(|m| KbcError::parse(source_name, n + 1, m))?;
        out.push((e.to_string(), text));
    }
    Ok(out)
}

pub fn write_text_corpus<'a>(mut w: impl Write, docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> std::io::Result<()> {
    for (e, text) in docs {
        writeln!(w, "{}\t{}", e, escape_text(text))?;
    }
    Ok(())
}

/// Which blocks to build and how to prune text vocabularies.
#[derive(Debug, Clone)]
pub struct FeaturizerConfig {
    pub blocks: Vec<BlockKind>,
    pub min_df: usize,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            blocks: BlockKind::ALL.to_vec(),
            min_df: DEFAULT_MIN_DF,
        }
    }
}

/// Inputs from the training-snapshot era; test-snapshot facts never enter here.
pub struct FeatureSources<'a> {
    pub train: &'a KbSnapshot,
    pub types: &'a [TypeId],
    pub description: &'a [(EntityId, String)],
    pub wikipedia: &'a [(EntityId, String)],
}

/// Builds Φ(e) for entities `0..num_entities`.
pub fn build_entity_features(
    num_entities: usize,
    sources: &FeatureSources<'_>,
    cfg: &FeaturizerConfig,
) -> Result<FeatureMatrix> {
    let mut text_blocks = Vec::new();
    for kind in [BlockKind::Description, BlockKind::Wikipedia] {
        if !cfg.blocks.contains(&kind) {
            continue;
        }
        let docs = if kind == BlockKind::Description {
            sources.description
        } else {
            sources.wikipedia
        };
        let vocab = build_text_vocabulary(docs.iter().map(|(e, t)| (*e, t.as_str())), cfg.min_df)?;
        let mut text_of: Vec<Option<&str>> = vec![None; num_entities];
        for (e, t) in docs {
            if e.index() >= num_entities {
                return Err(KbcError::Domain(format!("document for {e} beyond {num_entities} entities")));
            }
            text_of[e.index()] = Some(t);
        }
        text_blocks.push((kind, vocab, text_of));
    }

    let mut widths = Vec::new();
    if cfg.blocks.contains(&BlockKind::Types) {
        widths.push((BlockKind::Types, sources.types.len()));
    }
    for (kind, vocab, _) in &text_blocks {
        widths.push((*kind, vocab.len()));
    }
    let space = FeatureSpace::new(&widths)?;

    let rows = (0..num_entities)
        .into_par_iter()
        .map(|i| {
            let e = EntityId::from_index(i);
            let mut blocks = Vec::with_capacity(3);
            if cfg.blocks.contains(&BlockKind::Types) {
                blocks.push((BlockKind::Types, type_feature_vector(e, sources.train, sources.types)));
            }
            for (kind, vocab, text_of) in &text_blocks {
                let v = match text_of[i] {
                    Some(text) => tfidf_vector(text, vocab),
                    None => SparseVector::zeros(vocab.len()),
                };
                blocks.push((*kind, v));
            }
            compose_entity_features(&blocks, &space)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::new(space, rows)
}
