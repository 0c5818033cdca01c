//! Binary model file. Layout documented in `docs/model-format.md`.

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{CascadeLevel, CascadeModel, StopReason, FORESTS_PER_LEVEL};
use crate::config::CascadeConfig;
use crate::convnet::FilterBank;
use crate::forest::{ExtraTreesRule, Forest, ForestKind, Tree, TreeNode};
use crate::{Error, Result, Scalar};

pub const MAGIC: &[u8; 8] = b"DCFMODEL";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

const TAG_LEAF: u8 = 0;
const TAG_INTERNAL: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
}

fn kind_tag(k: ForestKind) -> u8 {
    match k {
        ForestKind::RandomForest => 0,
        ForestKind::ExtraTrees => 1,
    }
}

fn rule_tag(r: ExtraTreesRule) -> u8 {
    match r {
        ExtraTreesRule::SingleFeature => 0,
        ExtraTreesRule::Geurts => 1,
    }
}

fn header_text<T: Scalar>(model: &CascadeModel<T>) -> String {
    let mut s = String::new();
    s.push_str(&format!("scalar={}\n", T::NAME));
    s.push_str(&format!("embedding_dim={}\n", model.embedding_dim));
    s.push_str(&format!("stop_reason={}\n", model.stop_reason.as_str()));
    for (k, v) in model.config.to_kv() {
        s.push_str(&format!("{k}={v}\n"));
    }
    for (k, v) in &model.metadata {
        s.push_str(&format!("meta.{k}={v}\n"));
    }
    s
}

fn write_level<T: Scalar>(level: &CascadeLevel<T>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u32(level.index);
    let b = &level.bank;
    w.u32(b.count());
    w.u32(b.input_dim());
    w.u32(b.kernel());
    w.u64(b.seed());
    for &v in b.weights() {
        w.f64(v.to_f64_lossless());
    }
    w.u32(level.forests.len());
    for f in &level.forests {
        w.u8(kind_tag(f.kind()));
        w.u8(rule_tag(f.extra_rule()));
        w.u64(f.seed());
        w.u32(f.feature_count());
        w.u32(f.trees().len());
        for t in f.trees() {
            w.u32(t.nodes().len());
            for node in t.nodes() {
                match node {
                    TreeNode::Leaf { counts, .. } => {
                        w.u8(TAG_LEAF);
                        w.u64(counts[0] as u64);
                        w.u64(counts[1] as u64);
                    }
                    TreeNode::Internal {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        w.u8(TAG_INTERNAL);
                        w.u32(*feature);
                        w.f64(threshold.to_f64_lossless());
                        w.u32(*left);
                        w.u32(*right);
                    }
                }
            }
        }
    }
    w.0
}

/// Serializes a model to bytes, checksum included.
pub fn encode_model<T: Scalar>(model: &CascadeModel<T>) -> Result<Vec<u8>> {
    model.validate()?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    w.bytes(header_text(model).as_bytes());
    w.u32(model.levels.len());
    for level in &model.levels {
        w.bytes(&write_level(level));
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    Ok(w.0)
}

/// Writes to a temporary file next to `path`, then renames it into place.
pub fn save_model<T: Scalar>(model: &CascadeModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    // temp files are created owner-only; a model is an ordinary output file
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::Permissions::from_mode(0o644);
        tmp.as_file().set_permissions(perms).map_err(|e| Error::io(tmp.path(), e))?;
    }
    tmp.write_all(&bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corrupt("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| Error::Corrupt("section length overflow".into()))?;
        self.take(n)
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

fn to_count(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| corrupt("count overflow"))
}

fn read_level<T: Scalar>(section: &[u8]) -> Result<CascadeLevel<T>> {
    let mut r = Reader { buf: section, pos: 0 };
    let index = r.u32()?;
    let (count, input_dim, kernel) = (r.u32()?, r.u32()?, r.u32()?);
    let bank_seed = r.u64()?;
    let n = count
        .checked_mul(input_dim)
        .and_then(|v| v.checked_mul(kernel))
        .ok_or_else(|| corrupt("bank size overflow"))?;
    if n.saturating_mul(8) > section.len() {
        return Err(corrupt("bank larger than its section"));
    }
    let weights = (0..n)
        .map(|_| r.f64().map(T::from_f64_lossy))
        .collect::<Result<Vec<_>>>()?;
    let bank = FilterBank::from_weights(bank_seed, count, input_dim, kernel, weights)
        .map_err(|e| corrupt(format!("level {index} bank: {e}")))?;
    let forest_count = r.u32()?;
    if forest_count != FORESTS_PER_LEVEL {
        return Err(corrupt(format!("level {index} has {forest_count} forests")));
    }
    let mut forests = Vec::with_capacity(forest_count);
    for _ in 0..forest_count {
        let kind = match r.u8()? {
            0 => ForestKind::RandomForest,
            1 => ForestKind::ExtraTrees,
            t => return Err(corrupt(format!("unknown forest kind {t}"))),
        };
        let rule = match r.u8()? {
            0 => ExtraTreesRule::SingleFeature,
            1 => ExtraTreesRule::Geurts,
            t => return Err(corrupt(format!("unknown split rule {t}"))),
        };
        let seed = r.u64()?;
        let feature_count = r.u32()?;
        let tree_count = r.u32()?;
        let mut trees = Vec::with_capacity(tree_count.min(section.len()));
        for _ in 0..tree_count {
            let node_count = r.u32()?;
            let mut nodes = Vec::with_capacity(node_count.min(section.len()));
            for _ in 0..node_count {
                nodes.push(match r.u8()? {
                    TAG_LEAF => {
                        let counts = [to_count(r.u64()?)?, to_count(r.u64()?)?];
                        if counts[0] + counts[1] == 0 {
                            return Err(corrupt("empty leaf"));
                        }
                        TreeNode::leaf(counts)
                    }
                    TAG_INTERNAL => TreeNode::Internal {
                        feature: r.u32()?,
                        threshold: T::from_f64_lossy(r.f64()?),
                        left: r.u32()?,
                        right: r.u32()?,
                    },
                    t => return Err(corrupt(format!("unknown node tag {t}"))),
                });
            }
            trees.push(Tree::from_nodes(nodes).map_err(|e| corrupt(e.to_string()))?);
        }
        forests.push(
            Forest::from_parts(kind, rule, seed, feature_count, trees)
                .map_err(|e| corrupt(e.to_string()))?,
        );
    }
    if !r.done() {
        return Err(corrupt(format!("trailing bytes in level {index}")));
    }
    Ok(CascadeLevel { index, bank, forests })
}

struct Header {
    config: CascadeConfig,
    embedding_dim: usize,
    stop_reason: StopReason,
    /// `meta.*` entries, prefix removed.
    metadata: Vec<(String, String)>,
}

fn parse_header(text: &str) -> Result<Header> {
    let mut config = CascadeConfig::default();
    let (mut dim, mut stop, mut scalar) = (None, None, None);
    let mut meta = Vec::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("header line {line:?}")))?;
        match k {
            "scalar" => scalar = Some(v.to_string()),
            "embedding_dim" => dim = Some(v.parse().map_err(|_| corrupt("embedding_dim"))?),
            "stop_reason" => stop = Some(StopReason::parse(v).ok_or_else(|| corrupt("stop_reason"))?),
            _ => {
                if let Some(m) = k.strip_prefix("meta.") {
                    meta.push((m.to_string(), v.to_string()));
                } else if !config.set(k, v).map_err(|e| corrupt(e.to_string()))? {
                    return Err(corrupt(format!("unknown header key {k:?}")));
                }
            }
        }
    }
    // informational only: weights are stored as f64 either way
    if scalar.is_none() {
        return Err(corrupt("header lacks scalar"));
    }
    Ok(Header {
        config,
        embedding_dim: dim.ok_or_else(|| corrupt("header lacks embedding_dim"))?,
        stop_reason: stop.ok_or_else(|| corrupt("header lacks stop_reason"))?,
        metadata: meta,
    })
}

/// Parses bytes produced by [`encode_model`]. The version is checked before
/// the checksum, so files from a newer writer report a version error.
pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<CascadeModel<T>> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("not a model file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 + CHECKSUM_LEN {
        return Err(corrupt("truncated"));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let mut r = Reader { buf: payload, pos: 12 };
    let header = std::str::from_utf8(r.bytes()?).map_err(|_| corrupt("header is not UTF-8"))?;
    let Header {
        config,
        embedding_dim,
        stop_reason,
        metadata,
    } = parse_header(header)?;
    let level_count = r.u32()?;
    let mut levels = Vec::with_capacity(level_count.min(64));
    for _ in 0..level_count {
        levels.push(read_level(r.bytes()?)?);
    }
    if !r.done() {
        return Err(corrupt("trailing bytes after levels"));
    }
    let model = CascadeModel {
        config,
        embedding_dim,
        levels,
        stop_reason,
        metadata,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<CascadeModel<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn tiny_model() -> CascadeModel<f64> {
        let config = CascadeConfig {
            filters: 3,
            kernel: 2,
            ..CascadeConfig::default()
        };
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i % 3) as f64, 1.0]).collect();
        let y: Vec<Label> = (0..12).map(|i| if i < 6 { Label::Ham } else { Label::Spam }).collect();
        let params = crate::forest::ForestParams {
            n_trees: 3,
            ..Default::default()
        };
        let forests = config
            .forests
            .iter()
            .enumerate()
            .map(|(i, &k)| Forest::fit(&x, &y, k, &params, i as u64).unwrap())
            .collect();
        CascadeModel {
            levels: vec![CascadeLevel {
                index: 1,
                bank: FilterBank::random(9, 3, 4, 2).unwrap(),
                forests,
            }],
            config,
            embedding_dim: 4,
            stop_reason: StopReason::MaxLevels,
            metadata: vec![("split".into(), "0.8,0.1,0.1".into())],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = tiny_model();
        let bytes = encode_model(&m).unwrap();
        let back: CascadeModel<f64> = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn detects_corruption_and_versions() {
        let bytes = encode_model(&tiny_model()).unwrap();
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        assert!(matches!(decode_model::<f64>(&flipped), Err(Error::Checksum)));

        let mut future = bytes.clone();
        future[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(decode_model::<f64>(&future), Err(Error::Version { .. })));

        assert!(decode_model::<f64>(&bytes[..bytes.len() - 5]).is_err());
        assert!(decode_model::<f64>(b"hello").is_err());
    }

    #[test]
    fn save_is_atomic_and_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&tiny_model(), &path).unwrap();
        let back: CascadeModel<f64> = load_model(&path).unwrap();
        assert_eq!(back, tiny_model());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(save_model(&tiny_model(), dir.path().join("missing/m.bin")).is_err());
    }
}
