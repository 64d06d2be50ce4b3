//! Multi-channel compressed feature tensors.
//!
//! One grayscale image becomes a 3-channel stack of separable compressions,
//! one channel per sensing-matrix kind in the combo (e.g. `GCT`). All
//! channels of one bank share the image geometry but use independently
//! seeded matrices per kind.

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sensing::{
    build_matrix, compress_with_dense, MatrixKind, SensingMatrix, SensingMatrixSpec,
};
use ndarray::{Array2, Array3};
use std::io::{Read, Write};
use std::path::Path;

const FEATURE_MAGIC: &[u8; 8] = b"CSLFEA01";

/// An ordered triple of matrix kinds, e.g. `GCT` or `TTT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelCombo(pub [MatrixKind; 3]);

impl ChannelCombo {
    pub fn kinds(&self) -> [MatrixKind; 3] {
        self.0
    }

    /// Multiset form: kinds sorted in canonical G < C < T order.
    pub fn canonical(&self) -> ChannelCombo {
        let mut k = self.0;
        k.sort_by_key(|kind| match kind {
            MatrixKind::Gaussian => 0,
            MatrixKind::Circulant => 1,
            MatrixKind::Toeplitz => 2,
        });
        ChannelCombo(k)
    }

    /// The distinct kinds appearing in this combo.
    pub fn distinct_kinds(&self) -> Vec<MatrixKind> {
        let mut kinds = Vec::new();
        for k in self.0 {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        kinds
    }
}

impl std::fmt::Display for ChannelCombo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for k in self.0 {
            write!(f, "{}", k.letter())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ChannelCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return Err(Error::config(format!(
                "combo must be exactly 3 letters from {{G,C,T}}, got {s:?}"
            )));
        }
        let mut kinds = [MatrixKind::Gaussian; 3];
        for (i, c) in chars.iter().enumerate() {
            kinds[i] = MatrixKind::from_letter(*c).ok_or_else(|| {
                Error::config(format!("invalid combo letter {c:?} in {s:?}"))
            })?;
        }
        Ok(ChannelCombo(kinds))
    }
}

/// Parse a combo selector: one combo (`GCT`), a comma list (`GCT,CCC`), or
/// `all` for the 10 canonical multisets.
pub fn parse_combo_selector(s: &str) -> Result<Vec<ChannelCombo>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(enumerate_combos(true));
    }
    let combos: Vec<ChannelCombo> =
        s.split(',').map(|part| part.trim().parse()).collect::<Result<_>>()?;
    if combos.is_empty() {
        return Err(Error::config("empty combo selector"));
    }
    Ok(combos)
}

/// All channel combos: the 27 ordered triples, or with `dedupe` the 10
/// unordered multisets in canonical G < C < T order.
pub fn enumerate_combos(dedupe: bool) -> Vec<ChannelCombo> {
    let mut out = Vec::new();
    for a in MatrixKind::ALL {
        for b in MatrixKind::ALL {
            for c in MatrixKind::ALL {
                let combo = ChannelCombo([a, b, c]);
                if dedupe {
                    let canon = combo.canonical();
                    if canon == combo && !out.contains(&canon) {
                        out.push(canon);
                    }
                } else {
                    out.push(combo);
                }
            }
        }
    }
    out
}

/// A 3-channel stack of MxM compressed projections of one image.
#[derive(Debug, Clone)]
pub struct FeatureTensor {
    /// Shape (3, M, M).
    pub channels: Array3<f64>,
    pub combo: ChannelCombo,
    pub source_id: usize,
}

/// Built row/column matrix pair for one kind, with the dense realizations
/// cached for repeated image compression.
#[derive(Debug, Clone)]
struct KindPair {
    row: SensingMatrix,
    col: SensingMatrix,
    row_dense: Array2<f64>,
    col_dense: Array2<f64>,
}

/// Per-kind seeds for a matrix bank. By default they derive from one master
/// seed: kind k (G=0, C=1, T=2) gets `derive_seed(master, k)` for its row
/// matrix, plus 1 for its column matrix.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BankSeeds {
    pub gaussian: u64,
    pub circulant: u64,
    pub toeplitz: u64,
}

impl BankSeeds {
    pub fn from_master(seed: u64) -> Self {
        Self {
            gaussian: derive_seed(seed, 0),
            circulant: derive_seed(seed, 1),
            toeplitz: derive_seed(seed, 2),
        }
    }

    fn for_kind(&self, kind: MatrixKind) -> u64 {
        match kind {
            MatrixKind::Gaussian => self.gaussian,
            MatrixKind::Circulant => self.circulant,
            MatrixKind::Toeplitz => self.toeplitz,
        }
    }
}

/// A bank of built matrix pairs, one per kind, shared across a run.
#[derive(Debug, Clone)]
pub struct MatrixBank {
    rows: usize,
    image_h: usize,
    image_w: usize,
    pairs: Vec<(MatrixKind, KindPair)>,
}

impl MatrixBank {
    /// Build pairs for `kinds`, compressing `image_h x image_w` inputs down
    /// to `rows x rows`. Row and column matrices use seeds `s` and `s + 1`
    /// where `s` is the kind seed.
    pub fn build(
        rows: usize,
        image_h: usize,
        image_w: usize,
        seeds: BankSeeds,
        kinds: &[MatrixKind],
    ) -> Result<Self> {
        let mut pairs = Vec::new();
        for &kind in kinds {
            if pairs.iter().any(|(k, _)| *k == kind) {
                continue;
            }
            let s = seeds.for_kind(kind);
            let row = build_matrix(SensingMatrixSpec::new(kind, rows, image_h, s))?;
            let col =
                build_matrix(SensingMatrixSpec::new(kind, rows, image_w, s.wrapping_add(1)))?;
            let row_dense = row.dense();
            let col_dense = col.dense();
            pairs.push((kind, KindPair { row, col, row_dense, col_dense }));
        }
        Ok(Self { rows, image_h, image_w, pairs })
    }

    /// Bank with all three kinds.
    pub fn build_full(
        rows: usize,
        image_h: usize,
        image_w: usize,
        seeds: BankSeeds,
    ) -> Result<Self> {
        Self::build(rows, image_h, image_w, seeds, &MatrixKind::ALL)
    }

    pub fn output_size(&self) -> usize {
        self.rows
    }

    pub fn matrices(&self, kind: MatrixKind) -> Option<(&SensingMatrix, &SensingMatrix)> {
        self.pairs.iter().find(|(k, _)| *k == kind).map(|(_, p)| (&p.row, &p.col))
    }

    fn pair(&self, kind: MatrixKind) -> Result<&KindPair> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::config(format!("matrix bank has no {kind} pair")))
    }
}

/// Compress one image into the 3-channel tensor described by `combo`.
pub fn extract_channels(
    image: &Array2<f64>,
    combo: ChannelCombo,
    bank: &MatrixBank,
    source_id: usize,
) -> Result<FeatureTensor> {
    let (h, w) = image.dim();
    if h != bank.image_h || w != bank.image_w {
        return Err(Error::dim(format!(
            "extract_channels: image is {h}x{w} but the bank expects {}x{}",
            bank.image_h, bank.image_w
        )));
    }
    let m = bank.rows;
    let mut channels = Array3::zeros((3, m, m));
    for (slot, kind) in combo.kinds().into_iter().enumerate() {
        let pair = bank.pair(kind)?;
        let compressed = compress_with_dense(&pair.row_dense, &pair.col_dense, image);
        channels.index_axis_mut(ndarray::Axis(0), slot).assign(&compressed);
    }
    Ok(FeatureTensor { channels, combo, source_id })
}

/// Per-channel mean/std, computed from a training subset only.
#[derive(Debug, Clone, Copy)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Population moments over all pixels of each channel across `tensors`.
pub fn compute_stats(tensors: &[&FeatureTensor]) -> ChannelStats {
    let mut mean = [0.0f64; 3];
    let mut std = [0.0f64; 3];
    if tensors.is_empty() {
        return ChannelStats { mean, std: [1.0; 3] };
    }
    let per_channel = tensors[0].channels.len() / 3;
    let count = (tensors.len() * per_channel) as f64;
    for c in 0..3 {
        let mut sum = 0.0;
        for t in tensors {
            sum += t.channels.index_axis(ndarray::Axis(0), c).sum();
        }
        mean[c] = sum / count;
        let mut sq = 0.0;
        for t in tensors {
            sq += t
                .channels
                .index_axis(ndarray::Axis(0), c)
                .iter()
                .map(|v| (v - mean[c]) * (v - mean[c]))
                .sum::<f64>();
        }
        std[c] = (sq / count).sqrt();
    }
    ChannelStats { mean, std }
}

/// Standardize each channel with training-set statistics. The std floor of
/// 1e-8 keeps constant channels finite (they map to zero).
pub fn normalize(tensor: &FeatureTensor, stats: &ChannelStats) -> FeatureTensor {
    let mut channels = tensor.channels.clone();
    for c in 0..3 {
        let m = stats.mean[c];
        let s = stats.std[c].max(1e-8);
        channels
            .index_axis_mut(ndarray::Axis(0), c)
            .mapv_inplace(|v| (v - m) / s);
    }
    FeatureTensor { channels, combo: tensor.combo, source_id: tensor.source_id }
}

/// Write tensors in the `CSLFEA01` cache format: 8-byte magic, sample count
/// (LE u64), combo tag (3 ASCII letters), then per-sample 3xMxM little-endian
/// f32 payloads.
pub fn write_features(tensors: &[FeatureTensor], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(FEATURE_MAGIC)?;
    f.write_all(&(tensors.len() as u64).to_le_bytes())?;
    let combo = tensors.first().map(|t| t.combo).unwrap_or(ChannelCombo(
        [MatrixKind::Gaussian; 3],
    ));
    for k in combo.kinds() {
        f.write_all(&[k.letter() as u8])?;
    }
    for t in tensors {
        if t.combo != combo {
            return Err(Error::config("write_features: mixed combos in one cache file"));
        }
        for v in t.channels.iter() {
            f.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Read a `CSLFEA01` cache. The channel size M is recovered from the payload
/// length; source ids are the in-file sample indices.
pub fn read_features(path: &Path) -> Result<Vec<FeatureTensor>> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::Format(format!("bad feature magic in {}", path.display())));
    }
    let mut u = [0u8; 8];
    f.read_exact(&mut u)?;
    let count = u64::from_le_bytes(u) as usize;
    let mut tag = [0u8; 3];
    f.read_exact(&mut tag)?;
    let mut kinds = [MatrixKind::Gaussian; 3];
    for (i, b) in tag.iter().enumerate() {
        kinds[i] = MatrixKind::from_letter(*b as char)
            .ok_or_else(|| Error::Format(format!("bad combo tag byte {b:#x}")))?;
    }
    let combo = ChannelCombo(kinds);
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rest = Vec::new();
    f.read_to_end(&mut rest)?;
    if rest.len() % (count * 12) != 0 {
        return Err(Error::Format("feature payload length is not 3*M*M per sample".into()));
    }
    let m2 = rest.len() / (count * 12);
    let m = (m2 as f64).sqrt().round() as usize;
    if m * m != m2 {
        return Err(Error::Format("feature channel is not square".into()));
    }
    let mut tensors = Vec::with_capacity(count);
    let mut off = 0;
    for source_id in 0..count {
        let mut channels = Array3::zeros((3, m, m));
        for v in channels.iter_mut() {
            let bytes: [u8; 4] = rest[off..off + 4].try_into().unwrap();
            *v = f32::from_le_bytes(bytes) as f64;
            off += 4;
        }
        tensors.push(FeatureTensor { channels, combo, source_id });
    }
    Ok(tensors)
}
