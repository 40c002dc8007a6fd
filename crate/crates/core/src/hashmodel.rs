//! Hash-function models: the segmented keyed family with a lazily generated
//! Bernoulli(p) key, and explicit tables for small widths.

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::infotheory::BiasParam;
use crate::seed::{derive_seed, SegmentStream};

/// Widest bin supported by the `u64` label representation.
pub const MAX_BIN_BITS: u32 = 62;
/// Widest password supported; guess counts are `u64`.
pub const MAX_PASSWORD_BITS: u32 = 63;
/// Explicit tables and full bin enumerations stop here (16 Mi entries).
pub const MAX_TABLE_BITS: u32 = 24;

/// An `m`-bit hash output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinLabel {
    bits: u64,
    m: u32,
}

impl BinLabel {
    pub fn new(bits: u64, m: u32) -> Result<Self> {
        check_width(m)?;
        if bits >> m != 0 {
            return Err(Error::domain("bin", bits as f64, "[0, 2^m)"));
        }
        Ok(BinLabel { bits, m })
    }

    pub(crate) fn from_raw(bits: u64, m: u32) -> Self {
        debug_assert!(bits >> m == 0);
        BinLabel { bits, m }
    }

    pub fn all_ones(m: u32) -> Result<Self> {
        check_width(m)?;
        Ok(BinLabel { bits: low_mask(m), m })
    }

    /// The smallest label with `k` ones (the low `k` bits set).
    pub fn with_weight(m: u32, k: u32) -> Result<Self> {
        check_width(m)?;
        if k > m {
            return Err(Error::domain("weight", k as f64, "[0, m]"));
        }
        Ok(BinLabel { bits: low_mask(k), m })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.m
    }

    pub fn popcount(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Fraction of one bits, `q(b)`.
    pub fn type_fraction(&self) -> f64 {
        self.popcount() as f64 / self.m as f64
    }

    /// `log2 P_K(b) = k log2 p + (m - k) log2 (1 - p)`.
    pub fn log2_key_probability(&self, p: f64) -> f64 {
        let k = self.popcount() as f64;
        let z = (self.m - self.popcount()) as f64;
        let one = if k == 0.0 { 0.0 } else { k * p.log2() };
        let zero = if z == 0.0 { 0.0 } else { z * (1.0 - p).log2() };
        one + zero
    }

    pub fn key_probability(&self, p: f64) -> f64 {
        self.log2_key_probability(p).exp2()
    }

    /// Most significant bit first, exactly `m` characters.
    pub fn to_binary_string(&self) -> String {
        format!("{:0width$b}", self.bits, width = self.m as usize)
    }

    pub fn parse_binary(s: &str) -> Result<Self> {
        let m = s.len() as u32;
        if m == 0 || !s.bytes().all(|c| c == b'0' || c == b'1') {
            return Err(Error::Serialization(format!("`{s}` is not a binary string")));
        }
        check_width(m)?;
        let bits = u64::from_str_radix(s, 2).map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(BinLabel { bits, m })
    }
}

impl fmt::Display for BinLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_binary_string())
    }
}

impl Serialize for BinLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_binary_string())
    }
}

impl<'de> Deserialize<'de> for BinLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        BinLabel::parse_binary(&s).map_err(serde::de::Error::custom)
    }
}

fn check_width(m: u32) -> Result<()> {
    if m == 0 || m > MAX_BIN_BITS {
        Err(Error::domain("m", m as f64, "[1, 62]"))
    } else {
        Ok(())
    }
}

fn check_password_width(n: u32) -> Result<()> {
    if n == 0 || n > MAX_PASSWORD_BITS {
        Err(Error::domain("n", n as f64, "[1, 63]"))
    } else {
        Ok(())
    }
}

#[inline]
pub(crate) fn low_mask(k: u32) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

/// A set of bins for offline attacks, stored as a bitmap over all `2^m` bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinSet {
    m: u32,
    words: Vec<u64>,
    len: usize,
}

impl BinSet {
    pub fn new(m: u32) -> Result<Self> {
        check_width(m)?;
        if m > MAX_TABLE_BITS {
            return Err(Error::Resource {
                what: "bin-set width",
                value: m as u64,
                cap: MAX_TABLE_BITS as u64,
            });
        }
        let words = (1usize << m).div_ceil(64);
        Ok(BinSet {
            m,
            words: vec![0; words],
            len: 0,
        })
    }

    pub fn from_bins<'a>(m: u32, bins: impl IntoIterator<Item = &'a BinLabel>) -> Result<Self> {
        let mut set = BinSet::new(m)?;
        for b in bins {
            set.insert(*b)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, b: BinLabel) -> Result<bool> {
        if b.m != self.m {
            return Err(Error::Dimension(format!("bin width {} in a width-{} set", b.m, self.m)));
        }
        let (w, bit) = ((b.bits >> 6) as usize, b.bits & 63);
        let fresh = self.words[w] >> bit & 1 == 0;
        self.words[w] |= 1 << bit;
        self.len += fresh as usize;
        Ok(fresh)
    }

    #[inline]
    pub fn contains_bits(&self, bits: u64) -> bool {
        self.words[(bits >> 6) as usize] >> (bits & 63) & 1 == 1
    }

    pub fn contains(&self, b: &BinLabel) -> bool {
        b.m == self.m && self.contains_bits(b.bits)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> u32 {
        self.m
    }

    pub fn iter(&self) -> impl Iterator<Item = BinLabel> + '_ {
        let m = self.m;
        self.words.iter().enumerate().flat_map(move |(w, &word)| {
            (0..64u64)
                .filter(move |bit| word >> bit & 1 == 1)
                .map(move |bit| BinLabel::from_raw(((w as u64) << 6) | bit, m))
        })
    }
}

/// Anything that maps `n`-bit password indices to `m`-bit bins.
pub trait HashFunction {
    fn m(&self) -> u32;
    fn n(&self) -> u32;

    /// Hash of `pw` without the range check; `pw < 2^n` is the caller's job.
    fn eval_bits(&self, pw: u64) -> u64;

    fn eval(&self, pw: u64) -> Result<BinLabel> {
        if pw >> self.n() != 0 {
            return Err(Error::PasswordRange {
                index: pw,
                n: self.n(),
            });
        }
        Ok(BinLabel::from_raw(self.eval_bits(pw), self.m()))
    }

    /// Whether `pw` hashes to `target`; implementations may stop early.
    fn maps_to(&self, pw: u64, target: u64) -> bool {
        self.eval_bits(pw) == target
    }

    fn maps_into(&self, pw: u64, set: &BinSet) -> bool {
        set.contains_bits(self.eval_bits(pw))
    }

    fn password_count(&self) -> u64 {
        1u64 << self.n()
    }
}

/// The keyed family `H_k(i) = k_i`: password `i` hashes to the `i`-th
/// `m`-bit segment of a Bernoulli(`p`) key.
///
/// Segments are generated on demand from `(seed, i)`, so the `m 2^n`-bit key
/// never exists in memory. Each key bit is one 53-bit uniform draw compared
/// against `p 2^53`, so bit probabilities are exact to within `2^-53`.
/// Bit `j` of a segment (least significant first) is the `j`-th draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedHashModel {
    m: u32,
    n: u32,
    p: BiasParam,
    seed: u64,
    threshold: u64,
    overrides: BTreeMap<u64, BinLabel>,
}

impl KeyedHashModel {
    pub fn new(m: u32, n: u32, p: f64, seed: u64) -> Result<Self> {
        check_width(m)?;
        check_password_width(n)?;
        let p = BiasParam::new(p)?;
        Ok(KeyedHashModel {
            m,
            n,
            p,
            seed,
            threshold: bit_threshold(p.get()),
            overrides: BTreeMap::new(),
        })
    }

    /// Same dimensions and bias with a fresh key and no overrides.
    pub fn with_seed(&self, seed: u64) -> Self {
        KeyedHashModel {
            seed,
            overrides: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn p(&self) -> f64 {
        self.p.get()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn overrides(&self) -> &BTreeMap<u64, BinLabel> {
        &self.overrides
    }

    /// Forces `pw` to hash to `bin`, returning the previous override if any.
    pub fn set_override(&mut self, pw: u64, bin: BinLabel) -> Result<Option<BinLabel>> {
        if pw >> self.n != 0 {
            return Err(Error::PasswordRange { index: pw, n: self.n });
        }
        if bin.m != self.m {
            return Err(Error::Dimension(format!(
                "bin of width {} for a width-{} model",
                bin.m, self.m
            )));
        }
        Ok(self.overrides.insert(pw, bin))
    }

    /// The key segment `k_i`, ignoring overrides.
    #[inline]
    pub fn segment(&self, i: u64) -> u64 {
        let mut stream = SegmentStream::new(derive_seed(self.seed, i));
        let mut bits = 0u64;
        for j in 0..self.m {
            bits |= ((stream.next_u53() < self.threshold) as u64) << j;
        }
        bits
    }

    #[inline]
    fn segment_equals(&self, i: u64, target: u64) -> bool {
        let mut stream = SegmentStream::new(derive_seed(self.seed, i));
        for j in 0..self.m {
            let bit = (stream.next_u53() < self.threshold) as u64;
            if bit != (target >> j) & 1 {
                return false;
            }
        }
        true
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&HashDocument::from(self)).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// `floor(p 2^53)`: a 53-bit uniform below this is a one bit.
pub(crate) fn bit_threshold(p: f64) -> u64 {
    (p * (1u64 << 53) as f64) as u64
}

impl HashFunction for KeyedHashModel {
    fn m(&self) -> u32 {
        self.m
    }

    fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    fn eval_bits(&self, pw: u64) -> u64 {
        if !self.overrides.is_empty() {
            if let Some(b) = self.overrides.get(&pw) {
                return b.bits;
            }
        }
        self.segment(pw)
    }

    #[inline]
    fn maps_to(&self, pw: u64, target: u64) -> bool {
        if !self.overrides.is_empty() {
            if let Some(b) = self.overrides.get(&pw) {
                return b.bits == target;
            }
        }
        self.segment_equals(pw, target)
    }
}

/// An explicit hash table with `2^n` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableHash {
    m: u32,
    n: u32,
    entries: Vec<u32>,
}

impl TableHash {
    pub fn from_entries(m: u32, n: u32, entries: Vec<u32>) -> Result<Self> {
        check_table_dims(m, n)?;
        if entries.len() as u64 != 1u64 << n {
            return Err(Error::Dimension(format!(
                "{} entries for n = {n}",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| (e as u64) >> m != 0) {
            return Err(Error::domain("bin", *bad as f64, "[0, 2^m)"));
        }
        Ok(TableHash { m, n, entries })
    }

    /// Every password maps to `bin`.
    pub fn constant(n: u32, bin: BinLabel) -> Result<Self> {
        check_table_dims(bin.m, n)?;
        Ok(TableHash {
            m: bin.m,
            n,
            entries: vec![bin.bits as u32; 1usize << n],
        })
    }

    /// Materialises the first `2^n` segments of a keyed model (overrides
    /// included).
    pub fn from_keyed(model: &KeyedHashModel) -> Result<Self> {
        check_table_dims(model.m, model.n)?;
        let entries = (0..1u64 << model.n).map(|i| model.eval_bits(i) as u32).collect();
        Ok(TableHash {
            m: model.m,
            n: model.n,
            entries,
        })
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    /// Overwrites one entry.
    pub fn set_entry(&mut self, pw: u64, bin: BinLabel) -> Result<BinLabel> {
        if pw >> self.n != 0 {
            return Err(Error::PasswordRange { index: pw, n: self.n });
        }
        if bin.m != self.m {
            return Err(Error::Dimension(format!(
                "bin of width {} for a width-{} table",
                bin.m, self.m
            )));
        }
        let old = std::mem::replace(&mut self.entries[pw as usize], bin.bits as u32);
        Ok(BinLabel::from_raw(old as u64, self.m))
    }

    /// Number of passwords hashing to `b`, `L_b`.
    pub fn preimage_count(&self, b: &BinLabel) -> u64 {
        if b.m != self.m {
            return 0;
        }
        self.entries.iter().filter(|&&e| e as u64 == b.bits).count() as u64
    }

    /// Preimage counts of all `2^m` bins.
    pub fn preimage_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; 1usize << self.m];
        for &e in &self.entries {
            counts[e as usize] += 1;
        }
        counts
    }

    pub fn effective_distribution(&self) -> EffectiveDistribution {
        let total = self.entries.len() as f64;
        let fractions = self
            .preimage_counts()
            .into_iter()
            .map(|c| c as f64 / total)
            .collect();
        EffectiveDistribution {
            m: self.m,
            fractions,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&HashDocument::from(self)).map_err(|e| Error::Serialization(e.to_string()))
    }
}

fn check_table_dims(m: u32, n: u32) -> Result<()> {
    check_width(m)?;
    check_password_width(n)?;
    if n > MAX_TABLE_BITS {
        return Err(Error::Resource {
            what: "table password width n",
            value: n as u64,
            cap: MAX_TABLE_BITS as u64,
        });
    }
    if m > MAX_TABLE_BITS {
        return Err(Error::Resource {
            what: "table bin width m",
            value: m as u64,
            cap: MAX_TABLE_BITS as u64,
        });
    }
    Ok(())
}

impl HashFunction for TableHash {
    fn m(&self) -> u32 {
        self.m
    }

    fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    fn eval_bits(&self, pw: u64) -> u64 {
        self.entries[pw as usize] as u64
    }
}

/// Samples a table whose entries have i.i.d. Bernoulli(`p`) bits. Entry `i`
/// equals segment `i` of `KeyedHashModel::new(m, n, p, seed)`.
pub fn sample_table_hash(m: u32, n: u32, p: f64, seed: u64) -> Result<TableHash> {
    check_table_dims(m, n)?;
    TableHash::from_keyed(&KeyedHashModel::new(m, n, p, seed)?)
}

/// Fractions `P_H(b)` of all inputs mapping to each bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDistribution {
    pub m: u32,
    pub fractions: Vec<f64>,
}

impl EffectiveDistribution {
    pub fn new(m: u32, fractions: Vec<f64>) -> Result<Self> {
        check_width(m)?;
        if fractions.len() as u64 != 1u64 << m {
            return Err(Error::Dimension(format!("{} fractions for m = {m}", fractions.len())));
        }
        if fractions.iter().any(|f| !(*f >= 0.0)) {
            return Err(Error::config("fractions", "must be non-negative"));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("fractions", format!("sum to {total}, not 1")));
        }
        Ok(EffectiveDistribution { m, fractions })
    }

    /// The exact key distribution `P_K(b) = p^k (1-p)^{m-k}`.
    pub fn bernoulli(m: u32, p: f64) -> Result<Self> {
        BiasParam::new(p)?;
        check_width(m)?;
        if m > MAX_TABLE_BITS {
            return Err(Error::Resource {
                what: "distribution width m",
                value: m as u64,
                cap: MAX_TABLE_BITS as u64,
            });
        }
        let by_weight: Vec<f64> = (0..=m)
            .map(|k| BinLabel::from_raw(low_mask(k), m).key_probability(p))
            .collect();
        let fractions = (0..1u64 << m)
            .map(|b| by_weight[b.count_ones() as usize])
            .collect();
        Ok(EffectiveDistribution { m, fractions })
    }

    pub fn get(&self, b: &BinLabel) -> f64 {
        self.fractions[b.bits as usize]
    }
}

/// Number of passwords mapped to `b` by a table.
pub fn preimage_count(h: &TableHash, b: &BinLabel) -> u64 {
    h.preimage_count(b)
}

/// Iterates all `m`-bit labels of weight `k` in ascending numeric order.
#[derive(Debug, Clone)]
pub struct WeightLayer {
    next: Option<u64>,
    limit: u64,
}

impl WeightLayer {
    pub fn new(m: u32, k: u32) -> Self {
        let next = if k > m { None } else { Some(low_mask(k)) };
        WeightLayer {
            next,
            limit: low_mask(m),
        }
    }
}

impl Iterator for WeightLayer {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let x = self.next?;
        self.next = if x == 0 {
            None
        } else {
            // Next larger integer with the same popcount.
            let c = x & x.wrapping_neg();
            let r = x.wrapping_add(c);
            if r == 0 {
                None
            } else {
                let y = (((r ^ x) >> 2) / c) | r;
                (y <= self.limit).then_some(y)
            }
        };
        Some(x)
    }
}

/// Bins from least to most likely under a Bernoulli(`p`) key, `p <= 1/2`:
/// popcount descending, ascending numeric inside a popcount.
#[derive(Debug, Clone)]
pub struct RankedBins {
    m: u32,
    weight: Option<u32>,
    layer: WeightLayer,
}

impl RankedBins {
    pub fn new(m: u32, p: f64) -> Result<Self> {
        check_width(m)?;
        BiasParam::new(p)?;
        Ok(RankedBins {
            m,
            weight: Some(m),
            layer: WeightLayer::new(m, m),
        })
    }
}

impl Iterator for RankedBins {
    type Item = BinLabel;

    fn next(&mut self) -> Option<BinLabel> {
        loop {
            let w = self.weight?;
            if let Some(bits) = self.layer.next() {
                return Some(BinLabel::from_raw(bits, self.m));
            }
            self.weight = w.checked_sub(1);
            if let Some(w) = self.weight {
                self.layer = WeightLayer::new(self.m, w);
            }
        }
    }
}

/// All `2^m` bins, least likely first. Use [`RankedBins`] to stream wider
/// widths.
pub fn rank_bins_by_likelihood(m: u32, p: f64) -> Result<Vec<BinLabel>> {
    check_width(m)?;
    if m > MAX_TABLE_BITS {
        return Err(Error::Resource {
            what: "full bin ranking width m",
            value: m as u64,
            cap: MAX_TABLE_BITS as u64,
        });
    }
    Ok(RankedBins::new(m, p)?.collect())
}

/// Versioned JSON form of a hash model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HashDocument {
    Keyed {
        version: u32,
        m: u32,
        n: u32,
        p: f64,
        seed: u64,
        overrides: Vec<(u64, u64)>,
    },
    Table {
        version: u32,
        m: u32,
        n: u32,
        /// Entries packed `m` bits each, least significant bit first.
        entries_b64: String,
    },
}

pub const HASH_DOCUMENT_VERSION: u32 = 1;

impl From<&KeyedHashModel> for HashDocument {
    fn from(h: &KeyedHashModel) -> Self {
        HashDocument::Keyed {
            version: HASH_DOCUMENT_VERSION,
            m: h.m,
            n: h.n,
            p: h.p.get(),
            seed: h.seed,
            overrides: h.overrides.iter().map(|(&i, b)| (i, b.bits)).collect(),
        }
    }
}

impl From<&TableHash> for HashDocument {
    fn from(h: &TableHash) -> Self {
        HashDocument::Table {
            version: HASH_DOCUMENT_VERSION,
            m: h.m,
            n: h.n,
            entries_b64: BASE64.encode(pack_entries(&h.entries, h.m)),
        }
    }
}

impl HashDocument {
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: HashDocument =
            serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        let version = match &doc {
            HashDocument::Keyed { version, .. } | HashDocument::Table { version, .. } => *version,
        };
        if version != HASH_DOCUMENT_VERSION {
            return Err(Error::Serialization(format!("unsupported version {version}")));
        }
        Ok(doc)
    }

    pub fn into_keyed(self) -> Result<KeyedHashModel> {
        match self {
            HashDocument::Keyed {
                m,
                n,
                p,
                seed,
                overrides,
                ..
            } => {
                let mut h = KeyedHashModel::new(m, n, p, seed)?;
                for (i, bits) in overrides {
                    h.set_override(i, BinLabel::new(bits, m)?)?;
                }
                Ok(h)
            }
            HashDocument::Table { .. } => {
                Err(Error::Serialization("expected a keyed model, found a table".into()))
            }
        }
    }

    pub fn into_table(self) -> Result<TableHash> {
        match self {
            HashDocument::Table {
                m, n, entries_b64, ..
            } => {
                check_table_dims(m, n)?;
                let bytes = BASE64
                    .decode(entries_b64)
                    .map_err(|e| Error::Serialization(e.to_string()))?;
                let entries = unpack_entries(&bytes, m, 1usize << n)?;
                TableHash::from_entries(m, n, entries)
            }
            HashDocument::Keyed { .. } => {
                Err(Error::Serialization("expected a table, found a keyed model".into()))
            }
        }
    }
}

fn pack_entries(entries: &[u32], m: u32) -> Vec<u8> {
    let total_bits = entries.len() * m as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut pos = 0usize;
    for &e in entries {
        for j in 0..m {
            if e >> j & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

fn unpack_entries(bytes: &[u8], m: u32, count: usize) -> Result<Vec<u32>> {
    let need = (count * m as usize).div_ceil(8);
    if bytes.len() != need {
        return Err(Error::Serialization(format!(
            "packed table has {} bytes, expected {need}",
            bytes.len()
        )));
    }
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut e = 0u32;
        for j in 0..m {
            e |= ((bytes[pos / 8] >> (pos % 8) & 1) as u32) << j;
            pos += 1;
        }
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_label_basics() {
        let b = BinLabel::new(0b1011, 4).unwrap();
        assert_eq!(b.popcount(), 3);
        assert_eq!(b.type_fraction(), 0.75);
        assert_eq!(b.to_string(), "1011");
        assert_eq!(BinLabel::parse_binary("0011").unwrap(), BinLabel::new(3, 4).unwrap());
        assert!(BinLabel::new(16, 4).is_err());
        assert!(BinLabel::parse_binary("012").is_err());
        assert_eq!(BinLabel::all_ones(3).unwrap().bits(), 7);
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, "\"1011\"");
        assert_eq!(serde_json::from_str::<BinLabel>(&json).unwrap(), b);
        assert!((BinLabel::all_ones(2).unwrap().key_probability(0.25) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn override_takes_precedence() {
        let mut h = KeyedHashModel::new(8, 16, 0.3, 1).unwrap();
        let b = BinLabel::new(0b1010_1010, 8).unwrap();
        h.set_override(5, b).unwrap();
        assert_eq!(h.eval(5).unwrap(), b);
        assert!(h.maps_to(5, b.bits()));
        assert!(h.eval(1 << 16).is_err());
        assert!(h.set_override(1 << 16, b).is_err());
        assert!(h.set_override(3, BinLabel::new(1, 4).unwrap()).is_err());
    }

    #[test]
    fn maps_to_agrees_with_eval() {
        let h = KeyedHashModel::new(3, 12, 0.3, 99).unwrap();
        for pw in 0..4096 {
            let b = h.eval_bits(pw);
            for t in 0..8 {
                assert_eq!(h.maps_to(pw, t), b == t);
            }
        }
    }

    #[test]
    fn unbiased_bits_are_balanced() {
        let h = KeyedHashModel::new(1, 20, 0.5, 7).unwrap();
        let ones: u64 = (0..100_000).map(|i| h.eval_bits(i)).sum();
        let mean = ones as f64 / 1e5;
        assert!((0.497..=0.503).contains(&mean), "{mean}");
    }

    #[test]
    fn all_ones_frequency_matches_bias() {
        let h = KeyedHashModel::new(4, 24, 0.25, 11).unwrap();
        let draws = 1_000_000u64;
        let hits = (0..draws).filter(|&i| h.maps_to(i, 0b1111)).count() as f64;
        let p = 0.25f64.powi(4);
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - draws as f64 * p).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn sample_table_matches_keyed_model_and_is_reproducible() {
        let t = sample_table_hash(2, 3, 0.5, 5).unwrap();
        assert_eq!(t.entries().len(), 8);
        assert!(t.entries().iter().all(|&e| e < 4));
        let k = KeyedHashModel::new(2, 3, 0.5, 5).unwrap();
        for i in 0..8 {
            assert_eq!(t.eval_bits(i), k.eval_bits(i));
        }
        assert_eq!(t, sample_table_hash(2, 3, 0.5, 5).unwrap());
        assert!(matches!(
            sample_table_hash(4, 25, 0.5, 0),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn different_seeds_give_different_tables() {
        for s in 0..100u64 {
            let a = sample_table_hash(4, 10, 0.3, 2 * s).unwrap();
            let b = sample_table_hash(4, 10, 0.3, 2 * s + 1).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn effective_distribution_examples() {
        let b0 = BinLabel::new(2, 2).unwrap();
        let c = TableHash::constant(5, b0).unwrap();
        let d = c.effective_distribution();
        assert_eq!(d.get(&b0), 1.0);
        assert_eq!(d.fractions.iter().sum::<f64>(), 1.0);
        assert_eq!(c.preimage_count(&b0), 32);

        let t = TableHash::from_entries(1, 1, vec![0, 1]).unwrap();
        assert_eq!(t.effective_distribution().fractions, vec![0.5, 0.5]);
        assert_eq!(preimage_count(&t, &BinLabel::new(0, 1).unwrap()), 1);
        assert!(TableHash::from_entries(1, 1, vec![0, 2]).is_err());
        assert!(TableHash::from_entries(1, 2, vec![0, 1]).is_err());
    }

    #[test]
    fn sampled_distribution_tracks_bias() {
        let t = sample_table_hash(4, 20, 0.3, 3).unwrap();
        let d = t.effective_distribution();
        let p = 0.3f64.powi(4);
        let n = (1u64 << 20) as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((d.fractions[15] - p).abs() < 3.0 * sigma);
    }

    #[test]
    fn preimage_counts_sum_to_domain() {
        let t = sample_table_hash(8, 16, 0.25, 4).unwrap();
        let counts = t.preimage_counts();
        assert_eq!(counts.iter().sum::<u64>(), 1 << 16);
        assert_eq!(counts.iter().sum::<u64>() as f64 / 256.0, 256.0);
    }

    #[test]
    fn ranking_examples() {
        let r: Vec<u64> = rank_bins_by_likelihood(2, 0.25).unwrap().iter().map(|b| b.bits()).collect();
        assert_eq!(r, vec![0b11, 0b01, 0b10, 0b00]);
        let r = rank_bins_by_likelihood(3, 0.4).unwrap();
        assert_eq!(r[0].bits(), 0b111);
        assert!(r[1..4].iter().all(|b| b.popcount() == 2));
        assert_eq!(r.len(), 8);
        let r = rank_bins_by_likelihood(12, 0.3).unwrap();
        let mut seen = vec![false; 4096];
        for w in r.windows(2) {
            assert!(w[0].key_probability(0.3) <= w[1].key_probability(0.3));
        }
        for b in &r {
            assert!(!seen[b.bits() as usize]);
            seen[b.bits() as usize] = true;
        }
        assert!(rank_bins_by_likelihood(25, 0.3).is_err());
        let first = RankedBins::new(40, 0.3).unwrap().take(3).collect::<Vec<_>>();
        assert_eq!(first[0].popcount(), 40);
        assert_eq!(first[1].popcount(), 39);
    }

    #[test]
    fn weight_layers() {
        let v: Vec<u64> = WeightLayer::new(4, 2).collect();
        assert_eq!(v, vec![0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        assert_eq!(WeightLayer::new(4, 0).collect::<Vec<_>>(), vec![0]);
        assert_eq!(WeightLayer::new(4, 4).collect::<Vec<_>>(), vec![15]);
        assert_eq!(WeightLayer::new(63, 63).count(), 1);
        assert_eq!(WeightLayer::new(63, 62).count(), 63);
        assert_eq!(WeightLayer::new(3, 4).count(), 0);
    }

    #[test]
    fn bin_set() {
        let mut s = BinSet::new(4).unwrap();
        assert!(s.insert(BinLabel::new(3, 4).unwrap()).unwrap());
        assert!(!s.insert(BinLabel::new(3, 4).unwrap()).unwrap());
        assert!(s.insert(BinLabel::new(15, 4).unwrap()).unwrap());
        assert_eq!(s.len(), 2);
        assert!(s.contains_bits(15));
        assert!(!s.contains_bits(14));
        let v: Vec<u64> = s.iter().map(|b| b.bits()).collect();
        assert_eq!(v, vec![3, 15]);
        assert!(s.insert(BinLabel::new(1, 3).unwrap()).is_err());
    }

    #[test]
    fn documents_round_trip() {
        let mut h = KeyedHashModel::new(10, 40, 0.3, u64::MAX - 3).unwrap();
        h.set_override(12345, BinLabel::all_ones(10).unwrap()).unwrap();
        h.set_override((1 << 40) - 1, BinLabel::new(5, 10).unwrap()).unwrap();
        let back = HashDocument::from_json(&h.to_json().unwrap()).unwrap().into_keyed().unwrap();
        assert_eq!(back, h);

        let t = sample_table_hash(5, 9, 0.3, 8).unwrap();
        let json = t.to_json().unwrap();
        assert!(json.contains("\"kind\":\"table\""));
        let back = HashDocument::from_json(&json).unwrap().into_table().unwrap();
        assert_eq!(back, t);
        assert!(HashDocument::from_json(&json).unwrap().into_keyed().is_err());
        assert!(HashDocument::from_json(&json.replace("\"version\":1", "\"version\":2")).is_err());
    }

    #[test]
    fn bernoulli_distribution_sums_to_one() {
        let d = EffectiveDistribution::bernoulli(10, 0.3).unwrap();
        let total: f64 = d.fractions.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(EffectiveDistribution::new(1, vec![0.5, 0.6]).is_err());
    }
}
