//! Count-Min sketch over a seeded, pairwise-independent hash family.
//!
//! A sketch is a `d x w` matrix of counters. Inserting a key adds its count to
//! one cell per row (the column picked by that row's hash) and a point query
//! returns the minimum of those `d` cells. Since every insert adds the same
//! amount to every row, all row sums of an insertion-built sketch are equal:
//! `A C 1 = 0` with `A` the `(d-1) x d` first-difference matrix.
//!
//! Counters are `f64` so the same type can hold the fractional sub-sketches
//! produced by the decomposition solver.
//!
//! # Hash family
//!
//! Keys are first reduced to a 64-bit fingerprint with FNV-1a over their
//! canonical encoding (little-endian `u32` length prefix followed by the raw
//! bytes). Row `i` then maps a fingerprint `x` to
//!
//! ```text
//! h_i(x) = ((a_i * (x mod p) + b_i) mod p) mod w,    p = 2^61 - 1
//! ```
//!
//! where `(a_i, b_i)` are drawn, in row order, from a SplitMix64 stream seeded
//! with the family seed (`a_i` in `[1, p)`, `b_i` in `[0, p)`). The scheme only
//! uses integer arithmetic so it is reproducible across platforms and
//! languages.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MERSENNE_61: u64 = (1 << 61) - 1;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error, PartialEq)]
pub enum SketchError {
    #[error("sketch depth must be at least 2, got {0}")]
    DepthTooSmall(usize),
    #[error("sketch width must be at least 2, got {0}")]
    WidthTooSmall(usize),
    #[error("sketch shape mismatch: {left_d}x{left_w} vs {right_d}x{right_w}")]
    ShapeMismatch {
        left_d: usize,
        left_w: usize,
        right_d: usize,
        right_w: usize,
    },
    #[error("hash family seed mismatch: {0} vs {1}")]
    SeedMismatch(u64, u64),
    #[error("expected {expected} counters, got {actual}")]
    CountLength { expected: usize, actual: usize },
    #[error("counter at ({row}, {col}) is not a finite nonnegative number: {value}")]
    BadCounter { row: usize, col: usize, value: f64 },
}

/// Canonical byte identity of a flow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey(Vec<u8>);

impl FlowKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        FlowKey(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Length-prefixed encoding used as hash input.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.0.len());
        out.extend_from_slice(&(self.0.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.0);
        out
    }

    pub fn fingerprint(&self) -> u64 {
        self.encode().iter().fold(FNV_OFFSET, |h, &b| {
            (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
        })
    }
}

impl From<&str> for FlowKey {
    fn from(s: &str) -> Self {
        FlowKey(s.as_bytes().to_vec())
    }
}

impl From<String> for FlowKey {
    fn from(s: String) -> Self {
        FlowKey(s.into_bytes())
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

// Files carry flow keys as JSON strings, so only UTF-8 keys can be written.
impl Serialize for FlowKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(s) => serializer.serialize_str(s),
            Err(_) => Err(serde::ser::Error::custom("flow key is not valid UTF-8")),
        }
    }
}

impl<'de> Deserialize<'de> for FlowKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer).map(FlowKey::from)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `d` hash functions into `[0, w)`, derived from one 64-bit seed.
#[derive(Debug, Clone)]
pub struct HashFamily {
    depth: usize,
    width: usize,
    seed: u64,
    coeffs: Vec<(u64, u64)>,
}

impl HashFamily {
    pub fn new(depth: usize, width: usize, seed: u64) -> Result<Self, SketchError> {
        if depth < 2 {
            return Err(SketchError::DepthTooSmall(depth));
        }
        if width < 2 {
            return Err(SketchError::WidthTooSmall(width));
        }
        let mut state = seed;
        let coeffs = (0..depth)
            .map(|_| {
                let a = splitmix64(&mut state) % (MERSENNE_61 - 1) + 1;
                let b = splitmix64(&mut state) % MERSENNE_61;
                (a, b)
            })
            .collect();
        Ok(HashFamily {
            depth,
            width,
            seed,
            coeffs,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Column selected by `row` for a precomputed fingerprint.
    pub fn index_of_fingerprint(&self, row: usize, fingerprint: u64) -> usize {
        let (a, b) = self.coeffs[row];
        let x = fingerprint % MERSENNE_61;
        let h = (u128::from(a) * u128::from(x) + u128::from(b)) % u128::from(MERSENNE_61);
        (h % self.width as u128) as usize
    }

    pub fn index(&self, row: usize, key: &FlowKey) -> usize {
        self.index_of_fingerprint(row, key.fingerprint())
    }

    /// Column for every row, in row order.
    pub fn indices(&self, key: &FlowKey) -> Vec<usize> {
        let fp = key.fingerprint();
        (0..self.depth)
            .map(|row| self.index_of_fingerprint(row, fp))
            .collect()
    }

    fn check_compatible(&self, other: &HashFamily) -> Result<(), SketchError> {
        if self.depth != other.depth || self.width != other.width {
            return Err(SketchError::ShapeMismatch {
                left_d: self.depth,
                left_w: self.width,
                right_d: other.depth,
                right_w: other.width,
            });
        }
        if self.seed != other.seed {
            return Err(SketchError::SeedMismatch(self.seed, other.seed));
        }
        Ok(())
    }
}

impl PartialEq for HashFamily {
    fn eq(&self, other: &Self) -> bool {
        self.depth == other.depth && self.width == other.width && self.seed == other.seed
    }
}

/// A `d x w` Count-Min sketch. Counters are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CmSketch {
    family: HashFamily,
    counts: Vec<f64>,
}

impl CmSketch {
    pub fn new(depth: usize, width: usize, seed: u64) -> Result<Self, SketchError> {
        Ok(Self::with_family(HashFamily::new(depth, width, seed)?))
    }

    pub fn with_family(family: HashFamily) -> Self {
        let counts = vec![0.0; family.depth * family.width];
        CmSketch { family, counts }
    }

    /// Wraps explicit counters; used for sketches produced by the solver and
    /// for deserialization.
    pub fn from_counts(family: HashFamily, counts: Vec<f64>) -> Result<Self, SketchError> {
        let expected = family.depth * family.width;
        if counts.len() != expected {
            return Err(SketchError::CountLength {
                expected,
                actual: counts.len(),
            });
        }
        if let Some(pos) = counts.iter().position(|c| !c.is_finite() || *c < 0.0) {
            return Err(SketchError::BadCounter {
                row: pos / family.width,
                col: pos % family.width,
                value: counts[pos],
            });
        }
        Ok(CmSketch { family, counts })
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn depth(&self) -> usize {
        self.family.depth
    }

    pub fn width(&self) -> usize {
        self.family.width
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.counts[row * self.family.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.family.width;
        &self.counts[row * w..(row + 1) * w]
    }

    pub fn insert(&mut self, key: &FlowKey, count: u64) {
        self.insert_fingerprint(key.fingerprint(), count);
    }

    pub fn insert_fingerprint(&mut self, fingerprint: u64, count: u64) {
        let w = self.family.width;
        for row in 0..self.family.depth {
            let col = self.family.index_of_fingerprint(row, fingerprint);
            self.counts[row * w + col] += count as f64;
        }
    }

    pub fn query(&self, key: &FlowKey) -> f64 {
        let fp = key.fingerprint();
        (0..self.family.depth)
            .map(|row| self.get(row, self.family.index_of_fingerprint(row, fp)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn add(&self, other: &CmSketch) -> Result<CmSketch, SketchError> {
        self.family.check_compatible(&other.family)?;
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        Ok(CmSketch {
            family: self.family.clone(),
            counts,
        })
    }

    /// Elementwise `max(self - other, 0)`.
    pub fn sub_clamped(&self, other: &CmSketch) -> Result<CmSketch, SketchError> {
        self.family.check_compatible(&other.family)?;
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| (a - b).max(0.0))
            .collect();
        Ok(CmSketch {
            family: self.family.clone(),
            counts,
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.family.depth)
            .map(|r| self.row(r).iter().sum())
            .collect()
    }

    /// Largest absolute entry of `A C 1`, i.e. of consecutive row-sum differences.
    pub fn row_sum_residual(&self) -> f64 {
        self.row_sums()
            .windows(2)
            .map(|p| (p[0] - p[1]).abs())
            .fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

#[derive(Serialize, Deserialize)]
struct SketchRepr {
    d: usize,
    w: usize,
    seed: u64,
    counts: Vec<f64>,
}

impl Serialize for CmSketch {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SketchRepr {
            d: self.family.depth,
            w: self.family.width,
            seed: self.family.seed,
            counts: self.counts.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CmSketch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = SketchRepr::deserialize(deserializer)?;
        let family =
            HashFamily::new(repr.d, repr.w, repr.seed).map_err(serde::de::Error::custom)?;
        CmSketch::from_counts(family, repr.counts).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key(i: usize) -> FlowKey {
        FlowKey::from(format!("flow-{i}"))
    }

    #[test]
    fn fresh_sketch_is_zero() {
        let s = CmSketch::new(4, 32, 7).unwrap();
        assert_eq!(s.counts().len(), 128);
        assert!(s.counts().iter().all(|&c| c == 0.0));
        assert_eq!(s.query(&FlowKey::from("anything")), 0.0);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert_eq!(CmSketch::new(1, 32, 7), Err(SketchError::DepthTooSmall(1)));
        assert_eq!(CmSketch::new(4, 1, 7), Err(SketchError::WidthTooSmall(1)));
    }

    #[test]
    fn indices_in_range_and_deterministic() {
        let a = HashFamily::new(5, 17, 99).unwrap();
        let b = HashFamily::new(5, 17, 99).unwrap();
        for i in 0..500 {
            let ix = a.indices(&key(i));
            assert!(ix.iter().all(|&c| c < 17));
            assert_eq!(ix, b.indices(&key(i)));
        }
    }

    #[test]
    fn rows_use_distinct_coefficients() {
        let f = HashFamily::new(8, 32, 1).unwrap();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(f.coeffs[i], f.coeffs[j]);
            }
        }
    }

    #[test]
    fn encoding_is_length_prefixed() {
        assert_eq!(FlowKey::from("ab").encode(), vec![2, 0, 0, 0, b'a', b'b']);
        // "a" + "b" must not hash like "ab"
        assert_ne!(
            FlowKey::from("ab").encode(),
            FlowKey::new(vec![b'a']).encode()
        );
    }

    #[test]
    fn single_key_query_is_exact() {
        let mut s = CmSketch::new(4, 32, 7).unwrap();
        s.insert(&FlowKey::from("A"), 3);
        assert_eq!(s.query(&FlowKey::from("A")), 3.0);
        assert_eq!(s.row_sum_residual(), 0.0);
        assert_eq!(s.total(), 12.0);
    }

    #[test]
    fn query_takes_row_minimum() {
        let family = HashFamily::new(2, 2, 0).unwrap();
        // find a key that hashes to (row0 -> col0, row1 -> col1)
        let k = (0..1000)
            .map(key)
            .find(|k| family.indices(k) == vec![0, 1])
            .expect("some key maps to (0, 1)");
        let s = CmSketch::from_counts(family, vec![5.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(s.query(&k), 3.0);
    }

    #[test]
    fn row_sum_residual_of_unbalanced_sketch() {
        let family = HashFamily::new(2, 2, 0).unwrap();
        let s = CmSketch::from_counts(family, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.row_sum_residual(), 1.0);
    }

    #[test]
    fn random_stream_never_underestimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = CmSketch::new(4, 16, 3).unwrap();
        let mut exact: HashMap<usize, u64> = HashMap::new();
        for _ in 0..500 {
            let k = rng.random_range(0..100);
            s.insert(&key(k), 1);
            *exact.entry(k).or_default() += 1;
        }
        let total: u64 = exact.values().sum();
        for (k, &c) in &exact {
            let q = s.query(&key(*k));
            assert!(q >= c as f64);
            assert!(q <= total as f64);
        }
        assert_eq!(s.row_sum_residual(), 0.0);
        assert_eq!(s.total(), 4.0 * 500.0);
    }

    #[test]
    fn add_and_sub_clamped() {
        let mut a = CmSketch::new(3, 8, 5).unwrap();
        let mut b = CmSketch::new(3, 8, 5).unwrap();
        let mut both = CmSketch::new(3, 8, 5).unwrap();
        for i in 0..20 {
            a.insert(&key(i), 2);
            both.insert(&key(i), 2);
        }
        for i in 10..30 {
            b.insert(&key(i), 1);
            both.insert(&key(i), 1);
        }
        let zero = CmSketch::new(3, 8, 5).unwrap();
        assert_eq!(a.add(&zero).unwrap(), a);
        assert_eq!(a.add(&b).unwrap(), both);
        assert_eq!(both.sub_clamped(&b).unwrap(), a);
        assert_eq!(a.sub_clamped(&a).unwrap(), zero);
        assert_eq!(zero.sub_clamped(&a).unwrap(), zero);
        for i in 0..30 {
            let k = key(i);
            assert!(both.query(&k) >= a.query(&k) + b.query(&k));
        }
    }

    #[test]
    fn arithmetic_rejects_mismatched_families() {
        let a = CmSketch::new(3, 8, 5).unwrap();
        assert!(matches!(
            a.add(&CmSketch::new(3, 9, 5).unwrap()),
            Err(SketchError::ShapeMismatch { .. })
        ));
        assert_eq!(
            a.sub_clamped(&CmSketch::new(3, 8, 6).unwrap()),
            Err(SketchError::SeedMismatch(5, 6))
        );
    }

    #[test]
    fn json_round_trip() {
        let mut s = CmSketch::new(4, 8, u64::MAX - 3).unwrap();
        for i in 0..40 {
            s.insert(&key(i), i as u64 + 1);
        }
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with("{\"d\":4,\"w\":8,\"seed\":18446744073709551612,"));
        let back: CmSketch = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_rejects_negative_counter() {
        let text = r#"{"d":2,"w":2,"seed":1,"counts":[1,2,-1,0]}"#;
        assert!(serde_json::from_str::<CmSketch>(text).is_err());
    }
}
