//! Local variation patterns: 8-neighbor sign codes aggregated with distinct
//! per-direction weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{PaddingMode, Tensor};

/// Neighbor offsets `(dy, dx)`, clockwise from the top-left: NW, N, NE, E, SE, S, SW, W.
pub const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// Per-direction aggregation weights.
///
/// Construction checks that every one of the 256 subset sums is distinct, so
/// an aggregated value always identifies its pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct LvpWeights {
    w: [f32; 8],
    sums: Box<[f32; 256]>,
}

impl LvpWeights {
    pub fn new(w: [f32; 8]) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Construction("LVP weights must be finite".into()));
        }
        for i in 0..8 {
            for j in i + 1..8 {
                if w[i] == w[j] {
                    return Err(Error::Construction(format!(
                        "LVP weights {i} and {j} are equal ({})",
                        w[i]
                    )));
                }
            }
        }
        let mut sums = Box::new([0f32; 256]);
        for (pattern, s) in sums.iter_mut().enumerate() {
            *s = aggregate(pattern as u8, &w);
        }
        let mut sorted: Vec<f32> = sums.to_vec();
        sorted.sort_by(f32::total_cmp);
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Construction(
                "LVP weights have colliding subset sums".into(),
            ));
        }
        Ok(Self { w, sums })
    }

    /// `w_i = 2^i`: integer codes in `[0, 255]` equal to the pattern byte.
    pub fn powers_of_two() -> Self {
        Self::new(std::array::from_fn(|i| (1u32 << i) as f32)).expect("powers of two are bijective")
    }

    /// Eight seeded reals in `[0.5, 1.5)`, redrawn until the subset-sum check passes.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let w: [f32; 8] = std::array::from_fn(|_| rng.gen_range(0.5f32..1.5));
            if let Ok(weights) = Self::new(w) {
                return weights;
            }
        }
    }

    pub fn values(&self) -> &[f32; 8] {
        &self.w
    }

    pub fn is_powers_of_two(&self) -> bool {
        self.w.iter().enumerate().all(|(i, &v)| v == (1u32 << i) as f32)
    }

    /// Aggregated value of `pattern`.
    pub fn code(&self, pattern: u8) -> f32 {
        self.sums[pattern as usize]
    }

    /// Largest attainable aggregate, used to bring maps into `[0, 1]`.
    pub fn max_code(&self) -> f32 {
        self.sums.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Inverse of [`code`](Self::code); `None` if `value` is not an exact subset sum.
    pub fn decode(&self, value: f32) -> Option<u8> {
        self.sums.iter().position(|&s| s == value).map(|p| p as u8)
    }
}

impl Default for LvpWeights {
    fn default() -> Self {
        Self::powers_of_two()
    }
}

fn aggregate(pattern: u8, w: &[f32; 8]) -> f32 {
    (0..8)
        .filter(|i| pattern & (1 << i) != 0)
        .fold(0.0, |acc, i| acc + w[i])
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvpFeature {
    pub map: Tensor,
    /// Pattern byte per element, same layout as `map`.
    pub patterns: Vec<u8>,
    pub weights: LvpWeights,
}

/// Bit `i` is set iff the center is strictly greater than neighbor `i`.
pub fn encode_patch(patch: &[[f32; 3]; 3]) -> u8 {
    let center = patch[1][1];
    NEIGHBORS
        .iter()
        .enumerate()
        .fold(0u8, |acc, (i, &(dy, dx))| {
            let n = patch[(1 + dy) as usize][(1 + dx) as usize];
            if center - n > 0.0 {
                acc | (1 << i)
            } else {
                acc
            }
        })
}

pub fn extract_lvp(x: &Tensor, weights: &LvpWeights, padding: PaddingMode) -> Result<LvpFeature> {
    let (c, h, w) = x.shape();
    if h < 3 || w < 3 {
        return Err(Error::Dimension(format!(
            "LVP needs at least 3x3 pixels, got {h}x{w}"
        )));
    }
    let mut patterns = Vec::with_capacity(x.len());
    for ch in 0..c {
        let plane = x.channel(ch);
        let fetch = |y: isize, xx: isize| match (padding.resolve(y, h), padding.resolve(xx, w)) {
            (Some(a), Some(b)) => plane[a * w + b],
            _ => 0.0,
        };
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut patch = [[0f32; 3]; 3];
                for (r, row) in patch.iter_mut().enumerate() {
                    for (q, v) in row.iter_mut().enumerate() {
                        *v = fetch(y + r as isize - 1, xx + q as isize - 1);
                    }
                }
                patterns.push(encode_patch(&patch));
            }
        }
    }
    let map = Tensor::new(c, h, w, patterns.iter().map(|&p| weights.code(p)).collect())?;
    Ok(LvpFeature {
        map,
        patterns,
        weights: weights.clone(),
    })
}

/// Counts of each pattern byte. Requires power-of-two weights.
pub fn code_histogram(f: &LvpFeature) -> Result<[u64; 256]> {
    if !f.weights.is_powers_of_two() {
        return Err(Error::Unsupported(
            "code histogram is defined for power-of-two LVP weights only".into(),
        ));
    }
    let mut hist = [0u64; 256];
    for &p in &f.patterns {
        hist[p as usize] += 1;
    }
    Ok(hist)
}

/// Shannon entropy, in bits, of a normalized histogram.
pub fn pattern_entropy(hist: &[u64]) -> Result<f64> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(Error::Domain("entropy of an empty histogram".into()));
    }
    let n = total as f64;
    Ok(hist
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}
