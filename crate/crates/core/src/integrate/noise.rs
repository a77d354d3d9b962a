//! Seeded randomness for paths.
//!
//! A [`NoiseSource`] names a stream by `(master_seed, stream_id)`. It hands out
//! two kinds of randomness:
//!
//! * a ChaCha generator for exact samplers (free particles, Gaussian matrices,
//!   squared Bessel draws);
//! * a [`BrownianPath`], which evaluates the driving Brownian motion on dyadic
//!   subintervals of `[0, horizon]` through a Lévy midpoint construction keyed
//!   by a hash of the node coordinates.
//!
//! The dyadic construction makes every increment a deterministic function of
//! its interval, not of how many draws came before it. Two integrations of
//! the same stream with different step sizes therefore see the same Brownian
//! trajectory, which is what makes step-size refinement checks meaningful.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deepest dyadic level; the clock runs in units of `horizon · 2^-MAX_LEVEL`.
pub const MAX_LEVEL: u32 = 60;
const TICKS_PER_HORIZON: u64 = 1 << MAX_LEVEL;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn chain(h: u64, word: u64) -> u64 {
    mix64(h.wrapping_add(GOLDEN) ^ mix64(word.wrapping_add(GOLDEN)))
}

#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    // (0, 1]
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Identity of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSource {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl NoiseSource {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// A source with an independent master seed, for a second family of
    /// streams inside the same experiment.
    pub fn derive(&self, label: u64) -> Self {
        Self {
            master_seed: chain(self.master_seed, label ^ 0x5eed),
            stream_id: self.stream_id,
        }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    pub fn brownian(&self, dim: usize, horizon: f64) -> BrownianPath {
        BrownianPath::new(*self, dim, horizon)
    }

    fn key(&self) -> u64 {
        chain(chain(0x6272_6f77_6e69_616e, self.master_seed), self.stream_id)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    level: u32,
    index: u64,
}

impl Node {
    fn contains(&self, level: u32, index: u64) -> bool {
        self.level <= level && (index >> (level - self.level)) == self.index
    }

    fn heap_id(&self) -> u64 {
        (1u64 << self.level) | self.index
    }
}

/// `dim` independent Brownian motions on `[0, horizon]`, consumed left to
/// right in dyadic steps.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    dim: usize,
    horizon: f64,
    key: u64,
    ticks: u64,
    // step length and half its square root, per level
    step_lens: Vec<f64>,
    half_sds: Vec<f64>,
    // root-to-leaf chain of cached nodes; only the first `depth` are live
    depth: usize,
    nodes: Vec<Node>,
    has_normals: Vec<bool>,
    // `dim` entries per stack slot
    increments: Vec<f64>,
    normals: Vec<f64>,
}

const STACK: usize = MAX_LEVEL as usize + 1;

impl BrownianPath {
    pub fn new(noise: NoiseSource, dim: usize, horizon: f64) -> Self {
        assert!(horizon > 0.0 && horizon.is_finite(), "horizon must be > 0");
        let key = noise.key();
        let step_lens: Vec<f64> = (0..=MAX_LEVEL)
            .map(|l| horizon / (1u64 << l) as f64)
            .collect();
        let half_sds = step_lens.iter().map(|h| 0.5 * h.sqrt()).collect();
        let mut increments = vec![0.0; dim * STACK];
        // the root increment uses the normals of a virtual parent above level 0
        fill_normals(key, u64::MAX, &mut increments[..dim]);
        let scale = horizon.sqrt();
        increments[..dim].iter_mut().for_each(|z| *z *= scale);
        Self {
            dim,
            horizon,
            key,
            ticks: 0,
            step_lens,
            half_sds,
            depth: 1,
            nodes: vec![Node { level: 0, index: 0 }; STACK],
            has_normals: vec![false; STACK],
            increments,
            normals: vec![0.0; dim * STACK],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Current position of the clock.
    pub fn time(&self) -> f64 {
        if self.ticks == TICKS_PER_HORIZON {
            self.horizon
        } else {
            self.horizon * (self.ticks as f64 / TICKS_PER_HORIZON as f64)
        }
    }

    pub fn is_finished(&self) -> bool {
        self.ticks >= TICKS_PER_HORIZON
    }

    /// Length of a step at `level`.
    pub fn step_len(&self, level: u32) -> f64 {
        self.step_lens[level as usize]
    }

    /// Coarsest level whose step is at most `target` and starts on the
    /// current clock position.
    pub fn level_for(&self, target: f64) -> u32 {
        let mut level = (self.step_lens.partition_point(|&h| h > target) as u32).min(MAX_LEVEL);
        if self.ticks > 0 {
            let aligned = MAX_LEVEL - self.ticks.trailing_zeros().min(MAX_LEVEL);
            level = level.max(aligned);
        }
        level
    }

    /// Increments over the next step at `level`; advances the clock.
    ///
    /// Panics if the clock is not aligned to `level` or the path is exhausted.
    pub fn advance(&mut self, level: u32) -> &[f64] {
        assert!(level <= MAX_LEVEL);
        assert!(!self.is_finished(), "Brownian path exhausted");
        let shift = MAX_LEVEL - level;
        assert_eq!(self.ticks & ((1u64 << shift) - 1), 0, "misaligned step");
        let index = self.ticks >> shift;
        self.ticks += 1u64 << shift;
        self.descend_to(level, index);
        self.top()
    }

    /// Increments over the dyadic interval `[index, index + 1] · horizon · 2^-level`
    /// without moving the clock.
    pub fn increment(&mut self, level: u32, index: u64) -> Vec<f64> {
        assert!(level <= MAX_LEVEL && index < (1u64 << level));
        self.descend_to(level, index);
        self.top().to_vec()
    }

    fn top(&self) -> &[f64] {
        let base = (self.depth - 1) * self.dim;
        &self.increments[base..base + self.dim]
    }

    fn descend_to(&mut self, level: u32, index: u64) {
        // the root contains every interval
        while self.depth > 1 && !self.nodes[self.depth - 1].contains(level, index) {
            self.depth -= 1;
        }
        let dim = self.dim;
        loop {
            let slot = self.depth - 1;
            let parent = self.nodes[slot];
            if parent.level == level {
                break;
            }
            let base = slot * dim;
            if !self.has_normals[slot] {
                fill_normals(self.key, parent.heap_id(), &mut self.normals[base..base + dim]);
                self.has_normals[slot] = true;
            }
            let child = Node {
                level: parent.level + 1,
                index: index >> (level - parent.level - 1),
            };
            let half_sd = self.half_sds[parent.level as usize];
            let signed = if child.index & 1 == 0 { half_sd } else { -half_sd };
            let (head, tail) = self.increments.split_at_mut(base + dim);
            let parent_incr = &head[base..];
            let normals = &self.normals[base..base + dim];
            for ((c, p), z) in tail[..dim].iter_mut().zip(parent_incr).zip(normals) {
                *c = 0.5 * p + signed * z;
            }
            self.nodes[slot + 1] = child;
            self.has_normals[slot + 1] = false;
            self.depth += 1;
        }
    }
}

/// Standard normals attached to one tree node, one per coordinate.
///
/// Marsaglia's polar method on hashed uniforms; a rejected pair moves on to
/// the next counter value, so the output is still a pure function of the
/// node.
fn fill_normals(key: u64, node_id: u64, out: &mut [f64]) {
    let node_key = chain(key, node_id);
    let dim = out.len();
    let mut counter = 0u64;
    let mut filled = 0;
    while filled < dim {
        let h = chain(node_key, counter);
        counter += 1;
        let u = 2.0 * unit_open_closed(mix64(h ^ 0x01)) - 1.0;
        let v = 2.0 * unit_open_closed(mix64(h ^ 0x02)) - 1.0;
        let s = u * u + v * v;
        if s >= 1.0 || s == 0.0 {
            continue;
        }
        let factor = (-2.0 * s.ln() / s).sqrt();
        out[filled] = u * factor;
        filled += 1;
        if filled < dim {
            out[filled] = v * factor;
            filled += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_sum_to_parent() {
        let mut path = NoiseSource::new(7, 3).brownian(4, 2.0);
        let parent = path.increment(5, 11);
        let left = path.increment(6, 22);
        let right = path.increment(6, 23);
        for i in 0..4 {
            assert!((left[i] + right[i] - parent[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stepping_order_does_not_change_increments() {
        let noise = NoiseSource::new(99, 0);
        let mut coarse = noise.brownian(3, 1.0);
        let mut fine = noise.brownian(3, 1.0);
        for _ in 0..8 {
            let c = coarse.advance(3).to_vec();
            let a = fine.advance(4).to_vec();
            let b = fine.advance(4).to_vec();
            for i in 0..3 {
                assert!((a[i] + b[i] - c[i]).abs() < 1e-13);
            }
        }
        assert!(coarse.is_finished() && fine.is_finished());
        assert_eq!(coarse.time(), 1.0);
    }

    #[test]
    fn level_selection_respects_alignment() {
        let mut path = NoiseSource::new(1, 1).brownian(3, 1.0);
        assert_eq!(path.level_for(0.3), 2);
        assert_eq!(path.level_for(5.0), 0);
        path.advance(3);
        // clock at 1/8: a quarter step would be misaligned
        assert_eq!(path.level_for(0.3), 3);
        assert!(path.step_len(path.level_for(1e-5)) <= 1e-5);
        assert!(path.step_len(path.level_for(1e-5)) > 0.5e-5);
    }

    #[test]
    fn increments_have_unit_variance_per_time() {
        let mut path = NoiseSource::new(2024, 5).brownian(2, 1.0);
        let level = 14;
        let n = 1u64 << level;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            for &dw in path.advance(level) {
                s1 += dw;
                s2 += dw * dw;
            }
        }
        let h = 0.5f64.powi(level as i32);
        let m = (2 * n) as f64;
        let var = s2 / m / h;
        assert!((var - 1.0).abs() < 0.03, "variance ratio {var}");
        assert!((s1 / m / h.sqrt()).abs() < 0.03);
    }

    #[test]
    fn distinct_streams_differ() {
        let a = NoiseSource::new(1, 0).brownian(3, 1.0).increment(0, 0);
        let b = NoiseSource::new(1, 1).brownian(3, 1.0).increment(0, 0);
        let c = NoiseSource::new(1, 0).derive(9).brownian(3, 1.0).increment(0, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
