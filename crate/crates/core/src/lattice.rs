//! Discrete bridges, their particle picture, and O(1) corner flips.
//!
//! Indices follow the lattice convention: steps and occupations are numbered
//! `1..=2N`, heights `0..=2N`, and corners live on `1..=2N-1`. Corner `k` is
//! a *down* corner when step `k` is `-1` and step `k+1` is `+1` (a local
//! minimum of the height), and an *up* corner in the mirrored case.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::binomial;

/// Largest half-length accepted by the exhaustive enumeration.
pub const MAX_ENUMERATION_N: usize = 12;

const ABSENT: u32 = u32::MAX;

/// Index set over `0..capacity` with O(1) insert, remove, membership and
/// uniform access by position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CornerSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

impl CornerSet {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            items: Vec::new(),
            pos: vec![ABSENT; capacity],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.items.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.pos.get(k).is_some_and(|&p| p != ABSENT)
    }

    /// Member stored at position `i` (`i < len`). Order is arbitrary.
    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.items[i] as usize
    }

    #[inline]
    pub fn insert(&mut self, k: usize) {
        if self.pos[k] == ABSENT {
            self.pos[k] = self.items.len() as u32;
            self.items.push(k as u32);
        }
    }

    #[inline]
    pub fn remove(&mut self, k: usize) {
        let p = self.pos[k];
        if p == ABSENT {
            return;
        }
        let last = *self.items.last().expect("non-empty when member present");
        self.items.swap_remove(p as usize);
        if last as usize != k {
            self.pos[last as usize] = p;
        }
        self.pos[k] = ABSENT;
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|&k| k as usize)
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.iter().collect();
        v.sort_unstable();
        v
    }
}

/// Direction of a corner flip, named by the height change at the corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlipDir {
    /// A down corner turned into an up corner: `S(k) += 2`.
    Raise,
    /// An up corner turned into a down corner: `S(k) -= 2`.
    Lower,
}

impl FlipDir {
    #[inline]
    pub fn height_delta(self) -> i64 {
        match self {
            FlipDir::Raise => 2,
            FlipDir::Lower => -2,
        }
    }
}

/// Undo record of a single flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Flip {
    pub site: usize,
    pub dir: FlipDir,
}

/// A bridge of `2N` unit steps from `(0,0)` to `(2N,0)` with cached heights,
/// area, and corner sets.
#[derive(Clone, Debug)]
pub struct BridgeConfig {
    n_half: usize,
    steps: Vec<i8>,
    heights: Vec<i32>,
    area: i64,
    down: CornerSet,
    up: CornerSet,
}

impl PartialEq for BridgeConfig {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
    }
}

impl Eq for BridgeConfig {}

impl std::hash::Hash for BridgeConfig {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.steps.hash(state);
    }
}

impl BridgeConfig {
    /// Builds a bridge from its `±1` steps, validating the bridge condition.
    pub fn from_steps(steps: &[i8]) -> Result<Self> {
        if let Some((index, &value)) = steps.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(Error::BadStep {
                index: index + 1,
                value: value as i64,
            });
        }
        let total: i64 = steps.iter().map(|&s| s as i64).sum();
        if total != 0 {
            return Err(Error::NotABridge {
                final_height: total,
            });
        }
        if steps.is_empty() {
            return Err(Error::BadParam("a bridge needs at least two steps".into()));
        }
        Ok(Self::build(steps.to_vec()))
    }

    /// Same as [`from_steps`](Self::from_steps) for wider integer input.
    pub fn from_step_values(steps: &[i64]) -> Result<Self> {
        if let Some((index, &value)) = steps.iter().enumerate().find(|(_, &s)| s != 1 && s != -1) {
            return Err(Error::BadStep {
                index: index + 1,
                value,
            });
        }
        let narrowed: Vec<i8> = steps.iter().map(|&s| s as i8).collect();
        Self::from_steps(&narrowed)
    }

    fn build(steps: Vec<i8>) -> Self {
        let len = steps.len();
        let n_half = len / 2;
        let mut heights = Vec::with_capacity(len + 1);
        heights.push(0i32);
        let mut h = 0i32;
        let mut area = 0i64;
        for &s in &steps {
            h += s as i32;
            heights.push(h);
            area += h as i64;
        }
        let mut cfg = Self {
            n_half,
            steps,
            heights,
            area,
            down: CornerSet::with_capacity(len + 1),
            up: CornerSet::with_capacity(len + 1),
        };
        for k in 1..len {
            cfg.refresh_corner(k);
        }
        cfg
    }

    /// Bridge encoded by the low `2N` bits of `mask`, bit `i` set meaning
    /// step `i+1` is `+1`.
    pub fn from_mask(n_half: usize, mask: u64) -> Result<Self> {
        let steps: Vec<i8> = (0..2 * n_half)
            .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
            .collect();
        Self::from_steps(&steps)
    }

    /// The zig-zag profile `S(k) = k mod 2`.
    pub fn flat(n_half: usize) -> Self {
        let steps = (0..2 * n_half)
            .map(|i| if i % 2 == 0 { 1 } else { -1 })
            .collect();
        Self::build(steps)
    }

    /// The maximal profile `k ∧ (2N-k)`.
    pub fn maximal(n_half: usize) -> Self {
        let steps = (0..2 * n_half)
            .map(|i| if i < n_half { 1 } else { -1 })
            .collect();
        Self::build(steps)
    }

    /// The minimal profile `-(k ∧ (2N-k))`.
    pub fn minimal(n_half: usize) -> Self {
        let steps = (0..2 * n_half)
            .map(|i| if i < n_half { -1 } else { 1 })
            .collect();
        Self::build(steps)
    }

    /// Lattice bridge tracking `2N·m0(k/2N)` for a 1-Lipschitz macroscopic
    /// profile `m0` vanishing at both ends. Each step moves towards the target,
    /// so `|S(k) - 2N m0(k/2N)| <= 1` throughout.
    pub fn from_profile(n_half: usize, m0: impl Fn(f64) -> f64) -> Result<Self> {
        let len = 2 * n_half;
        let scale = len as f64;
        let mut steps = Vec::with_capacity(len);
        let mut h = 0i64;
        for k in 1..=len {
            let target = scale * m0(k as f64 / scale);
            let remaining = (len - k) as i64;
            // stay able to come back to zero
            let up_ok = (h + 1).abs() <= remaining;
            let down_ok = (h - 1).abs() <= remaining;
            let want_up = (h as f64) < target || ((h as f64) == target && h < 0);
            let s = match (want_up && up_ok, down_ok) {
                (true, _) => 1,
                (false, true) => -1,
                (false, false) => 1,
            };
            h += s;
            steps.push(s as i8);
        }
        Self::from_steps(&steps)
    }

    #[inline]
    pub fn n_half(&self) -> usize {
        self.n_half
    }

    /// Number of steps, `2N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Step `k` for `k` in `1..=2N`.
    #[inline]
    pub fn step(&self, k: usize) -> i8 {
        self.steps[k - 1]
    }

    pub fn steps(&self) -> &[i8] {
        &self.steps
    }

    /// Height `S(k)` for `k` in `0..=2N`.
    #[inline]
    pub fn height(&self, k: usize) -> i64 {
        self.heights[k] as i64
    }

    pub fn heights(&self) -> &[i32] {
        &self.heights
    }

    /// Piecewise-affine extension of `S` to real abscissae in `[0, 2N]`.
    pub fn height_at(&self, pos: f64) -> f64 {
        let len = self.len() as f64;
        let p = pos.clamp(0.0, len);
        let k = (p.floor() as usize).min(self.len() - 1);
        let frac = p - k as f64;
        let a = self.heights[k] as f64;
        let b = self.heights[k + 1] as f64;
        a + frac * (b - a)
    }

    /// `A(S) = Σ_{k=1}^{2N} S(k)`.
    #[inline]
    pub fn area(&self) -> i64 {
        self.area
    }

    pub fn down_corners(&self) -> &CornerSet {
        &self.down
    }

    pub fn up_corners(&self) -> &CornerSet {
        &self.up
    }

    #[inline]
    pub fn is_down_corner(&self, k: usize) -> bool {
        self.down.contains(k)
    }

    #[inline]
    pub fn is_up_corner(&self, k: usize) -> bool {
        self.up.contains(k)
    }

    #[inline]
    fn refresh_corner(&mut self, k: usize) {
        if k == 0 || k >= self.steps.len() {
            return;
        }
        let (a, b) = (self.steps[k - 1], self.steps[k + 1 - 1]);
        if a == -1 && b == 1 {
            self.down.insert(k);
            self.up.remove(k);
        } else if a == 1 && b == -1 {
            self.up.insert(k);
            self.down.remove(k);
        } else {
            self.down.remove(k);
            self.up.remove(k);
        }
    }

    /// Flips the corner at `k` in place and returns the undo record.
    #[inline]
    pub fn flip(&mut self, k: usize) -> Result<Flip> {
        let dir = if self.down.contains(k) {
            FlipDir::Raise
        } else if self.up.contains(k) {
            FlipDir::Lower
        } else {
            return Err(Error::NotACorner(k));
        };
        self.apply(k, dir);
        Ok(Flip { site: k, dir })
    }

    #[inline]
    fn apply(&mut self, k: usize, dir: FlipDir) {
        let (new_left, delta) = match dir {
            FlipDir::Raise => (1i8, 2i32),
            FlipDir::Lower => (-1i8, -2i32),
        };
        self.steps[k - 1] = new_left;
        self.steps[k] = -new_left;
        self.heights[k] += delta;
        self.area += delta as i64;
        self.refresh_corner(k - 1);
        self.refresh_corner(k);
        self.refresh_corner(k + 1);
    }

    /// Reverts a flip previously returned by [`flip`](Self::flip).
    pub fn undo(&mut self, flip: Flip) {
        let reverse = match flip.dir {
            FlipDir::Raise => FlipDir::Lower,
            FlipDir::Lower => FlipDir::Raise,
        };
        debug_assert!(match reverse {
            FlipDir::Raise => self.down.contains(flip.site),
            FlipDir::Lower => self.up.contains(flip.site),
        });
        self.apply(flip.site, reverse);
    }

    /// Non-mutating flip.
    pub fn flipped(&self, k: usize) -> Result<Self> {
        let mut out = self.clone();
        out.flip(k)?;
        Ok(out)
    }

    /// Recomputes every cache from the steps and compares.
    pub fn check_invariants(&self) -> bool {
        let fresh = Self::build(self.steps.clone());
        let len = self.len() as i64;
        fresh.heights == self.heights
            && fresh.area == self.area
            && fresh.down.sorted() == self.down.sorted()
            && fresh.up.sorted() == self.up.sorted()
            && self.heights[0] == 0
            && *self.heights.last().unwrap() == 0
            && self
                .heights
                .iter()
                .enumerate()
                .all(|(k, &h)| (h as i64).abs() <= (k as i64).min(len - k as i64))
    }

    /// Bit mask encoding (see [`from_mask`](Self::from_mask)); `2N <= 64`.
    pub fn mask(&self) -> u64 {
        assert!(self.len() <= 64, "mask encoding needs 2N <= 64");
        self.steps
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &s)| if s == 1 { m | 1 << i } else { m })
    }

    pub fn to_particles(&self) -> ParticleConfig {
        ParticleConfig {
            eta: self.steps.iter().map(|&s| ((s + 1) / 2) as u8).collect(),
        }
    }

    pub fn from_particles(eta: &ParticleConfig) -> Result<Self> {
        let steps: Vec<i8> = eta.eta.iter().map(|&e| 2 * e as i8 - 1).collect();
        Self::from_steps(&steps)
    }

    /// One-line `+`/`-` encoding.
    pub fn to_line(&self) -> String {
        self.steps
            .iter()
            .map(|&s| if s == 1 { '+' } else { '-' })
            .collect()
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let steps = line
            .trim()
            .chars()
            .enumerate()
            .map(|(i, c)| match c {
                '+' => Ok(1i8),
                '-' | '\u{2212}' => Ok(-1i8),
                other => Err(Error::Parse(format!(
                    "unexpected character {other:?} at position {}",
                    i + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_steps(&steps)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&BridgeJson {
            n: self.n_half,
            steps: self.steps.clone(),
        })
        .expect("plain struct serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: BridgeJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.steps.len() != 2 * raw.n {
            return Err(Error::Parse(format!(
                "N = {} but {} steps given",
                raw.n,
                raw.steps.len()
            )));
        }
        Self::from_step_values(&raw.steps.iter().map(|&s| s as i64).collect::<Vec<_>>())
    }
}

impl fmt::Display for BridgeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

#[derive(Serialize, Deserialize)]
struct BridgeJson {
    #[serde(rename = "N")]
    n: usize,
    steps: Vec<i8>,
}

/// Occupation variables `η(i) = (X_i + 1)/2`, `i = 1..=len`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParticleConfig {
    pub eta: Vec<u8>,
}

impl ParticleConfig {
    pub fn new(eta: Vec<u8>) -> Self {
        debug_assert!(eta.iter().all(|&e| e <= 1));
        Self { eta }
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `η(i)` with the index taken modulo the length (1-based).
    #[inline]
    pub fn at(&self, i: i64) -> u8 {
        let n = self.eta.len() as i64;
        self.eta[((i - 1).rem_euclid(n)) as usize]
    }

    pub fn particle_count(&self) -> usize {
        self.eta.iter().map(|&e| e as usize).sum()
    }

    /// Cyclic shift `τ_k η = (η(k+1), …, η(k))`.
    pub fn shift(&self, k: i64) -> Self {
        let n = self.eta.len() as i64;
        Self {
            eta: (1..=n).map(|i| self.at(i + k)).collect(),
        }
    }
}

/// Masks of all bridges of half-length `n_half`, in increasing order.
pub fn bridge_masks(n_half: usize) -> Result<Vec<u64>> {
    if n_half == 0 {
        return Err(Error::BadParam("N must be positive".into()));
    }
    if n_half > MAX_ENUMERATION_N {
        return Err(Error::TooLarge {
            what: "N",
            value: n_half,
            max: MAX_ENUMERATION_N,
        });
    }
    let len = 2 * n_half as u32;
    let count = binomial(len as u64, n_half as u64) as usize;
    let mut out = Vec::with_capacity(count);
    // Gosper's hack over masks with exactly N set bits
    let mut m: u64 = (1u64 << n_half) - 1;
    let limit = 1u64 << len;
    while m < limit {
        out.push(m);
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

/// All `C(2N, N)` bridges of half-length `n_half`.
pub fn enumerate_bridges(n_half: usize) -> Result<Vec<BridgeConfig>> {
    bridge_masks(n_half)?
        .into_iter()
        .map(|m| BridgeConfig::from_mask(n_half, m))
        .collect()
}

/// Area of the bridge encoded by `mask` without materialising it.
pub fn mask_area(n_half: usize, mask: u64) -> i64 {
    let mut h = 0i64;
    let mut area = 0i64;
    for i in 0..2 * n_half {
        h += if mask >> i & 1 == 1 { 1 } else { -1 };
        area += h;
    }
    area
}
