//! Model constants, the tilted product measure `ν_N`, the area-tilted bridge
//! measure `μ_N`, their exact samplers and normalizations, the mean profile
//! `Σ^N_α` and the limiting bridge covariances.
//!
//! Everything deterministic is generic over [`Real`]; the samplers and the
//! enumeration tables work in `f64`.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::lattice::{bridge_masks, mask_area, BridgeConfig};
use crate::num::{log_add_exp, log_sum_exp, Real};

/// Absolute tolerance used by every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-10;

/// Which limiting picture a given `α` belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `α > 1`: the asymmetry is invisible at the fluctuation scale.
    AboveOne,
    /// `α = 1`.
    Critical,
    /// `α < 1`: the bridge is pinned to the maximal profile except near the middle.
    BelowOne,
}

impl Regime {
    pub fn of<T: Real>(alpha: T) -> Self {
        if alpha > T::one() {
            Regime::AboveOne
        } else if alpha == T::one() {
            Regime::Critical
        } else {
            Regime::BelowOne
        }
    }
}

/// Constants of the weakly asymmetric model at half-length `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real> {
    pub n_half: usize,
    pub alpha: T,
    pub sigma: T,
    /// Rate of a down-corner flip.
    pub p: T,
    /// `½ log(p/(1-p)) = 2σ/(2N)^α`.
    pub gamma: T,
    /// `(2N)^{4α} / (2 cosh γ)`.
    pub c: T,
    /// `c (e^γ - 2 + e^{-γ})`.
    pub lambda: T,
    /// `-γ (N + ½)`.
    pub rho: T,
    /// `h_k = γ (N - k + ½)` at index `k-1`.
    pub tilt: Vec<T>,
    /// `q_k = (L'(h_k) + 1)/2` at index `k-1`.
    pub weights: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    /// Builds all constants. `σ = 0` is accepted and gives the symmetric walk.
    pub fn new(n_half: usize, alpha: T, sigma: T) -> Result<Self> {
        if n_half == 0 {
            return Err(Error::BadParam("N must be at least 1".into()));
        }
        if !(alpha.is_finite() && alpha > T::zero()) {
            return Err(Error::BadParam(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(sigma.is_finite() && sigma >= T::zero()) {
            return Err(Error::BadParam(format!(
                "sigma must be non-negative, got {sigma}"
            )));
        }
        let len = T::idx(2 * n_half);
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        let gamma = two * sigma / len.powf(alpha);
        let p = T::one() / (T::one() + (-two * gamma).exp());
        let c = len.powf(T::lit(4.0) * alpha) / (two * gamma.cosh());
        let sh = (gamma * half).sinh();
        let lambda = c * T::lit(4.0) * sh * sh;
        let rho = -gamma * (T::idx(n_half) + half);
        let tilt: Vec<T> = (1..=2 * n_half)
            .map(|k| gamma * (T::int(n_half as i64 - k as i64) + half))
            .collect();
        let weights = tilt.iter().map(|&h| logistic(two * h)).collect();
        Ok(Self {
            n_half,
            alpha,
            sigma,
            p,
            gamma,
            c,
            lambda,
            rho,
            tilt,
            weights,
        })
    }

    /// Number of steps, `2N`.
    pub fn len(&self) -> usize {
        2 * self.n_half
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.alpha)
    }

    /// `h_k` for `k` in `1..=2N`.
    pub fn h(&self, k: usize) -> T {
        self.tilt[k - 1]
    }

    /// `q_k` for `k` in `1..=2N`.
    pub fn q(&self, k: usize) -> T {
        self.weights[k - 1]
    }

    /// `L_S(h) = Σ_k L(h_k)`.
    pub fn total_log_laplace(&self) -> T {
        self.tilt.iter().map(|&h| log_laplace(h).0).sum()
    }
}

/// `1/(1+e^{-x})` without overflow.
#[inline]
fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1/(1+e^{-x}))` without overflow.
#[inline]
fn log_logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `(L, L', L'')` for `L(h) = log cosh h`, stable for large `|h|`.
pub fn log_laplace<T: Real>(h: T) -> (T, T, T) {
    let a = h.abs();
    let e = (-(a + a)).exp();
    let l = a - T::LN_2() + e.ln_1p();
    let dl = h.tanh();
    let one_e = T::one() + e;
    let ddl = T::lit(4.0) * e / (one_e * one_e);
    (l, dl, ddl)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The tolerance is floored at a few ulps of the running estimate so that
/// `f32` callers terminate.
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let (lo, hi, sign) = if a < b {
        (a, b, T::one())
    } else {
        (b, a, -T::one())
    };
    let fa = f(lo);
    let fb = f(hi);
    let m = (lo + hi) * T::lit(0.5);
    let fm = f(m);
    let whole = simpson(lo, hi, fa, fm, fb);
    sign * simpson_step(&f, lo, hi, fa, fm, fb, whole, tol, 48)
}

#[inline]
fn simpson<T: Real>(a: T, b: T, fa: T, fm: T, fb: T) -> T {
    (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let m = (a + b) * T::lit(0.5);
    let lm = (a + m) * T::lit(0.5);
    let rm = (m + b) * T::lit(0.5);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    let floor = T::epsilon() * T::lit(64.0) * (left.abs() + right.abs());
    if depth == 0 || delta.abs() <= T::lit(15.0) * tol.max(floor) {
        return left + right + delta / T::lit(15.0);
    }
    let half = tol * T::lit(0.5);
    simpson_step(f, a, m, fa, flm, fm, left, half, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, half, depth - 1)
}

/// Cut-off `y*` beyond which `1 - tanh(2σy)` and `sech²(2σy)` are below `tol`.
pub fn tail_cutoff<T: Real>(sigma: T, tol: T) -> T {
    (T::lit(2.0) / tol).ln() / (T::lit(4.0) * sigma)
}

// ---------------------------------------------------------------------------
// Samplers

/// Exact sampler for the product measure `ν_N`.
///
/// Each step is decided by one 64-bit draw compared against a precomputed
/// threshold `⌊q_k 2^64⌋`.
#[derive(Clone, Debug)]
pub struct NuSampler {
    thresholds: Vec<u64>,
}

impl NuSampler {
    pub fn new(params: &ModelParams<f64>) -> Self {
        let scale = 18446744073709551616.0_f64; // 2^64
        Self {
            thresholds: params.weights.iter().map(|&q| (q * scale) as u64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Fills `out` with one `ν_N` path (steps `±1`).
    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut Vec<i8>) {
        out.clear();
        out.extend(
            self.thresholds
                .iter()
                .map(|&t| if rng.next_u64() < t { 1i8 } else { -1i8 }),
        );
    }

    /// Draws a path and keeps it only if it returns to zero. Stops early once
    /// the endpoint is out of reach. Returns `true` on acceptance.
    pub fn try_bridge_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut Vec<i8>) -> bool {
        let len = self.thresholds.len() as i64;
        out.clear();
        let mut h = 0i64;
        for (i, &t) in self.thresholds.iter().enumerate() {
            let s = if rng.next_u64() < t { 1i8 } else { -1i8 };
            h += s as i64;
            out.push(s);
            if h.abs() > len - 1 - i as i64 {
                return false;
            }
        }
        h == 0
    }
}

/// One path from `ν_N` (no bridge constraint).
pub fn sample_nu<R: RngCore + ?Sized>(params: &ModelParams<f64>, rng: &mut R) -> Vec<i8> {
    let mut out = Vec::with_capacity(params.len());
    NuSampler::new(params).sample_into(rng, &mut out);
    out
}

/// Exact sampler for `μ_N` by rejection from `ν_N`.
#[derive(Clone, Debug)]
pub struct MuSampler {
    nu: NuSampler,
}

impl MuSampler {
    pub fn new(params: &ModelParams<f64>) -> Self {
        Self {
            nu: NuSampler::new(params),
        }
    }

    /// Fills `out` with the steps of a `μ_N` bridge; returns the number of
    /// `ν_N` proposals used.
    pub fn sample_steps_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut Vec<i8>) -> u64 {
        let mut tries = 1u64;
        while !self.nu.try_bridge_into(rng, out) {
            tries += 1;
        }
        tries
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> BridgeConfig {
        self.sample_counted(rng).0
    }

    pub fn sample_counted<R: RngCore + ?Sized>(&self, rng: &mut R) -> (BridgeConfig, u64) {
        let mut buf = Vec::with_capacity(self.nu.len());
        let tries = self.sample_steps_into(rng, &mut buf);
        let cfg = BridgeConfig::from_steps(&buf).expect("accepted path is a bridge");
        (cfg, tries)
    }
}

/// One exact draw from `μ_N`.
pub fn sample_mu<R: RngCore + ?Sized>(params: &ModelParams<f64>, rng: &mut R) -> BridgeConfig {
    MuSampler::new(params).sample(rng)
}

// ---------------------------------------------------------------------------
// Exact small-N tables

/// `μ_N` over all bridges of a small system, in [`bridge_masks`] order.
#[derive(Clone, Debug)]
pub struct MuTable {
    pub n_half: usize,
    pub masks: Vec<u64>,
    pub probs: Vec<f64>,
    /// `log Z_N = log Σ_S (p/(1-p))^{A(S)/2}`.
    pub log_z: f64,
}

impl MuTable {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    /// Position of a bridge in the table.
    pub fn index_of(&self, cfg: &BridgeConfig) -> Option<usize> {
        self.masks.binary_search(&cfg.mask()).ok()
    }
}

/// Exact `μ_N` by enumeration (`N <= 12`).
pub fn mu_exact(params: &ModelParams<f64>) -> Result<MuTable> {
    let n = params.n_half;
    let masks = bridge_masks(n)?;
    // (p/(1-p))^{A/2} = e^{γ A}
    let logw: Vec<f64> = masks
        .iter()
        .map(|&m| params.gamma * mask_area(n, m) as f64)
        .collect();
    let log_z = log_sum_exp(&logw);
    let probs = logw.iter().map(|&l| (l - log_z).exp()).collect();
    Ok(MuTable {
        n_half: n,
        masks,
        probs,
        log_z,
    })
}

/// `log ν_N(X = steps)` for an arbitrary `±1` path.
pub fn log_nu_prob(params: &ModelParams<f64>, steps: &[i8]) -> f64 {
    steps
        .iter()
        .zip(&params.tilt)
        .map(|(&s, &h)| log_logistic(2.0 * h * s as f64))
        .sum()
}

/// `ν_N( · | S(2N) = 0)` over all bridges, in [`bridge_masks`] order.
pub fn nu_conditioned_exact(params: &ModelParams<f64>) -> Result<Vec<f64>> {
    let n = params.n_half;
    let masks = bridge_masks(n)?;
    let logs: Vec<f64> = masks
        .iter()
        .map(|&m| {
            let steps: Vec<i8> = (0..2 * n)
                .map(|i| if m >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            log_nu_prob(params, &steps)
        })
        .collect();
    let log_norm = log_sum_exp(&logs);
    Ok(logs.iter().map(|&l| (l - log_norm).exp()).collect())
}

// ---------------------------------------------------------------------------
// Partition function

/// `log Z_N` by a height-indexed dynamic program in the log domain.
///
/// `f_k(s)` is the log total weight of paths reaching height `s` at step `k`,
/// each visited height contributing `e^{γ S(k)}`.
pub fn log_partition_exact<T: Real>(params: &ModelParams<T>) -> T {
    let n = params.n_half as i64;
    let len = 2 * n;
    let off = n;
    let neg = T::neg_infinity();
    let mut cur = vec![neg; (2 * n + 1) as usize];
    let mut next = cur.clone();
    cur[off as usize] = T::zero();
    for k in 1..=len {
        let reach = k.min(len - k);
        next.iter_mut().for_each(|v| *v = neg);
        let mut s = -reach;
        while s <= reach {
            let below = if s > -n {
                cur[(s - 1 + off) as usize]
            } else {
                neg
            };
            let above = if s < n {
                cur[(s + 1 + off) as usize]
            } else {
                neg
            };
            next[(s + off) as usize] = params.gamma * T::int(s) + log_add_exp(below, above);
            s += 2;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[off as usize]
}

/// `log ν_N(S(2N) = 0)` by a dynamic program over the endpoint law of `ν_N`.
pub fn log_nu_bridge_prob<T: Real>(params: &ModelParams<T>) -> T {
    let n = params.n_half as i64;
    let len = 2 * n;
    let off = n;
    let neg = T::neg_infinity();
    let two = T::lit(2.0);
    let mut cur = vec![neg; (2 * n + 1) as usize];
    let mut next = cur.clone();
    cur[off as usize] = T::zero();
    for k in 1..=len {
        let h = params.tilt[(k - 1) as usize];
        let lq_up = log_logistic(two * h);
        let lq_down = log_logistic(-two * h);
        let reach = k.min(len - k);
        next.iter_mut().for_each(|v| *v = neg);
        let mut s = -reach;
        while s <= reach {
            let below = if s > -n {
                cur[(s - 1 + off) as usize] + lq_up
            } else {
                neg
            };
            let above = if s < n {
                cur[(s + 1 + off) as usize] + lq_down
            } else {
                neg
            };
            next[(s + off) as usize] = log_add_exp(below, above);
            s += 2;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[off as usize]
}

/// `log Z_N` through the product-measure route
/// `2N log 2 + log ν_N(S(2N)=0) + L_S(h)`.
pub fn log_partition_via_nu<T: Real>(params: &ModelParams<T>) -> T {
    T::idx(params.len()) * T::LN_2() + log_nu_bridge_prob(params) + params.total_log_laplace()
}

/// Leading-order prediction for the partition function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionAsymptotic<T: Real> {
    pub regime: Regime,
    /// Prediction for `log(Z_N / 2^{2N})`.
    pub log_ratio: T,
    n_half: usize,
}

impl<T: Real> PartitionAsymptotic<T> {
    /// Prediction for `log Z_N`.
    pub fn log_z(&self) -> T {
        self.log_ratio + T::idx(2 * self.n_half) * T::LN_2()
    }
}

/// `σ²/6 (2N)^{3-2α}` for `α > 1`, `2N ∫₀¹ L(σ(1-2x))dx` at `α = 1`,
/// `σ/2 (2N)^{2-α} - 2N log 2` for `α < 1`.
pub fn log_partition_asymptotic<T: Real>(params: &ModelParams<T>) -> PartitionAsymptotic<T> {
    let len = T::idx(params.len());
    let s = params.sigma;
    let a = params.alpha;
    let regime = params.regime();
    let log_ratio = match regime {
        Regime::AboveOne => s * s / T::lit(6.0) * len.powf(T::lit(3.0) - T::lit(2.0) * a),
        Regime::Critical => len * critical_partition_coefficient(s),
        Regime::BelowOne => s / T::lit(2.0) * len.powf(T::lit(2.0) - a) - len * T::LN_2(),
    };
    PartitionAsymptotic {
        regime,
        log_ratio,
        n_half: params.n_half,
    }
}

/// `∫₀¹ L(σ(1-2x)) dx`.
pub fn critical_partition_coefficient<T: Real>(sigma: T) -> T {
    adaptive_simpson(
        |x: T| log_laplace(sigma * (T::one() - T::lit(2.0) * x)).0,
        T::zero(),
        T::one(),
        T::lit(QUAD_TOL),
    )
}

// ---------------------------------------------------------------------------
// Mean profile

/// `Σ^N_α` on its regime grid, linearly interpolated in between.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaProfile<T: Real> {
    /// `x_k` for `k = 0..=2N`.
    pub grid: Vec<T>,
    /// `Σ_{i<=k} L'(h_i)` for `k = 0..=2N`.
    pub values: Vec<T>,
    n_half: usize,
    scale: T,
    centred: bool,
}

impl<T: Real> SigmaProfile<T> {
    /// Lattice position `k` (possibly fractional) of the abscissa `x`.
    pub fn position(&self, x: T) -> T {
        if self.centred {
            T::idx(self.n_half) + x * self.scale
        } else {
            x * self.scale
        }
    }

    /// Abscissa of lattice index `k`.
    pub fn abscissa(&self, k: usize) -> T {
        self.grid[k]
    }

    /// Interpolated value at `x`; clamps outside the grid.
    pub fn eval(&self, x: T) -> T {
        let len = self.values.len() - 1;
        let pos = self.position(x).max(T::zero()).min(T::idx(len));
        let k = pos.floor().to_usize().unwrap_or(0).min(len - 1);
        let frac = pos - T::idx(k);
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }
}

/// Spatial scale of the regime grid: `2N` for `α >= 1`, `(2N)^α` otherwise.
pub fn grid_scale<T: Real>(params: &ModelParams<T>) -> T {
    let len = T::idx(params.len());
    if params.alpha >= T::one() {
        len
    } else {
        len.powf(params.alpha)
    }
}

/// `Σ^N_α(x_k) = Σ_{i<=k} L'(h_i)` on `x_k = k/2N` (`α >= 1`) or
/// `x_k = (k-N)/(2N)^α` (`α < 1`).
pub fn sigma_profile<T: Real>(params: &ModelParams<T>) -> SigmaProfile<T> {
    let n = params.n_half;
    let scale = grid_scale(params);
    let centred = params.alpha < T::one();
    // Σ_{i<=k} L'(h_i) = Σ_{i<=2N-k} L'(h_i) by antisymmetry of the tilt, so
    // only the left half is accumulated.
    let mut values = vec![T::zero(); params.len() + 1];
    let mut acc = T::zero();
    for (v, &h) in values[1..=n].iter_mut().zip(&params.tilt) {
        acc = acc + h.tanh();
        *v = acc;
    }
    for k in n + 1..=params.len() {
        values[k] = values[params.len() - k];
    }
    let grid = (0..=params.len())
        .map(|k| {
            if centred {
                T::int(k as i64 - n as i64) / scale
            } else {
                T::idx(k) / scale
            }
        })
        .collect();
    SigmaProfile {
        grid,
        values,
        n_half: n,
        scale,
        centred,
    }
}

/// Large-`N` approximation of `Σ^N_α(x)` used as the overlay column:
/// `(2N)^{2-α} σ x(1-x)` for `α > 1`, `2N ∫₀^x L'(σ(1-2u))du` at `α = 1`, and
/// `N + (2N)^α (x + ∫_{-x}^∞ (L'(2σy) - 1) dy)` for `α < 1`.
pub fn sigma_asymptotic<T: Real>(params: &ModelParams<T>, x: T) -> T {
    let len = T::idx(params.len());
    let s = params.sigma;
    let tol = T::lit(QUAD_TOL);
    match params.regime() {
        Regime::AboveOne => len.powf(T::lit(2.0) - params.alpha) * s * x * (T::one() - x),
        Regime::Critical => {
            len * adaptive_simpson(
                |u: T| (s * (T::one() - T::lit(2.0) * u)).tanh(),
                T::zero(),
                x,
                tol,
            )
        }
        Regime::BelowOne => {
            let y_star = tail_cutoff(s, tol);
            let lo = -x;
            let hi = y_star.max(lo);
            let two_s = T::lit(2.0) * s;
            let integral = adaptive_simpson(|y: T| (two_s * y).tanh() - T::one(), lo, hi, tol);
            T::idx(params.n_half) + len.powf(params.alpha) * (x + integral)
        }
    }
}

/// Rows `(x_k, Σ^N_α(x_k), asymptotic prediction)` over the regime grid.
pub fn profile_rows<T: Real>(params: &ModelParams<T>) -> Vec<(T, T, T)> {
    let prof = sigma_profile(params);
    prof.grid
        .iter()
        .zip(&prof.values)
        .map(|(&x, &v)| (x, v, sigma_asymptotic(params, x)))
        .collect()
}

// ---------------------------------------------------------------------------
// Limiting covariance

/// Covariance kernel of the limiting bridge `B_α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeCovariance<T: Real> {
    pub regime: Regime,
    pub alpha: T,
    pub sigma: T,
}

impl<T: Real> BridgeCovariance<T> {
    pub fn new(alpha: T, sigma: T) -> Result<Self> {
        if !(alpha.is_finite() && alpha > T::zero()) {
            return Err(Error::BadParam(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(sigma.is_finite() && sigma >= T::zero()) {
            return Err(Error::BadParam(format!(
                "sigma must be non-negative, got {sigma}"
            )));
        }
        let regime = Regime::of(alpha);
        if regime == Regime::BelowOne && sigma == T::zero() {
            return Err(Error::BadParam("alpha < 1 needs sigma > 0".into()));
        }
        Ok(Self {
            regime,
            alpha,
            sigma,
        })
    }

    /// Domain of the index variable.
    pub fn domain(&self) -> (T, T) {
        match self.regime {
            Regime::BelowOne => (T::neg_infinity(), T::infinity()),
            _ => (T::zero(), T::one()),
        }
    }

    fn density(&self, u: T) -> T {
        match self.regime {
            Regime::AboveOne => T::one(),
            Regime::Critical => log_laplace(self.sigma * (T::one() - T::lit(2.0) * u)).2,
            Regime::BelowOne => log_laplace(T::lit(2.0) * self.sigma * u).2,
        }
    }

    /// `q_α(x, y)`, the integral of the local variance between `x` and `y`;
    /// infinite endpoints are allowed for `α < 1`.
    pub fn q(&self, x: T, y: T) -> T {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        match self.regime {
            Regime::AboveOne => b - a,
            Regime::Critical => adaptive_simpson(|u| self.density(u), a, b, T::lit(QUAD_TOL)),
            Regime::BelowOne => {
                let y_star = tail_cutoff(self.sigma, T::lit(QUAD_TOL));
                let lo = if a.is_finite() {
                    a
                } else {
                    b.min(T::zero()) - y_star
                };
                let hi = if b.is_finite() {
                    b
                } else {
                    a.max(T::zero()) + y_star
                };
                adaptive_simpson(|u| self.density(u), lo, hi, T::lit(QUAD_TOL))
            }
        }
    }

    /// `Cov(B_α(x), B_α(y))`.
    pub fn cov(&self, x: T, y: T) -> Result<T> {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        match self.regime {
            Regime::BelowOne => {
                if a.is_nan() || b.is_nan() {
                    return Err(Error::Domain("NaN abscissa".into()));
                }
                let inf = T::infinity();
                Ok(self.q(-inf, a) * self.q(b, inf) / self.q(-inf, inf))
            }
            _ => {
                if !(a >= T::zero() && b <= T::one()) {
                    return Err(Error::Domain(format!(
                        "abscissae must lie in [0,1], got ({}, {})",
                        x.f64(),
                        y.f64()
                    )));
                }
                Ok(self.q(T::zero(), a) * self.q(b, T::one()) / self.q(T::zero(), T::one()))
            }
        }
    }
}

/// Limiting covariance for `(α, σ)`.
pub fn bridge_covariance<T: Real>(alpha: T, sigma: T) -> Result<BridgeCovariance<T>> {
    BridgeCovariance::new(alpha, sigma)
}
