//! Discrete heat kernels of `∂_t f = c Δf`, `Δf(ℓ) = f(ℓ+1) + f(ℓ-1) - 2f(ℓ)`:
//! `p_t(k, ℓ)` on `{0, …, 2N}` killed at both ends and `p̄_t(j)` on the
//! integers, with their gradient products, Gaussian-type tail bound and the
//! deterministic part `I^N` of the mild KPZ field.

use std::io::{self, Write};

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gibbs::ModelParams;
use crate::num::Real;

/// Poisson mass discarded by uniformization.
pub const POISSON_CUTOFF: f64 = 1e-18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    Spectral,
    Uniformization,
    ImageSum,
}

impl Representation {
    pub fn code(self) -> u8 {
        match self {
            Representation::Spectral => 0,
            Representation::Uniformization => 1,
            Representation::ImageSum => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Representation::Spectral => "spectral",
            Representation::Uniformization => "uniformization",
            Representation::ImageSum => "image-sum",
        }
    }
}

/// `p_t(k, ℓ)` for `k, ℓ ∈ {1, …, 2N-1}`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelEval<T: Real> {
    pub n_half: usize,
    pub c: T,
    pub t: T,
    pub representation: Representation,
    pub values: Vec<T>,
}

impl<T: Real> KernelEval<T> {
    /// Interior dimension `2N - 1`.
    pub fn dim(&self) -> usize {
        2 * self.n_half - 1
    }

    /// `p_t(k, ℓ)`; zero when either index is on the boundary.
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> T {
        let len = 2 * self.n_half;
        if k == 0 || l == 0 || k >= len || l >= len {
            return T::zero();
        }
        self.values[(k - 1) * self.dim() + (l - 1)]
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Matrix product `p_t p_s` in the same layout.
    pub fn compose(&self, other: &Self) -> Self {
        let d = self.dim();
        let mut values = vec![T::zero(); d * d];
        for i in 0..d {
            for m in 0..d {
                let a = self.values[i * d + m];
                if a == T::zero() {
                    continue;
                }
                for j in 0..d {
                    values[i * d + j] = values[i * d + j] + a * other.values[m * d + j];
                }
            }
        }
        Self {
            n_half: self.n_half,
            c: self.c,
            t: self.t + other.t,
            representation: self.representation,
            values,
        }
    }

    /// Little-endian dump: `u32 N`, `f64 t`, `f64 c`, `u8 representation`,
    /// then the `(2N-1)²` entries as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.n_half as u32).to_le_bytes())?;
        w.write_all(&self.t.f64().to_le_bytes())?;
        w.write_all(&self.c.f64().to_le_bytes())?;
        w.write_all(&[self.representation.code()])?;
        for v in &self.values {
            w.write_all(&v.f64().to_le_bytes())?;
        }
        Ok(())
    }
}

/// Poisson(`mean`) weights over `[start, start + len)` covering all but
/// [`POISSON_CUTOFF`] of the mass, built outward from the mode.
pub fn poisson_window(mean: f64) -> (usize, Vec<f64>) {
    if mean <= 0.0 {
        return (0, vec![1.0]);
    }
    let mode = mean.floor() as usize;
    let log_mode = -mean + mode as f64 * mean.ln() - ln_gamma(mode as f64 + 1.0);
    let w_mode = log_mode.exp();
    let mut right = Vec::new();
    let mut w = w_mode;
    let mut n = mode;
    loop {
        n += 1;
        w *= mean / n as f64;
        if w < POISSON_CUTOFF * 1e-3 {
            break;
        }
        right.push(w);
    }
    let mut left = Vec::new();
    let mut w = w_mode;
    let mut n = mode;
    while n > 0 {
        w *= n as f64 / mean;
        n -= 1;
        if w < POISSON_CUTOFF * 1e-3 {
            break;
        }
        left.push(w);
    }
    let start = mode - left.len();
    let mut out: Vec<f64> = left.into_iter().rev().collect();
    out.push(w_mode);
    out.extend(right);
    // ln Γ at large arguments carries an absolute error of a few ulps of its
    // magnitude; the discarded mass is far below that, so renormalise.
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
    (start, out)
}

/// `g(x) = √(1+x²) - x asinh(x) - 1`, written to avoid cancellation.
pub fn g_rate<T: Real>(x: T) -> T {
    let a = x.abs();
    if a > T::lit(1e8) {
        // √(1+x²) - 1 = x - 1 + O(1/x), asinh x = ln 2x + O(1/x²)
        return a - T::one() - a * (T::LN_2() + a.ln());
    }
    a * a / (T::one() + (T::one() + a * a).sqrt()) - a * a.asinh()
}

/// Chernoff-type bound `exp(2ct g(a/(2ct)))` on `Σ_{k>=a} p̄_t(k)`.
pub fn tail_bound<T: Real>(a: T, t: T, c: T) -> T {
    let s = T::lit(2.0) * c * t;
    if s == T::zero() {
        return if a > T::zero() { T::zero() } else { T::one() };
    }
    (s * g_rate(a / s)).exp()
}

/// `p̄_t` tabulated on `[-J, J]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LineKernel<T: Real> {
    pub half_width: usize,
    pub values: Vec<T>,
}

impl<T: Real> LineKernel<T> {
    /// `p̄_t(j)`, zero outside the table (where it is below the cut-off).
    #[inline]
    pub fn get(&self, j: i64) -> T {
        let idx = j + self.half_width as i64;
        if idx < 0 || idx as usize >= self.values.len() {
            T::zero()
        } else {
            self.values[idx as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, T)> + '_ {
        let hw = self.half_width as i64;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i as i64 - hw, v))
    }

    /// `Σ_{k >= a} p̄_t(k)`.
    pub fn upper_tail(&self, a: i64) -> T {
        self.iter().filter(|&(j, _)| j >= a).map(|(_, v)| v).sum()
    }

    /// `∇⁺p̄(j) ∇⁻p̄(j)`.
    pub fn gradient_product(&self, j: i64) -> T {
        (self.get(j + 1) - self.get(j)) * (self.get(j) - self.get(j - 1))
    }
}

/// Heat kernels at speed `c` on a segment of length `2N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernel<T: Real> {
    pub n_half: usize,
    pub c: T,
}

impl<T: Real> HeatKernel<T> {
    pub fn new(n_half: usize, c: T) -> Result<Self> {
        if n_half == 0 {
            return Err(Error::BadParam("N must be at least 1".into()));
        }
        if !(c.is_finite() && c > T::zero()) {
            return Err(Error::BadParam(format!(
                "speed must be positive, got {}",
                c.f64()
            )));
        }
        Ok(Self { n_half, c })
    }

    pub fn from_params(params: &ModelParams<T>) -> Self {
        Self {
            n_half: params.n_half,
            c: params.c,
        }
    }

    fn len(&self) -> usize {
        2 * self.n_half
    }

    fn check_t(t: T) -> Result<()> {
        if t >= T::zero() && t.is_finite() {
            Ok(())
        } else {
            Err(Error::BadParam(format!(
                "t must be non-negative, got {}",
                t.f64()
            )))
        }
    }

    /// Eigenfunction `φ_j(k) = sin(jπk/2N)/√N`.
    #[inline]
    pub fn eigenfunction(&self, j: usize, k: usize) -> T {
        let len = T::idx(self.len());
        (T::idx(j * k) * T::PI() / len).sin() / T::idx(self.n_half).sqrt()
    }

    /// Eigenvalue `μ_j = 2c(1 - cos(jπ/2N))` of `-cΔ`.
    #[inline]
    pub fn eigenvalue(&self, j: usize) -> T {
        let x = T::idx(j) * T::PI() / T::idx(self.len());
        // 1 - cos x = 2 sin²(x/2)
        let s = (x * T::lit(0.5)).sin();
        T::lit(4.0) * self.c * s * s
    }

    fn modes(&self) -> (Vec<T>, Vec<T>) {
        let d = self.len() - 1;
        let phi = (1..=d)
            .flat_map(|j| (1..=d).map(move |k| (j, k)))
            .map(|(j, k)| self.eigenfunction(j, k))
            .collect();
        let mu = (1..=d).map(|j| self.eigenvalue(j)).collect();
        (phi, mu)
    }

    /// Full matrix from the sine eigenbasis.
    pub fn spectral(&self, t: T) -> Result<KernelEval<T>> {
        Self::check_t(t)?;
        let d = self.len() - 1;
        let (phi, mu) = self.modes();
        let decay: Vec<T> = mu.iter().map(|&m| (-m * t).exp()).collect();
        let mut values = vec![T::zero(); d * d];
        for k in 0..d {
            for l in k..d {
                let mut s = T::zero();
                for j in 0..d {
                    s = s + phi[j * d + k] * phi[j * d + l] * decay[j];
                }
                values[k * d + l] = s;
                values[l * d + k] = s;
            }
        }
        Ok(KernelEval {
            n_half: self.n_half,
            c: self.c,
            t,
            representation: Representation::Spectral,
            values,
        })
    }

    /// Row `p_t(k, ·)` from a killed walk jumping at total rate `2c`.
    pub fn uniformization_row(&self, t: T, k: usize) -> Result<Vec<T>> {
        Self::check_t(t)?;
        let d = self.len() - 1;
        if k == 0 || k > d {
            return Err(Error::BadParam(format!("k must lie in 1..={d}, got {k}")));
        }
        let (start, weights) = poisson_window(2.0 * self.c.f64() * t.f64());
        let mut v = vec![T::zero(); d + 2];
        let mut next = v.clone();
        v[k] = T::one();
        let mut out = vec![T::zero(); d];
        let half = T::lit(0.5);
        let last = start + weights.len();
        for n in 0..last {
            if n >= start {
                let w = T::lit(weights[n - start]);
                for (o, &x) in out.iter_mut().zip(&v[1..=d]) {
                    *o = *o + w * x;
                }
            }
            if n + 1 < last {
                for i in 1..=d {
                    next[i] = half * (v[i - 1] + v[i + 1]);
                }
                std::mem::swap(&mut v, &mut next);
            }
        }
        Ok(out)
    }

    pub fn uniformization(&self, t: T) -> Result<KernelEval<T>> {
        let d = self.len() - 1;
        let mut values = Vec::with_capacity(d * d);
        for k in 1..=d {
            values.extend(self.uniformization_row(t, k)?);
        }
        Ok(KernelEval {
            n_half: self.n_half,
            c: self.c,
            t,
            representation: Representation::Uniformization,
            values,
        })
    }

    /// `p̄_t` on the integers by uniformization of the simple walk.
    pub fn line(&self, t: T) -> Result<LineKernel<T>> {
        Self::check_t(t)?;
        let (start, weights) = poisson_window(2.0 * self.c.f64() * t.f64());
        let last = start + weights.len();
        let hw = last;
        let width = 2 * hw + 1;
        let mut v = vec![T::zero(); width + 2];
        let mut next = v.clone();
        v[hw + 1] = T::one();
        let mut out = vec![T::zero(); width];
        let half = T::lit(0.5);
        for n in 0..last {
            if n >= start {
                let w = T::lit(weights[n - start]);
                // after n steps the walk sits in [-n, n]
                for i in hw - n.min(hw)..=hw + n.min(hw) {
                    out[i] = out[i] + w * v[i + 1];
                }
            }
            if n + 1 < last {
                let lo = hw - (n + 1).min(hw);
                let hi = hw + (n + 1).min(hw);
                for i in lo..=hi {
                    next[i + 1] = half * (v[i] + v[i + 2]);
                }
                std::mem::swap(&mut v, &mut next);
            }
        }
        Ok(LineKernel {
            half_width: hw,
            values: out,
        })
    }

    /// `p̄_t(j)` from the modified Bessel series
    /// `e^{-2ct} Σ_m (ct)^{2m+|j|} / (m! (m+|j|)!)`.
    pub fn line_bessel(&self, t: T, j: i64) -> T {
        let ct = self.c.f64() * t.f64();
        let a = j.unsigned_abs() as f64;
        if ct == 0.0 {
            return if j == 0 { T::one() } else { T::zero() };
        }
        let lct = ct.ln();
        let term =
            |m: f64| -2.0 * ct + (2.0 * m + a) * lct - ln_gamma(m + 1.0) - ln_gamma(m + a + 1.0);
        // terms peak where m(m+a) ≈ (ct)²
        let peak = (((a * a + 4.0 * ct * ct).sqrt() - a) / 2.0).floor();
        let lmax = term(peak);
        let mut s = 0.0;
        let mut m = peak;
        loop {
            let x = (term(m) - lmax).exp();
            s += x;
            if x < 1e-20 {
                break;
            }
            m += 1.0;
        }
        let mut m = peak - 1.0;
        while m >= 0.0 {
            let x = (term(m) - lmax).exp();
            s += x;
            if x < 1e-20 {
                break;
            }
            m -= 1.0;
        }
        T::lit((lmax + s.ln()).exp())
    }

    /// Number of periods `J` such that images with `|j| > J` contribute
    /// less than `1e-14` in total.
    pub fn image_count(&self, t: T) -> usize {
        let period = T::idx(2 * self.len());
        let mut j = 1usize;
        while T::lit(4.0) * tail_bound(period * T::idx(j), t, self.c) > T::lit(1e-14) {
            j += 1;
        }
        j
    }

    /// `p_t(k, ℓ)` as `Σ_{|j|<=J} p̄_t(ℓ-k+4Nj) - p̄_t(ℓ+k+4Nj)`.
    pub fn image_sum_with(&self, line: &LineKernel<T>, images: usize, k: usize, l: usize) -> T {
        let period = 2 * self.len() as i64;
        let (k, l) = (k as i64, l as i64);
        let mut s = T::zero();
        for j in -(images as i64)..=images as i64 {
            s = s + line.get(l - k + period * j) - line.get(l + k + period * j);
        }
        s
    }

    pub fn image_sum(&self, t: T) -> Result<KernelEval<T>> {
        let line = self.line(t)?;
        let images = self.image_count(t);
        let d = self.len() - 1;
        let values = (1..=d)
            .flat_map(|k| (1..=d).map(move |l| (k, l)))
            .map(|(k, l)| self.image_sum_with(&line, images, k, l))
            .collect();
        Ok(KernelEval {
            n_half: self.n_half,
            c: self.c,
            t,
            representation: Representation::ImageSum,
            values,
        })
    }

    pub fn evaluate(&self, t: T, representation: Representation) -> Result<KernelEval<T>> {
        match representation {
            Representation::Spectral => self.spectral(t),
            Representation::Uniformization => self.uniformization(t),
            Representation::ImageSum => self.image_sum(t),
        }
    }

    /// `|p_t(k,ℓ) - image sum|` for a single entry.
    pub fn image_sum_check(&self, t: T, k: usize, l: usize) -> Result<T> {
        let row = self.uniformization_row(t, k)?;
        let line = self.line(t)?;
        let images = self.image_count(t);
        Ok((row[l - 1] - self.image_sum_with(&line, images, k, l)).abs())
    }

    /// `K_t(k, ℓ) = ∇⁺p_t(k,ℓ) ∇⁻p_t(k,ℓ)`, gradients in `ℓ`, from a row of
    /// the kernel, for `ℓ ∈ {1, …, 2N-1}`.
    pub fn gradient_product_row(eval: &KernelEval<T>, k: usize) -> Vec<T> {
        let d = eval.dim();
        (1..=d)
            .map(|l| {
                let p = eval.get(k, l);
                (eval.get(k, l + 1) - p) * (p - eval.get(k, l - 1))
            })
            .collect()
    }

    /// `K_t(k, ℓ)` for a single pair.
    pub fn gradient_product(&self, t: T, k: usize, l: usize) -> Result<T> {
        let eval = self.spectral(t)?;
        let d = eval.dim();
        if k == 0 || k > d || l == 0 || l > d {
            return Err(Error::BadParam(format!("indices must lie in 1..={d}")));
        }
        let p = eval.get(k, l);
        Ok((eval.get(k, l + 1) - p) * (p - eval.get(k, l - 1)))
    }

    /// Deterministic part of the mild KPZ field,
    /// `I(t,ℓ) = ξ°(t,ℓ) + Σ_k p_t(k,ℓ)(ξ0(k) - 1)`, for `ℓ = 0..=2N`, where
    /// `ξ°` solves the heat equation from `1` with boundary value `e^{λt}`:
    /// `ξ° = e^{λt} - λ Σ_j φ_j(ℓ) S_j (e^{λt} - e^{-μ_j t})/(λ + μ_j)`,
    /// `S_j = Σ_k φ_j(k)`.
    pub fn mild_initial_term(&self, t: T, xi0: &[T], lambda: T) -> Result<Vec<T>> {
        Self::check_t(t)?;
        let d = self.len() - 1;
        if xi0.len() != d {
            return Err(Error::BadParam(format!(
                "expected {d} interior values, got {}",
                xi0.len()
            )));
        }
        let (phi, mu) = self.modes();
        let elt = (lambda * t).exp();
        // coefficients of the initial perturbation and of the boundary term
        let mut coeff = vec![T::zero(); d];
        for j in 0..d {
            let row = &phi[j * d..(j + 1) * d];
            let a: T = row.iter().zip(xi0).map(|(&f, &x)| f * (x - T::one())).sum();
            let s: T = row.iter().copied().sum();
            let decay = (-mu[j] * t).exp();
            let boundary = if s == T::zero() {
                T::zero()
            } else {
                lambda * s * (elt - decay) / (lambda + mu[j])
            };
            coeff[j] = a * decay - boundary;
        }
        let mut out = Vec::with_capacity(d + 2);
        out.push(elt);
        for l in 0..d {
            let v: T = (0..d).map(|j| phi[j * d + l] * coeff[j]).sum();
            out.push(elt + v);
        }
        out.push(elt);
        Ok(out)
    }
}

/// `∫_s^t Σ_{k ∈ window} |K_{t-r}(k, ℓ)| (2N)^{4α} dr` over an interval of
/// length `span`, by the midpoint rule in `log(t-r)` down to `t-r = 1e-6/c`;
/// the remaining sliver uses the value `|K_0(ℓ,ℓ)| = 1`.
pub fn integrated_gradient_product<T: Real>(
    params: &ModelParams<T>,
    span: T,
    l: usize,
    window: (usize, usize),
    n_nodes: usize,
) -> Result<T> {
    let kernel = HeatKernel::from_params(params);
    let d = params.len() - 1;
    if l == 0 || l > d || window.0 == 0 || window.1 > d || window.0 > window.1 {
        return Err(Error::BadParam("site or window outside 1..2N-1".into()));
    }
    let scale = T::idx(params.len()).powf(T::lit(4.0) * params.alpha);
    let (phi, mu) = kernel.modes();
    let tau_min = T::lit(1e-6) / kernel.c;
    if span <= tau_min {
        return Ok(scale * span);
    }
    let lo = tau_min.ln();
    let dv = (span.ln() - lo) / T::idx(n_nodes);
    let column = |tau: T, m: usize| -> Vec<T> {
        // p_tau(k, m) for k = 0..=2N, zero at the ends
        let mut out = vec![T::zero(); d + 2];
        if m == 0 || m > d {
            return out;
        }
        let w: Vec<T> = (0..d)
            .map(|j| phi[j * d + m - 1] * (-mu[j] * tau).exp())
            .collect();
        for k in 1..=d {
            out[k] = (0..d).map(|j| phi[j * d + k - 1] * w[j]).sum();
        }
        out
    };
    let mut total = scale * tau_min;
    for i in 0..n_nodes {
        let tau = (lo + (T::idx(i) + T::lit(0.5)) * dv).exp();
        let below = column(tau, l - 1);
        let at = column(tau, l);
        let above = column(tau, l + 1);
        let s: T = (window.0..=window.1)
            .map(|k| ((above[k] - at[k]) * (at[k] - below[k])).abs())
            .sum();
        total = total + s * scale * tau * dv;
    }
    Ok(total)
}
