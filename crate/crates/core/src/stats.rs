//! Estimators and tests: covariance with jackknife errors, block averages
//! and the replacement diagnostic, realized quadratic variation against
//! its compensator, Kolmogorov-Smirnov and chi-square tests.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{Event, EventLog};
use crate::error::{Error, Result};
use crate::gibbs::ModelParams;
use crate::lattice::{BridgeConfig, ParticleConfig};
use crate::scaling::{bracket_rate_local, RescaledField};

/// Largest cylinder support handled by exhaustive summation.
pub const MAX_CYLINDER_R: usize = 20;

/// Sample covariance of a field at fixed abscissae.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovEstimate {
    pub points: Vec<f64>,
    /// Row-major `m x m`.
    pub cov: Vec<f64>,
    /// Jackknife standard errors, row-major.
    pub se: Vec<f64>,
    pub n_samples: usize,
}

impl CovEstimate {
    pub fn dim(&self) -> usize {
        self.points.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.dim() + j]
    }

    pub fn se_at(&self, i: usize, j: usize) -> f64 {
        self.se[i * self.dim() + j]
    }
}

/// Covariance of the fields evaluated at `points`.
pub fn empirical_cov(samples: &[RescaledField], points: &[f64]) -> Result<CovEstimate> {
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|f| points.iter().map(|&x| f.eval(x)).collect())
        .collect();
    cov_from_rows(&rows, points)
}

/// Covariance of row vectors `rows[sample][point]`.
///
/// The jackknife variance uses the closed form of the leave-one-out
/// estimate, `C_(i) = (S - n/(n-1) d_i e_i)/(n-2)`.
pub fn cov_from_rows(rows: &[Vec<f64>], points: &[f64]) -> Result<CovEstimate> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let m = points.len();
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::BadParam(format!(
            "row of length {} for {m} points",
            r.len()
        )));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();
    let entries: Vec<(f64, f64)> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (idx / m, idx % m);
            let (a, b) = (a.min(b), a.max(b));
            let s: f64 = centred.iter().map(|d| d[a] * d[b]).sum();
            let mean_prod = s / nf;
            let ss: f64 = centred
                .iter()
                .map(|d| {
                    let w = d[a] * d[b] - mean_prod;
                    w * w
                })
                .sum();
            let var = nf / ((nf - 1.0) * (nf - 2.0) * (nf - 2.0)) * ss;
            (s / (nf - 1.0), var.sqrt())
        })
        .collect();
    Ok(CovEstimate {
        points: points.to_vec(),
        cov: entries.iter().map(|e| e.0).collect(),
        se: entries.iter().map(|e| e.1).collect(),
        n_samples: n,
    })
}

/// Mean of `η` over `{i-ℓ, ..., i+ℓ}` with periodic indices.
pub fn block_average(eta: &ParticleConfig, i: i64, ell: usize) -> f64 {
    assert!(
        2 * ell < eta.len(),
        "box of size {} exceeds {}",
        2 * ell + 1,
        eta.len()
    );
    let l = ell as i64;
    let s: u64 = (i - l..=i + l).map(|k| eta.at(k) as u64).sum();
    s as f64 / (2 * ell + 1) as f64
}

/// Function of `η(1), ..., η(r)`, tabulated on `{0,1}^r`.
///
/// Bit `i` of the table index holds `η(i+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder {
    r: usize,
    table: Vec<f64>,
    /// Sum of table entries per number of occupied sites.
    by_count: Vec<f64>,
}

impl Cylinder {
    pub fn new(r: usize, f: impl Fn(&[u8]) -> f64) -> Result<Self> {
        if r == 0 {
            return Err(Error::BadParam("cylinder support must be non-empty".into()));
        }
        if r > MAX_CYLINDER_R {
            return Err(Error::TooLarge {
                what: "cylinder support",
                value: r,
                max: MAX_CYLINDER_R,
            });
        }
        let mut buf = vec![0u8; r];
        let mut by_count = vec![0.0; r + 1];
        let table: Vec<f64> = (0..1usize << r)
            .map(|m| {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = ((m >> i) & 1) as u8;
                }
                let v = f(&buf);
                by_count[m.count_ones() as usize] += v;
                v
            })
            .collect();
        Ok(Self { r, table, by_count })
    }

    /// `η(1)(1-η(2)) + (1-η(1))η(2)`, the indicator of a non-flat step pair.
    pub fn flip_indicator() -> Self {
        Self::new(2, |e| (e[0] ^ e[1]) as f64).expect("r = 2")
    }

    pub fn support(&self) -> usize {
        self.r
    }

    pub fn value(&self, bits: usize) -> f64 {
        self.table[bits]
    }

    /// `Φ(τ_k η) = Φ(η(k+1), ..., η(k+r))`.
    pub fn eval_shifted(&self, eta: &ParticleConfig, k: i64) -> f64 {
        let mut m = 0usize;
        for i in 0..self.r {
            m |= (eta.at(k + 1 + i as i64) as usize) << i;
        }
        self.table[m]
    }

    /// `Φ̃(a)`, expectation under i.i.d. Bernoulli(`a`).
    pub fn phi_tilde(&self, a: f64) -> f64 {
        let r = self.r as i32;
        self.by_count
            .iter()
            .enumerate()
            .map(|(j, c)| c * a.powi(j as i32) * (1.0 - a).powi(r - j as i32))
            .sum()
    }

    /// Expectation under independent Bernoulli(`probs[i]`) at site `i+1`.
    pub fn expect_product(&self, probs: &[f64]) -> f64 {
        assert_eq!(probs.len(), self.r);
        self.table
            .iter()
            .enumerate()
            .map(|(m, v)| {
                let w: f64 = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &q)| if (m >> i) & 1 == 1 { q } else { 1.0 - q })
                    .product();
                v * w
            })
            .sum()
    }

    /// Derivative of [`Cylinder::expect_product`] in `probs[0]`. The
    /// expectation is affine in each parameter, so this is exact.
    pub fn expect_product_d0(&self, probs: &[f64]) -> f64 {
        let mut hi = probs.to_vec();
        let mut lo = probs.to_vec();
        hi[0] = 1.0;
        lo[0] = 0.0;
        self.expect_product(&hi) - self.expect_product(&lo)
    }
}

/// `V_ℓ(η)` together with `(1/N) Σ_{k=1}^{2N} V_ℓ(τ_k η)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplacementDiag {
    pub v: f64,
    pub lattice_average: f64,
}

/// `V_ℓ(η) = |M_{T_ℓ(0)} Φ(η) - Φ̃(M_{T_ℓ(0)} η)|` and its lattice average,
/// with periodic boxes.
pub fn replacement_diag(eta: &ParticleConfig, phi: &Cylinder, ell: usize) -> ReplacementDiag {
    let len = eta.len();
    assert!(2 * ell < len, "box of size {} exceeds {}", 2 * ell + 1, len);
    let width = (2 * ell + 1) as f64;
    // index j holds site j; site 0 is site 2N
    let a: Vec<f64> = (0..len as i64).map(|k| phi.eval_shifted(eta, k)).collect();
    let e: Vec<f64> = (0..len as i64).map(|k| eta.at(k) as f64).collect();
    let window = |v: &[f64], centre: usize| -> f64 {
        (0..=2 * ell)
            .map(|j| v[(centre + len + j - ell) % len])
            .sum::<f64>()
    };
    let mut sa = window(&a, 0);
    let mut se = window(&e, 0);
    let v0 = (sa / width - phi.phi_tilde(se / width)).abs();
    let mut total = 0.0;
    for k in 1..=len {
        let add = (k + ell) % len;
        let drop = (k + len - ell - 1) % len;
        sa += a[add] - a[drop];
        se += e[add] - e[drop];
        total += (sa / width - phi.phi_tilde(se / width)).abs();
    }
    ReplacementDiag {
        v: v0,
        lattice_average: total / (len / 2) as f64,
    }
}

/// `τ_k V^N_Ψ(η)`: `Ψ(τ_kη) - ν_N[Ψ(τ_k·)] - r ∂_{q_{k+1}}ν_N[Ψ(τ_k·)] (η(k+1) - q_{k+1})`.
///
/// Exploratory: the derivative is taken analytically, the expectation
/// being affine in each Bernoulli parameter.
pub fn boltzmann_gibbs_term(
    eta: &ParticleConfig,
    psi: &Cylinder,
    params: &ModelParams<f64>,
    k: usize,
) -> f64 {
    let len = params.len();
    let site = |i: usize| (k + i) % len + 1;
    let probs: Vec<f64> = (0..psi.support()).map(|i| params.q(site(i))).collect();
    let mean = psi.expect_product(&probs);
    let slope = psi.expect_product_d0(&probs);
    let first = eta.at(site(0) as i64) as f64;
    psi.eval_shifted(eta, k as i64) - mean - psi.support() as f64 * slope * (first - probs[0])
}

/// `Σ_{k=1}^{2N} τ_k V^N_Ψ(η) w(k)`.
pub fn boltzmann_gibbs_sum(
    eta: &ParticleConfig,
    psi: &Cylinder,
    params: &ModelParams<f64>,
    w: impl Fn(usize) -> f64,
) -> f64 {
    (1..=params.len())
        .map(|k| boltzmann_gibbs_term(eta, psi, params, k) * w(k))
        .sum()
}

/// Sum of squared jumps of `transform(t, S(t, site))` along a trajectory.
pub fn realized_qv(
    log: &EventLog,
    site: usize,
    transform: impl Fn(f64, i64) -> f64,
) -> Result<f64> {
    let mut cfg = log.initial.clone();
    let mut qv = 0.0;
    for ev in &log.events {
        let k = ev.site as usize;
        if k == site {
            let before = transform(ev.time, cfg.height(k));
            cfg.flip(k)?;
            let d = transform(ev.time, cfg.height(k)) - before;
            qv += d * d;
        } else {
            cfg.flip(k)?;
        }
    }
    Ok(qv)
}

/// Online realized quadratic variation of `ξ^N(·, k)` and its compensator
/// `∫ d⟨M(·,k)⟩`, integrated exactly between flips.
#[derive(Clone, Debug)]
pub struct QvTracker {
    params: ModelParams<f64>,
    site: usize,
    heights: [i64; 3],
    t: f64,
    pub qv: f64,
    pub compensator: f64,
}

impl QvTracker {
    pub fn new(
        params: &ModelParams<f64>,
        cfg: &BridgeConfig,
        site: usize,
        t0: f64,
    ) -> Result<Self> {
        if site == 0 || site >= cfg.len() {
            return Err(Error::BadParam(format!(
                "site must lie in 1..{}, got {site}",
                cfg.len()
            )));
        }
        Ok(Self {
            params: params.clone(),
            site,
            heights: [cfg.height(site - 1), cfg.height(site), cfg.height(site + 1)],
            t: t0,
            qv: 0.0,
            compensator: 0.0,
        })
    }

    fn integrate_to(&mut self, t: f64) {
        if t <= self.t {
            return;
        }
        // the rate is e^{2λt} times its value at t = 0
        let r0 = bracket_rate_local(&self.params, 0.0, self.heights);
        let two_l = 2.0 * self.params.lambda;
        let growth = if two_l == 0.0 {
            t - self.t
        } else {
            ((two_l * t).exp() - (two_l * self.t).exp()) / two_l
        };
        self.compensator += r0 * growth;
        self.t = t;
    }

    /// Feeds one flip; `cfg` is the configuration just after it.
    pub fn observe(&mut self, ev: &Event, cfg: &BridgeConfig) {
        self.integrate_to(ev.time);
        let k = ev.site as usize;
        if k + 1 >= self.site && k <= self.site + 1 {
            let old = self.heights[1];
            self.heights = [
                cfg.height(self.site - 1),
                cfg.height(self.site),
                cfg.height(self.site + 1),
            ];
            if k == self.site {
                let p = &self.params;
                let xi = |s: i64| (p.lambda * ev.time - p.gamma * s as f64).exp();
                let d = xi(self.heights[1]) - xi(old);
                self.qv += d * d;
            }
        }
    }

    pub fn finish(&mut self, t_end: f64) {
        self.integrate_to(t_end);
    }
}

/// One-sample test outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `Q_KS(λ) = 2 Σ_{j>=1} (-1)^{j-1} e^{-2j²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov test of `samples` against a continuous cdf.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestOutcome> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::TooFewSamples { needed: 30, got: n });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sn = nf.sqrt();
    Ok(TestOutcome {
        statistic: d,
        p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d),
        n,
    })
}

/// Pearson chi-square test of observed counts against an exact pmf.
/// Cells with expected count below 5 are pooled into one.
pub fn chisq_test(counts: &[u64], probs: &[f64]) -> Result<TestOutcome> {
    if counts.len() != probs.len() {
        return Err(Error::BadParam(format!(
            "{} counts for {} cells",
            counts.len(),
            probs.len()
        )));
    }
    let n: u64 = counts.iter().sum();
    if n < 30 {
        return Err(Error::TooFewSamples {
            needed: 30,
            got: n as usize,
        });
    }
    let nf = n as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &p) in counts.iter().zip(probs) {
        let e = nf * p;
        if e < 5.0 {
            pool_o += o as f64;
            pool_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    } else if pool_o > 0.0 {
        return Ok(TestOutcome {
            statistic: f64::INFINITY,
            p_value: 0.0,
            n: n as usize,
        });
    }
    if cells < 2 {
        return Err(Error::BadParam(
            "chi-square needs at least two cells".into(),
        ));
    }
    let dist = ChiSquared::new((cells - 1) as f64).map_err(|e| Error::BadParam(e.to_string()))?;
    Ok(TestOutcome {
        statistic: stat,
        p_value: dist.sf(stat),
        n: n as usize,
    })
}

/// Machine-readable record of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n: usize,
    pub params: serde_json::Value,
    pub pass: bool,
}

impl TestReport {
    pub fn from_outcome(test: &str, o: TestOutcome, params: serde_json::Value, level: f64) -> Self {
        Self {
            test: test.to_string(),
            statistic: o.statistic,
            p_value: Some(o.p_value),
            n: o.n,
            params,
            pass: o.p_value > level,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{replica_rng, Kmc, TimeScale, TimeScaleKind};
    use crate::gibbs::{mu_exact, MuSampler};
    use crate::lattice::FlipDir;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};
    use statrs::distribution::Normal as NormalDist;

    fn field(values: Vec<f64>) -> RescaledField {
        let n = (values.len() - 1) / 2;
        let cfg = BridgeConfig::flat(n);
        let mut f = crate::scaling::m_field(&cfg, 0.0);
        f.values = values;
        f
    }

    #[test]
    fn identical_samples_have_zero_cov() {
        let f = field(vec![0.0, 0.3, -0.2, 0.1, 0.0]);
        let est = empirical_cov(&vec![f; 10], &[0.25, 0.5]).unwrap();
        assert!(est.cov.iter().all(|&c| c.abs() < 1e-28));
        assert!(est.se.iter().all(|&s| s.abs() < 1e-28));
        assert!(matches!(
            empirical_cov(&[field(vec![0.0; 5])], &[0.5]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let mut rng = replica_rng(3, 0);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let est = cov_from_rows(&rows, &[0.0, 1.0]).unwrap();
        let cov = |rs: &[Vec<f64>]| {
            let n = rs.len() as f64;
            let ma = rs.iter().map(|r| r[0]).sum::<f64>() / n;
            let mb = rs.iter().map(|r| r[1]).sum::<f64>() / n;
            rs.iter().map(|r| (r[0] - ma) * (r[1] - mb)).sum::<f64>() / (n - 1.0)
        };
        let loo: Vec<f64> = (0..12)
            .map(|i| {
                let rest: Vec<Vec<f64>> = rows
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, r)| r.clone())
                    .collect();
                cov(&rest)
            })
            .collect();
        let m = loo.iter().sum::<f64>() / 12.0;
        let var = 11.0 / 12.0 * loo.iter().map(|c| (c - m).powi(2)).sum::<f64>();
        assert!((est.get(0, 1) - cov(&rows)).abs() < 1e-14);
        assert!((est.se_at(0, 1) - var.sqrt()).abs() < 1e-12);
        assert_eq!(est.get(0, 1), est.get(1, 0));
    }

    #[test]
    fn brownian_bridge_cov() {
        let m = 64;
        let mut rng = replica_rng(11, 0);
        let normal = Normal::new(0.0, (1.0 / m as f64).sqrt()).unwrap();
        let samples: Vec<RescaledField> = (0..4000)
            .map(|_| {
                let mut w = vec![0.0];
                for _ in 0..m {
                    let last = *w.last().unwrap();
                    w.push(last + normal.sample(&mut rng));
                }
                let end = w[m];
                field((0..=m).map(|k| w[k] - k as f64 / m as f64 * end).collect())
            })
            .collect();
        let pts = [0.25, 0.5, 0.75];
        let est = empirical_cov(&samples, &pts).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (x, y) = (pts[i].min(pts[j]), pts[i].max(pts[j]));
                let want = x * (1.0 - y);
                assert!(
                    (est.get(i, j) - want).abs() < 3.0 * est.se_at(i, j),
                    "{i},{j}"
                );
                assert!(est.se_at(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn block_averages() {
        let ones = ParticleConfig::new(vec![1; 12]);
        assert_eq!(block_average(&ones, 3, 4), 1.0);
        let alt = ParticleConfig::new((0..12).map(|i| (i % 2) as u8).collect());
        for i in 0..12 {
            assert_eq!(block_average(&alt, i, 0), alt.at(i) as f64);
            for ell in 1..5 {
                let want = 0.5 + 1.0 / (2.0 * (2 * ell + 1) as f64);
                let got = block_average(&alt, i, ell);
                assert!((got - want).abs() < 1e-15 || (got - (1.0 - want)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn phi_tilde_values() {
        let psi = Cylinder::flip_indicator();
        for &a in &[0.0, 0.1, 0.5, 0.77, 1.0] {
            assert!((psi.phi_tilde(a) - 2.0 * a * (1.0 - a)).abs() < 1e-15);
        }
        let one = Cylinder::new(5, |_| 1.0).unwrap();
        assert!((one.phi_tilde(0.3) - 1.0).abs() < 1e-14);
        let f = Cylinder::new(3, |e| (e[0] as f64) * 2.0 - e[2] as f64 + 0.5).unwrap();
        assert_eq!(f.phi_tilde(0.0), f.value(0));
        assert_eq!(f.phi_tilde(1.0), f.value(0b111));
        assert!(matches!(
            Cylinder::new(21, |_| 0.0),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn phi_tilde_is_polynomial() {
        let mut rng = replica_rng(5, 0);
        let r = 4;
        let table: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        let f = Cylinder::new(r, |e| {
            let m: usize = e.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum();
            table[m]
        })
        .unwrap();
        // Lagrange interpolation through r+1 nodes reproduces the function
        let nodes: Vec<f64> = (0..=r).map(|i| i as f64 / r as f64).collect();
        let vals: Vec<f64> = nodes.iter().map(|&a| f.phi_tilde(a)).collect();
        for &a in &[0.13, 0.41, 0.9] {
            let interp: f64 = (0..=r)
                .map(|i| {
                    let basis: f64 = (0..=r)
                        .filter(|&j| j != i)
                        .map(|j| (a - nodes[j]) / (nodes[i] - nodes[j]))
                        .product();
                    vals[i] * basis
                })
                .sum();
            assert!((interp - f.phi_tilde(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn replacement_constant_and_brute_force() {
        let psi = Cylinder::flip_indicator();
        for c in [0u8, 1] {
            let eta = ParticleConfig::new(vec![c; 20]);
            let d = replacement_diag(&eta, &psi, 3);
            assert_eq!(d.v, 0.0);
            assert!(d.lattice_average.abs() < 1e-15);
        }
        let mut rng = replica_rng(9, 0);
        let eta = ParticleConfig::new((0..24).map(|_| rng.gen_range(0..2u8)).collect());
        let ell = 4;
        let brute = |x: &ParticleConfig| {
            let m = (-4..=4).map(|j| psi.eval_shifted(x, j)).sum::<f64>() / 9.0;
            let b = block_average(x, 0, ell);
            (m - psi.phi_tilde(b)).abs()
        };
        let d = replacement_diag(&eta, &psi, ell);
        assert!((d.v - brute(&eta)).abs() < 1e-14);
        let avg: f64 = (1..=24).map(|k| brute(&eta.shift(k))).sum::<f64>() / 12.0;
        assert!((d.lattice_average - avg).abs() < 1e-12);
    }

    #[test]
    fn replacement_lln_trend() {
        let psi = Cylinder::flip_indicator();
        let len = 4096;
        let mut means = Vec::new();
        for &ell in &[8usize, 32, 128] {
            let mut acc = 0.0;
            for rep in 0..20 {
                let mut rng = replica_rng(17, rep);
                let eta = ParticleConfig::new((0..len).map(|_| rng.gen_bool(0.3) as u8).collect());
                acc += replacement_diag(&eta, &psi, ell).lattice_average;
            }
            means.push(acc / 20.0);
        }
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    }

    #[test]
    fn boltzmann_gibbs_mean_zero() {
        let p = ModelParams::new(3, 1.0, 1.3).unwrap();
        let psi = Cylinder::flip_indicator();
        for k in 1..=6 {
            let mut mean = 0.0;
            for m in 0u64..64 {
                let eta: Vec<u8> = (0..6).map(|i| ((m >> i) & 1) as u8).collect();
                let w: f64 = (0..6)
                    .map(|i| {
                        if eta[i] == 1 {
                            p.q(i + 1)
                        } else {
                            1.0 - p.q(i + 1)
                        }
                    })
                    .product();
                mean += w * boltzmann_gibbs_term(&ParticleConfig::new(eta), &psi, &p, k);
            }
            assert!(mean.abs() < 1e-14, "k={k}: {mean}");
        }
    }

    #[test]
    fn qv_single_flip() {
        let p = ModelParams::new(2, 1.0 / 3.0, 1.0).unwrap();
        let init = BridgeConfig::flat(2);
        let t = 0.01;
        let mk = |site: u32, dir| EventLog {
            initial: init.clone(),
            t_end: 0.02,
            events: vec![Event { time: t, site, dir }],
            snapshots: vec![],
            seed: None,
        };
        let xi = |t: f64, s: i64| (p.lambda * t - p.gamma * s as f64).exp();
        // site 2 is a local minimum of the flat bridge 0,1,0,1,0
        assert!(init.is_down_corner(2));
        let qv = realized_qv(&mk(2, FlipDir::Raise), 2, xi).unwrap();
        let want = ((-2.0 * p.gamma).exp() - 1.0).powi(2) * xi(t, 0).powi(2);
        assert!((qv - want).abs() < 1e-15);
        assert_eq!(realized_qv(&mk(2, FlipDir::Raise), 1, xi).unwrap(), 0.0);
        let log = EventLog {
            events: vec![],
            ..mk(2, FlipDir::Raise)
        };
        assert_eq!(realized_qv(&log, 2, xi).unwrap(), 0.0);
    }

    #[test]
    fn tracker_matches_log() {
        let p = ModelParams::new(8, 1.0 / 3.0, 1.0).unwrap();
        let scale = TimeScale::for_params(TimeScaleKind::Kpz, &p);
        let init = BridgeConfig::flat(8);
        let mut kmc = Kmc::new(&p, init.clone(), scale, replica_rng(1, 0));
        let mut tr = QvTracker::new(&p, &init, 8, 0.0).unwrap();
        let mut events = Vec::new();
        kmc.run_until(0.05, |ev, cfg| {
            tr.observe(ev, cfg);
            events.push(*ev);
        });
        tr.finish(0.05);
        let log = EventLog {
            initial: init,
            t_end: 0.05,
            events,
            snapshots: vec![],
            seed: None,
        };
        let xi = |t: f64, s: i64| (p.lambda * t - p.gamma * s as f64).exp();
        let qv = realized_qv(&log, 8, xi).unwrap();
        assert!((qv - tr.qv).abs() <= 1e-12 * qv.max(1.0));
        assert!(tr.compensator > 0.0);
    }

    #[test]
    fn compensator_with_frozen_config() {
        // with no flips the integral is r0 (e^{2λT} - 1)/(2λ)
        let p = ModelParams::new(4, 1.0 / 3.0, 1.0).unwrap();
        let cfg = BridgeConfig::flat(4);
        let mut tr = QvTracker::new(&p, &cfg, 3, 0.0).unwrap();
        tr.finish(0.2);
        let r0 = crate::scaling::bracket_rate(&cfg, 3, &p, 0.0).unwrap();
        let h = 1e-5;
        let num: f64 = (0..20000)
            .map(|i| crate::scaling::bracket_rate(&cfg, 3, &p, (i as f64 + 0.5) * h).unwrap() * h)
            .sum();
        assert!((tr.compensator - num).abs() < 1e-8 * num.abs());
        assert!(
            (tr.compensator - r0 * ((0.4 * p.lambda).exp() - 1.0) / (2.0 * p.lambda)).abs()
                < 1e-12 * num.abs()
        );
    }

    #[test]
    fn kolmogorov_tail() {
        assert_eq!(kolmogorov_q(0.0), 1.0);
        // Q(1.36) is the classical 5% point
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-3);
        assert!(kolmogorov_q(3.0) < 1e-6);
    }

    #[test]
    fn ks_calibration() {
        let mut ps: Vec<f64> = (0..100)
            .map(|i| {
                let mut rng = replica_rng(23, i);
                let xs: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
                ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap().p_value
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let median = 0.5 * (ps[49] + ps[50]);
        assert!((0.3..=0.7).contains(&median), "{median}");
    }

    #[test]
    fn ks_power() {
        let mut rng = replica_rng(29, 0);
        let wrong = Normal::new(0.0, 0.55).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| wrong.sample(&mut rng)).collect();
        // bridge marginal at 1/2 is N(0, 1/4)
        let reference = NormalDist::new(0.0, 0.5).unwrap();
        let out = ks_test(&xs, |x| reference.cdf(x)).unwrap();
        assert!(out.p_value < 1e-3);
        assert!(matches!(
            ks_test(&xs[..10], |x| x),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn chisq_enumeration_oracle() {
        let p = ModelParams::new(3, 1.0, 1.0).unwrap();
        let table = mu_exact(&p).unwrap();
        let sampler = MuSampler::new(&p);
        let mut rng = replica_rng(31, 0);
        let mut counts = vec![0u64; table.masks.len()];
        for _ in 0..20_000 {
            let cfg = sampler.sample(&mut rng);
            counts[table.index_of(&cfg).unwrap()] += 1;
        }
        let out = chisq_test(&counts, &table.probs).unwrap();
        assert!(out.p_value > 1e-3, "{out:?}");
        let uniform = vec![1.0 / counts.len() as f64; counts.len()];
        assert!(chisq_test(&counts, &uniform).unwrap().p_value < 1e-3);
    }

    #[test]
    fn report_json() {
        let r = TestReport::from_outcome(
            "chisq",
            TestOutcome {
                statistic: 1.5,
                p_value: 0.2,
                n: 100,
            },
            serde_json::json!({"N": 3}),
            1e-3,
        );
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["test"], "chisq");
        assert_eq!(v["pass"], true);
        assert_eq!(v["params"]["N"], 3);
    }
}
