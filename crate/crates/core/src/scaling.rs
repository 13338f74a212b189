//! Rescaled observables of a bridge snapshot: fluctuation fields `u^N`,
//! height profiles `m^N` and `v^N`, the particle density measure, the KPZ
//! height `h^N` with its Hopf-Cole transform `ξ^N`, the bracket of the
//! martingale driving `ξ^N`, and the barrier and window used to control it.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::gibbs::{ModelParams, SigmaProfile};
use crate::lattice::BridgeConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    /// `u^N`, `α >= 1`: abscissa `k/2N`.
    Fluctuation,
    /// `u^N`, `α < 1`: abscissa `(k-N)/(2N)^α`.
    FluctuationCentred,
    /// `m^N`: abscissa `k/2N`.
    Height,
    /// `v^N`: abscissa `k/2N`.
    HeightFiner,
    /// `h^N`: abscissa `(k-N)/(2N)^{2α}`.
    Kpz,
}

impl FieldKind {
    pub fn label(self) -> &'static str {
        match self {
            FieldKind::Fluctuation => "u",
            FieldKind::FluctuationCentred => "u-centred",
            FieldKind::Height => "m",
            FieldKind::HeightFiner => "v",
            FieldKind::Kpz => "h",
        }
    }
}

/// Field sampled at every lattice site `k = 0..=2N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledField {
    pub kind: FieldKind,
    pub t: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    offset: f64,
    scale: f64,
}

impl RescaledField {
    fn new(
        kind: FieldKind,
        t: f64,
        n_half: usize,
        offset: f64,
        scale: f64,
        values: Vec<f64>,
    ) -> Self {
        let grid = (0..=2 * n_half)
            .map(|k| (k as f64 - offset) / scale)
            .collect();
        Self {
            kind,
            t,
            grid,
            values,
            offset,
            scale,
        }
    }

    /// Lattice index of a grid abscissa, if `x` is one.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let pos = x * self.scale + self.offset;
        let k = pos.round();
        if k < 0.0 || k as usize >= self.grid.len() {
            return None;
        }
        (self.grid[k as usize] == x).then_some(k as usize)
    }

    /// Fractional lattice position of `x`.
    pub fn position(&self, x: f64) -> f64 {
        x * self.scale + self.offset
    }

    /// Linear interpolation between lattice sites.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = self.position(x).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last - 1);
        let f = pos - k as f64;
        self.values[k] + f * (self.values[k + 1] - self.values[k])
    }
}

/// `u^N(t, ·)`: `(S(x 2N) - Σ^N_α(x))/√(2N)` for `α >= 1`, and
/// `(S(N + x(2N)^α) - Σ^N_α(x))/(2N)^{α/2}` for `α < 1`.
pub fn u_field(
    cfg: &BridgeConfig,
    params: &ModelParams<f64>,
    profile: &SigmaProfile<f64>,
    t: f64,
) -> RescaledField {
    let n = params.n_half;
    let len = params.len() as f64;
    let (kind, offset, scale, norm) = if params.alpha >= 1.0 {
        (FieldKind::Fluctuation, 0.0, len, len.sqrt())
    } else {
        let s = len.powf(params.alpha);
        (FieldKind::FluctuationCentred, n as f64, s, s.sqrt())
    };
    let values = cfg
        .heights()
        .iter()
        .zip(&profile.values)
        .map(|(&h, &m)| (h as f64 - m) / norm)
        .collect();
    RescaledField::new(kind, t, n, offset, scale, values)
}

/// `m^N(t, x) = S(x 2N)/2N`.
pub fn m_field(cfg: &BridgeConfig, t: f64) -> RescaledField {
    let len = cfg.len() as f64;
    let values = cfg.heights().iter().map(|&h| h as f64 / len).collect();
    RescaledField::new(FieldKind::Height, t, cfg.n_half(), 0.0, len, values)
}

/// `v^N(t, x) = S(x 2N)/(2N)^{2-α}`.
pub fn v_field(cfg: &BridgeConfig, params: &ModelParams<f64>, t: f64) -> RescaledField {
    let len = cfg.len() as f64;
    let div = len.powf(2.0 - params.alpha);
    let values = cfg.heights().iter().map(|&h| h as f64 / div).collect();
    RescaledField::new(FieldKind::HeightFiner, t, cfg.n_half(), 0.0, len, values)
}

/// Atoms `(k/2N, 1/2N)` of the empirical density at occupied sites.
pub fn rho_measure(cfg: &BridgeConfig) -> Vec<(f64, f64)> {
    let len = cfg.len() as f64;
    cfg.steps()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .map(|(i, _)| ((i + 1) as f64 / len, 1.0 / len))
        .collect()
}

/// `⟨ρ, 1_{[0,x]}⟩`.
pub fn rho_cdf(atoms: &[(f64, f64)], x: f64) -> f64 {
    atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum()
}

/// `h^N = γ S - λt` and `ξ^N = e^{-h^N}` on the KPZ grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KpzField {
    pub h: RescaledField,
    pub xi: Vec<f64>,
}

/// KPZ height and its Hopf-Cole transform at macroscopic time `t`.
pub fn kpz_fields(cfg: &BridgeConfig, params: &ModelParams<f64>, t: f64) -> KpzField {
    let n = params.n_half;
    let scale = (params.len() as f64).powf(2.0 * params.alpha);
    let shift = params.lambda * t;
    let h: Vec<f64> = cfg
        .heights()
        .iter()
        .map(|&s| params.gamma * s as f64 - shift)
        .collect();
    let xi = h.iter().map(|&v| (-v).exp()).collect();
    KpzField {
        h: RescaledField::new(FieldKind::Kpz, t, n, n as f64, scale, h),
        xi,
    }
}

/// `ξ^N(t, k) = exp(λt - γ S(k))`.
#[inline]
pub fn xi_at(cfg: &BridgeConfig, params: &ModelParams<f64>, t: f64, k: usize) -> f64 {
    (params.lambda * t - params.gamma * cfg.height(k) as f64).exp()
}

/// `d⟨M(·,k)⟩/dt = λ(ξΔξ + 2ξ²) - (2N)^{4α} ∇⁺ξ ∇⁻ξ` at site `k`.
pub fn bracket_rate(
    cfg: &BridgeConfig,
    k: usize,
    params: &ModelParams<f64>,
    t: f64,
) -> Result<f64> {
    if k == 0 || k >= cfg.len() {
        return Err(Error::BadParam(format!(
            "site must lie in 1..{}, got {k}",
            cfg.len()
        )));
    }
    let s = [cfg.height(k - 1), cfg.height(k), cfg.height(k + 1)];
    Ok(bracket_rate_local(params, t, s))
}

/// Bracket rate from the heights `S(k-1), S(k), S(k+1)`.
pub fn bracket_rate_local(params: &ModelParams<f64>, t: f64, s: [i64; 3]) -> f64 {
    let [xl, x, xr] = s.map(|h| (params.lambda * t - params.gamma * h as f64).exp());
    let lap = xl + xr - 2.0 * x;
    let speed = (params.len() as f64).powf(4.0 * params.alpha);
    params.lambda * (x * lap + 2.0 * x * x) - speed * (xr - x) * (x - xl)
}

/// The same quantity as a flip rate times the squared jump of `ξ(k)`.
pub fn jump_variance_rate(cfg: &BridgeConfig, k: usize, params: &ModelParams<f64>, t: f64) -> f64 {
    let x = xi_at(cfg, params, t, k);
    let speed = (params.len() as f64).powf(4.0 * params.alpha);
    let g = params.gamma;
    if cfg.is_down_corner(k) {
        // S -> S+2 multiplies ξ by e^{-2γ}
        let jump = x * (-2.0 * g).exp_m1();
        speed * params.p * jump * jump
    } else if cfg.is_up_corner(k) {
        let jump = x * (2.0 * g).exp_m1();
        speed * (1.0 - params.p) * jump * jump
    } else {
        0.0
    }
}

/// `C` with `|d⟨M(·,k)⟩/dt| <= C ξ(k)² (2N)^{2α}`: `8σ² e^{2γ}`.
pub fn bracket_bound_constant(params: &ModelParams<f64>) -> f64 {
    8.0 * params.sigma * params.sigma * (2.0 * params.gamma).exp()
}

/// `b^N(t, ℓ) = 2 + exp(λt - γ(ℓ ∧ (2N-ℓ)))` for `ℓ = 0..=2N`.
pub fn barrier(params: &ModelParams<f64>, t: f64) -> Vec<f64> {
    let len = params.len();
    (0..=len)
        .map(|l| 2.0 + (params.lambda * t - params.gamma * l.min(len - l) as f64).exp())
        .collect()
}

/// Bounds of `B^N_ε(t) = [λt/γ + εN, 2N - λt/γ - εN]`.
pub fn window(params: &ModelParams<f64>, t: f64, eps: f64) -> Result<(f64, f64)> {
    let n = params.n_half as f64;
    let front = params.lambda * t / params.gamma;
    let lo = front + eps * n;
    let hi = 2.0 * n - front - eps * n;
    if lo >= hi {
        return Err(Error::EmptyWindow { t, lo, hi });
    }
    Ok((lo, hi))
}

/// Time at which the two fronts of the window meet: `γ(1-ε)N/λ`.
pub fn window_merge_time(params: &ModelParams<f64>, eps: f64) -> f64 {
    params.gamma * (1.0 - eps) * params.n_half as f64 / params.lambda
}

/// Barrier together with a non-empty window.
pub fn barrier_and_window(
    params: &ModelParams<f64>,
    t: f64,
    eps: f64,
) -> Result<(Vec<f64>, (f64, f64))> {
    if !(t >= 0.0) || !(eps > 0.0) {
        return Err(Error::BadParam(format!(
            "need t >= 0 and eps > 0, got t={t}, eps={eps}"
        )));
    }
    let w = window(params, t, eps)?;
    Ok((barrier(params, t), w))
}

/// Experiment horizon for the KPZ field: `1/(2σ)` at `α = 1/3`, unbounded
/// otherwise.
pub fn kpz_horizon(params: &ModelParams<f64>) -> Option<f64> {
    ((params.alpha - 1.0 / 3.0).abs() < 1e-12 && params.sigma > 0.0).then(|| 0.5 / params.sigma)
}

/// Appends `(t, x, value, regime)` rows.
pub fn write_field_csv<W: Write>(mut w: W, field: &RescaledField) -> io::Result<()> {
    for (x, v) in field.grid.iter().zip(&field.values) {
        writeln!(w, "{},{},{},{}", field.t, x, v, field.kind.label())?;
    }
    Ok(())
}

/// Appends `(t, x, value, regime, xi, barrier, in_window)` rows.
pub fn write_kpz_csv<W: Write>(
    mut w: W,
    field: &KpzField,
    barrier: &[f64],
    window: Option<(f64, f64)>,
) -> io::Result<()> {
    for (k, ((x, h), xi)) in field
        .h
        .grid
        .iter()
        .zip(&field.h.values)
        .zip(&field.xi)
        .enumerate()
    {
        let inside = window.is_some_and(|(lo, hi)| (k as f64) >= lo && (k as f64) <= hi);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            field.h.t,
            x,
            h,
            field.h.kind.label(),
            xi,
            barrier[k],
            inside as u8
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::sigma_profile;
    use crate::lattice::enumerate_bridges;

    #[test]
    fn fluctuation_endpoints() {
        for &a in &[1.0, 2.0] {
            let p = ModelParams::new(16, a, 1.0).unwrap();
            let prof = sigma_profile(&p);
            let cfg = BridgeConfig::from_profile(16, |x| 0.3 * x.min(1.0 - x)).unwrap();
            let u = u_field(&cfg, &p, &prof, 0.0);
            assert_eq!(u.values[0], 0.0);
            assert_eq!(*u.values.last().unwrap(), 0.0);
            assert_eq!(u.kind, FieldKind::Fluctuation);
        }
        let p = ModelParams::new(16, 1.0, 0.0).unwrap();
        let prof = sigma_profile(&p);
        let cfg = BridgeConfig::maximal(16);
        let u = u_field(&cfg, &p, &prof, 0.0);
        for k in 0..=32 {
            assert_eq!(u.values[k], cfg.height(k) as f64 / 32f64.sqrt());
        }
    }

    #[test]
    fn grid_bijection() {
        let p = ModelParams::new(37, 0.4, 1.0).unwrap();
        let prof = sigma_profile(&p);
        let cfg = BridgeConfig::flat(37);
        let fields = [
            u_field(&cfg, &p, &prof, 0.0),
            m_field(&cfg, 0.0),
            v_field(&cfg, &p, 0.0),
            kpz_fields(&cfg, &p, 0.0).h,
        ];
        for f in &fields {
            for (k, &x) in f.grid.iter().enumerate() {
                assert_eq!(f.index_of(x), Some(k));
            }
        }
        let u = &fields[0];
        for k in 0..=74 {
            assert!((u.grid[k] - prof.grid[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn height_fields() {
        let flat = BridgeConfig::flat(10);
        let m = m_field(&flat, 0.0);
        assert!(m.values.iter().all(|&v| v.abs() <= 1.0 / 20.0));
        let max = BridgeConfig::maximal(10);
        let m = m_field(&max, 0.0);
        for (x, v) in m.grid.iter().zip(&m.values) {
            assert!((v - x.min(1.0 - x)).abs() < 1e-15);
        }
        let p = ModelParams::new(10, 0.5, 1.0).unwrap();
        let v = v_field(&max, &p, 0.0);
        for (a, b) in v.values.iter().zip(&m.values) {
            assert!((a - b * 20f64.powf(-0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn density_measure() {
        for cfg in enumerate_bridges(3).unwrap() {
            let rho = rho_measure(&cfg);
            let mass: f64 = rho.iter().map(|a| a.1).sum();
            assert!((mass - 0.5).abs() < 1e-15);
            let m = m_field(&cfg, 0.0);
            for k in 0..=6 {
                let x = k as f64 / 6.0;
                assert!((m.values[k] - (2.0 * rho_cdf(&rho, x) - x)).abs() < 1.0 / 6.0 + 1e-12);
            }
        }
    }

    #[test]
    fn kpz_flat_start() {
        let p = ModelParams::new(8, 1.0 / 3.0, 1.0).unwrap();
        let f = kpz_fields(&BridgeConfig::flat(8), &p, 0.0);
        for (k, &xi) in f.xi.iter().enumerate() {
            let want = if k % 2 == 0 { 1.0 } else { (-p.gamma).exp() };
            assert!((xi - want).abs() < 1e-15);
        }
        let f = kpz_fields(&BridgeConfig::flat(8), &p, 0.3);
        assert_eq!(f.xi[0], (p.lambda * 0.3).exp());
        for (h, xi) in f.h.values.iter().zip(&f.xi) {
            assert!((h + xi.ln()).abs() < 1e-12);
            assert!(*xi > 0.0);
        }
    }

    #[test]
    fn bracket_equals_jump_variance() {
        let p = ModelParams::new(5, 1.0 / 3.0, 1.0).unwrap();
        let c = bracket_bound_constant(&p) * (10f64).powf(2.0 / 3.0);
        for cfg in enumerate_bridges(5).unwrap() {
            for k in 1..10 {
                let b = bracket_rate(&cfg, k, &p, 0.2).unwrap();
                let j = jump_variance_rate(&cfg, k, &p, 0.2);
                let xi = xi_at(&cfg, &p, 0.2, k);
                let size = 10f64.powf(4.0 / 3.0) * xi * xi;
                assert!((b - j).abs() <= 1e-12 * size, "{b} vs {j}");
                assert!(b.abs() <= c * xi * xi);
            }
        }
        assert!(bracket_rate(&BridgeConfig::flat(5), 0, &p, 0.0).is_err());
    }

    #[test]
    fn barrier_values() {
        let p = ModelParams::new(64, 1.0 / 3.0, 1.0).unwrap();
        let b = barrier(&p, 0.0);
        assert!((b[64] - (2.0 + (-p.gamma * 64.0).exp())).abs() < 1e-15);
        let b = barrier(&p, 0.1);
        assert!((b[0] - (2.0 + (p.lambda * 0.1).exp())).abs() < 1e-12);
        let big = ModelParams::new(1 << 14, 0.25, 1.0).unwrap();
        assert!((barrier(&big, 0.0)[1 << 14] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn horizon() {
        assert_eq!(
            kpz_horizon(&ModelParams::new(8, 1.0 / 3.0, 2.0).unwrap()),
            Some(0.25)
        );
        assert_eq!(kpz_horizon(&ModelParams::new(8, 0.3, 2.0).unwrap()), None);
    }

    #[test]
    fn window_merge() {
        let p = ModelParams::new(64, 1.0 / 3.0, 1.0).unwrap();
        let eps = 0.1;
        let tm = window_merge_time(&p, eps);
        assert!(window(&p, tm * 0.999, eps).is_ok());
        assert!(matches!(
            window(&p, tm * 1.001, eps),
            Err(Error::EmptyWindow { .. })
        ));
        let (lo, hi) = window(&p, 0.0, eps).unwrap();
        assert!((lo - 6.4).abs() < 1e-12 && (hi - 121.6).abs() < 1e-12);
    }
}
