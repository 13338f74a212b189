//! Continuous-time corner-flip dynamics.
//!
//! A down corner flips up at rate `p_N`, an up corner flips down at rate
//! `1 - p_N`, all rates multiplied by the speed-up of the chosen
//! [`TimeScale`]. Times are macroscopic throughout.

use std::io::{self, Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::ModelParams;
use crate::lattice::{bridge_masks, BridgeConfig, FlipDir};

/// Largest half-length for which the dense generator is built.
pub const MAX_GENERATOR_N: usize = 7;

/// Speed-up regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScaleKind {
    /// Factor 1: raw microscopic time.
    Microscopic,
    /// `(2N)^2`.
    Diffusive,
    /// `(2N)^{2α}`.
    SubDiffusive,
    /// `(2N)^{(1+α)∧2}`.
    Hydrodynamic,
    /// `(2N)^{4α}`.
    Kpz,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeScale {
    pub kind: TimeScaleKind,
    pub factor: f64,
}

impl TimeScale {
    pub fn new(kind: TimeScaleKind, n_half: usize, alpha: f64) -> Self {
        let len = (2 * n_half) as f64;
        let factor = match kind {
            TimeScaleKind::Microscopic => 1.0,
            TimeScaleKind::Diffusive => len * len,
            TimeScaleKind::SubDiffusive => len.powf(2.0 * alpha),
            TimeScaleKind::Hydrodynamic => len.powf((1.0 + alpha).min(2.0)),
            TimeScaleKind::Kpz => len.powf(4.0 * alpha),
        };
        Self { kind, factor }
    }

    pub fn for_params(kind: TimeScaleKind, params: &ModelParams<f64>) -> Self {
        Self::new(kind, params.n_half, params.alpha)
    }

    pub fn microscopic() -> Self {
        Self {
            kind: TimeScaleKind::Microscopic,
            factor: 1.0,
        }
    }
}

/// One flip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: u32,
    pub dir: FlipDir,
}

/// Exact Gillespie simulator holding its own state and RNG.
#[derive(Clone, Debug)]
pub struct Kmc<R: RngCore = ChaCha8Rng> {
    cfg: BridgeConfig,
    time: f64,
    rate_down: f64,
    rate_up: f64,
    rng: R,
}

impl<R: RngCore> Kmc<R> {
    pub fn new(params: &ModelParams<f64>, init: BridgeConfig, scale: TimeScale, rng: R) -> Self {
        assert_eq!(
            init.n_half(),
            params.n_half,
            "configuration and parameters disagree on N"
        );
        Self {
            cfg: init,
            time: 0.0,
            rate_down: scale.factor * params.p,
            rate_up: scale.factor * (1.0 - params.p),
            rng,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn config(&self) -> &BridgeConfig {
        &self.cfg
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn into_config(self) -> BridgeConfig {
        self.cfg
    }

    /// Current total jump rate.
    pub fn total_rate(&self) -> f64 {
        self.rate_down * self.cfg.down_corners().len() as f64
            + self.rate_up * self.cfg.up_corners().len() as f64
    }

    /// Performs the next flip if it happens no later than `t_max`; otherwise
    /// moves the clock to `t_max` and returns `None`. Exact because waiting
    /// times are memoryless.
    #[inline]
    pub fn step_until(&mut self, t_max: f64) -> Option<Event> {
        let nd = self.cfg.down_corners().len();
        let nu = self.cfg.up_corners().len();
        let rd = self.rate_down * nd as f64;
        let total = rd + self.rate_up * nu as f64;
        if total <= 0.0 {
            self.time = self.time.max(t_max);
            return None;
        }
        let u: f64 = self.rng.gen();
        let dt = -(1.0 - u).ln() / total;
        if self.time + dt > t_max {
            self.time = t_max;
            return None;
        }
        self.time += dt;
        // conditionally on its class, the scaled pick is uniform over members
        let pick = self.rng.gen::<f64>() * total;
        let site = if pick < rd {
            let i = (pick / self.rate_down) as usize;
            self.cfg.down_corners().get(i.min(nd - 1))
        } else {
            let i = ((pick - rd) / self.rate_up) as usize;
            self.cfg.up_corners().get(i.min(nu - 1))
        };
        let flip = self.cfg.flip(site).expect("picked site is a corner");
        Some(Event {
            time: self.time,
            site: site as u32,
            dir: flip.dir,
        })
    }

    /// Runs to `t_max`, calling `on_event` after each flip with the new state.
    pub fn run_until(&mut self, t_max: f64, mut on_event: impl FnMut(&Event, &BridgeConfig)) {
        while let Some(ev) = self.step_until(t_max) {
            on_event(&ev, &self.cfg);
        }
    }

    /// Runs to `t_max` without observing events; returns the number of flips.
    pub fn advance(&mut self, t_max: f64) -> u64 {
        let mut n = 0;
        while self.step_until(t_max).is_some() {
            n += 1;
        }
        n
    }
}

/// Recorded trajectory with snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct EventLog {
    pub initial: BridgeConfig,
    pub t_end: f64,
    pub events: Vec<Event>,
    /// `(t, configuration at t)` in increasing `t`.
    pub snapshots: Vec<(f64, BridgeConfig)>,
    pub seed: Option<u64>,
}

impl EventLog {
    /// Rebuilds the snapshots by applying the events to the initial state.
    pub fn replay(&self) -> Result<Vec<(f64, BridgeConfig)>> {
        let mut cfg = self.initial.clone();
        let mut out = Vec::with_capacity(self.snapshots.len());
        let mut it = self.events.iter().peekable();
        for &(t, _) in &self.snapshots {
            while let Some(ev) = it.next_if(|e| e.time <= t) {
                let flip = cfg.flip(ev.site as usize)?;
                if flip.dir != ev.dir {
                    return Err(Error::Parse(format!(
                        "event at t={} flips site {} the wrong way",
                        ev.time, ev.site
                    )));
                }
            }
            out.push((t, cfg.clone()));
        }
        Ok(out)
    }

    /// Configuration at `t_end`.
    pub fn final_config(&self) -> Result<BridgeConfig> {
        let mut cfg = self.initial.clone();
        for ev in &self.events {
            cfg.flip(ev.site as usize)?;
        }
        Ok(cfg)
    }
}

fn check_snapshot_times(t_end: f64, times: &[f64]) -> Result<()> {
    if !(t_end >= 0.0) {
        return Err(Error::BadParam(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
        return Err(Error::BadParam(
            "snapshot times must be sorted and within [0, t_end]".into(),
        ));
    }
    Ok(())
}

/// Simulates up to `t_end`, recording every event and the configuration at
/// each snapshot time.
pub fn simulate<R: RngCore>(
    params: &ModelParams<f64>,
    init: BridgeConfig,
    t_end: f64,
    scale: TimeScale,
    snapshot_times: &[f64],
    rng: R,
) -> Result<EventLog> {
    check_snapshot_times(t_end, snapshot_times)?;
    let initial = init.clone();
    let mut kmc = Kmc::new(params, init, scale, rng);
    let mut events = Vec::new();
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    for &t in snapshot_times {
        while let Some(ev) = kmc.step_until(t) {
            events.push(ev);
        }
        snapshots.push((t, kmc.config().clone()));
    }
    while let Some(ev) = kmc.step_until(t_end) {
        events.push(ev);
    }
    Ok(EventLog {
        initial,
        t_end,
        events,
        snapshots,
        seed: None,
    })
}

/// Like [`simulate`] but keeps only the snapshots (large runs).
pub fn simulate_snapshots<R: RngCore>(
    params: &ModelParams<f64>,
    init: BridgeConfig,
    scale: TimeScale,
    snapshot_times: &[f64],
    rng: R,
) -> Result<Vec<BridgeConfig>> {
    let t_end = snapshot_times.last().copied().unwrap_or(0.0);
    check_snapshot_times(t_end, snapshot_times)?;
    let mut kmc = Kmc::new(params, init, scale, rng);
    Ok(snapshot_times
        .iter()
        .map(|&t| {
            kmc.advance(t);
            kmc.config().clone()
        })
        .collect())
}

/// RNG of replica `replica` in the experiment keyed by `seed`: one ChaCha
/// stream per replica.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Runs `n_replicas` independent recorded simulations in parallel. Replica
/// `i` uses [`replica_rng`]`(seed, i)`; the output order is the replica order.
pub fn ensemble<F>(
    params: &ModelParams<f64>,
    init_factory: F,
    t_end: f64,
    scale: TimeScale,
    snapshot_times: &[f64],
    n_replicas: usize,
    seed: u64,
) -> Result<Vec<EventLog>>
where
    F: Fn(usize, &mut ChaCha8Rng) -> BridgeConfig + Sync,
{
    (0..n_replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(seed, i as u64);
            let init = init_factory(i, &mut rng);
            let mut log = simulate(params, init, t_end, scale, snapshot_times, rng)?;
            log.seed = Some(seed);
            Ok(log)
        })
        .collect()
}

/// Parallel map over replicas with per-replica RNG streams, in replica order.
pub fn map_replicas<T, F>(n_replicas: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, ChaCha8Rng) -> T + Sync,
{
    (0..n_replicas)
        .into_par_iter()
        .map(|i| f(i, replica_rng(seed, i as u64)))
        .collect()
}

// ---------------------------------------------------------------------------
// Exact small-N oracles

/// Dense generator over all bridges, states in [`bridge_masks`] order.
#[derive(Clone, Debug)]
pub struct Generator {
    pub n_half: usize,
    pub masks: Vec<u64>,
    /// Row-major `dim × dim`.
    pub q: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.masks.len()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.dim() + j]
    }

    /// `max_i Σ_j |Q_ij|`.
    pub fn norm_inf(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .map(|i| {
                self.q[i * d..(i + 1) * d]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Row vector product `π Q`.
    pub fn left_mul(&self, pi: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (i, &w) in pi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &q) in out.iter_mut().zip(&self.q[i * d..(i + 1) * d]) {
                *o += w * q;
            }
        }
        out
    }

    pub fn index_of(&self, cfg: &BridgeConfig) -> Option<usize> {
        self.masks.binary_search(&cfg.mask()).ok()
    }
}

/// Builds the generator of the sped-up corner-flip chain (`N <= 7`).
pub fn generator_matrix(params: &ModelParams<f64>, scale: TimeScale) -> Result<Generator> {
    let n = params.n_half;
    if n > MAX_GENERATOR_N {
        return Err(Error::TooLarge {
            what: "N",
            value: n,
            max: MAX_GENERATOR_N,
        });
    }
    let masks = bridge_masks(n)?;
    let d = masks.len();
    let mut q = vec![0.0; d * d];
    let up_rate = scale.factor * params.p;
    let down_rate = scale.factor * (1.0 - params.p);
    for (i, &m) in masks.iter().enumerate() {
        let cfg = BridgeConfig::from_mask(n, m)?;
        let mut out = 0.0;
        for k in 1..2 * n {
            let rate = if cfg.is_down_corner(k) {
                up_rate
            } else if cfg.is_up_corner(k) {
                down_rate
            } else {
                continue;
            };
            // flipping corner k swaps steps k and k+1
            let target = m ^ (0b11 << (k - 1));
            let j = masks.binary_search(&target).expect("flip stays a bridge");
            q[i * d + j] += rate;
            out += rate;
        }
        q[i * d + i] = -out;
    }
    Ok(Generator {
        n_half: n,
        masks,
        q,
    })
}

/// `init · exp(tQ)` by uniformization, truncation error below `1e-13`.
pub fn evolve_master(gen: &Generator, init: &[f64], t: f64) -> Result<Vec<f64>> {
    let d = gen.dim();
    if init.len() != d {
        return Err(Error::BadParam(format!(
            "distribution has {} entries, expected {d}",
            init.len()
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::BadParam(format!("t must be non-negative, got {t}")));
    }
    let big_lambda = (0..d).map(|i| -gen.at(i, i)).fold(0.0, f64::max);
    let mean = big_lambda * t;
    if mean == 0.0 {
        return Ok(init.to_vec());
    }
    let n_max = (mean + 12.0 * mean.sqrt() + 50.0).ceil() as usize;
    let mut out = vec![0.0; d];
    let mut v = init.to_vec();
    let mut log_w = -mean;
    let mut cum = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            log_w += mean.ln() - (n as f64).ln();
            // v <- v (I + Q/Λ)
            let vq = gen.left_mul(&v);
            for (a, b) in v.iter_mut().zip(&vq) {
                *a += b / big_lambda;
            }
        }
        let w = log_w.exp();
        cum += w;
        for (o, &a) in out.iter_mut().zip(&v) {
            *o += w * a;
        }
        if n as f64 > mean && 1.0 - cum < 1e-14 {
            break;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Persistence

/// Writes events as little-endian `(f64 time, u32 site, u8 dir)` records;
/// `dir` is 1 for a raise and 0 for a lowering.
pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> io::Result<()> {
    for ev in events {
        w.write_all(&ev.time.to_le_bytes())?;
        w.write_all(&ev.site.to_le_bytes())?;
        w.write_all(&[(ev.dir == FlipDir::Raise) as u8])?;
    }
    Ok(())
}

/// Inverse of [`write_events`].
pub fn read_events<R: Read>(mut r: R) -> Result<Vec<Event>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::Parse(e.to_string()))?;
    if buf.len() % 13 != 0 {
        return Err(Error::Parse(format!(
            "event stream length {} is not a multiple of 13",
            buf.len()
        )));
    }
    buf.chunks_exact(13)
        .map(|c| {
            let time = f64::from_le_bytes(c[0..8].try_into().unwrap());
            let site = u32::from_le_bytes(c[8..12].try_into().unwrap());
            let dir = match c[12] {
                1 => FlipDir::Raise,
                0 => FlipDir::Lower,
                other => return Err(Error::Parse(format!("bad direction byte {other}"))),
            };
            Ok(Event { time, site, dir })
        })
        .collect()
}

/// Appends `(replica, t, k, S)` rows for one snapshot.
pub fn write_snapshot_csv<W: Write>(
    mut w: W,
    replica: usize,
    t: f64,
    cfg: &BridgeConfig,
) -> io::Result<()> {
    for (k, h) in cfg.heights().iter().enumerate() {
        writeln!(w, "{replica},{t},{k},{h}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::mu_exact;

    #[test]
    fn time_scale_factors() {
        assert_eq!(
            TimeScale::new(TimeScaleKind::Diffusive, 4, 0.5).factor,
            64.0
        );
        assert_eq!(
            TimeScale::new(TimeScaleKind::SubDiffusive, 8, 0.5).factor,
            16.0
        );
        assert_eq!(
            TimeScale::new(TimeScaleKind::Hydrodynamic, 8, 0.5).factor,
            64.0
        );
        assert_eq!(
            TimeScale::new(TimeScaleKind::Hydrodynamic, 8, 1.5).factor,
            256.0
        );
        assert_eq!(TimeScale::new(TimeScaleKind::Kpz, 4, 0.25).factor, 8.0);
    }

    #[test]
    fn zero_horizon() {
        let p = ModelParams::new(4, 1.0, 1.0).unwrap();
        let init = BridgeConfig::flat(4);
        let log = simulate(
            &p,
            init.clone(),
            0.0,
            TimeScale::microscopic(),
            &[0.0],
            replica_rng(1, 0),
        )
        .unwrap();
        assert!(log.events.is_empty());
        assert_eq!(log.snapshots, vec![(0.0, init)]);
    }

    #[test]
    fn replay_is_exact() {
        let p = ModelParams::new(10, 0.5, 1.0).unwrap();
        let times = [0.1, 0.5, 0.5, 2.0];
        let log = simulate(
            &p,
            BridgeConfig::flat(10),
            3.0,
            TimeScale::microscopic(),
            &times,
            replica_rng(3, 0),
        )
        .unwrap();
        assert!(log.events.windows(2).all(|w| w[0].time < w[1].time));
        assert_eq!(log.replay().unwrap(), log.snapshots);
        let again = simulate(
            &p,
            BridgeConfig::flat(10),
            3.0,
            TimeScale::microscopic(),
            &times,
            replica_rng(3, 0),
        )
        .unwrap();
        assert_eq!(again, log);
        let snaps = simulate_snapshots(
            &p,
            BridgeConfig::flat(10),
            TimeScale::microscopic(),
            &times,
            replica_rng(3, 0),
        )
        .unwrap();
        assert_eq!(
            snaps,
            log.snapshots
                .iter()
                .map(|s| s.1.clone())
                .collect::<Vec<_>>()
        );
        assert!(simulate(
            &p,
            BridgeConfig::flat(10),
            1.0,
            TimeScale::microscopic(),
            &[2.0],
            replica_rng(0, 0)
        )
        .is_err());
    }

    #[test]
    fn generator_n1() {
        let p = ModelParams::new(1, 1.0, 1.0).unwrap();
        let g = generator_matrix(
            &p,
            TimeScale {
                kind: TimeScaleKind::Microscopic,
                factor: 3.0,
            },
        )
        .unwrap();
        // mask 0b01 is "+-" (up corner), 0b10 is "-+" (down corner)
        assert_eq!(g.masks, vec![0b01, 0b10]);
        assert_eq!(g.at(0, 1), 3.0 * (1.0 - p.p));
        assert_eq!(g.at(1, 0), 3.0 * p.p);
        assert_eq!(g.at(0, 0), -g.at(0, 1));
        assert!(generator_matrix(
            &ModelParams::new(8, 1.0, 1.0).unwrap(),
            TimeScale::microscopic()
        )
        .is_err());
    }

    #[test]
    fn generator_rows_and_stationarity() {
        let p = ModelParams::new(5, 0.7, 1.3).unwrap();
        let g = generator_matrix(&p, TimeScale::microscopic()).unwrap();
        let d = g.dim();
        for i in 0..d {
            let s: f64 = g.q[i * d..(i + 1) * d].iter().sum();
            assert!(s.abs() < 1e-14);
        }
        let mu = mu_exact(&p).unwrap();
        let r = g.left_mul(&mu.probs);
        let res = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(res < 1e-10 * g.norm_inf());
    }

    #[test]
    fn master_equation_semigroup_and_limit() {
        let p = ModelParams::new(3, 1.0, 1.0).unwrap();
        let g = generator_matrix(&p, TimeScale::microscopic()).unwrap();
        let mut init = vec![0.0; g.dim()];
        init[g.index_of(&BridgeConfig::flat(3)).unwrap()] = 1.0;
        assert_eq!(evolve_master(&g, &init, 0.0).unwrap(), init);
        let a = evolve_master(&g, &init, 0.7).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let two = evolve_master(&g, &evolve_master(&g, &init, 0.3).unwrap(), 0.4).unwrap();
        for (x, y) in a.iter().zip(&two) {
            assert!((x - y).abs() < 1e-10);
        }
        let mu = mu_exact(&p).unwrap();
        let late = evolve_master(&g, &init, 400.0).unwrap();
        let tv: f64 = late
            .iter()
            .zip(&mu.probs)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 1e-8);
    }

    #[test]
    fn event_stream_round_trip() {
        let events = vec![
            Event {
                time: 0.25,
                site: 3,
                dir: FlipDir::Raise,
            },
            Event {
                time: 1.5,
                site: 70000,
                dir: FlipDir::Lower,
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        assert_eq!(buf.len(), 26);
        assert_eq!(read_events(&buf[..]).unwrap(), events);
        assert!(read_events(&buf[..25]).is_err());
    }

    #[test]
    fn same_seed_same_ensemble() {
        let p = ModelParams::new(6, 1.0, 1.0).unwrap();
        let run = || {
            ensemble(
                &p,
                |_, _| BridgeConfig::flat(6),
                1.0,
                TimeScale::microscopic(),
                &[0.5, 1.0],
                4,
                11,
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_ne!(a[0].events, a[1].events);
    }
}
