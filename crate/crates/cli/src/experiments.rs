//! One runner per subcommand. Each writes CSV files into the run directory
//! and returns its test reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use bridgelab::dynamics::{
    evolve_master, generator_matrix, map_replicas, replica_rng, simulate_snapshots, Kmc, TimeScale,
    TimeScaleKind,
};
use bridgelab::gibbs::{
    log_partition_asymptotic, log_partition_exact, log_partition_via_nu, mu_exact,
    nu_conditioned_exact, profile_rows, sigma_profile, MuSampler, Regime,
};
use bridgelab::kernel::{tail_bound, Representation};
use bridgelab::pde::{
    flat_hydro_oracle, integrate_density, solve_entropy_burgers_cells, solve_heat,
    solve_viscous_hj, write_csv as write_pde_csv, GodunovOptions, HeatOptions,
};
use bridgelab::scaling::{
    barrier, kpz_fields, kpz_horizon, m_field, u_field, v_field, window, write_field_csv,
    write_kpz_csv, RescaledField,
};
use bridgelab::stats::{chisq_test, cov_from_rows, QvTracker, TestOutcome, TestReport};
use bridgelab::{BridgeConfig, BridgeCovariance, HeatKernel, ModelParams};
use serde_json::json;

use crate::config::{ExperimentConfig, InitKind};
use crate::Command;

/// `|z|` above which a covariance entry counts as a mismatch.
pub const COV_Z_LIMIT: f64 = 3.0;
/// `|z|` limit for ensemble means against deterministic predictions.
pub const MEAN_Z_LIMIT: f64 = 4.0;
/// Relative tolerance for realized quadratic variation vs the bracket.
pub const QV_REL_TOL: f64 = 0.1;
/// Relative tolerance for the KPZ front position.
pub const FRONT_REL_TOL: f64 = 0.05;
/// Zone density threshold `δ`.
pub const ZONE_DELTA: f64 = 0.1;
/// Sites per density bin in the front run.
const ZONE_BIN: usize = 16;
/// Trajectories in the front run.
const FRONT_REPLICAS: usize = 4;
/// Replicas per sequential chunk in reductions.
const CHUNK: usize = 256;

pub fn run(cmd: Command, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    match cmd {
        Command::StaticClt => static_clt(cfg, dir),
        Command::Partition => partition(cfg, dir),
        Command::FluctEq => fluct_eq(cfg, dir),
        Command::Hydro => hydro(cfg, dir),
        Command::HydroFiner => hydro_finer(cfg, dir),
        Command::Kpz => kpz(cfg, dir),
        Command::KernelCheck => kernel_check(cfg, dir),
        Command::Oracle => oracle(cfg, dir),
        Command::EmitPlots => unreachable!("handled by the plots module"),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn model(cfg: &ExperimentConfig) -> Result<ModelParams> {
    let p = &cfg.params;
    Ok(ModelParams::new(p.n, p.alpha, p.sigma)?)
}

fn params_json(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({"N": cfg.params.n, "alpha": cfg.params.alpha, "sigma": cfg.params.sigma,
           "seed": cfg.seed, "replicas": cfg.n_replicas})
}

fn check(
    test: &str,
    statistic: f64,
    n: usize,
    params: serde_json::Value,
    pass: bool,
) -> TestReport {
    TestReport {
        test: test.to_string(),
        statistic,
        p_value: None,
        n,
        params,
        pass,
    }
}

fn initial(
    kind: InitKind,
    p: &ModelParams,
    sampler: Option<&MuSampler>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> BridgeConfig {
    match kind {
        InitKind::Flat => BridgeConfig::flat(p.n_half),
        InitKind::Maximal => BridgeConfig::maximal(p.n_half),
        InitKind::Minimal => BridgeConfig::minimal(p.n_half),
        InitKind::Equilibrium => sampler.expect("sampler for equilibrium start").sample(rng),
    }
}

/// Macroscopic abscissae of `0.25, 0.5, 0.75`, moved onto the lattice.
fn probe_points(p: &ModelParams) -> Vec<f64> {
    if p.alpha >= 1.0 {
        vec![0.25, 0.5, 0.75]
    } else {
        let s = (p.len() as f64).powf(p.alpha);
        [0.25, 0.5, 0.75]
            .iter()
            .map(|x| (x * s).floor() / s)
            .collect()
    }
}

fn at_points(u: &RescaledField, points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|&x| u.index_of(x).map_or_else(|| u.eval(x), |k| u.values[k]))
        .collect()
}

/// Writes covariance rows and returns the largest `|z|`.
fn cov_rows<W: Write>(
    w: &mut W,
    t: f64,
    rows: &[Vec<f64>],
    points: &[f64],
    limit: &BridgeCovariance,
) -> Result<f64> {
    let est = cov_from_rows(rows, points)?;
    let mut worst = 0.0f64;
    for (i, &x) in points.iter().enumerate() {
        for (j, &y) in points.iter().enumerate() {
            let want = limit.cov(x, y)?;
            let z = (est.get(i, j) - want) / est.se_at(i, j);
            worst = worst.max(z.abs());
            writeln!(
                w,
                "{t},{x},{y},{},{},{want},{z}",
                est.get(i, j),
                est.se_at(i, j)
            )?;
        }
    }
    Ok(worst)
}

fn static_clt(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let p = model(cfg)?;
    let prof = sigma_profile(&p);
    let sampler = MuSampler::new(&p);
    let points = probe_points(&p);
    let chunks = cfg.n_replicas.div_ceil(CHUNK);
    let parts = map_replicas(chunks, cfg.seed, |c, _| {
        let mut rows = Vec::new();
        let mut heights = vec![0i64; p.len() + 1];
        for r in c * CHUNK..((c + 1) * CHUNK).min(cfg.n_replicas) {
            let mut rng = replica_rng(cfg.seed, r as u64);
            let s = sampler.sample(&mut rng);
            for (acc, &h) in heights.iter_mut().zip(s.heights()) {
                *acc += h as i64;
            }
            rows.push(at_points(&u_field(&s, &p, &prof, 0.0), &points));
        }
        (rows, heights)
    });
    let mut rows = Vec::with_capacity(cfg.n_replicas);
    let mut heights = vec![0i64; p.len() + 1];
    for (r, h) in parts {
        rows.extend(r);
        heights.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }

    let mut w = create(dir, "profile.csv")?;
    writeln!(w, "k,x,sigma_n,sigma_asymptotic,mean_s")?;
    for (k, (x, s, a)) in profile_rows(&p).into_iter().enumerate() {
        writeln!(
            w,
            "{k},{x},{s},{a},{}",
            heights[k] as f64 / cfg.n_replicas as f64
        )?;
    }
    w.flush()?;

    let limit = BridgeCovariance::new(p.alpha, p.sigma)?;
    let mut w = create(dir, "cov.csv")?;
    writeln!(w, "t,x,y,empirical,se,limit,z")?;
    let worst = cov_rows(&mut w, 0.0, &rows, &points, &limit)?;
    w.flush()?;
    Ok(vec![check(
        "static-clt covariance max |z|",
        worst,
        cfg.n_replicas,
        params_json(cfg),
        worst <= COV_Z_LIMIT,
    )])
}

fn partition(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let ladder = if cfg.knobs.n_ladder.is_empty() {
        vec![cfg.params.n]
    } else {
        cfg.knobs.n_ladder.clone()
    };
    let mut w = create(dir, "partition.csv")?;
    writeln!(
        w,
        "n,alpha,sigma,log_z_dp,log_z_product,log_z_asymptotic,ratio"
    )?;
    let mut defect = 0.0f64;
    let mut ratios = Vec::new();
    for &n in &ladder {
        let p = ModelParams::new(n, cfg.params.alpha, cfg.params.sigma)?;
        let dp = log_partition_exact(&p);
        let prod = log_partition_via_nu(&p);
        let asym = log_partition_asymptotic(&p);
        let base = p.len() as f64 * std::f64::consts::LN_2;
        let ratio = (dp - base) / asym.log_ratio;
        defect = defect.max((dp - prod).abs());
        ratios.push(ratio);
        writeln!(
            w,
            "{n},{},{},{dp},{prod},{},{ratio}",
            p.alpha,
            p.sigma,
            asym.log_z()
        )?;
    }
    w.flush()?;
    let monotone = ratios
        .windows(2)
        .all(|r| (r[1] - 1.0).abs() < (r[0] - 1.0).abs());
    let last = *ratios.last().expect("non-empty ladder");
    let params = json!({"ladder": ladder, "alpha": cfg.params.alpha, "sigma": cfg.params.sigma});
    Ok(vec![
        check(
            "partition dp vs product form",
            defect,
            ladder.len(),
            params.clone(),
            defect < 1e-9,
        ),
        check(
            "partition ratio monotone toward 1",
            last,
            ladder.len(),
            params.clone(),
            monotone,
        ),
        check(
            "partition ratio within 10% at largest N",
            last,
            ladder.len(),
            params,
            (last - 1.0).abs() <= 0.1,
        ),
    ])
}

fn fluct_eq(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let p = model(cfg)?;
    let prof = sigma_profile(&p);
    let sampler = MuSampler::new(&p);
    let points = probe_points(&p);
    let scale = TimeScale::for_params(cfg.scale, &p);
    let times = &cfg.t_grid;
    if times.is_empty() {
        bail!("fluct-eq needs a non-empty t_grid");
    }
    // per replica: u at the probe points, one row per time
    let per_rep: Vec<Vec<Vec<f64>>> = map_replicas(cfg.n_replicas, cfg.seed, |_, mut rng| {
        let init = initial(cfg.knobs.init, &p, Some(&sampler), &mut rng);
        let mut kmc = Kmc::new(&p, init, scale, rng);
        times
            .iter()
            .map(|&t| {
                kmc.advance(t);
                at_points(&u_field(kmc.config(), &p, &prof, t), &points)
            })
            .collect()
    });
    let limit = BridgeCovariance::new(p.alpha, p.sigma)?;
    let mut w = create(dir, "cov.csv")?;
    writeln!(w, "t,x,y,empirical,se,limit,z")?;
    let mut reports = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let rows: Vec<Vec<f64>> = per_rep.iter().map(|r| r[i].clone()).collect();
        let worst = cov_rows(&mut w, t, &rows, &points, &limit)?;
        let mut params = params_json(cfg);
        params["t"] = json!(t);
        reports.push(check(
            "fluct-eq stationary covariance max |z|",
            worst,
            cfg.n_replicas,
            params,
            worst <= MEAN_Z_LIMIT,
        ));
    }
    w.flush()?;

    let mut w = create(dir, "time_cov.csv")?;
    writeln!(w, "t,x,cov_u0_ut")?;
    let n = per_rep.len() as f64;
    for (i, &t) in times.iter().enumerate() {
        for (j, &x) in points.iter().enumerate() {
            let m0 = per_rep.iter().map(|r| r[0][j]).sum::<f64>() / n;
            let mt = per_rep.iter().map(|r| r[i][j]).sum::<f64>() / n;
            let c = per_rep
                .iter()
                .map(|r| (r[0][j] - m0) * (r[i][j] - mt))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            writeln!(w, "{t},{x},{c}")?;
        }
    }
    w.flush()?;
    Ok(reports)
}

/// Mean of a field over replicas, per time.
fn mean_fields(per_rep: Vec<Vec<RescaledField>>) -> Vec<RescaledField> {
    let n = per_rep.len() as f64;
    let mut it = per_rep.into_iter();
    let mut acc = it.next().expect("at least one replica");
    for rep in it {
        for (a, f) in acc.iter_mut().zip(rep) {
            a.values.iter_mut().zip(f.values).for_each(|(x, y)| *x += y);
        }
    }
    for a in &mut acc {
        a.values.iter_mut().for_each(|v| *v /= n);
    }
    acc
}

fn sup_diff(field: &RescaledField, f: impl Fn(f64) -> f64) -> f64 {
    field
        .grid
        .iter()
        .zip(&field.values)
        .map(|(&x, &v)| (v - f(x)).abs())
        .fold(0.0, f64::max)
}

fn hydro(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let p = model(cfg)?;
    if cfg.knobs.init == InitKind::Equilibrium {
        bail!("hydro needs a deterministic start (flat, maximal or minimal)");
    }
    let scale = TimeScale::for_params(TimeScaleKind::Hydrodynamic, &p);
    let times = &cfg.t_grid;
    let mut rng0 = replica_rng(cfg.seed, u64::MAX);
    let init = initial(cfg.knobs.init, &p, None, &mut rng0);
    let per_rep = map_replicas(cfg.n_replicas, cfg.seed, |_, rng| {
        let snaps =
            simulate_snapshots(&p, init.clone(), scale, times, rng).expect("valid time grid");
        times
            .iter()
            .zip(&snaps)
            .map(|(&t, s)| m_field(s, t))
            .collect::<Vec<_>>()
    });
    let fields = mean_fields(per_rep);
    let m0 = m_field(&init, 0.0);

    let mut fw = create(dir, "fields.csv")?;
    writeln!(fw, "t,x,value,regime")?;
    let mut pw = create(dir, "pde.csv")?;
    writeln!(pw, "t,x,value,solver,bc")?;
    let mut reports = Vec::new();
    let heat = HeatOptions::with_m(cfg.knobs.grid_m);
    let m = cfg.knobs.grid_m;
    for (field, &t) in fields.iter().zip(times) {
        write_field_csv(&mut fw, field)?;
        let (solver, err) = match p.regime() {
            Regime::BelowOne => {
                // coarse-grained initial density on m cells
                let eta: Vec<f64> = (0..m)
                    .map(|i| {
                        let (a, b) = (i as f64 / m as f64, (i + 1) as f64 / m as f64);
                        0.5 + 0.5 * (m0.eval(b) - m0.eval(a)) * m as f64
                    })
                    .collect();
                let opts = GodunovOptions {
                    m,
                    flux: cfg.knobs.burgers_flux,
                    ..Default::default()
                };
                let sol = solve_entropy_burgers_cells(eta, t, p.sigma, &opts)?;
                let height = integrate_density(&sol.state);
                write_pde_csv(&mut pw, &height, "godunov")?;
                if cfg.knobs.init == InitKind::Flat {
                    let oracle = sup_diff(field, |x| flat_hydro_oracle(t, x, p.sigma));
                    let mut params = params_json(cfg);
                    params["t"] = json!(t);
                    reports.push(check(
                        "hydro sup error vs flat oracle",
                        oracle,
                        cfg.n_replicas,
                        params,
                        oracle <= cfg.knobs.tolerance,
                    ));
                }
                ("godunov", sup_diff(field, |x| height.eval(x)))
            }
            Regime::Critical => {
                let sol = solve_viscous_hj(|x| m0.eval(x), t, p.sigma, &heat)?;
                write_pde_csv(&mut pw, &sol, "viscous-hj")?;
                ("viscous-hj", sup_diff(field, |x| sol.eval(x)))
            }
            Regime::AboveOne => {
                let sol = solve_heat(|x| m0.eval(x), t, 0.0, &heat)?;
                write_pde_csv(&mut pw, &sol, "heat")?;
                ("heat", sup_diff(field, |x| sol.eval(x)))
            }
        };
        let mut params = params_json(cfg);
        params["t"] = json!(t);
        reports.push(check(
            &format!("hydro sup error vs {solver}"),
            err,
            cfg.n_replicas,
            params,
            err <= cfg.knobs.tolerance,
        ));
    }
    fw.flush()?;
    pw.flush()?;
    Ok(reports)
}

fn hydro_finer(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let p = model(cfg)?;
    if !(p.alpha > 1.0 && p.alpha < 1.5) {
        bail!("hydro-finer needs 1 < alpha < 3/2, got {}", p.alpha);
    }
    if cfg.knobs.init == InitKind::Equilibrium {
        bail!("hydro-finer needs a deterministic start");
    }
    let scale = TimeScale::for_params(TimeScaleKind::Diffusive, &p);
    let times = &cfg.t_grid;
    let mut rng0 = replica_rng(cfg.seed, u64::MAX);
    let init = initial(cfg.knobs.init, &p, None, &mut rng0);
    let per_rep = map_replicas(cfg.n_replicas, cfg.seed, |_, rng| {
        let snaps =
            simulate_snapshots(&p, init.clone(), scale, times, rng).expect("valid time grid");
        times
            .iter()
            .zip(&snaps)
            .map(|(&t, s)| v_field(s, &p, t))
            .collect::<Vec<_>>()
    });
    let fields = mean_fields(per_rep);
    let v0 = v_field(&init, &p, 0.0);
    let opts = HeatOptions::with_m(cfg.knobs.grid_m);
    let mut fw = create(dir, "fields.csv")?;
    writeln!(fw, "t,x,value,regime")?;
    let mut pw = create(dir, "pde.csv")?;
    writeln!(pw, "t,x,value,solver,bc")?;
    let mut reports = Vec::new();
    for (field, &t) in fields.iter().zip(times) {
        write_field_csv(&mut fw, field)?;
        let sol = solve_heat(|x| v0.eval(x), t, p.sigma, &opts)?;
        write_pde_csv(&mut pw, &sol, "heat-forced")?;
        let err = sup_diff(field, |x| sol.eval(x));
        let mut params = params_json(cfg);
        params["t"] = json!(t);
        reports.push(check(
            "hydro-finer sup error vs forced heat",
            err,
            cfg.n_replicas,
            params,
            err <= cfg.knobs.tolerance,
        ));
    }
    fw.flush()?;
    pw.flush()?;
    Ok(reports)
}

struct KpzReplica {
    xi: Vec<Vec<f64>>,
    boundary_exact: bool,
    qv: f64,
    compensator: f64,
}

fn kpz(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let p = model(cfg)?;
    let times = &cfg.t_grid;
    let Some(&t_end) = times.last() else {
        bail!("kpz needs a non-empty t_grid");
    };
    if let Some(h) = kpz_horizon(&p) {
        if t_end > h {
            bail!("t_grid reaches {t_end}, beyond the horizon 1/(2 sigma) = {h}");
        }
    }
    if cfg.knobs.init == InitKind::Equilibrium {
        bail!("kpz needs a deterministic start");
    }
    let n = p.n_half;
    let scale = TimeScale::for_params(TimeScaleKind::Kpz, &p);
    let mut rng0 = replica_rng(cfg.seed, u64::MAX);
    let init = initial(cfg.knobs.init, &p, None, &mut rng0);

    let mut kw = create(dir, "kpz.csv")?;
    writeln!(kw, "t,x,value,regime,xi,barrier,in_window")?;
    let reps = map_replicas(cfg.n_replicas, cfg.seed, |r, rng| {
        let mut kmc = Kmc::new(&p, init.clone(), scale, rng);
        let mut tracker = QvTracker::new(&p, &init, n, 0.0).expect("centre site");
        let mut out = KpzReplica {
            xi: Vec::new(),
            boundary_exact: true,
            qv: 0.0,
            compensator: 0.0,
        };
        let mut rows = Vec::new();
        for &t in times {
            kmc.run_until(t, |ev, c| tracker.observe(ev, c));
            let f = kpz_fields(kmc.config(), &p, t);
            let edge = (p.lambda * t).exp();
            out.boundary_exact &= f.xi[0] == edge && f.xi[2 * n] == edge;
            if r == 0 {
                let b = barrier(&p, t);
                let win = window(&p, t, cfg.knobs.eps).ok();
                let mut buf = Vec::new();
                write_kpz_csv(&mut buf, &f, &b, win).expect("in-memory write");
                rows.push(buf);
            }
            out.xi.push(f.xi);
        }
        tracker.finish(t_end);
        out.qv = tracker.qv;
        out.compensator = tracker.compensator;
        (out, rows)
    });
    for row in &reps[0].1 {
        kw.write_all(row)?;
    }
    kw.flush()?;

    let nr = reps.len() as f64;
    let hk = HeatKernel::from_params(&p);
    let xi0: Vec<f64> = (1..2 * n)
        .map(|l| (-p.gamma * init.height(l) as f64).exp())
        .collect();
    let mut mw = create(dir, "mean.csv")?;
    writeln!(mw, "t,l,mean_xi,se,mild")?;
    let mut worst_z = 0.0f64;
    for (i, &t) in times.iter().enumerate() {
        let mild = hk.mild_initial_term(t, &xi0, p.lambda)?;
        for (l, &want) in mild.iter().enumerate() {
            let mean = reps.iter().map(|r| r.0.xi[i][l]).sum::<f64>() / nr;
            let var = reps
                .iter()
                .map(|r| (r.0.xi[i][l] - mean).powi(2))
                .sum::<f64>()
                / (nr - 1.0).max(1.0);
            let se = (var / nr).sqrt();
            writeln!(mw, "{t},{l},{mean},{se},{want}")?;
            if l == n && se > 0.0 {
                worst_z = worst_z.max(((mean - want) / se).abs());
            }
        }
    }
    mw.flush()?;

    let qv = reps.iter().map(|r| r.0.qv).sum::<f64>() / nr;
    let comp = reps.iter().map(|r| r.0.compensator).sum::<f64>() / nr;
    let rel_qv = (qv / comp - 1.0).abs();
    let mut bw = create(dir, "bracket.csv")?;
    writeln!(
        bw,
        "site,t_end,realized_qv,integrated_bracket,relative_error"
    )?;
    writeln!(bw, "{n},{t_end},{qv},{comp},{rel_qv}")?;
    bw.flush()?;

    let boundary = reps.iter().all(|r| r.0.boundary_exact);
    let (worst_front, zones) = kpz_front(
        cfg,
        dir,
        init_kind_config(cfg.knobs.init, cfg.knobs.front_n),
    )?;
    let params = params_json(cfg);
    let mut front_params = params.clone();
    front_params["N"] = json!(cfg.knobs.front_n);
    front_params["replicas"] = json!(FRONT_REPLICAS);
    Ok(vec![
        check(
            "kpz boundary value exact",
            0.0,
            reps.len(),
            params.clone(),
            boundary,
        ),
        check(
            "kpz mean vs mild term max |z| at centre",
            worst_z,
            reps.len(),
            params.clone(),
            worst_z <= MEAN_Z_LIMIT,
        ),
        check(
            "kpz realized QV vs bracket",
            rel_qv,
            reps.len(),
            params.clone(),
            rel_qv <= QV_REL_TOL,
        ),
        check(
            "kpz front vs lambda t / gamma",
            worst_front,
            FRONT_REPLICAS,
            front_params.clone(),
            worst_front <= FRONT_REL_TOL,
        ),
        check(
            "kpz three-zone densities",
            zones,
            FRONT_REPLICAS,
            front_params,
            zones <= ZONE_DELTA,
        ),
    ])
}

fn init_kind_config(kind: InitKind, n: usize) -> BridgeConfig {
    match kind {
        InitKind::Maximal => BridgeConfig::maximal(n),
        InitKind::Minimal => BridgeConfig::minimal(n),
        _ => BridgeConfig::flat(n),
    }
}

/// Front position and zone densities at `knobs.front_n`. The front estimate
/// is the mean centre height `S(N)`, which equals `∫₀^N (2η-1)` and so the
/// front position when the high-density zone has a sharp edge. Returns the
/// worst relative front error and the worst zone violation.
fn kpz_front(cfg: &ExperimentConfig, dir: &Path, init: BridgeConfig) -> Result<(f64, f64)> {
    let p = ModelParams::new(cfg.knobs.front_n, cfg.params.alpha, cfg.params.sigma)?;
    let n = p.n_half;
    let scale = TimeScale::for_params(TimeScaleKind::Kpz, &p);
    let times = &cfg.t_grid;
    let bins = (2 * n).div_ceil(ZONE_BIN);
    let reps = map_replicas(FRONT_REPLICAS, cfg.seed ^ 0xf00d, |_, rng| {
        let mut kmc = Kmc::new(&p, init.clone(), scale, rng);
        times
            .iter()
            .map(|&t| {
                kmc.advance(t);
                let mut dens = vec![0.0; bins];
                for (k, &s) in kmc.config().steps().iter().enumerate() {
                    dens[k / ZONE_BIN] += f64::from(s == 1);
                }
                (kmc.config().height(n) as f64, dens)
            })
            .collect::<Vec<_>>()
    });
    let nr = reps.len() as f64;
    let mut fw = create(dir, "front.csv")?;
    writeln!(fw, "t,measured,formula,relative_error,zone_lo,zone_hi")?;
    let mut dw = create(dir, "density.csv")?;
    writeln!(dw, "t,x,density")?;
    let (mut worst_front, mut zones) = (0.0f64, 0.0f64);
    for (i, &t) in times.iter().enumerate() {
        let measured = reps.iter().map(|r| r[i].0).sum::<f64>() / nr;
        let formula = p.lambda * t / p.gamma;
        let rel = if formula > 0.0 {
            (measured - formula).abs() / formula
        } else {
            0.0
        };
        worst_front = worst_front.max(rel);
        let margin = cfg.knobs.eps * n as f64;
        let (lo, hi) = (formula - margin, 2.0 * n as f64 - formula + margin);
        writeln!(fw, "{t},{measured},{formula},{rel},{lo},{hi}")?;
        for b in 0..bins {
            let (a, e) = (b * ZONE_BIN, ((b + 1) * ZONE_BIN).min(2 * n));
            let d = reps.iter().map(|r| r[i].1[b]).sum::<f64>() / (nr * (e - a) as f64);
            writeln!(dw, "{t},{},{d}", (a + e) as f64 / (4 * n) as f64)?;
            if (e as f64) <= lo {
                zones = zones.max(1.0 - d);
            } else if (a as f64) >= hi {
                zones = zones.max(d);
            }
        }
    }
    fw.flush()?;
    dw.flush()?;
    Ok((worst_front, zones))
}

fn kernel_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let ladder = if cfg.knobs.n_ladder.is_empty() {
        vec![cfg.params.n]
    } else {
        cfg.knobs.n_ladder.clone()
    };
    let mut w = create(dir, "kernel.csv")?;
    writeln!(
        w,
        "n,ct,spectral_vs_uniformization,spectral_vs_image_sum,chapman_kolmogorov"
    )?;
    let (mut rep, mut ck) = (0.0f64, 0.0f64);
    for &n in &ladder {
        let p = ModelParams::new(n, cfg.params.alpha, cfg.params.sigma)?;
        let hk = HeatKernel::from_params(&p);
        for &ct in &[0.5, 5.0, 50.0] {
            let t = ct / p.c;
            let s = hk.evaluate(t, Representation::Spectral)?;
            let du = s.max_abs_diff(&hk.evaluate(t, Representation::Uniformization)?);
            let di = s.max_abs_diff(&hk.evaluate(t, Representation::ImageSum)?);
            let half = hk.spectral(t / 2.0)?;
            let dc = s.max_abs_diff(&half.compose(&half));
            rep = rep.max(du).max(di);
            ck = ck.max(dc);
            writeln!(w, "{n},{ct},{du},{di},{dc}")?;
        }
    }
    w.flush()?;

    let line_hk = HeatKernel::new(4096, 1.0)?;
    let mut lw = create(dir, "line.csv")?;
    writeln!(lw, "ct,a,tail,bound")?;
    let mut mw = create(dir, "line_moments.csv")?;
    writeln!(mw, "ct,gradient_sum,two_p0,first_moment_over_sqrt_ct")?;
    let (mut grad, mut margin, mut moment) = (0.0f64, f64::INFINITY, 0.0f64);
    for &ct in &[0.1, 1.0, 10.0, 100.0] {
        let line = line_hk.line(ct)?;
        let g: f64 = line.iter().map(|(j, v)| (line.get(j + 1) - v).abs()).sum();
        let first: f64 = line.iter().map(|(j, v)| v * j.abs() as f64).sum::<f64>() / ct.sqrt();
        grad = grad.max((g - 2.0 * line.get(0)).abs());
        moment = moment.max(first);
        writeln!(mw, "{ct},{g},{},{first}", 2.0 * line.get(0))?;
        if ct >= 1.0 {
            for a in 1..=200i64 {
                let (tail, bound) = (line.upper_tail(a), tail_bound(a as f64, ct, 1.0));
                margin = margin.min(bound - tail);
                writeln!(lw, "{ct},{a},{tail},{bound}")?;
            }
        }
    }
    lw.flush()?;
    mw.flush()?;

    let p = model(cfg)?;
    if let Some(&t) = cfg.t_grid.first() {
        let eval = HeatKernel::from_params(&p).spectral(t)?;
        let mut bw = create(dir, "kernel.bin")?;
        eval.write_binary(&mut bw)?;
        bw.flush()?;
    }
    let params = json!({"ladder": ladder, "alpha": cfg.params.alpha, "sigma": cfg.params.sigma});
    Ok(vec![
        check(
            "kernel representations agree",
            rep,
            ladder.len(),
            params.clone(),
            rep < 1e-10,
        ),
        check(
            "kernel Chapman-Kolmogorov",
            ck,
            ladder.len(),
            params.clone(),
            ck < 1e-10,
        ),
        check(
            "line kernel gradient identity",
            grad,
            4,
            params.clone(),
            grad < 1e-12,
        ),
        check(
            "line kernel first moment <= 1.1 sqrt(ct)",
            moment,
            4,
            params.clone(),
            moment <= 1.1,
        ),
        check(
            "line kernel tail bound margin",
            margin,
            600,
            params,
            margin >= 0.0,
        ),
    ])
}

fn oracle(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<TestReport>> {
    let p = model(cfg)?;
    if p.n_half > 5 {
        bail!(
            "oracle runs exact enumeration and needs N <= 5, got {}",
            p.n_half
        );
    }
    let mu = mu_exact(&p)?;
    let nu = nu_conditioned_exact(&p)?;
    let scale = TimeScale::for_params(cfg.scale, &p);
    let gen = generator_matrix(&p, scale)?;

    let mut w = create(dir, "oracle.csv")?;
    writeln!(w, "mask,steps,mu,nu_conditioned")?;
    for (i, &m) in mu.masks.iter().enumerate() {
        let c = BridgeConfig::from_mask(p.n_half, m)?;
        writeln!(w, "{m},{},{},{}", c.to_line(), mu.probs[i], nu[i])?;
    }
    w.flush()?;

    let mut balance = 0.0f64;
    for i in 0..gen.dim() {
        for j in 0..gen.dim() {
            if i != j {
                balance =
                    balance.max((mu.probs[i] * gen.at(i, j) - mu.probs[j] * gen.at(j, i)).abs());
            }
        }
    }
    let cond = mu
        .probs
        .iter()
        .zip(&nu)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let z_defect = (mu.log_z - log_partition_exact(&p)).abs();
    let flow = gen
        .left_mul(&mu.probs)
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);

    // exact sampler against the enumeration
    let sampler = MuSampler::new(&p);
    let counts = count_states(cfg, &mu.masks, |_, mut rng| sampler.sample(&mut rng).mask());
    let sampler_test = chisq_test(&counts, &mu.probs)?;

    let params = params_json(cfg);
    let mut reports = vec![
        check(
            "oracle detailed balance",
            balance,
            gen.dim(),
            params.clone(),
            balance < 1e-12,
        ),
        check(
            "oracle conditioning identity",
            cond,
            gen.dim(),
            params.clone(),
            cond < 1e-12,
        ),
        check(
            "oracle partition dp vs enumeration",
            z_defect,
            gen.dim(),
            params.clone(),
            z_defect < 1e-10,
        ),
        check(
            "oracle stationarity",
            flow,
            gen.dim(),
            params.clone(),
            flow < 1e-12,
        ),
        TestReport::from_outcome(
            "oracle sampler chi-square",
            sampler_test,
            params.clone(),
            cfg.knobs.level,
        ),
    ];

    // dynamics against the master equation
    let init = BridgeConfig::flat(p.n_half);
    let mut pi0 = vec![0.0; gen.dim()];
    pi0[gen.index_of(&init).expect("flat bridge")] = 1.0;
    let times = &cfg.t_grid;
    let per_rep = map_replicas(cfg.n_replicas, cfg.seed, |_, rng| {
        let mut kmc = Kmc::new(&p, init.clone(), scale, rng);
        times
            .iter()
            .map(|&t| {
                kmc.advance(t);
                gen.index_of(kmc.config()).expect("bridge state")
            })
            .collect::<Vec<_>>()
    });
    for (i, &t) in times.iter().enumerate() {
        let mut counts = vec![0u64; gen.dim()];
        for r in &per_rep {
            counts[r[i]] += 1;
        }
        let law = evolve_master(&gen, &pi0, t)?;
        let out: TestOutcome = chisq_test(&counts, &law)?;
        let mut params = params.clone();
        params["t"] = json!(t);
        reports.push(TestReport::from_outcome(
            "oracle gillespie vs master equation",
            out,
            params,
            cfg.knobs.level,
        ));
    }
    Ok(reports)
}

fn count_states(
    cfg: &ExperimentConfig,
    masks: &[u64],
    draw: impl Fn(usize, rand_chacha::ChaCha8Rng) -> u64 + Sync,
) -> Vec<u64> {
    let drawn = map_replicas(cfg.n_replicas, cfg.seed ^ 0x5eed, draw);
    let mut counts = vec![0u64; masks.len()];
    for m in drawn {
        counts[masks.binary_search(&m).expect("drawn bridge")] += 1;
    }
    counts
}
