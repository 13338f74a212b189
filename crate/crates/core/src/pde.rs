//! Deterministic limit equations on `[0, 1]`: the Dirichlet heat equation
//! (optionally forced), the viscous Hamilton-Jacobi equation through the
//! Hopf-Cole transform, and a Godunov scheme for the inviscid Burgers-type
//! density equation with boundary data `1` on the left and `0` on the right.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::num::Real;

/// How the boundary is imposed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary<T: Real> {
    DirichletZero,
    /// Equal time-dependent value at both ends; `value` is the current one.
    DirichletTime {
        value: T,
    },
    /// Density data `1` at `x = 0` and `0` at `x = 1`, imposed weakly.
    Bln,
}

impl<T: Real> Boundary<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Boundary::DirichletZero => "dirichlet-zero",
            Boundary::DirichletTime { .. } => "dirichlet-time",
            Boundary::Bln => "bln",
        }
    }
}

/// Whether `values` sit on the `M+1` grid nodes or on `M` cell centres.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Nodes,
    Cells,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdeState<T: Real> {
    /// Abscissae of `values`: `i/M` for nodes, `(i+½)/M` for cells.
    pub grid: Vec<T>,
    pub values: Vec<T>,
    pub t: T,
    pub bc: Boundary<T>,
    pub layout: Layout,
}

impl<T: Real> PdeState<T> {
    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        match self.layout {
            Layout::Nodes => self.values.len() - 1,
            Layout::Cells => self.values.len(),
        }
    }

    pub fn dx(&self) -> T {
        T::one() / T::idx(self.intervals())
    }

    /// Linear interpolation at `x ∈ [0, 1]` (nodal layout) or nearest cell.
    pub fn eval(&self, x: T) -> T {
        let m = self.intervals();
        match self.layout {
            Layout::Nodes => {
                let pos = (x * T::idx(m)).max(T::zero()).min(T::idx(m));
                let i = pos.floor().to_usize().unwrap_or(0).min(m - 1);
                let f = pos - T::idx(i);
                self.values[i] + f * (self.values[i + 1] - self.values[i])
            }
            Layout::Cells => {
                let i = (x * T::idx(m)).floor().to_usize().unwrap_or(0).min(m - 1);
                self.values[i]
            }
        }
    }

    /// `sup_i |values_i - f(grid_i)|`.
    pub fn sup_error(&self, f: impl Fn(T) -> T) -> T {
        self.grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| (v - f(x)).abs())
            .fold(T::zero(), T::max)
    }

    /// `∫ |u - v|` against another state on the same grid.
    pub fn l1_distance(&self, other: &Self) -> T {
        assert_eq!(self.values.len(), other.values.len(), "grids differ");
        let s: T = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        s * self.dx()
    }
}

fn nodes<T: Real>(m: usize) -> Vec<T> {
    (0..=m).map(|i| T::idx(i) / T::idx(m)).collect()
}

fn cells<T: Real>(m: usize) -> Vec<T> {
    (0..m)
        .map(|i| (T::idx(i) + T::lit(0.5)) / T::idx(m))
        .collect()
}

/// `x ∧ (1-x) ∧ σt`, the height profile started from the flat density `½`.
pub fn flat_hydro_oracle<T: Real>(t: T, x: T, sigma: T) -> T {
    x.min(T::one() - x).min(sigma * t)
}

// ---------------------------------------------------------------------------
// Heat equation

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Explicit,
    CrankNicolson,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatOptions<T: Real> {
    /// Number of intervals.
    pub m: usize,
    pub scheme: Scheme,
    /// Time step; defaults to `0.9 dx²` (explicit) or `dx/4` (Crank-Nicolson).
    pub dt: Option<T>,
}

impl<T: Real> Default for HeatOptions<T> {
    fn default() -> Self {
        Self {
            m: 1024,
            scheme: Scheme::CrankNicolson,
            dt: None,
        }
    }
}

impl<T: Real> HeatOptions<T> {
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            ..Self::default()
        }
    }
}

/// Factorised constant tridiagonal system with `diag` on the diagonal and
/// `off` on both off-diagonals.
struct Tridiag<T: Real> {
    off: T,
    cprime: Vec<T>,
    denom: Vec<T>,
}

impl<T: Real> Tridiag<T> {
    fn new(n: usize, diag: T, off: T) -> Self {
        let mut cprime = Vec::with_capacity(n);
        let mut denom = Vec::with_capacity(n);
        let mut prev = T::zero();
        for i in 0..n {
            let d = if i == 0 { diag } else { diag - off * prev };
            denom.push(d);
            prev = off / d;
            cprime.push(prev);
        }
        Self { off, cprime, denom }
    }

    /// Solves in place.
    fn solve(&self, rhs: &mut [T]) {
        let n = rhs.len();
        rhs[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.off * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] = rhs[i] - self.cprime[i] * rhs[i + 1];
        }
    }
}

/// θ-scheme step for `u_t = ν u_xx + f` on the interior nodes with equal
/// Dirichlet values `g0`, `g1` at the old and new times.
#[allow(clippy::too_many_arguments)]
fn theta_step<T: Real>(
    u: &mut [T],
    scratch: &mut [T],
    r: T,
    theta: T,
    dt: T,
    forcing: T,
    g0: T,
    g1: T,
    solver: Option<&Tridiag<T>>,
) {
    let n = u.len();
    let expl = (T::one() - theta) * r;
    let two = T::lit(2.0);
    for i in 0..n {
        let left = if i == 0 { g0 } else { u[i - 1] };
        let right = if i + 1 == n { g0 } else { u[i + 1] };
        scratch[i] = u[i] + expl * (left - two * u[i] + right) + dt * forcing;
    }
    if let Some(sys) = solver {
        let imp = theta * r;
        scratch[0] = scratch[0] + imp * g1;
        scratch[n - 1] = scratch[n - 1] + imp * g1;
        sys.solve(scratch);
    }
    u.copy_from_slice(scratch);
}

/// Heat flow `u_t = ν u_xx + forcing` from nodal data `u0` with equal
/// boundary values `boundary(t)` at both ends.
fn heat_general<T: Real>(
    u0: Vec<T>,
    t: T,
    nu: T,
    forcing: T,
    boundary: impl Fn(T) -> T,
    opts: &HeatOptions<T>,
) -> Result<Vec<T>> {
    let m = opts.m;
    if m < 2 {
        return Err(Error::BadParam("need at least two intervals".into()));
    }
    if !(t >= T::zero()) {
        return Err(Error::BadParam(format!(
            "t must be non-negative, got {}",
            t.f64()
        )));
    }
    let dx = T::one() / T::idx(m);
    let dx2 = dx * dx;
    let mut u: Vec<T> = u0[1..m].to_vec();
    let mut scratch = vec![T::zero(); m - 1];
    if t > T::zero() {
        match opts.scheme {
            Scheme::Explicit => {
                let bound = dx2 / (T::lit(2.0) * nu);
                let target = opts.dt.unwrap_or(T::lit(0.9) * bound);
                if target > bound {
                    return Err(Error::CflViolation {
                        dt: target.f64(),
                        bound: bound.f64(),
                    });
                }
                let steps = (t / target).ceil().to_usize().unwrap_or(1).max(1);
                let dt = t / T::idx(steps);
                let r = nu * dt / dx2;
                for s in 0..steps {
                    let g0 = boundary(T::idx(s) * dt);
                    theta_step(
                        &mut u,
                        &mut scratch,
                        r,
                        T::zero(),
                        dt,
                        forcing,
                        g0,
                        g0,
                        None,
                    );
                }
            }
            Scheme::CrankNicolson => {
                let target = opts.dt.unwrap_or(dx / T::lit(4.0));
                let steps = (t / target).ceil().to_usize().unwrap_or(1).max(2);
                let dt = t / T::idx(steps);
                // Rannacher start: four backward-Euler half steps damp the
                // high modes of non-smooth data before Crank-Nicolson.
                let half = dt * T::lit(0.5);
                let r_half = nu * half / dx2;
                let be = Tridiag::new(m - 1, T::one() + T::lit(2.0) * r_half, -r_half);
                let mut now = T::zero();
                for _ in 0..4 {
                    let next = now + half;
                    theta_step(
                        &mut u,
                        &mut scratch,
                        r_half,
                        T::one(),
                        half,
                        forcing,
                        boundary(now),
                        boundary(next),
                        Some(&be),
                    );
                    now = next;
                }
                let r = nu * dt / dx2;
                let cn = Tridiag::new(m - 1, T::one() + r, -r * T::lit(0.5));
                for s in 2..steps {
                    let t0 = T::idx(s) * dt;
                    let t1 = T::idx(s + 1) * dt;
                    theta_step(
                        &mut u,
                        &mut scratch,
                        r,
                        T::lit(0.5),
                        dt,
                        forcing,
                        boundary(t0),
                        boundary(t1),
                        Some(&cn),
                    );
                }
            }
        }
    }
    let g = boundary(t);
    let mut out = Vec::with_capacity(m + 1);
    out.push(g);
    out.extend_from_slice(&u);
    out.push(g);
    Ok(out)
}

/// `∂_t m = ½ ∂²_x m + forcing` on `[0,1]`, `m = 0` at both ends.
pub fn solve_heat<T: Real>(
    m0: impl Fn(T) -> T,
    t: T,
    forcing: T,
    opts: &HeatOptions<T>,
) -> Result<PdeState<T>> {
    let grid = nodes::<T>(opts.m);
    let mut u0: Vec<T> = grid.iter().map(|&x| m0(x)).collect();
    u0[0] = T::zero();
    u0[opts.m] = T::zero();
    let values = heat_general(u0, t, T::lit(0.5), forcing, |_| T::zero(), opts)?;
    Ok(PdeState {
        grid,
        values,
        t,
        bc: Boundary::DirichletZero,
        layout: Layout::Nodes,
    })
}

/// `∂_t m = ½ ∂²_x m + σ(1 - (∂_x m)²)`, `m = 0` at both ends, solved through
/// `ξ = exp(2σ(σt - m))`, which satisfies the plain heat equation with
/// boundary value `e^{2σ²t}`.
pub fn solve_viscous_hj<T: Real>(
    m0: impl Fn(T) -> T,
    t: T,
    sigma: T,
    opts: &HeatOptions<T>,
) -> Result<PdeState<T>> {
    if sigma == T::zero() {
        return solve_heat(m0, t, T::zero(), opts);
    }
    let two_s = T::lit(2.0) * sigma;
    let grid = nodes::<T>(opts.m);
    let xi0: Vec<T> = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 || i == opts.m {
                T::one()
            } else {
                (-two_s * m0(x)).exp()
            }
        })
        .collect();
    let xi = heat_general(
        xi0,
        t,
        T::lit(0.5),
        T::zero(),
        |s| (two_s * sigma * s).exp(),
        opts,
    )?;
    if let Some(node) = xi.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::NonPositive { node });
    }
    let values = xi.iter().map(|&v| sigma * t - v.ln() / two_s).collect();
    Ok(PdeState {
        grid,
        values,
        t,
        bc: Boundary::DirichletZero,
        layout: Layout::Nodes,
    })
}

// ---------------------------------------------------------------------------
// Entropy solver

/// Which flux the density equation uses: `-2σ η(1-η)` or `-2 η(1-η)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BurgersFlux {
    WithSigma,
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GodunovOptions<T: Real> {
    /// Number of cells.
    pub m: usize,
    /// Courant number `dt · max|F'| / dx`; at most `½`.
    pub cfl: T,
    pub flux: BurgersFlux,
}

impl<T: Real> Default for GodunovOptions<T> {
    fn default() -> Self {
        Self {
            m: 1024,
            cfl: T::lit(0.45),
            flux: BurgersFlux::WithSigma,
        }
    }
}

/// `F(η) = -2s η(1-η)`.
#[inline]
pub fn burgers_flux<T: Real>(eta: T, s: T) -> T {
    -T::lit(2.0) * s * eta * (T::one() - eta)
}

/// Godunov numerical flux for the convex `F` above (minimum at `½`).
#[inline]
pub fn godunov_flux<T: Real>(ul: T, ur: T, s: T) -> T {
    let half = T::lit(0.5);
    if ul <= ur {
        burgers_flux(half.max(ul).min(ur), s)
    } else {
        burgers_flux(ul, s).max(burgers_flux(ur, s))
    }
}

/// Density state plus the time-integrated net boundary inflow.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropySolution<T: Real> {
    pub state: PdeState<T>,
    /// `∫₀^t (F̂_in - F̂_out) ds`, equal to the change of `∫ η`.
    pub boundary_inflow: T,
}

/// Godunov scheme for `∂_t η + ∂_x F(η) = 0` with ghost cells `η = 1` on
/// the left and `η = 0` on the right.
pub fn solve_entropy_burgers<T: Real>(
    eta0: impl Fn(T) -> T,
    t: T,
    sigma: T,
    opts: &GodunovOptions<T>,
) -> Result<EntropySolution<T>> {
    let grid = cells::<T>(opts.m);
    let init: Vec<T> = grid.iter().map(|&x| eta0(x)).collect();
    solve_entropy_burgers_cells(init, t, sigma, opts)
}

/// As [`solve_entropy_burgers`] from given cell averages.
pub fn solve_entropy_burgers_cells<T: Real>(
    init: Vec<T>,
    t: T,
    sigma: T,
    opts: &GodunovOptions<T>,
) -> Result<EntropySolution<T>> {
    let m = opts.m;
    if init.len() != m || m == 0 {
        return Err(Error::BadParam(format!(
            "expected {m} cell values, got {}",
            init.len()
        )));
    }
    if init.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
        return Err(Error::Domain("initial density must lie in [0,1]".into()));
    }
    let half = T::lit(0.5);
    if opts.cfl > half || !(opts.cfl > T::zero()) {
        return Err(Error::CflViolation {
            dt: opts.cfl.f64(),
            bound: 0.5,
        });
    }
    let s = match opts.flux {
        BurgersFlux::WithSigma => sigma,
        BurgersFlux::Unit => T::one(),
    };
    let dx = T::one() / T::idx(m);
    let mut eta = init;
    let mut inflow = T::zero();
    let mut fluxes = vec![T::zero(); m + 1];
    let max_speed = T::lit(2.0) * s.abs();
    if t > T::zero() && max_speed > T::zero() {
        let target = opts.cfl * dx / max_speed;
        let steps = (t / target).ceil().to_usize().unwrap_or(1).max(1);
        let dt = t / T::idx(steps);
        let ratio = dt / dx;
        for _ in 0..steps {
            fluxes[0] = godunov_flux(T::one(), eta[0], s);
            for i in 1..m {
                fluxes[i] = godunov_flux(eta[i - 1], eta[i], s);
            }
            fluxes[m] = godunov_flux(eta[m - 1], T::zero(), s);
            for i in 0..m {
                eta[i] = eta[i] - ratio * (fluxes[i + 1] - fluxes[i]);
            }
            inflow = inflow + dt * (fluxes[0] - fluxes[m]);
        }
    }
    Ok(EntropySolution {
        state: PdeState {
            grid: cells(m),
            values: eta,
            t,
            bc: Boundary::Bln,
            layout: Layout::Cells,
        },
        boundary_inflow: inflow,
    })
}

/// `m(x) = ∫₀^x (2η - 1)` on the `M+1` nodes: exact for cell averages,
/// trapezoidal for nodal data.
pub fn integrate_density<T: Real>(density: &PdeState<T>) -> PdeState<T> {
    let m = density.intervals();
    let dx = density.dx();
    let two = T::lit(2.0);
    let mut values = Vec::with_capacity(m + 1);
    let mut acc = T::zero();
    values.push(acc);
    match density.layout {
        Layout::Cells => {
            for &e in &density.values {
                acc = acc + (two * e - T::one()) * dx;
                values.push(acc);
            }
        }
        Layout::Nodes => {
            for w in density.values.windows(2) {
                acc = acc + (w[0] + w[1] - T::one()) * dx;
                values.push(acc);
            }
        }
    }
    PdeState {
        grid: nodes(m),
        values,
        t: density.t,
        bc: Boundary::DirichletZero,
        layout: Layout::Nodes,
    }
}

/// Appends `(t, x, value, solver, bc)` rows.
pub fn write_csv<T: Real, W: Write>(mut w: W, state: &PdeState<T>, solver: &str) -> io::Result<()> {
    for (x, v) in state.grid.iter().zip(&state.values) {
        writeln!(w, "{},{},{},{},{}", state.t, x, v, solver, state.bc.label())?;
    }
    Ok(())
}
