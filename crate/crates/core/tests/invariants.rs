use bridgelab::dynamics::{generator_matrix, replica_rng, Kmc, TimeScale};
use bridgelab::gibbs::{log_partition_exact, log_partition_via_nu, mu_exact};
use bridgelab::kernel::Representation;
use bridgelab::lattice::{BridgeConfig, ParticleConfig};
use bridgelab::pde::{solve_entropy_burgers_cells, GodunovOptions};
use bridgelab::stats::{block_average, cov_from_rows, Cylinder};
use bridgelab::{HeatKernel, ModelParams};
use proptest::prelude::*;

/// A random bridge on `2N` steps, built from a shuffle of `N` ups and `N` downs.
fn bridge(max_n: usize) -> impl Strategy<Value = BridgeConfig> {
    (1..=max_n)
        .prop_flat_map(|n| Just([vec![1i8; n], vec![-1i8; n]].concat()).prop_shuffle())
        .prop_map(|steps| BridgeConfig::from_steps(&steps).unwrap())
}

fn corners(cfg: &BridgeConfig) -> Vec<usize> {
    let mut v = cfg.down_corners().sorted();
    v.extend(cfg.up_corners().sorted());
    v
}

proptest! {
    #[test]
    fn flips_preserve_bridge(mut cfg in bridge(24), picks in prop::collection::vec(any::<prop::sample::Index>(), 0..64)) {
        for pick in picks {
            let c = corners(&cfg);
            if c.is_empty() {
                break;
            }
            let k = c[pick.index(c.len())];
            let before = cfg.clone();
            let area = cfg.area();
            let f = cfg.flip(k).unwrap();
            prop_assert!(cfg.check_invariants());
            prop_assert_eq!(cfg.area() - area, f.dir.height_delta());
            prop_assert_eq!(cfg.height(0), 0);
            prop_assert_eq!(cfg.height(cfg.len()), 0);
            let mut back = cfg.clone();
            back.undo(f);
            prop_assert_eq!(&back, &before);
        }
    }

    #[test]
    fn non_corners_refuse_to_flip(cfg in bridge(16), k in 0usize..40) {
        let k = k % (cfg.len() + 1);
        let mut c = cfg.clone();
        let is_corner = cfg.is_down_corner(k) || cfg.is_up_corner(k);
        prop_assert_eq!(c.flip(k).is_ok(), is_corner);
    }

    #[test]
    fn encodings_round_trip(cfg in bridge(30)) {
        prop_assert_eq!(&BridgeConfig::parse_line(&cfg.to_line()).unwrap(), &cfg);
        prop_assert_eq!(&BridgeConfig::from_json(&cfg.to_json()).unwrap(), &cfg);
        prop_assert_eq!(&BridgeConfig::from_particles(&cfg.to_particles()).unwrap(), &cfg);
        prop_assert_eq!(cfg.to_particles().particle_count(), cfg.n_half());
        if cfg.n_half() <= 31 {
            prop_assert_eq!(&BridgeConfig::from_mask(cfg.n_half(), cfg.mask()).unwrap(), &cfg);
        }
    }

    #[test]
    fn kmc_stays_a_bridge(cfg in bridge(20), seed in any::<u64>(), alpha in 0.2f64..2.0, sigma in 0.0f64..3.0) {
        let p = ModelParams::new(cfg.n_half(), alpha, sigma).unwrap();
        let mut kmc = Kmc::new(&p, cfg, TimeScale::microscopic(), replica_rng(seed, 0));
        kmc.advance(2.0);
        prop_assert!(kmc.config().check_invariants());
    }

    #[test]
    fn mu_is_a_distribution(n in 1usize..=5, alpha in 0.2f64..2.0, sigma in 0.0f64..3.0) {
        let p = ModelParams::new(n, alpha, sigma).unwrap();
        let mu = mu_exact(&p).unwrap();
        prop_assert!((mu.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(mu.probs.iter().all(|&q| q > 0.0));
        prop_assert!((mu.log_z - log_partition_exact(&p)).abs() < 1e-10);
        prop_assert!((log_partition_exact(&p) - log_partition_via_nu(&p)).abs() < 1e-9);
    }

    #[test]
    fn generator_rows_sum_to_zero(n in 1usize..=4, alpha in 0.2f64..2.0, sigma in 0.0f64..3.0) {
        let p = ModelParams::new(n, alpha, sigma).unwrap();
        let g = generator_matrix(&p, TimeScale::microscopic()).unwrap();
        for i in 0..g.dim() {
            let row: f64 = (0..g.dim()).map(|j| g.at(i, j)).sum();
            prop_assert!(row.abs() < 1e-12);
            for j in 0..g.dim() {
                prop_assert!(i == j || g.at(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn kernel_is_symmetric_sub_markov(n in 1usize..=12, ct in 0.01f64..20.0) {
        let hk = HeatKernel::new(n, 1.0).unwrap();
        let k = hk.evaluate(ct, Representation::Spectral).unwrap();
        let len = 2 * n;
        for a in 1..len {
            let row: f64 = (1..len).map(|b| k.get(a, b)).sum();
            prop_assert!(row <= 1.0 + 1e-12);
            for b in 1..len {
                prop_assert!(k.get(a, b) >= -1e-13);
                prop_assert!((k.get(a, b) - k.get(b, a)).abs() < 1e-12);
            }
        }
        let u = hk.evaluate(ct, Representation::Uniformization).unwrap();
        prop_assert!(k.max_abs_diff(&u) < 1e-10);
    }

    #[test]
    fn line_kernel_is_a_symmetric_law(ct in 0.01f64..50.0) {
        let line = HeatKernel::new(256, 1.0).unwrap().line(ct).unwrap();
        let total: f64 = line.iter().map(|(_, v)| v).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        for j in 0..40 {
            prop_assert!((line.get(j) - line.get(-j)).abs() < 1e-14);
        }
    }

    #[test]
    fn godunov_contracts_l1(
        a in prop::collection::vec(0.0f64..=1.0, 64),
        b in prop::collection::vec(0.0f64..=1.0, 64),
        t in 0.0f64..0.5,
        sigma in 0.0f64..2.0,
    ) {
        let opts = GodunovOptions { m: 64, ..Default::default() };
        let dx = 1.0 / 64.0;
        let before: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx;
        let sa = solve_entropy_burgers_cells(a, t, sigma, &opts).unwrap();
        let sb = solve_entropy_burgers_cells(b, t, sigma, &opts).unwrap();
        prop_assert!(sa.state.l1_distance(&sb.state) <= before + 1e-12);
        prop_assert!(sa.state.values.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn covariance_ignores_shifts(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 3..40),
        shift in prop::collection::vec(-100.0f64..100.0, 3),
    ) {
        let pts = [0.25, 0.5, 0.75];
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&shift).map(|(x, s)| x + s).collect()).collect();
        let a = cov_from_rows(&rows, &pts).unwrap();
        let b = cov_from_rows(&moved, &pts).unwrap();
        for (x, y) in a.cov.iter().zip(&b.cov) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
        for i in 0..3 {
            prop_assert!(a.get(i, i) >= -1e-12);
        }
    }

    #[test]
    fn block_average_and_cylinder_are_shift_covariant(
        eta in prop::collection::vec(0u8..=1, 8..48),
        i in -50i64..50,
        shift in -50i64..50,
    ) {
        let e = ParticleConfig::new(eta);
        let ell = (e.len() - 1) / 4;
        let m = block_average(&e, i, ell);
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!((block_average(&e.shift(shift), i - shift, ell) - m).abs() < 1e-15);
        let phi = Cylinder::flip_indicator();
        prop_assert_eq!(phi.eval_shifted(&e.shift(shift), i - shift), phi.eval_shifted(&e, i));
    }
}
