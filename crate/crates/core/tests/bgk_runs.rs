use std::f64::consts::SQRT_2;

use vheat_core::bgk::{run, BgkConfig};
use vheat_core::kinetic::{SpatialGrid1D, VelocityGrid2D};

fn config(f0: f64, t_end: f64, sample: f64, n_cells: usize, n_v: usize) -> BgkConfig {
    let mut c = BgkConfig::new(0.1, f0);
    c.grid = SpatialGrid1D::new(n_cells).unwrap();
    c.vgrid = VelocityGrid2D::new(n_v, n_v, 6.0).unwrap();
    c.t_end = t_end;
    c.sample_interval = sample;
    c
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0
}

#[test]
fn unforced_run_stays_at_equilibrium() {
    let c = config(0.0, 5.0, 0.5, 30, 32);
    let r = run(&c).unwrap();
    assert_eq!(r.series.len(), 11);
    for k in 0..r.series.len() {
        assert!((r.series.theta_av[k] - 1.0).abs() < 1e-10);
        assert!(r.series.u2_av[k] < 1e-10);
        assert!((r.series.mass[k] - 0.5).abs() < 1e-12);
    }
    assert!(r.state.remaps.is_empty());
}

#[test]
fn forced_run_conserves_mass_and_mirror_symmetry() {
    let mut c = config(2.0, 3.0, 0.25, 40, 32);
    c.snapshot_times = vec![1.0, 3.0];
    let r = run(&c).unwrap();
    let m0 = r.series.mass[0];
    for &m in &r.series.mass {
        assert!(((m - m0) / m0).abs() < 1e-10);
    }
    for w in r.series.entropy.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    assert_eq!(r.series.snapshots.len(), 2);
    for (_, m) in &r.series.snapshots {
        let n = m.n_cells();
        for c in 0..n {
            let mirror = n - 1 - c;
            assert!((m.u2[c] + m.u2[mirror]).abs() < 1e-8, "u2 not odd at {c}");
            assert!((m.u1[c] + m.u1[mirror]).abs() < 1e-8, "u1 not odd at {c}");
            assert!((m.theta[c] - m.theta[mirror]).abs() < 1e-8, "theta not even at {c}");
            assert!((m.rho[c] - m.rho[mirror]).abs() < 1e-8, "rho not even at {c}");
        }
        // no normal flow through the walls
        assert!(m.u1[0].abs() < 0.05 && m.u1[n - 1].abs() < 0.05);
    }
    assert!(r.series.theta_av.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn strong_forcing_speed_peaks_early() {
    let c = config(2.0, 3.0 / SQRT_2, 0.05 / SQRT_2, 100, 64);
    let r = run(&c).unwrap();
    let t_peak = r.series.times[argmax(&r.series.u2_av)] * SQRT_2;
    assert!((1.2..=1.8).contains(&t_peak), "peak at {t_peak}/sqrt2");
    assert!(*r.series.u2_av.last().unwrap() < r.series.u2_av[argmax(&r.series.u2_av)]);
}

#[test]
fn weak_forcing_speed_peaks_later() {
    let c = config(0.2, 7.0 / SQRT_2, 0.1 / SQRT_2, 50, 48);
    let r = run(&c).unwrap();
    let t_peak = r.series.times[argmax(&r.series.u2_av)] * SQRT_2;
    assert!((3.0..=5.0).contains(&t_peak), "peak at {t_peak}/sqrt2");
}

#[test]
fn density_nearly_uniform_after_transient() {
    let mut c = config(2.0, 30.0 / SQRT_2, 1.0 / SQRT_2, 50, 48);
    c.snapshot_times = vec![c.t_end];
    let r = run(&c).unwrap();
    let (_, m) = r.series.snapshots.last().unwrap();
    let dev = m.rho.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    assert!(dev < 0.05, "max |rho - 1| = {dev}");
}
