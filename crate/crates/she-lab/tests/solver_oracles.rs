//! Moment oracles for the lattice solver, checked against independent
//! integral-equation solvers written only in this test file.

use she_lab::kernel::KernelSpec;
use she_lab::moments::estimate_moments;
use she_lab::noise::{preset_uniform, WeightFn, WeightSpec};
use she_lab::odes::NoiseKind;
use she_lab::sigma::SigmaSpec;
use she_lab::solver::{
    simulate_ensemble, GridConfig, InitialCondition, NoiseConfig, SimConfig, TimeConfig,
    DEFAULT_OVERFLOW_CAP,
};

fn linear_config(kind: NoiseKind, lambda: f64, replicas: usize) -> SimConfig {
    SimConfig {
        kernel: KernelSpec::new(2.0, 1).unwrap(),
        noise: NoiseConfig {
            kind,
            levy: preset_uniform(),
            weights: WeightSpec {
                j: WeightFn::AbsPow {
                    scale: 1.0,
                    power: 1.0,
                },
                j_bar: WeightFn::AbsPow {
                    scale: 1.0,
                    power: 1.0,
                },
                // nu = uniform on [1,2]: int h dnu = 1.5, int h^2 dnu = 7/3.
                big_k: 2.5,
                kappa: 1.0,
            },
            lambda,
        },
        sigma: SigmaSpec::Linear {
            weight: WeightFn::AbsPow {
                scale: 1.0,
                power: 1.0,
            },
            scale: 1.0,
        },
        u0: InitialCondition::Constant { c1: 1.0 },
        grid: GridConfig {
            half_width: 12.0,
            nodes: 121,
        },
        time: TimeConfig {
            dt: 1e-2,
            horizon: 0.5,
            snapshots: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        },
        overflow_cap: DEFAULT_OVERFLOW_CAP,
        seed: 2024,
        replicas,
        moment_order: None,
    }
}

/// Non-compensated, sigma(x, h) = h x, u0 = c: the first moment is spatially
/// flat and solves the renewal equation m(t) = c + lambda K1 int_0^t m, i.e.
/// m(t) = c exp(lambda K1 t) with K1 = int h nu(dh) = 3/2.
#[test]
fn noncompensated_linear_first_moment_is_exponential() {
    let lambda = 1.0;
    let cfg = linear_config(NoiseKind::NonCompensated, lambda, 4000);
    let ens = simulate_ensemble(&cfg).unwrap();
    let xs = cfg.grid.positions();
    let series = estimate_moments(&ens, 1, &xs).unwrap();
    assert!(series.diverged_fraction.iter().all(|&f| f == 0.0));

    let k1 = 1.5;
    let mid = cfg.grid.nearest_node(0.0);
    for (ti, &t) in series.times.iter().enumerate() {
        let exact = (lambda * k1 * t).exp();
        // Average the signed field over the central nodes to cut noise; the
        // mean is flat there (box truncation only reaches the skirts).
        let band = mid - 10..=mid + 10;
        let got: f64 =
            series.field_mean[ti][band.clone()].iter().sum::<f64>() / band.count() as f64;
        let tol = (0.04 * exact).max(3.0 * series.stderr[ti][mid]);
        assert!(
            (got - exact).abs() < tol,
            "t={t}: mean {got} vs exp {exact} (tol {tol})"
        );
    }
}

/// Product-integration solver for the weakly singular Volterra equation
/// v(t) = c^2 + a int_0^t (8 pi (t-s))^{-1/2} v(s) ds,
/// using exact kernel moments against a piecewise-linear v.
fn volterra_second_moment(c2: f64, a: f64, t_end: f64, n: usize) -> Vec<(f64, f64)> {
    let h = t_end / n as f64;
    let coef = a / (8.0 * std::f64::consts::PI).sqrt();
    let mut v = vec![c2; n + 1];
    for k in 1..=n {
        let tn = k as f64 * h;
        let mut rhs = c2;
        let mut diag = 0.0;
        for j in 0..k {
            let ta = tn - j as f64 * h; // t_n - t_j
            let tb = tn - (j + 1) as f64 * h; // t_n - t_{j+1}
            let w0 = 2.0 * (ta.sqrt() - tb.sqrt());
            // int (s - t_j)(t_n - s)^{-1/2} ds over the subinterval.
            let w1 = (-2.0 * h * tb.sqrt() + 4.0 / 3.0 * (ta.powf(1.5) - tb.powf(1.5))) / h;
            let c_j = w0 - w1;
            let c_j1 = w1;
            rhs += coef * c_j * v[j];
            if j + 1 == k {
                diag = coef * c_j1;
            } else {
                rhs += coef * c_j1 * v[j + 1];
            }
        }
        v[k] = rhs / (1.0 - diag);
    }
    (0..=n).map(|k| (k as f64 * h, v[k])).collect()
}

#[test]
fn volterra_solver_self_check() {
    // a = 0 gives the constant solution; refinement must not drift.
    let flat = volterra_second_moment(2.0, 0.0, 1.0, 64);
    assert!(flat.iter().all(|&(_, v)| (v - 2.0).abs() < 1e-12));
    let coarse = volterra_second_moment(1.0, 1.0, 0.5, 200);
    let fine = volterra_second_moment(1.0, 1.0, 0.5, 800);
    let rel = (coarse.last().unwrap().1 - fine.last().unwrap().1).abs() / fine.last().unwrap().1;
    assert!(rel < 1e-4, "refinement drift {rel}");
}

/// Compensated, sigma(x, h) = h x, u0 = c, alpha = 2, d = 1: the first moment
/// is a martingale (stays at c) and the second moment solves
/// v(t) = c^2 + lambda^2 K2 int_0^t (8 pi (t-s))^{-1/2} v(s) ds
/// with K2 = int h^2 nu(dh) = 7/3. Spatial homogeneity holds away from the box.
#[test]
fn compensated_linear_second_moment_matches_volterra() {
    let lambda = 1.0;
    let cfg = linear_config(NoiseKind::Compensated, lambda, 4000);
    let ens = simulate_ensemble(&cfg).unwrap();
    let xs = cfg.grid.positions();
    let series = estimate_moments(&ens, 2, &xs).unwrap();
    assert!(series.diverged_fraction.iter().all(|&f| f == 0.0));

    let k2 = 7.0 / 3.0;
    let oracle = volterra_second_moment(1.0, lambda * lambda * k2, 0.5, 1000);
    let mid = cfg.grid.nearest_node(0.0);

    for (ti, &t) in series.times.iter().enumerate() {
        // First moment should sit at c = 1 (compensation makes it a martingale).
        let band = mid - 10..=mid + 10;
        let m1: f64 = series.field_mean[ti][band.clone()].iter().sum::<f64>()
            / band.clone().count() as f64;
        assert!((m1 - 1.0).abs() < 0.05, "t={t}: first moment {m1}");

        let exact = oracle
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .unwrap()
            .1;
        let got: f64 = series.moment[ti][band.clone()].iter().sum::<f64>() / band.count() as f64;
        let tol = (0.10 * exact).max(3.0 * series.stderr[ti][mid]);
        assert!(
            (got - exact).abs() < tol,
            "t={t}: second moment {got} vs volterra {exact} (tol {tol})"
        );
    }
}
