//! Lévy jump measure, shell decomposition and Poisson point sampling.
//!
//! The jump measure `nu` is decomposed into the outer shell `|h| > 1` and
//! inner shells `(eps_j, eps_{j-1}]` of finite mass. Points `(T_i, X_i, Z_i)`
//! are sampled shell by shell: counts are Poisson with mean
//! `|window| * |box| * nu(shell)`, times and positions uniform, marks drawn
//! from `nu` restricted to the shell. Marks are scalar and positive; the
//! infinite-activity presets are truncated at `eps_min` and no small-jump
//! drift is added (truncation error is `O(\int_{h < eps_min} h^2 nu(dh))`).

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SheError};
use crate::kernel::simpson;
use crate::rng::stream;

/// Default truncation level for infinite-activity measures.
pub const DEFAULT_EPS_MIN: f64 = 1e-3;

/// Jump-size density on `(0, inf)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NuDensity {
    /// `nu(dh) = density dh` on `[lo, hi]`.
    Uniform { lo: f64, hi: f64, density: f64 },
    /// `nu(dh) = coeff h^{-exponent} dh` on `[lo, hi]`.
    Power {
        coeff: f64,
        exponent: f64,
        lo: f64,
        hi: f64,
    },
}

impl NuDensity {
    pub fn support(&self) -> (f64, f64) {
        match self {
            NuDensity::Uniform { lo, hi, .. } | NuDensity::Power { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        let (lo, hi) = self.support();
        if h < lo || h > hi {
            return 0.0;
        }
        match self {
            NuDensity::Uniform { density, .. } => *density,
            NuDensity::Power {
                coeff, exponent, ..
            } => coeff * h.powf(-exponent),
        }
    }

    /// `nu((a, b])`, clipped to the support.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if b <= a {
            return 0.0;
        }
        match self {
            NuDensity::Uniform { density, .. } => density * (b - a),
            NuDensity::Power {
                coeff, exponent, ..
            } => {
                if (*exponent - 1.0).abs() < 1e-12 {
                    coeff * (b / a).ln()
                } else {
                    coeff * (b.powf(1.0 - exponent) - a.powf(1.0 - exponent)) / (1.0 - exponent)
                }
            }
        }
    }

    /// Inverse-CDF draw from `nu` restricted to `(a, b]`, `u` uniform in (0, 1).
    fn sample_restricted(&self, a: f64, b: f64, u: f64) -> f64 {
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        match self {
            NuDensity::Uniform { .. } => a + u * (b - a),
            NuDensity::Power { exponent, .. } => {
                if (*exponent - 1.0).abs() < 1e-12 {
                    a * (b / a).powf(u)
                } else {
                    let q = 1.0 - exponent;
                    (a.powf(q) + u * (b.powf(q) - a.powf(q))).powf(1.0 / q)
                }
            }
        }
    }

    /// `\int f(h) nu(dh)` over the support by quadrature.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let (lo, hi) = self.support();
        simpson(|h| f(h) * self.eval(h), lo, hi, 4000)
    }

    /// Lévy integrability `\int (1 ^ h^2) nu(dh)`; finite for every preset
    /// because the support is bounded away from 0.
    pub fn levy_integral(&self) -> f64 {
        self.integrate(|h| (h * h).min(1.0))
    }
}

/// Jump measure with its shell decomposition.
///
/// `eps` holds the boundaries `eps_0 = 1 > eps_1 > ... > eps_J`; shell `j >= 1`
/// is `(eps_j, eps_{j-1}]` and shell 0 is `|h| > 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    pub density: NuDensity,
    pub eps: Vec<f64>,
}

impl LevyMeasureSpec {
    pub fn new(density: NuDensity, eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() || (eps[0] - 1.0).abs() > 1e-12 {
            return Err(SheError::Config("shell boundaries must start at eps_0 = 1".into()));
        }
        if !eps.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0) {
            return Err(SheError::Config(
                "shell boundaries must be strictly decreasing and positive".into(),
            ));
        }
        Ok(Self { density, eps })
    }

    /// Geometric boundaries `1, r, r^2, ... >= eps_min`.
    pub fn with_geometric_shells(density: NuDensity, eps_min: f64, ratio: f64) -> Result<Self> {
        if !(eps_min > 0.0 && eps_min <= 1.0) || !(ratio > 0.0 && ratio < 1.0) {
            return Err(SheError::Config("need 0 < eps_min <= 1 and ratio in (0,1)".into()));
        }
        let mut eps = vec![1.0];
        let mut e = ratio;
        while e > eps_min * (1.0 + 1e-12) {
            eps.push(e);
            e *= ratio;
        }
        if *eps.last().unwrap() > eps_min {
            eps.push(eps_min);
        }
        Self::new(density, eps)
    }

    /// Number of shells, outer shell included.
    pub fn shell_count(&self) -> usize {
        self.eps.len()
    }

    /// Mark interval of shell `j` (0 = outer).
    pub fn shell_interval(&self, j: usize) -> (f64, f64) {
        if j == 0 {
            let (_, hi) = self.density.support();
            (1.0, hi.max(1.0))
        } else {
            (self.eps[j], self.eps[j - 1])
        }
    }

    pub fn shell_mass(&self, j: usize) -> f64 {
        let (a, b) = self.shell_interval(j);
        self.density.mass(a, b)
    }

    /// `nu` mass of a set of shells.
    pub fn shells_mass(&self, shells: std::ops::Range<usize>) -> f64 {
        shells.map(|j| self.shell_mass(j)).sum()
    }

    /// `\int w(h) nu(dh)` restricted to the given shells.
    pub fn weighted_shell_integral(&self, w: &WeightFn, shells: std::ops::Range<usize>) -> f64 {
        shells
            .map(|j| {
                let (a, b) = self.shell_interval(j);
                let (lo, hi) = self.density.support();
                let (a, b) = (a.max(lo), b.min(hi));
                if b <= a {
                    0.0
                } else {
                    simpson(|h| w.eval(h) * self.density.eval(h), a, b, 2000)
                }
            })
            .sum()
    }
}

/// One sampled point of the Poisson random measure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PointSample {
    pub time: f64,
    pub position: f64,
    pub mark: f64,
}

/// Sample the point process on `window x box x shells`.
///
/// The draw for each shell uses its own counter-based stream keyed by
/// `(cell_ids..., shell)`, so enlarging the shell range never perturbs the
/// points of the shells already sampled.
pub fn sample_points(
    spec: &LevyMeasureSpec,
    window: (f64, f64),
    space_box: (f64, f64),
    shells: std::ops::Range<usize>,
    master_seed: u64,
    cell_ids: &[u64],
) -> Result<Vec<PointSample>> {
    let (t_a, t_b) = window;
    if t_b < t_a || t_a < 0.0 {
        return Err(SheError::Domain(format!(
            "need 0 <= t_a <= t_b, got ({t_a}, {t_b})"
        )));
    }
    let vol = space_box.1 - space_box.0;
    if vol <= 0.0 {
        return Err(SheError::Domain("spatial box must have positive volume".into()));
    }
    let dt = t_b - t_a;
    let mut out = Vec::new();
    if dt == 0.0 {
        return Ok(out);
    }
    for j in shells {
        let mass = spec.shell_mass(j);
        if !mass.is_finite() {
            return Err(SheError::Unsupported(format!("shell {j} has infinite mass")));
        }
        if mass <= 0.0 {
            continue;
        }
        let mut ids = cell_ids.to_vec();
        ids.push(j as u64);
        let mut rng = stream(master_seed, &ids);
        let mean = dt * vol * mass;
        let count = Poisson::new(mean)
            .map_err(|e| SheError::Domain(format!("bad Poisson mean {mean}: {e}")))?
            .sample(&mut rng) as usize;
        let (a, b) = spec.shell_interval(j);
        for _ in 0..count {
            let time = t_a + dt * rng.gen::<f64>();
            let position = space_box.0 + vol * rng.gen::<f64>();
            let mark = spec.density.sample_restricted(a, b, rng.gen::<f64>());
            out.push(PointSample {
                time,
                position,
                mark,
            });
        }
    }
    Ok(out)
}

/// Non-compensated integral: the plain sum over points (Def-style counting sum).
pub fn integrate_noncompensated<F: Fn(f64, f64, f64) -> f64>(f: F, points: &[PointSample]) -> f64 {
    points
        .iter()
        .map(|p| f(p.time, p.position, p.mark))
        .sum()
}

/// Compensated integral: point sum minus the precomputed compensator
/// `\int\int\int f ds dx nu(dh)`.
pub fn integrate_compensated<F: Fn(f64, f64, f64) -> f64>(
    f: F,
    points: &[PointSample],
    compensator: Option<f64>,
) -> Result<f64> {
    let c = compensator.ok_or_else(|| {
        SheError::InvalidArgument("compensated integral requires a compensator quadrature".into())
    })?;
    Ok(integrate_noncompensated(f, points) - c)
}

/// Weight function `J` / `J-bar` applied to marks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum WeightFn {
    Const(f64),
    /// `scale * |h|^power`.
    AbsPow { scale: f64, power: f64 },
}

impl WeightFn {
    pub fn eval(&self, h: f64) -> f64 {
        match self {
            WeightFn::Const(c) => *c,
            WeightFn::AbsPow { scale, power } => scale * h.abs().powf(*power),
        }
    }
}

/// `J`, `J-bar` and the sandwich constants `K`, `kappa`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightSpec {
    pub j: WeightFn,
    pub j_bar: WeightFn,
    pub big_k: f64,
    pub kappa: f64,
}

/// The four `nu`-integrals of the weights and the integrability verdicts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightReport {
    pub j1: f64,
    pub j2: f64,
    pub j_bar1: f64,
    pub j_bar2: f64,
    /// `int J^2 <= K` and `kappa <= int Jbar^2 <= K`.
    pub compensated_pass: bool,
    /// `int J <= K` and `kappa <= int Jbar <= K`.
    pub noncompensated_pass: bool,
}

/// Evaluate the weight integrals against `nu` and check the sandwiches.
pub fn weight_integrals(spec: &LevyMeasureSpec, w: &WeightSpec) -> WeightReport {
    let j1 = spec.density.integrate(|h| w.j.eval(h));
    let j2 = spec.density.integrate(|h| w.j.eval(h).powi(2));
    let j_bar1 = spec.density.integrate(|h| w.j_bar.eval(h));
    let j_bar2 = spec.density.integrate(|h| w.j_bar.eval(h).powi(2));
    let fin = |v: f64| v.is_finite();
    WeightReport {
        j1,
        j2,
        j_bar1,
        j_bar2,
        compensated_pass: fin(j2) && fin(j_bar2) && j2 <= w.big_k && w.kappa <= j_bar2 && j_bar2 <= w.big_k,
        noncompensated_pass: fin(j1) && fin(j_bar1) && j1 <= w.big_k && w.kappa <= j_bar1 && j_bar1 <= w.big_k,
    }
}

/// Preset (a): finite measure, uniform on [1, 2] with total mass 1.
pub fn preset_uniform() -> LevyMeasureSpec {
    LevyMeasureSpec::new(
        NuDensity::Uniform {
            lo: 1.0,
            hi: 2.0,
            density: 1.0,
        },
        vec![1.0],
    )
    .expect("static preset")
}

/// Preset (b): infinite-activity `nu(dh) = h^{-1.5} dh` truncated at `eps_min`.
pub fn preset_power(eps_min: f64) -> Result<LevyMeasureSpec> {
    LevyMeasureSpec::with_geometric_shells(
        NuDensity::Power {
            coeff: 1.0,
            exponent: 1.5,
            lo: eps_min,
            hi: 1.0,
        },
        eps_min,
        0.5,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn power_shell_mass_analytic() {
        // nu(dh) = h^{-2} dh, shell [0.5, 1): mass = [-1/h] = 1.
        let nu = NuDensity::Power {
            coeff: 1.0,
            exponent: 2.0,
            lo: 0.1,
            hi: 1.0,
        };
        assert_abs_diff_eq!(nu.mass(0.5, 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_window_gives_no_points() {
        let spec = preset_uniform();
        let pts = sample_points(&spec, (1.0, 1.0), (0.0, 2.0), 0..1, 7, &[]).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn empty_shell_range_gives_no_points() {
        let spec = preset_uniform();
        let pts = sample_points(&spec, (0.0, 1.0), (0.0, 2.0), 0..0, 7, &[]).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn poisson_count_mean_matches_product_formula() {
        // window 1 x box 2 x mass 3 => mean 6.
        let spec = LevyMeasureSpec::new(
            NuDensity::Uniform {
                lo: 1.0,
                hi: 2.0,
                density: 3.0,
            },
            vec![1.0],
        )
        .unwrap();
        let reps = 10_000usize;
        let mut total = 0usize;
        for r in 0..reps {
            total += sample_points(&spec, (0.0, 1.0), (0.0, 2.0), 0..1, 11, &[r as u64])
                .unwrap()
                .len();
        }
        let mean = total as f64 / reps as f64;
        let se = (6.0 / reps as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn marks_stay_in_sampled_shells() {
        let spec = preset_power(0.1).unwrap();
        let pts = sample_points(&spec, (0.0, 1.0), (-1.0, 1.0), 0..spec.shell_count(), 3, &[0])
            .unwrap();
        assert!(!pts.is_empty());
        for p in &pts {
            assert!(p.mark > 0.1 - 1e-12 && p.mark <= 1.0);
            assert!(p.time > 0.0 && p.time <= 1.0);
            assert!(p.position >= -1.0 && p.position <= 1.0);
        }
    }

    #[test]
    fn truncation_monotonicity() {
        // Decreasing eps_min never decreases the expected count.
        let coarse = preset_power(0.1).unwrap();
        let fine = preset_power(0.01).unwrap();
        let m_coarse = coarse.shells_mass(0..coarse.shell_count());
        let m_fine = fine.shells_mass(0..fine.shell_count());
        assert!(m_fine >= m_coarse);
    }

    #[test]
    fn noncompensated_counting_and_cancellation() {
        let mk = |mark: f64| PointSample {
            time: 0.5,
            position: 0.0,
            mark,
        };
        let pts: Vec<_> = (0..5).map(|_| mk(1.0)).collect();
        assert_abs_diff_eq!(integrate_noncompensated(|_, _, _| 1.0, &pts), 5.0);
        let pm = vec![mk(0.5), mk(-0.5)];
        assert_abs_diff_eq!(integrate_noncompensated(|_, _, h| h, &pm), 0.0);
        assert_abs_diff_eq!(integrate_noncompensated(|_, _, _| 1.0, &[]), 0.0);
    }

    #[test]
    fn compensated_requires_compensator() {
        assert!(matches!(
            integrate_compensated(|_, _, _| 1.0, &[], None),
            Err(SheError::InvalidArgument(_))
        ));
        // Empty list, compensator c => -c.
        assert_abs_diff_eq!(
            integrate_compensated(|_, _, _| 1.0, &[], Some(2.5)).unwrap(),
            -2.5
        );
    }

    #[test]
    fn weight_integrals_unit_case() {
        let spec = preset_uniform();
        let w = WeightSpec {
            j: WeightFn::Const(1.0),
            j_bar: WeightFn::Const(1.0),
            big_k: 1.0 + 1e-9,
            kappa: 1.0 - 1e-9,
        };
        let r = weight_integrals(&spec, &w);
        for v in [r.j1, r.j2, r.j_bar1, r.j_bar2] {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        }
        assert!(r.compensated_pass && r.noncompensated_pass);
    }

    #[test]
    fn weight_integrals_point_mass() {
        // Unit mass near h = 2, J(h) = |h|: int J = 2, int J^2 = 4.
        let spec = LevyMeasureSpec::new(
            NuDensity::Uniform {
                lo: 1.995,
                hi: 2.005,
                density: 100.0,
            },
            vec![1.0],
        )
        .unwrap();
        let w = WeightSpec {
            j: WeightFn::AbsPow {
                scale: 1.0,
                power: 1.0,
            },
            j_bar: WeightFn::Const(1.0),
            big_k: 10.0,
            kappa: 0.1,
        };
        let r = weight_integrals(&spec, &w);
        assert_abs_diff_eq!(r.j1, 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(r.j2, 4.0, epsilon = 1e-2);
    }

    #[test]
    fn weight_integrals_power_measure() {
        // nu = h^{-2} dh on [0.1, 1], J(h) = h: int J = ln 10, int J^2 = 0.9.
        let spec = LevyMeasureSpec::new(
            NuDensity::Power {
                coeff: 1.0,
                exponent: 2.0,
                lo: 0.1,
                hi: 1.0,
            },
            vec![1.0, 0.1],
        )
        .unwrap();
        let w = WeightSpec {
            j: WeightFn::AbsPow {
                scale: 1.0,
                power: 1.0,
            },
            j_bar: WeightFn::Const(1.0),
            big_k: 100.0,
            kappa: 0.1,
        };
        let r = weight_integrals(&spec, &w);
        assert_abs_diff_eq!(r.j1, 10.0f64.ln(), epsilon = 1e-6);
        assert_abs_diff_eq!(r.j2, 0.9, epsilon = 1e-6);
    }
}
