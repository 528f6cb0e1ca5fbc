//! Lattice discretization of the mild-solution equations.
//!
//! One step from `t` to `t + dt` does, per grid node `x_i`:
//!
//! `u'(x_i) = sum_j w_{i-j} u(x_j) + lambda * (jump sum) - lambda * (compensator)`
//!
//! with `w_m = p(dt, m dx) dx` renormalized so the full row mass is <= 1
//! (mass leaving the box is lost, mimicking free space). The jump sum runs
//! over Poisson points in `(t, t+dt]`: each contributes
//! `p(t+dt - s_k, x_i - X_k) * sigma(u(s_k-, X_k^), Z_k)` with the kernel
//! factor evaluated at the exact jump time and `X_k^` the nearest grid node.
//! The compensator (compensated regime only) integrates the same expression
//! against `ds dx nu(dh)` by quadrature, with the `tau -> 0` kernel spike
//! handled through cell-mass integrals rather than midpoint values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SheError};
use crate::kernel::{simpson, KernelSpec};
use crate::noise::{sample_points, weight_integrals, LevyMeasureSpec, WeightSpec};
use crate::odes::NoiseKind;
use crate::sigma::SigmaSpec;

/// Default ceiling on |u| before a run is flagged diverged.
pub const DEFAULT_OVERFLOW_CAP: f64 = 1e12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub levy: LevyMeasureSpec,
    pub weights: WeightSpec,
    /// Noise level `lambda >= 0`.
    pub lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InitialCondition {
    Constant { c1: f64 },
    Bump { center: f64, radius: f64, height: f64 },
    Zero,
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialCondition::Constant { c1 } => *c1,
            InitialCondition::Bump {
                center,
                radius,
                height,
            } => {
                if (x - center).abs() <= *radius {
                    *height
                } else {
                    0.0
                }
            }
            InitialCondition::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, InitialCondition::Zero)
            || matches!(self, InitialCondition::Constant { c1 } if *c1 == 0.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridConfig {
    pub half_width: f64,
    pub nodes: usize,
}

impl GridConfig {
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nodes)
            .map(|i| -self.half_width + i as f64 * dx)
            .collect()
    }

    pub fn nearest_node(&self, x: f64) -> usize {
        let idx = ((x + self.half_width) / self.dx()).round();
        (idx.max(0.0) as usize).min(self.nodes - 1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub kernel: KernelSpec,
    pub noise: NoiseConfig,
    pub sigma: SigmaSpec,
    pub u0: InitialCondition,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub overflow_cap: f64,
    pub seed: u64,
    pub replicas: usize,
    /// Moment order override; defaults to 2 (compensated) or 1 (non-compensated).
    pub moment_order: Option<u32>,
}

impl SimConfig {
    pub fn moment_order(&self) -> u32 {
        self.moment_order.unwrap_or(match self.noise.kind {
            NoiseKind::Compensated => 2,
            NoiseKind::NonCompensated => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.time.dt <= 0.0 {
            return Err(SheError::Config(format!("dt must be positive, got {}", self.time.dt)));
        }
        if self.time.horizon < self.time.dt {
            return Err(SheError::Config("horizon must cover at least one step".into()));
        }
        if self.grid.nodes < 2 || self.grid.half_width <= 0.0 {
            return Err(SheError::Config("grid needs >= 2 nodes and positive half-width".into()));
        }
        if self.noise.lambda < 0.0 {
            return Err(SheError::Config("lambda must be nonnegative".into()));
        }
        if self.overflow_cap <= 0.0 {
            return Err(SheError::Config("overflow cap must be positive".into()));
        }
        if self.replicas == 0 {
            return Err(SheError::Config("need at least one replica".into()));
        }
        if self.noise.kind == NoiseKind::Compensated && self.kernel.d != 1 {
            return Err(SheError::Config(
                "compensated noise requires d = 1 (Dalang finiteness)".into(),
            ));
        }
        for &s in &self.time.snapshots {
            if s < 0.0 || s > self.time.horizon + 1e-12 {
                return Err(SheError::Config(format!("snapshot {s} outside [0, horizon]")));
            }
        }
        if self.noise.lambda > 0.0 {
            let rep = weight_integrals(&self.noise.levy, &self.noise.weights);
            let ok = match self.noise.kind {
                NoiseKind::Compensated => rep.compensated_pass,
                NoiseKind::NonCompensated => rep.noncompensated_pass,
            };
            if !ok {
                return Err(SheError::Config(format!(
                    "weight integrability gate failed for {:?}: {rep:?}",
                    self.noise.kind
                )));
            }
        }
        Ok(())
    }
}

/// Field values on the lattice at one snapshot time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub values: Vec<f64>,
    pub diverged: bool,
    pub max_abs: f64,
}

/// One replica's recorded snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<FieldState>,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
}

/// Precomputed step operator shared by all replicas of one config.
pub struct StepOperator {
    xs: Vec<f64>,
    /// Renormalized diffusion row, indexed by |i - j|.
    row: Vec<f64>,
    /// Compensator cell/time kernel integrals `A_m`, indexed by |i - j|;
    /// empty in the non-compensated regime.
    comp_kernel: Vec<f64>,
    /// `int weight(h) nu(dh)` over the sampled shells.
    weight_mass: f64,
    n_steps: usize,
    snap_steps: Vec<usize>,
}

impl StepOperator {
    pub fn build(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = &config.grid;
        let dx = grid.dx();
        let dt = config.time.dt;
        let xs = grid.positions();
        let n = grid.nodes;

        let mut row: Vec<f64> = (0..n)
            .map(|m| {
                config
                    .kernel
                    .density_radial(dt, m as f64 * dx)
                    .map(|p| p * dx)
            })
            .collect::<Result<_>>()?;
        let total = row[0] + 2.0 * row[1..].iter().sum::<f64>();
        if total > 1.0 {
            for w in row.iter_mut() {
                *w /= total;
            }
        }

        let comp_kernel = if config.noise.kind == NoiseKind::Compensated {
            compensator_kernel(&config.kernel, dt, dx, n)?
        } else {
            Vec::new()
        };

        let shells = 0..config.noise.levy.shell_count();
        let weight_mass = config
            .noise
            .levy
            .weighted_shell_integral(config.sigma.weight(), shells);

        let n_steps = (config.time.horizon / dt).round().max(1.0) as usize;
        let snap_steps = config
            .time
            .snapshots
            .iter()
            .map(|&s| ((s / dt).round() as usize).min(n_steps))
            .collect();

        Ok(Self {
            xs,
            row,
            comp_kernel,
            weight_mass,
            n_steps,
            snap_steps,
        })
    }
}

/// `A_m = int_0^dt nu-free cell mass of p(tau, .) over cell m dtau`.
///
/// The substitution `tau = dt v^3` resolves the `tau -> 0` concentration; the
/// cell mass itself is bounded by 1, so the integrand is benign.
fn compensator_kernel(kernel: &KernelSpec, dt: f64, dx: f64, n: usize) -> Result<Vec<f64>> {
    let quad_nodes = 48usize;
    let mut out = vec![0.0; n];
    for (m, slot) in out.iter_mut().enumerate() {
        let a = (m as f64 - 0.5) * dx;
        let b = (m as f64 + 0.5) * dx;
        let mut acc = 0.0;
        // Midpoint rule in v on [0,1]; integrand is smooth after substitution.
        for q in 0..quad_nodes {
            let v = (q as f64 + 0.5) / quad_nodes as f64;
            let tau = dt * v * v * v;
            acc += cell_mass(kernel, tau, a, b)? * 3.0 * v * v;
        }
        *slot = acc * dt / quad_nodes as f64;
    }
    Ok(out)
}

/// `P(a < X_tau <= b)` for the kernel at time `tau` (1-d).
fn cell_mass(kernel: &KernelSpec, tau: f64, a: f64, b: f64) -> Result<f64> {
    if kernel.alpha == 2.0 {
        let s = 2.0 * tau.sqrt();
        return Ok(0.5 * (statrs::function::erf::erf(b / s) - statrs::function::erf::erf(a / s)));
    }
    if kernel.alpha == 1.0 {
        return Ok(((b / tau).atan() - (a / tau).atan()) / std::f64::consts::PI);
    }
    // General alpha: quadrature of the density over the cell, clamped to the
    // available probability.
    let v = simpson(
        |x| kernel.density_radial(tau, x).unwrap_or(0.0),
        a,
        b,
        8,
    );
    Ok(v.clamp(0.0, 1.0))
}

/// Run one replica. Deterministic given `(config.seed, replica)`.
pub fn simulate_replica(config: &SimConfig, op: &StepOperator, replica: usize) -> Result<Trajectory> {
    let n = config.grid.nodes;
    let dt = config.time.dt;
    let lambda = config.noise.lambda;
    let cap = config.overflow_cap;
    let box_ = (-config.grid.half_width, config.grid.half_width);
    let shell_count = config.noise.levy.shell_count();

    let mut u: Vec<f64> = op.xs.iter().map(|&x| config.u0.eval(x)).collect();
    let mut snapshots = Vec::with_capacity(op.snap_steps.len());
    let mut diverged = false;
    let mut divergence_time = None;

    let record = |u: &[f64], t: f64, diverged: bool| FieldState {
        t,
        values: u.to_vec(),
        diverged,
        max_abs: u.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
    };

    if op.snap_steps.contains(&0) {
        for _ in op.snap_steps.iter().filter(|&&s| s == 0) {
            snapshots.push(record(&u, 0.0, false));
        }
    }

    let mut scratch = vec![0.0f64; n];
    'steps: for step in 0..op.n_steps {
        let t = step as f64 * dt;
        let t_next = t + dt;

        // Diffusion part: row-convolution with the renormalized kernel row.
        for i in 0..n {
            let mut acc = 0.0;
            for (j, &uj) in u.iter().enumerate() {
                acc += op.row[i.abs_diff(j)] * uj;
            }
            scratch[i] = acc;
        }

        if lambda > 0.0 {
            let mut points = sample_points(
                &config.noise.levy,
                (t, t_next),
                box_,
                0..shell_count,
                config.seed,
                &[replica as u64, step as u64],
            )?;
            // Time order matters: sigma sees the left limit u(s_k-), which
            // includes earlier jumps of the same step via `scratch`.
            points.sort_by(|a, b| a.time.total_cmp(&b.time));
            for p in &points {
                let tau = (t_next - p.time).max(1e-12 * dt);
                let j = config.grid.nearest_node(p.position);
                let amp = lambda * config.sigma.eval(scratch[j], p.mark);
                if amp == 0.0 {
                    continue;
                }
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s += amp * config.kernel.density_radial(tau, op.xs[i] - p.position)?;
                }
            }

            if config.noise.kind == NoiseKind::Compensated {
                // lambda * I_w * sum_j A_{|i-j|} g(u_j) / dx, the dx dividing out
                // because A_m already integrates over the cell width.
                let g: Vec<f64> = u.iter().map(|&v| config.sigma.state_part(v)).collect();
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, &gj) in g.iter().enumerate() {
                        acc += op.comp_kernel[i.abs_diff(j)] * gj;
                    }
                    scratch[i] -= lambda * op.weight_mass * acc;
                }
            }
        }

        std::mem::swap(&mut u, &mut scratch);

        let max_abs = u.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if !max_abs.is_finite() || max_abs > cap {
            diverged = true;
            divergence_time = Some(t_next);
            break 'steps;
        }

        let step_done = step + 1;
        for _ in op.snap_steps.iter().filter(|&&s| s == step_done) {
            snapshots.push(record(&u, t_next, false));
        }
    }

    Ok(Trajectory {
        snapshots,
        diverged,
        divergence_time,
    })
}

/// Run the whole ensemble in parallel; replica streams are counter-based, so
/// the result does not depend on scheduling.
pub fn simulate_ensemble(config: &SimConfig) -> Result<Vec<Trajectory>> {
    let op = StepOperator::build(config)?;
    (0..config.replicas)
        .into_par_iter()
        .map(|r| simulate_replica(config, &op, r))
        .collect()
}

/// Outcome of the truncation-ladder local-existence probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub levels: Vec<f64>,
    pub times: Vec<f64>,
    /// Per level, per snapshot: (mean of sup-norm moment, standard error).
    pub sup_moments: Vec<Vec<(f64, f64)>>,
    /// Largest snapshot time up to which successive levels agree within
    /// 2 combined standard errors; `None` when no horizon certifies.
    pub certified_horizon: Option<f64>,
}

/// Truncation-ladder probe: rerun the simulation with `sigma` truncated at
/// each level and certify the horizon where moment estimates are N-stable.
pub fn local_existence_probe(config: &SimConfig, levels: &[f64]) -> Result<ProbeReport> {
    if levels.len() < 2 {
        return Err(SheError::Config("truncation ladder needs >= 2 levels".into()));
    }
    let p = config.moment_order() as f64;
    let mut sup_moments = Vec::with_capacity(levels.len());
    let mut times: Vec<f64> = Vec::new();
    for &level in levels {
        let mut cfg = config.clone();
        cfg.sigma = config.sigma.truncate(level)?;
        let ens = simulate_ensemble(&cfg)?;
        if times.is_empty() {
            times = ens
                .iter()
                .find(|t| !t.snapshots.is_empty())
                .map(|t| t.snapshots.iter().map(|s| s.t).collect())
                .unwrap_or_default();
        }
        let per_snap: Vec<(f64, f64)> = (0..times.len())
            .map(|si| {
                let vals: Vec<f64> = ens
                    .iter()
                    .filter_map(|tr| tr.snapshots.get(si))
                    .map(|s| s.values.iter().fold(0.0f64, |m, &v| m.max(v.abs().powf(p))))
                    .collect();
                mean_se(&vals)
            })
            .collect();
        sup_moments.push(per_snap);
    }

    let mut certified: Option<f64> = None;
    'times: for (si, &t) in times.iter().enumerate() {
        for w in sup_moments.windows(2) {
            let (m1, s1) = w[0][si];
            let (m2, s2) = w[1][si];
            let band = 2.0 * (s1 * s1 + s2 * s2).sqrt();
            if !(m1.is_finite() && m2.is_finite()) || (m1 - m2).abs() > band.max(1e-12) {
                break 'times;
            }
        }
        certified = Some(t);
    }

    Ok(ProbeReport {
        levels: levels.to_vec(),
        times,
        sup_moments,
        certified_horizon: certified,
    })
}

fn mean_se(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{preset_uniform, WeightFn};

    fn base_config() -> SimConfig {
        SimConfig {
            kernel: KernelSpec::new(2.0, 1).unwrap(),
            noise: NoiseConfig {
                kind: NoiseKind::NonCompensated,
                levy: preset_uniform(),
                weights: WeightSpec {
                    j: WeightFn::Const(1.0),
                    j_bar: WeightFn::Const(1.0),
                    big_k: 1.1,
                    kappa: 0.9,
                },
                lambda: 0.0,
            },
            sigma: SigmaSpec::Linear {
                weight: WeightFn::Const(1.0),
                scale: 1.0,
            },
            u0: InitialCondition::Constant { c1: 1.0 },
            grid: GridConfig {
                half_width: 10.0,
                nodes: 101,
            },
            time: TimeConfig {
                dt: 1e-2,
                horizon: 0.5,
                snapshots: vec![0.0, 0.25, 0.5],
            },
            overflow_cap: DEFAULT_OVERFLOW_CAP,
            seed: 42,
            replicas: 4,
            moment_order: None,
        }
    }

    #[test]
    fn noiseless_constant_is_preserved() {
        let cfg = base_config();
        let op = StepOperator::build(&cfg).unwrap();
        let tr = simulate_replica(&cfg, &op, 0).unwrap();
        assert!(!tr.diverged);
        let last = tr.snapshots.last().unwrap();
        // Interior nodes keep u = 1 up to box truncation of the kernel row.
        let mid = last.values[50];
        assert!((mid - 1.0).abs() < 1e-6, "u(T, 0) = {mid}");
    }

    #[test]
    fn noiseless_bump_matches_semigroup() {
        let mut cfg = base_config();
        cfg.u0 = InitialCondition::Bump {
            center: 0.0,
            radius: 1.0,
            height: 1.0,
        };
        cfg.grid.nodes = 201;
        cfg.time.dt = 5e-3;
        let op = StepOperator::build(&cfg).unwrap();
        let tr = simulate_replica(&cfg, &op, 0).unwrap();
        let last = tr.snapshots.last().unwrap();
        // Oracle: one application of p(T, .) to the discretized initial
        // vector, i.e. the 100 dt-steps must compose to the T-kernel.
        let xs = cfg.grid.positions();
        let dx = cfg.grid.dx();
        for &i in &[100usize, 110, 120] {
            let exact: f64 = xs
                .iter()
                .map(|&y| cfg.kernel.density_radial(0.5, xs[i] - y).unwrap() * cfg.u0.eval(y) * dx)
                .sum();
            assert!(
                (last.values[i] - exact).abs() < 5e-3,
                "x={}: sim {} vs exact {exact}",
                xs[i],
                last.values[i]
            );
        }
    }

    #[test]
    fn zero_initial_data_powerlaw_stays_zero() {
        let mut cfg = base_config();
        cfg.u0 = InitialCondition::Zero;
        cfg.noise.lambda = 1.0;
        cfg.sigma = SigmaSpec::PowerLaw {
            weight: WeightFn::Const(1.0),
            exponent: 2.0,
            scale: 1.0,
            signed: false,
        };
        let op = StepOperator::build(&cfg).unwrap();
        let tr = simulate_replica(&cfg, &op, 0).unwrap();
        assert!(!tr.diverged);
        for s in &tr.snapshots {
            assert!(s.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn compensated_requires_d1() {
        let mut cfg = base_config();
        cfg.kernel = KernelSpec::new(2.0, 2).unwrap();
        cfg.noise.kind = NoiseKind::Compensated;
        assert!(matches!(
            StepOperator::build(&cfg),
            Err(SheError::Config(_))
        ));
    }

    #[test]
    fn bad_dt_rejected() {
        let mut cfg = base_config();
        cfg.time.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(SheError::Config(_))));
    }

    #[test]
    fn replicas_are_reproducible_and_distinct() {
        let mut cfg = base_config();
        cfg.noise.lambda = 0.5;
        let op = StepOperator::build(&cfg).unwrap();
        let a = simulate_replica(&cfg, &op, 0).unwrap();
        let b = simulate_replica(&cfg, &op, 0).unwrap();
        let c = simulate_replica(&cfg, &op, 1).unwrap();
        assert_eq!(
            a.snapshots.last().unwrap().values,
            b.snapshots.last().unwrap().values
        );
        assert_ne!(
            a.snapshots.last().unwrap().values,
            c.snapshots.last().unwrap().values
        );
    }

    #[test]
    fn linear_truncation_ladder_certifies_full_horizon() {
        let mut cfg = base_config();
        cfg.noise.lambda = 0.5;
        cfg.replicas = 32;
        // Linear sigma with levels far above the field range: truncation inactive.
        let report = local_existence_probe(&cfg, &[50.0, 100.0, 200.0]).unwrap();
        assert_eq!(report.certified_horizon, Some(0.5));
    }

    #[test]
    fn compensator_kernel_total_mass() {
        // sum_m A_m ~ dt * (mass inside the box) ~ dt.
        let k = KernelSpec::new(2.0, 1).unwrap();
        let dt = 1e-2;
        let a = compensator_kernel(&k, dt, 0.2, 101).unwrap();
        let total = a[0] + 2.0 * a[1..].iter().sum::<f64>();
        assert!((total - dt).abs() < 2e-3 * dt, "total {total} vs {dt}");
    }
}
