//! Alpha-stable transition densities and their estimates.
//!
//! The generator is `L = -(-Delta)^{alpha/2}` with characteristic exponent
//! `Psi(xi) = |xi|^alpha`, so `p(t, x)` is the inverse Fourier transform of
//! `exp(-t |xi|^alpha)`. Closed forms exist for `alpha = 2` (Gaussian, the
//! `e^{t Delta}` kernel) and `alpha = 1` (Cauchy); every other `alpha` is
//! evaluated in `d = 1` by Fourier inversion
//! `p(t, x) = (1/pi) \int_0^inf e^{-t xi^alpha} cos(xi x) dxi`,
//! reduced to `t = 1` through the self-similar scaling
//! `p(t, x) = t^{-d/alpha} p(1, t^{-1/alpha} x)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Result, SheError};

/// Tolerance used for closed-form kernel identities in tests.
pub const TOL_CLOSED_FORM: f64 = 1e-8;
/// Tolerance used for Fourier-inversion alphas in tests.
pub const TOL_QUADRATURE: f64 = 1e-5;

/// Argument above which `p(1, u)` switches to the tail series.
const TAIL_SWITCH: f64 = 50.0;
/// `exp(-cutoff^alpha)` falls below this before the integrand is truncated.
const TRUNCATION_LEVEL: f64 = 1e-14;

/// Quadrature controls for the Fourier-inversion path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureParams {
    /// Frequency cutoff; `None` picks the adaptive value with
    /// `exp(-cutoff^alpha) < 1e-14`.
    pub cutoff: Option<f64>,
    /// Baseline node count for composite Simpson; raised automatically when the
    /// cosine oscillates faster.
    pub nodes: usize,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        Self {
            cutoff: None,
            nodes: 4096,
        }
    }
}

/// Stability index, dimension and quadrature controls for one kernel family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub alpha: f64,
    pub d: usize,
    pub quadrature: QuadratureParams,
}

impl KernelSpec {
    pub fn new(alpha: f64, d: usize) -> Result<Self> {
        Self::with_quadrature(alpha, d, QuadratureParams::default())
    }

    pub fn with_quadrature(alpha: f64, d: usize, quadrature: QuadratureParams) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(SheError::Domain(format!(
                "alpha must lie in (0, 2], got {alpha}"
            )));
        }
        if d == 0 {
            return Err(SheError::Domain("dimension must be >= 1".into()));
        }
        if d > 1 && !Self::has_closed_form(alpha) {
            return Err(SheError::Unsupported(format!(
                "alpha = {alpha} supported only in d = 1 (closed forms cover alpha in {{1, 2}} for d >= 2)"
            )));
        }
        Ok(Self {
            alpha,
            d,
            quadrature,
        })
    }

    fn has_closed_form(alpha: f64) -> bool {
        alpha == 1.0 || alpha == 2.0
    }

    /// Characteristic exponent `Psi(xi) = |xi|^alpha`.
    pub fn char_exponent(&self, xi: f64) -> f64 {
        xi.abs().powf(self.alpha)
    }

    fn cutoff(&self) -> f64 {
        self.quadrature
            .cutoff
            .unwrap_or_else(|| (-TRUNCATION_LEVEL.ln()).powf(1.0 / self.alpha))
    }

    /// Transition density `p(t, x)` at a point `x` in `R^d`.
    pub fn density(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(SheError::InvalidArgument(format!(
                "point has dimension {}, kernel expects {}",
                x.len(),
                self.d
            )));
        }
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.density_radial(t, r)
    }

    /// `p(t, x)` as a function of the radius `r = |x|`.
    pub fn density_radial(&self, t: f64, r: f64) -> Result<f64> {
        if t <= 0.0 || !t.is_finite() {
            return Err(SheError::Domain(format!("time must be positive, got {t}")));
        }
        let r = r.abs();
        let d = self.d as f64;
        if self.alpha == 2.0 {
            // e^{t Delta} kernel.
            let norm = (4.0 * std::f64::consts::PI * t).powf(-d / 2.0);
            return Ok(norm * (-r * r / (4.0 * t)).exp());
        }
        if self.alpha == 1.0 {
            let c = gamma((d + 1.0) / 2.0) / std::f64::consts::PI.powf((d + 1.0) / 2.0);
            return Ok(c * t / (t * t + r * r).powf((d + 1.0) / 2.0));
        }
        // General alpha, d = 1: scale to t = 1.
        let scale = t.powf(-1.0 / self.alpha);
        Ok(scale * self.p1(scale * r))
    }

    /// `ln p(t, r)`. For the closed forms this stays exact far below the f64
    /// underflow threshold of the density itself (the Gaussian tail reaches
    /// `e^{-r^2/4t}` with exponents of order -10^5 on wide grids).
    pub fn ln_density_radial(&self, t: f64, r: f64) -> Result<f64> {
        if t <= 0.0 || !t.is_finite() {
            return Err(SheError::Domain(format!("time must be positive, got {t}")));
        }
        let r = r.abs();
        let d = self.d as f64;
        if self.alpha == 2.0 {
            return Ok(-d / 2.0 * (4.0 * std::f64::consts::PI * t).ln() - r * r / (4.0 * t));
        }
        Ok(self.density_radial(t, r)?.ln())
    }

    /// `p(1, u)` in d = 1 by Fourier inversion, tail series for large `u`.
    fn p1(&self, u: f64) -> f64 {
        let u = u.abs();
        if u > TAIL_SWITCH {
            return self.p1_tail(u);
        }
        let cutoff = self.cutoff();
        // Simpson error scales like (h^4 u^4); keep h * max(1, u) bounded.
        let oscillation_nodes = (900.0 * u).ceil() as usize;
        let mut n = self.quadrature.nodes.max(oscillation_nodes);
        if n % 2 == 1 {
            n += 1;
        }
        let h = cutoff / n as f64;
        let f = |xi: f64| (-xi.powf(self.alpha)).exp() * (xi * u).cos();
        let mut acc = f(0.0) + f(cutoff);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(k as f64 * h);
        }
        (acc * h / 3.0 / std::f64::consts::PI).max(0.0)
    }

    /// Asymptotic series `p(1, u) = (1/pi) sum_k (-1)^{k+1} Gamma(k alpha + 1)/k!
    /// sin(k pi alpha / 2) u^{-k alpha - 1}` for symmetric stable laws.
    fn p1_tail(&self, u: f64) -> f64 {
        let mut sum = 0.0;
        let mut k_fact = 1.0;
        for k in 1..=6u32 {
            k_fact *= k as f64;
            let kf = k as f64;
            let term = gamma(kf * self.alpha + 1.0) / k_fact
                * (kf * std::f64::consts::PI * self.alpha / 2.0).sin()
                * u.powf(-kf * self.alpha - 1.0);
            if k % 2 == 1 {
                sum += term;
            } else {
                sum -= term;
            }
        }
        (sum / std::f64::consts::PI).max(0.0)
    }

    /// Heat semigroup `(P_t u0)(x)` by grid quadrature.
    pub fn semigroup_apply(&self, t: f64, u0: &InitialData, x: f64) -> Result<f64> {
        if t <= 0.0 {
            return Err(SheError::Domain(format!("time must be positive, got {t}")));
        }
        match u0 {
            // Kernel mass is 1, so constants are fixed points of P_t.
            InitialData::Constant(c) => Ok(*c),
            InitialData::Sampled(grid) => {
                if grid.values.is_empty() {
                    return Err(SheError::Domain("empty grid in semigroup_apply".into()));
                }
                if self.d != 1 {
                    return Err(SheError::Unsupported(
                        "sampled initial data is supported in d = 1 only".into(),
                    ));
                }
                let mut acc = 0.0;
                for (j, &v) in grid.values.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let y = grid.x0 + j as f64 * grid.dx;
                    acc += self.density_radial(t, x - y)? * v;
                }
                Ok(acc * grid.dx)
            }
        }
    }

    /// Two-sided estimate `p(t, r) ~ min(t^{-d/alpha}, t / r^{d+alpha})` with
    /// calibrated constants.
    pub fn estimate_bounds(
        &self,
        consts: &KernelBoundConstants,
        t: f64,
        r: f64,
    ) -> Result<(f64, f64)> {
        if t <= 0.0 {
            return Err(SheError::Domain(format!("time must be positive, got {t}")));
        }
        if r < 0.0 {
            return Err(SheError::Domain(format!(
                "radius must be nonnegative, got {r}"
            )));
        }
        if !(consts.c_lower > 0.0 && consts.c_upper > 0.0) {
            return Err(SheError::InvalidState(
                "bound constants must be calibrated to positive values".into(),
            ));
        }
        let m = self.estimate_shape(t, r);
        Ok((consts.c_lower * m, consts.c_upper * m))
    }

    /// The uncalibrated shape `min(t^{-d/alpha}, t / r^{d+alpha})`.
    pub fn estimate_shape(&self, t: f64, r: f64) -> f64 {
        let d = self.d as f64;
        let diag = t.powf(-d / self.alpha);
        if r == 0.0 {
            return diag;
        }
        diag.min(t / r.powf(d + self.alpha))
    }

    /// Calibrate the two-sided estimate on log-spaced `(t, r)` grids: the
    /// constants are the extreme ratios `p / m` observed on the grid.
    ///
    /// The sweep runs in log space because the Gaussian case drives `p / m`
    /// below the f64 underflow threshold on wide grids; the linear-scale
    /// `c_lower` is clamped to the smallest positive f64 when that happens,
    /// while `ln_c_lower` stays exact.
    pub fn calibrate_bounds(
        &self,
        t_range: (f64, f64),
        r_max: f64,
        n_t: usize,
        n_r: usize,
    ) -> Result<KernelBoundConstants> {
        let mut ln_lo = f64::INFINITY;
        let mut ln_hi = f64::NEG_INFINITY;
        for ti in 0..n_t {
            let frac = ti as f64 / (n_t - 1).max(1) as f64;
            let t = t_range.0 * (t_range.1 / t_range.0).powf(frac);
            for ri in 0..n_r {
                // r = 0 plus a log spread up to r_max.
                let r = if ri == 0 {
                    0.0
                } else {
                    r_max * 1e-2f64.powf(1.0 - (ri - 1) as f64 / (n_r - 2).max(1) as f64)
                };
                let ln_ratio = self.ln_density_radial(t, r)? - self.estimate_shape(t, r).ln();
                if ln_ratio.is_finite() {
                    ln_lo = ln_lo.min(ln_ratio);
                    ln_hi = ln_hi.max(ln_ratio);
                }
            }
        }
        if !(ln_lo.is_finite() && ln_hi.is_finite()) {
            return Err(SheError::InvalidState(
                "calibration grid produced no usable ratios".into(),
            ));
        }
        // 5% margin so the sandwich survives evaluation off the calibration grid.
        let margin = 1.05f64.ln();
        Ok(KernelBoundConstants {
            c_lower: (ln_lo - margin).exp().max(f64::MIN_POSITIVE),
            c_upper: (ln_hi + margin).exp(),
            ln_c_lower: ln_lo - margin,
            ln_c_upper: ln_hi + margin,
        })
    }

    /// Count sandwich violations `ln p < ln c_lower + ln m` or
    /// `ln p > ln c_upper + ln m` over a `(t, r)` grid, in log space.
    pub fn sandwich_violations(
        &self,
        consts: &KernelBoundConstants,
        ts: &[f64],
        rs: &[f64],
    ) -> Result<usize> {
        let mut violations = 0;
        for &t in ts {
            for &r in rs {
                let ln_p = self.ln_density_radial(t, r)?;
                let ln_m = self.estimate_shape(t, r).ln();
                if ln_p < consts.ln_c_lower + ln_m - 1e-12
                    || ln_p > consts.ln_c_upper + ln_m + 1e-12
                {
                    violations += 1;
                }
            }
        }
        Ok(violations)
    }

    /// Dalang integral `Upsilon(beta) = (1/2pi) \int_R dxi / (beta + 2 Psi(xi))`.
    pub fn dalang_upsilon(&self, beta: f64) -> Result<Upsilon> {
        if beta <= 0.0 {
            return Err(SheError::Domain(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if self.d != 1 {
            return Err(SheError::Unsupported(
                "the Dalang integral is evaluated in d = 1".into(),
            ));
        }
        if self.alpha <= 1.0 {
            // Integrand ~ 1/(2 xi^alpha) at infinity: divergent.
            return Ok(Upsilon::Infinite);
        }
        let a = self.alpha;
        // (1/pi) [ \int_0^1 dxi/(beta + 2 xi^a)
        //        + \int_0^1 u^{a-2}/(beta u^a + 2) du ]   (u = 1/xi)
        // The second integrand has an integrable u^{a-2} singularity at 0;
        // substitute u = w^m with m >= 2/(a-1) to smooth it.
        let head = simpson(|xi| 1.0 / (beta + 2.0 * xi.powf(a)), 0.0, 1.0, 4000);
        let m = (2.0 / (a - 1.0)).ceil().max(2.0);
        // Combined exponent m(a-1)-1 >= 1 keeps the integrand finite at 0.
        let e = m * (a - 1.0) - 1.0;
        let tail = simpson(
            |w| m * w.powf(e) / (beta * w.powf(m * a) + 2.0),
            0.0,
            1.0,
            20_000,
        );
        Ok(Upsilon::Finite((head + tail) / std::f64::consts::PI))
    }

    /// Semigroup lower-envelope certificate: the largest `c1` with
    /// `(P_t u0)(x) >= c1 t^{-d/alpha}` on `|x| <= t^{1/alpha}` for `t in (T, t_max]`.
    pub fn pt_u0_lower_envelope(
        &self,
        u0: &InitialData,
        t_threshold: f64,
        t_max: f64,
        n_t: usize,
        n_x: usize,
    ) -> Result<EnvelopeCertificate> {
        check_nondegenerate(u0)?;
        let d = self.d as f64;
        let mut c1 = f64::INFINITY;
        for ti in 0..n_t {
            let frac = (ti + 1) as f64 / n_t as f64;
            let t = t_threshold * (t_max / t_threshold).powf(frac);
            let radius = t.powf(1.0 / self.alpha);
            for xi in 0..n_x {
                let x = -radius + 2.0 * radius * xi as f64 / (n_x - 1).max(1) as f64;
                let v = self.semigroup_apply(t, u0, x)?;
                c1 = c1.min(v * t.powf(d / self.alpha));
            }
        }
        if !(c1.is_finite() && c1 > 0.0) {
            return Err(SheError::DegenerateInput(
                "semigroup vanished on the certification region".into(),
            ));
        }
        Ok(EnvelopeCertificate {
            c1,
            t_threshold,
            t_max,
        })
    }

    /// Shifted-semigroup constant: largest `c(t0)` with
    /// `(P_{t+t0} u0)(x) >= c(t0) p(t + eta, x)` on the probe grid.
    pub fn prop28_constant(
        &self,
        u0: &InitialData,
        t0: f64,
        eta: f64,
        t_max: f64,
        n_t: usize,
        x_probes: &[f64],
    ) -> Result<f64> {
        if t0 < 1.0 {
            return Err(SheError::Domain(format!("t0 must be >= 1, got {t0}")));
        }
        if eta <= 0.0 {
            return Err(SheError::Domain(format!("eta must be positive, got {eta}")));
        }
        check_nondegenerate(u0)?;
        let mut c = f64::INFINITY;
        for ti in 0..n_t {
            let t = t_max * (ti + 1) as f64 / n_t as f64;
            for &x in x_probes {
                let lhs = self.semigroup_apply(t + t0, u0, x)?;
                let rhs = self.density_radial(t + eta, x)?;
                if rhs > 0.0 {
                    c = c.min(lhs / rhs);
                }
            }
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(SheError::DegenerateInput(
                "no positive ratio found for the shifted-kernel bound".into(),
            ));
        }
        Ok(c)
    }
}

fn check_nondegenerate(u0: &InitialData) -> Result<()> {
    let positive = match u0 {
        InitialData::Constant(c) => *c > 0.0,
        InitialData::Sampled(g) => g.values.iter().any(|&v| v > 0.0),
    };
    if positive {
        Ok(())
    } else {
        Err(SheError::DegenerateInput(
            "initial data must be positive on a set of positive measure".into(),
        ))
    }
}

/// Value of the Dalang integral: finite, or flagged divergent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Upsilon {
    Finite(f64),
    Infinite,
}

impl Upsilon {
    pub fn finite(self) -> Option<f64> {
        match self {
            Upsilon::Finite(v) => Some(v),
            Upsilon::Infinite => None,
        }
    }
}

/// Calibrated constants of the two-sided estimate `p ~ min(t^{-d/a}, t/r^{d+a})`.
///
/// The `ln_*` fields carry the exact log-scale values; `c_lower` is clamped to
/// the smallest positive f64 when the true constant underflows (Gaussian tails).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelBoundConstants {
    pub c_lower: f64,
    pub c_upper: f64,
    pub ln_c_lower: f64,
    pub ln_c_upper: f64,
}

impl KernelBoundConstants {
    pub fn unit() -> Self {
        Self {
            c_lower: 1.0,
            c_upper: 1.0,
            ln_c_lower: 0.0,
            ln_c_upper: 0.0,
        }
    }
}

/// Certified lower envelope `(P_t u0)(x) >= c1 t^{-d/alpha}` on `|x| <= t^{1/alpha}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopeCertificate {
    pub c1: f64,
    pub t_threshold: f64,
    pub t_max: f64,
}

/// Function sampled on a uniform 1-d grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFunction {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl GridFunction {
    /// Indicator-style bump of the given height on `[center - radius, center + radius]`.
    pub fn bump(center: f64, radius: f64, height: f64, dx: f64) -> Self {
        let n = (2.0 * radius / dx).round() as usize + 1;
        Self {
            x0: center - radius,
            dx,
            values: vec![height; n],
        }
    }
}

/// Initial data for semigroup and envelope operations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InitialData {
    Constant(f64),
    Sampled(GridFunction),
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_closed_form_at_origin() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let expected = 1.0 / (4.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(k.density(1.0, &[0.0]).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn cauchy_closed_form_at_origin() {
        let k = KernelSpec::new(1.0, 1).unwrap();
        assert_abs_diff_eq!(
            k.density(1.0, &[0.0]).unwrap(),
            1.0 / std::f64::consts::PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stable_three_halves_at_origin() {
        // Oracle: (1/pi) \int_0^inf e^{-xi^1.5} dxi = (2/3) Gamma(2/3) / pi.
        let k = KernelSpec::new(1.5, 1).unwrap();
        let expected = 2.0 / 3.0 * gamma(2.0 / 3.0) / std::f64::consts::PI;
        assert_abs_diff_eq!(k.density(1.0, &[0.0]).unwrap(), expected, epsilon = 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        assert!(matches!(
            k.density(0.0, &[0.0]),
            Err(SheError::Domain(_))
        ));
        assert!(matches!(
            KernelSpec::new(1.5, 2),
            Err(SheError::Unsupported(_))
        ));
        assert!(matches!(
            KernelSpec::new(2.5, 1),
            Err(SheError::Domain(_))
        ));
    }

    #[test]
    fn density_integrates_to_one() {
        for alpha in [1.0, 1.5, 2.0] {
            let k = KernelSpec::new(alpha, 1).unwrap();
            let mass = simpson(|x| k.density_radial(1.0, x).unwrap(), 0.0, 40.0, 8000);
            // Symmetric: double the half-line, tail beyond 40 is O(40^{-alpha}) small
            // for alpha > 1; for alpha = 1 add the analytic Cauchy tail.
            let tail = if alpha == 1.0 {
                1.0 - 2.0 / std::f64::consts::PI * 40.0f64.atan()
            } else {
                0.0
            };
            assert!(
                (2.0 * mass + tail - 1.0).abs() < 2e-3,
                "alpha={alpha} mass={}",
                2.0 * mass + tail
            );
        }
    }

    #[test]
    fn tail_series_matches_quadrature_at_switch() {
        let k = KernelSpec::new(1.5, 1).unwrap();
        // Compare u^{1+alpha}-rescaled values so the 1/u^{1+alpha} decay across
        // the interval does not mask a branch mismatch.
        let below = k.p1(49.99) * 49.99f64.powf(2.5);
        let above = k.p1(50.01) * 50.01f64.powf(2.5);
        assert!((below - above).abs() / above < 1e-3, "{below} vs {above}");
    }

    #[test]
    fn semigroup_constant_is_fixed_point() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let v = k
            .semigroup_apply(3.7, &InitialData::Constant(2.5), 1.0)
            .unwrap();
        assert_abs_diff_eq!(v, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn semigroup_indicator_gaussian() {
        // Oracle: \int_{-1}^{1} (4 pi)^{-1/2} e^{-y^2/4} dy = erf(1/2).
        let k = KernelSpec::new(2.0, 1).unwrap();
        let u0 = InitialData::Sampled(GridFunction::bump(0.0, 1.0, 1.0, 2.0 / 4000.0));
        let v = k.semigroup_apply(1.0, &u0, 0.0).unwrap();
        assert_abs_diff_eq!(v, statrs::function::erf::erf(0.5), epsilon = 1e-3);
    }

    #[test]
    fn semigroup_approximate_identity() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let u0 = InitialData::Sampled(GridFunction::bump(0.0, 1.0, 1.0, 1e-3));
        let v = k.semigroup_apply(1e-3, &u0, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-3, "got {v}");
    }

    #[test]
    fn semigroup_rejects_empty_grid() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let u0 = InitialData::Sampled(GridFunction {
            x0: 0.0,
            dx: 0.1,
            values: vec![],
        });
        assert!(matches!(
            k.semigroup_apply(1.0, &u0, 0.0),
            Err(SheError::Domain(_))
        ));
    }

    #[test]
    fn estimate_bounds_branches() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let c = KernelBoundConstants::unit();
        // r = 0 branch: m = t^{-d/alpha}.
        assert_eq!(k.estimate_bounds(&c, 1.0, 0.0).unwrap(), (1.0, 1.0));
        // Tail branch: m = min(1, 10^{-3}).
        let (lo, hi) = k.estimate_bounds(&c, 1.0, 10.0).unwrap();
        assert_abs_diff_eq!(lo, 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 1e-3, epsilon = 1e-15);
        let bad = KernelBoundConstants {
            c_lower: 0.0,
            c_upper: 1.0,
            ln_c_lower: f64::NEG_INFINITY,
            ln_c_upper: 0.0,
        };
        assert!(matches!(
            k.estimate_bounds(&bad, 1.0, 1.0),
            Err(SheError::InvalidState(_))
        ));
    }

    #[test]
    fn calibrated_sandwich_holds() {
        let ts: Vec<f64> = (0..8).map(|i| 1e-2 * 1e4f64.powf(i as f64 / 7.0)).collect();
        let mut rs = vec![0.0];
        rs.extend((0..7).map(|i| 1e2 * 1e-2f64.powf(1.0 - i as f64 / 6.0)));
        for alpha in [1.0, 1.5, 2.0] {
            let k = KernelSpec::new(alpha, 1).unwrap();
            let consts = k.calibrate_bounds((1e-2, 1e2), 1e2, 12, 12).unwrap();
            assert!(consts.c_lower > 0.0 && consts.c_lower <= consts.c_upper);
            let violations = k.sandwich_violations(&consts, &ts, &rs).unwrap();
            assert_eq!(violations, 0, "alpha={alpha}");
        }
    }

    #[test]
    fn dalang_closed_form_alpha_two() {
        // Oracle: (1/2pi) * pi / sqrt(2 beta).
        let k = KernelSpec::new(2.0, 1).unwrap();
        let v = k.dalang_upsilon(1.0).unwrap().finite().unwrap();
        assert_abs_diff_eq!(v, 1.0 / (2.0 * 2.0f64.sqrt()), epsilon = 1e-6);
    }

    #[test]
    fn dalang_divergent_alpha_one() {
        let k = KernelSpec::new(1.0, 1).unwrap();
        assert_eq!(k.dalang_upsilon(1.0).unwrap(), Upsilon::Infinite);
    }

    #[test]
    fn dalang_alpha_three_halves() {
        // Oracle: (1/pi) \int_0^inf dx/(1 + 2 x^a) = 2^{-1/a} (1/a) / sin(pi/a).
        let a = 1.5f64;
        let expected =
            2.0f64.powf(-1.0 / a) / a / (std::f64::consts::PI / a).sin();
        let k = KernelSpec::new(a, 1).unwrap();
        let v = k.dalang_upsilon(1.0).unwrap().finite().unwrap();
        assert!((v - expected).abs() / expected < 1e-4, "{v} vs {expected}");
    }

    #[test]
    fn dalang_rejects_nonpositive_beta() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        assert!(matches!(k.dalang_upsilon(0.0), Err(SheError::Domain(_))));
    }

    #[test]
    fn envelope_constant_initial_data() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let cert = k
            .pt_u0_lower_envelope(&InitialData::Constant(1.0), 1.0, 100.0, 8, 9)
            .unwrap();
        // (P_t 1)(x) = 1, so c1 = min over the range of t^{1/2} = T^{1/2}... the
        // minimum is attained at the smallest t in the range.
        assert!(cert.c1 > 1.0 && cert.c1 <= 100.0f64.sqrt() + 1e-9);
    }

    #[test]
    fn envelope_bump_initial_data() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let u0 = InitialData::Sampled(GridFunction::bump(0.0, 1.0, 1.0, 0.01));
        let cert = k.pt_u0_lower_envelope(&u0, 1.0, 100.0, 8, 9).unwrap();
        assert!(cert.c1 > 0.0);
        // Spot-check the certificate at one (t, x) off the calibration grid.
        let t = 7.3;
        let v = k.semigroup_apply(t, &u0, 0.5 * t.sqrt()).unwrap();
        assert!(v >= cert.c1 / t.sqrt() * (1.0 - 1e-6));
    }

    #[test]
    fn envelope_rejects_zero_initial_data() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        assert!(matches!(
            k.pt_u0_lower_envelope(&InitialData::Constant(0.0), 1.0, 10.0, 4, 5),
            Err(SheError::DegenerateInput(_))
        ));
    }

    #[test]
    fn prop28_constant_is_positive_and_valid() {
        let k = KernelSpec::new(2.0, 1).unwrap();
        let u0 = InitialData::Sampled(GridFunction::bump(0.0, 1.0, 1.0, 0.01));
        let probes: Vec<f64> = (0..11).map(|i| -2.0 + 0.4 * i as f64).collect();
        let c = k.prop28_constant(&u0, 1.0, 1.0, 5.0, 6, &probes).unwrap();
        assert!(c > 0.0);
        let lhs = k.semigroup_apply(2.5 + 1.0, &u0, 1.2).unwrap();
        let rhs = k.density_radial(2.5 + 1.0, 1.2).unwrap();
        assert!(lhs >= c * rhs * (1.0 - 1e-6));
    }
}
