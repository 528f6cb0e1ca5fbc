//! Randomized structural properties, complementing the fixed-grid checks in
//! the acceptance suite.

use proptest::prelude::*;

use she_lab::kernel::KernelSpec;
use she_lab::noise::NuDensity;
use she_lab::odes::{noncompensated_blowup_time, ComparisonParams};
use she_lab::sigma::SigmaSpec;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Self-similar scaling, Gaussian closed form, random (t, x).
    #[test]
    fn kernel_scaling_law(t in 0.05f64..20.0, x in -10.0f64..10.0) {
        let spec = KernelSpec::new(2.0, 1).unwrap();
        let lhs = spec.density_radial(t, x.abs()).unwrap();
        let rhs = t.powf(-0.5) * spec.density_radial(1.0, x.abs() / t.sqrt()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-12));
    }

    /// The density is radially non-increasing.
    #[test]
    fn kernel_radial_monotone(t in 0.1f64..10.0, r in 0.0f64..8.0, dr in 0.0f64..4.0) {
        for &alpha in &[1.0, 1.5, 2.0] {
            let spec = KernelSpec::new(alpha, 1).unwrap();
            let near = spec.density_radial(t, r).unwrap();
            let far = spec.density_radial(t, r + dr).unwrap();
            prop_assert!(far <= near + 1e-10, "alpha={alpha}: p({t},{}) > p({t},{r})", r + dr);
        }
    }

    /// Measure additivity: nu((a,b]) + nu((b,c]) = nu((a,c]).
    #[test]
    fn nu_mass_additive(a in 0.0f64..1.0, b in 1.0f64..2.0, c in 2.0f64..3.0) {
        let nus = [
            NuDensity::Uniform { lo: 0.5, hi: 2.5, density: 1.3 },
            NuDensity::Power { coeff: 1.0, exponent: 1.5, lo: 0.1, hi: 2.8 },
        ];
        for nu in nus {
            let sum = nu.mass(a, b) + nu.mass(b, c);
            prop_assert!((sum - nu.mass(a, c)).abs() < 1e-12);
        }
    }

    /// Truncation at level N never increases |sigma| and is exact below N.
    #[test]
    fn sigma_truncation_sandwich(x in 0.0f64..100.0, h in 0.5f64..3.0, level in 0.5f64..50.0) {
        let sigma = SigmaSpec::PowerLaw {
            weight: she_lab::noise::WeightFn::AbsPow { scale: 1.0, power: 1.0 },
            exponent: 2.0,
            scale: 1.0,
            signed: false,
        };
        let cut = sigma.truncate(level).unwrap();
        prop_assert!(cut.eval(x, h).abs() <= sigma.eval(x, h).abs() + 1e-12);
        if x <= level {
            prop_assert_eq!(cut.eval(x, h), sigma.eval(x, h));
        }
    }

    /// The closed-form blow-up time decreases in the noise intensity and in
    /// the initial lower bound.
    #[test]
    fn blowup_time_monotone(lambda in 0.1f64..5.0, scale in 1.1f64..3.0) {
        let mut p = ComparisonParams::unit(2.0, 2.0);
        p.lambda = lambda;
        let t1 = noncompensated_blowup_time(&p).unwrap();
        p.lambda = lambda * scale;
        let t2 = noncompensated_blowup_time(&p).unwrap();
        prop_assert!(t2 < t1);
        p.c1 *= scale;
        let t3 = noncompensated_blowup_time(&p).unwrap();
        prop_assert!(t3 < t2);
    }
}
