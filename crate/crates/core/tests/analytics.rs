use cellinfect::analytics::{
    asymptotic_ratio, classify_mean_cells, equal_sharing_growth_threshold, equal_sharing_threshold, ga,
    mean_population, regime_map, second_moment_n, second_moment_ratio, two_point_malthus_boundary,
    uniform_threshold, write_regime_map_csv, LaplaceExponent, LinearDivisionParams, RegimeClass,
};
use cellinfect::model::{CellPolicy, ParasiteLaw, Profile, Rates, SharingKernel};
use cellinfect::numeric::integrate;
use proptest::prelude::*;

type Mellin = Box<dyn Fn(f64) -> f64>;

fn kernels() -> Vec<(SharingKernel, Mellin)> {
    vec![
        (SharingKernel::Uniform, Box::new(|l: f64| 1.0 / (1.0 + l))),
        (SharingKernel::EqualSharing, Box::new(|l: f64| 0.5f64.powf(l))),
        (
            SharingKernel::two_point(0.2).unwrap(),
            Box::new(|l: f64| 0.5 * (0.2f64.powf(l) + 0.8f64.powf(l))),
        ),
        (
            SharingKernel::symmetric_table(&[0.1, 0.4], &[1.0, 3.0]).unwrap(),
            Box::new(|l: f64| {
                0.125 * (0.1f64.powf(l) + 0.9f64.powf(l)) + 0.375 * (0.4f64.powf(l) + 0.6f64.powf(l))
            }),
        ),
    ]
}

#[test]
fn kappa_hat_matches_closed_forms() {
    let (g, s2, r) = (1.7, 0.3, 0.9);
    for (kernel, mellin) in kernels() {
        let le = LaplaceExponent::new(g, s2, r, kernel.clone());
        let lm = le.lambda_minus();
        let lo = if lm.is_finite() { lm + 0.05 } else { -5.0 };
        for i in 0..=60 {
            let l = lo + (3.0 - lo) * i as f64 / 60.0;
            let closed = l * (g - s2) + l * l * s2 + 2.0 * r * (mellin(l) - 1.0);
            assert!((le.kappa_hat(l) - closed).abs() <= 1e-12 * closed.abs().max(1.0), "{} λ = {l}", kernel.name());
            let h = 1e-5;
            let fd = (le.kappa_hat(l + h) - le.kappa_hat(l - h)) / (2.0 * h);
            assert!((le.kappa_hat_derivative(l) - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
        assert_eq!(le.kappa_hat(0.0), 0.0);
        assert!(le.is_convex_on(lo, 3.0, 200));
    }
}

#[test]
fn tau_hat_matches_closed_forms_on_grids() {
    for r in [0.3, 1.0, 2.5] {
        for k in 1..=8 {
            // Uniform: 𝐦 > 0 iff g > 2r.
            let g = 2.0 * r * (1.0 + 0.4 * k as f64);
            let le = LaplaceExponent::new(g, 0.0, r, SharingKernel::Uniform);
            let tau = le.tau_hat().unwrap();
            assert!((tau - ((2.0 * r / g).sqrt() - 1.0)).abs() < 1e-8, "r = {r}, g = {g}");
            let val = 2.0 * (2.0 * r * g).sqrt() - g - 2.0 * r;
            assert!((le.kappa_hat(tau) - val).abs() < 1e-8);

            // Equal sharing: 𝐦 > 0 iff g > 2r ln 2.
            let g = 2.0 * r * std::f64::consts::LN_2 * (1.0 + 0.4 * k as f64);
            let le = LaplaceExponent::new(g, 0.0, r, SharingKernel::EqualSharing);
            let tau = le.tau_hat().unwrap();
            let closed = (2.0 * r * std::f64::consts::LN_2 / g).ln() / std::f64::consts::LN_2;
            assert!((tau - closed).abs() < 1e-8, "r = {r}, g = {g}");
        }
    }
}

fn flips(kernel: &SharingKernel, r: f64, q: f64, lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    let mut out = Vec::new();
    let mut prev = None;
    for i in 0..=n {
        let g = lo + step * i as f64;
        let dead = classify_mean_cells(&LaplaceExponent::new(g, 0.0, r, kernel.clone()), q).unwrap().class
            == RegimeClass::MeanToZero;
        if prev.is_some_and(|p| p != dead) {
            out.push(g);
        }
        prev = Some(dead);
    }
    out
}

#[test]
fn classification_flips_once_at_the_threshold() {
    for (r, q) in [(1.0, 0.0), (1.0, 0.5), (2.0, 1.0)] {
        let gu = uniform_threshold(r, q).unwrap();
        let f = flips(&SharingKernel::Uniform, r, q, 0.1, gu + 3.0, 1e-3);
        assert_eq!(f.len(), 1, "{f:?}");
        assert!((f[0] - gu).abs() <= 1e-3 + 1e-12);

        let ge = equal_sharing_growth_threshold(r, q).unwrap();
        let f = flips(&SharingKernel::EqualSharing, r, q, 0.1, ge + 3.0, 1e-3);
        assert_eq!(f.len(), 1, "{f:?}");
        assert!((f[0] - ge).abs() <= 1e-3 + 1e-12);
    }
    assert!((uniform_threshold(1.0, 0.5).unwrap() - 4.5).abs() < 1e-12);
    let x0 = equal_sharing_threshold(1.0, 0.0).unwrap();
    let phi = |x: f64| x * (1.0 + 2f64.ln() - x.ln()) - 1.0;
    assert!(phi(x0 - 1e-7) > 0.0 && phi(x0 + 1e-7) < 0.0);
}

#[test]
fn regime_classes_follow_the_sign_table() {
    let class = |g: f64, q: f64| classify_mean_cells(&LaplaceExponent::new(g, 0.0, 1.0, SharingKernel::Uniform), q).unwrap();
    assert_eq!(class(1.0, 0.5).class, RegimeClass::Grows);
    assert_eq!(class(2.0, 0.5).class, RegimeClass::GrowsSlow);
    assert_eq!(class(3.0, 0.5).class, RegimeClass::GrowsSlow);
    assert_eq!(class(5.0, 0.5).class, RegimeClass::MeanToZero);
    assert_eq!(class(1.0, 2.0).class, RegimeClass::MeanToZero);
    assert_eq!(class(1.0, 1.0).class, RegimeClass::Undetermined);
    let v = class(3.0, 0.5);
    assert!(v.tau_hat.is_some() && v.exponent_at_tau.is_some());
    assert_eq!(v.polynomial_order, Some(-1.5));
    let v = class(1.0, 0.5);
    assert!(v.tau_hat.is_none());
    assert_eq!(v.rate_exponent, Some(0.5));
}

#[test]
fn regime_map_has_three_regions() {
    let g_grid: Vec<f64> = (1..=120).map(|i| 0.05 * i as f64).collect();
    let theta: Vec<f64> = (1..=24).map(|i| 0.02 * i as f64).collect();
    let cells = regime_map(0.5, &g_grid, &theta).unwrap();
    let mut classes: Vec<_> = cells.iter().map(|c| c.class).collect();
    classes.sort_by_key(|c| c.as_str());
    classes.dedup();
    assert_eq!(classes.len(), 3, "{classes:?}");
    for t in &theta {
        let boundary = two_point_malthus_boundary(*t);
        assert!((boundary + (t * (1.0 - t)).ln()).abs() < 1e-12);
        for c in cells.iter().filter(|c| c.theta0 == *t) {
            if c.g_over_r < boundary - 1e-9 {
                assert_eq!(c.class, RegimeClass::Grows);
            } else if c.g_over_r > boundary + 1e-9 {
                assert_ne!(c.class, RegimeClass::Grows);
            }
        }
    }
    let mut buf = Vec::new();
    write_regime_map_csv(&mut buf, &cells).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("g_over_r,theta0,class\n"));
    assert_eq!(text.lines().count(), cells.len() + 1);
}

#[test]
fn second_moment_solves_its_ode() {
    for p in [
        LinearDivisionParams::new(0.5, 1.0, 3.0, 0.2),
        LinearDivisionParams::new(1.0, 2.0, 1.0, 0.5),
        LinearDivisionParams::new(0.0, 1.0, 3.0, 0.3),
    ] {
        let x = 1.3;
        for t in [0.2, 0.7, 1.5, 2.5] {
            let h = 1e-3;
            let n = |s: f64| second_moment_n(x, s, p).unwrap();
            let fd = (n(t - 2.0 * h) - 8.0 * n(t - h) + 8.0 * n(t + h) - n(t + 2.0 * h)) / (12.0 * h);
            let n1 = mean_population(x, 0.0, t, p).unwrap();
            let n2 = second_moment_n(x, t, p).unwrap();
            let rhs = p.alpha * x * ((p.g - p.q) * t).exp() * (1.0 + 2.0 * n1)
                + (p.beta + p.q) * n1
                + 2.0 * (p.beta - p.q) * n2;
            assert!((fd - rhs).abs() <= 1e-8 * rhs.abs().max(1.0), "{p:?} t = {t}: {fd} vs {rhs}");
        }
    }
}

#[test]
fn second_moment_ratio_limits() {
    let p = LinearDivisionParams::new(0.0, 1.0, 3.0, 0.3);
    assert!((asymptotic_ratio(1.0, p).unwrap() - (1.0 + 1.3 / 0.7)).abs() < 1e-12);
    // β > max(g, q): the ratio converges to the stated constant.
    let p = LinearDivisionParams::new(0.5, 2.0, 1.0, 0.2);
    let lim = asymptotic_ratio(1.0, p).unwrap();
    assert!((second_moment_ratio(1.0, 60.0, p).unwrap() - lim).abs() < 1e-6 * lim);
}

#[test]
fn mean_population_satisfies_its_integral_identity() {
    for p in [
        LinearDivisionParams::new(1.0, 2.0, 1.0, 0.0),
        LinearDivisionParams::new(1.0, 2.0, 3.0, 0.5),
        LinearDivisionParams::new(0.3, 0.5, 1.2, 0.4),
    ] {
        let (x, s, t) = (1.0, 0.3, 2.0);
        // m(x,s,t) = 1 + ∫_s^t (αx e^{(g-q)(u-s)} + (β-q) m(x,s,u)) du
        let integrand = |u: f64| {
            p.alpha * x * ((p.g - p.q) * (u - s)).exp() + (p.beta - p.q) * mean_population(x, s, u, p).unwrap()
        };
        let rhs = 1.0 + integrate(integrand, s, t, 1e-12);
        let lhs = mean_population(x, s, t, p).unwrap();
        assert!((lhs - rhs).abs() < 1e-8 * lhs.max(1.0), "{p:?}: {lhs} vs {rhs}");
    }
}

#[test]
fn ga_is_the_negated_normalized_generator() {
    let law = ParasiteLaw {
        drift: Profile::power_sum(&[(1.2, 1.0), (-0.1, 2.0)]),
        diffusion: Profile::power_sum(&[(0.3, 1.0), (0.2, 2.0)]),
        jump_rate: Profile::zero(),
        jumps: None,
        stable: None,
    };
    let policy = CellPolicy {
        rates: Rates::General {
            division: Profile::Saturating { max: 2.0, half: 1.0 },
            death: Profile::constant(0.1),
        },
        kernel: SharingKernel::two_point(0.3).unwrap(),
    };
    for a in [0.3, 0.7, 1.5, 2.0] {
        let f = |x: f64| x.powf(1.0 - a);
        for x in [0.5, 1.0, 2.0, 5.0] {
            let h = 1e-4 * x;
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let division = 2.0 * policy.division_rate(x) * (0.5 * (f(0.3 * x) + f(0.7 * x)) - f(x));
            let gen = law.drift.eval(x) * d1 + law.diffusion.eval(x) * d2 + division;
            let expected = -gen / f(x);
            let got = ga(x, a, &law, &policy).unwrap();
            assert!((got - expected).abs() < 1e-6 * expected.abs().max(1.0), "a = {a}, x = {x}: {got} vs {expected}");
        }
    }
}

fn kernel_strategy() -> impl Strategy<Value = SharingKernel> {
    prop_oneof![
        Just(SharingKernel::Uniform),
        Just(SharingKernel::EqualSharing),
        (0.01..0.49f64).prop_map(|t| SharingKernel::two_point(t).unwrap()),
        (prop::collection::vec(0.01..0.99f64, 1..5), prop::collection::vec(0.1..1.0f64, 5))
            .prop_map(|(a, w)| SharingKernel::symmetric_table(&a, &w[..a.len()]).unwrap()),
    ]
}

proptest! {
    #[test]
    fn kappa_hat_is_convex(kernel in kernel_strategy(), g in 0.0..5.0f64, s2 in 0.0..2.0f64, r in 0.01..3.0f64) {
        let le = LaplaceExponent::new(g, s2, r, kernel);
        let lm = le.lambda_minus();
        let lo = if lm.is_finite() { lm + 0.05 } else { -6.0 };
        prop_assert!(le.is_convex_on(lo, 3.0, 100));
        prop_assert_eq!(le.kappa_hat(0.0), 0.0);
        let pts: Vec<f64> = (0..=40).map(|i| lo + (3.0 - lo) * i as f64 / 40.0).collect();
        for w in pts.windows(3) {
            let mid = le.kappa_hat(w[1]);
            let chord = 0.5 * (le.kappa_hat(w[0]) + le.kappa_hat(w[2]));
            prop_assert!(mid <= chord + 1e-9 * chord.abs().max(1.0));
        }
    }

    #[test]
    fn kernels_are_symmetric(kernel in kernel_strategy(), l in 0.05..3.0f64) {
        // E[Θ] = 1/2 and E[Θ^λ] decreasing in λ.
        prop_assert!((kernel.mellin(1.0) - 0.5).abs() < 1e-12);
        prop_assert!(kernel.mellin(l + 0.1) <= kernel.mellin(l) + 1e-15);
    }
}
