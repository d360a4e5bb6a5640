mod common;

use common::*;
use flockchaos::coupling::{aggregate, marginal_w2_bound, ChaosMetricsSample};
use flockchaos::diagnostics::{flock_diagnostics_with, DiagnosticsOptions};
use flockchaos::transport::identity_coupling_cost;
use flockchaos::{
    cs_rhs, csr_rhs, integrate, integrate_odi_forced, integrate_odi_forceless, sector_margin, w2_exact,
    EmpiricalMeasure, ForceParams, InitialDistribution, IntegratorConfig, KernelSpec, ParticleEnsemble,
};
use proptest::prelude::*;

fn points(m: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, m * d)
}

fn triple(max_m: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max_m, 1..=3usize).prop_flat_map(|(m, d)| (Just(m), Just(d), points(m, d), points(m, d), points(m, d)))
}

fn rotation(dim: usize, angles: &[f64]) -> Vec<Vec<f64>> {
    let mut r: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut k = 0;
    for p in 0..dim {
        for q in p + 1..dim {
            let (s, c) = angles[k % angles.len()].sin_cos();
            k += 1;
            for row in r.iter_mut() {
                let (a, b) = (row[p], row[q]);
                row[p] = c * a - s * b;
                row[q] = s * a + c * b;
            }
        }
    }
    r
}

fn apply(r: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    r.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn rotate(e: &ParticleEnsemble, r: &[Vec<f64>]) -> ParticleEnsemble {
    let d = e.dim();
    let mut x = Vec::new();
    let mut v = Vec::new();
    for i in 0..e.count() {
        x.extend(apply(r, e.position(i)));
        v.extend(apply(r, e.velocity(i)));
    }
    let _ = d;
    ParticleEnsemble::new(d, x, v, e.thetas.clone(), e.time).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_nonnegative_nonincreasing(lambda in 0.01..10.0f64, beta in 0.0..4.0f64, mut rs in prop::collection::vec(0.0..100.0f64, 2..20)) {
        let k = KernelSpec::power(lambda, beta);
        rs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = rs.iter().map(|&r| k.eval(r).unwrap()).collect();
        for w in vals.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for (&r, &v) in rs.iter().zip(&vals) {
            prop_assert!(v >= 0.0);
            prop_assert_eq!(v, lambda * (1.0 + r * r).powf(-beta / 2.0));
        }
    }

    #[test]
    fn tabulated_kernel_monotone(mut vals in prop::collection::vec(0.0..5.0f64, 2..10), r in 0.0..20.0f64) {
        vals.sort_by(|a, b| b.total_cmp(a));
        let table: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
        let k = KernelSpec::tabulated(table);
        let a = k.eval(r).unwrap();
        let b = k.eval(r + 0.5).unwrap();
        prop_assert!(a >= b && b >= 0.0);
        prop_assert!(!k.heavy_tail());
    }

    #[test]
    fn cone_sampler_support(dim in 2..5usize, eps in 0.05..1.0f64, seed in any::<u64>()) {
        let init = cone_init(dim, eps);
        let e = init.sample(64, seed).unwrap();
        prop_assert!(sector_margin(&e, eps, &axis(dim)).unwrap() >= 0.0);
        for i in 0..64 {
            let s = norm(e.velocity(i));
            prop_assert!((0.5..=1.5).contains(&s));
            prop_assert!(e.velocity(i)[dim - 1] >= eps * s);
            prop_assert!(init.position_box.contains(e.position(i)));
            let th = e.theta(i).unwrap();
            prop_assert!((0.5..=1.5).contains(&th));
        }
    }

    #[test]
    fn samples_are_prefix_stable(seed in any::<u64>(), n in 1..40usize) {
        let init = cone_init(3, 0.3);
        let big = init.sample(40, seed).unwrap();
        prop_assert_eq!(init.sample(n, seed).unwrap(), big.prefix(n).unwrap());
    }

    #[test]
    fn forceless_conserves_momentum(seed in any::<u64>(), n in 2..24usize, dim in 1..4usize) {
        let e = box_init(dim).sample(n, seed).unwrap();
        let traj = integrate(&e, &heavy(), None, &IntegratorConfig::new(0.05, 2.0, 40), &mut []).unwrap();
        let (m0, m1) = (e.mean_velocity(), traj.last().unwrap().mean_velocity());
        let scale = norm(&m0).max(1.0);
        for (a, b) in m0.iter().zip(&m1) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn forced_conserves_theta_mass(seed in any::<u64>(), n in 2..24usize) {
        let e = cone_init(2, 0.5).sample(n, seed).unwrap();
        let traj = integrate(&e, &heavy(), Some(&rayleigh()), &IntegratorConfig::new(0.05, 2.0, 40), &mut []).unwrap();
        let (a, b) = (e.mean_theta().unwrap(), traj.last().unwrap().mean_theta().unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn zero_force_reduces_to_forceless(seed in any::<u64>(), n in 1..16usize) {
        let forced = cone_init(2, 0.5).sample(n, seed).unwrap();
        let plain = ParticleEnsemble::new(2, forced.positions.clone(), forced.velocities.clone(), None, 0.0).unwrap();
        let a = csr_rhs(&forced, &heavy(), &ForceParams::new(0.0, 2.0, 0.0)).unwrap();
        let b = cs_rhs(&plain, &heavy()).unwrap();
        prop_assert_eq!(&a.d_positions, &b.d_positions);
        prop_assert_eq!(&a.d_velocities, &b.d_velocities);
        prop_assert!(a.d_thetas.unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn diagnostics_rotation_invariant(seed in any::<u64>(), angles in prop::collection::vec(-3.0..3.0f64, 6)) {
        let e = cone_init(3, 0.4).sample(12, seed).unwrap();
        let r = rotation(3, &angles);
        let opts = DiagnosticsOptions { extra_planes: 0, plane_seed: 0 };
        let a = flock_diagnostics_with(&e, &axis(3), opts).unwrap();
        let b = flock_diagnostics_with(&rotate(&e, &r), &apply(&r, &axis(3)), opts).unwrap();
        for (x, y) in [
            (a.d, b.d), (a.a, b.a), (a.q, b.q), (a.theta_plus, b.theta_plus), (a.theta_minus, b.theta_minus),
            (a.v_plus, b.v_plus), (a.v_minus, b.v_minus), (a.gamma, b.gamma), (a.gamma2d, b.gamma2d), (a.rratio, b.rratio),
        ] {
            prop_assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn diagnostics_field_invariants(seed in any::<u64>(), dim in 2..5usize, n in 2..20usize) {
        let e = cone_init(dim, 0.2).sample(n, seed).unwrap();
        let d = flock_diagnostics_with(&e, &axis(dim), DiagnosticsOptions::default()).unwrap();
        prop_assert!(d.d >= 0.0 && d.a >= 0.0 && d.q >= 0.0);
        prop_assert!(d.theta_minus <= d.theta_plus && d.v_minus <= d.v_plus);
        prop_assert!(d.rratio >= 1.0);
        prop_assert!(d.gamma >= 0.0 && d.gamma2d >= d.gamma - 1e-10 && d.gamma2d <= std::f64::consts::PI);
    }

    #[test]
    fn w2_metric_axioms((m, d, a, b, c) in triple(64)) {
        let (mu, nu, rho) = (
            EmpiricalMeasure::new(d, a).unwrap(),
            EmpiricalMeasure::new(d, b).unwrap(),
            EmpiricalMeasure::new(d, c).unwrap(),
        );
        let _ = m;
        let ab = w2_exact(&mu, &nu).unwrap();
        prop_assert_eq!(ab, w2_exact(&nu, &mu).unwrap());
        prop_assert_eq!(w2_exact(&mu, &mu).unwrap(), 0.0);
        prop_assert!(ab <= w2_exact(&mu, &rho).unwrap() + w2_exact(&rho, &nu).unwrap() + 1e-10);
        prop_assert!(ab <= identity_coupling_cost(&mu, &nu).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn w2_translation_and_shift((_m, d, a, b, _c) in triple(32), u in prop::collection::vec(-3.0..3.0f64, 3)) {
        let u = &u[..d];
        let mu = EmpiricalMeasure::new(d, a).unwrap();
        let nu = EmpiricalMeasure::new(d, b).unwrap();
        let base = w2_exact(&mu, &nu).unwrap();
        prop_assert!((w2_exact(&mu.translated(u), &nu.translated(u)).unwrap() - base).abs() < 1e-10);
        prop_assert!((w2_exact(&mu, &mu.translated(u)).unwrap() - norm(u)).abs() < 1e-10);
    }

    #[test]
    fn bound_scales_as_sqrt_k(totals in prop::collection::vec(0.0..10.0f64, 2..6), n in 2..64usize, k in 1..32usize) {
        prop_assume!(2 * k <= n);
        let series: Vec<Vec<ChaosMetricsSample>> = totals
            .iter()
            .map(|&x| vec![ChaosMetricsSample::new(0.0, 0.0, 0.0, 0.0), ChaosMetricsSample::new(1.0, x, x / 2.0, 0.0)])
            .collect();
        let agg = aggregate(n, &series).unwrap();
        let a = marginal_w2_bound(&agg, k, n).unwrap();
        let b = marginal_w2_bound(&agg, 2 * k, n).unwrap();
        prop_assert_eq!(a[0], 0.0);
        prop_assert!((b[1] - std::f64::consts::SQRT_2 * a[1]).abs() <= 1e-14 * b[1].max(1.0));
        for s in &series {
            let t = &s[1];
            prop_assert!((t.total - 2.0 * (t.p + t.k + t.c)).abs() <= 1e-12 * t.total.max(1e-300));
        }
    }

    #[test]
    fn odi_states_stay_admissible(c in 0.0..4.0f64, delta in 0.25..4.0f64) {
        for s in integrate_odi_forceless(c, delta, 5.0, 1e-2).unwrap() {
            prop_assert!(s.x >= 1.0 && s.y >= 0.0);
        }
        for s in integrate_odi_forced(c, delta, 5.0, 1e-2).unwrap() {
            prop_assert!(s.x >= 1.0 && s.y >= 0.0 && s.z.unwrap() >= 0.0);
        }
    }

    #[test]
    fn box_sampler_support(seed in any::<u64>(), dim in 1..5usize) {
        let init: InitialDistribution = box_init(dim);
        let e = init.sample(50, seed).unwrap();
        for i in 0..50 {
            prop_assert!(init.position_box.contains(e.position(i)));
            prop_assert!(e.velocity(i).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
