mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use common::*;
use flockchaos::diagnostics::{angle_between, loglog_slope, EnvelopeParams};
use flockchaos::rng;
use flockchaos::{
    envelope_check, fit_decay_rate, flock_diagnostics, projected_max_angle, EnvelopeForm, ParticleEnsemble,
};
use rand::Rng;
use rand_distr::StandardNormal;

fn ens(v: &[Vec<f64>], theta: Option<Vec<f64>>) -> ParticleEnsemble {
    let x: Vec<Vec<f64>> = (0..v.len()).map(|i| vec![i as f64; v[0].len()]).collect();
    ParticleEnsemble::from_rows(&x, v, theta).unwrap()
}

#[test]
fn orthonormal_pair() {
    let e = ens(&[vec![1.0, 0.0], vec![0.0, 1.0]], None);
    let d = flock_diagnostics(&e, &[0.0, 1.0]).unwrap();
    assert!((d.gamma - FRAC_PI_2).abs() < 1e-15);
    assert!((d.gamma2d - FRAC_PI_2).abs() < 1e-15);
    assert_eq!(d.rratio, 1.0);
    assert!((d.a - 2f64.sqrt()).abs() < 1e-15);
}

#[test]
fn monochromatic_and_theta_extremes() {
    let e = ens(&vec![vec![0.3, 0.4]; 3], Some(vec![1.0, 3.0, 2.0]));
    let d = flock_diagnostics(&e, &[0.0, 1.0]).unwrap();
    assert_eq!((d.a, d.gamma, d.gamma2d, d.rratio), (0.0, 0.0, 0.0, 1.0));
    assert_eq!((d.q, d.theta_plus, d.theta_minus), (2.0, 3.0, 1.0));
    assert!((d.v_plus - 0.5).abs() < 1e-15 && (d.v_minus - 0.5).abs() < 1e-15);
}

#[test]
fn zero_velocity_flags_angles() {
    let e = ens(&[vec![0.0, 0.0], vec![1.0, 0.0]], None);
    let d = flock_diagnostics(&e, &[0.0, 1.0]).unwrap();
    assert!(d.angle_undefined);
    assert!(d.gamma.is_nan() && d.rratio.is_nan());
    assert_eq!(d.a, 1.0);
    assert_eq!(d.d, 2f64.sqrt());
    let single = ens(&[vec![1.0, 1.0]], None);
    let s = flock_diagnostics(&single, &[0.0, 1.0]).unwrap();
    assert_eq!((s.d, s.a, s.gamma), (0.0, 0.0, 0.0));
}

#[test]
fn angles_are_stable_near_parallel() {
    let a = [1.0, 1e-9, 0.0];
    let b = [1.0, 0.0, 0.0];
    assert!((angle_between(&a, &b).unwrap() - 1e-9).abs() < 1e-20);
    assert_eq!(angle_between(&b, &b).unwrap(), 0.0);
    assert!((angle_between(&b, &[-1.0, 0.0, 0.0]).unwrap() - PI).abs() < 1e-15);
    assert!(angle_between(&b, &[0.0; 3]).is_none());
}

#[test]
fn projected_angle_dominates_on_sectorial_configurations() {
    let ax = axis(3);
    for seed in 0..100 {
        let e = cone_init(3, 0.1 + 0.008 * seed as f64).sample(10, seed).unwrap();
        let d = flock_diagnostics(&e, &ax).unwrap();
        assert!(d.gamma2d >= d.gamma, "seed {seed}: {} < {}", d.gamma2d, d.gamma);
        let plain = projected_max_angle(&e, &ax, 0).unwrap();
        assert!(plain >= d.gamma);
        assert!(d.gamma2d >= plain);
    }
}

#[test]
fn decay_fits() {
    let exact: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 3.0 * (-2.0 * i as f64 * 0.1).exp())).collect();
    let f = fit_decay_rate(&exact, 0.0).unwrap();
    assert!((f.delta_hat.unwrap() - 2.0).abs() < 1e-9);
    assert!((f.c_hat - 3.0).abs() < 1e-9);

    let mut r = rng::from_seed(99);
    let noisy: Vec<(f64, f64)> = exact
        .iter()
        .map(|&(t, v)| (t, v * (1.0 + 0.01 * r.sample::<f64, _>(StandardNormal))))
        .collect();
    let g = fit_decay_rate(&noisy, 0.0).unwrap();
    assert!((g.delta_hat.unwrap() - 2.0).abs() < 0.05);

    let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 0.7)).collect();
    assert_eq!(fit_decay_rate(&flat, 0.0).unwrap().delta_hat, Some(0.0));
    assert!(fit_decay_rate(&flat[..4], 0.0).is_err());
    let mut bad = flat.clone();
    bad[5].1 = 0.0;
    assert!(fit_decay_rate(&bad, 0.0).is_err());
}

#[test]
fn envelope_examples() {
    let n = 100;
    let p = EnvelopeParams { n: Some(n), ..Default::default() };
    let ts: Vec<f64> = (0..40).map(|i| 0.5 * i as f64).collect();
    let zero: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 0.0)).collect();
    let z = envelope_check(&zero, EnvelopeForm::LinMin, &p).unwrap();
    assert_eq!(z.c_hat, 0.0);
    assert!(z.holds());
    let own: Vec<(f64, f64)> = ts.iter().map(|&t| (t, (t / 10.0).min(1.0))).collect();
    let o = envelope_check(&own, EnvelopeForm::LinMin, &p).unwrap();
    assert!((o.c_hat - 1.0).abs() < 1e-15 && o.holds());
    let quad: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 0.5 * (t * t / 10.0).min(1.0))).collect();
    assert!((envelope_check(&quad, EnvelopeForm::QuadMin, &p).unwrap().c_hat - 0.5).abs() < 1e-15);

    let mut shifted = own.clone();
    shifted[0].1 = 1e-3;
    assert!(envelope_check(&shifted, EnvelopeForm::LinMin, &p).unwrap().zero_time_violation);

    let tight = EnvelopeParams { n: Some(n), c: Some(0.5), ..Default::default() };
    let t = envelope_check(&own, EnvelopeForm::LinMin, &tight).unwrap();
    assert!((t.max_violation - 2.0).abs() < 1e-12 && !t.holds());

    let exp: Vec<(f64, f64)> = ts.iter().map(|&t| (t, 2.0 * (-0.3 * t).exp())).collect();
    let e = envelope_check(&exp, EnvelopeForm::ExpDecay, &EnvelopeParams { delta: Some(0.3), ..Default::default() }).unwrap();
    assert!((e.c_hat - 2.0).abs() < 1e-12);
    assert!(envelope_check(&exp, EnvelopeForm::LinMin, &EnvelopeParams::default()).is_err());
    assert!(envelope_check(&[], EnvelopeForm::LinMin, &p).is_err());
}

#[test]
fn loglog_slope_of_power_law() {
    let s: Vec<(f64, f64)> = (1..30).map(|i| (0.1 * i as f64, 4.0 * (0.1 * i as f64).powf(1.5))).collect();
    assert!((loglog_slope(&s, 0.0, 10.0).unwrap() - 1.5).abs() < 1e-12);
    assert!((loglog_slope(&s, 1.0, 2.0).unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn projected_angle_in_higher_dimensions() {
    for dim in [3usize, 4, 5] {
        let ax = axis(dim);
        let mut r = rng::from_seed(dim as u64);
        for _ in 0..50 {
            let v: Vec<Vec<f64>> = (0..6)
                .map(|_| {
                    let mut u: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
                    u[dim - 1] = r.gen_range(0.2..1.0);
                    u
                })
                .collect();
            let e = ens(&v, None);
            let d = flock_diagnostics(&e, &ax).unwrap();
            assert!(d.gamma2d >= d.gamma - 1e-10 && d.gamma2d <= PI);
        }
    }
}
