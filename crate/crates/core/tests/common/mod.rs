#![allow(dead_code)]

use flockchaos::{AxisBox, ForceParams, InitialDistribution, KernelSpec, ParticleEnsemble, VelocityRegion};

pub fn box_init(dim: usize) -> InitialDistribution {
    InitialDistribution {
        position_box: AxisBox::cube(dim, 0.0, 1.0),
        velocity: VelocityRegion::Box { lo: vec![-1.0; dim], hi: vec![1.0; dim] },
        theta_range: None,
    }
}

pub fn axis(dim: usize) -> Vec<f64> {
    let mut a = vec![0.0; dim];
    a[dim - 1] = 1.0;
    a
}

pub fn cone_init(dim: usize, eps: f64) -> InitialDistribution {
    InitialDistribution {
        position_box: AxisBox::cube(dim, 0.0, 1.0),
        velocity: VelocityRegion::Cone { axis: axis(dim), eps, speed_min: 0.5, speed_max: 1.5 },
        theta_range: Some([0.5, 1.5]),
    }
}

pub fn heavy() -> KernelSpec {
    KernelSpec::power(1.0, 0.5)
}

pub fn rayleigh() -> ForceParams {
    ForceParams::new(1.0, 2.0, 1.0)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn velocity_diameter(e: &ParticleEnsemble) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..e.count() {
        for j in i + 1..e.count() {
            let d: f64 = e.velocity(i).iter().zip(e.velocity(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d);
        }
    }
    best.sqrt()
}
