//! Mean-field characteristics driven by the empirical measure of an
//! independently evolving reference ensemble.
//!
//! The reference ensemble is `M` i.i.d. samples of `f₀` advanced by the
//! discrete system itself; its empirical measure stands in for `f_t`.
//! Tracked characteristics never feed back into the reference, so `N`
//! tracked points started from i.i.d. samples remain i.i.d. samples of the
//! (approximate) characteristic flow.

use rayon::prelude::*;

use crate::dynamics::{check_finite, combine, interaction_rhs, offset, Derivatives};
use crate::ensemble::{ForceParams, ParticleEnsemble};
use crate::error::{contract, Error, Result};
use crate::kernel::KernelSpec;

#[derive(Debug, Clone)]
pub struct MeanFieldSystem {
    pub tracked: ParticleEnsemble,
    pub reference: ParticleEnsemble,
    pub kernel: KernelSpec,
    pub force: Option<ForceParams>,
}

fn compatible(tracked: &ParticleEnsemble, reference: &ParticleEnsemble) -> Result<()> {
    if tracked.dim() != reference.dim() {
        return contract(format!(
            "tracked dimension {} differs from reference dimension {}",
            tracked.dim(),
            reference.dim()
        ));
    }
    if tracked.is_forced() != reference.is_forced() {
        return contract("tracked and reference populations must share the model kind");
    }
    if reference.count() == 0 {
        return contract("reference ensemble is empty");
    }
    Ok(())
}

/// Velocity (and θ) field of the reference empirical measure evaluated at the
/// tracked points, plus the self-propulsion term when forced.
pub fn meanfield_rhs(
    tracked: &ParticleEnsemble,
    reference: &ParticleEnsemble,
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
) -> Result<Derivatives> {
    compatible(tracked, reference)?;
    if force.is_some() != tracked.is_forced() {
        return contract("forced model requires thetas and forceless model forbids them");
    }
    Ok(interaction_rhs(tracked, reference, kernel, force))
}

impl MeanFieldSystem {
    pub fn new(
        tracked: ParticleEnsemble,
        reference: ParticleEnsemble,
        kernel: KernelSpec,
        force: Option<ForceParams>,
    ) -> Result<Self> {
        compatible(&tracked, &reference)?;
        if reference.count() < tracked.count() {
            return contract(format!(
                "reference has {} particles, fewer than the {} tracked",
                reference.count(),
                tracked.count()
            ));
        }
        if force.is_some() != tracked.is_forced() {
            return contract("forced model requires thetas and forceless model forbids them");
        }
        Ok(MeanFieldSystem { tracked, reference, kernel, force })
    }

    /// One synchronized RK4 step; see [`advance_coupled`].
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        let mut tracks = [std::mem::replace(&mut self.tracked, self.reference.clone())];
        self.reference =
            advance_coupled(&self.reference, &mut tracks, &self.kernel, self.force.as_ref(), dt)?;
        let [t] = tracks;
        self.tracked = t;
        Ok(())
    }
}

/// Functional form of [`MeanFieldSystem::advance`].
pub fn advance_coupled_system(sys: &MeanFieldSystem, dt: f64) -> Result<MeanFieldSystem> {
    let mut next = sys.clone();
    next.advance(dt)?;
    Ok(next)
}

/// Intermediate RK4 states and slopes of one reference step, shared by every
/// population tracked against it.
pub(crate) struct ReferenceStep {
    stages: [ParticleEnsemble; 4],
    slopes: [Derivatives; 4],
    dt: f64,
}

impl ReferenceStep {
    pub(crate) fn compute(
        reference: &ParticleEnsemble,
        kernel: &KernelSpec,
        force: Option<&ForceParams>,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let t0 = reference.time;
        let half = 0.5 * dt;
        let k1 = interaction_rhs(reference, reference, kernel, force);
        check_finite(&k1, t0, 1)?;
        let s2 = offset(reference, &k1, half);
        let k2 = interaction_rhs(&s2, &s2, kernel, force);
        check_finite(&k2, t0 + half, 2)?;
        let s3 = offset(reference, &k2, half);
        let k3 = interaction_rhs(&s3, &s3, kernel, force);
        check_finite(&k3, t0 + half, 3)?;
        let s4 = offset(reference, &k3, dt);
        let k4 = interaction_rhs(&s4, &s4, kernel, force);
        check_finite(&k4, t0 + dt, 4)?;
        Ok(ReferenceStep { stages: [reference.clone(), s2, s3, s4], slopes: [k1, k2, k3, k4], dt })
    }

    /// Advance one tracked population; stage `s` sees reference stage `s`.
    pub(crate) fn track(
        &self,
        tr: &ParticleEnsemble,
        kernel: &KernelSpec,
        force: Option<&ForceParams>,
    ) -> Result<ParticleEnsemble> {
        compatible(tr, &self.stages[0])?;
        let (dt, half, t) = (self.dt, 0.5 * self.dt, tr.time);
        let a1 = interaction_rhs(tr, &self.stages[0], kernel, force);
        check_finite(&a1, t, 1)?;
        let u2 = offset(tr, &a1, half);
        let a2 = interaction_rhs(&u2, &self.stages[1], kernel, force);
        check_finite(&a2, t + half, 2)?;
        let u3 = offset(tr, &a2, half);
        let a3 = interaction_rhs(&u3, &self.stages[2], kernel, force);
        check_finite(&a3, t + half, 3)?;
        let u4 = offset(tr, &a3, dt);
        let a4 = interaction_rhs(&u4, &self.stages[3], kernel, force);
        check_finite(&a4, t + dt, 4)?;
        let next = combine(tr, &[a1, a2, a3, a4], dt);
        if !next.all_finite() {
            return Err(Error::NumericalBlowup { time: t + dt, detail: "non-finite tracked state".into() });
        }
        Ok(next)
    }

    pub(crate) fn finish(self) -> Result<ParticleEnsemble> {
        let next = combine(&self.stages[0], &self.slopes, self.dt);
        if !next.all_finite() {
            return Err(Error::NumericalBlowup {
                time: next.time,
                detail: "non-finite reference state".into(),
            });
        }
        Ok(next)
    }
}

/// Advances `reference` by one RK4 step of its own mutual dynamics and every
/// population in `tracks` by the matching step of the characteristic system,
/// where tracked stage `s` sees the reference stage-`s` state. Returns the
/// new reference; `tracks` are updated in place.
pub fn advance_coupled(
    reference: &ParticleEnsemble,
    tracks: &mut [ParticleEnsemble],
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
    dt: f64,
) -> Result<ParticleEnsemble> {
    for t in tracks.iter() {
        compatible(t, reference)?;
    }
    let step = ReferenceStep::compute(reference, kernel, force, dt)?;
    tracks.par_iter_mut().try_for_each(|tr| -> Result<()> {
        *tr = step.track(tr, kernel, force)?;
        Ok(())
    })?;
    step.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{cs_rhs, csr_rhs, rk4_step, model_rhs};
    use crate::sampling::{AxisBox, InitialDistribution, VelocityRegion};

    fn dist(forced: bool) -> InitialDistribution {
        InitialDistribution {
            position_box: AxisBox::cube(2, 0.0, 1.0),
            velocity: if forced {
                VelocityRegion::Cone { axis: vec![0.0, 1.0], eps: 0.5, speed_min: 0.5, speed_max: 1.5 }
            } else {
                VelocityRegion::Box { lo: vec![-1.0; 2], hi: vec![1.0; 2] }
            },
            theta_range: forced.then_some([0.5, 1.5]),
        }
    }

    #[test]
    fn own_measure_reproduces_discrete_rhs() {
        let k = KernelSpec::power(1.0, 0.5);
        let e = dist(false).sample(50, 3).unwrap();
        assert_eq!(meanfield_rhs(&e, &e, &k, None).unwrap(), cs_rhs(&e, &k).unwrap());
        let f = ForceParams::new(1.0, 2.0, 1.0);
        let e = dist(true).sample(50, 3).unwrap();
        assert_eq!(meanfield_rhs(&e, &e, &k, Some(&f)).unwrap(), csr_rhs(&e, &k, &f).unwrap());
    }

    #[test]
    fn point_mass_reference() {
        let k = KernelSpec::power(1.0, 1.0);
        let reference = ParticleEnsemble::from_rows(&[vec![1.0, 2.0]], &[vec![0.5, -0.5]], None).unwrap();
        let tracked = ParticleEnsemble::from_rows(&[vec![-2.0, 6.0]], &[vec![1.5, 0.5]], None).unwrap();
        let d = meanfield_rhs(&tracked, &reference, &k, None).unwrap();
        let phi = k.eval(5.0).unwrap();
        assert_eq!(d.d_velocities, vec![phi * (0.5 - 1.5), phi * (-0.5 - 0.5)]);
        assert_eq!(d.d_positions, vec![1.5, 0.5]);
    }

    #[test]
    fn monochromatic_reference_exerts_no_force() {
        let k = KernelSpec::power(1.0, 0.5);
        let mut reference = dist(false).sample(30, 1).unwrap();
        for v in reference.velocities.chunks_exact_mut(2) {
            v.copy_from_slice(&[0.3, -0.2]);
        }
        let mut tracked = dist(false).sample(5, 2).unwrap();
        for v in tracked.velocities.chunks_exact_mut(2) {
            v.copy_from_slice(&[0.3, -0.2]);
        }
        let d = meanfield_rhs(&tracked, &reference, &k, None).unwrap();
        assert!(d.d_velocities.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn incompatible_populations_rejected() {
        let k = KernelSpec::constant(1.0);
        let a = dist(false).sample(4, 1).unwrap();
        let b = dist(true).sample(4, 1).unwrap();
        assert!(matches!(meanfield_rhs(&a, &b, &k, None), Err(Error::Contract(_))));
        assert!(MeanFieldSystem::new(dist(false).sample(8, 1).unwrap(), a.clone(), k.clone(), None).is_err());
    }

    #[test]
    fn self_consistent_coupled_step_is_bitwise_discrete() {
        for forced in [false, true] {
            let k = KernelSpec::power(1.0, 0.5);
            let f = forced.then(|| ForceParams::new(1.0, 2.0, 1.0));
            let e = dist(forced).sample(40, 9).unwrap();
            let mut sys = MeanFieldSystem::new(e.clone(), e.clone(), k.clone(), f).unwrap();
            let mut discrete = e;
            for _ in 0..20 {
                sys.advance(0.05).unwrap();
                discrete = rk4_step(&discrete, |s| model_rhs(s, &k, f.as_ref()), 0.05).unwrap();
                assert_eq!(sys.tracked, discrete);
                assert_eq!(sys.reference, discrete);
            }
        }
    }

    #[test]
    fn reference_is_unaffected_by_tracked() {
        let k = KernelSpec::power(1.0, 0.5);
        let reference = dist(false).sample(60, 4).unwrap();
        let a = MeanFieldSystem::new(dist(false).sample(5, 1).unwrap(), reference.clone(), k.clone(), None).unwrap();
        let b = MeanFieldSystem::new(dist(false).sample(9, 2).unwrap(), reference, k, None).unwrap();
        let a = advance_coupled_system(&a, 0.1).unwrap();
        let b = advance_coupled_system(&b, 0.1).unwrap();
        assert_eq!(a.reference, b.reference);
    }
}
