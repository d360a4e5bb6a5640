//! Radial communication kernels.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `λ (1 + r²)^(−β/2)`
    Power,
    /// `λ`
    Constant,
    /// Piecewise-linear interpolation of `(radius, value)` samples.
    Tabulated,
}

/// A non-negative, non-increasing radial kernel `φ(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(f64, f64)>>,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn power(lambda: f64, beta: f64) -> Self {
        KernelSpec { kind: KernelKind::Power, lambda, beta, table: None }
    }

    pub fn constant(lambda: f64) -> Self {
        KernelSpec { kind: KernelKind::Constant, lambda, beta: 0.0, table: None }
    }

    /// Tabulated kernel; `lambda` is unused and kept at 1.
    pub fn tabulated(table: Vec<(f64, f64)>) -> Self {
        KernelSpec { kind: KernelKind::Tabulated, lambda: 1.0, beta: 0.0, table: Some(table) }
    }

    /// All constraint violations, empty if the spec is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            KernelKind::Power | KernelKind::Constant => {
                if !(self.lambda.is_finite() && self.lambda > 0.0) {
                    out.push(format!("kernel.lambda must be a positive real, got {}", self.lambda));
                }
                if !(self.beta.is_finite() && self.beta >= 0.0) {
                    out.push(format!("kernel.beta must be >= 0, got {}", self.beta));
                }
            }
            KernelKind::Tabulated => match &self.table {
                None => out.push("kernel.table is required for kind = \"tabulated\"".into()),
                Some(t) if t.is_empty() => out.push("kernel.table must not be empty".into()),
                Some(t) => {
                    for (k, &(r, v)) in t.iter().enumerate() {
                        if !(r.is_finite() && r >= 0.0) {
                            out.push(format!("kernel.table[{k}] radius must be >= 0, got {r}"));
                        }
                        if !(v.is_finite() && v >= 0.0) {
                            out.push(format!("kernel.table[{k}] value must be >= 0, got {v}"));
                        }
                    }
                    for (k, w) in t.windows(2).enumerate() {
                        if w[1].0 <= w[0].0 {
                            out.push(format!("kernel.table radii must be strictly increasing at entry {}", k + 1));
                        }
                        if w[1].1 > w[0].1 {
                            out.push(format!("kernel.table values must be non-increasing at entry {}", k + 1));
                        }
                    }
                }
            },
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// `φ(r)`. Negative or NaN radii are a domain error.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return domain(format!("kernel radius must be >= 0, got {r}"));
        }
        Ok(self.eval_sq(r * r))
    }

    /// `φ` evaluated from a squared distance; the form used by every force loop.
    #[inline]
    pub fn eval_sq(&self, r2: f64) -> f64 {
        match self.radial() {
            Radial::Constant(l) => l,
            Radial::PowerQuarter(l) => power_quarter(l, r2),
            Radial::PowerHalf(l) => power_half(l, r2),
            Radial::PowerOne(l) => power_one(l, r2),
            Radial::PowerGeneral(l, e) => power_general(l, e, r2),
            Radial::Table(t) => table_eval(t, r2.sqrt()),
        }
    }

    /// True iff `∫₀^∞ φ = ∞` is guaranteed by the family parameters.
    pub fn heavy_tail(&self) -> bool {
        match self.kind {
            KernelKind::Power => self.lambda > 0.0 && self.beta <= 1.0,
            KernelKind::Constant => self.lambda > 0.0,
            KernelKind::Tabulated => false,
        }
    }

    /// Upper bound of `|φ'|` on `[0, ∞)`.
    pub fn lipschitz_bound(&self) -> f64 {
        match self.kind {
            KernelKind::Constant => 0.0,
            // |d/dr (1+r²)^(-β/2)| = β r (1+r²)^(-β/2-1) ≤ β
            KernelKind::Power => self.lambda * self.beta,
            KernelKind::Tabulated => self
                .table
                .as_deref()
                .unwrap_or(&[])
                .windows(2)
                .map(|w| (w[0].1 - w[1].1) / (w[1].0 - w[0].0))
                .fold(0.0, f64::max),
        }
    }

    pub(crate) fn radial(&self) -> Radial<'_> {
        match self.kind {
            KernelKind::Constant => Radial::Constant(self.lambda),
            KernelKind::Power => {
                if self.beta == 0.0 {
                    Radial::Constant(self.lambda)
                } else if self.beta == 0.5 {
                    Radial::PowerQuarter(self.lambda)
                } else if self.beta == 1.0 {
                    Radial::PowerHalf(self.lambda)
                } else if self.beta == 2.0 {
                    Radial::PowerOne(self.lambda)
                } else {
                    Radial::PowerGeneral(self.lambda, -0.5 * self.beta)
                }
            }
            KernelKind::Tabulated => Radial::Table(self.table.as_deref().unwrap_or(&[])),
        }
    }
}

/// Kernel resolved to a closed form, so force loops can be monomorphized.
#[derive(Clone, Copy)]
pub(crate) enum Radial<'a> {
    Constant(f64),
    PowerQuarter(f64),
    PowerHalf(f64),
    PowerOne(f64),
    PowerGeneral(f64, f64),
    Table(&'a [(f64, f64)]),
}

#[inline(always)]
pub(crate) fn power_quarter(l: f64, r2: f64) -> f64 {
    l / (1.0 + r2).sqrt().sqrt()
}

#[inline(always)]
pub(crate) fn power_half(l: f64, r2: f64) -> f64 {
    l / (1.0 + r2).sqrt()
}

#[inline(always)]
pub(crate) fn power_one(l: f64, r2: f64) -> f64 {
    l / (1.0 + r2)
}

#[inline(always)]
pub(crate) fn power_general(l: f64, exponent: f64, r2: f64) -> f64 {
    l * (1.0 + r2).powf(exponent)
}

pub(crate) fn table_eval(t: &[(f64, f64)], r: f64) -> f64 {
    match t {
        [] => 0.0,
        [first, ..] if r <= first.0 => first.1,
        [.., last] if r >= last.0 => last.1,
        _ => {
            // first index with radius > r; 1 <= k < len here
            let k = t.partition_point(|&(rk, _)| rk <= r);
            let (r0, v0) = t[k - 1];
            let (r1, v1) = t[k];
            v0 + (v1 - v0) * (r - r0) / (r1 - r0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_examples() {
        assert_eq!(KernelSpec::power(1.0, 1.0).eval(0.0).unwrap(), 1.0);
        assert_eq!(KernelSpec::power(2.0, 2.0).eval(1.0).unwrap(), 1.0);
        // 10^(-1/4) = 0.56234132519034908...
        let v = KernelSpec::power(1.0, 0.5).eval(3.0).unwrap();
        assert!((v - 0.562_341_325_190_349_1).abs() < 1e-15, "{v}");
    }

    #[test]
    fn closed_forms_match_powf() {
        for &beta in &[0.5, 1.0, 2.0, 0.0] {
            let k = KernelSpec::power(1.3, beta);
            for i in 0..200 {
                let r = i as f64 * 0.37;
                let want = 1.3 * (1.0 + r * r).powf(-beta / 2.0);
                let got = k.eval(r).unwrap();
                assert!((got - want).abs() <= 4.0 * f64::EPSILON * want, "beta={beta} r={r}");
            }
        }
    }

    #[test]
    fn negative_radius_is_domain_error() {
        assert!(matches!(KernelSpec::constant(1.0).eval(-1e-3), Err(Error::Domain(_))));
        assert!(KernelSpec::constant(1.0).eval(f64::NAN).is_err());
    }

    #[test]
    fn heavy_tail_classification() {
        assert!(KernelSpec::power(1.0, 1.0).heavy_tail());
        assert!(!KernelSpec::power(1.0, 1.5).heavy_tail());
        assert!(KernelSpec::constant(1.0).heavy_tail());
        assert!(!KernelSpec::tabulated(vec![(0.0, 1.0), (1.0, 1.0)]).heavy_tail());
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let k = KernelSpec::tabulated(vec![(0.0, 1.0), (1.0, 0.5), (3.0, 0.1)]);
        k.validate().unwrap();
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        assert!((k.eval(0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((k.eval(2.0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(k.eval(10.0).unwrap(), 0.1);
    }

    #[test]
    fn invalid_specs_report_every_problem() {
        let k = KernelSpec { kind: KernelKind::Power, lambda: -1.0, beta: -1.0, table: None };
        let v = k.violations();
        assert_eq!(v.len(), 2);
        assert!(v[1].contains("beta"));
        let t = KernelSpec::tabulated(vec![(0.0, 1.0), (0.0, 2.0)]);
        assert_eq!(t.violations().len(), 2);
    }

    #[test]
    fn lipschitz_bounds() {
        assert_eq!(KernelSpec::power(2.0, 0.5).lipschitz_bound(), 1.0);
        let t = KernelSpec::tabulated(vec![(0.0, 1.0), (0.5, 0.5), (2.5, 0.1)]);
        assert!((t.lipschitz_bound() - 1.0).abs() < 1e-15);
    }
}
