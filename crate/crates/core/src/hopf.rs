//! Conservative/dissipative diagnostics.
//!
//! The dichotomy is decided by the lifetime integral int |f_t(s)|^alpha dt:
//! finite at almost every state for a dissipative flow, infinite for a
//! conservative one.  Numerically we watch the integral over growing boxes
//! [-R, R]^d along a radius ladder and diagnose each probe state as
//! stabilized or diverging; the thresholds are engineering choices and are
//! carried in every report.

use rand::Rng;
use rayon::prelude::*;

use crate::action::Action;
use crate::error::{Error, Result};
use crate::kernel::{HopfLabel, KernelDescriptor, StatePoint};
use crate::quad::integrate_box;
use crate::stats::fit_line;

pub const DEFAULT_RADIUS_LADDER: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];
/// Relative growth of the last ladder step below which a state counts as
/// stabilized.
pub const STABILIZATION_TOLERANCE: f64 = 1e-3;
/// Log-log slope of integral against radius above which a state counts as
/// diverging.
pub const DIVERGENCE_SLOPE: f64 = 0.5;

/// Integral of |f_t(point)|^alpha over the index box [-radius, radius]^d by
/// the midpoint rule with pitch 1/resolution.
pub fn kernel_alpha_integral(
    kernel: &KernelDescriptor,
    point: &StatePoint,
    radius: f64,
    resolution: u32,
    cell_budget: usize,
) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be finite and positive, got {radius}"
        )));
    }
    if point.component >= kernel.components().len() {
        return Err(Error::InvalidParameter(format!(
            "component {} out of range, kernel has {}",
            point.component,
            kernel.components().len()
        )));
    }
    let d = kernel.index_dim();
    let alpha = kernel.alpha().get();
    let axes = vec![(-radius, radius); d];
    let mut scratch = Vec::with_capacity(point.coords.len());
    integrate_box(&axes, resolution, cell_budget, |t| {
        kernel
            .component_value_into(point.component, t, &point.coords, &mut scratch)
            .abs()
            .powf(alpha)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Dissipative,
    Conservative,
    Undetermined,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Dissipative => write!(f, "dissipative"),
            Verdict::Conservative => write!(f, "conservative"),
            Verdict::Undetermined => write!(f, "undetermined"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointDiagnostic {
    pub point: StatePoint,
    /// Lifetime integrals along the radius ladder.
    pub integrals: Vec<f64>,
    /// Relative increment of the last ladder step.
    pub last_increment: f64,
    /// Log-log slope of integral against radius.
    pub slope: f64,
    pub stabilized: bool,
    pub diverging: bool,
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub verdict: Verdict,
    pub ladder: Vec<f64>,
    pub points: Vec<PointDiagnostic>,
    pub stabilization_tolerance: f64,
    pub divergence_slope: f64,
}

fn diagnose(point: StatePoint, ladder: &[f64], integrals: Vec<f64>) -> PointDiagnostic {
    let n = integrals.len();
    let last = integrals[n - 1];
    let prev = integrals[n - 2];
    let last_increment = if last > 0.0 { (last - prev) / last } else { 0.0 };
    let positive: Vec<(f64, f64)> = ladder
        .iter()
        .zip(&integrals)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, v)| (*r, *v))
        .collect();
    let slope = if positive.len() >= 2 {
        let x: Vec<f64> = positive.iter().map(|(r, _)| r.ln()).collect();
        let y: Vec<f64> = positive.iter().map(|(_, v)| v.ln()).collect();
        fit_line(&x, &y).map(|f| f.slope).unwrap_or(0.0)
    } else {
        0.0
    };
    let stabilized = last_increment.abs() < STABILIZATION_TOLERANCE;
    let diverging = !stabilized && slope > DIVERGENCE_SLOPE;
    PointDiagnostic {
        point,
        integrals,
        last_increment,
        slope,
        stabilized,
        diverging,
    }
}

/// Empirical Hopf classification from lifetime integrals at random states.
///
/// Probe states are drawn uniformly from the profile support boxes of each
/// component in turn (Gaussian factors with unbounded profiles fall back to
/// [-4, 4]).  The verdict is dissipative when every state stabilizes,
/// conservative when every state diverges, undetermined otherwise.
pub fn classify<R: Rng + ?Sized>(
    kernel: &KernelDescriptor,
    sample_count: usize,
    ladder: &[f64],
    resolution: u32,
    cell_budget: usize,
    rng: &mut R,
) -> Result<ClassificationReport> {
    if sample_count == 0 {
        return Err(Error::InvalidParameter(
            "classification needs at least one probe state".into(),
        ));
    }
    if ladder.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "radius ladder needs at least three rungs, got {}",
            ladder.len()
        )));
    }
    if ladder.windows(2).any(|w| !(w[0] < w[1])) || ladder.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidParameter(
            "radius ladder must be positive, finite and strictly increasing".into(),
        ));
    }
    let ncomp = kernel.components().len();
    let points: Vec<StatePoint> = (0..sample_count)
        .map(|i| {
            let component = i % ncomp;
            let comp = &kernel.components()[component];
            let coords = comp
                .action()
                .factors()
                .iter()
                .zip(comp.base().profiles())
                .map(|(f, p)| match f {
                    crate::action::Factor::Torus => rng.random::<f64>(),
                    _ => {
                        let (lo, hi) = p.support().unwrap_or((-4.0, 4.0));
                        lo + (hi - lo) * rng.random::<f64>()
                    }
                })
                .collect();
            StatePoint { component, coords }
        })
        .collect();

    let diagnostics: Vec<PointDiagnostic> = points
        .into_par_iter()
        .map(|p| {
            let integrals = ladder
                .iter()
                .map(|&r| kernel_alpha_integral(kernel, &p, r, resolution, cell_budget))
                .collect::<Result<Vec<f64>>>()?;
            Ok(diagnose(p, ladder, integrals))
        })
        .collect::<Result<_>>()?;

    let all_stable = diagnostics.iter().all(|d| d.stabilized);
    let all_diverging = diagnostics.iter().all(|d| d.diverging);
    let verdict = if all_stable {
        Verdict::Dissipative
    } else if all_diverging {
        Verdict::Conservative
    } else {
        Verdict::Undetermined
    };
    Ok(ClassificationReport {
        verdict,
        ladder: ladder.to_vec(),
        points: diagnostics,
        stabilization_tolerance: STABILIZATION_TOLERANCE,
        divergence_slope: DIVERGENCE_SLOPE,
    })
}

/// Split a kernel into its conservative and dissipative parts by component
/// labels.  Fails when any component lacks a label.
pub fn split_cd(
    kernel: &KernelDescriptor,
) -> Result<(Option<KernelDescriptor>, Option<KernelDescriptor>)> {
    let mut conservative = Vec::new();
    let mut dissipative = Vec::new();
    for (i, comp) in kernel.components().iter().enumerate() {
        match comp.label() {
            Some(HopfLabel::Conservative) => conservative.push(comp.clone()),
            Some(HopfLabel::Dissipative) => dissipative.push(comp.clone()),
            None => {
                return Err(Error::UnsupportedKernel(format!(
                    "component {i} of '{}' carries no conservative/dissipative label; \
                     classify it empirically instead",
                    kernel.name()
                )))
            }
        }
    }
    let alpha = kernel.alpha();
    let wrap = |comps: Vec<crate::kernel::ComponentKernel>, suffix: &str| -> Result<Option<KernelDescriptor>> {
        if comps.is_empty() {
            Ok(None)
        } else {
            Ok(Some(KernelDescriptor::new(
                &format!("{}{}", kernel.name(), suffix),
                alpha,
                comps,
            )?))
        }
    };
    Ok((wrap(conservative, "/C")?, wrap(dissipative, "/D")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{builtin_kernel, BaseKind, FactorKind, FamilyKind, KernelParams};
    use crate::rng::{derive_stream, StreamKind};
    use approx::assert_abs_diff_eq;

    fn probe(k: &KernelDescriptor, coords: Vec<f64>) -> StatePoint {
        let _ = k;
        StatePoint {
            component: 0,
            coords,
        }
    }

    #[test]
    fn translation_integral_is_profile_mass() {
        // For the unit indicator, int |1_{[0,1]}(s + t)| dt = 1 once the box
        // covers [-s, 1-s]; the midpoint rule is exact here.
        let k = builtin_kernel(&KernelParams::default()).unwrap();
        for s in [0.5, -0.2, 0.99] {
            let v = kernel_alpha_integral(&k, &probe(&k, vec![s]), 4.0, 16, 1 << 22).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn conservative_integral_grows_linearly() {
        let k = builtin_kernel(&KernelParams {
            family: FamilyKind::TorusRotation,
            ..KernelParams::default()
        })
        .unwrap();
        let p = probe(&k, vec![0.3]);
        let i4 = kernel_alpha_integral(&k, &p, 4.0, 16, 1 << 22).unwrap();
        let i8 = kernel_alpha_integral(&k, &p, 8.0, 16, 1 << 22).unwrap();
        assert_abs_diff_eq!(i4, 8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(i8 / i4, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn integral_monotone_in_radius() {
        let k = builtin_kernel(&KernelParams {
            family: FamilyKind::GaussianTranslation,
            alpha: 1.2,
            ..KernelParams::default()
        })
        .unwrap();
        let p = probe(&k, vec![0.4]);
        let mut last = 0.0;
        for r in [2.0, 4.0, 8.0] {
            let v = kernel_alpha_integral(&k, &p, r, 16, 1 << 22).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn classify_separates_families() {
        let mut rng = derive_stream(21, StreamKind::Classify, 0);
        let cases = [
            (KernelParams::default(), Verdict::Dissipative),
            (
                KernelParams {
                    family: FamilyKind::GaussianTranslation,
                    ..KernelParams::default()
                },
                Verdict::Dissipative,
            ),
            (
                KernelParams {
                    family: FamilyKind::TorusRotation,
                    ..KernelParams::default()
                },
                Verdict::Conservative,
            ),
            (
                KernelParams {
                    family: FamilyKind::Product,
                    dimension: 2,
                    factors: vec![FactorKind::Line, FactorKind::Torus],
                    ..KernelParams::default()
                },
                Verdict::Conservative,
            ),
        ];
        for (params, expected) in cases {
            let k = builtin_kernel(&params).unwrap();
            let report = classify(&k, 8, &DEFAULT_RADIUS_LADDER, 8, 1 << 24, &mut rng).unwrap();
            assert_eq!(report.verdict, expected, "family {}", params.family);
            assert_eq!(report.points.len(), 8);
            assert_eq!(report.stabilization_tolerance, STABILIZATION_TOLERANCE);
        }
    }

    #[test]
    fn mixed_direct_sum_is_undetermined() {
        let t = builtin_kernel(&KernelParams::default()).unwrap();
        let r = builtin_kernel(&KernelParams {
            family: FamilyKind::TorusRotation,
            ..KernelParams::default()
        })
        .unwrap();
        let mixed = KernelDescriptor::direct_sum("mixed", vec![t, r]).unwrap();
        let mut rng = derive_stream(22, StreamKind::Classify, 0);
        let report = classify(&mixed, 6, &DEFAULT_RADIUS_LADDER, 8, 1 << 24, &mut rng).unwrap();
        assert_eq!(report.verdict, Verdict::Undetermined);
    }

    #[test]
    fn classify_validates_ladder() {
        let k = builtin_kernel(&KernelParams::default()).unwrap();
        let mut rng = derive_stream(23, StreamKind::Classify, 0);
        assert!(classify(&k, 4, &[1.0, 2.0], 8, 1 << 24, &mut rng).is_err());
        assert!(classify(&k, 4, &[2.0, 1.0, 3.0], 8, 1 << 24, &mut rng).is_err());
        assert!(classify(&k, 0, &DEFAULT_RADIUS_LADDER, 8, 1 << 24, &mut rng).is_err());
    }

    #[test]
    fn split_by_labels() {
        let t = builtin_kernel(&KernelParams::default()).unwrap();
        let r = builtin_kernel(&KernelParams {
            family: FamilyKind::TorusRotation,
            ..KernelParams::default()
        })
        .unwrap();
        let mixed = KernelDescriptor::direct_sum("mixed", vec![t.clone(), r]).unwrap();
        let (c, d) = split_cd(&mixed).unwrap();
        assert_eq!(c.as_ref().unwrap().components().len(), 1);
        assert_eq!(d.as_ref().unwrap().components().len(), 1);

        let (c, d) = split_cd(&t).unwrap();
        assert!(c.is_none());
        assert_eq!(d.unwrap().components().len(), 1);
    }

    #[test]
    fn split_requires_labels() {
        use crate::action::{ActionDescriptor, Cocycle, Factor};
        use crate::kernel::{BaseFunction, ComponentKernel, Profile};
        use crate::stable::StableIndex;
        let action = ActionDescriptor::new(
            1,
            vec![Factor::Line],
            vec![vec![(0, 1.0)]],
            Cocycle::Trivial,
        )
        .unwrap();
        let base =
            BaseFunction::new(1.0, vec![Profile::Indicator { lo: 0.0, hi: 1.0 }]).unwrap();
        let comp = ComponentKernel::new(action, base, None, None).unwrap();
        let k =
            KernelDescriptor::new("unlabeled", StableIndex::new(1.5).unwrap(), vec![comp]).unwrap();
        assert!(matches!(
            split_cd(&k),
            Err(crate::error::Error::UnsupportedKernel(_))
        ));
    }

    #[test]
    fn split_preserves_alpha_norm() {
        // The alpha-norm of a direct sum splits additively over parts:
        // check on lifetime integrals at a fixed state.
        let t = builtin_kernel(&KernelParams {
            base: BaseKind::Triangle,
            ..KernelParams::default()
        })
        .unwrap();
        let r = builtin_kernel(&KernelParams {
            family: FamilyKind::TorusRotation,
            ..KernelParams::default()
        })
        .unwrap();
        let mixed = KernelDescriptor::direct_sum("mixed", vec![t, r]).unwrap();
        let (c, d) = split_cd(&mixed).unwrap();
        let (c, d) = (c.unwrap(), d.unwrap());
        let radius = 4.0;
        let s_line = probe(&d, vec![0.4]);
        let whole_d = kernel_alpha_integral(
            &mixed,
            &StatePoint {
                component: 0,
                coords: vec![0.4],
            },
            radius,
            16,
            1 << 22,
        )
        .unwrap();
        let part_d = kernel_alpha_integral(&d, &s_line, radius, 16, 1 << 22).unwrap();
        assert_abs_diff_eq!(whole_d, part_d, epsilon = 1e-12);
        let s_torus = StatePoint {
            component: 0,
            coords: vec![0.2],
        };
        let whole_c = kernel_alpha_integral(
            &mixed,
            &StatePoint {
                component: 1,
                coords: vec![0.2],
            },
            radius,
            16,
            1 << 22,
        )
        .unwrap();
        let part_c = kernel_alpha_integral(&c, &s_torus, radius, 16, 1 << 22).unwrap();
        assert_abs_diff_eq!(whole_c, part_c, epsilon = 1e-12);
    }
}
