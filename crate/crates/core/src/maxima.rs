//! Partial maxima of the simulated field and the laws that normalize them.
//!
//! `partial_maxima` reads running maxima off a simulated window.  The two
//! normalizers are computed deterministically: `compute_b_tau` is the α-norm
//! of the windowed supremum of the kernel family, `compute_k_x` the
//! mixing-space α-norm of its sup over shifts.  `EtaTauSampler` draws from
//! the probability measure whose μ-density is the normalized windowed
//! supremum; `check_condition` uses those draws to estimate how often two
//! independent picks share an index site where both kernel values are a
//! fixed fraction of their running maximum.  `limit_law_test` compares
//! normalized maxima against the Fréchet law they should approach.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::action::{Action, Factor};
use crate::error::{Error, Result};
use crate::kernel::{KernelDescriptor, StatePoint};
use crate::lattice::{lattice_points, LatticeSpec};
use crate::lepage::FieldSample;
use crate::quad::{integrate_box, normal_density};
use crate::stable::{FrechetLaw, StableIndex, stable_tail_constant};
use crate::stats::{fit_loglog, ks_one_sample, KsReport, LineFit};

/// Most index-lattice sites a windowed supremum may range over.
pub const DEFAULT_WINDOW_SITE_BUDGET: usize = 1_000_000;
/// Rejection attempts before the η_τ sampler gives up; hitting the cap with
/// zero acceptances puts the acceptance rate below 1e-4 with high confidence.
const MAX_REJECTION_ATTEMPTS: usize = 10_000;
/// Gaussian factors carry no μ-mass beyond this radius at double precision.
const GAUSSIAN_CLIP: f64 = 9.0;

/// One τ rung of a replication path: the running maximum and both
/// normalizers it will be divided by.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximaRecord {
    pub tau: f64,
    pub m_tau: f64,
    /// τ^{d/α}, the normalizer under which maxima of dissipative kernels
    /// converge to a Fréchet law.
    pub norm_power: f64,
    /// b_τ, the α-norm of the windowed supremum of the kernel family.
    pub norm_btau: f64,
    pub replication: u64,
    pub seed: u64,
}

/// The limit law of τ^{-d/α} M_τ: Fréchet with scale C_α^{1/α} K_X.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLawSpec {
    alpha: StableIndex,
    k_x: f64,
    c_alpha: f64,
}

impl LimitLawSpec {
    pub fn new(alpha: StableIndex, k_x: f64) -> Result<Self> {
        if !(k_x.is_finite() && k_x >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "limit constant K_X must be finite and nonnegative, got {k_x}"
            )));
        }
        Ok(LimitLawSpec {
            alpha,
            k_x,
            c_alpha: stable_tail_constant(alpha),
        })
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn k_x(&self) -> f64 {
        self.k_x
    }

    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    /// Scale of the limiting Fréchet law, C_α^{1/α} K_X.
    pub fn frechet_scale(&self) -> f64 {
        self.c_alpha.powf(1.0 / self.alpha.get()) * self.k_x
    }
}

/// Running maxima of |value| over the nested windows [0, τ]^d ∩ Γ_n, one
/// record per ladder rung.  `b_tau` supplies the matching normalizers,
/// usually from `compute_b_tau` at the sample's own lattice level.
pub fn partial_maxima(
    sample: &FieldSample,
    ladder: &[f64],
    b_tau: &[f64],
) -> Result<Vec<MaximaRecord>> {
    let lattice = &sample.lattice;
    validate_ladder(ladder)?;
    if b_tau.len() != ladder.len() {
        return Err(Error::InvalidParameter(format!(
            "{} normalizers supplied for a ladder of {} rungs",
            b_tau.len(),
            ladder.len()
        )));
    }
    if let Some(b) = b_tau.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "normalizer b_tau must be finite and positive, got {b}"
        )));
    }
    let window = lattice.window();
    if let Some(tau) = ladder.iter().find(|t| **t > window * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "ladder rung τ = {tau} exceeds the simulated window {window}"
        )));
    }
    let count = lattice.point_count()?;
    if sample.values.len() != count {
        return Err(Error::Data(format!(
            "sample holds {} values but its lattice has {count} points",
            sample.values.len()
        )));
    }
    let d = lattice.dimension();
    let ppa = lattice.points_per_axis();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * ppa;
    }
    let scale = 2f64.powi(lattice.level() as i32);
    let exponent = d as f64 / sample.alpha;
    let mut records = Vec::with_capacity(ladder.len());
    for (&tau, &b) in ladder.iter().zip(b_tau) {
        let per_axis = (((tau * scale) * (1.0 + 1e-12)).floor() as usize + 1).min(ppa);
        let mut idx = vec![0usize; d];
        let mut lin = 0usize;
        let mut m = 0.0f64;
        loop {
            let v = sample.values[lin].abs();
            if v > m {
                m = v;
            }
            let mut k = d;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                lin += strides[k];
                if idx[k] < per_axis {
                    break;
                }
                lin -= idx[k] * strides[k];
                idx[k] = 0;
            }
            if k == 0 && idx[0] == 0 {
                break;
            }
        }
        records.push(MaximaRecord {
            tau,
            m_tau: m,
            norm_power: tau.powf(exponent),
            norm_btau: b,
            replication: sample.replication,
            seed: sample.seed,
        });
    }
    Ok(records)
}

fn validate_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("τ ladder is empty".into()));
    }
    for t in ladder {
        if !(t.is_finite() && *t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ladder rungs must be finite and positive, got {t}"
            )));
        }
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "τ ladder must be strictly increasing, got {ladder:?}"
        )));
    }
    Ok(())
}

/// Per-factor displacement sets over the window lattice for an action whose
/// drive couples every index axis to at most one factor and vice versa;
/// `None` when the coupling does not factorize.
fn factorized_displacements(
    action: &crate::action::ActionDescriptor,
    tau: f64,
    level: u32,
) -> Result<Option<Vec<Vec<f64>>>> {
    let nf = action.factors().len();
    let mut used_axis = vec![false; action.index_dim()];
    let mut per_factor: Vec<Vec<f64>> = Vec::with_capacity(nf);
    let axis_coords = LatticeSpec::new(1, level, tau)?.axis_coords();
    for i in 0..nf {
        let row = action.drive_row(i);
        match row {
            [] => per_factor.push(vec![0.0]),
            [(axis, coeff)] => {
                if used_axis[*axis] {
                    return Ok(None);
                }
                used_axis[*axis] = true;
                if *coeff == 0.0 {
                    per_factor.push(vec![0.0]);
                } else {
                    per_factor.push(axis_coords.iter().map(|t| coeff * t).collect());
                }
            }
            _ => return Ok(None),
        }
    }
    Ok(Some(per_factor))
}

/// Quadrature ranges over the states some window shift can reach, with
/// Gaussian axes clipped to the mass-carrying band.  `None`: the component
/// cannot contribute.
fn component_ranges(
    kernel: &KernelDescriptor,
    component: usize,
    window_axes: &[(f64, f64)],
) -> Result<Option<Vec<(f64, f64)>>> {
    let comp = &kernel.components()[component];
    let bounds = kernel.state_bounds(component, window_axes);
    let mut ranges = Vec::with_capacity(bounds.len());
    for (i, (b, f)) in bounds.iter().zip(comp.action().factors()).enumerate() {
        let r = match (f, b) {
            (Factor::GaussianLine, Some((lo, hi))) => {
                let (lo, hi) = (lo.max(-GAUSSIAN_CLIP), hi.min(GAUSSIAN_CLIP));
                if lo >= hi {
                    return Ok(None);
                }
                (lo, hi)
            }
            (Factor::GaussianLine, None) => (-GAUSSIAN_CLIP, GAUSSIAN_CLIP),
            (_, Some((lo, hi))) => (*lo, *hi),
            (_, None) => {
                return Err(Error::InvalidParameter(format!(
                    "factor {i} of component {component} has unbounded support \
                     on an infinite-measure axis"
                )))
            }
        };
        ranges.push(r);
    }
    Ok(Some(ranges))
}

/// α-norm of the windowed supremum: the quadrature of
/// sup over t in [0, τ]^d ∩ Γ_n of |f_t(s)|^α over the state space, to the
/// power 1/α.  Nondecreasing in both τ and the lattice level.
pub fn compute_b_tau(
    kernel: &KernelDescriptor,
    tau: f64,
    level: u32,
    resolution: u32,
    cell_budget: usize,
) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "window extent τ must be finite and positive, got {tau}"
        )));
    }
    let alpha = kernel.alpha().get();
    let dim = kernel.index_dim();
    let window_axes = vec![(0.0, tau); dim];
    let mut total = 0.0f64;
    for (c, comp) in kernel.components().iter().enumerate() {
        let Some(ranges) = component_ranges(kernel, c, &window_axes)? else {
            continue;
        };
        let action = comp.action();
        if let Some(per_factor) = factorized_displacements(action, tau, level)? {
            // The sup and the integral both split across factors.
            let mut part = comp.base().amplitude().abs().powf(alpha);
            for (i, (f, range)) in action.factors().iter().zip(&ranges).enumerate() {
                let profile = &comp.base().profiles()[i];
                let disp = &per_factor[i];
                let axis_budget = (cell_budget / disp.len().max(1)).max(1);
                let factor_integral = match f {
                    Factor::Line => integrate_box(&[*range], resolution, axis_budget, |x| {
                        let mut best = 0.0f64;
                        for &d in disp {
                            let v = profile.eval(x[0] + d).abs();
                            if v > best {
                                best = v;
                            }
                        }
                        best.powf(alpha)
                    })?,
                    Factor::GaussianLine => {
                        integrate_box(&[*range], resolution, axis_budget, |x| {
                            let mut best = 0.0f64;
                            for &d in disp {
                                let moved = x[0] + d;
                                let p = profile.eval(moved).abs();
                                if p > 0.0 {
                                    let v = p.powf(alpha) * normal_density(moved);
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                            best
                        })?
                    }
                    Factor::Torus => integrate_box(&[*range], resolution, axis_budget, |x| {
                        let mut best = 0.0f64;
                        for &d in disp {
                            let v = profile.eval((x[0] + d).rem_euclid(1.0)).abs();
                            if v > best {
                                best = v;
                            }
                        }
                        best.powf(alpha)
                    })?,
                };
                part *= factor_integral;
                if part == 0.0 {
                    break;
                }
            }
            total += part;
        } else {
            let spec = LatticeSpec::new(dim, level, tau)?;
            let t_points = lattice_points(&spec, DEFAULT_WINDOW_SITE_BUDGET)?;
            let inner_budget = (cell_budget / t_points.len()).max(1);
            let gaussian: Vec<bool> = comp
                .action()
                .factors()
                .iter()
                .map(|f| *f == Factor::GaussianLine)
                .collect();
            let mut scratch = Vec::new();
            total += integrate_box(&ranges, resolution, inner_budget, |s| {
                let mut best = 0.0f64;
                for t in &t_points {
                    let v = kernel.component_value_into(c, t, s, &mut scratch).abs();
                    if v > best {
                        best = v;
                    }
                }
                let mut v = best.powf(alpha);
                if v != 0.0 {
                    for (i, g) in gaussian.iter().enumerate() {
                        if *g {
                            v *= normal_density(s[i]);
                        }
                    }
                }
                v
            })?;
        }
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Data(format!(
            "windowed supremum of kernel '{}' has α-mass {total} over [0, {tau}]^{dim}",
            kernel.name()
        )));
    }
    Ok(total.powf(1.0 / alpha))
}

/// Mixing-space α-norm of the sup over index shifts: for each component
/// with a mixed-moving-average factorization, the sup of |f| over the
/// level-n lattice restricted to the support box, α-th power weighted by
/// the mixing mass, summed and rooted.  Nondecreasing in the level.
pub fn compute_k_x(kernel: &KernelDescriptor, level: u32, point_budget: usize) -> Result<f64> {
    let alpha = kernel.alpha().get();
    let mut total = 0.0f64;
    for (c, comp) in kernel.components().iter().enumerate() {
        let Some(mma) = comp.mma() else {
            return Err(Error::UnsupportedKernel(format!(
                "component {c} of kernel '{}' carries no mixed-moving-average \
                 factorization; classify it and split off the dissipative part first",
                kernel.name()
            )));
        };
        if comp.action().factors().iter().any(|f| *f != Factor::Line) {
            return Err(Error::UnsupportedKernel(format!(
                "component {c} of kernel '{}' mixes non-Lebesgue factors; its \
                 moving-average form is not the plain shift this computation assumes",
                kernel.name()
            )));
        }
        let h = 2f64.powi(-(level as i32));
        let mut counts = Vec::new();
        let mut origins = Vec::new();
        let mut budget = 1usize;
        for (i, p) in comp.base().profiles().iter().enumerate() {
            let Some((lo, hi)) = p.support() else {
                return Err(Error::InvalidParameter(format!(
                    "factor {i} of component {c} has unbounded support"
                )));
            };
            let k_lo = (lo / h - 1e-9).ceil() as i64;
            let k_hi = (hi / h + 1e-9).floor() as i64;
            let n = (k_hi - k_lo + 1).max(0) as usize;
            budget = budget.checked_mul(n.max(1)).ok_or_else(|| {
                Error::Resource("support lattice size overflows the address space".into())
            })?;
            counts.push(n);
            origins.push(k_lo as f64 * h);
        }
        if budget > point_budget {
            return Err(Error::Resource(format!(
                "support lattice holds {budget} points, over the budget of {point_budget}"
            )));
        }
        let mut g = 0.0f64;
        if counts.iter().all(|n| *n > 0) {
            let d = counts.len();
            let mut idx = vec![0usize; d];
            let mut coords = vec![0.0f64; d];
            for k in 0..d {
                coords[k] = origins[k];
            }
            loop {
                let v = comp.base().eval(&coords).abs();
                if v > g {
                    g = v;
                }
                let mut k = d;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < counts[k] {
                        coords[k] = origins[k] + idx[k] as f64 * h;
                        break;
                    }
                    idx[k] = 0;
                    coords[k] = origins[k];
                }
                if k == 0 && idx[0] == 0 {
                    break;
                }
            }
        }
        total += mma.mixing_mass * g.powf(alpha);
    }
    Ok(total.powf(1.0 / alpha))
}

#[derive(Clone, Copy, Debug)]
enum ProposalAxis {
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { lo: f64, hi: f64, mass: f64 },
    TorusUniform,
}

impl ProposalAxis {
    fn mass(&self) -> f64 {
        match self {
            ProposalAxis::Uniform { lo, hi } => hi - lo,
            ProposalAxis::TruncatedNormal { mass, .. } => *mass,
            ProposalAxis::TorusUniform => 1.0,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            ProposalAxis::Uniform { lo, hi } => Ok(lo + (hi - lo) * rng.random::<f64>()),
            ProposalAxis::TruncatedNormal { lo, hi, .. } => {
                for _ in 0..MAX_REJECTION_ATTEMPTS {
                    let z: f64 = rng.sample(StandardNormal);
                    if z >= *lo && z < *hi {
                        return Ok(z);
                    }
                }
                Err(Error::Efficiency(format!(
                    "no Gaussian proposal landed in [{lo}, {hi}) within \
                     {MAX_REJECTION_ATTEMPTS} attempts"
                )))
            }
            ProposalAxis::TorusUniform => Ok(rng.random::<f64>()),
        }
    }
}

struct ComponentProposal {
    axes: Vec<ProposalAxis>,
    /// Envelope over the component of sup_t |f_t(s)|^α; zero disables it.
    envelope: f64,
    weight: f64,
}

/// Rejection sampler for η_τ, the law on the state space with μ-density
/// b_τ^{-α} · sup over t in [0, τ]^d ∩ Γ_n of |f_t(s)|^α.
///
/// Proposals are uniform (Lebesgue axes), standard normal (Gaussian axes)
/// or uniform on the circle, over the states the window can reach;
/// components are weighted by envelope × proposal mass, so acceptance uses
/// the density formula exactly.
pub struct EtaTauSampler<'a> {
    kernel: &'a KernelDescriptor,
    b_tau: f64,
    t_points: Vec<Vec<f64>>,
    comps: Vec<ComponentProposal>,
    total_weight: f64,
}

impl<'a> EtaTauSampler<'a> {
    pub fn new(
        kernel: &'a KernelDescriptor,
        tau: f64,
        level: u32,
        b_tau: f64,
    ) -> Result<Self> {
        if !(b_tau.is_finite() && b_tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "normalizer b_tau must be finite and positive, got {b_tau}"
            )));
        }
        let dim = kernel.index_dim();
        let spec = LatticeSpec::new(dim, level, tau)?;
        let t_points = lattice_points(&spec, DEFAULT_WINDOW_SITE_BUDGET)?;
        let window_axes = vec![(0.0, tau); dim];
        let alpha = kernel.alpha().get();
        let mut comps = Vec::with_capacity(kernel.components().len());
        let mut total_weight = 0.0;
        for (c, comp) in kernel.components().iter().enumerate() {
            let Some(ranges) = component_ranges(kernel, c, &window_axes)? else {
                comps.push(ComponentProposal {
                    axes: Vec::new(),
                    envelope: 0.0,
                    weight: 0.0,
                });
                continue;
            };
            let action = comp.action();
            let mut axes = Vec::with_capacity(ranges.len());
            let mut log_w_max = 0.0f64;
            for (i, (f, &(lo, hi))) in action.factors().iter().zip(&ranges).enumerate() {
                match f {
                    Factor::Line => axes.push(ProposalAxis::Uniform { lo, hi }),
                    Factor::Torus => axes.push(ProposalAxis::TorusUniform),
                    Factor::GaussianLine => {
                        let n = Normal::new(0.0, 1.0).unwrap();
                        let mass = n.cdf(hi) - n.cdf(lo);
                        axes.push(ProposalAxis::TruncatedNormal { lo, hi, mass });
                        // sup over the (state, displacement) rectangle of the
                        // log density ratio −sδ − δ²/2: at a corner, or at
                        // the interior peak δ = −s.
                        let (dmin, dmax) = action.displacement_range(i, &window_axes);
                        let mut m = 0.0f64;
                        for s in [lo, hi] {
                            for d in [dmin, dmax] {
                                m = m.max(-s * d - 0.5 * d * d);
                            }
                            if -s >= dmin && -s <= dmax {
                                m = m.max(0.5 * s * s);
                            }
                        }
                        log_w_max += m;
                    }
                }
            }
            let envelope = comp.base().max_abs().powf(alpha) * log_w_max.exp();
            let weight = envelope * axes.iter().map(ProposalAxis::mass).product::<f64>();
            total_weight += weight;
            comps.push(ComponentProposal {
                axes,
                envelope,
                weight,
            });
        }
        if !(total_weight.is_finite() && total_weight > 0.0) {
            return Err(Error::Data(format!(
                "kernel '{}' vanishes on every state the window [0, {tau}]^{dim} reaches",
                kernel.name()
            )));
        }
        Ok(EtaTauSampler {
            kernel,
            b_tau,
            t_points,
            comps,
            total_weight,
        })
    }

    /// sup over the window lattice of |f_t|^α at one state point.
    fn sup_alpha(&self, component: usize, coords: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let mut best = 0.0f64;
        for t in &self.t_points {
            let v = self
                .kernel
                .component_value_into(component, t, coords, scratch)
                .abs();
            if v > best {
                best = v;
            }
        }
        best.powf(self.kernel.alpha().get())
    }

    /// μ-density of η_τ at a state point: b_τ^{-α} · sup_t |f_t|^α.
    pub fn density(&self, point: &StatePoint) -> Result<f64> {
        if point.component >= self.comps.len() {
            return Err(Error::InvalidParameter(format!(
                "component {} out of range, kernel has {}",
                point.component,
                self.comps.len()
            )));
        }
        let mut scratch = Vec::new();
        let rho = self.sup_alpha(point.component, &point.coords, &mut scratch);
        Ok(rho / self.b_tau.powf(self.kernel.alpha().get()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StatePoint> {
        let mut scratch = Vec::new();
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let mut pick = rng.random::<f64>() * self.total_weight;
            let mut chosen = self.comps.len() - 1;
            for (c, comp) in self.comps.iter().enumerate() {
                pick -= comp.weight;
                if pick < 0.0 {
                    chosen = c;
                    break;
                }
            }
            let comp = &self.comps[chosen];
            if comp.weight == 0.0 {
                continue;
            }
            let mut coords = Vec::with_capacity(comp.axes.len());
            for a in &comp.axes {
                coords.push(a.draw(rng)?);
            }
            let rho = self.sup_alpha(chosen, &coords, &mut scratch);
            debug_assert!(
                rho <= comp.envelope * (1.0 + 1e-9),
                "envelope {} under the density {rho}",
                comp.envelope
            );
            if rng.random::<f64>() * comp.envelope < rho {
                return Ok(StatePoint {
                    component: chosen,
                    coords,
                });
            }
        }
        Err(Error::Efficiency(format!(
            "η_τ acceptance rate fell below 1e-4 ({MAX_REJECTION_ATTEMPTS} straight \
             rejections); tighten the proposal box or lower τ"
        )))
    }
}

/// One draw from η_τ.  `b_tau` must come from `compute_b_tau` for the same
/// (kernel, τ, level); it only scales the reported density, the draw itself
/// is exact for any positive value.
pub fn sample_eta_tau<R: Rng + ?Sized>(
    kernel: &KernelDescriptor,
    tau: f64,
    level: u32,
    b_tau: f64,
    rng: &mut R,
) -> Result<StatePoint> {
    EtaTauSampler::new(kernel, tau, level, b_tau)?.sample(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub tau: f64,
    pub b_tau: f64,
    /// Estimated probability that two independent η_τ draws share a window
    /// site where both normalized kernel values exceed ε.
    pub probability: f64,
    pub se: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub epsilon: f64,
    pub level: u32,
    pub entries: Vec<ConditionEntry>,
    /// Log-log slope of b_τ along the ladder.
    pub b_slope: f64,
    /// d/(2α); a slope above it means τ^{-d/(2α)} b_τ diverges.
    pub divergence_threshold: f64,
    pub normalizer_diverges: bool,
}

/// For each τ, estimate over `pairs` independent η_τ pairs the probability
/// that some window site t has both |f_t(U_j)| above ε times that draw's
/// own windowed supremum.  Also fits the growth of b_τ and compares its
/// slope against d/(2α).
#[allow(clippy::too_many_arguments)]
pub fn check_condition<R: Rng + ?Sized>(
    kernel: &KernelDescriptor,
    ladder: &[f64],
    epsilon: f64,
    pairs: usize,
    level: u32,
    resolution: u32,
    cell_budget: usize,
    rng: &mut R,
) -> Result<ConditionReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold ε must be finite and positive, got {epsilon}"
        )));
    }
    if pairs < 1000 {
        return Err(Error::InvalidParameter(format!(
            "condition check needs at least 1000 pairs per rung, got {pairs}"
        )));
    }
    validate_ladder(ladder)?;
    if ladder.len() < 2 {
        return Err(Error::InvalidParameter(
            "condition check needs at least 2 ladder rungs to fit the growth of b_τ".into(),
        ));
    }
    let alpha = kernel.alpha().get();
    let mut entries = Vec::with_capacity(ladder.len());
    let mut scratch = Vec::new();
    for &tau in ladder {
        let b = compute_b_tau(kernel, tau, level, resolution, cell_budget)?;
        let sampler = EtaTauSampler::new(kernel, tau, level, b)?;
        let t_count = sampler.t_points.len();
        let mut vals = [vec![0.0f64; t_count], vec![0.0f64; t_count]];
        let mut hits = 0usize;
        for _ in 0..pairs {
            let mut sup = [0.0f64; 2];
            let mut comp = [0usize; 2];
            for j in 0..2 {
                let u = sampler.sample(rng)?;
                comp[j] = u.component;
                let mut best = 0.0f64;
                for (i, t) in sampler.t_points.iter().enumerate() {
                    let v = kernel
                        .component_value_into(u.component, t, &u.coords, &mut scratch)
                        .abs();
                    vals[j][i] = v;
                    if v > best {
                        best = v;
                    }
                }
                sup[j] = best;
            }
            // Draws with zero supremum carry no η_τ mass; the sampler never
            // returns them.
            let event = (0..t_count)
                .any(|i| vals[0][i] > epsilon * sup[0] && vals[1][i] > epsilon * sup[1]);
            if event {
                hits += 1;
            }
        }
        let p = hits as f64 / pairs as f64;
        entries.push(ConditionEntry {
            tau,
            b_tau: b,
            probability: p,
            se: (p * (1.0 - p) / pairs as f64).sqrt(),
            pairs,
        });
    }
    let fit = fit_loglog(
        ladder,
        &entries.iter().map(|e| e.b_tau).collect::<Vec<_>>(),
    )?;
    let threshold = kernel.index_dim() as f64 / (2.0 * alpha);
    Ok(ConditionReport {
        epsilon,
        level,
        entries,
        b_slope: fit.slope,
        divergence_threshold: threshold,
        normalizer_diverges: fit.slope > threshold,
    })
}

/// One-sample KS test of normalized maxima against the Fréchet law with
/// scale C_α^{1/α} K_X.
pub fn limit_law_test(values: &[f64], law: &LimitLawSpec) -> Result<KsReport> {
    if values.len() < 500 {
        return Err(Error::Data(format!(
            "limit-law test needs at least 500 normalized maxima, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Data(format!(
            "normalized maxima must be positive and finite, got {v}; maxima of a \
             nondegenerate field are positive almost surely"
        )));
    }
    let scale = law.frechet_scale();
    if !(scale > 0.0) {
        return Err(Error::Data(format!(
            "limit law is degenerate: Fréchet scale C_α^(1/α) K_X = {scale}"
        )));
    }
    let frechet = FrechetLaw::new(law.alpha(), scale)?;
    Ok(ks_one_sample(values, |z| frechet.cdf(z)))
}

/// Least-squares slope of log median against log τ.  Slope d/α flags the
/// power-law regime of dissipative kernels; slope 0, a ladder already
/// normalized to its own growth.
pub fn growth_exponent_fit(ladder: &[f64], medians: &[f64]) -> Result<LineFit> {
    if ladder.len() < 4 {
        return Err(Error::Data(format!(
            "growth fit needs at least 4 ladder rungs, got {}",
            ladder.len()
        )));
    }
    if medians.len() != ladder.len() {
        return Err(Error::Data(format!(
            "{} medians supplied for a ladder of {} rungs",
            medians.len(),
            ladder.len()
        )));
    }
    fit_loglog(ladder, medians)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{builtin_kernel, BaseKind, FactorKind, FamilyKind, KernelParams};
    use crate::lepage::{prepare_series, simulate_field, SeriesParams};
    use crate::quad::{DEFAULT_CELL_BUDGET, DEFAULT_RESOLUTION};
    use crate::rng::{derive_stream, StreamKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn translation_kernel(alpha: f64) -> KernelDescriptor {
        builtin_kernel(&KernelParams {
            family: FamilyKind::Translation,
            alpha,
            ..KernelParams::default()
        })
        .unwrap()
    }

    fn sample_with_values(values: Vec<f64>, level: u32, window: f64) -> FieldSample {
        FieldSample {
            lattice: LatticeSpec::new(1, level, window).unwrap(),
            values,
            kernel_name: "hand-built".into(),
            alpha: 1.5,
            seed: 1,
            replication: 0,
            terms: 0,
            compensator_terms: 0,
        }
    }

    #[test]
    fn maxima_of_hand_built_sample() {
        let s = sample_with_values(vec![1.0, -5.0, 2.0], 0, 2.0);
        let recs = partial_maxima(&s, &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].m_tau, 5.0);
        assert_eq!(recs[1].m_tau, 5.0);
        assert_abs_diff_eq!(recs[0].norm_power, 1.0);
        assert_abs_diff_eq!(recs[1].norm_power, 2f64.powf(1.0 / 1.5), epsilon = 1e-15);
    }

    #[test]
    fn maxima_of_constant_field() {
        let s = sample_with_values(vec![-3.0; 9], 2, 2.0);
        let recs = partial_maxima(&s, &[0.5, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!(recs.iter().all(|r| r.m_tau == 3.0));
    }

    #[test]
    fn maxima_two_dimensional_window() {
        // 3x3 grid over [0,2]^2 at level 0, row-major with the last axis
        // fastest; the corner value 9 enters only at τ = 2.
        let values = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let s = FieldSample {
            lattice: LatticeSpec::new(2, 0, 2.0).unwrap(),
            values,
            kernel_name: "hand-built".into(),
            alpha: 1.5,
            seed: 1,
            replication: 0,
            terms: 0,
            compensator_terms: 0,
        };
        let recs = partial_maxima(&s, &[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(recs[0].m_tau, 5.0);
        assert_eq!(recs[1].m_tau, 9.0);
    }

    #[test]
    fn maxima_rejects_bad_ladders() {
        let s = sample_with_values(vec![1.0, 2.0, 3.0], 0, 2.0);
        assert!(partial_maxima(&s, &[2.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(partial_maxima(&s, &[1.0, 3.0], &[1.0, 1.0]).is_err());
        assert!(partial_maxima(&s, &[1.0], &[1.0, 1.0]).is_err());
        assert!(partial_maxima(&s, &[], &[]).is_err());
        assert!(partial_maxima(&s, &[1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn maxima_monotone_along_any_ladder(
            values in proptest::collection::vec(-100.0f64..100.0, 17),
            cut in 1usize..16,
        ) {
            // Level-2 lattice over [0, 4]: 17 points; any two nested
            // windows give nondecreasing maxima.
            let s = sample_with_values(values, 2, 4.0);
            let t1 = cut as f64 * 0.25;
            let recs = partial_maxima(&s, &[t1, 4.0], &[1.0, 1.0]).unwrap();
            prop_assert!(recs[0].m_tau <= recs[1].m_tau);
        }
    }

    #[test]
    fn maxima_monotone_on_simulated_field() {
        let kernel = translation_kernel(1.5);
        let lattice = LatticeSpec::new(1, 2, 8.0).unwrap();
        let params = SeriesParams {
            calibration_replications: 20_000,
            ..SeriesParams::default()
        };
        let config = prepare_series(&kernel, &lattice, &params, 11).unwrap();
        let sample = simulate_field(&kernel, &lattice, &config, 11, 0).unwrap();
        let ladder = [1.0, 2.0, 4.0, 8.0];
        let b: Vec<f64> = ladder
            .iter()
            .map(|&t| compute_b_tau(&kernel, t, 2, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET).unwrap())
            .collect();
        let recs = partial_maxima(&sample, &ladder, &b).unwrap();
        for w in recs.windows(2) {
            assert!(w[0].m_tau <= w[1].m_tau);
        }
        assert!(recs[3].m_tau > 0.0);
    }

    #[test]
    fn b_tau_translation_matches_closed_form() {
        // sup over shifts of a unit indicator is the indicator of
        // [−τ, 1), so b_τ = (τ + 1)^{1/α} exactly.
        for alpha in [0.8, 1.5] {
            let kernel = translation_kernel(alpha);
            for tau in [1.0, 10.0, 100.0] {
                let b =
                    compute_b_tau(&kernel, tau, 2, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET)
                        .unwrap();
                assert_abs_diff_eq!(b, (tau + 1.0).powf(1.0 / alpha), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn b_tau_rotation_is_one() {
        let kernel = builtin_kernel(&KernelParams {
            family: FamilyKind::TorusRotation,
            alpha: 1.5,
            ..KernelParams::default()
        })
        .unwrap();
        for tau in [1.0, 10.0, 100.0] {
            let b = compute_b_tau(&kernel, tau, 2, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET)
                .unwrap();
            assert_abs_diff_eq!(b, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn b_tau_product_factorizes() {
        // Torus coordinate contributes factor 1; the line coordinate the
        // translation closed form.
        let kernel = builtin_kernel(&KernelParams {
            family: FamilyKind::Product,
            alpha: 1.5,
            dimension: 2,
            factors: vec![FactorKind::Line, FactorKind::Torus],
            ..KernelParams::default()
        })
        .unwrap();
        let b = compute_b_tau(&kernel, 10.0, 2, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET).unwrap();
        assert_abs_diff_eq!(b, 11f64.powf(1.0 / 1.5), epsilon = 1e-9);
    }

    #[test]
    fn b_tau_brute_force_path_agrees() {
        // One line factor driven by the sum of two index axes does not
        // factorize; the reachable displacement set is the level-n lattice
        // on [0, 2τ], so the closed form is (2τ + 1)^{1/α}.
        use crate::action::{ActionDescriptor, Cocycle};
        use crate::kernel::{BaseFunction, ComponentKernel, Profile};
        let action = ActionDescriptor::new(
            2,
            vec![Factor::Line],
            vec![vec![(0, 1.0), (1, 1.0)]],
            Cocycle::Trivial,
        )
        .unwrap();
        let base = BaseFunction::new(
            1.0,
            vec![Profile::Indicator { lo: 0.0, hi: 1.0 }],
        )
        .unwrap();
        let comp = ComponentKernel::new(action, base, None, None).unwrap();
        let kernel =
            KernelDescriptor::new("sheared", StableIndex::new(1.5).unwrap(), vec![comp]).unwrap();
        let b = compute_b_tau(&kernel, 2.0, 1, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET).unwrap();
        assert_abs_diff_eq!(b, 5f64.powf(1.0 / 1.5), epsilon = 1e-9);
    }

    #[test]
    fn b_tau_monotone_in_tau_and_level() {
        let kernel = builtin_kernel(&KernelParams {
            family: FamilyKind::GaussianTranslation,
            alpha: 1.2,
            ..KernelParams::default()
        })
        .unwrap();
        let b = |tau, level| {
            compute_b_tau(&kernel, tau, level, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET).unwrap()
        };
        assert!(b(1.0, 2) <= b(2.0, 2) && b(2.0, 2) <= b(4.0, 2));
        assert!(b(2.0, 0) <= b(2.0, 1) && b(2.0, 1) <= b(2.0, 2));
    }

    #[test]
    fn b_tau_rejects_bad_window() {
        let kernel = translation_kernel(1.5);
        assert!(compute_b_tau(&kernel, 0.0, 2, 16, 1000).is_err());
        assert!(compute_b_tau(&kernel, -1.0, 2, 16, 1000).is_err());
        // Budget overflow surfaces as a resource error.
        let err = compute_b_tau(&kernel, 100.0, 2, 64, 10).unwrap_err();
        assert!(matches!(err, Error::Resource(_)), "{err}");
    }

    #[test]
    fn k_x_unit_indicator_is_one() {
        let kernel = translation_kernel(1.5);
        assert_abs_diff_eq!(compute_k_x(&kernel, 2, 1 << 20).unwrap(), 1.0);
    }

    #[test]
    fn k_x_scales_with_amplitude() {
        let kernel = builtin_kernel(&KernelParams {
            family: FamilyKind::Translation,
            alpha: 1.5,
            amplitude: -2.5,
            ..KernelParams::default()
        })
        .unwrap();
        assert_abs_diff_eq!(compute_k_x(&kernel, 2, 1 << 20).unwrap(), 2.5);
    }

    #[test]
    fn k_x_triangle_needs_the_apex_on_the_lattice() {
        let kernel = builtin_kernel(&KernelParams {
            family: FamilyKind::Translation,
            alpha: 1.5,
            base: BaseKind::Triangle,
            ..KernelParams::default()
        })
        .unwrap();
        // Level 0 sees only the endpoints of [0, 1] where the tent
        // vanishes; level 1 puts the apex 1/2 on the lattice.
        assert_abs_diff_eq!(compute_k_x(&kernel, 0, 1 << 20).unwrap(), 0.0);
        assert_abs_diff_eq!(compute_k_x(&kernel, 1, 1 << 20).unwrap(), 1.0);
        assert_abs_diff_eq!(compute_k_x(&kernel, 4, 1 << 20).unwrap(), 1.0);
    }

    #[test]
    fn k_x_requires_the_factorization() {
        let kernel = builtin_kernel(&KernelParams {
            family: FamilyKind::TorusRotation,
            alpha: 1.5,
            ..KernelParams::default()
        })
        .unwrap();
        let err = compute_k_x(&kernel, 2, 1 << 20).unwrap_err();
        assert!(matches!(err, Error::UnsupportedKernel(_)), "{err}");
        assert!(err.to_string().contains("classify"), "{err}");
    }

    #[test]
    fn eta_translation_is_uniform() {
        // sup_t |f_t|^α is the indicator of [−τ, 1), so η_τ is uniform
        // there; KS of 10^4 draws stays under the 1% critical value.
        let kernel = translation_kernel(1.5);
        let tau = 5.0;
        let b = compute_b_tau(&kernel, tau, 2, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET).unwrap();
        let sampler = EtaTauSampler::new(&kernel, tau, 2, b).unwrap();
        let mut rng = derive_stream(31, StreamKind::Eta, 0);
        let mut xs = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            let p = sampler.sample(&mut rng).unwrap();
            assert_eq!(p.component, 0);
            assert!(p.coords[0] >= -tau && p.coords[0] < 1.0);
            assert!(sampler.density(&p).unwrap() > 0.0);
            xs.push(p.coords[0]);
        }
        let report = ks_one_sample(&xs, |x| ((x + tau) / (tau + 1.0)).clamp(0.0, 1.0));
        assert!(
            report.statistic < report.critical_1pct,
            "KS {} at 1% critical {}",
            report.statistic,
            report.critical_1pct
        );
    }

    #[test]
    fn eta_box_mass_matches_quadrature() {
        let kernel = translation_kernel(1.5);
        let tau = 5.0;
        let b = compute_b_tau(&kernel, tau, 2, DEFAULT_RESOLUTION, DEFAULT_CELL_BUDGET).unwrap();
        let sampler = EtaTauSampler::new(&kernel, tau, 2, b).unwrap();
        let mut rng = derive_stream(32, StreamKind::Eta, 0);
        let n = 10_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let p = sampler.sample(&mut rng).unwrap();
            if p.coords[0] >= -1.0 && p.coords[0] <= 0.5 {
                hits += 1;
            }
        }
        let expected = 1.5 / (tau + 1.0);
        let p_hat = hits as f64 / n as f64;
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (p_hat - expected).abs() <= 3.0 * se,
            "box mass {p_hat} vs analytic {expected} (3·SE = {})",
            3.0 * se
        );
    }

    #[test]
    fn eta_one_shot_draw_and_validation() {
        let kernel = translation_kernel(1.5);
        let mut rng = derive_stream(33, StreamKind::Eta, 0);
        let p = sample_eta_tau(&kernel, 2.0, 2, 3f64.powf(1.0 / 1.5), &mut rng).unwrap();
        assert!(p.coords[0] >= -2.0 && p.coords[0] < 1.0);
        assert!(sample_eta_tau(&kernel, 2.0, 2, 0.0, &mut rng).is_err());
        assert!(sample_eta_tau(&kernel, -2.0, 2, 1.0, &mut rng).is_err());
    }

    /// Geometric oracle for the translation kernel: both uniforms on
    /// [−τ, 1] must admit a shared lattice shift t with U_j + t in [0, 1),
    /// i.e. the interval [max(−U_1, −U_2, 0), min(1−U_1, 1−U_2, τ)) must
    /// contain a point of the level-n grid.  Evaluated by a fine midpoint
    /// double integral, independent of the sampler under test.
    fn overlap_oracle(tau: f64, level: u32) -> f64 {
        let h = 2f64.powi(-(level as i32));
        let l = tau + 1.0;
        let n = 2400usize;
        let step = l / n as f64;
        let mut hit = 0u64;
        for i in 0..n {
            let u1 = -tau + (i as f64 + 0.5) * step;
            for j in 0..n {
                let u2 = -tau + (j as f64 + 0.5) * step;
                let a = (-u1).max(-u2).max(0.0);
                let b = (1.0 - u1).min(1.0 - u2).min(tau);
                if (a / h).ceil() * h < b {
                    hit += 1;
                }
            }
        }
        hit as f64 / (n * n) as f64
    }

    #[test]
    fn condition_translation_decays_like_the_overlap() {
        // The event needs the two draws within distance ≈ 1 of each other
        // on [−τ, 1], so the probability tracks 2/(τ+1): τ = 10 → 40
        // shrinks it by ≈ 0.27.
        let kernel = translation_kernel(1.5);
        let mut rng = derive_stream(34, StreamKind::Condition, 0);
        let report = check_condition(
            &kernel,
            &[10.0, 40.0],
            0.5,
            4000,
            2,
            DEFAULT_RESOLUTION,
            DEFAULT_CELL_BUDGET,
            &mut rng,
        )
        .unwrap();
        for e in &report.entries {
            let expected = overlap_oracle(e.tau, 2);
            assert!(
                (e.probability - expected).abs() <= 4.0 * e.se.max(1e-3),
                "τ = {}: estimate {} vs overlap {expected}",
                e.tau,
                e.probability
            );
        }
        assert!(report.entries[1].probability < 0.4 * report.entries[0].probability);
        // b_τ = (τ+1)^{1/α} grows faster than τ^{d/(2α)} here.
        assert!(report.normalizer_diverges);
        assert_abs_diff_eq!(report.divergence_threshold, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn condition_above_one_never_fires() {
        let kernel = translation_kernel(1.5);
        let mut rng = derive_stream(35, StreamKind::Condition, 0);
        let report = check_condition(
            &kernel,
            &[2.0, 3.0],
            1.5,
            1000,
            2,
            DEFAULT_RESOLUTION,
            DEFAULT_CELL_BUDGET,
            &mut rng,
        )
        .unwrap();
        assert!(report.entries.iter().all(|e| e.probability == 0.0));
    }

    #[test]
    fn condition_validates_inputs() {
        let kernel = translation_kernel(1.5);
        let mut rng = derive_stream(36, StreamKind::Condition, 0);
        let mut run = |ladder: &[f64], eps: f64, pairs: usize| {
            check_condition(&kernel, ladder, eps, pairs, 2, 16, 1 << 22, &mut rng).err()
        };
        assert!(run(&[2.0, 4.0], 0.0, 1000).is_some());
        assert!(run(&[2.0, 4.0], 0.5, 999).is_some());
        assert!(run(&[4.0, 2.0], 0.5, 1000).is_some());
        assert!(run(&[2.0], 0.5, 1000).is_some());
    }

    #[test]
    fn limit_law_accepts_its_own_draws() {
        let alpha = StableIndex::new(1.5).unwrap();
        let law = LimitLawSpec::new(alpha, 1.0).unwrap();
        let frechet = FrechetLaw::new(alpha, law.frechet_scale()).unwrap();
        let mut rng = derive_stream(37, StreamKind::Generic, 0);
        let draws: Vec<f64> = (0..2000)
            .map(|_| {
                frechet
                    .quantile(rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12))
                    .unwrap()
            })
            .collect();
        let report = limit_law_test(&draws, &law).unwrap();
        assert!(report.statistic < report.critical_5pct);

        let scaled: Vec<f64> = draws.iter().map(|v| 2.0 * v).collect();
        let bad = limit_law_test(&scaled, &law).unwrap();
        assert!(bad.statistic > bad.critical_5pct);
    }

    #[test]
    fn limit_law_rejects_bad_samples() {
        let law = LimitLawSpec::new(StableIndex::new(1.5).unwrap(), 1.0).unwrap();
        assert!(matches!(limit_law_test(&[], &law), Err(Error::Data(_))));
        let short = vec![1.0; 499];
        assert!(limit_law_test(&short, &law).is_err());
        let mut with_zero = vec![1.0; 500];
        with_zero[7] = 0.0;
        assert!(matches!(
            limit_law_test(&with_zero, &law),
            Err(Error::Data(_))
        ));
        let degenerate = LimitLawSpec::new(StableIndex::new(1.5).unwrap(), 0.0).unwrap();
        assert!(limit_law_test(&vec![1.0; 500], &degenerate).is_err());
    }

    #[test]
    fn limit_law_spec_reports_its_scale() {
        let alpha = StableIndex::new(1.5).unwrap();
        let law = LimitLawSpec::new(alpha, 2.0).unwrap();
        assert_abs_diff_eq!(
            law.frechet_scale(),
            stable_tail_constant(alpha).powf(1.0 / 1.5) * 2.0,
            epsilon = 1e-15
        );
        assert!(LimitLawSpec::new(alpha, -1.0).is_err());
    }

    #[test]
    fn growth_fit_recovers_exact_power_laws() {
        let ladder = [10.0, 25.0, 50.0, 100.0];
        let medians: Vec<f64> = ladder.iter().map(|t: &f64| t.powf(0.7)).collect();
        let fit = growth_exponent_fit(&ladder, &medians).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.7, epsilon = 1e-12);

        let flat = vec![3.5; 4];
        let fit = growth_exponent_fit(&ladder, &flat).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn growth_fit_rejects_bad_input() {
        assert!(growth_exponent_fit(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).is_err());
        let ladder = [1.0, 2.0, 4.0, 8.0];
        assert!(growth_exponent_fit(&ladder, &[1.0, 2.0, 4.0]).is_err());
        assert!(growth_exponent_fit(&ladder, &[1.0, 2.0, -4.0, 8.0]).is_err());
    }
}
