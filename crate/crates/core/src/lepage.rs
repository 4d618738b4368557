//! Series simulation of the stable field.
//!
//! A field sample on a lattice window is assembled per component as
//!
//!   X_t = kappa * ( sum_{j<=J} eps_j Gamma_j^(-1/alpha) f_t(V_j) + G_t ),
//!
//! with Gamma_j unit-rate Poisson arrivals, eps_j independent signs, V_j
//! drawn from the reference measure restricted to the effective support S0,
//! and kappa a calibrated normalization.  The trailing sum over j > J is not
//! dropped: its variance sum_{j>J} E Gamma_j^(-2/alpha) is finite, and G_t =
//! sum_k eta_k f_t(V'_k) with Gaussian eta_k reproduces its covariance
//! across lattice sites exactly.  Without this compensator the truncation
//! error decays like J^(1/2 - 1/alpha), hopelessly slow near alpha = 2.
//!
//! kappa is calibrated once per preparation: the same truncated series with
//! f replaced by the constant 1 on a unit-mass space has a known target
//! scale, and the empirical characteristic function of a calibration run
//! pins the raw scale of the truncation.  This folds the exact series
//! constant and the truncation geometry into one measured number.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::action::Action;
use crate::error::{Error, Result};
use crate::kernel::{KernelDescriptor, TBox};
use crate::lattice::LatticeSpec;
use crate::quad::{integrate_box, normal_density};
use crate::rng::{derive_stream, StreamKind};
use crate::stable::exp1;
use crate::stats::{ecf_cos, estimate_sas_scale};

/// Truncation target: the first omitted series term stays below this
/// fraction of the field scale.
const TRUNCATION_FRACTION: f64 = 0.05;
const MIN_TERMS: usize = 200;
const MAX_TERMS: usize = 20_000;
const MIN_CALIBRATION: usize = 10_000;
/// Mean number of compensator draws hitting a lattice site.
const DEFAULT_COMPENSATOR_HITS: f64 = 32.0;
const MAX_COMPENSATOR_TERMS: usize = 1_000_000;
/// |z| bound for the characteristic function test.
pub const CHAR_TEST_Z_LIMIT: f64 = 4.0;

/// User-facing simulation knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesParams {
    /// Series term budget; `None` derives it from the truncation target.
    pub terms: Option<usize>,
    pub compensator_hits: f64,
    pub calibration_replications: usize,
    pub tail_compensation: bool,
}

impl Default for SeriesParams {
    fn default() -> Self {
        SeriesParams {
            terms: None,
            compensator_hits: DEFAULT_COMPENSATOR_HITS,
            calibration_replications: 200_000,
            tail_compensation: true,
        }
    }
}

/// Sampling domain along one factor of S0.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportAxis {
    /// Lebesgue interval, sampled uniformly.
    Interval { lo: f64, hi: f64 },
    /// Standard normal restricted to [lo, hi]; infinities allowed.
    Gaussian { lo: f64, hi: f64 },
    TorusFull,
}

impl SupportAxis {
    fn mass(&self) -> f64 {
        match self {
            SupportAxis::Interval { lo, hi } => hi - lo,
            SupportAxis::Gaussian { lo, hi } => {
                let n = Normal::new(0.0, 1.0).unwrap();
                let top = if hi.is_infinite() { 1.0 } else { n.cdf(*hi) };
                let bot = if lo.is_infinite() { 0.0 } else { n.cdf(*lo) };
                top - bot
            }
            SupportAxis::TorusFull => 1.0,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            SupportAxis::Interval { lo, hi } => Ok(lo + (hi - lo) * rng.random::<f64>()),
            SupportAxis::TorusFull => Ok(rng.random::<f64>()),
            SupportAxis::Gaussian { lo, hi } => {
                for _ in 0..100_000 {
                    let z: f64 = rng.sample(StandardNormal);
                    if z >= *lo && z <= *hi {
                        return Ok(z);
                    }
                }
                Err(Error::Efficiency(format!(
                    "gaussian support slice [{lo}, {hi}] is too unlikely to sample by rejection"
                )))
            }
        }
    }

    /// Axis clipped to a finite quadrature range.
    fn quad_range(&self) -> (f64, f64) {
        match self {
            SupportAxis::Interval { lo, hi } => (*lo, *hi),
            SupportAxis::TorusFull => (0.0, 1.0),
            SupportAxis::Gaussian { lo, hi } => (lo.max(-9.0), hi.min(9.0)),
        }
    }

    fn is_gaussian(&self) -> bool {
        matches!(self, SupportAxis::Gaussian { .. })
    }
}

/// Effective support of one component.
#[derive(Debug, Clone)]
pub struct ComponentSupport {
    pub axes: Vec<SupportAxis>,
    /// Reference-measure mass of the support box.
    pub mass: f64,
    /// Compensator draws for this component.
    pub compensator_terms: usize,
}

/// Frozen simulation plan for one (kernel, lattice) pair.
#[derive(Debug, Clone)]
pub struct SeriesConfig {
    /// Explicit series terms per component.
    pub terms: usize,
    /// Calibrated normalization: kappa of a component is
    /// `normalization * mass^(1/alpha)`.
    pub normalization: f64,
    /// Standard deviation sqrt(sum_{j>terms} E Gamma_j^(-2/alpha)) of the
    /// compensated tail, before the kappa factor.
    pub tail_sd: f64,
    pub components: Vec<ComponentSupport>,
    /// Seed the calibration stream was derived from.
    pub seed: u64,
    pub calibration_replications: usize,
}

impl SeriesConfig {
    /// Replace the calibrated normalization; for sensitivity experiments.
    pub fn with_normalization(mut self, normalization: f64) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn kappa(&self, component: usize, alpha: f64) -> f64 {
        self.normalization * self.components[component].mass.powf(1.0 / alpha)
    }
}

/// Sum of E Gamma_j^(-p) over j > terms.
///
/// E Gamma_j^(-p) = Gamma(j - p) / Gamma(j), and the partial sums telescope:
/// the tail equals Gamma(terms + 1 - p) / ((p - 1) Gamma(terms)) exactly.
fn tail_second_moment(terms: usize, p: f64) -> f64 {
    let j = terms as f64;
    assert!(j > p && p > 1.0, "term budget too small for the tail moment");
    (ln_gamma(j + 1.0 - p) - ln_gamma(j)).exp() / (p - 1.0)
}

fn state_quadrature(
    kernel: &KernelDescriptor,
    component: usize,
    axes: &[SupportAxis],
    resolution: u32,
    cell_budget: usize,
    integrand: impl Fn(&KernelDescriptor, usize, &[f64]) -> f64,
) -> Result<f64> {
    let ranges: Vec<(f64, f64)> = axes.iter().map(|a| a.quad_range()).collect();
    let gaussian: Vec<bool> = axes.iter().map(|a| a.is_gaussian()).collect();
    integrate_box(&ranges, resolution, cell_budget, |s| {
        let mut v = integrand(kernel, component, s);
        if v != 0.0 {
            for (i, g) in gaussian.iter().enumerate() {
                if *g {
                    v *= normal_density(s[i]);
                }
            }
        }
        v
    })
}

/// alpha-norm of the kernel at t = 0: (sum_c int |f|^alpha dmu)^(1/alpha).
fn base_alpha_norm(
    kernel: &KernelDescriptor,
    supports: &[Vec<SupportAxis>],
    resolution: u32,
    cell_budget: usize,
) -> Result<f64> {
    let alpha = kernel.alpha().get();
    let origin = vec![0.0; kernel.index_dim()];
    let mut total = 0.0;
    for (c, axes) in supports.iter().enumerate() {
        total += state_quadrature(kernel, c, axes, resolution, cell_budget, |k, comp, s| {
            k.component_value(comp, &origin, s).abs().powf(alpha)
        })?;
    }
    Ok(total.powf(1.0 / alpha))
}

/// Upper bound on |f_t(V)| over the window and the support box.
fn field_value_bound(kernel: &KernelDescriptor, window_axes: &[(f64, f64)]) -> f64 {
    use crate::action::Factor;
    let alpha = kernel.alpha().get();
    let mut bound = 0.0f64;
    for comp in kernel.components() {
        let mut b = comp.base().max_abs();
        let mut log_w_max = 0.0f64;
        for (i, f) in comp.action().factors().iter().enumerate() {
            if *f != Factor::GaussianLine {
                continue;
            }
            let (dmin, dmax) = comp.action().displacement_range(i, window_axes);
            let (slo, shi) = match comp.base().profiles()[i].support() {
                Some((lo, hi)) => (lo - dmax, hi - dmin),
                None => (-9.0, 9.0),
            };
            // sup of -s d - d^2/2 over the (s, d) rectangle: the quadratic
            // in d peaks at d = -s, else at a corner.
            let mut m = 0.0f64;
            for s in [slo, shi] {
                for d in [dmin, dmax] {
                    m = m.max(-s * d - 0.5 * d * d);
                }
                if -s >= dmin && -s <= dmax {
                    m = m.max(0.5 * s * s);
                }
            }
            log_w_max += m;
        }
        b *= (log_w_max / alpha).exp();
        bound = bound.max(b);
    }
    bound
}

/// Smallest probability over window lattice sites that a support draw lands
/// in supp f_t, for one component.
fn min_hit_probability(
    kernel: &KernelDescriptor,
    component: usize,
    axes: &[SupportAxis],
    lattice: &LatticeSpec,
) -> f64 {
    use crate::action::Factor;
    let comp = &kernel.components()[component];
    let window = vec![(0.0, lattice.window()); lattice.dimension()];
    let mut p = 1.0;
    for (i, f) in comp.action().factors().iter().enumerate() {
        let axis_mass = axes[i].mass();
        let factor_p = match (f, comp.base().profiles()[i].support()) {
            (Factor::Torus, Some((lo, hi))) => (hi - lo).min(1.0),
            (Factor::Torus, None) => 1.0,
            (_, None) => 1.0,
            (Factor::Line, Some((lo, hi))) => ((hi - lo) / axis_mass).min(1.0),
            (Factor::GaussianLine, Some((lo, hi))) => {
                // Mass of the shifted support is unimodal in the
                // displacement, so the minimum sits at a displacement
                // extreme.
                let n = Normal::new(0.0, 1.0).unwrap();
                let (dmin, dmax) = comp.action().displacement_range(i, &window);
                let m = f64::min(
                    n.cdf(hi - dmin) - n.cdf(lo - dmin),
                    n.cdf(hi - dmax) - n.cdf(lo - dmax),
                );
                (m / axis_mass).min(1.0)
            }
        };
        p *= factor_p.max(0.0);
    }
    p
}

/// Freeze a simulation plan: effective supports, term budgets, tail
/// compensation and the calibrated normalization.
pub fn prepare_series(
    kernel: &KernelDescriptor,
    lattice: &LatticeSpec,
    params: &SeriesParams,
    seed: u64,
) -> Result<SeriesConfig> {
    if lattice.dimension() != kernel.index_dim() {
        return Err(Error::InvalidParameter(format!(
            "lattice dimension {} does not match kernel index dimension {}",
            lattice.dimension(),
            kernel.index_dim()
        )));
    }
    let alpha = kernel.alpha().get();
    let window_axes = vec![(0.0, lattice.window()); lattice.dimension()];

    let mut supports: Vec<Vec<SupportAxis>> = Vec::new();
    for (c, comp) in kernel.components().iter().enumerate() {
        use crate::action::Factor;
        let bounds = kernel.state_bounds(c, &window_axes);
        let axes: Vec<SupportAxis> = comp
            .action()
            .factors()
            .iter()
            .zip(&bounds)
            .map(|(f, b)| match (f, b) {
                (Factor::Torus, _) => SupportAxis::TorusFull,
                (Factor::Line, Some((lo, hi))) => SupportAxis::Interval { lo: *lo, hi: *hi },
                (Factor::GaussianLine, Some((lo, hi))) => {
                    SupportAxis::Gaussian { lo: *lo, hi: *hi }
                }
                (Factor::GaussianLine, None) => SupportAxis::Gaussian {
                    lo: f64::NEG_INFINITY,
                    hi: f64::INFINITY,
                },
                (Factor::Line, None) => unreachable!("line profiles are bounded"),
            })
            .collect();
        let mass: f64 = axes.iter().map(|a| a.mass()).product();
        if !(mass.is_finite() && mass > 1e-12) {
            return Err(Error::Config(format!(
                "component {c}: effective support has degenerate mass {mass}"
            )));
        }
        supports.push(axes);
    }

    // Term budget from the truncation target.
    let sigma_ref = base_alpha_norm(kernel, &supports, 16, crate::quad::DEFAULT_CELL_BUDGET)?;
    if !(sigma_ref.is_finite() && sigma_ref > 0.0) {
        return Err(Error::Config(format!(
            "kernel alpha-norm came out as {sigma_ref}; the base function is degenerate"
        )));
    }
    let bound = field_value_bound(kernel, &window_axes).max(1e-300);
    let min_terms = (2.0 / alpha).ceil() as usize + 8;
    let terms = match params.terms {
        Some(j) => {
            if j < min_terms {
                return Err(Error::Config(format!(
                    "series term budget {j} is below the minimum {min_terms} for alpha {alpha}"
                )));
            }
            j
        }
        None => {
            let needed = (bound / (TRUNCATION_FRACTION * sigma_ref)).powf(alpha);
            (needed.ceil() as usize).clamp(MIN_TERMS.max(min_terms), MAX_TERMS)
        }
    };

    let tail_sd = tail_second_moment(terms, 2.0 / alpha).sqrt();
    let compensate = params.tail_compensation && tail_sd * bound > 1e-4 * sigma_ref;

    let mut components = Vec::with_capacity(supports.len());
    for (c, axes) in supports.iter().enumerate() {
        let mass: f64 = axes.iter().map(|a| a.mass()).product();
        let compensator_terms = if compensate {
            let hits = params.compensator_hits.max(1.0);
            let p = min_hit_probability(kernel, c, axes, lattice).max(1e-12);
            let k = (hits / p).ceil() as usize;
            if k > MAX_COMPENSATOR_TERMS {
                return Err(Error::Resource(format!(
                    "component {c} needs {k} compensator draws, over the limit of \
                     {MAX_COMPENSATOR_TERMS}; shrink the window or disable tail compensation"
                )));
            }
            k.max(hits.ceil() as usize)
        } else {
            0
        };
        components.push(ComponentSupport {
            axes: axes.clone(),
            mass,
            compensator_terms,
        });
    }

    // Calibration: the same truncation applied to the constant kernel 1 on a
    // unit-mass space targets scale 1, so the reciprocal of the measured raw
    // scale is the normalization.
    let reps = params.calibration_replications.max(MIN_CALIBRATION);
    let mut rng = derive_stream(seed, StreamKind::Calibration, 0);
    let inv_alpha = 1.0 / alpha;
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut gamma = 0.0;
        let mut sum = 0.0;
        for _ in 0..terms {
            gamma += exp1(&mut rng);
            let magnitude = gamma.powf(-inv_alpha);
            sum += if rng.random::<bool>() { magnitude } else { -magnitude };
        }
        if compensate {
            let z: f64 = rng.sample(StandardNormal);
            sum += tail_sd * z;
        }
        samples.push(sum);
    }
    let raw_scale = estimate_sas_scale(&samples, alpha);
    if !(raw_scale.is_finite() && raw_scale > 0.0) {
        return Err(Error::Numeric(format!(
            "calibration produced a degenerate raw scale {raw_scale}"
        )));
    }

    Ok(SeriesConfig {
        terms,
        normalization: 1.0 / raw_scale,
        tail_sd: if compensate { tail_sd } else { 0.0 },
        components,
        seed,
        calibration_replications: reps,
    })
}

/// One simulated field on a lattice window.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub lattice: LatticeSpec,
    pub values: Vec<f64>,
    pub kernel_name: String,
    pub alpha: f64,
    pub seed: u64,
    pub replication: u64,
    pub terms: usize,
    pub compensator_terms: usize,
}

struct SiteAccumulator<'a> {
    values: &'a mut [f64],
    axis: Vec<f64>,
    strides: Vec<usize>,
    per_axis: usize,
    window: f64,
    inv_spacing: f64,
}

impl<'a> SiteAccumulator<'a> {
    fn new(values: &'a mut [f64], lattice: &LatticeSpec) -> Self {
        let per_axis = lattice.points_per_axis();
        let d = lattice.dimension();
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * per_axis;
        }
        SiteAccumulator {
            values,
            axis: lattice.axis_coords(),
            strides,
            per_axis,
            window: lattice.window(),
            inv_spacing: 1.0 / lattice.spacing(),
        }
    }

    /// Add coeff * f_t(V) to every lattice site in the support box.
    fn add_term(
        &mut self,
        kernel: &KernelDescriptor,
        component: usize,
        v: &[f64],
        coeff: f64,
        t_buf: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
    ) {
        let d = self.strides.len();
        let ranges: Vec<(usize, usize)> = match kernel.support_t_box(component, v) {
            TBox::Empty => return,
            TBox::Axes(axes) => axes
                .iter()
                .map(|a| match a {
                    None => (0usize, self.per_axis - 1),
                    Some((lo, hi)) => {
                        if *hi < 0.0 || *lo > self.window {
                            (1, 0) // empty
                        } else {
                            let lo_i = (lo.max(0.0) * self.inv_spacing).floor().max(0.0) as usize;
                            let hi_i = ((hi.min(self.window) * self.inv_spacing).ceil() as usize)
                                .min(self.per_axis - 1);
                            (lo_i.min(self.per_axis - 1), hi_i)
                        }
                    }
                })
                .collect(),
        };
        if ranges.iter().any(|(a, b)| a > b) {
            return;
        }
        t_buf.clear();
        t_buf.extend(ranges.iter().map(|(a, _)| self.axis[*a]));
        let mut idx: Vec<usize> = ranges.iter().map(|(a, _)| *a).collect();
        let mut lin: usize = idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
        loop {
            let val = kernel.component_value_into(component, t_buf, v, scratch);
            if val != 0.0 {
                self.values[lin] += coeff * val;
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if idx[k] < ranges[k].1 {
                    idx[k] += 1;
                    lin += self.strides[k];
                    t_buf[k] = self.axis[idx[k]];
                    break;
                }
                lin -= (idx[k] - ranges[k].0) * self.strides[k];
                idx[k] = ranges[k].0;
                t_buf[k] = self.axis[idx[k]];
            }
        }
    }
}

/// Simulate one replication of the field.  Deterministic in
/// (seed, replication); all draws come from a dedicated stream, so
/// replications can run in parallel and in any order.
pub fn simulate_field(
    kernel: &KernelDescriptor,
    lattice: &LatticeSpec,
    config: &SeriesConfig,
    seed: u64,
    replication: u64,
) -> Result<FieldSample> {
    if config.components.len() != kernel.components().len() {
        return Err(Error::InvalidParameter(
            "series plan was prepared for a different kernel".into(),
        ));
    }
    let count = lattice.point_count()?;
    if count.checked_mul(8).is_none() || count > 200_000_000 {
        return Err(Error::Resource(format!(
            "field of {count} lattice points will not fit in memory"
        )));
    }
    let alpha = kernel.alpha().get();
    let inv_alpha = 1.0 / alpha;
    let mut values = vec![0.0f64; count];
    let mut rng: ChaCha8Rng = derive_stream(seed, StreamKind::Replication, replication);
    let mut t_buf: Vec<f64> = Vec::new();
    let mut scratch: Vec<f64> = Vec::new();
    let mut acc = SiteAccumulator::new(&mut values, lattice);
    let mut v_buf: Vec<f64> = Vec::new();

    for (c, support) in config.components.iter().enumerate() {
        let kappa = config.kappa(c, alpha);
        let mut gamma = 0.0;
        for _ in 0..config.terms {
            gamma += exp1(&mut rng);
            let magnitude = gamma.powf(-inv_alpha);
            let signed = if rng.random::<bool>() { magnitude } else { -magnitude };
            v_buf.clear();
            for axis in &support.axes {
                v_buf.push(axis.sample(&mut rng)?);
            }
            acc.add_term(kernel, c, &v_buf, kappa * signed, &mut t_buf, &mut scratch);
        }
        if support.compensator_terms > 0 {
            let sd = kappa * config.tail_sd / (support.compensator_terms as f64).sqrt();
            for _ in 0..support.compensator_terms {
                let eta: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
                v_buf.clear();
                for axis in &support.axes {
                    v_buf.push(axis.sample(&mut rng)?);
                }
                acc.add_term(kernel, c, &v_buf, eta, &mut t_buf, &mut scratch);
            }
        }
    }

    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "field value at lattice point {bad} of replication {replication} is not finite"
        )));
    }
    Ok(FieldSample {
        lattice: lattice.clone(),
        values,
        kernel_name: kernel.name().to_string(),
        alpha,
        seed,
        replication,
        terms: config.terms,
        compensator_terms: config
            .components
            .iter()
            .map(|c| c.compensator_terms)
            .sum(),
    })
}

impl FieldSample {
    /// Plain-text serialization; round-trips bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("field-sample v1\n");
        out.push_str(&format!("kernel = {}\n", self.kernel_name));
        out.push_str(&format!("alpha = {:.16e}\n", self.alpha));
        out.push_str(&format!("dimension = {}\n", self.lattice.dimension()));
        out.push_str(&format!("level = {}\n", self.lattice.level()));
        out.push_str(&format!("window = {:.16e}\n", self.lattice.window()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("replication = {}\n", self.replication));
        out.push_str(&format!("terms = {}\n", self.terms));
        out.push_str(&format!("compensator_terms = {}\n", self.compensator_terms));
        out.push_str(&format!("values = {}\n", self.values.len()));
        for v in &self.values {
            out.push_str(&format!("{:.16e}\n", v));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<FieldSample> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "field-sample v1" {
            return Err(Error::Data(format!(
                "unrecognized field sample header '{header}'"
            )));
        }
        let mut kernel_name = String::new();
        let mut fields: std::collections::HashMap<String, String> = Default::default();
        let mut value_count: Option<usize> = None;
        for line in lines.by_ref() {
            let Some((key, val)) = line.split_once('=') else {
                return Err(Error::Data(format!("malformed field sample line '{line}'")));
            };
            let (key, val) = (key.trim(), val.trim());
            if key == "kernel" {
                kernel_name = val.to_string();
            } else if key == "values" {
                value_count = Some(val.parse().map_err(|_| {
                    Error::Data(format!("bad value count '{val}' in field sample"))
                })?);
                break;
            } else {
                fields.insert(key.to_string(), val.to_string());
            }
        }
        let get = |k: &str| -> Result<&String> {
            fields
                .get(k)
                .ok_or_else(|| Error::Data(format!("field sample misses key '{k}'")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Data(format!("bad number for '{k}' in field sample")))
        };
        let parse_u = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Data(format!("bad integer for '{k}' in field sample")))
        };
        let count =
            value_count.ok_or_else(|| Error::Data("field sample misses value count".into()))?;
        let mut values = Vec::with_capacity(count);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            values.push(line.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!("bad field value '{line}' in field sample"))
            })?);
        }
        if values.len() != count {
            return Err(Error::Data(format!(
                "field sample announces {count} values but carries {}",
                values.len()
            )));
        }
        let lattice = LatticeSpec::new(
            parse_u("dimension")? as usize,
            parse_u("level")? as u32,
            parse_f("window")?,
        )?;
        if lattice.point_count()? != count {
            return Err(Error::Data(format!(
                "lattice of {} points does not match {} stored values",
                lattice.point_count()?,
                count
            )));
        }
        Ok(FieldSample {
            lattice,
            values,
            kernel_name,
            alpha: parse_f("alpha")?,
            seed: parse_u("seed")?,
            replication: parse_u("replication")?,
            terms: parse_u("terms")? as usize,
            compensator_terms: parse_u("compensator_terms")? as usize,
        })
    }
}

/// Exact scale of sum_j c_j X_{t_j} by quadrature:
/// (sum_components int |sum_j c_j f_{t_j}(s)|^alpha dmu)^(1/alpha).
pub fn exact_scale(
    kernel: &KernelDescriptor,
    combo: &[(f64, Vec<f64>)],
    resolution: u32,
    cell_budget: usize,
) -> Result<f64> {
    if combo.is_empty() {
        return Err(Error::InvalidParameter(
            "linear combination needs at least one term".into(),
        ));
    }
    let d = kernel.index_dim();
    for (c, t) in combo {
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "combination coefficient {c} is not finite"
            )));
        }
        if t.len() != d {
            return Err(Error::InvalidParameter(format!(
                "combination index point has {} coordinates, kernel expects {d}",
                t.len()
            )));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "combination index point has a non-finite coordinate".into(),
            ));
        }
    }
    use crate::action::Factor;
    let alpha = kernel.alpha().get();
    let mut total = 0.0;
    for (c, comp) in kernel.components().iter().enumerate() {
        // Hull of the supports of the f_{t_j} along each factor.
        let axes: Vec<SupportAxis> = comp
            .action()
            .factors()
            .iter()
            .enumerate()
            .map(|(i, f)| match f {
                Factor::Torus => SupportAxis::TorusFull,
                _ => {
                    let make = |lo: f64, hi: f64| match f {
                        Factor::GaussianLine => SupportAxis::Gaussian { lo, hi },
                        _ => SupportAxis::Interval { lo, hi },
                    };
                    match comp.base().profiles()[i].support() {
                        None => make(-9.0, 9.0),
                        Some((lo, hi)) => {
                            let mut a = f64::INFINITY;
                            let mut b = f64::NEG_INFINITY;
                            for (_, t) in combo {
                                let delta = comp.action().displacement(t, i);
                                a = a.min(lo - delta);
                                b = b.max(hi - delta);
                            }
                            make(a, b)
                        }
                    }
                }
            })
            .collect();
        total += state_quadrature(kernel, c, &axes, resolution, cell_budget, |k, cc, s| {
            let mut v = 0.0;
            for (coeff, t) in combo {
                v += coeff * k.component_value(cc, t, s);
            }
            v.abs().powf(alpha)
        })?;
    }
    Ok(total.powf(1.0 / alpha))
}

/// One linear combination of lattice sites.
#[derive(Debug, Clone)]
pub struct ComboSpec {
    pub coefficients: Vec<f64>,
    /// Lexicographic lattice point indices.
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CharTestEntry {
    pub combo: usize,
    pub theta: f64,
    pub exact_scale: f64,
    pub empirical: f64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct CharTestReport {
    pub entries: Vec<CharTestEntry>,
    pub max_abs_z: f64,
    pub z_limit: f64,
    pub pass: bool,
}

/// Compare empirical and exact characteristic functions of lattice
/// combinations.
///
/// Replications are field value vectors over the lattice.  Each probe angle
/// is a multiple of the reciprocal exact scale of its combination, so one z
/// budget covers combos of very different size; for a combination with
/// exactly zero scale the angles are used as given and the expected value
/// is 1.
pub fn char_function_test(
    replications: &[Vec<f64>],
    lattice: &LatticeSpec,
    kernel: &KernelDescriptor,
    combos: &[ComboSpec],
    theta_factors: &[f64],
    resolution: u32,
    cell_budget: usize,
) -> Result<CharTestReport> {
    if replications.len() < 1000 {
        return Err(Error::Data(format!(
            "characteristic function comparison needs at least 1000 replications, got {}",
            replications.len()
        )));
    }
    let count = lattice.point_count()?;
    if let Some(pos) = replications.iter().position(|r| r.len() != count) {
        return Err(Error::Data(format!(
            "replication {pos} holds {} values for a lattice of {count} points",
            replications[pos].len()
        )));
    }
    if combos.is_empty() || theta_factors.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one combination and one probe angle".into(),
        ));
    }
    let alpha = kernel.alpha().get();
    let axis = lattice.axis_coords();
    let d = lattice.dimension();
    let mut entries = Vec::new();
    let mut max_abs_z = 0.0f64;
    for (ci, combo) in combos.iter().enumerate() {
        if combo.coefficients.len() != combo.sites.len() || combo.coefficients.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "combination {ci} pairs {} coefficients with {} sites",
                combo.coefficients.len(),
                combo.sites.len()
            )));
        }
        let mut pairs = Vec::with_capacity(combo.sites.len());
        let mut decoded = vec![0usize; d];
        for (&coeff, &site) in combo.coefficients.iter().zip(&combo.sites) {
            if site >= count {
                return Err(Error::InvalidParameter(format!(
                    "combination {ci} references lattice site {site}, lattice has {count}"
                )));
            }
            lattice.decode(site, &mut decoded);
            pairs.push((coeff, decoded.iter().map(|&k| axis[k]).collect::<Vec<f64>>()));
        }
        let sigma = exact_scale(kernel, &pairs, resolution, cell_budget)?;
        let projected: Vec<f64> = replications
            .iter()
            .map(|r| {
                combo
                    .coefficients
                    .iter()
                    .zip(&combo.sites)
                    .map(|(c, s)| c * r[*s])
                    .sum()
            })
            .collect();
        for &factor in theta_factors {
            let (theta, expected) = if sigma > 0.0 {
                (factor / sigma, (-factor.abs().powf(alpha)).exp())
            } else {
                (factor, 1.0)
            };
            let ecf = ecf_cos(&projected, theta);
            let z = if ecf.se > 0.0 {
                (ecf.mean - expected) / ecf.se
            } else if (ecf.mean - expected).abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            max_abs_z = max_abs_z.max(z.abs());
            entries.push(CharTestEntry {
                combo: ci,
                theta,
                exact_scale: sigma,
                empirical: ecf.mean,
                expected,
                z,
            });
        }
    }
    Ok(CharTestReport {
        entries,
        max_abs_z,
        z_limit: CHAR_TEST_Z_LIMIT,
        pass: max_abs_z <= CHAR_TEST_Z_LIMIT,
    })
}
