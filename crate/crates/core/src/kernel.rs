//! Kernel catalog.
//!
//! A kernel is a finite direct sum of components.  Each component couples a
//! flow on a factor-product state space with a base function f, and the
//! shifted family is
//!
//!   f_t(s) = c_t(s) * w_t(s)^(1/alpha) * f(phi_t(s)),
//!
//! where phi is the flow, w its Radon-Nikodym derivative and c the sign
//! cocycle.  Components live on disjoint copies of their state spaces, and
//! the field attached to the kernel is the independent sum over components.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::action::{Action, ActionDescriptor, Cocycle, Factor};
use crate::error::{Error, Result};
use crate::stable::StableIndex;

/// Scalar profile along one factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// 1 on the half-open interval [lo, hi).  Half-open so that midpoint
    /// quadrature counts exactly `resolution` cells per unit of length no
    /// matter where the endpoints fall.
    Indicator { lo: f64, hi: f64 },
    /// Tent of height 1 peaking at the midpoint of [lo, hi].
    Triangle { lo: f64, hi: f64 },
    /// Half sine arch: sin(pi (x - lo) / (hi - lo)) on [lo, hi].
    Sinusoid { lo: f64, hi: f64 },
    /// Piecewise constant on a uniform grid over [lo, hi), zero outside.
    Tabulated { lo: f64, hi: f64, values: Vec<f64> },
    /// Constant 1.  Only allowed on factors of finite measure.
    One,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Indicator { lo, hi } => {
                if x >= *lo && x < *hi {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Triangle { lo, hi } => {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                (1.0 - (x - mid).abs() / half).max(0.0)
            }
            Profile::Sinusoid { lo, hi } => {
                if x < *lo || x > *hi {
                    0.0
                } else {
                    (PI * (x - lo) / (hi - lo)).sin()
                }
            }
            Profile::Tabulated { lo, hi, values } => {
                if x < *lo || x >= *hi {
                    0.0
                } else {
                    let pos = (x - lo) / (hi - lo) * values.len() as f64;
                    values[(pos.floor() as usize).min(values.len() - 1)]
                }
            }
            Profile::One => 1.0,
        }
    }

    /// Closed support interval, or `None` when the profile never vanishes.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Profile::Indicator { lo, hi }
            | Profile::Triangle { lo, hi }
            | Profile::Sinusoid { lo, hi }
            | Profile::Tabulated { lo, hi, .. } => Some((*lo, *hi)),
            Profile::One => None,
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Profile::Tabulated { values, .. } => {
                values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            }
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Profile::Indicator { lo, hi }
            | Profile::Triangle { lo, hi }
            | Profile::Sinusoid { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidParameter(format!(
                        "profile support [{lo}, {hi}] must be a finite interval"
                    )));
                }
            }
            Profile::Tabulated { lo, hi, values } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidParameter(format!(
                        "profile support [{lo}, {hi}] must be a finite interval"
                    )));
                }
                if values.is_empty() {
                    return Err(Error::InvalidParameter(
                        "tabulated profile needs at least one value".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "tabulated profile has a non-finite value".into(),
                    ));
                }
                if values.iter().all(|v| *v == 0.0) {
                    return Err(Error::InvalidParameter(
                        "tabulated profile is identically zero".into(),
                    ));
                }
            }
            Profile::One => {}
        }
        Ok(())
    }
}

/// Base function: a scalar amplitude times a product of per-factor profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseFunction {
    amplitude: f64,
    profiles: Vec<Profile>,
}

impl BaseFunction {
    pub fn new(amplitude: f64, profiles: Vec<Profile>) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude != 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be finite and nonzero, got {amplitude}"
            )));
        }
        if profiles.is_empty() {
            return Err(Error::InvalidParameter(
                "base function needs at least one profile".into(),
            ));
        }
        for p in &profiles {
            p.validate()?;
        }
        Ok(BaseFunction {
            amplitude,
            profiles,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn eval(&self, coords: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for (p, &x) in self.profiles.iter().zip(coords) {
            v *= p.eval(x);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitude.abs() * self.profiles.iter().map(|p| p.max_abs()).product::<f64>()
    }
}

/// Hopf class of the flow generating a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopfLabel {
    Conservative,
    Dissipative,
}

impl fmt::Display for HopfLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopfLabel::Conservative => write!(f, "conservative"),
            HopfLabel::Dissipative => write!(f, "dissipative"),
        }
    }
}

/// Mixed-moving-average form of a dissipative component.  The mixing space
/// shipped with the catalog is a single atom; `mixing_mass` is its measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaFactorization {
    pub mixing_mass: f64,
}

/// One component: flow + base function, with optional analytic annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentKernel {
    action: ActionDescriptor,
    base: BaseFunction,
    label: Option<HopfLabel>,
    mma: Option<MmaFactorization>,
}

impl ComponentKernel {
    pub fn new(
        action: ActionDescriptor,
        base: BaseFunction,
        label: Option<HopfLabel>,
        mma: Option<MmaFactorization>,
    ) -> Result<Self> {
        let factors = action.factors();
        if base.profiles().len() != factors.len() {
            return Err(Error::InvalidParameter(format!(
                "{} profiles for {} factors",
                base.profiles().len(),
                factors.len()
            )));
        }
        for (i, (p, f)) in base.profiles().iter().zip(factors).enumerate() {
            match (p.support(), f) {
                (None, Factor::Line) => {
                    return Err(Error::InvalidParameter(format!(
                        "factor {i}: a constant profile on an infinite-measure line is not \
                         alpha-integrable"
                    )))
                }
                (Some((lo, hi)), Factor::Torus) => {
                    if lo < 0.0 || hi > 1.0 {
                        return Err(Error::InvalidParameter(format!(
                            "factor {i}: torus profile support [{lo}, {hi}] must sit inside [0, 1]"
                        )));
                    }
                }
                _ => {}
            }
            // Full support of the shifted family: a factor the flow never
            // moves must be covered by the profile alone.
            let moved = action.drive_row(i).iter().any(|&(_, c)| c != 0.0);
            if !moved && p.support().is_some() {
                let covers_torus = matches!(f, Factor::Torus)
                    && p.support() == Some((0.0, 1.0))
                    && p.max_abs() > 0.0;
                if !covers_torus {
                    return Err(Error::InvalidParameter(format!(
                        "factor {i} is fixed by the flow, so its profile must cover the whole \
                         factor for the family to have full support"
                    )));
                }
            }
        }
        if let (Some(m), Some(HopfLabel::Conservative)) = (&mma, &label) {
            let _ = m;
            return Err(Error::InvalidParameter(
                "a conservative component cannot carry a moving-average factorization".into(),
            ));
        }
        if let Some(m) = &mma {
            if !(m.mixing_mass.is_finite() && m.mixing_mass > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "mixing mass must be finite and positive, got {}",
                    m.mixing_mass
                )));
            }
        }
        Ok(ComponentKernel {
            action,
            base,
            label,
            mma,
        })
    }

    pub fn action(&self) -> &ActionDescriptor {
        &self.action
    }

    pub fn base(&self) -> &BaseFunction {
        &self.base
    }

    pub fn label(&self) -> Option<HopfLabel> {
        self.label
    }

    pub fn mma(&self) -> Option<&MmaFactorization> {
        self.mma.as_ref()
    }
}

/// A point of the disjoint-union state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePoint {
    pub component: usize,
    pub coords: Vec<f64>,
}

/// Per-axis index-space box, `None` meaning unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub enum TBox {
    /// f_t(s) vanishes for every t.
    Empty,
    Axes(Vec<Option<(f64, f64)>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDescriptor {
    name: String,
    alpha: StableIndex,
    components: Vec<ComponentKernel>,
}

impl KernelDescriptor {
    pub fn new(name: &str, alpha: StableIndex, components: Vec<ComponentKernel>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter(
                "kernel needs at least one component".into(),
            ));
        }
        let d = components[0].action.index_dim();
        if components.iter().any(|c| c.action.index_dim() != d) {
            return Err(Error::InvalidParameter(
                "all components must share the index dimension".into(),
            ));
        }
        Ok(KernelDescriptor {
            name: name.to_string(),
            alpha,
            components,
        })
    }

    /// Concatenate the components of several kernels over one index space.
    pub fn direct_sum(name: &str, parts: Vec<KernelDescriptor>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidParameter(
                "direct sum needs at least one part".into(),
            ));
        }
        let alpha = parts[0].alpha;
        if parts.iter().any(|p| p.alpha.get() != alpha.get()) {
            return Err(Error::InvalidParameter(
                "direct sum parts must share the stability index".into(),
            ));
        }
        let components = parts.into_iter().flat_map(|p| p.components).collect();
        KernelDescriptor::new(name, alpha, components)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn components(&self) -> &[ComponentKernel] {
        &self.components
    }

    pub fn index_dim(&self) -> usize {
        self.components[0].action.index_dim()
    }

    /// f_t at a state point of one component.  Hot path: no allocation when
    /// the scratch buffer is supplied.
    pub fn component_value_into(
        &self,
        component: usize,
        t: &[f64],
        s: &[f64],
        scratch: &mut Vec<f64>,
    ) -> f64 {
        let comp = &self.components[component];
        let action = &comp.action;
        let factors = action.factors();
        scratch.clear();
        for (i, f) in factors.iter().enumerate() {
            let moved = s[i] + action.displacement(t, i);
            scratch.push(match f {
                Factor::Torus => moved.rem_euclid(1.0),
                _ => moved,
            });
        }
        let f_val = comp.base.eval(scratch);
        if f_val == 0.0 {
            return 0.0;
        }
        let w = action.rn_derivative(t, s);
        let c = action.cocycle_sign(t, s);
        c * w.powf(1.0 / self.alpha.get()) * f_val
    }

    pub fn component_value(&self, component: usize, t: &[f64], s: &[f64]) -> f64 {
        let mut scratch = Vec::with_capacity(s.len());
        self.component_value_into(component, t, s, &mut scratch)
    }

    /// Checked evaluation of f_t at a tagged state point.
    pub fn evaluate(&self, t: &[f64], point: &StatePoint) -> Result<f64> {
        if point.component >= self.components.len() {
            return Err(Error::InvalidParameter(format!(
                "component {} out of range, kernel has {}",
                point.component,
                self.components.len()
            )));
        }
        let comp = &self.components[point.component];
        if t.len() != comp.action.index_dim() {
            return Err(Error::InvalidParameter(format!(
                "index vector has {} coordinates, flow expects {}",
                t.len(),
                comp.action.index_dim()
            )));
        }
        if point.coords.len() != comp.action.factors().len() {
            return Err(Error::InvalidParameter(format!(
                "state point has {} coordinates, space has {} factors",
                point.coords.len(),
                comp.action.factors().len()
            )));
        }
        let v = self.component_value(point.component, t, &point.coords);
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "kernel value is not finite at t = {:?}, component {} state {:?}",
                t, point.component, point.coords
            )));
        }
        Ok(v)
    }

    /// Over-approximate box of index vectors where f_t(s) can be nonzero.
    ///
    /// Derived from profile supports of line-type factors driven by a single
    /// index axis; multi-axis rows and torus factors contribute no
    /// constraint.  `Empty` is exact: the value vanishes for every t.
    pub fn support_t_box(&self, component: usize, s: &[f64]) -> TBox {
        let comp = &self.components[component];
        let action = &comp.action;
        let mut axes: Vec<Option<(f64, f64)>> = vec![None; action.index_dim()];
        for (i, f) in action.factors().iter().enumerate() {
            if *f == Factor::Torus {
                continue;
            }
            let Some((lo, hi)) = comp.base.profiles()[i].support() else {
                continue;
            };
            let row = action.drive_row(i);
            if row.len() != 1 || row[0].1 == 0.0 {
                continue;
            }
            let (axis, coeff) = row[0];
            let (mut a, mut b) = ((lo - s[i]) / coeff, (hi - s[i]) / coeff);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            let merged = match axes[axis] {
                None => (a, b),
                Some((c, d)) => (c.max(a), d.min(b)),
            };
            if merged.0 > merged.1 {
                return TBox::Empty;
            }
            axes[axis] = Some(merged);
        }
        TBox::Axes(axes)
    }

    /// Per-factor bounds on the states where some t in the window makes
    /// f_t nonzero; `None` marks an unbounded factor.
    pub fn state_bounds(
        &self,
        component: usize,
        window_axes: &[(f64, f64)],
    ) -> Vec<Option<(f64, f64)>> {
        let comp = &self.components[component];
        comp.action
            .factors()
            .iter()
            .enumerate()
            .map(|(i, f)| match f {
                Factor::Torus => Some((0.0, 1.0)),
                _ => comp.base.profiles()[i].support().map(|(lo, hi)| {
                    let (dmin, dmax) = comp.action.displacement_range(i, window_axes);
                    (lo - dmax, hi - dmin)
                }),
            })
            .collect()
    }
}

/// Families available from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Translation,
    TorusRotation,
    GaussianTranslation,
    Product,
}

impl FromStr for FamilyKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "translation" => Ok(FamilyKind::Translation),
            "torus_rotation" => Ok(FamilyKind::TorusRotation),
            "gaussian_translation" => Ok(FamilyKind::GaussianTranslation),
            "product" => Ok(FamilyKind::Product),
            other => Err(format!(
                "unknown kernel family '{other}' (expected translation, torus_rotation, \
                 gaussian_translation or product)"
            )),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FamilyKind::Translation => "translation",
            FamilyKind::TorusRotation => "torus_rotation",
            FamilyKind::GaussianTranslation => "gaussian_translation",
            FamilyKind::Product => "product",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Indicator,
    Triangle,
    Sinusoid,
    Tabulated,
}

impl FromStr for BaseKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "indicator" => Ok(BaseKind::Indicator),
            "triangle" => Ok(BaseKind::Triangle),
            "sinusoid" => Ok(BaseKind::Sinusoid),
            "tabulated" => Ok(BaseKind::Tabulated),
            other => Err(format!(
                "unknown base function '{other}' (expected indicator, triangle, sinusoid or \
                 tabulated)"
            )),
        }
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BaseKind::Indicator => "indicator",
            BaseKind::Triangle => "triangle",
            BaseKind::Sinusoid => "sinusoid",
            BaseKind::Tabulated => "tabulated",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CocycleKind {
    Trivial,
    Alternating,
}

impl FromStr for CocycleKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "trivial" => Ok(CocycleKind::Trivial),
            "alternating" => Ok(CocycleKind::Alternating),
            other => Err(format!(
                "unknown cocycle '{other}' (expected trivial or alternating)"
            )),
        }
    }
}

impl fmt::Display for CocycleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CocycleKind::Trivial => write!(f, "trivial"),
            CocycleKind::Alternating => write!(f, "alternating"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Line,
    Torus,
    Gaussian,
}

impl FromStr for FactorKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "line" => Ok(FactorKind::Line),
            "torus" => Ok(FactorKind::Torus),
            "gaussian" => Ok(FactorKind::Gaussian),
            other => Err(format!(
                "unknown factor '{other}' (expected line, torus or gaussian)"
            )),
        }
    }
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorKind::Line => write!(f, "line"),
            FactorKind::Torus => write!(f, "torus"),
            FactorKind::Gaussian => write!(f, "gaussian"),
        }
    }
}

/// Parameters from which the built-in catalog builds a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub family: FamilyKind,
    pub alpha: f64,
    pub dimension: usize,
    pub base: BaseKind,
    /// Support interval of the base profile on each line-type factor.
    pub support: (f64, f64),
    pub tabulated: Vec<f64>,
    pub cocycle: CocycleKind,
    pub amplitude: f64,
    /// Rotation speed of torus factors.
    pub speed: f64,
    /// Factor list of the product family, one per index axis.
    pub factors: Vec<FactorKind>,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            family: FamilyKind::Translation,
            alpha: 1.5,
            dimension: 1,
            base: BaseKind::Indicator,
            support: (0.0, 1.0),
            tabulated: Vec::new(),
            cocycle: CocycleKind::Trivial,
            amplitude: 1.0,
            speed: std::f64::consts::FRAC_1_SQRT_2,
            factors: Vec::new(),
        }
    }
}

fn line_profile(params: &KernelParams) -> Result<Profile> {
    let (lo, hi) = params.support;
    Ok(match params.base {
        BaseKind::Indicator => Profile::Indicator { lo, hi },
        BaseKind::Triangle => Profile::Triangle { lo, hi },
        BaseKind::Sinusoid => Profile::Sinusoid { lo, hi },
        BaseKind::Tabulated => Profile::Tabulated {
            lo,
            hi,
            values: params.tabulated.clone(),
        },
    })
}

fn torus_profile(params: &KernelParams) -> Result<Profile> {
    // The default indicator over [0, 1] covers the whole circle; keep it as
    // the constant to make the full-support property explicit.
    if params.base == BaseKind::Indicator && params.support == (0.0, 1.0) {
        return Ok(Profile::One);
    }
    line_profile(params)
}

/// Build a kernel from the built-in catalog.
///
/// Labels are attached from the structure of the flow: translation-type
/// families wander off to infinity and are dissipative; any torus factor
/// makes the flow recurrent and the component conservative.  A
/// moving-average factorization is attached exactly when every factor is a
/// Lebesgue line.
pub fn builtin_kernel(params: &KernelParams) -> Result<KernelDescriptor> {
    let alpha = StableIndex::new(params.alpha)?;
    let d = params.dimension;
    if d == 0 {
        return Err(Error::InvalidParameter(
            "kernel dimension must be at least 1".into(),
        ));
    }
    if !(params.speed.is_finite() && params.speed != 0.0) {
        return Err(Error::InvalidParameter(format!(
            "rotation speed must be finite and nonzero, got {}",
            params.speed
        )));
    }
    let factor_kinds: Vec<FactorKind> = match params.family {
        FamilyKind::Translation => vec![FactorKind::Line; d],
        FamilyKind::TorusRotation => vec![FactorKind::Torus; d],
        FamilyKind::GaussianTranslation => vec![FactorKind::Gaussian; d],
        FamilyKind::Product => {
            if params.factors.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "product family lists {} factors for dimension {d}",
                    params.factors.len()
                )));
            }
            params.factors.clone()
        }
    };

    let mut factors = Vec::with_capacity(d);
    let mut drive = Vec::with_capacity(d);
    let mut profiles = Vec::with_capacity(d);
    for (i, kind) in factor_kinds.iter().enumerate() {
        match kind {
            FactorKind::Line => {
                factors.push(Factor::Line);
                drive.push(vec![(i, 1.0)]);
                profiles.push(line_profile(params)?);
            }
            FactorKind::Gaussian => {
                factors.push(Factor::GaussianLine);
                drive.push(vec![(i, 1.0)]);
                profiles.push(line_profile(params)?);
            }
            FactorKind::Torus => {
                factors.push(Factor::Torus);
                drive.push(vec![(i, params.speed)]);
                profiles.push(torus_profile(params)?);
            }
        }
    }

    let cocycle = match params.cocycle {
        CocycleKind::Trivial => Cocycle::Trivial,
        CocycleKind::Alternating => {
            let factor = factor_kinds
                .iter()
                .position(|k| *k != FactorKind::Torus)
                .ok_or_else(|| {
                    Error::InvalidParameter(
                        "alternating cocycle needs a line-type factor".into(),
                    )
                })?;
            Cocycle::AlternatingFloor { factor }
        }
    };

    let conservative = factor_kinds.iter().any(|k| *k == FactorKind::Torus);
    let label = if conservative {
        HopfLabel::Conservative
    } else {
        HopfLabel::Dissipative
    };
    let all_lebesgue_lines = factor_kinds.iter().all(|k| *k == FactorKind::Line);
    let mma = if all_lebesgue_lines {
        Some(MmaFactorization { mixing_mass: 1.0 })
    } else {
        None
    };

    let action = ActionDescriptor::new(d, factors, drive, cocycle)?;
    let base = BaseFunction::new(params.amplitude, profiles)?;
    let component = ComponentKernel::new(action, base, Some(label), mma)?;
    let name = format!("{}/d{}/{}", params.family, d, params.base);
    KernelDescriptor::new(&name, alpha, vec![component])
}
