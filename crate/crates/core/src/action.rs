//! Nonsingular group actions on products of one-dimensional factors.
//!
//! An action descriptor fixes a state space S = F_1 x ... x F_m together
//! with a flow indexed by t in R^d.  Each index vector moves factor i by the
//! displacement delta_i(t) = sum over (axis, coeff) of coeff * t[axis];
//! torus factors wrap modulo 1.  The flow preserves Lebesgue factors and is
//! nonsingular on Gaussian factors, where the Radon-Nikodym derivative of
//! the pushed-forward measure is exp(-s delta - delta^2 / 2) per factor.

use rand::Rng;

use crate::error::{Error, Result};

/// One-dimensional factor of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    /// Real line carrying Lebesgue measure; translations preserve it.
    Line,
    /// Real line carrying the standard Gaussian measure; translations are
    /// nonsingular but not measure preserving.
    GaussianLine,
    /// Circle [0, 1) carrying Lebesgue measure; rotations preserve it.
    Torus,
}

/// Optional sign cocycle attached to a flow.
#[derive(Debug, Clone, PartialEq)]
pub enum Cocycle {
    /// Identically +1.
    Trivial,
    /// c_t(s) = (-1)^(floor(s_i + delta_i) - floor(s_i)) on one
    /// translation-driven line factor: the sign flips each time the orbit
    /// crosses an integer.
    AlternatingFloor { factor: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDescriptor {
    index_dim: usize,
    factors: Vec<Factor>,
    /// Row i lists (index axis, coefficient) pairs driving factor i.
    drive: Vec<Vec<(usize, f64)>>,
    cocycle: Cocycle,
}

impl ActionDescriptor {
    pub fn new(
        index_dim: usize,
        factors: Vec<Factor>,
        drive: Vec<Vec<(usize, f64)>>,
        cocycle: Cocycle,
    ) -> Result<Self> {
        if index_dim == 0 {
            return Err(Error::InvalidParameter(
                "index dimension must be at least 1".into(),
            ));
        }
        if factors.is_empty() {
            return Err(Error::InvalidParameter(
                "state space needs at least one factor".into(),
            ));
        }
        if drive.len() != factors.len() {
            return Err(Error::InvalidParameter(format!(
                "drive has {} rows for {} factors",
                drive.len(),
                factors.len()
            )));
        }
        for (i, row) in drive.iter().enumerate() {
            for &(axis, coeff) in row {
                if axis >= index_dim {
                    return Err(Error::InvalidParameter(format!(
                        "drive row {i} references index axis {axis}, dimension is {index_dim}"
                    )));
                }
                if !coeff.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "drive row {i} has non-finite coefficient {coeff}"
                    )));
                }
            }
        }
        if let Cocycle::AlternatingFloor { factor } = cocycle {
            match factors.get(factor) {
                Some(Factor::Line) | Some(Factor::GaussianLine) => {}
                Some(Factor::Torus) => {
                    return Err(Error::InvalidParameter(format!(
                        "alternating cocycle needs a line factor, factor {factor} is a torus"
                    )))
                }
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "alternating cocycle references factor {factor}, only {} exist",
                        factors.len()
                    )))
                }
            }
        }
        Ok(ActionDescriptor {
            index_dim,
            factors,
            drive,
            cocycle,
        })
    }

    pub fn displacement(&self, t: &[f64], factor: usize) -> f64 {
        self.drive[factor]
            .iter()
            .map(|&(axis, coeff)| coeff * t[axis])
            .sum()
    }

    /// Largest and smallest displacement of a factor over a box of index
    /// vectors given as per-axis intervals.
    pub fn displacement_range(&self, factor: usize, box_axes: &[(f64, f64)]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for &(axis, coeff) in &self.drive[factor] {
            let (a, b) = box_axes[axis];
            let (x, y) = (coeff * a, coeff * b);
            lo += x.min(y);
            hi += x.max(y);
        }
        (lo, hi)
    }

    /// Drive row of a factor.
    pub fn drive_row(&self, factor: usize) -> &[(usize, f64)] {
        &self.drive[factor]
    }
}

/// Behavior the identity checker needs.  Tests wrap a descriptor to inject
/// deliberate defects; everything else uses `ActionDescriptor` directly.
pub trait Action {
    fn index_dim(&self) -> usize;
    fn factors(&self) -> &[Factor];
    fn transform(&self, t: &[f64], s: &[f64]) -> Vec<f64>;
    /// Radon-Nikodym derivative d(mu compose phi_t)/d mu at s.
    fn rn_derivative(&self, t: &[f64], s: &[f64]) -> f64;
    /// The +-1 cocycle value c_t(s).
    fn cocycle_sign(&self, t: &[f64], s: &[f64]) -> f64;
}

impl Action for ActionDescriptor {
    fn index_dim(&self) -> usize {
        self.index_dim
    }

    fn factors(&self) -> &[Factor] {
        &self.factors
    }

    fn transform(&self, t: &[f64], s: &[f64]) -> Vec<f64> {
        debug_assert_eq!(t.len(), self.index_dim);
        debug_assert_eq!(s.len(), self.factors.len());
        self.factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let moved = s[i] + self.displacement(t, i);
                match f {
                    Factor::Torus => moved.rem_euclid(1.0),
                    _ => moved,
                }
            })
            .collect()
    }

    fn rn_derivative(&self, t: &[f64], s: &[f64]) -> f64 {
        let mut log_w = 0.0;
        for (i, f) in self.factors.iter().enumerate() {
            if *f == Factor::GaussianLine {
                let d = self.displacement(t, i);
                log_w -= s[i] * d + 0.5 * d * d;
            }
        }
        log_w.exp()
    }

    fn cocycle_sign(&self, t: &[f64], s: &[f64]) -> f64 {
        match self.cocycle {
            Cocycle::Trivial => 1.0,
            Cocycle::AlternatingFloor { factor } => {
                let d = self.displacement(t, factor);
                let crossings = (s[factor] + d).floor() - s[factor].floor();
                if (crossings as i64) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// One random triple at which an identity failed.
#[derive(Debug, Clone)]
pub struct IdentityViolation {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub group_dev: f64,
    pub rn_dev: f64,
    pub cocycle_dev: f64,
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub trials: usize,
    pub max_group_dev: f64,
    pub max_rn_dev: f64,
    pub max_cocycle_dev: f64,
    pub tolerance: f64,
    pub violations: Vec<IdentityViolation>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn factor_deviation(factor: Factor, a: f64, b: f64) -> f64 {
    match factor {
        Factor::Torus => {
            let d = (a - b).rem_euclid(1.0);
            d.min(1.0 - d)
        }
        _ => (a - b).abs() / 1f64.max(a.abs()).max(b.abs()),
    }
}

/// Check the flow, derivative and sign identities on random triples
/// (u, v, s):
///
///   phi_{u+v}(s)      = phi_u(phi_v(s))
///   w_{u+v}(s)        = w_v(s) * w_u(phi_v(s))
///   c_{u+v}(s)        = c_v(s) * c_u(phi_v(s))
///
/// Deviations are relative (circle distance on torus factors) and compared
/// against `IDENTITY_TOLERANCE`.
pub fn check_action_identities<A: Action, R: Rng + ?Sized>(
    action: &A,
    trials: usize,
    rng: &mut R,
) -> IdentityReport {
    let d = action.index_dim();
    let factors = action.factors().to_vec();
    let mut report = IdentityReport {
        trials,
        max_group_dev: 0.0,
        max_rn_dev: 0.0,
        max_cocycle_dev: 0.0,
        tolerance: IDENTITY_TOLERANCE,
        violations: Vec::new(),
    };
    for _ in 0..trials {
        let draw_index = |rng: &mut R| -> Vec<f64> {
            (0..d).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect()
        };
        let u = draw_index(rng);
        let v = draw_index(rng);
        let s: Vec<f64> = factors
            .iter()
            .map(|f| match f {
                Factor::Line => 10.0 * rng.random::<f64>() - 5.0,
                Factor::GaussianLine => 6.0 * rng.random::<f64>() - 3.0,
                Factor::Torus => rng.random::<f64>(),
            })
            .collect();
        let uv: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();

        let direct = action.transform(&uv, &s);
        let via_v = action.transform(&v, &s);
        let composed = action.transform(&u, &via_v);
        let group_dev = factors
            .iter()
            .enumerate()
            .map(|(i, f)| factor_deviation(*f, direct[i], composed[i]))
            .fold(0.0, f64::max);

        let w_direct = action.rn_derivative(&uv, &s);
        let w_chain = action.rn_derivative(&v, &s) * action.rn_derivative(&u, &via_v);
        let rn_dev = (w_direct - w_chain).abs() / w_direct.abs().max(w_chain.abs()).max(1e-300);

        let c_direct = action.cocycle_sign(&uv, &s);
        let c_chain = action.cocycle_sign(&v, &s) * action.cocycle_sign(&u, &via_v);
        let cocycle_dev = 0.5 * (c_direct - c_chain).abs();

        report.max_group_dev = report.max_group_dev.max(group_dev);
        report.max_rn_dev = report.max_rn_dev.max(rn_dev);
        report.max_cocycle_dev = report.max_cocycle_dev.max(cocycle_dev);
        if group_dev > IDENTITY_TOLERANCE
            || rn_dev > IDENTITY_TOLERANCE
            || cocycle_dev > IDENTITY_TOLERANCE
        {
            report.violations.push(IdentityViolation {
                u,
                v,
                s,
                group_dev,
                rn_dev,
                cocycle_dev,
            });
        }
    }
    report
}
