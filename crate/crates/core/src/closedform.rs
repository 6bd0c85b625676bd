//! Scalar formulas for the angular-bin model, where every user spans the
//! same `P` of `N` orthogonal directions and other-cell links are attenuated
//! by `alpha`.
//!
//! Everything depends on `P`, `K`, `N` and `rho` only through `rho N` and
//! `P/K`, so these functions take those two ratios directly.

use num_traits::Float;

use crate::{Error, Result};

/// Smallest `P/K` probed by the MMSE line search.
pub const DOF_FLOOR: f64 = 1024.0 * f64::EPSILON;
/// Largest `P/K` probed by the MMSE line search.
pub const DOF_CAP: f64 = 1e9;
/// Relative width at which the MMSE line search stops.
pub const BISECTION_TOLERANCE: f64 = 1e-6;

/// One operating point of the angular-bin model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleSystemPoint {
    /// `rho N`.
    pub effective_snr: f64,
    /// `P / K`.
    pub dof_per_user: f64,
    pub alpha: f64,
    pub cells: usize,
    /// MMSE regularizer.
    pub lambda: f64,
}

impl SimpleSystemPoint {
    /// Point with the default regularizer `lambda = 1 / (rho N)`.
    pub fn new(effective_snr: f64, dof_per_user: f64, alpha: f64, cells: usize) -> Result<Self> {
        Self::with_lambda(effective_snr, dof_per_user, alpha, cells, 1.0 / effective_snr)
    }

    pub fn with_lambda(
        effective_snr: f64,
        dof_per_user: f64,
        alpha: f64,
        cells: usize,
        lambda: f64,
    ) -> Result<Self> {
        if !(effective_snr > 0.0 && effective_snr.is_finite()) {
            return Err(Error::Config("effective SNR must be positive and finite"));
        }
        if !(dof_per_user > 0.0 && dof_per_user.is_finite()) {
            return Err(Error::Config("DoF per user must be positive and finite"));
        }
        check_alpha_cells(alpha, cells)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config("regularizer must be positive and finite"));
        }
        Ok(Self {
            effective_snr,
            dof_per_user,
            alpha,
            cells,
            lambda,
        })
    }

    pub fn with_dof(self, dof_per_user: f64) -> Result<Self> {
        Self::with_lambda(self.effective_snr, dof_per_user, self.alpha, self.cells, self.lambda)
    }

    /// `1 + alpha (L - 1)`.
    pub fn lbar(&self) -> f64 {
        lbar(self.alpha, self.cells)
    }

    /// `K / P`.
    pub fn users_per_dof(&self) -> f64 {
        1.0 / self.dof_per_user
    }
}

fn check_alpha_cells(alpha: f64, cells: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config("alpha must lie in [0, 1]"));
    }
    if cells == 0 {
        return Err(Error::Config("at least one cell is required"));
    }
    Ok(())
}

fn lbar(alpha: f64, cells: usize) -> f64 {
    1.0 + alpha * (cells as f64 - 1.0)
}

/// Matched-filter SINR with its three denominator terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfClosedForm {
    pub gamma: f64,
    /// `Lbar / (rho N)`.
    pub noise: f64,
    /// `(K/P) Lbar^2`.
    pub multiuser: f64,
    /// `alpha (Lbar - 1)`.
    pub contamination: f64,
}

pub fn gamma_mf_simple(point: &SimpleSystemPoint) -> MfClosedForm {
    let lb = point.lbar();
    let noise = lb / point.effective_snr;
    let multiuser = point.users_per_dof() * lb * lb;
    let contamination = point.alpha * (lb - 1.0);
    MfClosedForm {
        gamma: 1.0 / (noise + multiuser + contamination),
        noise,
        multiuser,
        contamination,
    }
}

pub fn rate_mf_simple(point: &SimpleSystemPoint) -> f64 {
    rate(gamma_mf_simple(point).gamma)
}

fn rate(gamma: f64) -> f64 {
    Float::log2(1.0 + gamma)
}

/// SINR ceiling set by pilot contamination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    Limited { gamma: f64, rate: f64 },
    /// No pilot contamination: the SINR grows without bound.
    Unlimited,
}

impl Saturation {
    pub fn limited(gamma: f64) -> Self {
        Saturation::Limited {
            gamma,
            rate: rate(gamma),
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Saturation::Limited { gamma, .. } => Some(gamma),
            Saturation::Unlimited => None,
        }
    }

    pub fn rate(&self) -> Option<f64> {
        match *self {
            Saturation::Limited { rate, .. } => Some(rate),
            Saturation::Unlimited => None,
        }
    }
}

/// `gamma_inf = 1 / (alpha (Lbar - 1))` and `log2(1 + gamma_inf)`.
pub fn gamma_rate_infinity(alpha: f64, cells: usize) -> Result<Saturation> {
    check_alpha_cells(alpha, cells)?;
    let leak = alpha * (lbar(alpha, cells) - 1.0);
    Ok(if leak > 0.0 {
        Saturation::limited(1.0 / leak)
    } else {
        Saturation::Unlimited
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    MatchedFilter,
    Mmse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofRequirement {
    /// Smallest `P/K` meeting the target.
    Required(f64),
    /// No `P/K` meets the target at this effective SNR.
    Infeasible,
    /// The ceiling is unbounded, so a fraction of it is not a target.
    Unbounded,
}

impl DofRequirement {
    pub fn value(&self) -> Option<f64> {
        match *self {
            DofRequirement::Required(v) => Some(v),
            _ => None,
        }
    }
}

/// Smallest `P/K` at which a detector reaches `eta R_inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassiveMimoCondition {
    pub eta: f64,
    pub receiver: Receiver,
    pub requirement: DofRequirement,
    pub rate_infinity: Saturation,
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config("eta must lie in (0, 1)"))
    }
}

/// Exact `P/K` at which the matched filter reaches `eta R_inf`.
pub fn dof_required_mf(
    eta: f64,
    effective_snr: f64,
    alpha: f64,
    cells: usize,
) -> Result<MassiveMimoCondition> {
    check_eta(eta)?;
    SimpleSystemPoint::new(effective_snr, 1.0, alpha, cells)?;
    let saturation = gamma_rate_infinity(alpha, cells)?;
    let requirement = match saturation {
        Saturation::Unlimited => DofRequirement::Unbounded,
        Saturation::Limited { gamma, .. } => {
            let lb = lbar(alpha, cells);
            let target = Float::powf(1.0 + gamma, eta) - 1.0;
            let bracket = 1.0 / (lb * lb * target)
                - 1.0 / (effective_snr * lb)
                - alpha * (lb - 1.0) / (lb * lb);
            if bracket > 0.0 {
                DofRequirement::Required(1.0 / bracket)
            } else {
                DofRequirement::Infeasible
            }
        }
    };
    Ok(MassiveMimoCondition {
        eta,
        receiver: Receiver::MatchedFilter,
        requirement,
        rate_infinity: saturation,
    })
}

/// MMSE SINR with the auxiliary quantities of its closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseClosedForm {
    pub gamma: f64,
    pub delta: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// `(Lbar / (rho N)) X`.
    pub noise: f64,
    /// `(K/P) Lbar^2 Y`.
    pub multiuser: f64,
    /// `alpha (Lbar - 1)`.
    pub contamination: f64,
}

/// Positive root of `q d^2 - (1 - b) d - 1 = 0`, evaluated without
/// cancellation on either side of `b = 1`.
fn mmse_delta(lambda: f64, lb: f64, kp: f64) -> f64 {
    let b = lambda * lb + kp * lb * lb;
    let q = lambda * lb + kp * (lb * lb - 1.0);
    let one_minus_b = 1.0 - b;
    let disc = Float::sqrt((1.0 + b) * (1.0 + b) - 4.0 * kp);
    if one_minus_b >= 0.0 {
        (one_minus_b + disc) / (2.0 * q)
    } else {
        2.0 / (disc - one_minus_b)
    }
}

pub fn gamma_mmse_simple(point: &SimpleSystemPoint) -> Result<MmseClosedForm> {
    let lb = point.lbar();
    let kp = point.users_per_dof();
    let lambda = point.lambda;
    let delta = mmse_delta(lambda, lb, kp);
    let z = lambda * lb * (1.0 + delta) + kp * (1.0 + (1.0 + delta) * (lb * lb - 1.0));
    let gap = z * z - kp;
    if !(gap > 0.0) {
        return Err(Error::ClosedFormSingular {
            z_squared: z * z,
            users_per_dof: kp,
        });
    }
    let a = point.alpha;
    let x = z * z / gap;
    let y = x + (1.0 + a * a * (point.cells as f64 - 1.0)) * (1.0 - 2.0 * z) / (lb * lb * gap);
    let noise = lb / point.effective_snr * x;
    let multiuser = kp * lb * lb * y;
    let contamination = a * (lb - 1.0);
    Ok(MmseClosedForm {
        gamma: 1.0 / (noise + multiuser + contamination),
        delta,
        x,
        y,
        z,
        noise,
        multiuser,
        contamination,
    })
}

pub fn rate_mmse_simple(point: &SimpleSystemPoint) -> Result<f64> {
    Ok(rate(gamma_mmse_simple(point)?.gamma))
}

/// Smallest `P/K` at which the MMSE rate reaches `target_rate`.
///
/// Line search over `P/K` in `[DOF_FLOOR, DOF_CAP]`: the upper end doubles
/// from 1 until the target is met, then bisection narrows the bracket to
/// [`BISECTION_TOLERANCE`] and the feasible end is returned.
pub fn dof_for_rate_mmse(
    target_rate: f64,
    effective_snr: f64,
    alpha: f64,
    cells: usize,
    lambda: f64,
) -> Result<DofRequirement> {
    if !(target_rate.is_finite()) {
        return Err(Error::Config("target rate must be finite"));
    }
    let base = SimpleSystemPoint::with_lambda(effective_snr, 1.0, alpha, cells, lambda)?;
    let meets = |dof: f64| -> Result<bool> {
        Ok(rate_mmse_simple(&base.with_dof(dof)?)? >= target_rate)
    };
    if meets(DOF_FLOOR)? {
        return Ok(DofRequirement::Required(DOF_FLOOR));
    }
    let mut lo = DOF_FLOOR;
    let mut hi = 1.0;
    while !meets(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > DOF_CAP {
            return Ok(DofRequirement::Infeasible);
        }
    }
    while hi - lo > BISECTION_TOLERANCE * hi {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DofRequirement::Required(hi))
}

/// Smallest `P/K` at which the MMSE detector reaches `eta R_inf`.
pub fn dof_required_mmse(
    eta: f64,
    effective_snr: f64,
    alpha: f64,
    cells: usize,
    lambda: f64,
) -> Result<MassiveMimoCondition> {
    check_eta(eta)?;
    let saturation = gamma_rate_infinity(alpha, cells)?;
    let requirement = match saturation {
        Saturation::Unlimited => {
            SimpleSystemPoint::with_lambda(effective_snr, 1.0, alpha, cells, lambda)?;
            DofRequirement::Unbounded
        }
        Saturation::Limited { rate, .. } => {
            dof_for_rate_mmse(eta * rate, effective_snr, alpha, cells, lambda)?
        }
    };
    Ok(MassiveMimoCondition {
        eta,
        receiver: Receiver::Mmse,
        requirement,
        rate_infinity: saturation,
    })
}
