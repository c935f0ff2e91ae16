//! Closed-form sample sizes for semi-supervised learning with an unsupervised
//! loss budget, and the pairs-to-points conversion.
//!
//! Every size is the ceiling of a real-valued expression evaluated in double
//! precision. Expressions whose log argument is below [`VACUOUS_LOG_ARG`] are
//! still evaluated but flagged as being in the vacuous regime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log arguments below this are flagged as near the domain boundary.
pub const VACUOUS_LOG_ARG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub epsilon: f64,
    pub delta: f64,
    /// Bound on the unsupervised loss ψ.
    pub b1: f64,
    /// Bound on the supervised loss φ.
    pub b2: f64,
    pub pdim_psi: u64,
    pub pdim_phi: u64,
    /// Capacity term in the labeled-size side condition `n ≥ h/4`.
    pub h: u64,
    /// Unsupervised-loss budget; carried for reporting only.
    pub tau: f64,
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if !open01(self.epsilon) {
            return Err(Error::Domain(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !open01(self.delta) {
            return Err(Error::Domain(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        for (name, v) in [("b1", self.b1), ("b2", self.b2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("pdim_psi", self.pdim_psi),
            ("pdim_phi", self.pdim_phi),
            ("h", self.h),
        ] {
            if v == 0 {
                return Err(Error::Domain(format!("{name} must be at least 1")));
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::Domain(format!(
                "tau must be nonnegative, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    Thm2,
    Thm3,
}

impl Theorem {
    pub fn number(self) -> u8 {
        match self {
            Theorem::Thm2 => 2,
            Theorem::Thm3 => 3,
        }
    }
}

impl TryFrom<u8> for Theorem {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            2 => Ok(Theorem::Thm2),
            3 => Ok(Theorem::Thm3),
            other => Err(Error::invalid(format!(
                "theorem must be 2 or 3, got {other}"
            ))),
        }
    }
}

/// A real-valued size expression together with its smallest log argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeExpr {
    pub value: f64,
    pub log_arg: f64,
}

impl SizeExpr {
    pub fn ceil(&self) -> Result<u64> {
        to_size(self.value)
    }

    pub fn is_vacuous(&self) -> bool {
        self.log_arg < VACUOUS_LOG_ARG
    }
}

fn to_size(v: f64) -> Result<u64> {
    if !v.is_finite() || v >= u64::MAX as f64 {
        return Err(Error::Domain(format!(
            "sample size {v} does not fit in 64 bits"
        )));
    }
    Ok((v.ceil() as u64).max(1))
}

fn log_domain(arg: f64, what: &str) -> Result<()> {
    if arg <= 1.0 {
        return Err(Error::Domain(format!(
            "bound vacuous at this epsilon: {what} = {arg} must exceed 1"
        )));
    }
    Ok(())
}

/// `8B₁²/ε² [ln(16/δ) + 2·pdim_psi·ln(4B₁/ε) + 1]`.
pub fn unlabeled_expr_thm2(q: &BoundQuery) -> Result<SizeExpr> {
    q.validate()?;
    let arg = 4.0 * q.b1 / q.epsilon;
    log_domain(arg, "4*b1/epsilon")?;
    let lead = 8.0 * q.b1 * q.b1 / (q.epsilon * q.epsilon);
    let value = lead * ((16.0 / q.delta).ln() + 2.0 * q.pdim_psi as f64 * arg.ln() + 1.0);
    Ok(SizeExpr {
        value,
        log_arg: arg,
    })
}

/// `max(8B₂²/ε² [ln(8/δ) + 2·pdim_phi·ln(4B₂/ε) + 1], h/4)`.
pub fn labeled_expr_thm2(q: &BoundQuery) -> Result<SizeExpr> {
    q.validate()?;
    let arg = 4.0 * q.b2 / q.epsilon;
    log_domain(arg, "4*b2/epsilon")?;
    let lead = 8.0 * q.b2 * q.b2 / (q.epsilon * q.epsilon);
    let branch = lead * ((8.0 / q.delta).ln() + 2.0 * q.pdim_phi as f64 * arg.ln() + 1.0);
    Ok(SizeExpr {
        value: branch.max(q.h as f64 / 4.0),
        log_arg: arg,
    })
}

/// `2B₁²/ε² [ln(8/δ) + 2·pdim_psi·ln(2B₁/ε) + 2]`.
pub fn unlabeled_expr_thm3(q: &BoundQuery) -> Result<SizeExpr> {
    q.validate()?;
    let arg = 2.0 * q.b1 / q.epsilon;
    log_domain(arg, "2*b1/epsilon")?;
    let lead = 2.0 * q.b1 * q.b1 / (q.epsilon * q.epsilon);
    let value = lead * ((8.0 / q.delta).ln() + 2.0 * q.pdim_psi as f64 * arg.ln() + 2.0);
    Ok(SizeExpr {
        value,
        log_arg: arg,
    })
}

/// `C·(B₂²/ε)·(pdim_phi·ln(√B₂/ε) + ln(2/δ))` for a caller-supplied constant `C`.
pub fn labeled_expr_thm3(q: &BoundQuery, big_o_constant: f64) -> Result<SizeExpr> {
    q.validate()?;
    if !(big_o_constant > 0.0 && big_o_constant.is_finite()) {
        return Err(Error::invalid(format!(
            "big-O constant must be positive, got {big_o_constant}"
        )));
    }
    let arg = q.b2.sqrt() / q.epsilon;
    log_domain(arg, "sqrt(b2)/epsilon")?;
    let value = big_o_constant
        * (q.b2 * q.b2 / q.epsilon)
        * (q.pdim_phi as f64 * arg.ln() + (2.0 / q.delta).ln());
    Ok(SizeExpr {
        value,
        log_arg: arg,
    })
}

pub fn unlabeled_size_thm2(q: &BoundQuery) -> Result<u64> {
    unlabeled_expr_thm2(q)?.ceil()
}

pub fn labeled_size_thm2(q: &BoundQuery) -> Result<u64> {
    labeled_expr_thm2(q)?.ceil()
}

pub fn unlabeled_size_thm3(q: &BoundQuery) -> Result<u64> {
    unlabeled_expr_thm3(q)?.ceil()
}

pub fn labeled_size_thm3(q: &BoundQuery, big_o_constant: f64) -> Result<u64> {
    labeled_expr_thm3(q, big_o_constant)?.ceil()
}

/// Smallest `p` with `p² - 1 ≥ m_pairs`.
pub fn pairs_to_points(m_pairs: u64) -> u64 {
    let target = m_pairs as u128 + 1;
    let mut p = (target as f64).sqrt() as u128;
    while p * p < target {
        p += 1;
    }
    while p > 1 && (p - 1) * (p - 1) >= target {
        p -= 1;
    }
    p as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    #[serde(rename = "m")]
    pub m_unlabeled: u64,
    #[serde(rename = "n")]
    pub n_labeled: u64,
    pub theorem: u8,
    pub pairs_adjusted: bool,
    /// Unlabeled size before the pairs conversion.
    pub m_pairs: u64,
    pub m_raw: f64,
    pub n_raw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_o_constant: Option<f64>,
    pub flags: Vec<String>,
}

/// Both sizes for one theorem. Theorem 3's labeled size requires `big_o_constant`.
/// With `pairs_mode` the unlabeled size is converted from pairs to points.
pub fn evaluate(
    q: &BoundQuery,
    theorem: Theorem,
    big_o_constant: Option<f64>,
    pairs_mode: bool,
) -> Result<BoundResult> {
    let (m, n) = match theorem {
        Theorem::Thm2 => (unlabeled_expr_thm2(q)?, labeled_expr_thm2(q)?),
        Theorem::Thm3 => {
            let c = big_o_constant.ok_or_else(|| {
                Error::invalid("theorem 3 labeled size needs an explicit big-O constant; no default is correct")
            })?;
            (unlabeled_expr_thm3(q)?, labeled_expr_thm3(q, c)?)
        }
    };
    let mut flags = Vec::new();
    if m.is_vacuous() {
        flags.push("vacuous-regime:m".to_string());
    }
    if n.is_vacuous() {
        flags.push("vacuous-regime:n".to_string());
    }
    let m_pairs = m.ceil()?;
    let m_unlabeled = if pairs_mode {
        flags.push("pairs-adjusted".to_string());
        pairs_to_points(m_pairs)
    } else {
        m_pairs
    };
    Ok(BoundResult {
        m_unlabeled,
        n_labeled: n.ceil()?,
        theorem: theorem.number(),
        pairs_adjusted: pairs_mode,
        m_pairs,
        m_raw: m.value,
        n_raw: n.value,
        big_o_constant: match theorem {
            Theorem::Thm2 => None,
            Theorem::Thm3 => big_o_constant,
        },
        flags,
    })
}
