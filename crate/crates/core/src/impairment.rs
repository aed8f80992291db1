//! Joint mobility impairment model.
//!
//! An impairment is a diagonal severity matrix `W` over the 8 human joints
//! (0 = healthy, 1 = motion fully discouraged) plus a slack half-width `zeta`.
//! From a healthy range of motion and the observed posture the impaired range
//! shrinks towards the initial posture proportionally to the severity:
//!
//! ```text
//!   dq_min = W * (min(q_init - zeta, q_seen_min) - q_min)
//!   dq_max = W * (q_max - max(q_init + zeta, q_seen_max))
//!   impaired = [q_min + dq_min, q_max - dq_max]
//! ```
//!
//! Online refinement replaces `q_seen_min`/`q_seen_max` with the running
//! extremes of the measured posture, so demonstrated mobility can only widen
//! the bounds, never shrink them below an earlier estimate.

use nalgebra::DVector;
use thiserror::Error;

/// Number of modelled human joints.
pub const HUMAN_JOINTS: usize = 8;

/// Default slack half-width around the initial posture, radians.
pub const DEFAULT_SLACK_RAD: f64 = 0.17;

/// Extra severity blended onto the wrist-deviation joint for every named
/// condition, reflecting how rarely that joint contributes useful handover
/// motion even in otherwise healthy arms.
pub const WRIST_SEVERITY_FACTOR: f64 = 0.15;

#[derive(Debug, Error)]
pub enum ImpairmentError {
    #[error("dimension mismatch: expected {HUMAN_JOINTS} joints, got {0}")]
    DimensionMismatch(usize),
    #[error("invalid bounds: lower exceeds upper at joint {0} (1-based)")]
    InvalidBounds(usize),
    #[error("severity entries must be finite and within [0, 1]")]
    InvalidSeverity,
    #[error("unknown condition label: {0}")]
    UnknownCondition(String),
}

/// Provenance of a range-of-motion estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RomProvenance {
    Healthy,
    Impaired,
    RefinedOnline,
}

/// Per-joint position bounds, radians, joint order matching the human chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RomBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub provenance: RomProvenance,
}

impl RomBounds {
    pub fn new(
        lower: DVector<f64>,
        upper: DVector<f64>,
        provenance: RomProvenance,
    ) -> Result<Self, ImpairmentError> {
        if lower.len() != HUMAN_JOINTS || upper.len() != HUMAN_JOINTS {
            return Err(ImpairmentError::DimensionMismatch(lower.len()));
        }
        for i in 0..HUMAN_JOINTS {
            if !(lower[i].is_finite() && upper[i].is_finite()) || lower[i] > upper[i] {
                return Err(ImpairmentError::InvalidBounds(i + 1));
            }
        }
        Ok(Self {
            lower,
            upper,
            provenance,
        })
    }

    pub fn contains(&self, q: &DVector<f64>) -> bool {
        (0..HUMAN_JOINTS).all(|i| q[i] >= self.lower[i] && q[i] <= self.upper[i])
    }

    /// True when `self` lies inside `outer` at every joint.
    pub fn within(&self, outer: &RomBounds) -> bool {
        (0..HUMAN_JOINTS)
            .all(|i| self.lower[i] >= outer.lower[i] - 1e-12 && self.upper[i] <= outer.upper[i] + 1e-12)
    }
}

/// Explicit replacement of the derived bounds for one joint (1-based index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOverride {
    pub joint: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Severity matrix, slack and optional verbatim bound replacements.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentProfile {
    pub label: String,
    /// Diagonal of `W`, entries in [0, 1].
    pub severity: DVector<f64>,
    /// Slack half-width around the initial posture, radians.
    pub slack: f64,
    /// Joints whose impaired bounds are pinned to measured clinical values
    /// instead of the severity-derived narrowing.
    pub overrides: Vec<BoundOverride>,
}

impl ImpairmentProfile {
    pub fn healthy() -> Self {
        Self {
            label: "healthy".into(),
            severity: DVector::zeros(HUMAN_JOINTS),
            slack: DEFAULT_SLACK_RAD,
            overrides: Vec::new(),
        }
    }

    pub fn custom(label: &str, severity: DVector<f64>, slack: f64) -> Result<Self, ImpairmentError> {
        if severity.len() != HUMAN_JOINTS {
            return Err(ImpairmentError::DimensionMismatch(severity.len()));
        }
        if severity.iter().any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0) {
            return Err(ImpairmentError::InvalidSeverity);
        }
        Ok(Self {
            label: label.into(),
            severity,
            slack,
            overrides: Vec::new(),
        })
    }
}

/// Builds the severity profile for a named condition.
///
/// * `ea` - elbow arthritis: elbow flexion (joint 5) fully damped.
/// * `sa` - shoulder arthritis: shoulder flexion (joint 3) fully damped.
/// * `wb` - wrist brace: both wrist joints (7, 8) fully damped.
/// * `mie` - mixed impairment, elbow-dominant: partial severities across the
///   sagittal joints plus clinically measured bound replacements.
/// * `mis` - mixed impairment, shoulder-dominant: the mirrored case.
/// * `healthy` / `none` - all zeros.
///
/// Every named condition also blends [`WRIST_SEVERITY_FACTOR`] onto the
/// wrist-deviation joint (clamped at 1); pass `wrist_factor = false` to
/// disable that.
pub fn severity_matrix_for_condition(
    label: &str,
    slack: f64,
    wrist_factor: bool,
) -> Result<ImpairmentProfile, ImpairmentError> {
    let mut severity = DVector::zeros(HUMAN_JOINTS);
    let mut overrides = Vec::new();
    let canonical = label.to_ascii_lowercase();
    match canonical.as_str() {
        "healthy" | "none" => {
            return Ok(ImpairmentProfile {
                label: canonical,
                severity,
                slack,
                overrides,
            })
        }
        "ea" => severity[4] = 1.0,
        "sa" => severity[2] = 1.0,
        "wb" => {
            severity[6] = 1.0;
            severity[7] = 1.0;
        }
        "mie" => {
            severity[2] = 0.3;
            severity[4] = 0.8;
            severity[6] = 0.4;
            overrides = vec![
                BoundOverride { joint: 3, lower: -2.7, upper: 1.8 },
                BoundOverride { joint: 5, lower: -1.9, upper: 0.02 },
                BoundOverride { joint: 8, lower: -0.2, upper: 0.2 },
            ];
        }
        "mis" => {
            severity[2] = 0.8;
            severity[4] = 0.3;
            severity[6] = 0.4;
            overrides = vec![
                BoundOverride { joint: 3, lower: -1.9, upper: 1.3 },
                BoundOverride { joint: 5, lower: -2.7, upper: 0.02 },
                BoundOverride { joint: 8, lower: -0.2, upper: 0.2 },
            ];
        }
        other => return Err(ImpairmentError::UnknownCondition(other.into())),
    }
    if wrist_factor {
        severity[7] = (severity[7] + WRIST_SEVERITY_FACTOR).min(1.0);
    }
    Ok(ImpairmentProfile {
        label: canonical,
        severity,
        slack,
        overrides,
    })
}

/// Diagnostics emitted while deriving impaired bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RomDiagnostics {
    /// Joints (1-based) whose inputs had to be clamped into the healthy range.
    pub clamped_inputs: Vec<usize>,
    /// Joints (1-based) whose interval degenerated and was recentred on the
    /// initial posture with half-width `slack`.
    pub degenerate: Vec<usize>,
}

/// Derives the impaired range of motion from the healthy one.
///
/// `q_seen_min`/`q_seen_max` are the per-joint extremes of the measured
/// posture so far; pass the current posture for both on the first call.
pub fn impaired_rom(
    healthy: &RomBounds,
    profile: &ImpairmentProfile,
    q_initial: &DVector<f64>,
    q_seen_min: &DVector<f64>,
    q_seen_max: &DVector<f64>,
) -> Result<(RomBounds, RomDiagnostics), ImpairmentError> {
    if q_initial.len() != HUMAN_JOINTS
        || q_seen_min.len() != HUMAN_JOINTS
        || q_seen_max.len() != HUMAN_JOINTS
    {
        return Err(ImpairmentError::DimensionMismatch(q_initial.len()));
    }
    if profile.severity.len() != HUMAN_JOINTS {
        return Err(ImpairmentError::DimensionMismatch(profile.severity.len()));
    }
    let mut diag = RomDiagnostics::default();
    let mut lower = DVector::zeros(HUMAN_JOINTS);
    let mut upper = DVector::zeros(HUMAN_JOINTS);
    for i in 0..HUMAN_JOINTS {
        let (h_lo, h_hi) = (healthy.lower[i], healthy.upper[i]);
        let mut init = q_initial[i];
        let mut seen_lo = q_seen_min[i];
        let mut seen_hi = q_seen_max[i];
        if init < h_lo || init > h_hi || seen_lo < h_lo || seen_hi > h_hi {
            diag.clamped_inputs.push(i + 1);
            init = init.clamp(h_lo, h_hi);
            seen_lo = seen_lo.clamp(h_lo, h_hi);
            seen_hi = seen_hi.clamp(h_lo, h_hi);
        }
        let w = profile.severity[i];
        // Shrink amounts are clamped at zero so a posture already at a
        // healthy limit cannot invert the interval.
        let d_min = (w * ((init - profile.slack).min(seen_lo) - h_lo)).max(0.0);
        let d_max = (w * (h_hi - (init + profile.slack).max(seen_hi))).max(0.0);
        let mut lo = h_lo + d_min;
        let mut hi = h_hi - d_max;
        if lo > hi {
            // Defensive: cannot occur for clamped inputs, but keep the
            // interval usable if it ever does.
            diag.degenerate.push(i + 1);
            lo = (init - profile.slack).max(h_lo);
            hi = (init + profile.slack).min(h_hi);
        }
        lower[i] = lo;
        upper[i] = hi;
    }
    for ov in &profile.overrides {
        if ov.joint == 0 || ov.joint > HUMAN_JOINTS {
            return Err(ImpairmentError::DimensionMismatch(ov.joint));
        }
        if !(ov.lower.is_finite() && ov.upper.is_finite()) || ov.lower > ov.upper {
            return Err(ImpairmentError::InvalidBounds(ov.joint));
        }
        lower[ov.joint - 1] = ov.lower;
        upper[ov.joint - 1] = ov.upper;
    }
    let bounds = RomBounds::new(lower, upper, RomProvenance::Impaired)?;
    Ok((bounds, diag))
}

/// Tick-by-tick refinement state: running extremes of the measured posture.
#[derive(Debug, Clone)]
pub struct RomRefiner {
    healthy: RomBounds,
    profile: ImpairmentProfile,
    q_initial: DVector<f64>,
    seen_min: DVector<f64>,
    seen_max: DVector<f64>,
}

impl RomRefiner {
    pub fn new(
        healthy: RomBounds,
        profile: ImpairmentProfile,
        q_initial: DVector<f64>,
    ) -> Result<Self, ImpairmentError> {
        if q_initial.len() != HUMAN_JOINTS {
            return Err(ImpairmentError::DimensionMismatch(q_initial.len()));
        }
        Ok(Self {
            healthy,
            profile,
            seen_min: q_initial.clone(),
            seen_max: q_initial.clone(),
            q_initial,
        })
    }

    /// Folds one measured posture into the running extremes.
    pub fn observe(&mut self, q_measured: &DVector<f64>) -> Result<(), ImpairmentError> {
        if q_measured.len() != HUMAN_JOINTS {
            return Err(ImpairmentError::DimensionMismatch(q_measured.len()));
        }
        for i in 0..HUMAN_JOINTS {
            self.seen_min[i] = self.seen_min[i].min(q_measured[i]);
            self.seen_max[i] = self.seen_max[i].max(q_measured[i]);
        }
        Ok(())
    }

    /// Impaired bounds given everything observed so far.
    pub fn current_bounds(&self) -> Result<(RomBounds, RomDiagnostics), ImpairmentError> {
        let (mut bounds, diag) = impaired_rom(
            &self.healthy,
            &self.profile,
            &self.q_initial,
            &self.seen_min,
            &self.seen_max,
        )?;
        bounds.provenance = RomProvenance::RefinedOnline;
        Ok((bounds, diag))
    }

    pub fn profile(&self) -> &ImpairmentProfile {
        &self.profile
    }

    pub fn healthy(&self) -> &RomBounds {
        &self.healthy
    }
}
