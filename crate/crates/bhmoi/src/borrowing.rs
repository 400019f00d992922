//! Mapping from within-cluster homogeneity (OBI) to the shape parameter of
//! the gamma prior on the cluster's precision.
//!
//! The map is `alpha = alpha_min + k(OBI) * (alpha_max - alpha_min)` with a
//! slope function `k` that stays in [0, 1] and rises with OBI, so tight
//! clusters borrow strongly and loose clusters barely at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slope function alternatives, from most damped to undamped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SlopeVariant {
    /// `OBI * exp(-5 (1 - OBI))`: borrowing kicks in only near full overlap.
    #[default]
    Aggressive5,
    /// `OBI * exp(-(1 - OBI))`: a milder damping.
    Moderate1,
    /// `OBI` itself.
    Linear,
}

/// Slope value `k(obi)` in [0, 1].
pub fn slope_k_alpha(obi: f64, variant: SlopeVariant) -> Result<f64> {
    if !obi.is_finite() || !(0.0..=1.0).contains(&obi) {
        return Err(Error::InvalidParameter(format!(
            "obi must lie in [0, 1], got {obi}"
        )));
    }
    Ok(match variant {
        SlopeVariant::Aggressive5 => obi * (-5.0 * (1.0 - obi)).exp(),
        SlopeVariant::Moderate1 => obi * (-(1.0 - obi)).exp(),
        SlopeVariant::Linear => obi,
    })
}

/// Gamma shape for a cluster's precision prior, interpolated between
/// `alpha_min` and `alpha_max` by the slope function.
pub fn borrowing_alpha(
    obi: f64,
    variant: SlopeVariant,
    alpha_min: f64,
    alpha_max: f64,
) -> Result<f64> {
    if !alpha_min.is_finite() || !alpha_max.is_finite() || alpha_min <= 0.0 || alpha_max < alpha_min
    {
        return Err(Error::InvalidParameter(format!(
            "need 0 < alpha_min <= alpha_max, got [{alpha_min}, {alpha_max}]"
        )));
    }
    let k = slope_k_alpha(obi, variant)?;
    Ok(alpha_min + k * (alpha_max - alpha_min))
}
