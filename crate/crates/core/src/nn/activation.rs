use alloc::string::ToString;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::math;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Swish,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z >= 0.0 {
                    z
                } else {
                    math::expm1(z)
                }
            }
            Activation::Swish => z * math::sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative at the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z >= 0.0 {
                    1.0
                } else {
                    math::exp(z)
                }
            }
            Activation::Swish => {
                let s = math::sigmoid(z);
                s + z * s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    /// Value and derivative together, sharing the exponential.
    #[inline]
    pub fn apply_with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Elu => {
                if z >= 0.0 {
                    (z, 1.0)
                } else {
                    let e = math::expm1(z);
                    (e, e + 1.0)
                }
            }
            Activation::Swish => {
                let s = math::sigmoid(z);
                (z * s, s + z * s * (1.0 - s))
            }
            Activation::Identity => (z, 1.0),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Swish => "swish",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "elu" => Ok(Activation::Elu),
            "swish" => Ok(Activation::Swish),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(alloc::format!(
                "unknown activation tag {:?}",
                other.to_string()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_zero() {
        assert_eq!(Activation::Elu.apply(0.0), 0.0);
        assert_eq!(Activation::Swish.apply(0.0), 0.0);
    }

    #[test]
    fn elu_negative_branch() {
        let expected = libm::exp(-1.0) - 1.0;
        assert!((Activation::Elu.apply(-1.0) - expected).abs() < 1e-15);
        assert!((Activation::Elu.apply(-1.0) + 0.632_121).abs() < 1e-6);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for act in [Activation::Elu, Activation::Swish, Activation::Identity] {
            for &z in &[-3.0, -0.7, -1e-3, 0.4, 2.5] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                assert!((fd - act.derivative(z)).abs() < 1e-8, "{act} at {z}");
            }
        }
    }

    #[test]
    fn fused_form_agrees() {
        for act in [Activation::Elu, Activation::Swish, Activation::Identity] {
            for &z in &[-5.0, -0.1, 0.0, 0.2, 7.0] {
                let (v, d) = act.apply_with_derivative(z);
                assert!((v - act.apply(z)).abs() < 1e-15);
                assert!((d - act.derivative(z)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unknown_tag_is_config_error() {
        assert!(matches!(
            "relu6".parse::<Activation>(),
            Err(Error::Config(_))
        ));
        assert_eq!("swish".parse::<Activation>(), Ok(Activation::Swish));
    }
}
