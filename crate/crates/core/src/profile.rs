//! Deterministic initial profiles for the volatility and the price curve.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// `A·exp(1 − 1/(1 − u²))` for `|u| < 1` with `u = (x − c)/w`, zero outside.
pub fn bump(x: f64, center: f64, half_width: f64, amplitude: f64) -> f64 {
    let u = (x - center) / half_width;
    if u.abs() >= 1.0 {
        0.0
    } else {
        amplitude * (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Serializable description of a function on the half-line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Bump {
        center: f64,
        half_width: f64,
        amplitude: f64,
    },
    /// `A·sin(mπx/L)` on `[0, L]`, zero beyond.
    Sine {
        mode: u32,
        amplitude: f64,
        length: f64,
    },
}


impl ProfileSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ProfileSpec::Zero => 0.0,
            ProfileSpec::Constant { value } => value,
            ProfileSpec::Bump {
                center,
                half_width,
                amplitude,
            } => bump(x, center, half_width, amplitude),
            ProfileSpec::Sine {
                mode,
                amplitude,
                length,
            } => {
                if (0.0..=length).contains(&x) {
                    amplitude * (mode as f64 * PI * x / length).sin()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ProfileSpec::Zero)
            || matches!(self, ProfileSpec::Constant { value } if *value == 0.0)
    }
}

/// A profile that is either described by a [`ProfileSpec`] or supplied as a
/// closure.
#[derive(Clone)]
pub enum Profile {
    Spec(ProfileSpec),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Profile {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Spec(s) => s.eval(x),
            Profile::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Spec(s) if s.is_zero())
    }
}

impl From<ProfileSpec> for Profile {
    fn from(s: ProfileSpec) -> Self {
        Profile::Spec(s)
    }
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Spec(ProfileSpec::Zero)
    }
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Spec(s) => s.fmt(f),
            Profile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_compactly_supported_with_peak_at_center() {
        assert_eq!(bump(2.0, 1.0, 0.5, 3.0), 0.0);
        assert_eq!(bump(1.5, 1.0, 0.5, 3.0), 0.0);
        assert!((bump(1.0, 1.0, 0.5, 3.0) - 3.0).abs() < 1e-15);
        assert!(bump(1.2, 1.0, 0.5, 3.0) < 3.0);
    }

    #[test]
    fn sine_profile_vanishes_at_ends() {
        let s = ProfileSpec::Sine {
            mode: 1,
            amplitude: 2.0,
            length: 4.0,
        };
        assert!(s.eval(0.0).abs() < 1e-15);
        assert!(s.eval(4.0).abs() < 1e-14);
        assert!((s.eval(2.0) - 2.0).abs() < 1e-15);
        assert_eq!(s.eval(5.0), 0.0);
    }
}
