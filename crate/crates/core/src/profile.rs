//! Closed-form scalar profiles `f: R → R` with exact derivatives.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

/// A scalar function of `t` from one of a few closed-form families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalarProfile {
    /// `Σ coeffs[i] tⁱ`
    Polynomial { coeffs: Vec<f64> },
    /// `amplitude · sin(frequency · t + phase)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// `amplitude · exp(rate · t)`
    Exponential { amplitude: f64, rate: f64 },
}

impl ScalarProfile {
    pub fn sin() -> Self {
        ScalarProfile::Sinusoid {
            amplitude: 1.0,
            frequency: 1.0,
            phase: 0.0,
        }
    }

    pub fn polynomial(coeffs: &[f64]) -> Self {
        ScalarProfile::Polynomial {
            coeffs: coeffs.to_vec(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(t, 0)
    }

    /// The `k`-th derivative at `t`.
    pub fn derivative(&self, t: f64, k: u32) -> f64 {
        match self {
            ScalarProfile::Polynomial { coeffs } => {
                let k = k as usize;
                if k >= coeffs.len() {
                    return 0.0;
                }
                let mut acc = 0.0;
                for i in (k..coeffs.len()).rev() {
                    let falling: f64 = ((i - k + 1)..=i).map(|x| x as f64).product();
                    acc = acc * t + coeffs[i] * falling;
                }
                acc
            }
            ScalarProfile::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                let arg = frequency * t + phase;
                let base = match k % 4 {
                    0 => arg.sin(),
                    1 => arg.cos(),
                    2 => -arg.sin(),
                    _ => -arg.cos(),
                };
                amplitude * frequency.powi(k as i32) * base
            }
            ScalarProfile::Exponential { amplitude, rate } => {
                amplitude * rate.powi(k as i32) * (rate * t).exp()
            }
        }
    }

    pub fn is_nonconstant(&self) -> bool {
        match self {
            ScalarProfile::Polynomial { coeffs } => coeffs.iter().skip(1).any(|&c| c != 0.0),
            ScalarProfile::Sinusoid {
                amplitude,
                frequency,
                ..
            } => *amplitude != 0.0 && *frequency != 0.0,
            ScalarProfile::Exponential { amplitude, rate } => *amplitude != 0.0 && *rate != 0.0,
        }
    }

    /// Smallest positive period, advertised only by nonconstant sinusoids.
    pub fn period(&self) -> Option<f64> {
        match self {
            ScalarProfile::Sinusoid { frequency, .. } if self.is_nonconstant() => {
                Some(TAU / frequency.abs())
            }
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            ScalarProfile::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
            ScalarProfile::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude.is_finite() && frequency.is_finite() && phase.is_finite(),
            ScalarProfile::Exponential { amplitude, rate } => {
                amplitude.is_finite() && rate.is_finite()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(p: &ScalarProfile, t: f64, k: u32) -> f64 {
        let h = 1e-4;
        (p.derivative(t + h, k) - p.derivative(t - h, k)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_differences() {
        let profiles = [
            ScalarProfile::polynomial(&[0.5, -1.0, 0.0, 1.0, 0.25]),
            ScalarProfile::Sinusoid {
                amplitude: 1.5,
                frequency: 2.0,
                phase: 0.3,
            },
            ScalarProfile::Exponential {
                amplitude: -0.7,
                rate: 0.4,
            },
        ];
        for p in &profiles {
            for k in 0..4 {
                for &t in &[-1.3, 0.0, 0.7, 2.2] {
                    let fd = central_diff(p, t, k);
                    let exact = p.derivative(t, k + 1);
                    assert!(
                        (fd - exact).abs() < 1e-6 * exact.abs().max(1.0),
                        "{p:?} k={k} t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn polynomial_values() {
        let p = ScalarProfile::polynomial(&[0.0, -1.0, 0.0, 1.0]);
        assert_eq!(p.value(2.0), 6.0);
        assert_eq!(p.derivative(2.0, 1), 11.0);
        assert_eq!(p.derivative(2.0, 2), 12.0);
        assert_eq!(p.derivative(2.0, 3), 6.0);
        assert_eq!(p.derivative(2.0, 4), 0.0);
    }

    #[test]
    fn nonconstant_flags() {
        assert!(ScalarProfile::sin().is_nonconstant());
        assert!(!ScalarProfile::polynomial(&[3.0]).is_nonconstant());
        assert!(!ScalarProfile::Sinusoid {
            amplitude: 0.0,
            frequency: 1.0,
            phase: 0.0
        }
        .is_nonconstant());
        assert!(!ScalarProfile::Exponential {
            amplitude: 1.0,
            rate: 0.0
        }
        .is_nonconstant());
    }

    #[test]
    fn only_sinusoids_have_periods() {
        assert!((ScalarProfile::sin().period().unwrap() - TAU).abs() < 1e-15);
        assert_eq!(ScalarProfile::polynomial(&[0.0, 1.0]).period(), None);
    }

    #[test]
    fn json_shape() {
        let p: ScalarProfile = serde_json::from_str(
            r#"{"family":"sinusoid","amplitude":1.0,"frequency":1.0,"phase":0.0}"#,
        )
        .unwrap();
        assert_eq!(p, ScalarProfile::sin());
        let q: ScalarProfile =
            serde_json::from_str(r#"{"family":"polynomial","coeffs":[0,-1,0,1]}"#).unwrap();
        assert_eq!(q, ScalarProfile::polynomial(&[0.0, -1.0, 0.0, 1.0]));
    }
}
