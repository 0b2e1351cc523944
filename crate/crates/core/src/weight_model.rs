//! The weight p: a sum of smooth compactly supported axisymmetric bumps centred on the
//! x₁-axis, with closed-form gradient.

use crate::Error;

/// b(x) = A·exp(1 − 1/(1 − |x−c|²/ρ²)) for |x − c| < ρ, zero otherwise; c = (center, 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    /// Value and derivative with respect to q = |x−c|²/ρ².
    fn profile(&self, z: f64, s: f64) -> Option<(f64, f64)> {
        let q = ((z - self.center).powi(2) + s * s) / (self.radius * self.radius);
        if q >= 1.0 {
            return None;
        }
        let one_minus = 1.0 - q;
        let b = self.amplitude * (1.0 - 1.0 / one_minus).exp();
        Some((b, -b / (one_minus * one_minus)))
    }
}

/// Weight built from bumps; the default model has one bump in each half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct PWeight {
    pub bumps: Vec<Bump>,
}

impl Default for PWeight {
    fn default() -> Self {
        Self {
            bumps: vec![
                Bump {
                    center: 6.0,
                    radius: 1.5,
                    amplitude: 30.0,
                },
                Bump {
                    center: -4.0,
                    radius: 1.5,
                    amplitude: 10.0,
                },
            ],
        }
    }
}

impl PWeight {
    /// The zero weight.
    pub fn zero() -> Self {
        Self { bumps: Vec::new() }
    }

    /// Bumps with centre in D⁺ only.
    pub fn plus_part(&self) -> Self {
        Self {
            bumps: self
                .bumps
                .iter()
                .copied()
                .filter(|b| b.center > 1.0)
                .collect(),
        }
    }

    /// Bumps with centre in D⁻ only.
    pub fn minus_part(&self) -> Self {
        Self {
            bumps: self
                .bumps
                .iter()
                .copied()
                .filter(|b| b.center < 0.0)
                .collect(),
        }
    }

    /// p at the meridian point (z, s).
    pub fn eval_p(&self, z: f64, s: f64) -> f64 {
        self.bumps
            .iter()
            .filter_map(|b| b.profile(z, s))
            .map(|(v, _)| v)
            .sum()
    }

    /// (∂p/∂x₁, ∂p/∂s) at (z, s).
    pub fn grad_p(&self, z: f64, s: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for b in &self.bumps {
            if let Some((_, dq)) = b.profile(z, s) {
                let r2 = b.radius * b.radius;
                g[0] += dq * 2.0 * (z - b.center) / r2;
                g[1] += dq * 2.0 * s / r2;
            }
        }
        g
    }

    /// x·∇p.
    pub fn radial_term(&self, z: f64, s: f64) -> f64 {
        let g = self.grad_p(z, s);
        z * g[0] + s * g[1]
    }

    /// ∂p/∂x₁.
    pub fn axial_term(&self, z: f64, s: f64) -> f64 {
        self.grad_p(z, s)[0]
    }

    /// Support violations; empty iff the weight is admissible.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, b) in self.bumps.iter().enumerate() {
            if !(b.amplitude > 0.0) {
                out.push(format!(
                    "bump {k}: amplitude {} is not positive",
                    b.amplitude
                ));
            }
            if !(b.radius > 0.0) {
                out.push(format!("bump {k}: radius {} is not positive", b.radius));
                continue;
            }
            let (c, r) = (b.center, b.radius);
            // Distance from the centre (on the axis) to the strip ½ ≤ x₁ ≤ 1, |x′| < 1.
            let strip_dist = (0.5 - c).max(c - 1.0).max(0.0);
            if strip_dist < r {
                out.push(format!("bump {k}: support meets the strip 1/2 <= x1 <= 1"));
            }
            let meets_b3_plus = c + r > 1.0 && (c - 1.0).abs() < 3.0 + r;
            if meets_b3_plus {
                out.push(format!("bump {k}: support meets B3+"));
            }
            if c > 1.0 && c - r <= 4.0 {
                out.push(format!("bump {k}: D+ bump must be supported in x1 > 4"));
            }
            if (0.0..=1.0).contains(&c) {
                out.push(format!("bump {k}: centre lies in the channel"));
            }
            if c < 0.0 && c + r >= 0.0 {
                out.push(format!("bump {k}: D- bump support reaches the wall x1 = 0"));
            }
        }
        out
    }

    /// Errors unless `validate` returns no violations.
    pub fn check(&self) -> Result<(), Error> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Assumption(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_admissible() {
        assert!(PWeight::default().validate().is_empty());
    }

    #[test]
    fn centre_value_is_amplitude() {
        let p = PWeight::default();
        assert!((p.eval_p(6.0, 0.0) - 30.0).abs() < 1e-12);
        assert_eq!(p.eval_p(0.75, 0.0), 0.0);
    }

    #[test]
    fn violations_detected() {
        let near = PWeight {
            bumps: vec![Bump {
                center: 2.0,
                radius: 1.0,
                amplitude: 1.0,
            }],
        };
        assert!(!near.validate().is_empty());
        let zero = PWeight {
            bumps: vec![Bump {
                center: 6.0,
                radius: 1.0,
                amplitude: 0.0,
            }],
        };
        assert!(!zero.validate().is_empty());
    }
}
