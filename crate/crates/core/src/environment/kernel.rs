use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polynomial bump shapes usable as mollifiers. Both are C¹ with compact
/// support `[-radius, radius]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    /// `(15/16) (1 - u^2)^2`
    Biweight,
    /// `(35/32) (1 - u^2)^3`
    Triweight,
}

/// Mollifier description. `mass` multiplies the normalized shape; anything
/// other than 1 is rejected when a field is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub radius: f64,
    #[serde(default = "unit_mass")]
    pub mass: f64,
}

fn unit_mass() -> f64 {
    1.0
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::biweight(1.0)
    }
}

impl KernelSpec {
    pub fn biweight(radius: f64) -> Self {
        Self {
            shape: KernelShape::Biweight,
            radius,
            mass: 1.0,
        }
    }

    pub fn triweight(radius: f64) -> Self {
        Self {
            shape: KernelShape::Triweight,
            radius,
            mass: 1.0,
        }
    }

    /// Check positivity of the radius and that the kernel integrates to one.
    /// The integral is computed by composite Simpson quadrature, not taken
    /// from the closed form.
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel radius must be positive, got {}",
                self.radius
            )));
        }
        let integral = self.quadrature_mass(2000);
        if !integral.is_finite() || (integral - 1.0).abs() > 1e-9 {
            return Err(Error::KernelNotNormalized { integral });
        }
        Ok(())
    }

    fn quadrature_mass(&self, n: usize) -> f64 {
        let n = n + n % 2;
        let r = self.radius;
        let h = 2.0 * r / n as f64;
        let mut s = self.density(-r) + self.density(r);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.density(-r + h * i as f64);
        }
        s * h / 3.0
    }

    /// Kernel value `f(z)`.
    #[inline]
    pub fn density(&self, z: f64) -> f64 {
        let u = z / self.radius;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        let base = match self.shape {
            KernelShape::Biweight => 15.0 / 16.0 * q * q,
            KernelShape::Triweight => 35.0 / 32.0 * q * q * q,
        };
        self.mass * base / self.radius
    }

    /// Kernel derivative `f'(z)`.
    #[inline]
    pub fn density_derivative(&self, z: f64) -> f64 {
        let u = z / self.radius;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        let base = match self.shape {
            KernelShape::Biweight => 15.0 / 16.0 * 2.0 * q * (-2.0 * u),
            KernelShape::Triweight => 35.0 / 32.0 * 3.0 * q * q * (-2.0 * u),
        };
        self.mass * base / (self.radius * self.radius)
    }

    /// Cumulative integral `K(z) = int_{-inf}^z f`. Exactly 0 and `mass`
    /// outside the support.
    #[inline]
    pub fn cdf(&self, z: f64) -> f64 {
        let u = z / self.radius;
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return self.mass;
        }
        let u2 = u * u;
        let base = match self.shape {
            KernelShape::Biweight => 0.5 + 15.0 / 16.0 * u * (1.0 - 2.0 / 3.0 * u2 + u2 * u2 / 5.0),
            KernelShape::Triweight => {
                0.5 + 35.0 / 32.0 * u * (1.0 - u2 + 3.0 / 5.0 * u2 * u2 - u2 * u2 * u2 / 7.0)
            }
        };
        self.mass * base
    }

    /// `sup f`, attained at 0. Bounds `|V'|` for the Poisson generator.
    pub fn sup_density(&self) -> f64 {
        self.density(0.0)
    }

    /// `sup |f'|`, located numerically on a fine grid.
    pub fn sup_derivative(&self) -> f64 {
        (0..=4000)
            .map(|i| {
                self.density_derivative(self.radius * i as f64 / 4000.0)
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_normalized() {
        KernelSpec::biweight(1.0).validate().unwrap();
        KernelSpec::triweight(0.5).validate().unwrap();
    }

    #[test]
    fn wrong_mass_is_rejected() {
        let k = KernelSpec {
            mass: 1.1,
            ..KernelSpec::biweight(1.0)
        };
        assert!(matches!(
            k.validate(),
            Err(Error::KernelNotNormalized { .. })
        ));
    }

    #[test]
    fn cdf_differentiates_to_density() {
        for k in [KernelSpec::biweight(0.8), KernelSpec::triweight(1.3)] {
            for i in -20..=20 {
                let z = 0.049 * i as f64;
                let h = 1e-5;
                let fd = (k.cdf(z + h) - k.cdf(z - h)) / (2.0 * h);
                assert!((fd - k.density(z)).abs() < 1e-8);
                let fd2 = (k.density(z + h) - k.density(z - h)) / (2.0 * h);
                assert!((fd2 - k.density_derivative(z)).abs() < 1e-6);
            }
            assert_eq!(k.cdf(-k.radius), 0.0);
            assert_eq!(k.cdf(k.radius), 1.0);
        }
    }
}
