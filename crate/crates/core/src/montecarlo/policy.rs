use serde::{Deserialize, Serialize};

/// Feedback drift `alpha(x)` of the controlled diffusion `dX = alpha dt + dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Zero,
    /// `alpha = -c`.
    ConstLeft {
        c: f64,
    },
    /// `alpha = +c`.
    ConstRight {
        c: f64,
    },
    /// `alpha = -c sign(x - x_star)` with `sign(0) = 1`.
    ValleyTrap {
        x_star: f64,
        c: f64,
    },
    /// Constant drift of either sign; not restricted to `[-c, c]`.
    Tilt {
        drift: f64,
    },
}

impl Policy {
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        match *self {
            Policy::Zero => 0.0,
            Policy::ConstLeft { c } => -c,
            Policy::ConstRight { c } => c,
            Policy::ValleyTrap { x_star, c } => {
                if x >= x_star {
                    -c
                } else {
                    c
                }
            }
            Policy::Tilt { drift } => drift,
        }
    }

    /// Largest `|alpha|` the policy can emit.
    pub fn max_speed(&self) -> f64 {
        match *self {
            Policy::Zero => 0.0,
            Policy::ConstLeft { c } | Policy::ConstRight { c } | Policy::ValleyTrap { c, .. } => {
                c.abs()
            }
            Policy::Tilt { drift } => drift.abs(),
        }
    }

    /// Whether every emitted drift lies in `[-c, c]`.
    pub fn admissible(&self, c: f64) -> bool {
        self.max_speed() <= c
    }

    /// Whether the policy only takes the values `+-c` (`Zero` counts when
    /// `c = 0`).
    pub fn bang_bang(&self, c: f64) -> bool {
        match *self {
            Policy::Zero => c == 0.0,
            Policy::ConstLeft { c: a }
            | Policy::ConstRight { c: a }
            | Policy::ValleyTrap { c: a, .. } => a == c,
            Policy::Tilt { .. } => false,
        }
    }

    /// Whether the drift pulls towards a fixed point, so paths stay near it.
    pub fn confining(&self) -> bool {
        matches!(self, Policy::ValleyTrap { c, .. } if *c > 0.0)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Zero => "zero",
            Policy::ConstLeft { .. } => "const-left",
            Policy::ConstRight { .. } => "const-right",
            Policy::ValleyTrap { .. } => "valley-trap",
            Policy::Tilt { .. } => "tilt",
        }
    }
}
