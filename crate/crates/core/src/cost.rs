//! Planner costs with a dedicated infinite sentinel.

use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul};

/// A planner cost. `Infinite` marks a hard-constraint violation and never
/// takes part in floating-point arithmetic: any sum containing it is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    Infinite,
}

impl Cost {
    pub const ZERO: Cost = Cost::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Cost::Infinite)
    }

    /// The finite value, if any.
    pub fn value(self) -> Option<f64> {
        match self {
            Cost::Finite(v) => Some(v),
            Cost::Infinite => None,
        }
    }

    /// Scale by a nonnegative weight. A zero weight does not neutralise an
    /// infinite cost.
    pub fn scale(self, w: f64) -> Cost {
        match self {
            Cost::Finite(v) => Cost::Finite(v * w),
            Cost::Infinite => Cost::Infinite,
        }
    }
}

impl Default for Cost {
    fn default() -> Self {
        Cost::ZERO
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        match (self, rhs) {
            (Cost::Finite(a), Cost::Finite(b)) => Cost::Finite(a + b),
            _ => Cost::Infinite,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        *self = *self + rhs;
    }
}

impl Mul<Cost> for f64 {
    type Output = Cost;

    fn mul(self, rhs: Cost) -> Cost {
        rhs.scale(self)
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Cost) -> Option<Ordering> {
        match (self, other) {
            (Cost::Finite(a), Cost::Finite(b)) => a.partial_cmp(b),
            (Cost::Finite(_), Cost::Infinite) => Some(Ordering::Less),
            (Cost::Infinite, Cost::Finite(_)) => Some(Ordering::Greater),
            (Cost::Infinite, Cost::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl From<f64> for Cost {
    fn from(v: f64) -> Self {
        Cost::Finite(v)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cost::Finite(v) => write!(f, "{v}"),
            Cost::Infinite => f.write_str("inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_absorbs_sums() {
        assert_eq!(Cost::Finite(1.0) + Cost::Infinite, Cost::Infinite);
        assert_eq!(Cost::Infinite + Cost::Finite(-5.0), Cost::Infinite);
        assert_eq!(0.0 * Cost::Infinite, Cost::Infinite);
        assert_eq!(Cost::Finite(1.5) + Cost::Finite(2.0), Cost::Finite(3.5));
    }

    #[test]
    fn ordering_puts_infinite_last() {
        assert!(Cost::Finite(1e300) < Cost::Infinite);
        assert!(Cost::ZERO < Cost::Finite(1.0));
    }
}
