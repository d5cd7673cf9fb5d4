//! Arithmetic operation tallies used as a portable complexity measure.

use std::ops::{Add, AddAssign, Mul};

/// Running count of real multiplications, additions and transcendental
/// function evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub mults: u64,
    pub adds: u64,
    pub func_evals: u64,
}

impl OpCounter {
    pub const fn new(mults: u64, adds: u64, func_evals: u64) -> Self {
        Self {
            mults,
            adds,
            func_evals,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Real multiplications charged for one real-input transform of size `n`
    /// (N·log2 N cost model).
    pub fn transform_mults(n: usize) -> u64 {
        let n = n as u64;
        n * u64::from(n.max(2).next_power_of_two().trailing_zeros())
    }

    pub fn charge_transform(&mut self, n: usize) {
        let m = Self::transform_mults(n);
        self.mults += m;
        self.adds += m;
    }
}

impl Add for OpCounter {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            mults: self.mults + rhs.mults,
            adds: self.adds + rhs.adds,
            func_evals: self.func_evals + rhs.func_evals,
        }
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Mul<u64> for OpCounter {
    type Output = Self;
    fn mul(self, k: u64) -> Self {
        Self {
            mults: self.mults * k,
            adds: self.adds * k,
            func_evals: self.func_evals * k,
        }
    }
}
