//! Integer combinatorics behind periodic-point counting: the Möbius function,
//! divisor enumeration, and the level-`n` degree counts.
//!
//! For a degree-`d` map, `nu(d, n) = Σ_{k|n} μ(n/k) d^k` counts the points of
//! the level-`n` divisor (for `n ≥ 2`), and `nu / n` counts the cycles it
//! carries. At `n = 1` we use the finite-fixed-point convention `nu = d`:
//! the fixed point at infinity is excluded because its multiplier vanishes
//! identically for polynomials.

use crate::error::{Error, Result};

/// Möbius function on positive integers, by trial factorization.
///
/// Returns -1/0/+1; rejects `n = 0`.
pub fn moebius(n: u64) -> Result<i32> {
    if n == 0 {
        return Err(Error::Invalid("moebius is undefined at 0".into()));
    }
    let mut n = n;
    let mut factors = 0u32;
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return Ok(0); // squared prime factor
            }
            factors += 1;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        factors += 1;
    }
    Ok(if factors % 2 == 0 { 1 } else { -1 })
}

/// Divisors of `n` in ascending order.
pub fn divisors(n: u32) -> Vec<u32> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut k = 1u32;
    while (k as u64) * (k as u64) <= n as u64 {
        if n % k == 0 {
            small.push(k);
            if k != n / k {
                large.push(n / k);
            }
        }
        k += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

/// Point and cycle counts of the level-`n` multiplier divisor for degree `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynatomicCount {
    pub d: u32,
    pub n: u32,
    /// Number of divisor points: `Σ_{k|n} μ(n/k) d^k` for `n ≥ 2`, `d` at `n = 1`.
    pub nu: i128,
    /// Number of cycles at level `n`: `nu / n`.
    pub n_cycles: i128,
}

fn checked_pow_i128(base: i128, exp: u32) -> Result<i128> {
    let mut acc: i128 = 1;
    for _ in 0..exp {
        acc = acc
            .checked_mul(base)
            .ok_or(Error::Overflow("d^k in the divisor sum"))?;
    }
    Ok(acc)
}

/// Compute `nu(d, n)` and the cycle count at level `n`.
///
/// All arithmetic is 128-bit and checked; overflow is an error, never a wrap.
pub fn dynatomic_count(d: u32, n: u32) -> Result<DynatomicCount> {
    if d < 2 {
        return Err(Error::Invalid(format!("degree must be >= 2, got {d}")));
    }
    if n < 1 {
        return Err(Error::Invalid("period must be >= 1".into()));
    }
    let nu: i128 = if n == 1 {
        d as i128
    } else {
        let mut acc: i128 = 0;
        for k in divisors(n) {
            let mu = moebius((n / k) as u64)? as i128;
            if mu == 0 {
                continue;
            }
            let term = checked_pow_i128(d as i128, k)?;
            acc = acc
                .checked_add(mu * term)
                .ok_or(Error::Overflow("divisor sum"))?;
        }
        acc
    };
    debug_assert!(nu % n as i128 == 0, "nu({d},{n}) = {nu} not divisible by n");
    Ok(DynatomicCount {
        d,
        n,
        nu,
        n_cycles: nu / n as i128,
    })
}
