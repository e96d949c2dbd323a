use std::f64::consts::{LN_2, PI};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Number of rooted quadrangulations with `n` inner faces and a simple
/// boundary of length `2p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapCount {
    pub n: u64,
    pub p: u64,
    pub count: BigUint,
}

impl MapCount {
    /// Natural logarithm of the count; `-∞` for an empty class.
    pub fn ln(&self) -> f64 {
        ln_biguint(&self.count)
    }
}

/// `ln x` for an arbitrarily large integer, from its leading 64 bits.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    if bits <= 64 {
        return x.to_u64().expect("fits in 64 bits").to_f64().expect("finite").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_u64().expect("fits in 64 bits") as f64;
    top.ln() + shift as f64 * LN_2
}

fn check_p(p: u64) -> Result<()> {
    if p == 0 {
        return Err(Error::Parameter("the half-perimeter p must be at least 1".into()));
    }
    Ok(())
}

/// `|T_{n,p}| = 3^{n-p} (3p)! / (p! (2p-1)!) · (2n+p-1)! / ((n-p+1)! (n+2p)!)`.
///
/// Evaluated exactly through the prime factorisation; a negative prime
/// exponent would mean the formula is not an integer and is reported.
pub fn count_exact(n: u64, p: u64) -> Result<MapCount> {
    check_p(p)?;
    if n + 1 < p {
        return Ok(MapCount {
            n,
            p,
            count: BigUint::zero(),
        });
    }
    let top = (3 * p).max(2 * n + p - 1).max(n + 2 * p);
    let mut factors = Vec::new();
    for q in primes_up_to(top) {
        let mut e = legendre(3 * p, q) as i128 + legendre(2 * n + p - 1, q) as i128
            - legendre(p, q) as i128
            - legendre(2 * p - 1, q) as i128
            - legendre(n + 1 - p, q) as i128
            - legendre(n + 2 * p, q) as i128;
        if q == 3 {
            e += n as i128 - p as i128;
        }
        if e < 0 {
            return Err(Error::Numerical(format!(
                "count formula is not integral at n = {n}, p = {p} (prime {q} has exponent {e})"
            )));
        }
        if e > 0 {
            factors.push(BigUint::from(q).pow(e as u32));
        }
    }
    Ok(MapCount {
        n,
        p,
        count: product(factors),
    })
}

/// Exponent of the prime `q` in `m!`.
fn legendre(m: u64, q: u64) -> u64 {
    let mut e = 0;
    let mut k = m;
    while k > 0 {
        k /= q;
        e += k;
    }
    e
}

fn primes_up_to(m: u64) -> Vec<u64> {
    let m = m as usize;
    if m < 2 {
        return Vec::new();
    }
    let mut sieve = vec![true; m + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= m {
        if sieve[i] {
            for j in (i * i..=m).step_by(i) {
                sieve[j] = false;
            }
        }
        i += 1;
    }
    sieve
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| i as u64)
        .collect()
}

/// Balanced product, so the big multiplications happen between operands of
/// similar size.
fn product(mut xs: Vec<BigUint>) -> BigUint {
    if xs.is_empty() {
        return BigUint::one();
    }
    while xs.len() > 1 {
        let mut next = Vec::with_capacity(xs.len().div_ceil(2));
        let mut it = xs.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a * b,
                None => a,
            });
        }
        xs = next;
    }
    xs.pop().expect("non-empty")
}

/// Which large-`n` asymptotic of `|T_{n,p}|` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticForm {
    /// `12ⁿ (9/2)^p n^{-5/2} √(3p)/(2π) e^{-9p²/4n}`.
    #[default]
    NineHalves,
    /// The same with the boundary factor `e^{2p ln(3/2)} = (9/4)^p`, which
    /// differs from the first by `2^p`.
    NineQuarters,
}

/// Logarithm of the asymptotic count.
pub fn log_count_asymptotic(n: u64, p: u64, form: AsymptoticForm) -> Result<f64> {
    check_p(p)?;
    if n == 0 {
        return Err(Error::Parameter("the asymptotic needs n >= 1".into()));
    }
    let (n, p) = (n as f64, p as f64);
    let boundary = match form {
        AsymptoticForm::NineHalves => p * 4.5f64.ln(),
        AsymptoticForm::NineQuarters => 2.0 * p * 1.5f64.ln(),
    };
    Ok(n * 12f64.ln() + boundary - 2.5 * n.ln() + 0.5 * (3.0 * p).ln() - (2.0 * PI).ln() - gaussian_exponent(n, p))
}

/// `9p²/(4n)`, which equals `9l²/(16V)` under `V = a²n`, `l = 2ap`.
pub fn gaussian_exponent(n: f64, p: f64) -> f64 {
    9.0 * p * p / (4.0 * n)
}

/// `ln |T_{n,p}|` through `ln Γ`, for weight tables; `-∞` when `n < p - 1`.
pub fn log_count(n: u64, p: u64, ln_fact: &LnFactorial) -> f64 {
    if n + 1 < p || p == 0 {
        return f64::NEG_INFINITY;
    }
    (n as f64 - p as f64) * 3f64.ln() + ln_fact.get(3 * p) - ln_fact.get(p) - ln_fact.get(2 * p - 1)
        + ln_fact.get(2 * n + p - 1)
        - ln_fact.get(n + 1 - p)
        - ln_fact.get(n + 2 * p)
}

/// Table of `ln k!`.
#[derive(Debug, Clone)]
pub struct LnFactorial(Vec<f64>);

impl LnFactorial {
    pub fn new(max: u64) -> Self {
        Self(
            (0..=max)
                .map(|k| statrs::function::gamma::ln_gamma(k as f64 + 1.0))
                .collect(),
        )
    }

    pub fn max(&self) -> u64 {
        self.0.len() as u64 - 1
    }

    pub fn get(&self, k: u64) -> f64 {
        self.0[k as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u64) -> BigUint {
        (1..=k).fold(BigUint::one(), |acc, i| acc * i)
    }

    /// The closed formula by direct factorial arithmetic.
    fn naive(n: u64, p: u64) -> BigUint {
        let num = factorial(3 * p) * factorial(2 * n + p - 1) * BigUint::from(3u32).pow(n as u32);
        let den = BigUint::from(3u32).pow(p as u32)
            * factorial(p)
            * factorial(2 * p - 1)
            * factorial(n + 1 - p)
            * factorial(n + 2 * p);
        assert!((&num % &den).is_zero(), "not integral at {n}, {p}");
        num / den
    }

    #[test]
    fn small_counts() {
        assert_eq!(count_exact(0, 1).unwrap().count, BigUint::from(1u32));
        assert_eq!(count_exact(1, 1).unwrap().count, BigUint::from(2u32));
        assert_eq!(count_exact(0, 2).unwrap().count, BigUint::zero());
        assert!(count_exact(3, 0).is_err());
    }

    #[test]
    fn factorisation_matches_factorials() {
        for n in 0..40 {
            for p in 1..=(n + 1).min(12) {
                assert_eq!(count_exact(n, p).unwrap().count, naive(n, p), "n = {n}, p = {p}");
            }
        }
    }

    #[test]
    fn log_count_matches_exact() {
        let t = LnFactorial::new(1000);
        for (n, p) in [(1, 1), (10, 3), (200, 20), (300, 40)] {
            let exact = count_exact(n, p).unwrap().ln();
            assert!((log_count(n, p, &t) - exact).abs() < 1e-9 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn biguint_log() {
        let x = BigUint::from(3u32).pow(1000);
        assert!((ln_biguint(&x) - 1000.0 * 3f64.ln()).abs() < 1e-10);
        assert_eq!(ln_biguint(&BigUint::zero()), f64::NEG_INFINITY);
    }

    #[test]
    fn forms_differ_by_two_to_the_p() {
        let a = log_count_asymptotic(500, 7, AsymptoticForm::NineHalves).unwrap();
        let b = log_count_asymptotic(500, 7, AsymptoticForm::NineQuarters).unwrap();
        assert!((a - b - 7.0 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn exponent_identity() {
        let (a, n, p) = (0.01, 12345.0, 67.0);
        let (v, l) = (a * a * n, 2.0 * a * p);
        assert!((gaussian_exponent(n, p) - 9.0 * l * l / (16.0 * v)).abs() < 1e-12);
    }
}
