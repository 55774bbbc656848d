//! Integer primitives: prime sieve, Miller-Rabin and Brent's variant of
//! Pollard's rho over `u128`.

use std::sync::OnceLock;

use num_integer::Integer;

/// Primes below this bound are removed by trial division / root sieving
/// before any probabilistic machinery runs.
pub const TRIAL_LIMIT: u64 = 10_000;

/// Sieve of Eratosthenes returning every prime `<= limit`.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut out = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// SplitMix64 finalizer: a bijective avalanche mix of 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn trial_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| primes_up_to(TRIAL_LIMIT))
}

#[inline]
fn add_mod(a: u128, b: u128, m: u128) -> u128 {
    // a, b < m
    let (s, overflow) = a.overflowing_add(b);
    if overflow || s >= m {
        s.wrapping_sub(m)
    } else {
        s
    }
}

/// `a * b mod m` for any `m < 2^128`.
#[inline]
pub fn mul_mod(a: u128, b: u128, m: u128) -> u128 {
    if m <= u64::MAX as u128 {
        return (a % m) * (b % m) % m;
    }
    let mut a = a % m;
    let mut b = b % m;
    let mut acc = 0u128;
    while b > 0 {
        if b & 1 == 1 {
            acc = add_mod(acc, a, m);
        }
        a = add_mod(a, a, m);
        b >>= 1;
    }
    acc
}

pub fn pow_mod(mut base: u128, mut exp: u128, m: u128) -> u128 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u128;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

fn strong_probable_prime(n: u128, base: u128) -> bool {
    let base = base % n;
    if base == 0 {
        return true;
    }
    let d = (n - 1) >> (n - 1).trailing_zeros();
    let s = (n - 1).trailing_zeros();
    let mut x = pow_mod(base, d, n);
    if x == 1 || x == n - 1 {
        return true;
    }
    for _ in 1..s {
        x = mul_mod(x, x, n);
        if x == n - 1 {
            return true;
        }
        if x == 1 {
            return false;
        }
    }
    false
}

/// Bases that make Miller-Rabin exact for every `n < 2^64`.
const BASES_64: [u128; 7] = [2, 325, 9375, 28178, 450775, 9780504, 1795265022];
/// The first 13 primes are an exact base set below 3.3170444e24.
const BASES_SMALL_PRIMES: [u128; 20] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
];
const EXACT_13_BOUND: u128 = 3_317_044_064_679_887_385_961_981;

/// Primality test. Exact for `n < 3.3e24`; above that it is a strong
/// probable-prime test to the first twenty prime bases.
pub fn is_prime(n: u128) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &BASES_SMALL_PRIMES {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    if n < 73 * 73 {
        return true;
    }
    if n <= u64::MAX as u128 {
        return BASES_64.iter().all(|&b| strong_probable_prime(n, b));
    }
    let bases: &[u128] = if n < EXACT_13_BOUND {
        &BASES_SMALL_PRIMES[..13]
    } else {
        &BASES_SMALL_PRIMES
    };
    bases.iter().all(|&b| strong_probable_prime(n, b))
}

fn brent_rho(n: u128, c: u128) -> Option<u128> {
    let f = |x: u128| add_mod(mul_mod(x, x, n), c, n);
    let mut y = 2u128 % n;
    let mut r = 1u64;
    let mut q = 1u128;
    let m = 128u64;
    let mut g = 1u128;
    let mut x = y;
    let mut ys = y;
    while g == 1 {
        x = y;
        for _ in 0..r {
            y = f(y);
        }
        let mut k = 0;
        while k < r && g == 1 {
            ys = y;
            for _ in 0..m.min(r - k) {
                y = f(y);
                q = mul_mod(q, x.abs_diff(y), n);
            }
            g = q.gcd(&n);
            k += m;
        }
        r *= 2;
        if r > 1 << 40 {
            return None;
        }
    }
    if g == n {
        loop {
            ys = f(ys);
            g = x.abs_diff(ys).gcd(&n);
            if g > 1 {
                break;
            }
        }
    }
    (g != n).then_some(g)
}

/// A nontrivial divisor of the composite `n`.
fn find_divisor(n: u128) -> u128 {
    if n % 2 == 0 {
        return 2;
    }
    let root = integer_sqrt(n);
    if root * root == n {
        return root;
    }
    (1u128..)
        .find_map(|c| brent_rho(n, c))
        .expect("rho eventually splits a composite")
}

pub fn integer_sqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x.checked_mul(x).is_none_or(|sq| sq > n) {
        x -= 1;
    }
    while (x + 1).checked_mul(x + 1).is_some_and(|sq| sq <= n) {
        x += 1;
    }
    x
}

/// Splits a cofactor with no prime factor below [`TRIAL_LIMIT`] into primes,
/// appending them (unsorted, with repetition) to `out`.
pub(crate) fn split_large(n: u128, out: &mut Vec<u128>) {
    if n == 1 {
        return;
    }
    let t = TRIAL_LIMIT as u128;
    if n < t * t || is_prime(n) {
        out.push(n);
        return;
    }
    let d = find_divisor(n);
    split_large(d, out);
    split_large(n / d, out);
}

/// Collapses a list of primes with repetition into sorted `(prime, exponent)`.
pub(crate) fn collect_powers(mut primes: Vec<u128>) -> Vec<(u128, u32)> {
    primes.sort_unstable();
    let mut out: Vec<(u128, u32)> = Vec::new();
    for p in primes {
        match out.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => out.push((p, 1)),
        }
    }
    out
}

/// Full factorization of `n >= 1`, sorted by prime.
pub fn factorize(mut n: u128) -> Vec<(u128, u32)> {
    let mut primes = Vec::new();
    for &p in trial_primes() {
        let p = p as u128;
        if p * p > n {
            break;
        }
        while n % p == 0 {
            primes.push(p);
            n /= p;
        }
    }
    if n > 1 {
        split_large(n, &mut primes);
    }
    collect_powers(primes)
}

/// All positive divisors of `n >= 1`, ascending.
pub fn divisors(n: u128) -> Vec<u128> {
    let mut divs = vec![1u128];
    for (p, e) in factorize(n) {
        let current = divs.len();
        let mut pk = 1u128;
        for _ in 0..e {
            pk *= p;
            for i in 0..current {
                divs.push(divs[i] * pk);
            }
        }
    }
    divs.sort_unstable();
    divs
}
