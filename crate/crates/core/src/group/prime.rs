use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::RngCore;

use super::random_below;

const SIEVE_LIMIT: u32 = 2048;
const SIEVE_WINDOW: u32 = 4096;

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut composite = vec![false; SIEVE_LIMIT as usize];
        let mut out = Vec::new();
        for i in 2..SIEVE_LIMIT {
            if !composite[i as usize] {
                out.push(i);
                let mut j = i * i;
                while j < SIEVE_LIMIT {
                    composite[j as usize] = true;
                    j += i;
                }
            }
        }
        out
    })
}

/// Miller-Rabin with the first `rounds` primes as bases, after trial division.
pub fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    if let Some(small) = n.to_u64() {
        if small < 2 {
            return false;
        }
        if small < (SIEVE_LIMIT as u64) * (SIEVE_LIMIT as u64) {
            return small_primes()
                .iter()
                .take_while(|&&p| (p as u64) * (p as u64) <= small)
                .all(|&p| small % p as u64 != 0);
        }
    }
    for &p in small_primes() {
        if (n % p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'bases: for &base in small_primes().iter().take(rounds) {
        let mut x = BigUint::from(base).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Random safe prime `P = 2q + 1` of exactly `bits` bits. Each window picks a
/// random `q = 3 (mod 4)` and walks upward with an incremental sieve on both
/// `q` and `2q + 1`. Returns `None` when the window budget runs out.
pub(super) fn random_safe_prime<R: RngCore>(bits: u32, rng: &mut R, windows: usize) -> Option<BigUint> {
    let primes = small_primes();
    let q_bits = bits - 1;
    let top = BigUint::one() << (q_bits - 1);
    for _ in 0..windows {
        let mut q = random_below(&top, rng) | &top;
        q = (q >> 2u32 << 2u32) | BigUint::from(3u32);
        let mut residues: Vec<u32> = primes.iter().map(|&p| (&q % p).to_u32().unwrap()).collect();
        for step in 0..SIEVE_WINDOW {
            let survives = primes
                .iter()
                .zip(&residues)
                .all(|(&p, &r)| r != 0 && r != (p - 1) / 2);
            if survives {
                let cand = &q + BigUint::from(4 * step);
                if cand.bits() == q_bits as u64 {
                    let p = (&cand << 1u32) + 1u32;
                    // cheap Fermat filters before the full tests
                    let two = BigUint::from(2u32);
                    if two.modpow(&(&cand - 1u32), &cand).is_one()
                        && two.modpow(&(&p - 1u32), &p).is_one()
                        && is_probable_prime(&cand, super::MILLER_RABIN_ROUNDS)
                        && is_probable_prime(&p, super::MILLER_RABIN_ROUNDS)
                    {
                        return Some(p);
                    }
                }
            }
            for (r, &p) in residues.iter_mut().zip(primes) {
                *r = (*r + 4) % p;
            }
        }
    }
    None
}
