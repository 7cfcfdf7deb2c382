//! Stateless, persistent pseudo-random numbers from SHA-256.
//!
//! `hash_uniform(salt, unit)` digests the UTF-8 bytes of `salt + ":" + unit`
//! and reads the first 8 bytes as a big-endian `u64`. The top 53 bits become
//! the mantissa of a double in `[0, 1)`, i.e. `u64 / 2^64` truncated to
//! double precision. The value is identical on every platform.

use sha2::{Digest, Sha256};

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Uniform `[0, 1)` value for `unit` under `salt`.
pub fn hash_uniform(salt: &str, unit: &str) -> f64 {
    SaltedHasher::new(salt).uniform(unit)
}

/// The raw 64-bit prefix used by [`hash_uniform`].
pub fn hash_u64(salt: &str, unit: &str) -> u64 {
    SaltedHasher::new(salt).raw(unit.as_bytes())
}

#[inline]
fn to_unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * INV_2_53
}

/// A SHA-256 state primed with `salt + ":"`, so repeated draws under one salt
/// only hash the unit suffix.
#[derive(Clone)]
pub struct SaltedHasher {
    prefix: Sha256,
}

impl SaltedHasher {
    pub fn new(salt: &str) -> Self {
        let mut prefix = Sha256::new();
        prefix.update(salt.as_bytes());
        prefix.update(b":");
        Self { prefix }
    }

    fn raw(&self, unit: &[u8]) -> u64 {
        let mut h = self.prefix.clone();
        h.update(unit);
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(head)
    }

    pub fn uniform(&self, unit: &str) -> f64 {
        to_unit_interval(self.raw(unit.as_bytes()))
    }

    /// Same as `uniform(&id.to_string())` without allocating.
    pub fn uniform_id(&self, id: usize) -> f64 {
        let mut buf = [0u8; 20];
        to_unit_interval(self.raw(decimal(id as u64, &mut buf)))
    }

    /// Same as `uniform(&format!("{prefix}{id}"))`.
    pub fn uniform_prefixed(&self, prefix: &str, id: usize) -> f64 {
        let mut buf = [0u8; 20];
        let mut h = self.prefix.clone();
        h.update(prefix.as_bytes());
        h.update(decimal(id as u64, &mut buf));
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        to_unit_interval(u64::from_be_bytes(head))
    }

    /// Same as `uniform(&format!("{a}-{b}"))`, the edge unit key.
    pub fn uniform_pair(&self, a: usize, b: usize) -> f64 {
        let mut buf = [0u8; 20];
        let mut h = self.prefix.clone();
        h.update(decimal(a as u64, &mut buf));
        h.update(b"-");
        h.update(decimal(b as u64, &mut buf));
        let digest = h.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        to_unit_interval(u64::from_be_bytes(head))
    }
}

fn decimal(mut v: u64, buf: &mut [u8; 20]) -> &[u8] {
    let mut pos = buf.len();
    loop {
        pos -= 1;
        buf[pos] = b'0' + (v % 10) as u8;
        v /= 10;
        if v == 0 {
            break;
        }
    }
    &buf[pos..]
}
