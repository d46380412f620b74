// Licensed under the Apache-2.0 license

/// Fletcher-32 over little-endian 16-bit words.
///
/// Both accumulators start at zero and are reduced modulo 65535 after every
/// word. An odd trailing octet is padded with a zero high byte. The result
/// is `(c1 << 16) | c0`.
pub fn fletcher32(data: &[u8]) -> u32 {
    let mut c0: u32 = 0;
    let mut c1: u32 = 0;
    let mut words = data.chunks_exact(2);
    for w in &mut words {
        c0 = (c0 + u32::from(u16::from_le_bytes([w[0], w[1]]))) % 65535;
        c1 = (c1 + c0) % 65535;
    }
    if let [last] = words.remainder() {
        c0 = (c0 + u32::from(*last)) % 65535;
        c1 = (c1 + c0) % 65535;
    }
    (c1 << 16) | c0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Closed-form oracle: c0 is the plain word sum and c1 the weighted sum
    /// `sum (n - i) * w_i`, both reduced once at the end.
    fn oracle(data: &[u8]) -> u32 {
        let mut padded = data.to_vec();
        if padded.len() % 2 == 1 {
            padded.push(0);
        }
        let words: Vec<u128> = padded
            .chunks(2)
            .map(|c| u128::from(c[0]) | (u128::from(c[1]) << 8))
            .collect();
        let n = words.len() as u128;
        let s0: u128 = words.iter().sum();
        let s1: u128 = words
            .iter()
            .enumerate()
            .map(|(i, w)| (n - i as u128) * w)
            .sum();
        (((s1 % 65535) as u32) << 16) | (s0 % 65535) as u32
    }

    #[test]
    fn published_vectors() {
        assert_eq!(fletcher32(b""), 0);
        assert_eq!(fletcher32(b"abcde"), 0xF04F_C729);
        assert_eq!(fletcher32(b"abcdef"), 0x5650_2D2A);
        assert_eq!(fletcher32(b"abcdefgh"), 0xEBE1_9591);
    }

    #[test]
    fn matches_closed_form_oracle_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..10_000 {
            let len = rng.gen_range(0..200);
            let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            assert_eq!(fletcher32(&data), oracle(&data), "{}", hex::encode(&data));
        }
    }

    #[test]
    fn single_bit_flip_changes_checksum() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..1000 {
            let mut data: Vec<u8> = (0..32).map(|_| rng.gen()).collect();
            let before = fletcher32(&data);
            let bit = rng.gen_range(0..256);
            data[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(before, fletcher32(&data));
        }
    }
}
