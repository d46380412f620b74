// Licensed under the Apache-2.0 license

//! Hamming(13,8) SEC-DED: four Hamming check bits plus one overall parity
//! bit per data byte.
//!
//! Codeword positions 1..=12 follow the classic layout with parity bits at
//! the powers of two. Data bit `k` sits at `DATA_POS[k]`. The 5-bit check
//! field is `p1 | p2 << 1 | p4 << 2 | p8 << 3 | overall << 4`.

use serde::{Deserialize, Serialize};

const DATA_POS: [u8; 8] = [3, 5, 6, 7, 9, 10, 11, 12];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SecdedWord {
    pub data: u8,
    /// Low five bits only.
    pub check: u8,
}

impl SecdedWord {
    /// Flips one of the 13 stored bits: indices 0..8 address data bits,
    /// 8..13 address check bits.
    pub fn with_flipped(self, bit: usize) -> Self {
        assert!(bit < 13, "SEC-DED word has 13 bits");
        let mut w = self;
        if bit < 8 {
            w.data ^= 1 << bit;
        } else {
            w.check ^= 1 << (bit - 8);
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecodeStatus {
    Clean,
    Corrected,
    Uncorrectable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecdedDecode {
    pub byte: u8,
    pub status: DecodeStatus,
}

fn hamming_syndrome(data: u8) -> u8 {
    DATA_POS
        .iter()
        .enumerate()
        .filter(|(k, _)| data >> k & 1 == 1)
        .fold(0u8, |acc, (_, &pos)| acc ^ pos)
}

pub fn secded_encode(byte: u8) -> SecdedWord {
    let hamming = hamming_syndrome(byte);
    let overall = (byte.count_ones() + hamming.count_ones()) & 1;
    SecdedWord {
        data: byte,
        check: hamming | (overall as u8) << 4,
    }
}

pub fn secded_decode(word: SecdedWord) -> SecdedDecode {
    let stored_hamming = word.check & 0x0F;
    let syndrome = hamming_syndrome(word.data) ^ stored_hamming;
    let parity_odd = (word.data.count_ones() + (word.check & 0x1F).count_ones()) & 1 == 1;

    match (syndrome, parity_odd) {
        (0, false) => SecdedDecode {
            byte: word.data,
            status: DecodeStatus::Clean,
        },
        // Only the overall parity bit itself flipped.
        (0, true) => SecdedDecode {
            byte: word.data,
            status: DecodeStatus::Corrected,
        },
        (s, true) if s <= 12 => {
            let byte = match DATA_POS.iter().position(|&p| p == s) {
                Some(k) => word.data ^ (1 << k),
                None => word.data, // a Hamming check bit flipped
            };
            SecdedDecode {
                byte,
                status: DecodeStatus::Corrected,
            }
        }
        _ => SecdedDecode {
            byte: word.data,
            status: DecodeStatus::Uncorrectable,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clean_round_trip_for_every_byte() {
        for b in 0..=255u8 {
            let d = secded_decode(secded_encode(b));
            assert_eq!(d, SecdedDecode { byte: b, status: DecodeStatus::Clean });
            assert!(secded_encode(b).check < 32);
        }
    }

    #[test]
    fn every_single_flip_is_corrected() {
        let mut cases = 0;
        for b in 0..=255u8 {
            for bit in 0..13 {
                let d = secded_decode(secded_encode(b).with_flipped(bit));
                assert_eq!(d.status, DecodeStatus::Corrected, "byte {b:#04x} bit {bit}");
                assert_eq!(d.byte, b);
                cases += 1;
            }
        }
        assert_eq!(cases, 3328);
    }

    #[test]
    fn every_double_flip_is_detected() {
        for b in 0..=255u8 {
            for i in 0..13 {
                for j in (i + 1)..13 {
                    let w = secded_encode(b).with_flipped(i).with_flipped(j);
                    assert_eq!(secded_decode(w).status, DecodeStatus::Uncorrectable);
                }
            }
        }
    }

    #[test]
    fn random_double_flips_are_uncorrectable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let b: u8 = rng.gen();
            let i = rng.gen_range(0..13);
            let mut j = rng.gen_range(0..13);
            while j == i {
                j = rng.gen_range(0..13);
            }
            let w = secded_encode(b).with_flipped(i).with_flipped(j);
            assert_eq!(secded_decode(w).status, DecodeStatus::Uncorrectable);
        }
    }
}
