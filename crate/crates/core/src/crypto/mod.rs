// Licensed under the Apache-2.0 license

//! Cryptographic primitives and the redundancy codecs used by the fuse
//! fabric.
//!
//! Everything here is a pure function of its inputs. The heavy lifting for
//! SHA-2, HMAC, AES, RSA-PSS and ECDSA is delegated to the RustCrypto
//! crates; Fletcher-32 and the Hamming SEC-DED code are implemented locally
//! because their bit layout is part of the fuse file format.

mod fletcher;
mod secded;
mod sign;

pub use fletcher::fletcher32;
pub use secded::{secded_decode, secded_encode, DecodeStatus, SecdedDecode, SecdedWord};
pub use sign::{
    keypair_from_seed, PublicKey, Signature, SignatureKeyPair, SignatureScheme,
    ECDSA_P384_PUBLIC_LEN, ECDSA_P384_SIGNATURE_LEN, RSA_PUBLIC_LEN, RSA_SIGNATURE_LEN,
};

use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256, Sha384};
use subtle::ConstantTimeEq;
use thiserror::Error;

pub const AES_BLOCK: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("input length {0} is not a multiple of the 16-octet block size")]
    Misaligned(usize),
    #[error("signing requires a private key")]
    MissingPrivateKey,
    #[error("malformed key material: {0}")]
    MalformedKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HashAlgorithm {
    Sha256,
    Sha384,
}

impl HashAlgorithm {
    pub fn output_len(self) -> usize {
        match self {
            HashAlgorithm::Sha256 => 32,
            HashAlgorithm::Sha384 => 48,
        }
    }
}

/// A digest tagged with the algorithm that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Digest {
    algorithm: HashAlgorithm,
    bytes: Vec<u8>,
}

impl Digest {
    /// Wraps raw digest bytes; `None` if the length does not match the
    /// algorithm.
    pub fn from_bytes(algorithm: HashAlgorithm, bytes: &[u8]) -> Option<Self> {
        (bytes.len() == algorithm.output_len()).then(|| Digest {
            algorithm,
            bytes: bytes.to_vec(),
        })
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

pub fn hash(algorithm: HashAlgorithm, message: &[u8]) -> Digest {
    let bytes = match algorithm {
        HashAlgorithm::Sha256 => sha256(message).to_vec(),
        HashAlgorithm::Sha384 => sha384(message).to_vec(),
    };
    Digest { algorithm, bytes }
}

pub fn sha256(message: &[u8]) -> [u8; 32] {
    Sha256::digest(message).into()
}

pub fn sha384(message: &[u8]) -> [u8; 48] {
    Sha384::digest(message).into()
}

pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Recomputes the tag and compares it in constant time.
pub fn hmac_sha256_verify(key: &[u8], message: &[u8], tag: &[u8]) -> bool {
    hmac_sha256(key, message).ct_eq(tag).into()
}

/// AES-128 key used for the BootROM key, IKEK and MEK.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymmetricKey128(#[serde(with = "hex")] pub [u8; 16]);

impl SymmetricKey128 {
    pub fn new(bytes: [u8; 16]) -> Self {
        SymmetricKey128(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| CryptoError::MalformedKey(format!("expected 16 octets, got {}", bytes.len())))?;
        Ok(SymmetricKey128(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl std::fmt::Debug for SymmetricKey128 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricKey128({})", hex::encode(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

fn check_aligned(data: &[u8]) -> Result<(), CryptoError> {
    if !data.len().is_multiple_of(AES_BLOCK) {
        return Err(CryptoError::Misaligned(data.len()));
    }
    Ok(())
}

/// Single-block AES-128 decryption. Hot path of the collision search.
pub fn aes128_decrypt_block(key: &SymmetricKey128, block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(&key.0.into());
    let mut b = *block;
    cipher.decrypt_block((&mut b).into());
    b
}

pub fn aes128_encrypt_block(key: &SymmetricKey128, block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(&key.0.into());
    let mut b = *block;
    cipher.encrypt_block((&mut b).into());
    b
}

/// AES-128 in ECB mode: each block independently, no padding.
pub fn aes128_ecb(
    key: &SymmetricKey128,
    data: &[u8],
    direction: Direction,
) -> Result<Vec<u8>, CryptoError> {
    check_aligned(data)?;
    let cipher = Aes128::new(&key.0.into());
    let mut out = data.to_vec();
    for chunk in out.chunks_exact_mut(AES_BLOCK) {
        let block: &mut [u8; AES_BLOCK] = chunk.try_into().unwrap();
        match direction {
            Direction::Encrypt => cipher.encrypt_block(block.into()),
            Direction::Decrypt => cipher.decrypt_block(block.into()),
        }
    }
    Ok(out)
}

/// AES-128 in CBC mode with an explicit IV, no padding.
pub fn aes128_cbc(
    key: &SymmetricKey128,
    iv: &[u8; 16],
    data: &[u8],
    direction: Direction,
) -> Result<Vec<u8>, CryptoError> {
    check_aligned(data)?;
    let cipher = Aes128::new(&key.0.into());
    let mut out = Vec::with_capacity(data.len());
    let mut chain = *iv;
    for chunk in data.chunks_exact(AES_BLOCK) {
        let mut block: [u8; AES_BLOCK] = chunk.try_into().unwrap();
        match direction {
            Direction::Encrypt => {
                for (b, c) in block.iter_mut().zip(chain.iter()) {
                    *b ^= c;
                }
                cipher.encrypt_block((&mut block).into());
                chain.copy_from_slice(&block);
                out.extend_from_slice(&block);
            }
            Direction::Decrypt => {
                cipher.decrypt_block((&mut block).into());
                for (b, c) in block.iter_mut().zip(chain.iter()) {
                    *b ^= c;
                }
                chain.copy_from_slice(chunk);
                out.extend_from_slice(&block);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unhex(s: &str) -> Vec<u8> {
        hex::decode(s).unwrap()
    }

    #[test]
    fn sha256_empty_matches_published_vector() {
        assert_eq!(
            hex::encode(sha256(b"")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hex::encode(sha256(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sha384_abc_matches_published_vector() {
        assert_eq!(
            hex::encode(sha384(b"abc")),
            "cb00753f45a35e8bb5a03d699ac65007272c32ab0eded1631a8b605a43ff5bed\
             8086072ba1e7cc2358baeca134c825a7"
        );
        let d = hash(HashAlgorithm::Sha384, &[0x42; 48]);
        assert_eq!(d.as_bytes().len(), 48);
        assert_eq!(d, hash(HashAlgorithm::Sha384, &[0x42; 48]));
    }

    #[test]
    fn digest_length_must_match_algorithm() {
        assert!(Digest::from_bytes(HashAlgorithm::Sha256, &[0; 48]).is_none());
        assert!(Digest::from_bytes(HashAlgorithm::Sha384, &[0; 48]).is_some());
    }

    #[test]
    fn hmac_rfc4231_case_1() {
        let tag = hmac_sha256(&[0x0b; 20], b"Hi There");
        assert_eq!(
            hex::encode(tag),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        );
        assert!(hmac_sha256_verify(&[0x0b; 20], b"Hi There", &tag));
        let mut key = [0x0b; 20];
        key[3] ^= 0x10;
        assert_ne!(hmac_sha256(&key, b"Hi There"), tag);
        assert!(!hmac_sha256_verify(&key, b"Hi There", &tag));
    }

    #[test]
    fn aes128_fips197_known_answer() {
        let key = SymmetricKey128::from_slice(&unhex("000102030405060708090a0b0c0d0e0f")).unwrap();
        let pt = unhex("00112233445566778899aabbccddeeff");
        let ct = aes128_ecb(&key, &pt, Direction::Encrypt).unwrap();
        assert_eq!(hex::encode(&ct), "69c4e0d86a7b0430d8cdb78070b4c55a");
        assert_eq!(aes128_ecb(&key, &ct, Direction::Decrypt).unwrap(), pt);
        let other = SymmetricKey128::new([0x01; 16]);
        assert_ne!(aes128_ecb(&other, &pt, Direction::Encrypt).unwrap(), ct);
    }

    #[test]
    fn aes128_cbc_sp800_38a_vector() {
        let key = SymmetricKey128::from_slice(&unhex("2b7e151628aed2a6abf7158809cf4f3c")).unwrap();
        let iv: [u8; 16] = unhex("000102030405060708090a0b0c0d0e0f").try_into().unwrap();
        let pt = unhex(
            "6bc1bee22e409f96e93d7e117393172aae2d8a571e03ac9c9eb76fac45af8e51",
        );
        let ct = aes128_cbc(&key, &iv, &pt, Direction::Encrypt).unwrap();
        assert_eq!(
            hex::encode(&ct),
            "7649abac8119b246cee98e9b12e9197d5086cb9b507219ee95db113a917678b2"
        );
        assert_eq!(aes128_cbc(&key, &iv, &ct, Direction::Decrypt).unwrap(), pt);
    }

    #[test]
    fn cbc_first_block_is_block_decrypt_xor_iv() {
        let key = SymmetricKey128::new([7; 16]);
        let iv = [0x5a; 16];
        let ct: Vec<u8> = (0..64u8).collect();
        let pt = aes128_cbc(&key, &iv, &ct, Direction::Decrypt).unwrap();
        let ecb = aes128_ecb(&key, &ct[..16], Direction::Decrypt).unwrap();
        let expect: Vec<u8> = ecb.iter().zip(iv.iter()).map(|(a, b)| a ^ b).collect();
        assert_eq!(&pt[..16], &expect[..]);
        assert_eq!(aes128_decrypt_block(&key, ct[..16].try_into().unwrap()), ecb[..]);
    }

    #[test]
    fn misaligned_input_is_rejected() {
        let key = SymmetricKey128::new([0; 16]);
        assert_eq!(
            aes128_ecb(&key, &[0; 15], Direction::Encrypt),
            Err(CryptoError::Misaligned(15))
        );
        assert_eq!(
            aes128_cbc(&key, &[0; 16], &[0; 33], Direction::Decrypt),
            Err(CryptoError::Misaligned(33))
        );
    }

    proptest::proptest! {
        #[test]
        fn ecb_and_cbc_round_trip(key in proptest::array::uniform16(0u8..), iv in proptest::array::uniform16(0u8..),
                                  blocks in proptest::collection::vec(proptest::array::uniform16(0u8..), 0..8)) {
            let key = SymmetricKey128::new(key);
            let data: Vec<u8> = blocks.concat();
            let e = aes128_ecb(&key, &data, Direction::Encrypt).unwrap();
            proptest::prop_assert_eq!(aes128_ecb(&key, &e, Direction::Decrypt).unwrap(), data.clone());
            let c = aes128_cbc(&key, &iv, &data, Direction::Encrypt).unwrap();
            proptest::prop_assert_eq!(aes128_cbc(&key, &iv, &c, Direction::Decrypt).unwrap(), data);
        }
    }
}
