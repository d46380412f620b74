// Licensed under the Apache-2.0 license

//! Signature keys: RSA-PSS-4096/SHA-384 for firmware, ECDSA-P384/SHA-384 for
//! attestation and the mock KDS.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigUint;
use p384::ecdsa::signature::{Signer, Verifier};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rsa::pkcs8::{EncodePrivateKey, LineEnding};
use rsa::signature::{RandomizedSigner, SignatureEncoding};
use rsa::traits::PublicKeyParts;
use serde::{Deserialize, Serialize};
use sha2::Sha384;

use super::{sha256, sha384, CryptoError};

pub const RSA_MODULUS_BITS: usize = 4096;
pub const RSA_MODULUS_LEN: usize = RSA_MODULUS_BITS / 8;
/// Modulus (big-endian) followed by the public exponent (u32 little-endian).
pub const RSA_PUBLIC_LEN: usize = RSA_MODULUS_LEN + 4;
pub const RSA_SIGNATURE_LEN: usize = RSA_MODULUS_LEN;
/// SEC1 uncompressed point.
pub const ECDSA_P384_PUBLIC_LEN: usize = 97;
/// Fixed-width `r || s`.
pub const ECDSA_P384_SIGNATURE_LEN: usize = 96;

/// P-384 group order, big-endian hex.
const P384_ORDER_HEX: &str = "ffffffffffffffffffffffffffffffffffffffffffffffffc7634d81f4372ddf581a0db248b0a77aecec196accc52973";

pub type Signature = Vec<u8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignatureScheme {
    RsaPss4096Sha384,
    EcdsaP384Sha384,
}

#[derive(Clone, PartialEq, Eq)]
pub enum PublicKey {
    Rsa(rsa::RsaPublicKey),
    Ecdsa(p384::ecdsa::VerifyingKey),
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let bytes = self.to_bytes();
        write!(f, "{:?}({}..)", self.scheme(), hex::encode(&bytes[..8]))
    }
}

impl PublicKey {
    pub fn scheme(&self) -> SignatureScheme {
        match self {
            PublicKey::Rsa(_) => SignatureScheme::RsaPss4096Sha384,
            PublicKey::Ecdsa(_) => SignatureScheme::EcdsaP384Sha384,
        }
    }

    /// Fixed-length encoding: 516 octets for RSA, 97 for ECDSA.
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            PublicKey::Rsa(pk) => {
                let n = pk.n().to_bytes_be();
                let mut out = vec![0u8; RSA_MODULUS_LEN - n.len()];
                out.extend_from_slice(&n);
                let e = pk.e().to_bytes_le();
                let mut e4 = [0u8; 4];
                e4[..e.len().min(4)].copy_from_slice(&e[..e.len().min(4)]);
                out.extend_from_slice(&e4);
                out
            }
            PublicKey::Ecdsa(vk) => vk.to_encoded_point(false).as_bytes().to_vec(),
        }
    }

    pub fn from_bytes(scheme: SignatureScheme, bytes: &[u8]) -> Result<Self, CryptoError> {
        match scheme {
            SignatureScheme::RsaPss4096Sha384 => {
                if bytes.len() != RSA_PUBLIC_LEN {
                    return Err(CryptoError::MalformedKey(format!(
                        "RSA public key must be {RSA_PUBLIC_LEN} octets"
                    )));
                }
                let n = rsa::BigUint::from_bytes_be(&bytes[..RSA_MODULUS_LEN]);
                if n.bits() != RSA_MODULUS_BITS {
                    return Err(CryptoError::MalformedKey("modulus is not 4096 bits".into()));
                }
                let e = u32::from_le_bytes(bytes[RSA_MODULUS_LEN..].try_into().unwrap());
                rsa::RsaPublicKey::new(n, rsa::BigUint::from(e))
                    .map(PublicKey::Rsa)
                    .map_err(|e| CryptoError::MalformedKey(e.to_string()))
            }
            SignatureScheme::EcdsaP384Sha384 => p384::ecdsa::VerifyingKey::from_sec1_bytes(bytes)
                .map(PublicKey::Ecdsa)
                .map_err(|e| CryptoError::MalformedKey(e.to_string())),
        }
    }

    /// Never panics; any malformed signature simply fails.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        match self {
            PublicKey::Rsa(pk) => {
                if signature.len() != RSA_SIGNATURE_LEN {
                    return false;
                }
                let Ok(sig) = rsa::pss::Signature::try_from(signature) else {
                    return false;
                };
                rsa::pss::VerifyingKey::<Sha384>::new(pk.clone())
                    .verify(message, &sig)
                    .is_ok()
            }
            PublicKey::Ecdsa(vk) => {
                let Ok(sig) = p384::ecdsa::Signature::from_slice(signature) else {
                    return false;
                };
                vk.verify(message, &sig).is_ok()
            }
        }
    }
}

#[derive(Clone)]
enum PrivateKey {
    Rsa(rsa::RsaPrivateKey),
    Ecdsa(p384::ecdsa::SigningKey),
}

/// A public key with an optional private half.
#[derive(Clone)]
pub struct SignatureKeyPair {
    public: PublicKey,
    private: Option<PrivateKey>,
}

impl std::fmt::Debug for SignatureKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SignatureKeyPair")
            .field("public", &self.public)
            .field("has_private", &self.private.is_some())
            .finish()
    }
}

fn rsa_cache() -> &'static Mutex<HashMap<u64, rsa::RsaPrivateKey>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, rsa::RsaPrivateKey>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl SignatureKeyPair {
    /// Deterministic RSA-4096 key generation from a seed. Generation costs
    /// seconds, so results are memoized per process.
    pub fn generate_rsa(seed: u64) -> Self {
        let mut cache = rsa_cache().lock().unwrap_or_else(|e| e.into_inner());
        let key = cache
            .entry(seed)
            .or_insert_with(|| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rsa::RsaPrivateKey::new(&mut rng, RSA_MODULUS_BITS)
                    .expect("RSA key generation with a valid size")
            })
            .clone();
        Self::from_rsa_private(key)
    }

    fn from_rsa_private(key: rsa::RsaPrivateKey) -> Self {
        SignatureKeyPair {
            public: PublicKey::Rsa(key.to_public_key()),
            private: Some(PrivateKey::Rsa(key)),
        }
    }

    pub fn from_public(public: PublicKey) -> Self {
        SignatureKeyPair {
            public,
            private: None,
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn public_bytes(&self) -> Vec<u8> {
        self.public.to_bytes()
    }

    pub fn scheme(&self) -> SignatureScheme {
        self.public.scheme()
    }

    pub fn has_private(&self) -> bool {
        self.private.is_some()
    }

    pub fn sign(&self, message: &[u8]) -> Result<Signature, CryptoError> {
        match self.private.as_ref().ok_or(CryptoError::MissingPrivateKey)? {
            PrivateKey::Rsa(sk) => {
                // Salt is random per the PSS contract; we derive it from the key
                // and message so that signing is reproducible.
                let mut seed_input = self.public.to_bytes();
                seed_input.extend_from_slice(message);
                let mut rng = ChaCha20Rng::from_seed(sha256(&seed_input));
                let signer = rsa::pss::SigningKey::<Sha384>::new(sk.clone());
                Ok(signer.sign_with_rng(&mut rng, message).to_vec())
            }
            PrivateKey::Ecdsa(sk) => {
                let sig: p384::ecdsa::Signature = sk.sign(message);
                Ok(sig.to_bytes().to_vec())
            }
        }
    }

    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        self.public.verify(message, signature)
    }

    pub fn to_pkcs8_pem(&self) -> Result<String, CryptoError> {
        match self.private.as_ref().ok_or(CryptoError::MissingPrivateKey)? {
            PrivateKey::Rsa(sk) => sk
                .to_pkcs8_pem(LineEnding::LF)
                .map(|s| s.to_string())
                .map_err(|e| CryptoError::MalformedKey(e.to_string())),
            PrivateKey::Ecdsa(sk) => {
                use p384::pkcs8::EncodePrivateKey as _;
                sk.to_pkcs8_pem(p384::pkcs8::LineEnding::LF)
                    .map(|s| s.to_string())
                    .map_err(|e| CryptoError::MalformedKey(e.to_string()))
            }
        }
    }

    /// Accepts an RSA-4096 or P-384 PKCS#8 private key.
    pub fn from_pkcs8_pem(pem: &str) -> Result<Self, CryptoError> {
        if let Ok(sk) = rsa::RsaPrivateKey::from_pkcs8_pem(pem) {
            if sk.n().bits() != RSA_MODULUS_BITS {
                return Err(CryptoError::MalformedKey("RSA key is not 4096 bits".into()));
            }
            return Ok(Self::from_rsa_private(sk));
        }
        use p384::pkcs8::DecodePrivateKey as _;
        let sk = p384::ecdsa::SigningKey::from_pkcs8_pem(pem)
            .map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
        Ok(SignatureKeyPair {
            public: PublicKey::Ecdsa(*sk.verifying_key()),
            private: Some(PrivateKey::Ecdsa(sk)),
        })
    }
}

fn p384_order() -> &'static BigUint {
    static ORDER: OnceLock<BigUint> = OnceLock::new();
    ORDER.get_or_init(|| BigUint::parse_bytes(P384_ORDER_HEX.as_bytes(), 16).unwrap())
}

/// The scalar used by [`keypair_from_seed`]: `(SHA384(label || seed) mod (n - 1)) + 1`.
pub fn scalar_from_seed(seed: &[u8; 32], label: &[u8]) -> [u8; 48] {
    let mut input = label.to_vec();
    input.extend_from_slice(seed);
    let h = BigUint::from_bytes_be(&sha384(&input));
    let n_minus_1 = p384_order() - 1u32;
    let scalar = (h % n_minus_1) + 1u32;
    let bytes = scalar.to_bytes_be();
    let mut out = [0u8; 48];
    out[48 - bytes.len()..].copy_from_slice(&bytes);
    out
}

type KeyCache = Mutex<HashMap<(Vec<u8>, [u8; 32]), SignatureKeyPair>>;

fn seed_key_cache() -> &'static KeyCache {
    static CACHE: OnceLock<KeyCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Deterministic ECDSA-P384 key pair from a 32-octet seed and a domain label.
///
/// Point multiplication dominates simulated boots, so derived pairs are
/// memoized (bounded) per process.
pub fn keypair_from_seed(seed: &[u8; 32], label: &[u8]) -> SignatureKeyPair {
    let key = (label.to_vec(), *seed);
    if let Some(kp) = seed_key_cache().lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
        return kp.clone();
    }
    let scalar = scalar_from_seed(seed, label);
    let sk = p384::ecdsa::SigningKey::from_bytes(&scalar.into())
        .expect("scalar is in [1, n-1] by construction");
    let kp = SignatureKeyPair {
        public: PublicKey::Ecdsa(*sk.verifying_key()),
        private: Some(PrivateKey::Ecdsa(sk)),
    };
    let mut cache = seed_key_cache().lock().unwrap_or_else(|e| e.into_inner());
    if cache.len() >= 4096 {
        cache.clear();
    }
    cache.insert(key, kp.clone());
    kp
}
