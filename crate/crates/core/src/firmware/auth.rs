// Licensed under the Apache-2.0 license

//! Per-generation signing, encryption and the wrapped IKEK entry.

use super::{AuthScheme, FirmwareError, FirmwareModule, IkekEntry, FLAG_ENCRYPTED};
use crate::crypto::{
    aes128_cbc, aes128_ecb, hmac_sha256, hmac_sha256_verify, sha256, Direction, PublicKey,
    SignatureKeyPair, SignatureScheme, SymmetricKey128,
};

pub fn make_ikek_entry(ikek: &SymmetricKey128, bootrom_key: &SymmetricKey128, scheme: AuthScheme) -> IkekEntry {
    let wrapped: [u8; 16] = aes128_ecb(bootrom_key, ikek.as_bytes(), Direction::Encrypt)
        .expect("one block")
        .try_into()
        .unwrap();
    let hmac_tag = if scheme.ikek_is_authenticated() {
        hmac_sha256(bootrom_key.as_bytes(), &wrapped)
    } else {
        [0; 32]
    };
    IkekEntry {
        wrapped_ikek: wrapped,
        hmac_tag,
    }
}

impl IkekEntry {
    /// HMAC check (skipped under Zen1), then ECB unwrap.
    pub fn unwrap(&self, bootrom_key: &SymmetricKey128, scheme: AuthScheme) -> Result<SymmetricKey128, FirmwareError> {
        if scheme.ikek_is_authenticated() && !self.tag_valid(bootrom_key) {
            return Err(FirmwareError::IkekAuthFailed);
        }
        let plain = aes128_ecb(bootrom_key, &self.wrapped_ikek, Direction::Decrypt)?;
        Ok(SymmetricKey128::from_slice(&plain)?)
    }

    pub fn tag_valid(&self, bootrom_key: &SymmetricKey128) -> bool {
        hmac_sha256_verify(bootrom_key.as_bytes(), &self.wrapped_ikek, &self.hmac_tag)
    }
}

/// CBC-encrypts the body under `mek` and stores `mek` wrapped by `ikek`.
pub fn encrypt_module(
    module: &FirmwareModule,
    mek: &SymmetricKey128,
    iv: [u8; 16],
    ikek: &SymmetricKey128,
) -> Result<FirmwareModule, FirmwareError> {
    if module.header.encrypted() {
        return Err(FirmwareError::AlreadyEncrypted);
    }
    let body = aes128_cbc(mek, &iv, &module.body, Direction::Encrypt).map_err(|_| FirmwareError::Misaligned)?;
    let mut out = module.clone();
    out.header.wrapped_mek = aes128_ecb(ikek, mek.as_bytes(), Direction::Encrypt)?
        .try_into()
        .unwrap();
    out.header.iv = iv;
    out.header.flags |= FLAG_ENCRYPTED;
    out.body = body;
    Ok(out)
}

/// MEK = ECB-dec(IKEK, wrapped MEK); body = CBC-dec(MEK, IV). Plain
/// modules are returned as is.
pub fn decrypt_body(module: &FirmwareModule, ikek: Option<&SymmetricKey128>) -> Result<Vec<u8>, FirmwareError> {
    if !module.header.encrypted() {
        return Ok(module.body.clone());
    }
    let ikek = ikek.ok_or(FirmwareError::MissingIkek)?;
    let mek = SymmetricKey128::from_slice(&aes128_ecb(ikek, &module.header.wrapped_mek, Direction::Decrypt)?)?;
    aes128_cbc(&mek, &module.header.iv, &module.body, Direction::Decrypt).map_err(|_| FirmwareError::Misaligned)
}

/// Octets covered by the signature: the header with its signature field
/// zeroed, then the first `signed_size` octets of the plaintext (Zen1) or
/// of the stored body (Zen3, Zen4/5).
pub fn signed_message(module: &FirmwareModule, scheme: AuthScheme, plaintext: &[u8]) -> Vec<u8> {
    let form = match scheme {
        AuthScheme::Zen1 => plaintext,
        AuthScheme::Zen3Milan | AuthScheme::Zen45 => &module.body,
    };
    let signed = (module.header.signed_size as usize).min(form.len());
    let mut msg = module.header.to_signed_bytes();
    msg.extend_from_slice(&form[..signed]);
    msg
}

/// Embeds the signer key, fills `body_sha256` for Zen4/5 and signs.
/// `ikek` recovers the plaintext of encrypted modules where the scheme
/// needs it.
pub fn sign_module(
    module: &FirmwareModule,
    signer: &SignatureKeyPair,
    scheme: AuthScheme,
    ikek: Option<&SymmetricKey128>,
) -> Result<FirmwareModule, FirmwareError> {
    if signer.scheme() != SignatureScheme::RsaPss4096Sha384 {
        return Err(FirmwareError::BadSignerKey);
    }
    let mut out = module.clone();
    out.header.signer_key = signer.public_bytes();
    let needs_plain = matches!(scheme, AuthScheme::Zen1 | AuthScheme::Zen45);
    let plaintext = if needs_plain {
        decrypt_body(&out, ikek).map_err(|e| match e {
            FirmwareError::MissingIkek => FirmwareError::MissingPlaintext,
            other => other,
        })?
    } else {
        Vec::new()
    };
    out.header.body_sha256 = match scheme {
        AuthScheme::Zen45 => sha256(&plaintext),
        _ => [0; 32],
    };
    out.header.signature = signer.sign(&signed_message(&out, scheme, &plaintext))?;
    Ok(out)
}

/// Checks the signature against the module-carried key and returns the
/// plaintext body. Does not judge whether the signer is trusted.
pub fn verify_module(
    module: &FirmwareModule,
    scheme: AuthScheme,
    ikek: Option<&SymmetricKey128>,
) -> Result<Vec<u8>, FirmwareError> {
    let key = PublicKey::from_bytes(SignatureScheme::RsaPss4096Sha384, &module.header.signer_key)
        .map_err(|_| FirmwareError::BadSignerKey)?;
    match scheme {
        AuthScheme::Zen1 => {
            let plain = decrypt_body(module, ikek)?;
            if !key.verify(&signed_message(module, scheme, &plain), &module.header.signature) {
                return Err(FirmwareError::SignatureInvalid);
            }
            Ok(plain)
        }
        AuthScheme::Zen3Milan | AuthScheme::Zen45 => {
            if !key.verify(&signed_message(module, scheme, &[]), &module.header.signature) {
                return Err(FirmwareError::SignatureInvalid);
            }
            let plain = decrypt_body(module, ikek)?;
            if scheme == AuthScheme::Zen45 && sha256(&plain) != module.header.body_sha256 {
                return Err(FirmwareError::PlaintextHashMismatch);
            }
            Ok(plain)
        }
    }
}
