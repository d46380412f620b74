// Licensed under the Apache-2.0 license

//! Flash container and firmware module formats.
//!
//! All multi-octet integers are little-endian.
//!
//! ```text
//! flash:   "ASIM" | u32 count | count x (u32 type, u32 offset, u32 size) | blob
//! module:  0x480-octet header | body
//!   0x000  magic "ASFM"
//!   0x004  svn (u8)
//!   0x005  flags (bit 0: body encrypted)
//!   0x008  load_addr (u32)
//!   0x00C  signed_size (u32)
//!   0x010  image_size (u32)
//!   0x020  wrapped MEK (16)
//!   0x030  IV (16)
//!   0x040  SHA-256 of plaintext body (32, Zen 4/5 scheme only)
//!   0x060  RSA-PSS signature (512)
//!   0x260  signer public key: modulus BE (512) | exponent (u32)
//! ikek entry: wrapped IKEK (16) | HMAC-SHA256 tag (32)
//! ```
//!
//! Entry offsets are relative to the start of the blob.

mod attack_image;
mod auth;

pub use attack_image::{
    assemble_attack_image, craft_attack_image, AttackLayout, PayloadDescriptor, ATTACK_PAYLOAD_ADDR, NOP_WORD, PAYLOAD_MAGIC,
    RELOC_STUB_MARKER,
};
pub use auth::{
    decrypt_body, encrypt_module, make_ikek_entry, sign_module, signed_message, verify_module,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{sha384, CryptoError, RSA_PUBLIC_LEN, RSA_SIGNATURE_LEN};

pub const FLASH_MAGIC: [u8; 4] = *b"ASIM";
pub const MODULE_MAGIC: [u8; 4] = *b"ASFM";
pub const MODULE_HEADER_LEN: usize = 0x480;
pub const IKEK_ENTRY_LEN: usize = 48;

pub const FLAG_ENCRYPTED: u8 = 1 << 0;

const OFF_SVN: usize = 0x04;
const OFF_FLAGS: usize = 0x05;
const OFF_LOAD_ADDR: usize = 0x08;
const OFF_SIGNED_SIZE: usize = 0x0C;
const OFF_IMAGE_SIZE: usize = 0x10;
const OFF_WRAPPED_MEK: usize = 0x20;
const OFF_IV: usize = 0x30;
const OFF_BODY_SHA256: usize = 0x40;
const OFF_SIGNATURE: usize = 0x60;
const OFF_SIGNER_KEY: usize = OFF_SIGNATURE + RSA_SIGNATURE_LEN;

const _: () = assert!(OFF_SIGNER_KEY + RSA_PUBLIC_LEN <= MODULE_HEADER_LEN);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FirmwareError {
    #[error("bad magic")]
    BadMagic,
    #[error("input truncated: need {need} octets, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("directory entry {entry_type:#x} at {offset:#x}+{size:#x} exceeds blob of {blob_len:#x}")]
    OutOfBounds {
        entry_type: u32,
        offset: u32,
        size: u32,
        blob_len: usize,
    },
    #[error("duplicate directory entry {0:#x}")]
    DuplicateEntry(u32),
    #[error("unknown directory entry type {0:#x}")]
    UnknownEntryType(u32),
    #[error("module image_size {header} does not match body length {body}")]
    SizeMismatch { header: u32, body: usize },
    #[error("signed_size {signed} exceeds image_size {image}")]
    SignedSizeTooLarge { signed: u32, image: u32 },
    #[error("encrypted body is not block aligned")]
    Misaligned,
    #[error("scheme requires the plaintext body but no IKEK was supplied")]
    MissingPlaintext,
    #[error("module is already encrypted")]
    AlreadyEncrypted,
    #[error("wrapped IKEK failed HMAC validation")]
    IkekAuthFailed,
    #[error("module is encrypted but no IKEK is available")]
    MissingIkek,
    #[error("signer public key is malformed")]
    BadSignerKey,
    #[error("signature verification failed")]
    SignatureInvalid,
    #[error("plaintext SHA-256 does not match the header")]
    PlaintextHashMismatch,
    #[error("recovery module must be a Zen3-signed encrypted module")]
    NotLegacyEncrypted,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// ASP authentication scheme generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthScheme {
    /// Signature over header and decrypted body; IKEK entry not authenticated.
    Zen1,
    /// Signature over header and encrypted body; IKEK entry HMAC'd.
    #[serde(rename = "zen3", alias = "zen3milan")]
    Zen3Milan,
    /// Zen3 plus a SHA-256 of the decrypted body in the signed header.
    Zen45,
}

impl AuthScheme {
    pub const ALL: [AuthScheme; 3] = [AuthScheme::Zen1, AuthScheme::Zen3Milan, AuthScheme::Zen45];

    pub fn ikek_is_authenticated(self) -> bool {
        !matches!(self, AuthScheme::Zen1)
    }

    pub fn name(self) -> &'static str {
        match self {
            AuthScheme::Zen1 => "zen1",
            AuthScheme::Zen3Milan => "zen3",
            AuthScheme::Zen45 => "zen45",
        }
    }
}

impl std::str::FromStr for AuthScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zen1" => Ok(AuthScheme::Zen1),
            "zen3" | "zen3milan" | "milan" => Ok(AuthScheme::Zen3Milan),
            "zen45" | "zen4" | "zen5" => Ok(AuthScheme::Zen45),
            other => Err(format!("unknown scheme {other:?} (expected zen1, zen3 or zen45)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntryType {
    PrimaryBootloader = 0x1,
    SevFirmware = 0x2,
    RecoveryBootloader = 0x3,
    Microcode = 0x4,
    WrappedIkek = 0x21,
}

impl EntryType {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Result<Self, FirmwareError> {
        Ok(match code {
            0x1 => EntryType::PrimaryBootloader,
            0x2 => EntryType::SevFirmware,
            0x3 => EntryType::RecoveryBootloader,
            0x4 => EntryType::Microcode,
            0x21 => EntryType::WrappedIkek,
            other => return Err(FirmwareError::UnknownEntryType(other)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectoryEntry {
    pub entry_type: EntryType,
    pub offset: u32,
    pub size: u32,
}

/// Directory-of-entries flash image.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlashImage {
    entries: Vec<DirectoryEntry>,
    blob: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

impl FlashImage {
    /// Lays out entries back to back in the given order.
    pub fn from_parts(parts: Vec<(EntryType, Vec<u8>)>) -> Result<Self, FirmwareError> {
        let mut entries = Vec::with_capacity(parts.len());
        let mut blob = Vec::new();
        for (entry_type, data) in parts {
            if entries.iter().any(|e: &DirectoryEntry| e.entry_type == entry_type) {
                return Err(FirmwareError::DuplicateEntry(entry_type.code()));
            }
            entries.push(DirectoryEntry {
                entry_type,
                offset: blob.len() as u32,
                size: data.len() as u32,
            });
            blob.extend_from_slice(&data);
        }
        Ok(FlashImage { entries, blob })
    }

    pub fn entries(&self) -> &[DirectoryEntry] {
        &self.entries
    }

    pub fn blob(&self) -> &[u8] {
        &self.blob
    }

    pub fn entry_data(&self, entry_type: EntryType) -> Option<&[u8]> {
        self.entries
            .iter()
            .find(|e| e.entry_type == entry_type)
            .map(|e| &self.blob[e.offset as usize..(e.offset + e.size) as usize])
    }

    pub fn parts(&self) -> Vec<(EntryType, Vec<u8>)> {
        self.entries
            .iter()
            .map(|e| (e.entry_type, self.entry_data(e.entry_type).unwrap().to_vec()))
            .collect()
    }

    /// Returns a copy with `entry_type` replaced (or appended).
    pub fn with_entry(&self, entry_type: EntryType, data: Vec<u8>) -> Self {
        let mut parts = self.parts();
        match parts.iter_mut().find(|(t, _)| *t == entry_type) {
            Some(slot) => slot.1 = data,
            None => parts.push((entry_type, data)),
        }
        Self::from_parts(parts).expect("entry types stay unique")
    }

    pub fn module(&self, entry_type: EntryType) -> Option<Result<FirmwareModule, FirmwareError>> {
        self.entry_data(entry_type).map(FirmwareModule::parse)
    }

    pub fn ikek_entry(&self) -> Option<Result<IkekEntry, FirmwareError>> {
        self.entry_data(EntryType::WrappedIkek).map(IkekEntry::parse)
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.entries.len() * 12 + self.blob.len());
        out.extend_from_slice(&FLASH_MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.entry_type.code().to_le_bytes());
            out.extend_from_slice(&e.offset.to_le_bytes());
            out.extend_from_slice(&e.size.to_le_bytes());
        }
        out.extend_from_slice(&self.blob);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FirmwareError> {
        if bytes.len() < 8 {
            return Err(FirmwareError::Truncated {
                need: 8,
                have: bytes.len(),
            });
        }
        if bytes[..4] != FLASH_MAGIC {
            return Err(FirmwareError::BadMagic);
        }
        let count = read_u32(bytes, 4) as usize;
        let dir_end = count
            .checked_mul(12)
            .and_then(|n| n.checked_add(8))
            .filter(|&n| n <= bytes.len())
            .ok_or(FirmwareError::Truncated {
                need: 8usize.saturating_add(count.saturating_mul(12)),
                have: bytes.len(),
            })?;
        let blob = bytes[dir_end..].to_vec();
        let mut entries: Vec<DirectoryEntry> = Vec::with_capacity(count);
        for i in 0..count {
            let at = 8 + i * 12;
            let code = read_u32(bytes, at);
            let offset = read_u32(bytes, at + 4);
            let size = read_u32(bytes, at + 8);
            let entry_type = EntryType::from_code(code)?;
            if entries.iter().any(|e| e.entry_type == entry_type) {
                return Err(FirmwareError::DuplicateEntry(code));
            }
            let end = offset as u64 + size as u64;
            if end > blob.len() as u64 {
                return Err(FirmwareError::OutOfBounds {
                    entry_type: code,
                    offset,
                    size,
                    blob_len: blob.len(),
                });
            }
            entries.push(DirectoryEntry {
                entry_type,
                offset,
                size,
            });
        }
        Ok(FlashImage { entries, blob })
    }
}

/// Parsed module header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleHeader {
    pub svn: u8,
    pub flags: u8,
    pub load_addr: u32,
    pub signed_size: u32,
    pub image_size: u32,
    pub wrapped_mek: [u8; 16],
    pub iv: [u8; 16],
    pub body_sha256: [u8; 32],
    pub signature: Vec<u8>,
    pub signer_key: Vec<u8>,
}

impl ModuleHeader {
    pub fn new(svn: u8, load_addr: u32, image_size: u32) -> Self {
        ModuleHeader {
            svn,
            flags: 0,
            load_addr,
            signed_size: image_size,
            image_size,
            wrapped_mek: [0; 16],
            iv: [0; 16],
            body_sha256: [0; 32],
            signature: vec![0; RSA_SIGNATURE_LEN],
            signer_key: vec![0; RSA_PUBLIC_LEN],
        }
    }

    pub fn encrypted(&self) -> bool {
        self.flags & FLAG_ENCRYPTED != 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = vec![0u8; MODULE_HEADER_LEN];
        h[..4].copy_from_slice(&MODULE_MAGIC);
        h[OFF_SVN] = self.svn;
        h[OFF_FLAGS] = self.flags;
        h[OFF_LOAD_ADDR..OFF_LOAD_ADDR + 4].copy_from_slice(&self.load_addr.to_le_bytes());
        h[OFF_SIGNED_SIZE..OFF_SIGNED_SIZE + 4].copy_from_slice(&self.signed_size.to_le_bytes());
        h[OFF_IMAGE_SIZE..OFF_IMAGE_SIZE + 4].copy_from_slice(&self.image_size.to_le_bytes());
        h[OFF_WRAPPED_MEK..OFF_WRAPPED_MEK + 16].copy_from_slice(&self.wrapped_mek);
        h[OFF_IV..OFF_IV + 16].copy_from_slice(&self.iv);
        h[OFF_BODY_SHA256..OFF_BODY_SHA256 + 32].copy_from_slice(&self.body_sha256);
        let sig_len = self.signature.len().min(RSA_SIGNATURE_LEN);
        h[OFF_SIGNATURE..OFF_SIGNATURE + sig_len].copy_from_slice(&self.signature[..sig_len]);
        let key_len = self.signer_key.len().min(RSA_PUBLIC_LEN);
        h[OFF_SIGNER_KEY..OFF_SIGNER_KEY + key_len].copy_from_slice(&self.signer_key[..key_len]);
        h
    }

    /// Header bytes as covered by the signature: signature field zeroed.
    pub fn to_signed_bytes(&self) -> Vec<u8> {
        let mut h = self.to_bytes();
        h[OFF_SIGNATURE..OFF_SIGNATURE + RSA_SIGNATURE_LEN].fill(0);
        h
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FirmwareError> {
        if bytes.len() < MODULE_HEADER_LEN {
            return Err(FirmwareError::Truncated {
                need: MODULE_HEADER_LEN,
                have: bytes.len(),
            });
        }
        if bytes[..4] != MODULE_MAGIC {
            return Err(FirmwareError::BadMagic);
        }
        let arr16 = |at: usize| -> [u8; 16] { bytes[at..at + 16].try_into().unwrap() };
        Ok(ModuleHeader {
            svn: bytes[OFF_SVN],
            flags: bytes[OFF_FLAGS],
            load_addr: read_u32(bytes, OFF_LOAD_ADDR),
            signed_size: read_u32(bytes, OFF_SIGNED_SIZE),
            image_size: read_u32(bytes, OFF_IMAGE_SIZE),
            wrapped_mek: arr16(OFF_WRAPPED_MEK),
            iv: arr16(OFF_IV),
            body_sha256: bytes[OFF_BODY_SHA256..OFF_BODY_SHA256 + 32].try_into().unwrap(),
            signature: bytes[OFF_SIGNATURE..OFF_SIGNATURE + RSA_SIGNATURE_LEN].to_vec(),
            signer_key: bytes[OFF_SIGNER_KEY..OFF_SIGNER_KEY + RSA_PUBLIC_LEN].to_vec(),
        })
    }
}

/// Header plus (possibly encrypted) body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareModule {
    pub header: ModuleHeader,
    pub body: Vec<u8>,
}

impl FirmwareModule {
    /// Unsigned, unencrypted module whose size fields match `body`.
    pub fn new(svn: u8, load_addr: u32, body: Vec<u8>) -> Self {
        FirmwareModule {
            header: ModuleHeader::new(svn, load_addr, body.len() as u32),
            body,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes();
        out.extend_from_slice(&self.body);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FirmwareError> {
        let header = ModuleHeader::parse(bytes)?;
        let body = bytes[MODULE_HEADER_LEN..].to_vec();
        if header.image_size as usize != body.len() {
            return Err(FirmwareError::SizeMismatch {
                header: header.image_size,
                body: body.len(),
            });
        }
        if header.signed_size > header.image_size {
            return Err(FirmwareError::SignedSizeTooLarge {
                signed: header.signed_size,
                image: header.image_size,
            });
        }
        Ok(FirmwareModule { header, body })
    }

    /// SHA-384 of the module-carried signer key, compared against the
    /// BootROM's root key digest.
    pub fn signer_digest(&self) -> [u8; 48] {
        sha384(&self.header.signer_key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IkekEntry {
    pub wrapped_ikek: [u8; 16],
    pub hmac_tag: [u8; 32],
}

impl IkekEntry {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.wrapped_ikek.to_vec();
        out.extend_from_slice(&self.hmac_tag);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FirmwareError> {
        if bytes.len() != IKEK_ENTRY_LEN {
            return Err(FirmwareError::Truncated {
                need: IKEK_ENTRY_LEN,
                have: bytes.len(),
            });
        }
        Ok(IkekEntry {
            wrapped_ikek: bytes[..16].try_into().unwrap(),
            hmac_tag: bytes[16..].try_into().unwrap(),
        })
    }
}
