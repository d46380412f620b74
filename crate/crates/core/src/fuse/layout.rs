// Licensed under the Apache-2.0 license

//! Secret fuse window layout and the metadata TMR bitmap.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FuseError;

/// SMN base of the secret fuse window.
pub const FUSE_WINDOW_BASE: u32 = 0x5D000;
pub const FUSE_WINDOW_LEN: usize = 0x1000;
pub const FUSE_WINDOW_BITS: u32 = (FUSE_WINDOW_LEN * 8) as u32;

/// A field within the secret window, offsets relative to [`FUSE_WINDOW_BASE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FuseField {
    pub name: &'static str,
    pub offset: u32,
    pub bits: u32,
}

impl FuseField {
    const fn bytes(name: &'static str, offset: u32, len: u32) -> Self {
        FuseField {
            name,
            offset,
            bits: len * 8,
        }
    }

    const fn bits(name: &'static str, offset: u32, bits: u32) -> Self {
        FuseField { name, offset, bits }
    }

    pub fn first_bit(&self) -> u32 {
        self.offset * 8
    }

    pub fn bit_range(&self) -> std::ops::Range<u32> {
        self.first_bit()..self.first_bit() + self.bits
    }

    pub fn byte_len(&self) -> usize {
        self.bits.div_ceil(8) as usize
    }

    pub fn smn_address(&self) -> u32 {
        FUSE_WINDOW_BASE + self.offset
    }
}

pub const CEK_ROOT_SEED: FuseField = FuseField::bytes("cek_root_seed", 0x044, 32);
pub const PSB_COMMIT_FLAGS: FuseField = FuseField::bits("psb_commit_flags", 0x06C, 3);
pub const CUSTOM_PK_SHA384: FuseField = FuseField::bytes("custom_pk_sha384", 0x074, 48);
pub const CUSTOM_PK_ECC: FuseField = FuseField::bytes("custom_pk_ecc", 0x0A4, 30);
pub const VCEK_ROOT_SEED: FuseField = FuseField::bytes("vcek_root_seed", 0x0C4, 32);
pub const VCEK_ECC: FuseField = FuseField::bytes("vcek_ecc", 0x0E4, 20);
pub const METADATA_BITMAP: FuseField = FuseField::bytes("metadata_bitmap", 0x0F8, 3);
pub const CUSTOM_PK_FLETCHER: FuseField = FuseField::bytes("custom_pk_fletcher", 0x0FC, 4);
pub const VCEK_FLETCHER: FuseField = FuseField::bytes("vcek_fletcher", 0x100, 4);
pub const PSB_MODEL_ID: FuseField = FuseField::bits("psb_model_id", 0x108, 4);
pub const PSB_VENDOR_ID: FuseField = FuseField::bits("psb_vendor_id", 0x109, 8);
pub const PSB_ENABLE: FuseField = FuseField::bits("psb_enable", 0x10C, 1);

pub const ALL_FIELDS: [FuseField; 12] = [
    CEK_ROOT_SEED,
    PSB_COMMIT_FLAGS,
    CUSTOM_PK_SHA384,
    CUSTOM_PK_ECC,
    VCEK_ROOT_SEED,
    VCEK_ECC,
    METADATA_BITMAP,
    CUSTOM_PK_FLETCHER,
    VCEK_FLETCHER,
    PSB_MODEL_ID,
    PSB_VENDOR_ID,
    PSB_ENABLE,
];

/// Fields that reject burns while write protection is enabled.
pub const WRITE_PROTECTED_FIELDS: [FuseField; 7] = [
    CEK_ROOT_SEED,
    CUSTOM_PK_SHA384,
    CUSTOM_PK_ECC,
    CUSTOM_PK_FLETCHER,
    VCEK_ROOT_SEED,
    VCEK_ECC,
    VCEK_FLETCHER,
];

pub fn is_write_protected_bit(bit: u32) -> bool {
    WRITE_PROTECTED_FIELDS
        .iter()
        .any(|f| f.bit_range().contains(&bit))
}

/// A redundancy-protected payload region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    VcekSeed,
    CustomPk,
}

impl Region {
    pub fn payload(self) -> FuseField {
        match self {
            Region::VcekSeed => VCEK_ROOT_SEED,
            Region::CustomPk => CUSTOM_PK_SHA384,
        }
    }

    pub fn ecc(self) -> FuseField {
        match self {
            Region::VcekSeed => VCEK_ECC,
            Region::CustomPk => CUSTOM_PK_ECC,
        }
    }

    pub fn fletcher(self) -> FuseField {
        match self {
            Region::VcekSeed => VCEK_FLETCHER,
            Region::CustomPk => CUSTOM_PK_FLETCHER,
        }
    }

    pub fn ecc_enable(self) -> MetadataFlag {
        match self {
            Region::VcekSeed => MetadataFlag::VcekEccEnable,
            Region::CustomPk => MetadataFlag::CustomPkEccEnable,
        }
    }

    pub fn fletcher_enable(self) -> MetadataFlag {
        match self {
            Region::VcekSeed => MetadataFlag::VcekFletcherEnable,
            Region::CustomPk => MetadataFlag::CustomPkFletcherEnable,
        }
    }
}

/// Logical flags stored with triple modular redundancy in the metadata
/// bitmap at 0x5D0F8..=0x5D0FA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetadataFlag {
    PkRevocation1,
    PkRevocation2,
    PkRevocation3,
    CustomPkRevocation,
    CustomPkEccEnable,
    CustomPkFletcherEnable,
    VcekEccEnable,
    VcekFletcherEnable,
}

impl MetadataFlag {
    pub const ALL: [MetadataFlag; 8] = [
        MetadataFlag::PkRevocation1,
        MetadataFlag::PkRevocation2,
        MetadataFlag::PkRevocation3,
        MetadataFlag::CustomPkRevocation,
        MetadataFlag::CustomPkEccEnable,
        MetadataFlag::CustomPkFletcherEnable,
        MetadataFlag::VcekEccEnable,
        MetadataFlag::VcekFletcherEnable,
    ];

    /// (byte offset within the bitmap, bit) for replicas R1, R2, R3.
    pub fn replica_positions(self) -> [(u32, u32); 3] {
        use MetadataFlag::*;
        match self {
            PkRevocation1 => [(0, 0), (0, 4), (1, 0)],
            PkRevocation2 => [(0, 1), (0, 5), (1, 1)],
            PkRevocation3 => [(0, 2), (0, 6), (1, 2)],
            CustomPkRevocation => [(0, 3), (0, 7), (1, 3)],
            CustomPkEccEnable => [(1, 4), (1, 5), (1, 6)],
            CustomPkFletcherEnable => [(1, 7), (2, 0), (2, 1)],
            VcekEccEnable => [(2, 2), (2, 3), (2, 4)],
            VcekFletcherEnable => [(2, 5), (2, 6), (2, 7)],
        }
    }

    /// Bit indices within the secret window for R1, R2, R3.
    pub fn replica_bits(self) -> [u32; 3] {
        self.replica_positions()
            .map(|(byte, bit)| (METADATA_BITMAP.offset + byte) * 8 + bit)
    }

    pub fn name(self) -> &'static str {
        use MetadataFlag::*;
        match self {
            PkRevocation1 => "pk_revocation_1",
            PkRevocation2 => "pk_revocation_2",
            PkRevocation3 => "pk_revocation_3",
            CustomPkRevocation => "custom_pk_revocation",
            CustomPkEccEnable => "custom_pk_ecc_enable",
            CustomPkFletcherEnable => "custom_pk_fletcher_enable",
            VcekEccEnable => "vcek_ecc_enable",
            VcekFletcherEnable => "vcek_fletcher_enable",
        }
    }
}

impl FromStr for MetadataFlag {
    type Err = FuseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetadataFlag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FuseError::UnknownFlag(s.to_string()))
    }
}

/// The three raw octets of the metadata bitmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetadataBitmap(pub [u8; 3]);

impl MetadataBitmap {
    pub fn replicas(&self, flag: MetadataFlag) -> [bool; 3] {
        flag.replica_positions()
            .map(|(byte, bit)| self.0[byte as usize] >> bit & 1 == 1)
    }

    pub fn set_replica(&mut self, flag: MetadataFlag, replica: usize, value: bool) {
        let (byte, bit) = flag.replica_positions()[replica];
        if value {
            self.0[byte as usize] |= 1 << bit;
        } else {
            self.0[byte as usize] &= !(1 << bit);
        }
    }
}

/// 2-of-3 majority over the flag's replicas.
pub fn resolve_flag(bitmap: &MetadataBitmap, flag: MetadataFlag) -> bool {
    let [a, b, c] = bitmap.replicas(flag);
    (a && b) || (a && c) || (b && c)
}
