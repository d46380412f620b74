// Licensed under the Apache-2.0 license

//! Fuse programming driver. Speaks only MMIO, so the same code runs from
//! the factory tooling and from payload code holding an SMN capability.

use super::{
    layout, FuseError, Region, SmnBus, BURNER_ADDR_SELECT, BURNER_CONTROL, BURNER_STATUS,
    CONTROL_ARM, FUSE_WINDOW_BASE, FUSE_WINDOW_BITS, SELECT_TRIGGER, STATUS_BUSY, STATUS_DONE,
    STATUS_SEQ_FAULT, STATUS_WP_FAULT,
};
use crate::crypto::{fletcher32, secded_encode};

pub const MAX_BUSY_POLLS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurnStatus {
    Burned,
    /// The shadow read already showed the bit as 1; nothing was issued.
    AlreadySet,
}

fn wait_idle<B: SmnBus + ?Sized>(bus: &mut B) -> Result<u32, FuseError> {
    for _ in 0..MAX_BUSY_POLLS {
        let status = bus.mmio_read(BURNER_STATUS)?;
        if status & STATUS_BUSY == 0 {
            return Ok(status);
        }
    }
    Err(FuseError::BurnerBusy)
}

/// Blows one fuse bit of the secret window.
///
/// Sequence: shadow read of the containing word, poll busy at 0x5E000,
/// arm via 0x5E014, load the selector and toggle the trigger at 0x5E004,
/// poll again and check the completion bits.
pub fn program_fuse_bit<B: SmnBus + ?Sized>(bus: &mut B, bit: u32) -> Result<BurnStatus, FuseError> {
    if bit >= FUSE_WINDOW_BITS {
        return Err(FuseError::BitOutOfRange(bit));
    }
    // Post-latch this reads zero, so the burn is issued regardless.
    let shadow = bus.mmio_read(FUSE_WINDOW_BASE + (bit / 32) * 4)?;
    if shadow >> (bit % 32) & 1 == 1 {
        return Ok(BurnStatus::AlreadySet);
    }

    wait_idle(bus)?;
    bus.mmio_write(BURNER_CONTROL, CONTROL_ARM)?;
    bus.mmio_write(BURNER_ADDR_SELECT, bit)?;
    bus.mmio_write(BURNER_ADDR_SELECT, bit | SELECT_TRIGGER)?;
    let status = wait_idle(bus)?;

    if status & STATUS_WP_FAULT != 0 {
        return Err(FuseError::WriteProtected(bit));
    }
    if status & STATUS_SEQ_FAULT != 0 {
        return Err(FuseError::SequenceFault);
    }
    if status & STATUS_DONE == 0 {
        return Err(FuseError::BurnFailed(bit));
    }
    Ok(BurnStatus::Burned)
}

fn burn_bytes<B: SmnBus + ?Sized>(bus: &mut B, first_bit: u32, bytes: &[u8]) -> Result<(), FuseError> {
    for (i, byte) in bytes.iter().enumerate() {
        for k in 0..8 {
            if byte >> k & 1 == 1 {
                program_fuse_bit(bus, first_bit + (i as u32) * 8 + k)?;
            }
        }
    }
    Ok(())
}

/// Burns the payload and, as requested, per-byte SEC-DED check bits
/// (5 bits per byte, packed little-endian), the Fletcher-32 checksum and
/// all three replicas of each enable flag.
pub fn provision_with_redundancy<B: SmnBus + ?Sized>(
    bus: &mut B,
    region: Region,
    payload: &[u8],
    enable_ecc: bool,
    enable_fletcher: bool,
) -> Result<(), FuseError> {
    let field = region.payload();
    if payload.len() != field.byte_len() {
        return Err(FuseError::PayloadLength {
            expected: field.byte_len(),
            got: payload.len(),
        });
    }
    burn_bytes(bus, field.first_bit(), payload)?;

    if enable_ecc {
        let ecc_field = region.ecc();
        let mut packed = vec![0u8; ecc_field.byte_len()];
        for (i, byte) in payload.iter().enumerate() {
            let check = secded_encode(*byte).check;
            for k in 0..5 {
                if check >> k & 1 == 1 {
                    let bit = i * 5 + k;
                    packed[bit / 8] |= 1 << (bit % 8);
                }
            }
        }
        burn_bytes(bus, ecc_field.first_bit(), &packed)?;
        for bit in region.ecc_enable().replica_bits() {
            program_fuse_bit(bus, bit)?;
        }
    }
    if enable_fletcher {
        burn_bytes(bus, region.fletcher().first_bit(), &fletcher32(payload).to_le_bytes())?;
        for bit in region.fletcher_enable().replica_bits() {
            program_fuse_bit(bus, bit)?;
        }
    }
    Ok(())
}

const _: () = assert!(layout::VCEK_ECC.bits >= 32 * 5 && layout::CUSTOM_PK_ECC.bits >= 48 * 5);
