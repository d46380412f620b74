// Licensed under the Apache-2.0 license

//! One-time-programmable fuse fabric.
//!
//! The secret window (0x5D000..0x5E000) is readable over SMN until the
//! BootROM engages the read latch; after that every read returns zero until
//! the next cold power cycle. Burning goes through a separate burner block
//! at 0x5E000..0x5E018 that is *not* gated by the latch. Data fuses are
//! never written directly.

mod burner;
pub mod layout;

pub use burner::{program_fuse_bit, provision_with_redundancy, BurnStatus, MAX_BUSY_POLLS};
pub use layout::{
    is_write_protected_bit, resolve_flag, FuseField, MetadataBitmap, MetadataFlag, Region,
    FUSE_WINDOW_BASE, FUSE_WINDOW_BITS, FUSE_WINDOW_LEN,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{fletcher32, secded_decode, DecodeStatus, SecdedWord};

pub const BURNER_STATUS: u32 = 0x5E000;
pub const BURNER_ADDR_SELECT: u32 = 0x5E004;
pub const BURNER_CONTROL: u32 = 0x5E014;
/// One past the last decoded SMN address.
pub const SMN_END: u32 = 0x5E018;

pub const STATUS_BUSY: u32 = 1 << 0;
pub const STATUS_DONE: u32 = 1 << 1;
pub const STATUS_WP_FAULT: u32 = 1 << 2;
pub const STATUS_SEQ_FAULT: u32 = 1 << 3;

pub const SELECT_INDEX_MASK: u32 = 0x7FFF;
pub const SELECT_TRIGGER: u32 = 1 << 31;

pub const CONTROL_PROGRAM_ENABLE: u32 = 1 << 0;
pub const CONTROL_HV_ENABLE: u32 = 1 << 1;
/// Control word that arms the burner for exactly one pulse.
pub const CONTROL_ARM: u32 = CONTROL_PROGRAM_ENABLE | CONTROL_HV_ENABLE;

pub const FUSE_FILE_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FuseError {
    #[error("SMN address {0:#x} is outside the fuse and burner range")]
    OutOfRange(u32),
    #[error("SMN address {0:#x} is not word aligned")]
    Misaligned(u32),
    #[error("fuse bit index {0} is outside the secret window")]
    BitOutOfRange(u32),
    #[error("fuse burner stayed busy")]
    BurnerBusy,
    #[error("burn of fuse bit {0} rejected by write protection")]
    WriteProtected(u32),
    #[error("burner reported a sequencing fault")]
    SequenceFault,
    #[error("burn of fuse bit {0} did not stick")]
    BurnFailed(u32),
    #[error("payload length {got} does not match region size {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("unknown metadata flag {0:?}")]
    UnknownFlag(String),
    #[error("malformed fuse file: {0}")]
    File(String),
}

/// Side effects that are not visible through register values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuseEvent {
    DataWriteIgnored { addr: u32 },
    ReadOnlyWriteIgnored { addr: u32 },
    TriggerWhileBusy { bit: u32 },
    TriggerNotArmed { bit: u32 },
    WriteProtectRejected { bit: u32 },
    Burned { bit: u32, was_set: bool },
    LatchEngaged,
    ColdPowerCycle,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BurnerRegisters {
    pub status: u32,
    pub addr_select: u32,
    pub control: u32,
}

/// Outcome of [`FuseArray::validate_region`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionStatus {
    Clean,
    Corrected,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionCheck {
    pub payload: Vec<u8>,
    pub status: RegionStatus,
    pub ecc_enabled: bool,
    pub fletcher_enabled: bool,
}

/// Word-granular SMN access. Implemented by [`FuseArray`] and by the payload
/// capability surface, so the burn driver works from either side.
pub trait SmnBus {
    fn mmio_read(&mut self, addr: u32) -> Result<u32, FuseError>;
    fn mmio_write(&mut self, addr: u32, value: u32) -> Result<(), FuseError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuseArray {
    bits: Vec<u8>,
    latch_engaged: bool,
    write_protect_enabled: bool,
    burn_count: u64,
    regs: BurnerRegisters,
    busy_reads_left: u32,
    burn_latency: u32,
    events: Vec<FuseEvent>,
}

impl Default for FuseArray {
    fn default() -> Self {
        Self::blank()
    }
}

impl FuseArray {
    pub fn blank() -> Self {
        FuseArray {
            bits: vec![0; FUSE_WINDOW_LEN],
            latch_engaged: false,
            write_protect_enabled: false,
            burn_count: 0,
            regs: BurnerRegisters::default(),
            busy_reads_left: 0,
            burn_latency: 1,
            events: Vec::new(),
        }
    }

    /// Factory state: both root seeds programmed, every redundancy enable
    /// and everything else left at zero.
    pub fn factory(vcek_root_seed: [u8; 32], cek_root_seed: [u8; 32]) -> Self {
        let mut f = Self::blank();
        f.factory_program(layout::VCEK_ROOT_SEED, &vcek_root_seed);
        f.factory_program(layout::CEK_ROOT_SEED, &cek_root_seed);
        f
    }

    /// Reconstructs a window from raw octets (e.g. a fuse file).
    pub fn from_raw(window: &[u8], write_protect: bool) -> Result<Self, FuseError> {
        if window.len() != FUSE_WINDOW_LEN {
            return Err(FuseError::File(format!(
                "window must be {FUSE_WINDOW_LEN:#x} octets, got {:#x}",
                window.len()
            )));
        }
        let mut f = Self::blank();
        f.bits.copy_from_slice(window);
        f.write_protect_enabled = write_protect;
        Ok(f)
    }

    fn factory_program(&mut self, field: FuseField, bytes: &[u8]) {
        let start = field.offset as usize;
        for (dst, src) in self.bits[start..start + bytes.len()].iter_mut().zip(bytes) {
            *dst |= src;
        }
    }

    pub fn latch_engaged(&self) -> bool {
        self.latch_engaged
    }

    pub fn write_protect_enabled(&self) -> bool {
        self.write_protect_enabled
    }

    pub fn set_write_protect(&mut self, enabled: bool) {
        self.write_protect_enabled = enabled;
    }

    pub fn burn_count(&self) -> u64 {
        self.burn_count
    }

    pub fn events(&self) -> &[FuseEvent] {
        &self.events
    }

    pub fn registers(&self) -> BurnerRegisters {
        self.regs
    }

    /// Number of status reads a burn stays busy for. Defaults to 1.
    pub fn set_burn_latency(&mut self, reads: u32) {
        self.burn_latency = reads;
    }

    /// Physical contents of the window, bypassing the latch. Host-side
    /// inspection only; simulated firmware never gets this view.
    pub fn physical_window(&self) -> &[u8] {
        &self.bits
    }

    pub fn physical_field(&self, field: FuseField) -> Vec<u8> {
        let start = field.offset as usize;
        let mut out = self.bits[start..start + field.byte_len()].to_vec();
        let spare = (field.byte_len() * 8) as u32 - field.bits;
        if spare > 0 {
            let last = out.len() - 1;
            out[last] &= 0xFF >> spare;
        }
        out
    }

    pub fn physical_bit(&self, bit: u32) -> bool {
        self.bits[(bit / 8) as usize] >> (bit % 8) & 1 == 1
    }

    pub fn popcount(&self) -> u32 {
        self.bits.iter().map(|b| b.count_ones()).sum()
    }

    /// Field read as the BootROM sees it: zeros once latched.
    pub fn read_field(&self, field: FuseField) -> Vec<u8> {
        if self.latch_engaged {
            vec![0; field.byte_len()]
        } else {
            self.physical_field(field)
        }
    }

    pub fn metadata(&self) -> MetadataBitmap {
        let raw = self.read_field(layout::METADATA_BITMAP);
        MetadataBitmap([raw[0], raw[1], raw[2]])
    }

    pub fn flag(&self, flag: MetadataFlag) -> bool {
        resolve_flag(&self.metadata(), flag)
    }

    /// Irreversible until [`FuseArray::cold_power_cycle`].
    pub fn engage_latch(&mut self) {
        if !self.latch_engaged {
            self.latch_engaged = true;
            self.events.push(FuseEvent::LatchEngaged);
        }
    }

    /// Clears the latch and the burner registers; fuse bits persist.
    pub fn cold_power_cycle(&mut self) {
        self.latch_engaged = false;
        self.regs = BurnerRegisters::default();
        self.busy_reads_left = 0;
        self.events.push(FuseEvent::ColdPowerCycle);
    }

    /// Resolves the region's enables, then applies SEC-DED correction and
    /// the Fletcher-32 comparison as enabled.
    pub fn validate_region(&self, region: Region) -> RegionCheck {
        let ecc_enabled = self.flag(region.ecc_enable());
        let fletcher_enabled = self.flag(region.fletcher_enable());
        let mut payload = self.read_field(region.payload());
        let mut status = RegionStatus::Clean;

        if ecc_enabled {
            let ecc = self.read_field(region.ecc());
            for (i, byte) in payload.iter_mut().enumerate() {
                let word = SecdedWord {
                    data: *byte,
                    check: read_packed5(&ecc, i),
                };
                let d = secded_decode(word);
                match d.status {
                    DecodeStatus::Clean => {}
                    DecodeStatus::Corrected => {
                        *byte = d.byte;
                        status = RegionStatus::Corrected;
                    }
                    DecodeStatus::Uncorrectable => status = RegionStatus::Abort,
                }
            }
        }
        if fletcher_enabled && status != RegionStatus::Abort {
            let stored = self.read_field(region.fletcher());
            let stored = u32::from_le_bytes(stored[..4].try_into().unwrap());
            if fletcher32(&payload) != stored {
                status = RegionStatus::Abort;
            }
        }
        RegionCheck {
            payload,
            status,
            ecc_enabled,
            fletcher_enabled,
        }
    }

    fn status_read(&mut self) -> u32 {
        let value = self.regs.status;
        if self.busy_reads_left > 0 {
            self.busy_reads_left -= 1;
            if self.busy_reads_left == 0 {
                self.regs.status = (self.regs.status & !STATUS_BUSY) | STATUS_DONE;
            }
        }
        value
    }

    fn select_write(&mut self, value: u32) {
        let rising = value & SELECT_TRIGGER != 0 && self.regs.addr_select & SELECT_TRIGGER == 0;
        self.regs.addr_select = value;
        if !rising {
            return;
        }
        let bit = value & SELECT_INDEX_MASK;
        if self.regs.status & STATUS_BUSY != 0 {
            self.events.push(FuseEvent::TriggerWhileBusy { bit });
            return;
        }
        self.regs.status = 0;
        if self.regs.control != CONTROL_ARM {
            self.regs.status = STATUS_SEQ_FAULT;
            self.events.push(FuseEvent::TriggerNotArmed { bit });
            return;
        }
        self.regs.control = 0;
        if self.write_protect_enabled && is_write_protected_bit(bit) {
            self.regs.status = STATUS_WP_FAULT;
            self.events.push(FuseEvent::WriteProtectRejected { bit });
            return;
        }
        let was_set = self.physical_bit(bit);
        self.bits[(bit / 8) as usize] |= 1 << (bit % 8);
        self.burn_count += 1;
        self.events.push(FuseEvent::Burned { bit, was_set });
        if self.burn_latency == 0 {
            self.regs.status = STATUS_DONE;
        } else {
            self.regs.status = STATUS_BUSY;
            self.busy_reads_left = self.burn_latency;
        }
    }

    pub fn to_file(&self) -> FuseFile {
        FuseFile {
            format_version: FUSE_FILE_VERSION,
            bits: hex::encode(&self.bits),
            write_protect: self.write_protect_enabled,
        }
    }

    pub fn from_file(file: &FuseFile) -> Result<Self, FuseError> {
        if file.format_version != FUSE_FILE_VERSION {
            return Err(FuseError::File(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        if file.bits.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(FuseError::File("bits must be lowercase hex".into()));
        }
        let raw = hex::decode(&file.bits).map_err(|e| FuseError::File(e.to_string()))?;
        Self::from_raw(&raw, file.write_protect)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("fuse file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FuseError> {
        let file: FuseFile =
            serde_json::from_str(text).map_err(|e| FuseError::File(e.to_string()))?;
        Self::from_file(&file)
    }
}

impl SmnBus for FuseArray {
    fn mmio_read(&mut self, addr: u32) -> Result<u32, FuseError> {
        check_addr(addr)?;
        match addr {
            a if a < BURNER_STATUS => {
                if self.latch_engaged {
                    return Ok(0);
                }
                let off = (a - FUSE_WINDOW_BASE) as usize;
                Ok(u32::from_le_bytes(self.bits[off..off + 4].try_into().unwrap()))
            }
            BURNER_STATUS => Ok(self.status_read()),
            BURNER_ADDR_SELECT => Ok(self.regs.addr_select),
            BURNER_CONTROL => Ok(self.regs.control),
            _ => Ok(0),
        }
    }

    fn mmio_write(&mut self, addr: u32, value: u32) -> Result<(), FuseError> {
        check_addr(addr)?;
        match addr {
            a if a < BURNER_STATUS => self.events.push(FuseEvent::DataWriteIgnored { addr: a }),
            BURNER_ADDR_SELECT => self.select_write(value),
            BURNER_CONTROL => self.regs.control = value,
            a => self.events.push(FuseEvent::ReadOnlyWriteIgnored { addr: a }),
        }
        Ok(())
    }
}

fn check_addr(addr: u32) -> Result<(), FuseError> {
    if !(FUSE_WINDOW_BASE..SMN_END).contains(&addr) {
        return Err(FuseError::OutOfRange(addr));
    }
    if !addr.is_multiple_of(4) {
        return Err(FuseError::Misaligned(addr));
    }
    Ok(())
}

/// 5-bit group `i` of a little-endian bit-packed field.
pub(crate) fn read_packed5(field: &[u8], i: usize) -> u8 {
    (0..5).fold(0u8, |acc, k| {
        let bit = i * 5 + k;
        acc | ((field[bit / 8] >> (bit % 8) & 1) << k)
    })
}

/// On-disk fuse state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuseFile {
    pub format_version: u32,
    /// Lowercase hex of the 0x1000-octet window.
    pub bits: String,
    pub write_protect: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds() -> ([u8; 32], [u8; 32]) {
        let mut v = [0u8; 32];
        let mut c = [0u8; 32];
        for i in 0..32 {
            v[i] = (i as u8).wrapping_mul(37) ^ 0xA5;
            c[i] = (i as u8).wrapping_mul(11) ^ 0x3C;
        }
        (v, c)
    }

    #[test]
    fn read_before_and_after_latch() {
        let (v, c) = seeds();
        let mut f = FuseArray::factory(v, c);
        let w = f.mmio_read(0x5D0C4).unwrap();
        assert_eq!(w.to_le_bytes(), v[..4]);
        f.engage_latch();
        assert_eq!(f.mmio_read(0x5D0C4).unwrap(), 0);
        assert_eq!(f.read_field(layout::VCEK_ROOT_SEED), vec![0; 32]);
        f.engage_latch();
        assert_eq!(f.events().iter().filter(|e| **e == FuseEvent::LatchEngaged).count(), 1);
    }

    #[test]
    fn cold_cycle_clears_latch_and_keeps_bits() {
        let (v, c) = seeds();
        let mut f = FuseArray::factory(v, c);
        f.engage_latch();
        f.mmio_write(BURNER_CONTROL, CONTROL_ARM).unwrap();
        let before = f.physical_window().to_vec();
        f.cold_power_cycle();
        assert!(!f.latch_engaged());
        assert_eq!(f.registers(), BurnerRegisters::default());
        assert_eq!(f.physical_window(), &before[..]);
    }

    #[test]
    fn direct_data_write_is_ignored_and_logged() {
        let (v, c) = seeds();
        let mut f = FuseArray::factory(v, c);
        let before = f.physical_window().to_vec();
        f.mmio_write(0x5D044, 0xFFFF_FFFF).unwrap();
        assert_eq!(f.physical_window(), &before[..]);
        assert_eq!(f.events().last(), Some(&FuseEvent::DataWriteIgnored { addr: 0x5D044 }));
    }

    #[test]
    fn address_checks() {
        let mut f = FuseArray::blank();
        assert_eq!(f.mmio_read(0x5CFFC), Err(FuseError::OutOfRange(0x5CFFC)));
        assert_eq!(f.mmio_read(SMN_END), Err(FuseError::OutOfRange(SMN_END)));
        assert_eq!(f.mmio_read(0x5D001), Err(FuseError::Misaligned(0x5D001)));
        assert_eq!(f.mmio_read(0x5E010).unwrap(), 0);
    }

    #[test]
    fn trigger_without_arming_does_not_burn() {
        let mut f = FuseArray::blank();
        f.mmio_write(BURNER_ADDR_SELECT, 5).unwrap();
        f.mmio_write(BURNER_ADDR_SELECT, 5 | SELECT_TRIGGER).unwrap();
        assert!(!f.physical_bit(5));
        assert_eq!(f.mmio_read(BURNER_STATUS).unwrap() & STATUS_SEQ_FAULT, STATUS_SEQ_FAULT);
        assert_eq!(f.events().last(), Some(&FuseEvent::TriggerNotArmed { bit: 5 }));
    }

    #[test]
    fn unprovisioned_region_reads_raw() {
        let (v, c) = seeds();
        let f = FuseArray::factory(v, c);
        let chk = f.validate_region(Region::VcekSeed);
        assert_eq!(chk.status, RegionStatus::Clean);
        assert_eq!(chk.payload, v);
        assert!(!chk.ecc_enabled && !chk.fletcher_enabled);
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let (v, c) = seeds();
        let mut f = FuseArray::factory(v, c);
        f.set_write_protect(true);
        let json = f.to_json();
        let g = FuseArray::from_json(&json).unwrap();
        assert_eq!(g.physical_window(), f.physical_window());
        assert!(g.write_protect_enabled());
        assert_eq!(g.to_json(), json);

        let mut file = f.to_file();
        file.format_version = 2;
        assert!(FuseArray::from_file(&file).is_err());
        let mut file = f.to_file();
        file.bits.truncate(10);
        assert!(FuseArray::from_file(&file).is_err());
    }
}
