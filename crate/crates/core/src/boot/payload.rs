// Licensed under the Apache-2.0 license

//! What code running from attacker-controlled SRAM may touch.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use super::{BootEvent, SeedHandoff, Sram};
use crate::fuse::{FuseArray, FuseError, SmnBus, BURNER_STATUS, FUSE_WINDOW_BASE};
use crate::vcek::Seed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("SRAM access {addr:#x}+{len:#x} out of bounds")]
    SramBounds { addr: u32, len: usize },
    #[error(transparent)]
    Fuse(#[from] FuseError),
    #[error("{0}")]
    Other(String),
}

/// A read of the secret fuse window made by payload code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SecretRead {
    pub addr: u32,
    pub value: u32,
    pub latched: bool,
}

/// Capability surface handed to a payload for the duration of one call.
pub struct PayloadContext<'a> {
    pub(super) fuses: &'a mut FuseArray,
    pub(super) sram: &'a mut Sram,
    pub(super) handoff: &'a SeedHandoff,
    pub(super) dram_out: &'a mut Vec<u8>,
    pub(super) skip_sevfw_verification: bool,
    pub(super) reboot_requested: bool,
    pub(super) secret_reads: &'a mut Vec<SecretRead>,
    pub(super) events: &'a mut Vec<BootEvent>,
}

impl PayloadContext<'_> {
    pub fn read_sram(&self, addr: u32, len: usize) -> Result<Vec<u8>, PayloadError> {
        self.sram
            .read(addr, len)
            .map(<[u8]>::to_vec)
            .ok_or(PayloadError::SramBounds { addr, len })
    }

    pub fn write_sram(&mut self, addr: u32, data: &[u8]) -> Result<(), PayloadError> {
        if self.sram.write(addr, data) {
            Ok(())
        } else {
            Err(PayloadError::SramBounds { addr, len: data.len() })
        }
    }

    pub fn get_layer1_seed(&self) -> Seed {
        self.handoff.layer1_seed
    }

    pub fn get_rollback_seed(&self) -> Option<Seed> {
        self.handoff.rollback_seed
    }

    /// Appends to the buffer the host reads back from x86 DRAM.
    pub fn write_dram_out(&mut self, data: &[u8]) {
        self.dram_out.extend_from_slice(data);
    }

    pub fn set_skip_sevfw_verification(&mut self, skip: bool) {
        self.skip_sevfw_verification = skip;
    }

    /// Ends the boot as soon as the payload returns.
    pub fn request_reboot(&mut self) {
        self.reboot_requested = true;
    }

    pub fn log(&mut self, name: &str, detail: serde_json::Value) {
        let step = self.events.len() as u32;
        self.events.push(BootEvent {
            step,
            name: name.to_string(),
            detail,
        });
    }
}

impl SmnBus for PayloadContext<'_> {
    fn mmio_read(&mut self, addr: u32) -> Result<u32, FuseError> {
        let value = self.fuses.mmio_read(addr)?;
        if (FUSE_WINDOW_BASE..BURNER_STATUS).contains(&addr) {
            self.secret_reads.push(SecretRead {
                addr,
                value,
                latched: self.fuses.latch_engaged(),
            });
        }
        Ok(value)
    }

    fn mmio_write(&mut self, addr: u32, value: u32) -> Result<(), FuseError> {
        self.fuses.mmio_write(addr, value)
    }
}

pub type PayloadFn = dyn Fn(&mut PayloadContext<'_>) -> Result<(), PayloadError> + Send + Sync;

/// Payload procedures keyed by the id in the SRAM descriptor.
#[derive(Clone, Default)]
pub struct PayloadRegistry {
    hooks: BTreeMap<u32, Arc<PayloadFn>>,
}

impl std::fmt::Debug for PayloadRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.hooks.keys()).finish()
    }
}

impl PayloadRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, id: u32, f: F) -> &mut Self
    where
        F: Fn(&mut PayloadContext<'_>) -> Result<(), PayloadError> + Send + Sync + 'static,
    {
        self.hooks.insert(id, Arc::new(f));
        self
    }

    pub fn with<F>(mut self, id: u32, f: F) -> Self
    where
        F: Fn(&mut PayloadContext<'_>) -> Result<(), PayloadError> + Send + Sync + 'static,
    {
        self.register(id, f);
        self
    }

    pub fn get(&self, id: u32) -> Option<Arc<PayloadFn>> {
        self.hooks.get(&id).cloned()
    }
}
