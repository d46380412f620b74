// Licensed under the Apache-2.0 license

pub const SRAM_SIZE: usize = 512 * 1024;

/// ASP-private SRAM. Only a cold reset clears it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sram {
    bytes: Vec<u8>,
}

impl Default for Sram {
    fn default() -> Self {
        Sram::new(SRAM_SIZE)
    }
}

impl Sram {
    pub fn new(size: usize) -> Self {
        Sram { bytes: vec![0; size] }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn cold_reset(&mut self) {
        self.bytes.fill(0);
    }

    fn range(&self, addr: u32, len: usize) -> Option<std::ops::Range<usize>> {
        let start = addr as usize;
        let end = start.checked_add(len)?;
        (end <= self.bytes.len()).then_some(start..end)
    }

    pub fn read(&self, addr: u32, len: usize) -> Option<&[u8]> {
        self.range(addr, len).map(|r| &self.bytes[r])
    }

    pub fn read_word(&self, addr: u32) -> Option<u32> {
        self.read(addr, 4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    /// Returns false (and writes nothing) if the range is out of bounds.
    pub fn write(&mut self, addr: u32, data: &[u8]) -> bool {
        match self.range(addr, data.len()) {
            Some(r) => {
                self.bytes[r].copy_from_slice(data);
                true
            }
            None => false,
        }
    }

    /// Everything from `addr` to the end of SRAM.
    pub fn tail(&self, addr: u32) -> &[u8] {
        self.bytes.get(addr as usize..).unwrap_or(&[])
    }
}
