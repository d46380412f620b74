// Licensed under the Apache-2.0 license

//! Deterministic fixtures: the vendor side (signing key, IKEK, releases),
//! one provisioned chip and its flash.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::boot::{boot, genuine_bootloader_body, BootOutcome, BootRomConfig, PayloadRegistry, STANDARD_BL_LOAD_ADDR};
use crate::crypto::{sha256, sha384, SignatureKeyPair, SymmetricKey128};
use crate::firmware::{
    encrypt_module, make_ikek_entry, sign_module, AuthScheme, EntryType, FirmwareError, FirmwareModule,
    FlashImage,
};
use crate::fuse::{provision_with_redundancy, FuseArray, FuseError, Region};
use crate::vcek::{sign_report, AttestationReport, MockKds, ReportBody, Seed, TcbVersion};

/// SVNs of the release flashed on a fresh platform.
pub const PRISTINE_TCB: TcbVersion = TcbVersion::new(4, 10, 44);
/// SVN of the oldest encrypted bootloader the vendor ever shipped.
pub const LEGACY_MIN_SVN: u8 = 0;
pub const SEVFW_LOAD_ADDR: u32 = 0x4_0000;
pub const UCODE_LOAD_ADDR: u32 = 0x5_0000;
const BODY_LEN: usize = 256;

/// Toggles and seed shared by every fixture of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub arch: AuthScheme,
    #[serde(default)]
    pub write_protect: bool,
    #[serde(default)]
    pub ecc_fletcher_enforced: bool,
    #[serde(default = "default_true")]
    pub distribute_encrypted_fw: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn new(arch: AuthScheme, rng_seed: u64) -> Self {
        ScenarioConfig {
            arch,
            write_protect: false,
            ecc_fletcher_enforced: false,
            distribute_encrypted_fw: true,
            rng_seed,
        }
    }
}

/// Firmware vendor: owns the signing key and the IKEK.
#[derive(Debug, Clone)]
pub struct Vendor {
    signing: SignatureKeyPair,
    ikek: SymmetricKey128,
    /// Cleared by the mitigation release that stopped shipping encrypted
    /// images.
    pub distribute_encrypted_fw: bool,
}

impl Vendor {
    pub fn keypair(&self) -> &SignatureKeyPair {
        &self.signing
    }

    pub fn public_digest(&self) -> [u8; 48] {
        sha384(&self.signing.public_bytes())
    }

    pub fn ikek(&self) -> &SymmetricKey128 {
        &self.ikek
    }

    fn mek_iv(&self, label: &str, svn: u8) -> (SymmetricKey128, [u8; 16]) {
        let d = sha256(&[self.ikek.as_bytes().as_slice(), label.as_bytes(), &[svn]].concat());
        (
            SymmetricKey128::new(d[..16].try_into().unwrap()),
            d[16..].try_into().unwrap(),
        )
    }

    pub fn build_module(
        &self,
        label: &str,
        svn: u8,
        load_addr: u32,
        scheme: AuthScheme,
        encrypt: bool,
    ) -> Result<FirmwareModule, FirmwareError> {
        let body = genuine_bootloader_body(&format!("{label} svn {svn}"), BODY_LEN);
        let mut m = FirmwareModule::new(svn, load_addr, body);
        if encrypt {
            let (mek, iv) = self.mek_iv(label, svn);
            m = encrypt_module(&m, &mek, iv, &self.ikek)?;
        }
        sign_module(&m, &self.signing, scheme, Some(&self.ikek))
    }

    /// Current release: bootloader as both primary and recovery, SEV
    /// firmware, microcode and the wrapped IKEK.
    pub fn release_flash(
        &self,
        bootrom_key: &SymmetricKey128,
        scheme: AuthScheme,
        tcb: TcbVersion,
    ) -> Result<FlashImage, FirmwareError> {
        let enc = self.distribute_encrypted_fw;
        let bl = self.build_module("bootloader", tcb.bl_svn, STANDARD_BL_LOAD_ADDR, scheme, enc)?;
        let sev = self.build_module("sev firmware", tcb.sevfw_svn, SEVFW_LOAD_ADDR, scheme, enc)?;
        let uc = self.build_module("microcode", tcb.ucode_svn, UCODE_LOAD_ADDR, scheme, enc)?;
        FlashImage::from_parts(vec![
            (EntryType::PrimaryBootloader, bl.to_bytes()),
            (EntryType::RecoveryBootloader, bl.to_bytes()),
            (EntryType::SevFirmware, sev.to_bytes()),
            (EntryType::Microcode, uc.to_bytes()),
            (
                EntryType::WrappedIkek,
                make_ikek_entry(&self.ikek, bootrom_key, scheme).to_bytes(),
            ),
        ])
    }

    /// An old, encrypted bootloader release. Stays valid forever because
    /// its signature never expires.
    pub fn legacy_recovery(&self, scheme: AuthScheme, svn: u8) -> Result<FirmwareModule, FirmwareError> {
        self.build_module("bootloader", svn, STANDARD_BL_LOAD_ADDR, scheme, true)
    }
}

/// Every secret derived from one rng seed.
#[derive(Debug, Clone)]
pub struct World {
    pub rng_seed: u64,
    pub bootrom_key: SymmetricKey128,
    pub vendor: Vendor,
    pub kds_ark_seed: Seed,
    chip_seed_base: [u8; 32],
}

struct WorldSecrets {
    bootrom_key: SymmetricKey128,
    ikek: SymmetricKey128,
    vendor_rsa_seed: u64,
    kds_ark_seed: Seed,
    chip_seed_base: [u8; 32],
}

impl WorldSecrets {
    fn draw(rng_seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
        WorldSecrets {
            bootrom_key: SymmetricKey128::new(rng.gen()),
            ikek: SymmetricKey128::new(rng.gen()),
            vendor_rsa_seed: rng.gen(),
            kds_ark_seed: rng.gen(),
            chip_seed_base: rng.gen(),
        }
    }
}

fn chip_seeds_from_base(base: &[u8; 32], index: u64) -> (Seed, Seed) {
    let mut rng = ChaCha20Rng::from_seed(sha256(&[base.as_slice(), &index.to_le_bytes()].concat()));
    (rng.gen(), rng.gen())
}

impl World {
    pub fn from_seed(rng_seed: u64) -> Self {
        let s = WorldSecrets::draw(rng_seed);
        World {
            rng_seed,
            bootrom_key: s.bootrom_key,
            vendor: Vendor {
                signing: SignatureKeyPair::generate_rsa(s.vendor_rsa_seed),
                ikek: s.ikek,
                distribute_encrypted_fw: true,
            },
            kds_ark_seed: s.kds_ark_seed,
            chip_seed_base: s.chip_seed_base,
        }
    }

    /// Same as `World::from_seed(rng_seed).chip_seeds(index)` without
    /// generating the vendor key.
    pub fn chip_seeds_for(rng_seed: u64, index: u64) -> (Seed, Seed) {
        chip_seeds_from_base(&WorldSecrets::draw(rng_seed).chip_seed_base, index)
    }

    /// Empty KDS of the world with this seed.
    pub fn kds_for(rng_seed: u64) -> MockKds {
        MockKds::new(WorldSecrets::draw(rng_seed).kds_ark_seed)
    }

    pub fn bootrom_config(&self, scheme: AuthScheme, enforce_write_protect: bool) -> BootRomConfig {
        BootRomConfig {
            arch_scheme: scheme,
            bootrom_key: self.bootrom_key,
            builtin_amd_pk_digest: self.vendor.public_digest(),
            enforce_write_protect,
        }
    }

    pub fn new_kds(&self) -> MockKds {
        MockKds::new(self.kds_ark_seed)
    }

    /// `(vcek_root, cek_seed)` of chip number `index`.
    pub fn chip_seeds(&self, index: u64) -> (Seed, Seed) {
        chip_seeds_from_base(&self.chip_seed_base, index)
    }
}

/// Factory fuse provisioning. With `redundancy`, the VCEK seed also gets
/// SEC-DED and Fletcher-32 and both enable flags.
pub fn provision_fuses(vcek_root: &Seed, cek_seed: &Seed, redundancy: bool) -> Result<FuseArray, FuseError> {
    let mut f = FuseArray::factory(*vcek_root, *cek_seed);
    if redundancy {
        provision_with_redundancy(&mut f, Region::VcekSeed, vcek_root, true, true)?;
    }
    Ok(f)
}

/// One machine: fuses, flash and BootROM.
#[derive(Debug, Clone)]
pub struct Platform {
    pub fuses: FuseArray,
    pub flash: FlashImage,
    pub config: BootRomConfig,
}

impl Platform {
    pub fn boot(&mut self, hooks: &PayloadRegistry) -> BootOutcome {
        boot(&mut self.fuses, &self.flash, &self.config, hooks)
    }

    /// Report signed by the platform's own VCEK after a full boot.
    pub fn attest(outcome: &BootOutcome, measurement: [u8; 48], report_data: [u8; 64]) -> Option<AttestationReport> {
        let seed = outcome.vcek_seed?;
        let body = ReportBody::new(measurement, outcome.tcb()?, outcome.handoff.as_ref()?.chip_id, report_data);
        Some(sign_report(&seed, body))
    }
}

/// World, a provisioned chip enrolled with the KDS, and the vendor's
/// current release in flash.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub world: World,
    pub scenario: ScenarioConfig,
    pub platform: Platform,
    pub kds: MockKds,
    pub chip_id: [u8; 32],
    /// Kept only so tests can compare against ground truth.
    pub vcek_root: Seed,
}

impl Testbed {
    pub fn new(scenario: ScenarioConfig) -> Result<Self, crate::Error> {
        let world = World::from_seed(scenario.rng_seed);
        let (root, cek) = world.chip_seeds(0);
        Self::with_seeds(world, scenario, root, cek)
    }

    pub fn with_seeds(mut world: World, scenario: ScenarioConfig, vcek_root: Seed, cek_seed: Seed) -> Result<Self, crate::Error> {
        world.vendor.distribute_encrypted_fw = scenario.distribute_encrypted_fw;
        let fuses = provision_fuses(&vcek_root, &cek_seed, scenario.ecc_fletcher_enforced)?;
        let flash = world.vendor.release_flash(&world.bootrom_key, scenario.arch, PRISTINE_TCB)?;
        let config = world.bootrom_config(scenario.arch, scenario.write_protect);
        let mut kds = world.new_kds();
        let chip_id = kds.enroll(vcek_root, cek_seed);
        Ok(Testbed {
            world,
            scenario,
            platform: Platform { fuses, flash, config },
            kds,
            chip_id,
            vcek_root,
        })
    }

    /// Replaces the chip's seeds in place, keeping the world.
    pub fn reprovision(&mut self, vcek_root: Seed, cek_seed: Seed) -> Result<(), crate::Error> {
        self.platform.fuses = provision_fuses(&vcek_root, &cek_seed, self.scenario.ecc_fletcher_enforced)?;
        self.chip_id = self.kds.enroll(vcek_root, cek_seed);
        self.vcek_root = vcek_root;
        Ok(())
    }

    pub fn legacy_recovery(&self) -> Result<FirmwareModule, FirmwareError> {
        self.world.vendor.legacy_recovery(AuthScheme::Zen3Milan, LEGACY_MIN_SVN)
    }
}
