// Licensed under the Apache-2.0 license

//! BootROM and first-stage bootloader state machine.
//!
//! One call to [`boot`] is one cold boot: fuse preprocessing and latch,
//! root key selection, IKEK unwrap, primary then recovery load, layer-1
//! seed derivation, control transfer and, for a running bootloader, the
//! SEV firmware and microcode layers.

mod branch;
mod payload;
mod sram;

pub use branch::{decode_branch, encode_branch};
pub use payload::{PayloadContext, PayloadError, PayloadFn, PayloadRegistry, SecretRead};
pub use sram::{Sram, SRAM_SIZE};

use serde::{Serialize, Serializer};
use serde_json::json;

use crate::crypto::{keypair_from_seed, sha256, SignatureKeyPair, SymmetricKey128};
use crate::firmware::{
    decrypt_body, verify_module, AuthScheme, EntryType, FirmwareModule, FlashImage,
    PayloadDescriptor, NOP_WORD,
};
use crate::fuse::{layout, FuseArray, Region, RegionStatus};
use crate::vcek::{derive_layer_seed, ChipId, Seed, TcbVersion, CEK_LABEL, VCEK_LABEL};

/// Where vendor bootloaders are linked.
pub const STANDARD_BL_LOAD_ADDR: u32 = 0x1000;
/// `push {r4-r11, lr}`, first word of every genuine bootloader.
pub const GENUINE_ENTRY_WORD: u32 = 0xE92D_4FF0;
pub const GENUINE_TAG: [u8; 8] = *b"ASIMBOOT";

/// Upper bound on NOP words followed after a branch.
const MAX_SLED_WORDS: u32 = (SRAM_SIZE / 4) as u32;

/// BootROM-resident configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootRomConfig {
    pub arch_scheme: AuthScheme,
    pub bootrom_key: SymmetricKey128,
    pub builtin_amd_pk_digest: [u8; 48],
    /// Engage fuse write protection for the secret regions at every boot.
    pub enforce_write_protect: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum BootStage {
    FuseAbort,
    NoBootable,
    BootloaderRunning,
    FullBoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodeExecEvent {
    pub branch_target: u32,
    /// Where the descriptor was found after sliding over NOP words.
    pub payload_entry: u32,
    pub attacker_controlled: bool,
    pub payload_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Svns {
    pub bl_svn: Option<u8>,
    pub sevfw_svn: Option<u8>,
    pub ucode_svn: Option<u8>,
}

impl Svns {
    pub fn tcb(&self) -> Option<TcbVersion> {
        Some(TcbVersion::new(self.bl_svn?, self.sevfw_svn?, self.ucode_svn?))
    }
}

/// What the BootROM leaves for the bootloader. Never holds the root seed
/// or the raw CEK fuse value.
#[derive(Debug, Clone, Serialize)]
pub struct SeedHandoff {
    #[serde(serialize_with = "hex::serde::serialize")]
    pub layer1_seed: Seed,
    #[serde(serialize_with = "opt_hex")]
    pub rollback_seed: Option<Seed>,
    #[serde(serialize_with = "hex::serde::serialize")]
    pub chip_id: ChipId,
    #[serde(skip)]
    pub cek: SignatureKeyPair,
}

fn opt_hex<S: Serializer>(v: &Option<Seed>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(b) => s.serialize_some(&hex::encode(b)),
        None => s.serialize_none(),
    }
}

fn opt_display<S: Serializer, T: std::fmt::Display>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(e) => s.serialize_some(&e.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BootEvent {
    pub step: u32,
    pub name: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootOutcome {
    pub stage_reached: BootStage,
    pub executed_entry: Option<EntryType>,
    pub code_exec_event: Option<CodeExecEvent>,
    pub svns: Svns,
    pub handoff: Option<SeedHandoff>,
    pub x86_boot_ok: bool,
    pub abort_reason: Option<String>,
    #[serde(serialize_with = "opt_display")]
    pub payload_error: Option<PayloadError>,
    pub reboot_requested: bool,
    #[serde(serialize_with = "hex::serde::serialize")]
    pub dram_out: Vec<u8>,
    /// SEC1 encoding of the VCEK public key after a full boot.
    #[serde(serialize_with = "opt_hex_vec")]
    pub vcek_public: Option<Vec<u8>>,
    /// Held by the SEV firmware; not exported.
    #[serde(skip)]
    pub vcek_seed: Option<Seed>,
    pub secret_reads: Vec<SecretRead>,
    pub event_log: Vec<BootEvent>,
}

fn opt_hex_vec<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(b) => s.serialize_some(&hex::encode(b)),
        None => s.serialize_none(),
    }
}

impl BootOutcome {
    fn new() -> Self {
        BootOutcome {
            stage_reached: BootStage::NoBootable,
            executed_entry: None,
            code_exec_event: None,
            svns: Svns::default(),
            handoff: None,
            x86_boot_ok: false,
            abort_reason: None,
            payload_error: None,
            reboot_requested: false,
            dram_out: Vec::new(),
            vcek_public: None,
            vcek_seed: None,
            secret_reads: Vec::new(),
            event_log: Vec::new(),
        }
    }

    fn log(&mut self, name: &str, detail: serde_json::Value) {
        let step = self.event_log.len() as u32;
        self.event_log.push(BootEvent {
            step,
            name: name.to_string(),
            detail,
        });
    }

    pub fn attacker_code_ran(&self) -> bool {
        self.code_exec_event.is_some_and(|e| e.attacker_controlled)
    }

    pub fn tcb(&self) -> Option<TcbVersion> {
        self.svns.tcb()
    }

    pub fn event_position(&self, name: &str) -> Option<usize> {
        self.event_log.iter().position(|e| e.name == name)
    }

    /// One JSON object per line.
    pub fn event_log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.event_log {
            out.push_str(&serde_json::to_string(e).expect("plain data"));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

/// Bootloader plaintext with the genuine prologue.
pub fn genuine_bootloader_body(label: &str, len: usize) -> Vec<u8> {
    let mut body = GENUINE_ENTRY_WORD.to_le_bytes().to_vec();
    body.extend_from_slice(&GENUINE_TAG);
    body.extend_from_slice(label.as_bytes());
    let mut counter = 0u32;
    while body.len() < len {
        body.extend_from_slice(&sha256(&[label.as_bytes(), &counter.to_le_bytes()].concat()));
        counter += 1;
    }
    body.truncate(len.next_multiple_of(16).max(16));
    body.resize(body.len().next_multiple_of(16), 0);
    body
}

fn is_genuine(code: &[u8]) -> bool {
    code.len() >= 12 && code[..4] == GENUINE_ENTRY_WORD.to_le_bytes() && code[4..12] == GENUINE_TAG
}

fn entry_name(t: EntryType) -> &'static str {
    match t {
        EntryType::PrimaryBootloader => "primary_bl",
        EntryType::RecoveryBootloader => "recovery_bl",
        EntryType::SevFirmware => "sev_fw",
        EntryType::Microcode => "microcode",
        EntryType::WrappedIkek => "wrapped_ikek",
    }
}

struct Verifier<'a> {
    scheme: AuthScheme,
    expected_pk_digest: [u8; 48],
    ikek: Option<&'a SymmetricKey128>,
}

impl Verifier<'_> {
    fn check(&self, m: &FirmwareModule) -> Result<Vec<u8>, String> {
        if m.header.signed_size != m.header.image_size {
            return Err("signed_size does not cover the image".into());
        }
        if m.signer_digest() != self.expected_pk_digest {
            return Err("signer key digest does not match the root of trust".into());
        }
        verify_module(m, self.scheme, self.ikek).map_err(|e| e.to_string())
    }
}

/// Cold boot with a fresh SRAM.
pub fn boot(fuses: &mut FuseArray, flash: &FlashImage, config: &BootRomConfig, hooks: &PayloadRegistry) -> BootOutcome {
    boot_with_sram(fuses, flash, config, hooks, &mut Sram::default())
}

/// Cold boot using caller-owned SRAM so its final contents can be
/// inspected. SRAM is zeroed first.
pub fn boot_with_sram(
    fuses: &mut FuseArray,
    flash: &FlashImage,
    config: &BootRomConfig,
    hooks: &PayloadRegistry,
    sram: &mut Sram,
) -> BootOutcome {
    let mut out = BootOutcome::new();
    sram.cold_reset();
    fuses.cold_power_cycle();
    out.log("cold_power_cycle", json!({}));

    // 1. Fuse preprocessing, CEK, latch.
    let vcek = fuses.validate_region(Region::VcekSeed);
    let cpk = fuses.validate_region(Region::CustomPk);
    out.log(
        "fuse_preprocess",
        json!({
            "vcek_seed": format!("{:?}", vcek.status),
            "vcek_ecc": vcek.ecc_enabled,
            "vcek_fletcher": vcek.fletcher_enabled,
            "custom_pk": format!("{:?}", cpk.status),
        }),
    );
    let aborted: Vec<&str> = [("vcek_seed", &vcek), ("custom_pk", &cpk)]
        .into_iter()
        .filter(|(_, c)| c.status == RegionStatus::Abort)
        .map(|(n, _)| n)
        .collect();
    if !aborted.is_empty() {
        fuses.engage_latch();
        out.log("latch_engaged", json!({}));
        out.stage_reached = BootStage::FuseAbort;
        out.abort_reason = Some(format!("FuseAbort: uncorrectable {}", aborted.join(", ")));
        out.log("fuse_abort", json!({ "regions": aborted }));
        return out;
    }
    let cek_seed: Seed = fuses.read_field(layout::CEK_ROOT_SEED).try_into().unwrap();
    let cek = keypair_from_seed(&cek_seed, CEK_LABEL);
    let chip_id = sha256(&cek.public_bytes());
    out.log("cek_derived", json!({ "chip_id": hex::encode(chip_id) }));
    let mut root_shadow: Option<Seed> = Some(vcek.payload.clone().try_into().unwrap());
    let custom_pk: Vec<u8> = cpk.payload;
    if config.enforce_write_protect {
        fuses.set_write_protect(true);
        out.log("write_protect_enabled", json!({}));
    }
    fuses.engage_latch();
    out.log("latch_engaged", json!({}));

    // 2. Root of trust.
    let custom = custom_pk.iter().any(|&b| b != 0);
    let expected_pk_digest: [u8; 48] = if custom {
        custom_pk.as_slice().try_into().unwrap()
    } else {
        config.builtin_amd_pk_digest
    };
    out.log(
        "root_pk_selected",
        json!({ "source": if custom { "custom_pk" } else { "builtin" }, "digest": hex::encode(expected_pk_digest) }),
    );

    // 3. IKEK.
    let scheme = config.arch_scheme;
    let ikek = match flash.ikek_entry() {
        None => {
            out.log("ikek_absent", json!({}));
            None
        }
        Some(Err(e)) => {
            out.log("ikek_rejected", json!({ "reason": e.to_string() }));
            None
        }
        Some(Ok(entry)) => match entry.unwrap(&config.bootrom_key, scheme) {
            Ok(k) => {
                out.log("ikek_loaded", json!({ "hmac_checked": scheme.ikek_is_authenticated() }));
                Some(k)
            }
            Err(e) => {
                out.log("ikek_rejected", json!({ "reason": e.to_string() }));
                None
            }
        },
    };
    let verifier = Verifier {
        scheme,
        expected_pk_digest,
        ikek: ikek.as_ref(),
    };

    // 4-5. Primary, then recovery. SRAM is never cleared in between.
    let mut executed: Option<(EntryType, FirmwareModule)> = None;
    for entry in [EntryType::PrimaryBootloader, EntryType::RecoveryBootloader] {
        let name = entry_name(entry);
        let module = match flash.module(entry) {
            None => {
                out.log("entry_absent", json!({ "entry": name }));
                continue;
            }
            Some(Err(e)) => {
                out.log("module_rejected", json!({ "entry": name, "reason": e.to_string() }));
                continue;
            }
            Some(Ok(m)) => m,
        };
        let load_addr = module.header.load_addr;
        if !sram.write(load_addr, &module.body) {
            out.log("module_rejected", json!({ "entry": name, "reason": "load exceeds SRAM" }));
            continue;
        }
        out.log(
            "module_loaded",
            json!({ "entry": name, "load_addr": load_addr, "size": module.body.len(), "svn": module.header.svn }),
        );
        match verifier.check(&module) {
            Ok(plain) => {
                sram.write(load_addr, &plain);
                out.log("module_verified", json!({ "entry": name, "svn": module.header.svn }));
                executed = Some((entry, module));
                break;
            }
            Err(reason) => out.log("module_rejected", json!({ "entry": name, "reason": reason })),
        }
    }
    let Some((entry, module)) = executed else {
        root_shadow.take();
        out.log("root_seed_erased", json!({}));
        out.stage_reached = BootStage::NoBootable;
        out.abort_reason = Some("NoBootable: no bootloader passed verification".into());
        return out;
    };
    out.executed_entry = Some(entry);
    out.svns.bl_svn = Some(module.header.svn);

    // 6. Layer-1 seed, then erase the root.
    let root = root_shadow.take().expect("root shadow present until erased");
    let l1 = derive_layer_seed(&root, module.header.svn);
    out.log("seed_derived", json!({ "layer": 1, "svn": module.header.svn }));
    out.log("root_seed_erased", json!({}));
    let handoff = SeedHandoff {
        layer1_seed: l1.layer_seed,
        rollback_seed: l1.rollback_seed,
        chip_id,
        cek,
    };
    out.handoff = Some(handoff.clone());
    out.stage_reached = BootStage::BootloaderRunning;

    // 7. Control transfer.
    let pc = module.header.load_addr;
    let word = sram.read_word(pc).unwrap_or(0);
    let code = sram.read(pc, 12).unwrap_or(&[]);
    let mut skip_sevfw = false;
    if is_genuine(code) {
        out.log("control_transfer", json!({ "entry_point": pc, "word": format!("{word:#010x}"), "kind": "genuine" }));
    } else if let Some(target) = decode_branch(word, pc) {
        out.log("control_transfer", json!({ "entry_point": pc, "word": format!("{word:#010x}"), "branch_target": target }));
        let mut at = target;
        let mut slid = 0;
        while slid < MAX_SLED_WORDS && sram.read_word(at) == Some(NOP_WORD) {
            at += 4;
            slid += 1;
        }
        if slid > 0 {
            out.log("nop_sled", json!({ "from": target, "to": at, "words": slid }));
        }
        let Some(payload_id) = PayloadDescriptor::probe(sram.tail(at)) else {
            out.log("execution_fault", json!({ "pc": target, "reason": "branch target holds no executable payload" }));
            return out;
        };
        let ev = CodeExecEvent {
            branch_target: target,
            payload_entry: at,
            attacker_controlled: true,
            payload_id,
        };
        out.code_exec_event = Some(ev);
        out.log(
            "code_exec",
            json!({ "branch_target": target, "payload_entry": at, "attacker_controlled": true, "payload_id": payload_id }),
        );
        match hooks.get(payload_id) {
            None => out.log("payload_unregistered", json!({ "payload_id": payload_id })),
            Some(hook) => {
                let mut ctx = PayloadContext {
                    fuses,
                    sram,
                    handoff: &handoff,
                    dram_out: &mut out.dram_out,
                    skip_sevfw_verification: false,
                    reboot_requested: false,
                    secret_reads: &mut out.secret_reads,
                    events: &mut out.event_log,
                };
                let result = hook(&mut ctx);
                skip_sevfw = ctx.skip_sevfw_verification;
                out.reboot_requested = ctx.reboot_requested;
                match result {
                    Ok(()) => out.log("payload_returned", json!({ "payload_id": payload_id })),
                    Err(e) => {
                        out.log("payload_fault", json!({ "payload_id": payload_id, "error": e.to_string() }));
                        out.payload_error = Some(e);
                    }
                }
            }
        }
        if out.reboot_requested {
            out.log("reboot_requested", json!({}));
            return out;
        }
    } else {
        out.log("execution_fault", json!({ "pc": pc, "word": format!("{word:#010x}"), "reason": "undecodable entry instruction" }));
        return out;
    }

    // Layers 2 and 3.
    let mut input = handoff.layer1_seed;
    for (entry, layer) in [(EntryType::SevFirmware, 2u8), (EntryType::Microcode, 3u8)] {
        let name = entry_name(entry);
        let module = match flash.module(entry) {
            Some(Ok(m)) => m,
            Some(Err(e)) => {
                out.log("layer_rejected", json!({ "entry": name, "reason": e.to_string() }));
                return out;
            }
            None => {
                out.log("layer_rejected", json!({ "entry": name, "reason": "entry absent" }));
                return out;
            }
        };
        if entry == EntryType::SevFirmware && skip_sevfw {
            // The image is still decrypted; a bad key just yields garbage.
            let _ = decrypt_body(&module, ikek.as_ref());
            out.log("layer_verification_skipped", json!({ "entry": name, "svn": module.header.svn }));
        } else if let Err(reason) = verifier.check(&module) {
            out.log("layer_rejected", json!({ "entry": name, "reason": reason }));
            return out;
        } else {
            out.log("layer_verified", json!({ "entry": name, "svn": module.header.svn }));
        }
        let svn = module.header.svn;
        if layer == 2 {
            out.svns.sevfw_svn = Some(svn);
        } else {
            out.svns.ucode_svn = Some(svn);
        }
        input = derive_layer_seed(&input, svn).layer_seed;
        out.log("seed_derived", json!({ "layer": layer, "svn": svn }));
    }
    let vcek_pair = keypair_from_seed(&input, VCEK_LABEL);
    out.vcek_seed = Some(input);
    out.vcek_public = Some(vcek_pair.public_bytes());
    out.stage_reached = BootStage::FullBoot;
    out.x86_boot_ok = true;
    out.log("x86_boot", json!({ "tcb": out.svns.tcb().map(|t| t.to_string()) }));
    out
}
