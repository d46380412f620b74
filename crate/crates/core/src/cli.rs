// Licensed under the Apache-2.0 license

//! Command-line front end. Exit codes: 0 success, 1 usage, 2 file or
//! format error, 3 scenario failure (reason on stderr).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::attack::{
    badfuse_custom_pk, badfuse_oracle, exfil_payload, forge_report, parse_exfil, plan_milanlaunchy,
    AttackError, ExtractedMaterial, MilanLaunchyOptions, SeedMaterial, MILANLAUNCHY_PAYLOAD_ID,
};
use crate::boot::{BootStage, PayloadRegistry};
use crate::crypto::SignatureKeyPair;
use crate::firmware::{AuthScheme, EntryType, FirmwareModule, FlashImage};
use crate::fuse::layout::{CEK_ROOT_SEED, VCEK_ROOT_SEED};
use crate::fuse::FuseArray;
use crate::platform::{provision_fuses, Platform, ScenarioConfig, World, LEGACY_MIN_SVN, PRISTINE_TCB};
use crate::vcek::{AttestationReport, MockKds, MockKdsCert, Seed, TcbVersion};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    File(String),
    #[error("{0}")]
    Scenario(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::File(_) => 2,
            CliError::Scenario(_) => 3,
        }
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Firmware(e) => CliError::File(e.to_string()),
            other => CliError::Scenario(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "aspforge", version, about = "Secure-processor boot chain simulator and attack toolkit")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "ASPFORGE_RNG_SEED", default_value_t = 0)]
    pub rng_seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse array fixtures.
    #[command(subcommand)]
    Fuses(FusesCmd),
    /// Vendor flash images.
    #[command(subcommand)]
    Flash(FlashCmd),
    /// Scenario configuration files.
    #[command(subcommand)]
    Config(ConfigCmd),
    /// Cold-boot a platform and print the outcome.
    Boot(BootArgs),
    #[command(subcommand)]
    Attack(AttackCmd),
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Kds(KdsCmd),
    /// Write an attacker RSA-4096 signing key as PKCS#8 PEM.
    Keygen {
        #[arg(short)]
        o: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum FusesCmd {
    Init {
        #[arg(long, value_name = "HEX32")]
        vcek_seed: Option<String>,
        #[arg(long, value_name = "HEX32")]
        cek_seed: Option<String>,
        /// Draw unspecified seeds from the rng seed (the default).
        #[arg(long)]
        random: bool,
        #[arg(long)]
        enable_vcek_redundancy: bool,
        #[arg(long)]
        write_protect: bool,
        #[arg(short)]
        o: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum FlashCmd {
    Build {
        #[arg(long)]
        arch: AuthScheme,
        #[arg(long)]
        bl_svn: u8,
        #[arg(long)]
        sevfw_svn: u8,
        #[arg(long)]
        ucode_svn: u8,
        #[arg(long)]
        encrypt: bool,
        #[arg(short)]
        o: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigCmd {
    Init {
        #[arg(long, default_value = "zen3")]
        arch: AuthScheme,
        #[arg(long)]
        write_protect: bool,
        #[arg(long)]
        ecc_fletcher_enforced: bool,
        /// Vendor no longer ships encrypted images.
        #[arg(long)]
        no_encrypted_fw: bool,
        #[arg(short)]
        o: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct BootArgs {
    #[arg(long)]
    fuses: PathBuf,
    #[arg(long)]
    flash: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    json: bool,
    /// Also write the event log as JSON lines.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackCommon {
    #[arg(long)]
    fuses: PathBuf,
    /// Scenario config; defaults to zen3 with mitigations off.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flash holding the encrypted legacy bootloader; defaults to the
    /// vendor's oldest release.
    #[arg(long)]
    flash_legacy: Option<PathBuf>,
    /// Leading bits of the branch word to match.
    #[arg(long, default_value_t = 16)]
    bits: u32,
}

#[derive(Debug, Subcommand)]
pub enum AttackCmd {
    Milanlaunchy {
        #[command(flatten)]
        common: AttackCommon,
        /// Current flash; its SEV firmware and microcode are kept.
        #[arg(long)]
        flash: Option<PathBuf>,
        /// Write the attack flash image here.
        #[arg(long)]
        flash_out: Option<PathBuf>,
        #[arg(short)]
        o: PathBuf,
    },
    BadfusePk {
        #[command(flatten)]
        common: AttackCommon,
        #[arg(long)]
        attacker_key: PathBuf,
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(short)]
        o: PathBuf,
    },
    BadfuseOracle {
        #[command(flatten)]
        common: AttackCommon,
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[arg(short)]
        o: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Sign a report with a VCEK derived from extracted material.
    Forge {
        #[arg(long)]
        material: PathBuf,
        #[arg(long)]
        tcb: TcbVersion,
        #[arg(long, value_name = "HEX48")]
        measurement: String,
        #[arg(long, value_name = "HEX64")]
        report_data: Option<String>,
        #[arg(short)]
        o: PathBuf,
    },
    /// Boot the platform honestly and have its firmware sign a report.
    Attest {
        #[arg(long)]
        fuses: PathBuf,
        #[arg(long)]
        flash: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_name = "HEX48")]
        measurement: String,
        #[arg(long, value_name = "HEX64")]
        report_data: Option<String>,
        #[arg(short)]
        o: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum KdsCmd {
    /// Register the chip in a fuse file (factory step).
    Enroll {
        #[arg(long)]
        fuses: PathBuf,
        /// Existing registry to extend.
        #[arg(long)]
        kds: Option<PathBuf>,
        #[arg(short)]
        o: PathBuf,
    },
    Issue {
        #[arg(long)]
        kds: PathBuf,
        #[arg(long, value_name = "HEX32")]
        chip_id: String,
        #[arg(long)]
        tcb: TcbVersion,
        #[arg(short)]
        o: PathBuf,
    },
    /// Exit 0 if the report verifies, 3 otherwise.
    Verify {
        #[arg(long)]
        kds: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Defaults to a fresh cert for the report's chip and TCB.
        #[arg(long)]
        cert: Option<PathBuf>,
    },
}

/// Parses `argv` and runs the command, writing to the given streams.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let seed = cli.rng_seed;
    match &cli.command {
        Command::Fuses(FusesCmd::Init {
            vcek_seed,
            cek_seed,
            random: _,
            enable_vcek_redundancy,
            write_protect,
            o,
        }) => {
            let (rv, rc) = World::chip_seeds_for(seed, 0);
            let vcek = vcek_seed.as_deref().map(parse_seed).transpose()?.unwrap_or(rv);
            let cek = cek_seed.as_deref().map(parse_seed).transpose()?.unwrap_or(rc);
            let mut fuses = provision_fuses(&vcek, &cek, *enable_vcek_redundancy).map_err(scenario)?;
            fuses.set_write_protect(*write_protect);
            write_text(o, &fuses.to_json())
        }
        Command::Flash(FlashCmd::Build {
            arch,
            bl_svn,
            sevfw_svn,
            ucode_svn,
            encrypt,
            o,
        }) => {
            let mut world = World::from_seed(seed);
            world.vendor.distribute_encrypted_fw = *encrypt;
            let flash = world
                .vendor
                .release_flash(&world.bootrom_key, *arch, TcbVersion::new(*bl_svn, *sevfw_svn, *ucode_svn))
                .map_err(scenario)?;
            write_bytes(o, &flash.serialize())
        }
        Command::Config(ConfigCmd::Init {
            arch,
            write_protect,
            ecc_fletcher_enforced,
            no_encrypted_fw,
            o,
        }) => {
            let cfg = ScenarioConfig {
                arch: *arch,
                write_protect: *write_protect,
                ecc_fletcher_enforced: *ecc_fletcher_enforced,
                distribute_encrypted_fw: !no_encrypted_fw,
                rng_seed: seed,
            };
            write_json(o, &cfg)
        }
        Command::Boot(a) => cmd_boot(a, out),
        Command::Attack(a) => cmd_attack(a, seed, out),
        Command::Report(r) => cmd_report(r),
        Command::Kds(k) => cmd_kds(k, seed, out),
        Command::Keygen { o } => {
            let key = SignatureKeyPair::generate_rsa(seed ^ 0xA77A_C4E2);
            write_text(o, &key.to_pkcs8_pem().map_err(scenario)?)
        }
    }
}

fn cmd_boot(a: &BootArgs, out: &mut dyn Write) -> CliResult {
    let cfg = read_config(&a.config)?;
    let world = World::from_seed(cfg.rng_seed);
    let mut platform = Platform {
        fuses: read_fuses(&a.fuses)?,
        flash: read_flash(&a.flash)?,
        config: world.bootrom_config(cfg.arch, cfg.write_protect),
    };
    let outcome = platform.boot(&PayloadRegistry::new());
    if let Some(p) = &a.events {
        write_text(p, &outcome.event_log_jsonl())?;
    }
    if a.json {
        writeln!(out, "{}", outcome.to_json()).map_err(io)?;
    } else {
        writeln!(
            out,
            "stage {:?} tcb {} x86_boot_ok {}",
            outcome.stage_reached,
            outcome.tcb().map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            outcome.x86_boot_ok
        )
        .map_err(io)?;
    }
    match outcome.stage_reached {
        BootStage::FuseAbort | BootStage::NoBootable => Err(CliError::Scenario(
            outcome.abort_reason.unwrap_or_else(|| format!("{:?}", outcome.stage_reached)),
        )),
        _ => Ok(()),
    }
}

/// Platform plus the legacy module and options every attack starts from.
struct AttackSetup {
    cfg: ScenarioConfig,
    world: World,
    platform: Platform,
    legacy: FirmwareModule,
    opts: MilanLaunchyOptions,
}

fn attack_setup(c: &AttackCommon, seed: u64, flash: Option<&Path>) -> CliResult<AttackSetup> {
    let cfg = match &c.config {
        Some(p) => read_config(p)?,
        None => ScenarioConfig::new(AuthScheme::Zen3Milan, seed),
    };
    let mut world = World::from_seed(cfg.rng_seed);
    world.vendor.distribute_encrypted_fw = cfg.distribute_encrypted_fw;
    let legacy = match &c.flash_legacy {
        Some(p) => {
            let f = read_flash(p)?;
            f.module(EntryType::RecoveryBootloader)
                .or_else(|| f.module(EntryType::PrimaryBootloader))
                .ok_or_else(|| CliError::File(format!("{}: no bootloader entry", p.display())))?
                .map_err(|e| CliError::File(format!("{}: {e}", p.display())))?
        }
        None => world.vendor.legacy_recovery(AuthScheme::Zen3Milan, LEGACY_MIN_SVN).map_err(scenario)?,
    };
    let flash = match flash {
        Some(p) => read_flash(p)?,
        None => world
            .vendor
            .release_flash(&world.bootrom_key, cfg.arch, PRISTINE_TCB)
            .map_err(scenario)?,
    };
    let platform = Platform {
        fuses: read_fuses(&c.fuses)?,
        flash,
        config: world.bootrom_config(cfg.arch, cfg.write_protect),
    };
    Ok(AttackSetup {
        opts: MilanLaunchyOptions {
            match_bits: c.bits,
            rng_seed: cfg.rng_seed,
            max_trials: None,
        },
        cfg,
        world,
        platform,
        legacy,
    })
}

fn cmd_attack(a: &AttackCmd, seed: u64, out: &mut dyn Write) -> CliResult {
    match a {
        AttackCmd::Milanlaunchy {
            common,
            flash,
            flash_out,
            o,
        } => {
            let mut s = attack_setup(common, seed, flash.as_deref())?;
            let plan = plan_milanlaunchy(&s.platform.flash, &s.legacy, &s.world.bootrom_key, s.opts)?;
            if let Some(p) = flash_out {
                write_bytes(p, &plan.image.serialize())?;
            }
            s.platform.flash = plan.image.clone();
            let hooks = PayloadRegistry::new().with(MILANLAUNCHY_PAYLOAD_ID, exfil_payload);
            let outcome = s.platform.boot(&hooks);
            let material = parse_exfil(&outcome.dram_out).zip(outcome.handoff.as_ref()).map(|((l1, rb), h)| {
                ExtractedMaterial {
                    chip_id: h.chip_id,
                    material: SeedMaterial::Layer {
                        cur: outcome.svns.bl_svn.unwrap_or_default(),
                        layer1_seed: l1,
                        rollback_seed: rb,
                    },
                }
            });
            let transcript = json!({
                "attack": "milanlaunchy",
                "arch": s.cfg.arch,
                "match_bits": s.opts.match_bits,
                "search": plan.search,
                "sled_len": plan.layout.sled_len,
                "boot": serde_json::to_value(&outcome).expect("outcome serializes"),
                "material": material,
            });
            write_json(o, &transcript)?;
            summarize(out, "milanlaunchy", &outcome.code_exec_event)?;
            if outcome.attacker_code_ran() {
                Ok(())
            } else {
                Err(CliError::Scenario(format!(
                    "NoCodeExec: {}",
                    outcome.abort_reason.unwrap_or_else(|| format!("{:?}", outcome.stage_reached))
                )))
            }
        }
        AttackCmd::BadfusePk {
            common,
            attacker_key,
            transcript,
            o,
        } => {
            let pem = read_text(attacker_key)?;
            let attacker = SignatureKeyPair::from_pkcs8_pem(&pem)
                .map_err(|e| CliError::File(format!("{}: {e}", attacker_key.display())))?;
            let mut s = attack_setup(common, seed, None)?;
            let plan = plan_milanlaunchy(&s.platform.flash, &s.legacy, &s.world.bootrom_key, s.opts)?;
            s.platform.flash = plan.image;
            let result = badfuse_custom_pk(&mut s.platform, &attacker, &s.world.bootrom_key);
            write_text(&common.fuses, &s.platform.fuses.to_json())?;
            let run = result?;
            if let Some(p) = transcript {
                write_json(
                    p,
                    &json!({
                        "attack": "badfuse-pk",
                        "search": plan.search,
                        "attacker_pk_sha384": hex::encode(run.attacker_pk_digest),
                        "burn_boot": serde_json::to_value(&run.burn_outcome).expect("outcome serializes"),
                        "exfil_boot": serde_json::to_value(&run.exfil_outcome).expect("outcome serializes"),
                    }),
                )?;
            }
            write_json(o, &run.material)?;
            summarize(out, "badfuse-pk", &run.material.material)
        }
        AttackCmd::BadfuseOracle { common, transcript, o } => {
            let mut s = attack_setup(common, seed, None)?;
            let plan = plan_milanlaunchy(&s.platform.flash, &s.legacy, &s.world.bootrom_key, s.opts)?;
            s.platform.flash = plan.image;
            let result = badfuse_oracle(&mut s.platform);
            write_text(&common.fuses, &s.platform.fuses.to_json())?;
            let run = result?;
            if let Some(p) = transcript {
                write_json(p, &json!({ "attack": "badfuse-oracle", "search": plan.search, "oracle": run }))?;
            }
            write_json(o, &run.material())?;
            writeln!(out, "badfuse-oracle: {} reboots, {} baseline updates", run.reboots, run.baseline_updates)
                .map_err(io)
        }
    }
}

fn cmd_report(r: &ReportCmd) -> CliResult {
    match r {
        ReportCmd::Forge {
            material,
            tcb,
            measurement,
            report_data,
            o,
        } => {
            let m: ExtractedMaterial = serde_json::from_str(&read_text(material)?)
                .map_err(|e| CliError::File(format!("{}: {e}", material.display())))?;
            let report = forge_report(&m, *tcb, parse_hex(measurement)?, report_data_arg(report_data)?)?;
            write_bytes(o, &report.to_bytes())
        }
        ReportCmd::Attest {
            fuses,
            flash,
            config,
            measurement,
            report_data,
            o,
        } => {
            let cfg = read_config(config)?;
            let world = World::from_seed(cfg.rng_seed);
            let mut platform = Platform {
                fuses: read_fuses(fuses)?,
                flash: read_flash(flash)?,
                config: world.bootrom_config(cfg.arch, cfg.write_protect),
            };
            let outcome = platform.boot(&PayloadRegistry::new());
            let report = Platform::attest(&outcome, parse_hex(measurement)?, report_data_arg(report_data)?)
                .ok_or_else(|| CliError::Scenario(format!("platform did not boot: {:?}", outcome.stage_reached)))?;
            write_bytes(o, &report.to_bytes())
        }
    }
}

fn cmd_kds(k: &KdsCmd, seed: u64, out: &mut dyn Write) -> CliResult {
    match k {
        KdsCmd::Enroll { fuses, kds, o } => {
            let f = read_fuses(fuses)?;
            let mut registry = match kds {
                Some(p) => read_kds(p)?,
                None => World::kds_for(seed),
            };
            let root: Seed = f.physical_field(VCEK_ROOT_SEED).try_into().expect("32-byte field");
            let cek: Seed = f.physical_field(CEK_ROOT_SEED).try_into().expect("32-byte field");
            let chip = registry.enroll(root, cek);
            writeln!(out, "{}", hex::encode(chip)).map_err(io)?;
            write_text(o, &registry.to_json())
        }
        KdsCmd::Issue { kds, chip_id, tcb, o } => {
            let registry = read_kds(kds)?;
            let cert = registry.issue(&parse_hex(chip_id)?, *tcb).map_err(scenario)?;
            write_bytes(o, &cert.to_bytes())
        }
        KdsCmd::Verify { kds, report, cert } => {
            let registry = read_kds(kds)?;
            let rep = AttestationReport::parse(&read_bytes(report)?)
                .map_err(|e| CliError::File(format!("{}: {e}", report.display())))?;
            let cert = match cert {
                Some(p) => MockKdsCert::parse(&read_bytes(p)?)
                    .map_err(|e| CliError::File(format!("{}: {e}", p.display())))?,
                None => registry.issue(&rep.body.chip_id, rep.body.tcb).map_err(scenario)?,
            };
            if registry.verify_report(&rep, &cert) {
                writeln!(out, "valid").map_err(io)
            } else {
                writeln!(out, "invalid").map_err(io)?;
                Err(CliError::Scenario("report signature does not chain to the KDS".into()))
            }
        }
    }
}

fn summarize<T: Serialize>(out: &mut dyn Write, what: &str, v: &T) -> CliResult {
    writeln!(out, "{what}: {}", serde_json::to_string(v).expect("plain data")).map_err(io)
}

fn scenario(e: impl std::fmt::Display) -> CliError {
    CliError::Scenario(e.to_string())
}

fn io(e: std::io::Error) -> CliError {
    CliError::File(e.to_string())
}

fn parse_hex<const N: usize>(s: &str) -> CliResult<[u8; N]> {
    let mut b = [0u8; N];
    hex::decode_to_slice(s.trim(), &mut b)
        .map_err(|e| CliError::Usage(format!("expected {N} hex-encoded octets: {e}")))?;
    Ok(b)
}

fn parse_seed(s: &str) -> CliResult<Seed> {
    parse_hex(s)
}

fn report_data_arg(s: &Option<String>) -> CliResult<[u8; 64]> {
    match s {
        Some(s) => parse_hex(s),
        None => Ok([0; 64]),
    }
}

fn read_bytes(p: &Path) -> CliResult<Vec<u8>> {
    fs::read(p).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}

fn read_text(p: &Path) -> CliResult<String> {
    fs::read_to_string(p).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}

fn write_bytes(p: &Path, data: &[u8]) -> CliResult {
    fs::write(p, data).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}

fn write_text(p: &Path, text: &str) -> CliResult {
    write_bytes(p, text.as_bytes())
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> CliResult {
    let mut s = serde_json::to_string_pretty(v).expect("plain data");
    s.push('\n');
    write_text(p, &s)
}

fn read_fuses(p: &Path) -> CliResult<FuseArray> {
    FuseArray::from_json(&read_text(p)?).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}

fn read_flash(p: &Path) -> CliResult<FlashImage> {
    FlashImage::parse(&read_bytes(p)?).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}

fn read_config(p: &Path) -> CliResult<ScenarioConfig> {
    serde_json::from_str(&read_text(p)?).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}

fn read_kds(p: &Path) -> CliResult<MockKds> {
    MockKds::from_json(&read_text(p)?).map_err(|e| CliError::File(format!("{}: {e}", p.display())))
}
