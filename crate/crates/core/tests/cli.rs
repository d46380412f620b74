// Licensed under the Apache-2.0 license

use std::path::Path;
use std::process::{Command, Output};

use aspforge::fuse::layout::VCEK_ROOT_SEED;
use aspforge::fuse::FuseArray;
use aspforge::vcek::chip_id_from_cek_seed;

const BIN: &str = env!("CARGO_BIN_EXE_aspforge");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ASPFORGE_RNG_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn help_and_usage_errors() {
    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("attack"));
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["fuses", "init"])), 1, "missing -o");
    assert_eq!(code(&run(&["report", "forge", "--tcb", "1,2", "-o", "x"])), 1);
    // Malformed argument values are usage errors too.
    assert_eq!(code(&run(&["fuses", "init", "--vcek-seed", "abcd", "-o", "x"])), 1);
}

#[test]
fn file_and_format_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = path(dir.path(), "bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let kds = path(dir.path(), "kds.json");
    let missing = path(dir.path(), "missing.json");
    let o = path(dir.path(), "out");

    assert_eq!(code(&run(&["kds", "enroll", "--fuses", &missing, "-o", &o])), 2);
    assert_eq!(code(&run(&["kds", "enroll", "--fuses", &bad, "-o", &o])), 2);

    let fuses = path(dir.path(), "fuses.json");
    assert_eq!(code(&run(&["fuses", "init", "-o", &fuses])), 0);
    assert_eq!(code(&run(&["kds", "enroll", "--fuses", &fuses, "-o", &kds])), 0);
    let garbage = path(dir.path(), "report.bin");
    std::fs::write(&garbage, b"ASRPtruncated").unwrap();
    assert_eq!(code(&run(&["kds", "verify", "--kds", &kds, "--report", &garbage])), 2);
}

#[test]
fn env_var_seeds_like_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let a = path(dir.path(), "a.json");
    let b = path(dir.path(), "b.json");
    let c = path(dir.path(), "c.json");
    assert_eq!(code(&run(&["--rng-seed", "77", "fuses", "init", "-o", &a])), 0);
    let env = Command::new(BIN)
        .args(["fuses", "init", "-o", &b])
        .env("ASPFORGE_RNG_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(code(&env), 0);
    assert_eq!(code(&run(&["--rng-seed", "78", "fuses", "init", "-o", &c])), 0);
    let read = |p: &str| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn forged_report_from_known_root_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    let root = "5a".repeat(32);
    let cek = [0x3cu8; 32];
    assert_eq!(
        code(&run(&["fuses", "init", "--vcek-seed", &root, "--cek-seed", &hex::encode(cek), "-o", &p("fuses.json")])),
        0
    );
    let fuses = FuseArray::from_json(&std::fs::read_to_string(p("fuses.json")).unwrap()).unwrap();
    assert_eq!(hex::encode(fuses.physical_field(VCEK_ROOT_SEED)), root);

    let enroll = run(&["kds", "enroll", "--fuses", &p("fuses.json"), "-o", &p("kds.json")]);
    assert_eq!(code(&enroll), 0);
    let chip = hex::encode(chip_id_from_cek_seed(&cek));
    assert_eq!(String::from_utf8_lossy(&enroll.stdout).trim(), chip);

    let material = |root: &str| {
        format!(r#"{{"chip_id":"{chip}","material":{{"kind":"root","root_seed":"{root}"}}}}"#)
    };
    std::fs::write(p("good.json"), material(&root)).unwrap();
    std::fs::write(p("wrong.json"), material(&"5b".repeat(32))).unwrap();
    let m = "00".repeat(48);
    for (mat, out) in [("good.json", "good.bin"), ("wrong.json", "wrong.bin")] {
        assert_eq!(
            code(&run(&["report", "forge", "--material", &p(mat), "--tcb", "9,9,9", "--measurement", &m, "-o", &p(out)])),
            0
        );
    }
    let ok = run(&["kds", "verify", "--kds", &p("kds.json"), "--report", &p("good.bin")]);
    assert_eq!(code(&ok), 0);
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "valid");
    let bad = run(&["kds", "verify", "--kds", &p("kds.json"), "--report", &p("wrong.bin")]);
    assert_eq!(code(&bad), 3);
    assert_eq!(String::from_utf8_lossy(&bad.stdout).trim(), "invalid");

    // Explicit certificate path.
    assert_eq!(
        code(&run(&["kds", "issue", "--kds", &p("kds.json"), "--chip-id", &chip, "--tcb", "9,9,9", "-o", &p("cert.bin")])),
        0
    );
    assert_eq!(
        code(&run(&["kds", "verify", "--kds", &p("kds.json"), "--report", &p("good.bin"), "--cert", &p("cert.bin")])),
        0
    );
}

#[test]
fn boot_json_events_and_corrupt_flash() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    let seed = ["--rng-seed", "4"];
    let with = |rest: &[&str]| run(&[&seed[..], rest].concat());
    assert_eq!(code(&with(&["fuses", "init", "-o", &p("fuses.json")])), 0);
    assert_eq!(code(&with(&["config", "init", "-o", &p("config.json")])), 0);
    assert_eq!(
        code(&with(&["flash", "build", "--arch", "zen3", "--bl-svn", "4", "--sevfw-svn", "10", "--ucode-svn", "44", "--encrypt", "-o", &p("flash.bin")])),
        0
    );
    let out = with(&["boot", "--fuses", &p("fuses.json"), "--flash", &p("flash.bin"), "--config", &p("config.json"), "--json", "--events", &p("events.jsonl")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["stage_reached"], "FullBoot");
    let events = std::fs::read_to_string(p("events.jsonl")).unwrap();
    let names: Vec<String> = events
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names.first().map(String::as_str), Some("cold_power_cycle"));
    assert_eq!(names.last().map(String::as_str), Some("x86_boot"));

    // Corrupt the flash magic: a format error, not a scenario failure.
    let mut bytes = std::fs::read(p("flash.bin")).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(p("bad.bin"), &bytes).unwrap();
    assert_eq!(code(&with(&["boot", "--fuses", &p("fuses.json"), "--flash", &p("bad.bin"), "--config", &p("config.json")])), 2);
}

#[test]
fn oracle_against_redundant_fuses_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| path(dir.path(), n);
    assert_eq!(code(&run(&["fuses", "init", "--enable-vcek-redundancy", "-o", &p("fuses.json")])), 0);
    let out = run(&["attack", "badfuse-oracle", "--fuses", &p("fuses.json"), "-o", &p("material.json")]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FuseAbort"));
    assert!(!dir.path().join("material.json").exists());
}
