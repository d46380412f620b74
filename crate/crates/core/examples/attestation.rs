// Licensed under the Apache-2.0 license

//! Honest attestation: boot, sign a report with the platform VCEK and
//! verify it against a KDS-issued certificate.

use aspforge::boot::PayloadRegistry;
use aspforge::firmware::AuthScheme;
use aspforge::platform::{Platform, ScenarioConfig, Testbed};
use aspforge::vcek::{AttestationReport, MockKdsCert};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut tb = Testbed::new(ScenarioConfig::new(AuthScheme::Zen3Milan, 2))?;
    let out = tb.platform.boot(&PayloadRegistry::new());
    let report = Platform::attest(&out, [0xAB; 48], [0; 64]).expect("full boot");
    let cert = tb.kds.issue(&tb.chip_id, report.body.tcb)?;

    let wire = report.to_bytes();
    let report = AttestationReport::parse(&wire)?;
    let cert = MockKdsCert::parse(&cert.to_bytes())?;
    println!("chip {}", hex::encode(report.body.chip_id));
    println!("tcb {} report {} octets", report.body.tcb, wire.len());
    println!("verifies: {}", tb.kds.verify_report(&report, &cert));

    let mut altered = report.clone();
    altered.body.report_data[0] = 1;
    println!("altered report verifies: {}", tb.kds.verify_report(&altered, &cert));
    Ok(())
}
