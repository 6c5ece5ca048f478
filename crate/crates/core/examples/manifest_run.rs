//! Writes a matmul-bench manifest, runs it, and verifies that every output
//! carries the manifest hash.

use std::path::PathBuf;

use memfield::experiments::MatmulSpec;
use memfield::io::{run, verify, ExperimentManifest, Task};

fn main() -> memfield::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/manifest_run".into()));
    let mut m = ExperimentManifest::template(Task::MatmulBench);
    m.matmul = Some(MatmulSpec { seeds: 4, ..MatmulSpec::default() });
    m.output_dir = out.to_string_lossy().into_owned();
    println!("{}", m.canonical()?);
    let summary = run(&m)?;
    for (k, v) in &summary.report {
        println!("{k} = {v:.4}");
    }
    let report = verify(&out, None)?;
    println!("verified {} files against {}: {}", report.checked, report.expected, if report.ok() { "ok" } else { "MISMATCH" });
    Ok(())
}
