// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::Command;

use featherloop_core::ArchSpec;

const BIN: &str = env!("CARGO_BIN_EXE_featherloop");

fn write_fixture(dir: &Path) {
    fs::write(dir.join("arch.toml"), ArchSpec::compact(4, 4).to_toml()).unwrap();
    fs::write(
        dir.join("tiny.workload"),
        "kind,label,N,M,C,H,W,R,S,stride,padding\n\
         conv,a,1,4,4,4,4,2,2,1,0\n\
         conv,b,1,8,4,3,3,1,1,1,0\n\
         gemm,g,1,8,8,4,1,1,1,1,0\n",
    )
    .unwrap();
}

fn featherloop(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(["--workload", "tiny.workload", "--budget", "200", "--victory", "100"])
        .args(args)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<(String, String)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config-sha256: "));
    assert_eq!(lines.next().unwrap().split(',').count(), 2);
    lines.map(|l| l.split_once(',').map(|(a, b)| (a.to_string(), b.to_string())).unwrap()).collect()
}

#[test]
fn pinned_trace_shows_first_write() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = featherloop(
        dir.path(),
        &[
            "--arch",
            "arch.toml",
            "--trace-layer",
            "a",
            "--mapping",
            "outer:P3,Q3|cols:C4|rows:M4|local:R2,S2",
            "--in-layout",
            "HWC_C4",
            "--out-layout",
            "MPQ_Q4(CHW_W4)",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8(out.stdout).unwrap();
    assert!(log.contains("cycle 6: write StaB-pong line 0 bank 0 N0M0P0Q0"), "{log}");
    assert!(log.contains("cycle 0: read StaB-ping line 0 bank 0"));
}

#[test]
fn unknown_layer_and_profile_fail() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = featherloop(dir.path(), &["--trace-layer", "nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("LayerNotFound"));
    let out = featherloop(dir.path(), &["--profile", "gemmini-like", "--out", "r"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("UnknownBaseline"));
}

#[test]
fn two_profiles_give_eight_aligned_csvs() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = featherloop(dir.path(), &["--profile", "feather", "--profile", "nvdla-like", "--out", "r"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = dir.path().join("r");
    let csvs: Vec<_> = fs::read_dir(&r)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    assert_eq!(csvs.len(), 8, "{csvs:?}");
    let a = rows(&r.join("feather_arbitrary_rir_cycle.csv"));
    let b = rows(&r.join("nvdla-like_fixed_layout_cycle.csv"));
    let labels = |v: &[(String, String)]| v.iter().map(|(l, _)| l.clone()).collect::<Vec<_>>();
    assert_eq!(labels(&a), ["a", "b", "g", "geomean"]);
    assert_eq!(labels(&a), labels(&b));
    // The geomean row is recomputable from the layer rows.
    for name in ["feather_arbitrary_rir_slowdown.csv", "feather_arbitrary_rir_pj_compute.csv"] {
        let v = rows(&r.join(name));
        let xs: Vec<f64> = v[..v.len() - 1].iter().map(|(_, x)| x.parse().unwrap()).collect();
        let g = (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp();
        let want: f64 = v.last().unwrap().1.parse().unwrap();
        assert!((g - want).abs() <= 1e-12 * want.abs(), "{name}: {g} vs {want}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(r.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["profiles"].as_array().unwrap().len(), 2);
    let first = &summary["profiles"][0]["result"]["layers"][0];
    assert!(first["mapping"].is_string() && first["in_layout"].is_string());
}

#[test]
fn misspelt_report_name_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path());
    let out = featherloop(dir.path(), &["--reports", "pj_commpute", "--out", "r"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("r/feather_arbitrary_rir_pj_compute.csv").exists());
}
