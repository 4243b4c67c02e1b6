use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gpr-volume"))
}

#[test]
fn exit_codes_from_the_real_binary() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    std::fs::write(
        &scene,
        r#"{"dielectric": 4, "targets": [{"position": [0.5, 0.0, 0.3]}]}"#,
    )
    .unwrap();
    let scan = dir.path().join("b.bin");

    let synth = bin()
        .args([
            "synth",
            "--trajectory",
            "straight-lines",
            "--extent",
            "1",
            "0",
            "--scene",
        ])
        .arg(&scene)
        .arg("--out")
        .arg(&scan)
        .status()
        .unwrap();
    assert_eq!(synth.code(), Some(0));

    let no_dielectric = bin()
        .arg("migrate")
        .arg("--bscan")
        .arg(&scan)
        .args(["--out", "x.bin"])
        .output()
        .unwrap();
    assert_eq!(no_dielectric.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_dielectric.stderr).contains("--dielectric"));

    let missing = bin()
        .args(["render", "--bscan"])
        .arg(dir.path().join("nope.bin"))
        .arg("--out")
        .arg(dir.path().join("img"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));

    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}
