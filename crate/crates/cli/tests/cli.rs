use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rgk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgk"))
        .args(args)
        .current_dir(dir)
        .env_remove("RGK_THREADS")
        .output()
        .expect("spawn rgk")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_then_encode_reports_density() {
    let dir = tempfile::tempdir().unwrap();
    let g = rgk(
        dir.path(),
        &["generate", "--seed", "2", "--n", "300", "--out", "c.rgpc"],
    );
    assert!(g.status.success(), "{}", stderr(&g));
    let e = rgk(
        dir.path(),
        &[
            "encode",
            "--input",
            "c.rgpc",
            "--out",
            "m.rgfm",
            "--compare-pillar",
            "--pgm-channel",
            "0",
        ],
    );
    assert!(e.status.success(), "{}", stderr(&e));
    let text = stdout(&e);
    let field = |key: &str| -> usize {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("no {key} in {text}"))
            .parse()
            .unwrap()
    };
    assert!(field("nonzero_pixels") > field("pillar_pixels"));
    assert!(dir.path().join("m.rgfm").exists());
    let pgm = fs::read(dir.path().join("m.ch0.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rgk(dir.path(), &["encode", "--input", "nope.rgpc", "--out", "m.rgfm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=IoError"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = rgk(dir.path(), &["--set", "foo=1", "--dump-config"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kind=InvalidConfig"));
}

#[test]
fn dumped_config_reads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = rgk(
        dir.path(),
        &[
            "--preset",
            "tj4d",
            "--set",
            "lfa.radius=0.4",
            "--set",
            "bgl.lambda=0.25",
            "--dump-config",
        ],
    );
    assert!(first.status.success(), "{}", stderr(&first));
    fs::write(dir.path().join("run.cfg"), &first.stdout).unwrap();
    let second = rgk(dir.path(), &["--config", "run.cfg", "--dump-config"]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn bgl_rejects_unaligned_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.csv"),
        "x,y,z,l,w,h,theta\n0,0,0,4,2,1.5,0\n0,0,0,4,2,1.5,0\n",
    )
    .unwrap();
    fs::write(dir.path().join("g.csv"), "x,y,z,l,w,h,theta\n0,0,0,4,2,1.5,0\n").unwrap();
    let o = rgk(dir.path(), &["bgl", "--pred", "p.csv", "--gt", "g.csv"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("kind=LengthMismatch"), "{}", stderr(&o));
}

#[test]
fn bgl_identical_boxes_give_zero() {
    let dir = tempfile::tempdir().unwrap();
    let boxes = "x,y,z,l,w,h,theta\n1,2,0.5,4,1.8,1.5,0.3\n-3,7,0,0.8,0.6,1.7,1.2\n";
    fs::write(dir.path().join("b.csv"), boxes).unwrap();
    let o = rgk(dir.path(), &["bgl", "--pred", "b.csv", "--gt", "b.csv", "--grad-check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for line in text.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())) {
        let total: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(total, 0.0, "{line}");
    }
}

#[test]
fn selftest_names_the_check_a_truncated_weights_file_breaks() {
    let dir = tempfile::tempdir().unwrap();
    let g = rgk(dir.path(), &["generate", "--n", "50", "--out", "c.rgpc"]);
    assert!(g.status.success());
    let e = rgk(
        dir.path(),
        &[
            "encode",
            "--input",
            "c.rgpc",
            "--out",
            "m.rgfm",
            "--save-weights",
            "w.rgwt",
        ],
    );
    assert!(e.status.success(), "{}", stderr(&e));
    let good = rgk(dir.path(), &["selftest", "--weights", "w.rgwt"]);
    assert!(good.status.success(), "{}", stdout(&good));

    let bytes = fs::read(dir.path().join("w.rgwt")).unwrap();
    fs::write(dir.path().join("bad.rgwt"), &bytes[..bytes.len() / 2]).unwrap();
    let bad = rgk(dir.path(), &["selftest", "--weights", "bad.rgwt"]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(stdout(&bad).contains("FAIL weights_load"), "{}", stdout(&bad));
    assert!(stderr(&bad).contains("weights_load"));
}

#[test]
fn no_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rgk(dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kind=Usage"));
}
