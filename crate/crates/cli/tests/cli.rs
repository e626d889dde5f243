use std::path::Path;
use std::process::{Command, Output};

fn write_wav(path: &Path, fs: u32, n: usize) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: fs,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..n {
        w.write_sample(((i as f64 * 0.9).sin() * 8000.0) as i16)
            .unwrap();
    }
    w.finalize().unwrap();
}

fn setup(rows: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_wav(
        &dir.path().join("Example0_16_3587_1500.0_1.wav"),
        1500,
        3587,
    );
    let mut csv = String::from("filename,start_date\n");
    for r in rows {
        csv.push_str(&format!("{r}, 2010-01-01T00:00:00Z\n"));
    }
    std::fs::write(dir.path().join("meta.csv"), csv).unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "metadata_path = \"meta.csv\"\n\
         audio_dir = \".\"\n\
         output_path = \"out.ndjson\"\n\
         sensitivity_db = -170.0\n\
         segment_duration = 1.0\n\
         window_size = 500\n",
    )
    .unwrap();
    dir
}

fn soundscape(dir: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soundscape-metrics"))
        .arg("run")
        .arg("--config")
        .arg(dir.join("run.toml"))
        .args(extra)
        .output()
        .unwrap()
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn clean_run_exits_zero() {
    let dir = setup(&["Example0_16_3587_1500.0_1.wav"]);
    let out = soundscape(dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = lines(&dir.path().join("out.ndjson"));
    assert_eq!(v.len(), 3);
    assert_eq!(v[0]["kind"], "file");
    assert_eq!(v[2]["timestamp"], "2010-01-01T00:00:01Z");
}

#[test]
fn skipped_files_exit_two() {
    let dir = setup(&["Example0_16_3587_1500.0_1.wav", "absent.wav"]);
    let out = soundscape(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.wav"));
}

#[test]
fn empty_metadata_exits_nonzero() {
    let dir = setup(&[]);
    let out = soundscape(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(lines(&dir.path().join("out.ndjson")).is_empty());
}

#[test]
fn bad_config_exits_one() {
    let dir = setup(&["Example0_16_3587_1500.0_1.wav"]);
    std::fs::write(dir.path().join("run.toml"), "window_size = 500\n").unwrap();
    let out = soundscape(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing required setting"));
}

#[test]
fn unwritable_output_exits_one() {
    let dir = setup(&["Example0_16_3587_1500.0_1.wav"]);
    let target = dir.path().join("missing").join("out.ndjson");
    let out = soundscape(dir.path(), &["--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_override_config() {
    let dir = setup(&["Example0_16_3587_1500.0_1.wav"]);
    std::fs::write(
        dir.path().join("run.toml"),
        "metadata_path = \"meta.csv\"\n\
         audio_dir = \".\"\n\
         output_path = \"out.ndjson\"\n\
         sensitivity_db = -170.0\n\
         segment_duration = 1.0\n\
         window_size = 1500\n",
    )
    .unwrap();
    let csv_out = dir.path().join("wide.csv");
    let out = soundscape(
        dir.path(),
        &[
            "--out",
            csv_out.to_str().unwrap(),
            "--format",
            "csv",
            "--workers",
            "2",
            "--tol",
            "10:700",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv_out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    // segment size equals window size, so the whole file is one segment
    assert_eq!(rows.len(), 2);
    let fields: Vec<&str> = rows[1].split(',').collect();
    // 751 Welch bins and bands 10..=28
    assert_eq!(fields[1], "0");
    assert_eq!(fields[5], "2");
    assert_eq!(fields[8], "751");
    assert_eq!(fields[9], "19");
    assert!(!dir.path().join("out.ndjson").exists());
}

#[test]
fn rejects_malformed_tol_flag() {
    let dir = setup(&["Example0_16_3587_1500.0_1.wav"]);
    let out = soundscape(dir.path(), &["--tol", "700"]);
    assert!(!out.status.success());
}
