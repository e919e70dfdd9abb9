use std::path::{Path, PathBuf};
use std::process::Command;

struct Block {
    lang: String,
    /// Last non-empty line before the opening fence.
    caption: String,
    body: String,
}

fn readme_blocks() -> Vec<Block> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "README.md"].iter().collect();
    let text = std::fs::read_to_string(path).unwrap();
    let mut blocks = Vec::new();
    let mut caption = String::new();
    let mut open: Option<Block> = None;
    for line in text.lines() {
        match (&mut open, line.strip_prefix("```")) {
            (None, Some(lang)) => {
                open = Some(Block {
                    lang: lang.trim().to_string(),
                    caption: caption.clone(),
                    body: String::new(),
                })
            }
            (Some(_), Some(_)) => blocks.push(open.take().unwrap()),
            (Some(b), None) => {
                b.body.push_str(line);
                b.body.push('\n');
            }
            (None, None) => {
                if !line.trim().is_empty() {
                    caption = line.trim().to_string();
                }
            }
        }
    }
    blocks
}

fn run(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sas"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn readme_examples_run() {
    let blocks = readme_blocks();
    let dir = tempfile::tempdir().unwrap();

    let fit = blocks
        .iter()
        .find(|b| b.caption == "`fit.json`:")
        .expect("fit.json block");
    std::fs::write(dir.path().join("fit.json"), &fit.body).unwrap();

    let commands: Vec<&str> = blocks
        .iter()
        .filter(|b| b.lang == "sh")
        .flat_map(|b| b.body.lines())
        .filter_map(|l| l.trim().strip_prefix("sas "))
        .collect();
    assert!(commands.len() >= 10, "README lists {} sas commands", commands.len());
    for cmd in &commands {
        let args: Vec<&str> = cmd.split_whitespace().collect();
        let out = run(dir.path(), &args);
        assert!(
            out.status.success(),
            "`sas {cmd}` failed with {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
    }

    for f in [
        "spectra/spectrum.csv",
        "spectra/spectrum_summary.txt",
        "synthetic.csv",
        "fit/fit_result.json",
        "fit/fitted_tensor.json",
        "fit/fit_summary.txt",
        "g2/g2.csv",
        "g2-model/g2.csv",
        "maps/map_theta.csv",
        "maps/map_theta.svg",
        "maps/map_width.csv",
        "maps/map_width.svg",
        "maps/map_width.json",
        "bell.json",
        "bell_summary.txt",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let header = std::fs::read_to_string(dir.path().join("maps/map_theta.csv")).unwrap();
    let columns = header.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        columns,
        "shift_cm1,theta_deg,E,F,concurrence,maximal,hatched,f_minimum,degenerate"
    );
}

#[test]
fn readme_run_configuration_is_valid() {
    let blocks = readme_blocks();
    let cfg = blocks
        .iter()
        .find(|b| b.lang == "json" && b.body.contains("\"preset\""))
        .expect("run configuration block");
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), &cfg.body).unwrap();
    let out = run(
        dir.path(),
        &[
            "state", "--config", "run.json", "--theta", "0", "--shift", "900", "--json",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["gisin_f"].as_f64().unwrap() - 2.544).abs() < 1e-3);
}
