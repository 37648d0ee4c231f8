use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cdgan::cli::output::parse_pgm;
use cdgan::latent::LatentBatch;
use cdgan::models::{checkpoint, generator_forward};
use cdgan::autodiff::Matrix;

const SMOKE: &str = "\
name = smoke
out = smoke-out

[dataset]
source = shapes
n_per_class = 20
height = 12
width = 12
jitter_min = -1
jitter_max = 1
test_fraction = 0.25

[model]
d_z = 3
d_f = 4
g_hidden = 16
d_hidden = 16
e_hidden = 16

[train]
steps = 10
batch_g = 8
batch_d = 8
batch_e = 12
snapshot_every = 5
seed = 3

[eval]
runs = 2
grid_columns = 4
";

fn cdgan(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdgan"));
    cmd.args(args).env_remove("CDGAN_OUT_ROOT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn cdgan")
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("smoke.cfg");
    std::fs::write(&path, SMOKE).unwrap();
    path
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    let path = path.as_ref();
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn smoke_run_writes_every_artifact_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = cdgan(&["run", cfg.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run = dir.path().join("smoke-out");
    for name in ["history.csv", "report.json", "features.csv", "grid_5.pgm", "grid_10.pgm", "config.echo", "checkpoint.bin"] {
        assert!(run.join(name).is_file(), "missing {name}");
    }

    let history = String::from_utf8(read(run.join("history.csv"))).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "step,d_loss,g_gan,l_c,l_z,total,acc,nmi,ari");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].ends_with(",,,"));
    assert!(!lines[5].ends_with(",,,"));

    let features = String::from_utf8(read(run.join("features.csv"))).unwrap();
    assert_eq!(features.lines().next().unwrap(), "label,f_0,f_1,f_2,f_3");
    assert_eq!(features.lines().count(), 1 + 15);

    let echo = run.join("config.echo");
    let again = dir.path().join("again");
    let out = cdgan(&["run", echo.to_str().unwrap(), "--out", again.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(run.join("report.json")), read(again.join("report.json")));
    assert_eq!(read(run.join("history.csv")), read(again.join("history.csv")));
}

#[test]
fn grid_rows_regenerate_from_logged_latents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    assert!(cdgan(&["run", cfg.to_str().unwrap()], &[]).status.success());
    let run = dir.path().join("smoke-out");

    let csv = String::from_utf8(read(run.join("grid_latents.csv"))).unwrap();
    let mut z = Vec::new();
    let mut c = Vec::new();
    for (i, line) in csv.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let (row, col): (usize, usize) = (cells[0].parse().unwrap(), cells[1].parse().unwrap());
        assert_eq!((row, col), (i / 4, i % 4));
        let class: usize = cells[2].parse().unwrap();
        assert_eq!(class, row, "every grid row uses one class code");
        c.push(class);
        z.extend(cells[3..].iter().map(|v| v.parse::<f32>().unwrap()));
    }
    let n = c.len();
    let latent = LatentBatch::from_parts(Matrix::new(n, z.len() / n, z).unwrap(), c, 3, 1.0).unwrap();
    let bundle = checkpoint::load(run.join("checkpoint.bin")).unwrap();
    let images = generator_forward(&bundle, &latent).unwrap();

    let (w, h, px) = parse_pgm(&read(run.join("grid_10.pgm"))).unwrap();
    assert_eq!((w, h), (4 * 13 - 1, 3 * 13 - 1));
    for i in 0..n {
        let (r, col) = (i / 4, i % 4);
        for y in 0..12 {
            for x in 0..12 {
                let v = images.get(i, y * 12 + x);
                let want = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
                assert_eq!(px[(r * 13 + y) * w + col * 13 + x], want);
            }
        }
    }
}

#[test]
fn overrides_and_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let root = dir.path().join("root");
    let out = cdgan(
        &["run", cfg.to_str().unwrap(), "--steps", "4", "--seed", "9", "--out", "rel"],
        &[("CDGAN_OUT_ROOT", &root)],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&read(root.join("rel/report.json"))).unwrap();
    assert_eq!(report["steps"], 4);
    assert_eq!(report["seed"], 9);
    let echo = String::from_utf8(read(root.join("rel/config.echo"))).unwrap();
    assert!(echo.contains("steps = 4\n") && echo.contains("seed = 9\n"));
}

#[test]
fn missing_config_names_the_path() {
    let out = cdgan(&["run", "/nonexistent/dir/exp.cfg"], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/dir/exp.cfg"));
}

#[test]
fn invalid_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "name = bad\n\n[train]\nsteps = ten\n").unwrap();
    let out = cdgan(&["run", path.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{}:4:", path.display())), "{err}");
}

fn write_report(dir: &Path, file: &str, name: &str, acc: f64, nmi: f64, ari: f64) -> PathBuf {
    let path = dir.join(file);
    let json = serde_json::json!({
        "name": name, "seed": 0, "steps": 1, "acc": acc, "nmi": nmi, "ari": ari,
        "cluster_sizes": [1], "inter_class_cosine": 0.0, "n_test": 1, "runs": 5, "selection": "per_metric"
    });
    std::fs::write(&path, json.to_string()).unwrap();
    path
}

#[test]
fn compare_renders_sorted_rows_and_skips_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_report(dir.path(), "a.json", "unsupervised", 0.91, 0.93, 0.94);
    let b = write_report(dir.path(), "b.json", "few-labels", 0.95, 0.9, 0.89);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\"").unwrap();

    let single = cdgan(&["compare", a.to_str().unwrap()], &[]);
    assert!(single.status.success());
    let text = String::from_utf8(single.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("| unsupervised | 0.91 | 0.93 | 0.94 |"));

    let out = cdgan(&["compare", a.to_str().unwrap(), bad.to_str().unwrap(), b.to_str().unwrap()], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows, ["| few-labels | 0.95 | 0.9 | 0.89 |", "| unsupervised | 0.91 | 0.93 | 0.94 |"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));

    let csv = cdgan(&["compare", "--format", "csv", a.to_str().unwrap()], &[]);
    assert_eq!(String::from_utf8(csv.stdout).unwrap(), "name,acc,nmi,ari\nunsupervised,0.91,0.93,0.94\n");

    let none = cdgan(&["compare", bad.to_str().unwrap()], &[]);
    assert!(!none.status.success());
}

#[test]
fn shipped_configs_and_readme_example_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut seen = 0;
    for entry in std::fs::read_dir(root.join("configs")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            cdgan::cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
            seen += 1;
        }
    }
    assert!(seen >= 3);

    let readme = String::from_utf8(read(root.join("README.md"))).unwrap();
    let section = &readme[readme.find("## Config files").unwrap()..];
    let start = section.find("```\n").unwrap() + 4;
    let block = &section[start..start + section[start..].find("```").unwrap()];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("readme.cfg");
    std::fs::write(&path, block).unwrap();
    let cfg = cdgan::cli::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
    // apart from label_fraction the example spells out the defaults
    let defaults = cdgan::cli::ExperimentConfig::default();
    assert_eq!(cfg.train.label_fraction, 0.02);
    let mut train = cfg.train.clone();
    train.label_fraction = defaults.train.label_fraction;
    assert_eq!(train, defaults.train);
    assert_eq!(cfg.dataset, defaults.dataset);
    assert_eq!(cfg.eval, defaults.eval);
}
