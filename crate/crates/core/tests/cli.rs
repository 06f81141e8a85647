use std::path::Path;
use std::process::{Command, Output};

use partcrf::grid::LabelSet;
use partcrf::io;
use partcrf::relations::RelationTable;

fn partcrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partcrf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn assert_one_line_error(o: &Output) {
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err:?}");
}

#[test]
fn pipeline_on_synthetic_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let val = dir.path().join("val");
    let out = stdout(&partcrf(&["synth", "--count", "2", "--seed", "5", "--out-dir", p(&val)]));
    assert!(out.starts_with("wrote 2 scenes"));

    let learned = dir.path().join("learned.txt");
    let out = stdout(&partcrf(&[
        "learn-relations",
        "--gt-dir",
        p(&val.join("gt")),
        "--labels",
        p(&val.join("labels.txt")),
        "--threshold",
        "0.5",
        "--out",
        p(&learned),
    ]));
    assert!(out.starts_with("images 2 "), "{out}");
    let labels = io::load_labels(&val.join("labels.txt")).unwrap();
    let table = RelationTable::from_text(&std::fs::read_to_string(&learned).unwrap(), &labels).unwrap();
    let (head, eye) = (labels.id("head").unwrap(), labels.id("eye").unwrap());
    assert!(table.contains(eye, head));
    assert!(!table.contains(eye, labels.id("bg").unwrap()));

    let pred = dir.path().join("pred.png");
    let trace = dir.path().join("trace.txt");
    let out = stdout(&partcrf(&[
        "infer",
        "--unary",
        p(&val.join("0000.unary")),
        "--image",
        p(&val.join("0000.image.png")),
        "--relations",
        p(&val.join("relations.txt")),
        "--labels",
        p(&val.join("labels.txt")),
        "--config",
        p(&val.join("config.txt")),
        "--superpixels",
        p(&val.join("0000.sp")),
        "--out",
        p(&pred),
        "--trace",
        p(&trace),
    ]));
    assert!(out.starts_with("iterations "));
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("iteration max_delta energy"));
    assert!(trace.lines().count() >= 2);

    let out = stdout(&partcrf(&[
        "eval",
        "--pred",
        p(&pred),
        "--gt",
        p(&val.join("gt/0000.png")),
        "--labels",
        p(&val.join("labels.txt")),
    ]));
    let mean: f64 = out
        .lines()
        .last()
        .and_then(|l| l.strip_prefix("mean_iou "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(mean > 0.9, "{out}");
    assert_eq!(out.lines().count(), labels.len() + 1);

    let grid = dir.path().join("grid.txt");
    std::fs::write(&grid, "# candidates\nweight.containment=0\nweight.containment=3 max_iterations=5\n").unwrap();
    let best = dir.path().join("best.txt");
    let out = stdout(&partcrf(&[
        "sweep",
        "--grid",
        p(&grid),
        "--val-dir",
        p(&val),
        "--config",
        p(&val.join("config.txt")),
        "--out",
        p(&best),
    ]));
    assert_eq!(out.lines().filter(|l| l.starts_with("candidate ")).count(), 2);
    assert!(out.lines().any(|l| l.starts_with("best ")));
    assert!(std::fs::read_to_string(&best).unwrap().contains("weight.containment"));

    let png = dir.path().join("vis.png");
    stdout(&partcrf(&["visualize", "--labels", p(&pred), "--palette", "standard", "--out", p(&png)]));
    let img = io::load_image(&png).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));
}

#[test]
fn infer_without_label_names_uses_numeric_ids() {
    let dir = tempfile::tempdir().unwrap();
    let val = dir.path().join("fig");
    stdout(&partcrf(&["synth", "--kind", "figure", "--count", "1", "--out-dir", p(&val)]));
    let labels = io::load_labels(&val.join("labels.txt")).unwrap();
    let table = RelationTable::from_text(&std::fs::read_to_string(val.join("relations.txt")).unwrap(), &labels).unwrap();
    let anon = LabelSet::anonymous(labels.len()).unwrap();
    let rel = dir.path().join("rel.txt");
    std::fs::write(&rel, table.to_text(&anon).unwrap()).unwrap();
    let out = dir.path().join("out.png");
    stdout(&partcrf(&[
        "infer",
        "--unary",
        p(&val.join("0000.unary")),
        "--image",
        p(&val.join("0000.image.png")),
        "--relations",
        p(&rel),
        "--config",
        p(&val.join("config.txt")),
        "--superpixels",
        p(&val.join("0000.sp")),
        "--out",
        p(&out),
    ]));
    let pred = io::load_labelmap(&out).unwrap();
    let gt = io::load_labelmap(&val.join("gt/0000.png")).unwrap();
    let neck = labels.id("neck").unwrap();
    assert_eq!(pred.count(neck), gt.count(neck));
    let wrong = (0..gt.len()).filter(|&i| pred.get(i) != gt.get(i)).count();
    assert!(wrong < gt.len() / 50, "{wrong} pixels wrong");
}

#[test]
fn verify_reports_every_kind() {
    let out = stdout(&partcrf(&["verify", "--seed", "3", "--cases", "50"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    for (line, kind) in lines.iter().zip(["superpixel", "containment", "attachment"]) {
        assert!(line.starts_with(kind) && line.ends_with(" ok"), "{line}");
    }
}

#[test]
fn failures_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.unary");
    let o = partcrf(&[
        "infer",
        "--unary",
        p(&missing),
        "--image",
        "x.png",
        "--relations",
        "r.txt",
        "--config",
        "c.txt",
        "--out",
        "o.png",
    ]);
    assert_one_line_error(&o);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));

    let bad = dir.path().join("bad.unary");
    std::fs::write(&bad, b"UCRF\x01\x00").unwrap();
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "a\nb\n").unwrap();
    let o = partcrf(&["eval", "--pred", p(&bad), "--gt", p(&bad), "--labels", p(&labels)]);
    assert_one_line_error(&o);

    let cfg = dir.path().join("c.txt");
    std::fs::write(&cfg, "max_iterations = 3\nweight.sparkle = 1\n").unwrap();
    let val = dir.path().join("val");
    stdout(&partcrf(&["synth", "--count", "1", "--out-dir", p(&val)]));
    let o = partcrf(&[
        "infer",
        "--unary",
        p(&val.join("0000.unary")),
        "--image",
        p(&val.join("0000.image.png")),
        "--relations",
        p(&val.join("relations.txt")),
        "--labels",
        p(&val.join("labels.txt")),
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o.png")),
    ]);
    assert_one_line_error(&o);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("sparkle"), "{err}");

    assert_one_line_error(&partcrf(&["infer", "--unary"]));
    assert_one_line_error(&partcrf(&["frobnicate"]));
}

#[test]
fn help_exits_cleanly() {
    let o = partcrf(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["infer", "learn-relations", "eval", "sweep", "verify", "visualize"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}
