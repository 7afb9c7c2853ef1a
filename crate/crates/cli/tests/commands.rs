use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvlidarnet::labels::load_seg7_labels;
use mvlidarnet::postprocess::format::{detections_from_json, format_detections, parse_detections};
use mvlidarnet::postprocess::postprocess;
use mvlidarnet::projection::spherical_project;
use mvlidarnet::{
    save_kitti_bin, BevConfig, ClusterConfig, Det3, OrientedBox, PipelineConfig, PointCloud,
    PointLabels, RangeImageConfig, Seg7,
};
use mvlidarnet_cli::image::{box_color, outline, parse_pnm, render_bev, world_pixel, BACKGROUND};
use mvlidarnet_cli::scene::{synthetic_scan, SceneConfig};
use mvlidarnet_testkit::fixtures::synthetic_grids;
use mvlidarnet_testkit::projection::knn_vote;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvlidarnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        range: RangeImageConfig {
            rows: 16,
            cols: 256,
            ..Default::default()
        },
        bev: BevConfig {
            width_cells: 128,
            length_cells: 128,
            extent: 80.0,
            out_stride: 4,
        },
        ..Default::default()
    }
}

fn small_scene() -> SceneConfig {
    SceneConfig {
        beams: 16,
        azimuth_steps: 256,
        ..Default::default()
    }
}

/// A temp dir with `pipeline.cfg` and an `in/` directory of `n` scans.
fn workspace(n: usize) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.cfg");
    std::fs::write(&cfg, small_config().to_text()).unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for k in 0..n {
        let (cloud, _) = synthetic_scan(&small_scene(), k as u64);
        save_kitti_bin(&cloud, input.join(format!("{k:06}.bin"))).unwrap();
    }
    (dir, cfg, input)
}

fn summary(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

#[test]
fn segment_empty_directory() {
    let (dir, cfg, input) = workspace(0);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "segment",
        s(&input),
        "--out",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--random-weights",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = summary(&out);
    assert_eq!(v["processed"], 0);
    assert_eq!(v["failed"].as_array().unwrap().len(), 0);
    assert!(out_dir.join("summary.json").is_file());
}

#[test]
fn segment_writes_one_label_per_point_and_knn_variant() {
    let (dir, cfg, input) = workspace(1);
    let out_dir = dir.path().join("out");
    let args = [
        "segment",
        s(&input),
        "--out",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--random-weights",
        "--seed",
        "5",
        "--knn",
    ];
    let out = run(&args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(summary(&out)["processed"], 1);

    let cloud = mvlidarnet::load_kitti_bin(input.join("000000.bin")).unwrap();
    let plain = load_seg7_labels(out_dir.join("000000.label")).unwrap();
    let smooth = load_seg7_labels(out_dir.join("000000.knn.label")).unwrap();
    assert_eq!(plain.len(), cloud.len());
    assert_eq!(smooth.len(), cloud.len());

    // The smoothed file is exactly the exhaustive vote over the plain labels,
    // so the two differ only where that vote changes a label.
    let c = small_config();
    let img = spherical_project(&cloud, &c.range).unwrap();
    let votes = knn_vote(
        cloud.points(),
        img.point_cells(),
        plain.labels(),
        c.range.cols,
        c.knn.k,
        c.knn.window,
        c.knn.cutoff,
    );
    assert_eq!(smooth.labels(), &votes[..]);

    // Same seed, same bytes.
    let again = dir.path().join("again");
    let mut args2 = args.to_vec();
    args2[3] = s(&again);
    assert_eq!(run(&args2).status.code(), Some(0));
    assert_eq!(
        std::fs::read(out_dir.join("000000.label")).unwrap(),
        std::fs::read(again.join("000000.label")).unwrap()
    );
}

#[test]
fn segment_without_knn_writes_no_variant() {
    let (dir, cfg, input) = workspace(1);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "segment",
        s(&input),
        "--out",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--random-weights",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("000000.label").is_file());
    assert!(!out_dir.join("000000.knn.label").exists());
}

#[test]
fn bad_file_fails_alone() {
    let (dir, cfg, input) = workspace(2);
    std::fs::write(input.join("000001.bin"), [0u8; 7]).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "segment",
        s(&input),
        "--out",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--random-weights",
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = summary(&out);
    assert_eq!(v["processed"], 1);
    assert!(v["failed"][0]["file"]
        .as_str()
        .unwrap()
        .ends_with("000001.bin"));
    assert!(out_dir.join("000000.label").is_file());
}

#[test]
fn configuration_errors_exit_2() {
    let (dir, cfg, input) = workspace(1);
    let out_dir = dir.path().join("out");
    let missing = dir.path().join("nope");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "segment",
            s(&missing),
            "--out",
            s(&out_dir),
            "--random-weights",
        ],
        vec![
            "segment",
            s(&input),
            "--out",
            s(&out_dir),
            "--config",
            s(&cfg),
        ],
        vec![
            "detect",
            s(&input),
            "--out",
            s(&out_dir),
            "--config",
            s(&missing),
            "--random-weights",
        ],
        vec![
            "detect",
            s(&input),
            "--out",
            s(&out_dir),
            "--weights1",
            s(&missing),
            "--weights2",
            s(&missing),
        ],
        vec!["segment", s(&input), "--out", s(&out_dir)],
        vec!["bench", "--repeats", "0", "--random-weights"],
        vec!["frobnicate"],
    ];
    for args in cases {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
    std::fs::write(&cfg, "bev.out_stride = 3\n").unwrap();
    let out = run(&[
        "detect",
        s(&input),
        "--out",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--random-weights",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_writes_all_products_and_text_parses_back() {
    let (dir, cfg, input) = workspace(2);
    let empty = PointCloud::empty();
    save_kitti_bin(&empty, input.join("empty.bin")).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "detect",
        s(&input),
        "--out",
        s(&out_dir),
        "--config",
        s(&cfg),
        "--random-weights",
        "--threshold",
        "0.3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(summary(&out)["processed"], 3);

    let bev = small_config().bev;
    for name in ["000000", "000001", "empty"] {
        let text = std::fs::read_to_string(out_dir.join(format!("{name}.txt"))).unwrap();
        let json = std::fs::read_to_string(out_dir.join(format!("{name}.json"))).unwrap();
        let from_text: Vec<OrientedBox> = parse_detections(&text)
            .unwrap()
            .into_iter()
            .map(|(_, b)| b)
            .collect();
        let from_json = detections_from_json(&json).unwrap();
        assert_eq!(from_text.len(), from_json.len());
        assert_eq!(format_detections(Some(name), &from_json), text);

        let pgm = std::fs::read(out_dir.join(format!("{name}.drivable.pgm"))).unwrap();
        let (magic, w, h, data) = parse_pnm(&pgm).unwrap();
        assert_eq!(
            (magic.as_str(), w, h),
            ("P5", bev.length_cells, bev.width_cells)
        );
        assert_eq!(data.len(), w * h);
        let ppm = std::fs::read(out_dir.join(format!("{name}.bev.ppm"))).unwrap();
        let (magic, w, h, data) = parse_pnm(&ppm).unwrap();
        assert_eq!(
            (magic.as_str(), w, h, data.len()),
            ("P6", 128, 128, 3 * 128 * 128)
        );
        if name == "empty" {
            assert!(text.trim().is_empty());
            assert!(data.iter().all(|&v| v == 0));
        }
    }
}

#[test]
fn visualization_contains_exactly_the_decoded_boxes() {
    let bev = BevConfig::default();
    let mk = |class, cx, cy, yaw| OrientedBox {
        class,
        cx,
        cy,
        width: 1.8,
        length: if class == Det3::Vehicle { 4.5 } else { 0.7 },
        yaw,
        confidence: 0.9,
    };
    let objects = [
        mk(Det3::Vehicle, 12.0, -6.0, 0.3),
        mk(Det3::Vehicle, -18.0, 20.0, PI / 2.0),
        mk(Det3::Pedestrian, 6.0, 9.0, -1.0),
    ];
    let (cg, bg) = synthetic_grids(&objects, &bev);
    let dets = postprocess(&cg, &bg, &bev, &ClusterConfig::default()).unwrap();
    assert_eq!(dets.len(), 3);

    // Through the command: scan for geometry, detection file for boxes.
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scene.bin");
    save_kitti_bin(&PointCloud::empty(), &scan).unwrap();
    let det_file = dir.path().join("scene.txt");
    std::fs::write(&det_file, format_detections(None, &dets)).unwrap();
    let out = run(&[
        "viz",
        s(&scan),
        "--detections",
        s(&det_file),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let ppm = std::fs::read(dir.path().join("scene.bev.ppm")).unwrap();
    let (_, w, h, data) = parse_pnm(&ppm).unwrap();
    let px = |r: i64, c: i64| {
        let k = 3 * (r as usize * w + c as usize);
        [data[k], data[k + 1], data[k + 2]]
    };

    let parsed: Vec<OrientedBox> = parse_detections(&std::fs::read_to_string(&det_file).unwrap())
        .unwrap()
        .into_iter()
        .map(|(_, b)| b)
        .collect();
    let mut colors = Vec::new();
    for (k, d) in parsed.iter().enumerate() {
        let color = box_color(k, d);
        colors.push(color);
        for [x, y] in outline(d) {
            let (r, c) = world_pixel(&bev, x, y);
            assert_eq!(px(r, c), color, "corner of {d:?}");
        }
        if d.class == Det3::Pedestrian {
            let o = outline(d);
            let side = (o[0][0] - o[1][0]).hypot(o[0][1] - o[1][1]);
            assert!((side - d.width.max(d.length)).abs() < 1e-9);
        }
    }
    // Nothing but the outlines on an empty scan.
    let drawn = render_bev(&bev, None, None, &parsed);
    let mut seen = 0;
    for r in 0..h {
        for c in 0..w {
            let p = px(r as i64, c as i64);
            assert_eq!(p, drawn.get(r, c));
            if p != BACKGROUND {
                assert!(colors.contains(&p));
                seen += 1;
            }
        }
    }
    assert!(seen > 0);
}

fn write_labels(dir: &Path, name: &str, labels: &[Seg7]) {
    std::fs::create_dir_all(dir).unwrap();
    let l = PointLabels::from_seg7(labels.iter().copied());
    std::fs::write(dir.join(name), l.to_label_bytes()).unwrap();
}

#[test]
fn eval_seg_reports_hand_example_and_identity() {
    use Seg7::{Car, Road};
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt, out_dir) = (
        dir.path().join("pred"),
        dir.path().join("gt"),
        dir.path().join("m"),
    );
    write_labels(
        &gt,
        "a.label",
        &[Car, Car, Car, Car, Car, Car, Car, Car, Road, Road],
    );
    write_labels(
        &pred,
        "a.label",
        &[Car, Car, Car, Car, Car, Car, Road, Road, Car, Car],
    );
    let out = run(&[
        "eval-seg",
        s(&pred),
        s(&gt),
        "--gt-format",
        "seg7",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v["per_class"][Car as usize], 0.6);
    assert_eq!(v["per_class"][Road as usize], 0.0);
    assert_eq!(v["miou"], 0.3);
    assert!(out_dir.join("metrics.txt").is_file());

    write_labels(
        &pred,
        "a.label",
        &[Car, Car, Car, Car, Car, Car, Car, Car, Road, Road],
    );
    let out = run(&[
        "eval-seg",
        s(&pred),
        s(&gt),
        "--gt-format",
        "seg7",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v["miou"], 1.0);
}

#[test]
fn eval_seg_remaps_raw_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    write_labels(&pred, "a.label", &[Seg7::Car, Seg7::Road, Seg7::Unknown]);
    std::fs::create_dir_all(&gt).unwrap();
    // 10 = car, 40 = road, 1 = unlabeled; upper half carries instance ids.
    let raw: Vec<u8> = [10u32 | 7 << 16, 40, 1]
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    std::fs::write(gt.join("a.label"), raw).unwrap();
    let out_dir = dir.path().join("m");
    let out = run(&["eval-seg", s(&pred), s(&gt), "--out", s(&out_dir)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v["miou"], 1.0);
}

#[test]
fn eval_missing_pairs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    write_labels(&pred, "a.label", &[Seg7::Car]);
    write_labels(&gt, "b.label", &[Seg7::Car]);
    let out = run(&["eval-seg", s(&pred), s(&gt), "--gt-format", "seg7"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no ground truth"));

    let (pd, gd) = (dir.path().join("pd"), dir.path().join("gd"));
    std::fs::create_dir_all(&pd).unwrap();
    std::fs::create_dir_all(&gd).unwrap();
    std::fs::write(gd.join("x.txt"), "").unwrap();
    assert_eq!(run(&["eval-det", s(&pd), s(&gd)]).status.code(), Some(1));
}

#[test]
fn eval_det_perfect_predictions_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    let (_, objects) = synthetic_scan(&small_scene(), 3);
    for (k, chunk) in objects.chunks(4).enumerate() {
        let text = format_detections(None, chunk);
        std::fs::write(pred.join(format!("{k}.txt")), &text).unwrap();
        std::fs::write(gt.join(format!("{k}.txt")), &text).unwrap();
    }
    let out_dir = dir.path().join("m");
    for points in ["40", "11"] {
        let out = run(&[
            "eval-det",
            s(&pred),
            s(&gt),
            "--points",
            points,
            "--out",
            s(&out_dir),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let v: Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
        for c in v["overall"].as_array().unwrap() {
            assert_eq!(c["ap"], 1.0, "{c}");
        }
        for b in v["buckets"].as_array().unwrap() {
            assert!(b["ap"].is_null() || b["ap"] == 1.0, "{b}");
        }
    }
}

#[test]
fn bench_single_repeat_has_no_p95() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.cfg");
    std::fs::write(&cfg, small_config().to_text()).unwrap();
    let (scans, _, _) = workspace(1);
    let input = scans.path().join("in");
    let out = run(&[
        "bench",
        "--config",
        s(&cfg),
        "--random-weights",
        "--repeats",
        "1",
        "--warmup",
        "0",
        "--scans",
        s(&input),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        v,
        serde_json::from_slice::<Value>(&std::fs::read(dir.path().join("bench.json")).unwrap())
            .unwrap()
    );
    let stages = v["stages"].as_object().unwrap();
    let total = stages["total"]["median_ms"].as_f64().unwrap();
    for (name, st) in stages {
        assert_eq!(st["samples"], 1, "{name}");
        assert!(st.get("p95_ms").is_none(), "{name}");
        let m = st["median_ms"].as_f64().unwrap();
        assert!(m >= 0.0 && m <= total, "{name}: {m} vs total {total}");
    }
}

#[test]
fn bench_reports_p95_over_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.cfg");
    std::fs::write(&cfg, small_config().to_text()).unwrap();
    let out = run(&[
        "bench",
        "--config",
        s(&cfg),
        "--random-weights",
        "--repeats",
        "3",
        "--frames",
        "2",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["frames"], 2);
    assert_eq!(v["points_per_frame"][0], 120_000);
    let total = &v["stages"]["total"];
    assert_eq!(total["samples"], 3);
    assert!(total["p95_ms"].as_f64().unwrap() >= total["median_ms"].as_f64().unwrap());
}
