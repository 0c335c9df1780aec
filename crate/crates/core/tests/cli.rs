use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{ImageBuffer, Luma};
use serde_json::Value;

use irsatsim::compose::{FrameAnnotation, InstanceAnnotation};
use irsatsim::dataset::{frame_name, write_frame, write_mask, AnnotationFile, IntensityScale, ANNOTATION_SCHEMA};
use irsatsim::imggeo::ImageF;
use irsatsim::stats::MaskPatch;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irsatsim"));
    c.env_remove("IRSATSIM_WORKERS").env_remove("IRSATSIM_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn irsatsim")
}

fn spec(name: &str) -> String {
    format!("{}/specs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("json output")
}

fn png_size(path: &Path) -> (u32, u32) {
    let b = fs::read(path).unwrap();
    let w = u32::from_be_bytes(b[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(b[20..24].try_into().unwrap());
    (w, h)
}

#[test]
fn example_spec_is_reproducible_with_default_view() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ra = run(&["generate", "--spec", &spec("example.toml"), "--out", s(&a), "--seed", "42"]);
    assert!(ra.status.success(), "{}", String::from_utf8_lossy(&ra.stderr));
    let rb = run(&["--workers", "1", "generate", "--spec", &spec("example.toml"), "--out", s(&b), "--seed", "42"]);
    assert!(rb.status.success());

    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    for seq in ["seq_0000", "seq_0001"] {
        let frames = ta.keys().filter(|p| p.starts_with(format!("{seq}/frames"))).count();
        assert_eq!(frames, 104);
        assert_eq!(png_size(&a.join(seq).join("frames").join(frame_name(1))), (1024, 1024));
        let rec = json(&ta[&PathBuf::from(seq).join("record.json")]);
        assert_eq!(rec["seed"], 42);
    }
    let summary = json(&ra.stdout);
    assert_eq!(summary["sequences"].as_array().unwrap().len(), 2);
}

#[test]
fn stats_and_self_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(run(&["generate", "--spec", &spec("small.toml"), "--out", s(&data)]).status.success());

    let r1 = tmp.path().join("s1.json");
    let r2 = tmp.path().join("s2.json");
    assert!(run(&["stats", s(&data), "--out", s(&r1)]).status.success());
    assert!(run(&["--workers", "1", "stats", s(&data), "--out", s(&r2)]).status.success());
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    let st = json(&fs::read(&r1).unwrap());
    assert_eq!(st["schema"], "irsatsim.stats/1");
    assert_eq!(st["summary"]["sequences"], 1);

    let out = run(&["eval", "--pred", s(&data), "--gt", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&out.stdout);
    assert_eq!(rep["overall"]["pd"], 1.0);
    assert_eq!(rep["overall"]["fa"], 0.0);

    // every pixel lit except the targets: one huge false component, no detections
    let inv = tmp.path().join("inv/seq_0000");
    fs::create_dir_all(&inv).unwrap();
    for e in fs::read_dir(data.join("seq_0000/masks")).unwrap() {
        let p = e.unwrap().path();
        let m = image::open(&p).unwrap().to_luma8();
        let flipped = ImageBuffer::from_fn(m.width(), m.height(), |x, y| Luma([if m.get_pixel(x, y)[0] > 0 { 0u8 } else { 255 }]));
        flipped.save(inv.join(p.file_name().unwrap())).unwrap();
    }
    let out = run(&["eval", "--pred", s(&tmp.path().join("inv")), "--gt", s(&data)]);
    assert!(out.status.success());
    let rep = json(&out.stdout);
    assert_eq!(rep["overall"]["counts"]["td"], 0);
    assert_eq!(rep["overall"]["pd"], 0.0);
}

#[test]
fn argument_and_input_errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = \"x\"\n").unwrap();
    assert_eq!(run(&["generate", "--spec", s(&bad), "--out", s(&tmp.path().join("o"))]).status.code(), Some(6));

    let wide = tmp.path().join("wide.toml");
    fs::write(&wide, "seed = 1\nframes = 12\nfov = [128, 128]\n").unwrap();
    assert_eq!(run(&["generate", "--spec", s(&wide), "--out", s(&tmp.path().join("o"))]).status.code(), Some(2));

    let data = tmp.path().join("data");
    let ok = run(&["generate", "--spec", s(&wide), "--out", s(&data), "--allow-out-of-range"]);
    assert!(ok.status.success());

    let pred = tmp.path().join("pred/seq_0000");
    fs::create_dir_all(&pred).unwrap();
    for t in 1..=11 {
        fs::copy(data.join("seq_0000/masks").join(frame_name(t)), pred.join(frame_name(t))).unwrap();
    }
    fs::copy(data.join("seq_0000/masks").join(frame_name(1)), pred.join(frame_name(13))).unwrap();
    let out = run(&["eval", "--pred", s(&tmp.path().join("pred")), "--gt", s(&data)]);
    assert_eq!(out.status.code(), Some(7));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing 000012.png") && err.contains("unexpected 000013.png"), "{err}");

    assert_eq!(run(&["check", "--eps", "1"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "--pred", "x", "--gt", "y", "--threshold", "2"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn check_suite_reports_options_and_catches_wrong_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["check", "--eps", "2e-5", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = json(&out.stdout);
    assert_eq!(rep["options"]["eps"], 2e-5);
    assert_eq!(rep["options"]["seed"], 3);
    assert_eq!(rep["passed"], true);

    let out = run(&["check", "--offset-upsample-scale", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stdout)["passed"], false);

    let w = tmp.path().join("w.bin");
    assert!(run(&["check", "--save-weights", s(&w)]).status.success());
    let report = tmp.path().join("r.json");
    let out = run(&["check", "--weights", s(&w), "--out", s(&report)]);
    assert!(out.status.success());
    let rep = json(&fs::read(&report).unwrap());
    let names: Vec<&str> = rep["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"weights.bundle_roundtrip"), "{names:?}");
}

const N: usize = 16;

fn point_instance(id: u32, x: i64, y: i64, scr: f64) -> InstanceAnnotation {
    let mask = MaskPatch::from_points(&[(x, y)]).unwrap();
    InstanceAnnotation {
        id,
        bbox: mask.bbox().unwrap(),
        centroid: (x as f64, y as f64),
        visible: true,
        scr,
        area: 1,
        eccentricity: 0.0,
        mask,
    }
}

fn write_conf(path: &Path, px: &[(u32, u32, u8)]) {
    let mut img = ImageBuffer::<Luma<u8>, _>::new(N as u32, N as u32);
    for (x, y, v) in px {
        img.put_pixel(*x, *y, Luma([*v]));
    }
    img.save(path).unwrap();
}

/// Three 16x16 frames with hand-counted detections.
fn toy_fixture(root: &Path) -> (PathBuf, PathBuf) {
    let gt = root.join("gt/seq_0000");
    let pred = root.join("pred/seq_0000");
    fs::create_dir_all(gt.join("frames")).unwrap();
    fs::create_dir_all(gt.join("masks")).unwrap();
    fs::create_dir_all(&pred).unwrap();
    let scale = IntensityScale::from_range(0.0, 200.0);
    let targets: [&[(i64, i64)]; 3] = [&[(5, 5)], &[(10, 10)], &[(3, 12), (12, 3)]];
    let mut annotations = Vec::new();
    for (t, pts) in targets.iter().enumerate() {
        write_frame(&gt.join("frames").join(frame_name(t + 1)), &ImageF::from_fn(N, N, |_, _| 100.0), &scale).unwrap();
        let mut ids = vec![0u8; N * N];
        for (k, (x, y)) in pts.iter().enumerate() {
            ids[*y as usize * N + *x as usize] = k as u8 + 1;
        }
        write_mask(&gt.join("masks").join(frame_name(t + 1)), &ids, N, N).unwrap();
        annotations.push(FrameAnnotation {
            frame: t + 1,
            instances: pts.iter().enumerate().map(|(k, (x, y))| point_instance(k as u32 + 1, *x, *y, 8.0)).collect(),
        });
    }
    let ann = AnnotationFile {
        schema: ANNOTATION_SCHEMA.into(),
        sequence: "seq_0000".into(),
        frames: 3,
        fov: (N, N),
        intensity_scale: scale,
        annotations,
    };
    fs::write(gt.join("annotations.json"), serde_json::to_vec(&ann).unwrap()).unwrap();

    write_conf(&pred.join(frame_name(1)), &[(5, 5, 255), (6, 5, 255)]);
    write_conf(&pred.join(frame_name(2)), &[(10, 13, 200), (1, 1, 128), (2, 1, 128), (1, 2, 128)]);
    write_conf(&pred.join(frame_name(3)), &[(3, 12, 100)]);
    (root.join("pred"), root.join("gt"))
}

#[test]
fn toy_sequence_scores_match_hand_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (pred, gt) = toy_fixture(tmp.path());
    let out = run(&["eval", "--pred", s(&pred), "--gt", s(&gt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&out.stdout);
    let o = &rep["overall"];
    assert_eq!(o["counts"]["td"], 1);
    assert_eq!(o["counts"]["at"], 4);
    assert_eq!(o["counts"]["fd"], 4);
    assert_eq!(o["counts"]["np"], 768);
    assert_eq!(o["pd"], 0.25);
    assert!((o["fa"].as_f64().unwrap() - 4.0 / 768.0).abs() < 1e-15);
    assert!((o["auc"].as_f64().unwrap() - 0.25).abs() < 1e-12, "{}", o["auc"]);
    let seq = &rep["sequences"][0];
    assert_eq!(seq["scene"], "easy");
    assert_eq!(seq["mean_scr"], 8.0);
    assert_eq!(seq["complexity"], 0.0);
    assert!(rep["per_scene"]["easy"].is_object());

    // at a 3 px match radius the frame-2 pixel sits exactly on the boundary; 3.5 takes it
    let out = run(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--match-threshold", "3.5", "--matching", "optimal"]);
    let o = &json(&out.stdout)["overall"];
    assert_eq!(o["counts"]["td"], 2);
    assert_eq!(o["counts"]["fd"], 3);
}
