use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vorx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vorx"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn vorx")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = vorx(dir, args);
    assert!(
        o.status.success(),
        "vorx {args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], code: &str) -> String {
    let o = vorx(dir, args);
    assert!(!o.status.success(), "vorx {args:?} should fail");
    let err = String::from_utf8(o.stderr).unwrap();
    let prefix = format!("ERROR {code}: ");
    assert!(err.starts_with(&prefix), "{err:?}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err:?}");
    err
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn count(hay: &str, needle: &str) -> usize {
    hay.matches(needle).count()
}

#[test]
fn morton_subcommands() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(ok(p, &["morton", "encode", "5", "3"]), "27\n");
    assert_eq!(ok(p, &["morton", "decode", "27"]), "5 3\n");
    assert_eq!(
        ok(
            p,
            &["morton", "decompose", "0", "1", "1", "2", "--bits", "2"]
        ),
        "[[2,3],[8,9]]\n"
    );
    assert_eq!(
        ok(
            p,
            &[
                "--bits",
                "2",
                "morton",
                "decompose",
                "0",
                "0",
                "3",
                "3",
                "--max-ranges",
                "1"
            ]
        ),
        "[[0,15]]\n"
    );
    let err = fails(
        p,
        &["morton", "encode", "4", "0", "--bits", "2"],
        "COORD_OUT_OF_GRID",
    );
    assert!(err.contains("usage"));
    fails(
        p,
        &["morton", "decode", "16", "--bits", "2"],
        "KEY_OUT_OF_GRID",
    );
    let o = vorx(p, &["morton", "encode", "x", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_sites_is_seeded_and_bounded() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let one = ok(p, &["gen-sites", "-n", "1"]);
    assert_eq!(one.lines().count(), 2);
    assert!(one.starts_with("id,x,y\n"));

    ok(
        p,
        &[
            "--seed",
            "3",
            "--box",
            "-5,10,20,30",
            "--out",
            "a.csv",
            "gen-sites",
            "-n",
            "1000",
        ],
    );
    ok(
        p,
        &[
            "--seed",
            "3",
            "--box",
            "-5,10,20,30",
            "--out",
            "b.csv",
            "gen-sites",
            "-n",
            "1000",
        ],
    );
    let a = fs::read(p.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(p.join("b.csv")).unwrap());
    let mut rdr = csv::Reader::from_reader(&a[..]);
    let mut n = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let x: f64 = row[1].parse().unwrap();
        let y: f64 = row[2].parse().unwrap();
        assert!(x > -5.0 && x < 20.0 && y > 10.0 && y < 30.0);
        n += 1;
    }
    assert_eq!(n, 1000);
    assert!(p.join("a.csv.manifest.json").exists());
}

#[test]
fn voronoi_outputs() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("two.csv"), "id,x,y\n0,300,500\n1,700,500\n").unwrap();
    ok(p, &["--out", "two.svg", "voronoi", "two.csv"]);
    let svg = fs::read_to_string(p.join("two.svg")).unwrap();
    assert_eq!(count(&svg, "class=\"edge\""), 1);
    assert_eq!(count(&svg, "class=\"cell\""), 2);
    assert_eq!(count(&svg, "class=\"site\""), 2);
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));

    fs::write(p.join("tri.csv"), "id,x,y\n0,0,0\n1,4,0\n2,0,4\n").unwrap();
    ok(
        p,
        &[
            "--box",
            "-10,-10,10,10",
            "--out",
            "tri.svg",
            "voronoi",
            "tri.csv",
            "--stats",
            "tri.json",
        ],
    );
    let s = json(&p.join("tri.json"));
    assert_eq!(s["interior_vertices"], 1);

    ok(
        p,
        &["--seed", "8", "--out", "s500.csv", "gen-sites", "-n", "500"],
    );
    ok(p, &["--out", "s500.svg", "voronoi", "s500.csv"]);
    let svg = fs::read_to_string(p.join("s500.svg")).unwrap();
    assert_eq!(count(&svg, "class=\"cell\""), 500);
    let s = json(&p.join("s500.stats.json"));
    assert!(s["stats"]["circle_events_processed"].as_u64().unwrap() <= 995);
    assert_eq!(s["cells"], 500);
}

#[test]
fn voronoi_input_errors_name_the_line() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("bad.csv"), "id,x,y\n0,1,1\n1,oops,2\n").unwrap();
    let err = fails(p, &["--out", "x.svg", "voronoi", "bad.csv"], "PARSE_ERROR");
    assert!(err.contains("line 3"), "{err}");
    fs::write(p.join("dup.csv"), "id,x,y\n0,1,1\n1,1,1\n").unwrap();
    fails(p, &["--out", "x.svg", "voronoi", "dup.csv"], "BUILD_ERROR");
    fails(p, &["--out", "x.svg", "voronoi", "missing.csv"], "IO_ERROR");
}

#[test]
fn dynamic_static_frame_matches_voronoi() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &["--seed", "4", "--out", "s.csv", "gen-sites", "-n", "60"],
    );
    ok(p, &["--out", "v.svg", "voronoi", "s.csv"]);
    ok(p, &["--out", "frames", "dynamic", "s.csv", "--ticks", "1"]);
    assert_eq!(
        fs::read(p.join("v.svg")).unwrap(),
        fs::read(p.join("frames/frame_000000.svg")).unwrap()
    );
    assert!(p.join("frames/manifest.json").exists());
}

#[test]
fn dynamic_frames_are_reproducible_and_bounded() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &["--seed", "5", "--out", "s.csv", "gen-sites", "-n", "50"],
    );
    let run = |dir: &str| {
        ok(
            p,
            &[
                "--seed", "5", "--out", dir, "dynamic", "s.csv", "--ticks", "100", "--model",
                "bounce", "--speed", "300",
            ],
        );
    };
    run("a");
    run("b");
    let idx = json(&p.join("a/frames.json"));
    let frames = idx["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 100);
    for (i, f) in frames.iter().enumerate() {
        let name = format!("frame_{i:06}.svg");
        assert_eq!(f["file"], name.as_str());
        assert_eq!(
            fs::read(p.join("a").join(&name)).unwrap(),
            fs::read(p.join("b").join(&name)).unwrap()
        );
        let n = f["sites"].as_array().unwrap().len() as u64;
        assert!(f["stats"]["circle_events_processed"].as_u64().unwrap() <= 2 * n - 5);
        for s in f["sites"].as_array().unwrap() {
            let (x, y) = (
                s["position"]["x"].as_f64().unwrap(),
                s["position"]["y"].as_f64().unwrap(),
            );
            assert!(x > 0.0 && x < 1000.0 && y > 0.0 && y < 1000.0);
        }
    }
    assert_eq!(
        fs::read(p.join("a/frames.json")).unwrap(),
        fs::read(p.join("b/frames.json")).unwrap()
    );
}

fn write_config(p: &Path, name: &str, duration: f64) {
    let cfg = serde_json::json!({
        "publishers": [{"site_id": 0, "x": 500.0, "y": 500.0, "lambda": 1.0}],
        "service": {"kind": "exponential", "mean": 0.5},
        "duration_s": duration,
        "seed": 1
    });
    fs::write(p.join(name), cfg.to_string()).unwrap();
}

#[test]
fn simulate_reports() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    write_config(p, "zero.json", 0.0);
    ok(p, &["--out", "zero.out.json", "simulate", "zero.json"]);
    let r = json(&p.join("zero.out.json"));
    assert_eq!(r["published"], 0);
    assert_eq!(r["served"], 0);

    write_config(p, "mm1.json", 500.0);
    let line = ok(p, &["--out", "r1.json", "simulate", "mm1.json"]);
    assert!(
        line.starts_with("published=") && line.contains("predicted_s=1.000000"),
        "{line}"
    );
    ok(p, &["--out", "r2.json", "simulate", "mm1.json"]);
    assert_eq!(json(&p.join("r1.json")), json(&p.join("r2.json")));
    for k in [
        "published",
        "served",
        "mean_sojourn_s",
        "kingman_prediction_s",
        "arrival_histogram",
        "per_cell_counts",
        "seed",
    ] {
        assert!(!json(&p.join("r1.json"))[k].is_null(), "{k}");
    }
    ok(
        p,
        &["--seed", "2", "--out", "r3.json", "simulate", "mm1.json"],
    );
    assert_eq!(json(&p.join("r3.json"))["seed"], 2);

    fs::write(
        p.join("bad.json"),
        r#"{"publishers":[],"service":{"kind":"exponential","mean":0.5},"duration_s":1,"sede":1}"#,
    )
    .unwrap();
    let err = fails(p, &["simulate", "bad.json"], "CONFIG_ERROR");
    assert!(err.contains("sede"), "{err}");
}

#[test]
fn query_matches_linear_scan() {
    use rand::{Rng, SeedableRng};
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let mut csv = String::from("id,x,y,timestamp_us,payload\n");
    let mut cells = Vec::new();
    for i in 0..400 {
        let (x, y): (f64, f64) = (r.random_range(0.0..1000.0), r.random_range(0.0..1000.0));
        csv.push_str(&format!("{i},{x},{y},{i},p{i}\n"));
        // 6 bits over a 1000-wide box.
        let c = |v: f64| ((v / 1000.0 * 64.0) as u32).min(63);
        cells.push((c(x), c(y)));
    }
    fs::write(p.join("r.csv"), csv).unwrap();
    ok(
        p,
        &[
            "--bits",
            "6",
            "--out",
            "snap.bin",
            "index",
            "build",
            "r.csv",
            "--page-capacity",
            "8",
        ],
    );

    let all: Value = serde_json::from_str(&ok(p, &["--bits", "6", "query", "snap.bin"])).unwrap();
    assert_eq!(all["count"], 400);
    let none: Value = serde_json::from_str(&ok(
        p,
        &[
            "--bits",
            "6",
            "query",
            "snap.bin",
            "--region",
            "2000,2000,3000,3000",
        ],
    ))
    .unwrap();
    assert_eq!(none["count"], 0);

    for _ in 0..100 {
        let (a, b, c, e) = (
            r.random_range(0..64u32),
            r.random_range(0..64u32),
            r.random_range(0..64u32),
            r.random_range(0..64u32),
        );
        let ext = [a.min(b), c.min(e), a.max(b), c.max(e)];
        let arg = format!("{},{},{},{}", ext[0], ext[1], ext[2], ext[3]);
        let got: Value = serde_json::from_str(&ok(
            p,
            &["--bits", "6", "query", "snap.bin", "--extent", &arg],
        ))
        .unwrap();
        let mut ids: Vec<u64> = got["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["site_id"].as_u64().unwrap())
            .collect();
        ids.sort_unstable();
        let want: Vec<u64> = cells
            .iter()
            .enumerate()
            .filter(|(_, &(x, y))| x >= ext[0] && x <= ext[2] && y >= ext[1] && y <= ext[3])
            .map(|(i, _)| i as u64)
            .collect();
        assert_eq!(ids, want, "extent {arg}");
    }

    fs::write(p.join("junk.bin"), b"NOTASNAPSHOT").unwrap();
    fails(p, &["query", "junk.bin"], "SNAPSHOT_FORMAT");
}

#[test]
fn replay_reproduces_outputs() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(
        p,
        &["--seed", "6", "--out", "s.csv", "gen-sites", "-n", "80"],
    );
    ok(
        p,
        &["--out", "v.svg", "voronoi", "s.csv", "--scheme", "mono"],
    );
    let first = fs::read(p.join("v.svg")).unwrap();
    let stats = json(&p.join("v.stats.json"));
    fs::remove_file(p.join("v.svg")).unwrap();
    ok(p, &["replay", "v.svg.manifest.json"]);
    assert_eq!(fs::read(p.join("v.svg")).unwrap(), first);
    let mut again = json(&p.join("v.stats.json"));
    // Wall time is the one field that may differ between runs.
    let mut a = stats;
    a["stats"]["build_wall_time"] = Value::Null;
    again["stats"]["build_wall_time"] = Value::Null;
    assert_eq!(a, again);

    let m = json(&p.join("v.svg.manifest.json"));
    assert_eq!(m["subcommand"], "voronoi");
    assert_eq!(m["tool"], "vorx");
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = vorx(d.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("ERROR USAGE: "));
    let o = vorx(d.path(), &["voronoi", "s.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
