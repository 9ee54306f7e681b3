use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::thread;

use izflood::izmesh::ZoneMesh;
use izflood::render::analyze_frame;
use izflood::terrain::{read_ascii_grid, save_ascii_grid, synth_terrain, DtmRaster, TerrainShape, TerrainSpec};

const ISLAND: &str = r#"
[terrain.synthetic]
ncols = 24
nrows = 24
cellsize = 30.0
shape = "island_with_lowered_center"
rim_z = 2.0
depression_depth = 1.8
apron_width = 3.0
rim_distance = 7.0

[hydrograph]
points = [[0.0, 1.0], [1800.0, 1.8], [7200.0, 1.8]]

[subsurface]
storage = 1e-7
permeability = 1e-8
layers = 6
coarsen = 1

[coupling]
mode = "in_process"
timeout = 20.0

[run]
end_time = 3600.0
output_interval = 300.0
"#;

fn izflood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_izflood")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn grid(dir: &Path, shape: TerrainShape, n: usize) -> String {
    let dtm = synth_terrain(&TerrainSpec {
        ncols: n,
        nrows: n / 2,
        cellsize: 5.0,
        shape,
    })
    .unwrap();
    let p = dir.join("dtm.asc");
    save_ascii_grid(&p, &dtm).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn preprocess_flat_grid_gives_one_zone() {
    let tmp = tempfile::tempdir().unwrap();
    let dtm = grid(tmp.path(), TerrainShape::Flat { z0: 1.0 }, 10);
    let mesh = tmp.path().join("m.json");
    let o = izflood(&["preprocess", &dtm, "--out", mesh.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("zones: 1"));
    assert_eq!(ZoneMesh::load(&mesh).unwrap().zone_count(), 1);
}

#[test]
fn preprocess_two_basins_gives_two_zones_one_edge() {
    let tmp = tempfile::tempdir().unwrap();
    let dtm = grid(tmp.path(), TerrainShape::TwoBasin { saddle: 1.0, floor: 0.0 }, 20);
    let mesh = tmp.path().join("m.json");
    let o = izflood(&["preprocess", &dtm, "--out", mesh.to_str().unwrap(), "--headroom", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = ZoneMesh::load(&mesh).unwrap();
    assert_eq!((m.zone_count(), m.edges.len()), (2, 1));
    assert_eq!(m.edges[0].crest_elevation, 1.0);
}

#[test]
fn preprocess_missing_file_exits_2_with_path() {
    let o = izflood(&["preprocess", "/nonexistent/dir/dtm.asc"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/dir/dtm.asc"));
}

#[test]
fn bad_usage_and_bad_config_exit_2() {
    assert_eq!(code(&izflood(&["run"])), 2);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", &ISLAND.replace("layers = 6", "layers = 0"));
    let o = izflood(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());
    let cfg = write(tmp.path(), "t.toml", "[run\n");
    assert_eq!(code(&izflood(&["run", "--config", &cfg])), 2);
}

fn zones_csv(dir: &Path) -> Vec<u8> {
    fs::read(dir.join("zones.csv")).unwrap()
}

fn basin_depth(frame: &DtmRaster) -> f64 {
    frame.elevation[frame.index(12, 12)]
}

#[test]
fn in_process_run_floods_the_basin_and_renders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", ISLAND);
    let out = tmp.path().join("run");
    let o = izflood(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let frames: Vec<DtmRaster> = (0..13)
        .map(|i| read_ascii_grid(&out.join(format!("frames/depth_{i:05}.asc"))).unwrap())
        .collect();
    assert_eq!(basin_depth(&frames[0]), 0.0);
    assert!(basin_depth(&frames[12]) > 0.0);

    // The coast floods first; the inland basin only later.
    let analyses: Vec<_> = frames.iter().map(analyze_frame).collect();
    let first_border = analyses.iter().position(|a| a.border_wet_cells() > 0).unwrap();
    let first_inland = analyses.iter().position(|a| a.interior_wet_cells() > 0).unwrap();
    assert!(first_border < first_inland, "{first_border} {first_inland}");

    let o = izflood(&["render", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..13 {
        let p = out.join(format!("frames/depth_{i:05}.ppm"));
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6"), "{}", p.display());
    }
}

#[test]
fn repeat_runs_write_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", ISLAND);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = izflood(&["run", "--config", &cfg, "--out", d.to_str().unwrap(), "--until", "1200"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(zones_csv(&a), zones_csv(&b));
    assert_eq!(fs::read(a.join("mass_balance.csv")).unwrap(), fs::read(b.join("mass_balance.csv")).unwrap());
    assert_eq!(fs::read(a.join("solver_log.csv")).unwrap(), fs::read(b.join("solver_log.csv")).unwrap());
}

#[test]
fn below_threshold_run_is_dry() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ISLAND
        .replace("mode = \"in_process\"", "mode = \"off\"")
        .replace("[[0.0, 1.0], [1800.0, 1.8], [7200.0, 1.8]]", "[[0.0, 0.5], [7200.0, 1.29]]");
    let cfg = write(tmp.path(), "s.toml", &text);
    let out = tmp.path().join("run");
    let o = izflood(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for i in 0..13 {
        let d = read_ascii_grid(&out.join(format!("frames/depth_{i:05}.asc"))).unwrap();
        assert!(d.elevation.iter().all(|&v| v == 0.0));
    }
}

fn spawn_server(cfg: &str, out: &Path) -> (std::process::Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_izflood"))
        .args(["serve", "--config", cfg, "--listen", "127.0.0.1:0", "--out", out.to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    (child, addr)
}

#[test]
fn socket_run_matches_in_process_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", ISLAND);
    let local = tmp.path().join("local");
    let o = izflood(&["run", "--config", &cfg, "--out", local.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (server, addr) = spawn_server(&cfg, &tmp.path().join("server"));
    let remote = tmp.path().join("remote");
    let o = izflood(&["run", "--config", &cfg, "--out", remote.to_str().unwrap(), "--connect", &addr]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = server.wait_with_output().unwrap();
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stderr));

    assert_eq!(zones_csv(&local), zones_csv(&remote));
    for i in [0, 6, 12] {
        for p in ["depth", "hfiltr", "htotal"] {
            let f = format!("frames/{p}_{i:05}.asc");
            assert_eq!(fs::read(local.join(&f)).unwrap(), fs::read(remote.join(&f)).unwrap(), "{f}");
        }
    }
    assert_eq!(
        fs::read(local.join("solver_log.csv")).unwrap(),
        fs::read(tmp.path().join("server/serve_solver_log.csv")).unwrap()
    );
}

#[test]
fn server_rejects_a_mismatched_mesh() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", ISLAND);
    let other = write(tmp.path(), "o.toml", &ISLAND.replace("rim_distance = 7.0", "rim_distance = 6.0"));
    let (server, addr) = spawn_server(&other, &tmp.path().join("server"));
    let out = tmp.path().join("run");
    let o = izflood(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--connect", &addr]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("GEOMETRY_MISMATCH"), "{}", stderr(&o));
    let s = server.wait_with_output().unwrap();
    assert_eq!(s.status.code(), Some(4));
}

#[test]
fn unreachable_peer_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", ISLAND);
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = izflood(&["run", "--config", &cfg, "--connect", &format!("127.0.0.1:{port}")]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

/// Accepts one connection, echoes the HELLO frame and hangs up.
fn dying_peer() -> (thread::JoinHandle<()>, String) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let h = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        let mut len = [0u8; 4];
        s.read_exact(&mut len).unwrap();
        let mut body = vec![0u8; u32::from_le_bytes(len) as usize];
        s.read_exact(&mut body).unwrap();
        s.write_all(&len).unwrap();
        s.write_all(&body).unwrap();
    });
    (h, addr)
}

#[test]
fn peer_death_mid_run_keeps_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "s.toml", ISLAND);
    let (peer, addr) = dying_peer();
    let out: PathBuf = tmp.path().join("run");
    let o = izflood(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--connect", &addr]);
    peer.join().unwrap();
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(out.join("frames/depth_00000.asc").is_file());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["result"]["status"], "failed");
    assert_eq!(manifest["result"]["exit_code"], 4);
}

#[test]
fn render_without_frames_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = izflood(&["render", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
