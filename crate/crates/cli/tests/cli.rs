use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_decspray"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn decspray")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn csv_rows(stdout: &[u8]) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .from_reader(stdout);
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// k files of `len` bytes with distinct pseudo-random content.
fn write_data(dir: &Path, k: usize, len: usize) -> Vec<Vec<u8>> {
    fs::create_dir_all(dir).unwrap();
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    (0..k)
        .map(|i| {
            let bytes: Vec<u8> = (0..len)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 24) as u8
                })
                .collect();
            fs::write(dir.join(format!("file_{i}.bin")), &bytes).unwrap();
            bytes
        })
        .collect()
}

struct Encoded {
    _tmp: TempDir,
    root: PathBuf,
    packets: PathBuf,
    data: Vec<Vec<u8>>,
}

fn encoded(k: usize, n: usize, c: &str, field: &str, len: usize) -> Encoded {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().to_path_buf();
    let data = write_data(&root.join("data"), k, len);
    let packets = root.join("packets");
    let o = run(&[
        "encode",
        "--data",
        root.join("data").to_str().unwrap(),
        "--out",
        packets.to_str().unwrap(),
        "--n",
        &n.to_string(),
        "--c",
        c,
        "--field",
        field,
        "--seed",
        "11",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    Encoded {
        _tmp: tmp,
        root,
        packets,
        data,
    }
}

fn packet_path(e: &Encoded, j: usize) -> String {
    e.packets
        .join(format!("packet_{j:05}.dec"))
        .to_str()
        .unwrap()
        .to_string()
}

fn decode(e: &Encoded, ids: &[usize], extra: &[&str]) -> (Output, PathBuf) {
    let out = e.root.join(format!(
        "out_{}",
        ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_")
    ));
    let mut args = vec![
        "decode".to_string(),
        "--out".into(),
        out.to_str().unwrap().into(),
        "--packets".into(),
    ];
    args.extend(ids.iter().map(|&j| packet_path(e, j)));
    args.extend(extra.iter().map(|s| s.to_string()));
    (bin().args(&args).output().unwrap(), out)
}

#[test]
fn simulate_is_reproducible() {
    let args = [
        "simulate", "--k", "12", "--n", "24", "--c", "4", "--trials", "40", "--seed", "5",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let rows = csv_rows(&a.stdout);
    assert_eq!(rows[0][0], "k");
    assert_eq!(rows[0].len(), 12);
    assert_eq!(rows[1][..2], ["12", "24"]);
}

#[test]
fn simulate_output_records_resolved_config() {
    let o = run(&["simulate", "--k", "6", "--n", "12", "--trials", "3"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let config_line = text.lines().find(|l| l.starts_with("# config ")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&config_line["# config ".len()..]).unwrap();
    assert_eq!(v["seed"], 0);
    assert_eq!(v["c"], 10.0);
    assert_eq!(v["field"], "gf256");
    assert!(text.lines().next().unwrap().starts_with("# decspray "));
}

#[test]
fn simulate_rejects_non_expanding_code() {
    let o = run(&["simulate", "--k", "100", "--n", "50", "--c", "10", "--trials", "10"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("k must be < n"), "{}", stderr(&o));
}

#[test]
fn simulate_rejects_unknown_field() {
    let o = run(&["simulate", "--k", "5", "--n", "10", "--field", "gf7"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(code(&run(&["simulate", "--bogus", "1"])), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"k": 8, "n": 16, "c": 3.0, "trials": 9, "seed": 4}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "simulate", "--trials", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&o.stdout);
    assert_eq!(rows[1][..5], ["8", "16", "3", "256", "5"]);
    assert_eq!(rows[1][11], "4");

    let same = run(&[
        "simulate", "--k", "8", "--n", "16", "--c", "3", "--trials", "5", "--seed", "4",
    ]);
    assert_eq!(o.stdout, same.stdout);
}

#[test]
fn config_file_rejects_unknown_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"k": 8, "n": 16, "trails": 9}"#).unwrap();
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "simulate"])), 2);
}

#[test]
fn thread_count_does_not_change_output() {
    let args = [
        "simulate", "--k", "10", "--n", "20", "--c", "3", "--trials", "60", "--seed", "9",
    ];
    let one = bin().args(args).env("DECSPRAY_THREADS", "1").output().unwrap();
    let four = bin().args(args).env("DECSPRAY_THREADS", "4").output().unwrap();
    let auto = bin().args(args).env("DECSPRAY_THREADS", "0").output().unwrap();
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, auto.stdout);
    let bad = bin().args(args).env("DECSPRAY_THREADS", "many").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn raw_dump_has_one_row_per_trial() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw.csv");
    let o = run(&[
        "simulate",
        "--k",
        "6",
        "--n",
        "12",
        "--trials",
        "15",
        "--raw",
        raw.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&fs::read(raw).unwrap());
    assert_eq!(rows.len(), 16);
}

#[test]
fn round_trip_gf256() {
    let e = encoded(4, 12, "6", "gf256", 1024);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(e.packets.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["k"], 4);
    assert_eq!(manifest["files"][0], "file_0.bin");
    assert_eq!(fs::read_dir(&e.packets).unwrap().count(), 13);

    // Exit 0 exactly when the selected coefficient matrix has full rank.
    let field = decspray::Field::new(decspray::FieldSpec::GF256);
    let mut recovered = 0;
    for start in 0..12 {
        let ids = [start, (start + 1) % 12, (start + 3) % 12, (start + 7) % 12];
        let columns = ids
            .iter()
            .map(|&j| {
                decspray::packet::from_bytes(&fs::read(packet_path(&e, j)).unwrap())
                    .unwrap()
                    .coeffs
            })
            .collect();
        let sub = decspray::decode::Submatrix::from_columns(decspray::FieldSpec::GF256, columns);
        let rank = decspray::decode::rank(&field, &sub);
        let (o, out) = decode(&e, &ids, &[]);
        if rank == 4 {
            assert_eq!(code(&o), 0, "{ids:?}: {}", stderr(&o));
            recovered += 1;
            for (i, original) in e.data.iter().enumerate() {
                assert_eq!(&fs::read(out.join(format!("file_{i}.bin"))).unwrap(), original);
            }
        } else {
            assert_eq!(code(&o), 4, "{ids:?}");
            assert!(stderr(&o).contains(&format!("rank {rank} < k = 4")), "{}", stderr(&o));
        }
    }
    assert!(recovered > 0);
}

#[test]
fn round_trip_other_fields_and_solvers() {
    for field in ["gf16", "gf65536"] {
        let e = encoded(5, 10, "8", field, 64);
        for solver in ["gauss", "wiedemann"] {
            let (o, out) = decode(&e, &[9, 0, 4, 6, 2], &["--solver", solver]);
            assert_eq!(code(&o), 0, "{field} {solver}: {}", stderr(&o));
            for (i, original) in e.data.iter().enumerate() {
                assert_eq!(&fs::read(out.join(format!("file_{i}.bin"))).unwrap(), original);
            }
        }
    }
}

#[test]
fn encode_rejects_odd_length_for_gf65536() {
    let tmp = TempDir::new().unwrap();
    write_data(&tmp.path().join("d"), 3, 33);
    let o = run(&[
        "encode",
        "--data",
        tmp.path().join("d").to_str().unwrap(),
        "--out",
        tmp.path().join("p").to_str().unwrap(),
        "--n",
        "6",
        "--field",
        "gf65536",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn encode_rejects_unequal_lengths() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path().join("d");
    write_data(&d, 2, 16);
    fs::write(d.join("zz.bin"), [1u8; 15]).unwrap();
    let o = run(&[
        "encode",
        "--data",
        d.to_str().unwrap(),
        "--out",
        tmp.path().join("p").to_str().unwrap(),
        "--n",
        "6",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn too_few_packets() {
    let e = encoded(4, 12, "6", "gf256", 64);
    let (o, _) = decode(&e, &[0, 1, 2], &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("need exactly k packets"), "{}", stderr(&o));
}

/// Finds a k-subset that decodes, plus one more covered packet.
fn decodable_with_spare(e: &Encoded, k: usize, n: usize) -> (Vec<usize>, usize) {
    for start in 0..n {
        let ids: Vec<usize> = (0..k).map(|i| (start + i) % n).collect();
        let (o, _) = decode(e, &ids, &[]);
        if code(&o) == 0 {
            for spare in 0..n {
                let p = decspray::packet::from_bytes(&fs::read(packet_path(e, spare)).unwrap()).unwrap();
                if !ids.contains(&spare) && !p.coeffs.is_empty() {
                    return (ids, spare);
                }
            }
        }
    }
    panic!("no decodable subset");
}

#[test]
fn tampered_check_packet_is_inconsistent() {
    let e = encoded(4, 12, "6", "gf256", 256);
    let (ids, spare) = decodable_with_spare(&e, 4, 12);
    let spare_path = packet_path(&e, spare);
    let (ok, _) = decode(&e, &ids, &["--check", &spare_path]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));

    let mut bytes = fs::read(&spare_path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x5a;
    fs::write(&spare_path, bytes).unwrap();
    let (o, _) = decode(&e, &ids, &["--check", &spare_path]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("inconsistent system"), "{}", stderr(&o));
}

#[test]
fn tampered_decode_packet_caught_by_check() {
    let e = encoded(4, 12, "6", "gf256", 256);
    let (ids, spare) = decodable_with_spare(&e, 4, 12);
    let victim = packet_path(&e, ids[0]);
    let mut bytes = fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    fs::write(&victim, bytes).unwrap();
    let (o, _) = decode(&e, &ids, &["--check", &packet_path(&e, spare)]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn singular_selection_reports_rank() {
    // With d = 1 each data node reaches one storage node, so most nodes hold
    // nothing and any selection containing an empty packet is singular.
    let e = encoded(3, 12, "0.01", "gf256", 32);
    let mut empty = Vec::new();
    for j in 0..12 {
        let p = decspray::packet::from_bytes(&fs::read(packet_path(&e, j)).unwrap()).unwrap();
        if p.coeffs.is_empty() {
            empty.push(j);
        }
    }
    assert!(empty.len() >= 3, "expected empty storage nodes");
    let (o, _) = decode(&e, &empty[..3], &[]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("rank 0 < k = 3"), "{}", stderr(&o));

    let (w, _) = decode(&e, &empty[..3], &["--solver", "wiedemann"]);
    assert_eq!(code(&w), 4, "{}", stderr(&w));
}

#[test]
fn mismatched_headers() {
    let a = encoded(4, 12, "6", "gf256", 64);
    let b = encoded(3, 12, "6", "gf256", 64);
    let o = bin()
        .args(["decode", "--out", a.root.join("o").to_str().unwrap(), "--packets"])
        .args([
            packet_path(&a, 0),
            packet_path(&a, 1),
            packet_path(&a, 2),
            packet_path(&b, 3),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("header mismatch"));
}

#[test]
fn corrupt_magic_is_header_error() {
    let e = encoded(4, 12, "6", "gf256", 64);
    let p = packet_path(&e, 0);
    let mut bytes = fs::read(&p).unwrap();
    bytes[0] = b'X';
    fs::write(&p, bytes).unwrap();
    let (o, _) = decode(&e, &[0, 1, 2, 3], &[]);
    assert_eq!(code(&o), 3);
}

#[test]
fn experiment_subcommands_emit_csv() {
    let cases: [(&[&str], usize); 5] = [
        (&["minc", "--alpha", "2"], 3),
        (&["coverage", "--bins", "50", "--trials", "20"], 11),
        (&["maxload", "--balls", "1000", "--bins", "100", "--trials", "4"], 8),
        (
            &[
                "converse",
                "--k",
                "20",
                "--n",
                "40",
                "--trials",
                "10",
                "--contrast-c",
                "5",
            ],
            10,
        ),
        (&["perimetric", "--nodes", "100", "--ratio", "0.2", "--trials", "2"], 13),
    ];
    for (args, cols) in cases {
        let o = run(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        let rows = csv_rows(&o.stdout);
        assert!(rows.len() >= 2);
        assert!(rows.iter().all(|r| r.len() == cols), "{args:?}");
    }
    let rows = csv_rows(&run(&["minc", "--alpha", "2"]).stdout);
    assert_eq!(rows[1][1], "8.690149");
}

#[test]
fn experiment_subcommands_validate() {
    assert_eq!(code(&run(&["minc", "--alpha", "1"])), 2);
    assert_eq!(code(&run(&["perimetric", "--nodes", "401"])), 2);
    assert_eq!(code(&run(&["perimetric", "--side", "2"])), 2);
    assert_eq!(code(&run(&["maxload", "--bins", "10"])), 2);
    assert_eq!(code(&run(&["coverage", "--bins", "10", "--beta", "1"])), 2);
}
