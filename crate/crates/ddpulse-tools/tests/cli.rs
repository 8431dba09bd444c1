use std::path::Path;
use std::process::{Command, Output};

use ddpulse::channel::generate_channel;
use ddpulse::effective::HeffBuilder;
use ddpulse::fast::{predict_cm, CmParams, Implementation};
use ddpulse::modem::DirectModem;
use ddpulse::Technique;
use ddpulse_tools::export::{read_channel, read_heff};
use ddpulse_tools::output::read_csv;
use ddpulse_tools::parse_config;
use tempfile::TempDir;

fn ddpulse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddpulse")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn rows(body: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn empty_config_runs_complexity_with_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "empty.json", "");
    let out = dir.path().join("o");
    let o = ddpulse(&["--config", &cfg, "--run", "complexity", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (meta, body) = read_csv(&out.join("complexity.csv")).unwrap();
    assert!(meta.get("version").unwrap().starts_with("ddpulse-tools"));
    assert_eq!(meta.get("seed"), Some("1"));
    let echoed = parse_config(meta.get("config").unwrap()).unwrap();
    assert_eq!((echoed.modem.m, echoed.modem.n, echoed.modem.l_us), (128, 32, 4));

    let rows = rows(&body);
    assert_eq!(rows.len(), 64 * 6);
    let cm = |q: usize, imp: &str| -> f64 {
        rows.iter().find(|r| r[0] == "lps" && r[1] == imp && r[5] == q.to_string()).unwrap()[6].parse().unwrap()
    };
    for r in &rows {
        let t = match r[0].as_str() {
            "cps" => Technique::Cps,
            "lps" => Technique::Lps,
            _ => Technique::Oddm,
        };
        let imp = match r[1].as_str() {
            "direct" => Implementation::Direct,
            "fast" => Implementation::Fast,
            _ => Implementation::ReferenceOddm,
        };
        let p = CmParams { m: 128, n: 32, l_us: 4, q: r[5].parse().unwrap(), alpha: 0.1 };
        assert_eq!(r[6].parse::<f64>().unwrap(), predict_cm(t, imp, &p).unwrap().as_f64());
    }
    let crossover = (1..=64).find(|&q| cm(q, "direct") > cm(q, "fast")).unwrap();
    assert_eq!(meta.get("lps_crossover_q"), Some(crossover.to_string().as_str()));
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let fast12 = write(dir.path(), "a.json", r#"{"modem": {"m": 12, "q": 4, "implementation": "fast"}}"#);
    let broken = write(dir.path(), "b.json", "{\n  \"seed\": -3\n}");
    let axis = write(dir.path(), "c.json", r#"{"run": "psd", "sweep": {"q": [4]}}"#);
    for args in [
        vec!["--config", fast12.as_str(), "--out", out],
        vec!["--config", broken.as_str(), "--out", out],
        vec!["--config", axis.as_str(), "--out", out],
        vec!["--config", "/nonexistent/cfg.json", "--out", out],
        vec!["--threads", "0", "--run", "complexity", "--out", out],
        vec!["--run", "nonsense"],
    ] {
        let o = ddpulse(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = ddpulse(&["--config", &broken, "--out", out]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("seed"), "{err}");
}

#[test]
fn verify_passes_at_reduced_size() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v");
    let o = ddpulse(&["--run", "verify", "--out", out.to_str().unwrap(), "--threads", "1"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let (_, body) = read_csv(&out.join("verify.csv")).unwrap();
    let rows = rows(&body);
    assert!(rows.len() > 20);
    assert!(rows.iter().all(|r| r[1] == "true"));
    for family in ["fast_vs_direct/", "matrix_vs_chain/", "cost/"] {
        assert!(rows.iter().any(|r| r[0].starts_with(family)), "{family}");
    }
}

#[test]
fn psd_writes_five_series_deterministically() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "psd.json", r#"{"modem": {"m": 64, "n": 8}, "psd": {"frames": 3, "seg_len": 512, "overlap": 256}}"#);
    let run = |name: &str, seed: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = ddpulse(&["--config", &cfg, "--run", "psd", "--seed", seed, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (read_csv(&out.join("psd.csv")).unwrap(), read_csv(&out.join("oob.csv")).unwrap())
    };
    let ((meta, a), (_, oob)) = run("a", "5", "1");
    let ((_, b), _) = run("b", "5", "2");
    let ((_, c), _) = run("c", "6", "1");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(meta.get("taper"), Some("hann"));
    let rows = rows(&a);
    let mut series: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    series.dedup();
    assert_eq!(series, ["cps", "cps_window", "cps_zg", "lps", "oddm"]);
    assert_eq!(rows.len(), 5 * 512);
    assert_eq!(self::rows(&oob).len(), 5);
}

#[test]
fn ber_and_papr_runs_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let ber = write(
        dir.path(),
        "ber.json",
        r#"{"run": "ber", "modem": {"m": 16, "n": 4, "q": 4, "technique": "lps"},
            "sweep": {"ebn0_db": [-2, 12], "velocity_kmh": [100, 500]}, "trials": 3,
            "ber": {"qam_order": 4}}"#,
    );
    let papr = write(dir.path(), "papr.json", r#"{"run": "papr", "modem": {"m": 16, "n": 4, "q": 4}, "papr": {"frames": 100}, "sweep": {"alpha": [0.1, 0.5]}}"#);
    for (cfg, file, expect) in [(&ber, "ber.csv", 4), (&papr, "papr.csv", 2 * 41)] {
        let mut bodies = Vec::new();
        for (i, threads) in ["1", "3"].iter().enumerate() {
            let out = dir.path().join(format!("{file}{i}"));
            let o = ddpulse(&["--config", cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            bodies.push(read_csv(&out.join(file)).unwrap().1);
        }
        assert_eq!(bodies[0], bodies[1], "{file}");
        assert_eq!(rows(&bodies[0]).len(), expect, "{file}");
    }
}

#[test]
fn exports_round_trip() {
    let dir = TempDir::new().unwrap();
    let text = r#"{"run": "complexity", "seed": 42, "modem": {"m": 8, "n": 4, "q": 2, "technique": "oddm"},
                   "export": {"pulse": true, "channel": true, "heff": true}}"#;
    let cfg_path = write(dir.path(), "x.json", text);
    let out = dir.path().join("x");
    let o = ddpulse(&["--config", &cfg_path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = parse_config(text).unwrap();
    let m = cfg.modem_config();
    let spec = ddpulse::channel::ChannelSpec { bandwidth_hz: 1.0 / m.delta_tau, ..cfg.channel_spec() };
    let ch = generate_channel(&spec, m.l_us, 42).unwrap();
    assert_eq!(read_channel(&out.join("channel.json")).unwrap(), ch);

    let modem = DirectModem::new(&m).unwrap();
    let want = HeffBuilder::new(modem.clone()).unwrap().build(&ch).unwrap().h_eff;
    let bytes = std::fs::read(out.join("heff.bin")).unwrap();
    assert_eq!(&bytes[..8], b"DDPHEFF1");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, want.nrows());
    assert_eq!(bytes.len(), 16 + 16 * want.nrows() * want.ncols());
    // Row-major: the second entry is (0, 1).
    assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), want[(0, 1)].re);
    assert_eq!(read_heff(&out.join("heff.bin")).unwrap(), want);

    let (_, body) = read_csv(&out.join("pulse.csv")).unwrap();
    let taps = rows(&body);
    assert_eq!(taps.len(), modem.pulse().taps.len());
    assert_eq!(taps[0][0], modem.pulse().origin.to_string());
}
