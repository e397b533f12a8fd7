//! Run-level behavior of the command layer: artifact envelopes, hand-checked
//! numbers, sweep grids, strict-mode refusals, and the binary's structured
//! error reporting.

use metasim_cli::{parse_scenario, run, CliError, Command, RunOptions};
use metasim_core::channel::{generate_user_channels, ChannelModel, GeometryContext};
use metasim_core::framework::ArchitectureSpec;
use serde_json::Value;
use std::path::Path;

fn options(out: &Path, seed: u64) -> RunOptions {
    RunOptions {
        seed: Some(seed),
        out: Some(out.to_path_buf()),
        threads: None,
        strict: false,
    }
}

fn read_artifact(dir: &Path, name: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name}: {e}"));
    assert!(text.ends_with('\n'), "{name} must end in a newline");
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {name}: {e}"))
}

fn check_envelope(v: &Value, command: &str, seed: u64) {
    assert_eq!(v["version"], metasim_core::VERSION, "envelope version");
    assert_eq!(v["command"], command, "envelope command");
    assert_eq!(v["seed"], seed, "envelope seed");
    let hash = v["config_hash"].as_str().expect("hash is a string");
    assert_eq!(hash.len(), 64, "config hash is hex sha-256");
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()), "hash is hex");
}

const SIMULATE_CONFIG: &str = r#"{
  "$schema_version": 1,
  "architecture": { "kind": "ris", "elements": 12, "carrier_frequency": 28e9 },
  "channel": {
    "model": { "type": "los" },
    "users": [[1.0, 0.4, 6.0]],
    "noise_power": 1e-9
  }
}"#;

#[test]
fn simulate_reports_the_hand_computed_rate() {
    let cfg = parse_scenario(SIMULATE_CONFIG).expect("valid config");
    let dir = tempfile::tempdir().expect("temp dir");
    let outcome = run(Command::Simulate, &cfg, &options(dir.path(), 5)).expect("simulate");
    assert_eq!(outcome.artifacts.len(), 2, "json plus beam-pattern csv");

    let doc = read_artifact(dir.path(), "simulate.json");
    check_envelope(&doc, "simulate", 5);

    // The unoptimized single-feed surface with a unit carrier and unit
    // power radiates the plain row sum: rate = log2(1 + |sum h_n|^2 / s2).
    let spec = ArchitectureSpec::ris(12, 0.5, 28e9);
    let geom = GeometryContext::from_spec(&spec).expect("geometry");
    let channels =
        generate_user_channels(&geom, &[[1.0, 0.4, 6.0]], ChannelModel::Los, 1e-9, 5)
            .expect("channels");
    let row_sum: num_complex::Complex64 = (0..12).map(|n| channels.h[(0, n)]).sum();
    let by_hand = (1.0 + row_sum.norm_sqr() / 1e-9).log2();
    let reported = doc["data"]["sum_rate"].as_f64().expect("sum rate");
    assert!(
        (reported - by_hand).abs() <= 1e-9 * by_hand.max(1.0),
        "reported rate {reported} strays from hand computation {by_hand}"
    );

    let cut = doc["data"]["beampattern"].as_array().expect("cut");
    assert_eq!(cut.len(), 181, "one-degree cut from -90 to 90");
}

#[test]
fn optimize_improves_on_the_unoptimized_state() {
    let text = r#"{
      "$schema_version": 1,
      "architecture": { "kind": "ris", "elements": 16, "carrier_frequency": 28e9 },
      "channel": {
        "model": { "type": "rician", "k_factor": 5.0 },
        "users": [[1.2, -0.4, 7.0]],
        "noise_power": 1e-9
      },
      "optimizer": {
        "objective": { "type": "sum_rate" },
        "max_iters": 80,
        "num_starts": 2,
        "tolerance": 1e-7
      }
    }"#;
    let cfg = parse_scenario(text).expect("valid config");
    let dir = tempfile::tempdir().expect("temp dir");
    run(Command::Simulate, &cfg, &options(dir.path(), 2)).expect("simulate");
    let baseline = read_artifact(dir.path(), "simulate.json")["data"]["sum_rate"]
        .as_f64()
        .expect("baseline rate");
    run(Command::Optimize, &cfg, &options(dir.path(), 2)).expect("optimize");
    let doc = read_artifact(dir.path(), "optimize.json");
    check_envelope(&doc, "optimize", 2);
    let tuned = doc["data"]["sum_rate"].as_f64().expect("tuned rate");
    assert!(
        tuned >= baseline,
        "optimization went backwards: {tuned} < {baseline}"
    );
    let trace = doc["data"]["objective_trace"].as_array().expect("trace");
    assert!(trace.len() >= 2, "trace records the ascent");
    let accepted: Vec<f64> = trace.iter().map(|v| v.as_f64().expect("float")).collect();
    assert!(
        accepted.windows(2).all(|w| w[1] >= w[0] - 1e-12),
        "backtracking ascent must never accept a worse value"
    );
    for name in ["trace.csv", "beampattern.csv"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn sweep_grid_is_complete_and_ordered() {
    let text = r#"{
      "$schema_version": 1,
      "architecture": {
        "kind": "sim",
        "layers": 2, "elements_per_layer": 4,
        "rf_chains": 2, "streams": 2,
        "spacing_wl": 0.5, "layer_gap_wl": 2.0,
        "carrier_frequency": 28e9
      },
      "channel": {
        "model": { "type": "rician", "k_factor": 5.0 },
        "users": [[1.5, 0.5, 8.0], [-2.0, 1.0, 7.0]],
        "noise_power": 1e-10
      },
      "optimizer": {
        "objective": { "type": "sum_rate" },
        "max_iters": 10, "num_starts": 1, "tolerance": 1e-6
      },
      "sweep": { "layers": [2, 3], "elements_per_layer": [4, 9] },
      "seeds": [1, 2]
    }"#;
    let cfg = parse_scenario(text).expect("valid config");
    let dir = tempfile::tempdir().expect("temp dir");
    let opts = RunOptions {
        seed: None,
        out: Some(dir.path().to_path_buf()),
        threads: None,
        strict: false,
    };
    run(Command::Sweep, &cfg, &opts).expect("sweep");
    let doc = read_artifact(dir.path(), "sweep.json");
    let rows = doc["data"].as_array().expect("rows");
    assert_eq!(rows.len(), 8, "2 layer counts x 2 sizes x 2 seeds");
    let keys: Vec<(u64, u64, u64)> = rows
        .iter()
        .map(|r| {
            (
                r["layers"].as_u64().expect("layers"),
                r["elements_per_layer"].as_u64().expect("elements"),
                r["seed"].as_u64().expect("seed"),
            )
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted, "rows ordered by (layers, elements, seed)");
    assert_eq!(
        keys.iter().collect::<std::collections::HashSet<_>>().len(),
        8,
        "every grid point appears exactly once"
    );
    for r in rows {
        let rate = r["sum_rate"].as_f64().expect("rate");
        assert!(rate.is_finite() && rate > 0.0, "degenerate rate {rate}");
    }
    let csv = std::fs::read_to_string(dir.path().join("se_vs_elements.csv")).expect("csv");
    assert_eq!(csv.lines().count(), 9, "header plus one line per grid point");
    assert_eq!(
        csv.lines().next().expect("header"),
        "elements_per_layer,layers,label,seed,sum_rate"
    );
}

#[test]
fn strict_mode_refuses_implicit_fallbacks() {
    let cfg = parse_scenario(SIMULATE_CONFIG).expect("valid config");
    let dir = tempfile::tempdir().expect("temp dir");

    // No seed anywhere: refused before any work happens.
    let missing_seed = RunOptions {
        seed: None,
        out: Some(dir.path().to_path_buf()),
        threads: None,
        strict: true,
    };
    match run(Command::Simulate, &cfg, &missing_seed) {
        Err(e @ CliError::Validation { .. }) => {
            assert_eq!(e.code(), "validation_error");
            assert!(e.to_string().contains("seed"), "names the missing seed: {e}");
        }
        other => panic!("expected a seed refusal, got {other:?}"),
    }

    // Seed given, but the section the command consumes is absent.
    let missing_section = RunOptions {
        seed: Some(1),
        out: Some(dir.path().to_path_buf()),
        threads: None,
        strict: true,
    };
    match run(Command::Optimize, &cfg, &missing_section) {
        Err(e @ CliError::Validation { .. }) => {
            assert!(
                e.to_string().contains("optimizer"),
                "names the missing section: {e}"
            );
        }
        other => panic!("expected an optimizer-section refusal, got {other:?}"),
    }

    // The same run without strict mode falls back and succeeds.
    run(Command::Simulate, &cfg, &options(dir.path(), 1)).expect("non-strict simulate");
}

#[test]
fn estimate_writes_a_row_per_slot_budget() {
    let text = r#"{
      "$schema_version": 1,
      "architecture": { "kind": "ris", "elements": 16, "carrier_frequency": 28e9 },
      "channel": {
        "model": { "type": "rician", "k_factor": 5.0 },
        "users": [[1.0, 0.3, 6.0]],
        "noise_power": 1e-9
      },
      "estimation": { "slots_list": [18, 20], "noise_power": 1e-6 }
    }"#;
    let cfg = parse_scenario(text).expect("valid config");
    let dir = tempfile::tempdir().expect("temp dir");
    run(Command::Estimate, &cfg, &options(dir.path(), 4)).expect("estimate");
    let doc = read_artifact(dir.path(), "estimate.json");
    check_envelope(&doc, "estimate", 4);
    let rows = doc["data"].as_array().expect("rows");
    assert_eq!(rows.len(), 2, "one row per requested slot budget");
    for (row, expected_slots) in rows.iter().zip([18u64, 20]) {
        assert_eq!(row["slots"].as_u64().expect("slots"), expected_slots);
        let nmse = row["nmse"].as_f64().expect("nmse");
        assert!(nmse.is_finite() && nmse >= 0.0, "degenerate error {nmse}");
        let cond = row["condition_number"].as_f64().expect("condition");
        assert!(cond >= 1.0, "condition number below one: {cond}");
    }
    let csv = std::fs::read_to_string(dir.path().join("nmse_vs_T.csv")).expect("csv");
    assert_eq!(csv.lines().count(), 3, "header plus one line per budget");
    assert_eq!(csv.lines().next().expect("header"), "slots,nmse,seed");
}

#[test]
fn waveform_design_covers_every_element() {
    let text = r#"{
      "$schema_version": 1,
      "architecture": { "kind": "ris", "elements": 16, "carrier_frequency": 28e9 },
      "channel": {
        "model": { "type": "los" },
        "users": [[1.0, 0.3, 6.0]],
        "noise_power": 1e-9
      },
      "waveform": { "slots": 8, "sense_azimuth_deg": 20.0, "sense_elevation_deg": 70.0 }
    }"#;
    let cfg = parse_scenario(text).expect("valid config");
    let dir = tempfile::tempdir().expect("temp dir");
    run(Command::Waveform, &cfg, &options(dir.path(), 6)).expect("waveform");
    let doc = read_artifact(dir.path(), "waveform.json");
    check_envelope(&doc, "waveform", 6);
    assert_eq!(doc["data"]["slots"], 8);
    for bin in ["c0", "c1"] {
        let coeffs = doc["data"][bin].as_array().expect("coefficients");
        assert_eq!(coeffs.len(), 16, "{bin} covers every element");
    }
    assert!(doc["data"]["comm_alignment"].as_f64().expect("alignment") > 0.0);
    assert!(doc["data"]["sense_gain"].as_f64().expect("gain") > 0.0);
    let csv =
        std::fs::read_to_string(dir.path().join("waveform_beampattern.csv")).expect("csv");
    assert!(csv.lines().any(|l| l.ends_with(",k=0")), "carrier cut labeled");
    assert!(csv.lines().any(|l| l.ends_with(",k=1")), "harmonic cut labeled");
}

#[test]
fn binary_reports_structured_errors() {
    use std::process::Command as Proc;
    let bin = env!("CARGO_BIN_EXE_metasim");
    let dir = tempfile::tempdir().expect("temp dir");

    let invoke = |config_text: &str| -> (bool, Value) {
        let path = dir.path().join("bad.json");
        std::fs::write(&path, config_text).expect("write config");
        let out = Proc::new(bin)
            .arg("--config")
            .arg(&path)
            .arg("--seed")
            .arg("1")
            .arg("--out")
            .arg(dir.path().join("out"))
            .arg("simulate")
            .env_remove("METASIM_CONFIG")
            .env_remove("METASIM_SEED")
            .env_remove("METASIM_OUT")
            .env_remove("METASIM_THREADS")
            .env_remove("METASIM_STRICT")
            .output()
            .expect("spawn binary");
        let stderr = String::from_utf8_lossy(&out.stderr);
        let doc: Value = serde_json::from_str(stderr.trim())
            .unwrap_or_else(|e| panic!("stderr is not an error document ({e}): {stderr}"));
        (out.status.success(), doc)
    };

    let (ok, doc) = invoke("{ \"$schema_version\": 1, ");
    assert!(!ok, "malformed config must fail the process");
    assert_eq!(doc["error"]["code"], "parse_error");

    let (ok, doc) = invoke(
        r#"{
          "$schema_version": 1,
          "architecture": { "kind": "ris", "elements": 12 },
          "channel": { "model": { "type": "los" }, "users": [[1.0, 0.4, 6.0]], "noise_power": 1e-9 }
        }"#,
    );
    assert!(!ok, "incomplete config must fail the process");
    assert_eq!(doc["error"]["code"], "validation_error");
    let message = doc["error"]["message"].as_str().expect("message");
    assert!(
        message.contains("carrier_frequency"),
        "error names the missing field: {message}"
    );
}
