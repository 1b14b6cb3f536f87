use scoutpf_wasm_demo::{invert_json, range_angle_json, run_json};

#[test]
fn inversion_residual_is_small() {
    let v: serde_json::Value = serde_json::from_str(&invert_json("range_angle", 4).unwrap()).unwrap();
    assert!(v["residual"].as_f64().unwrap() < 1e-12);
    assert!(v["text"].as_str().unwrap().contains("## inverse"));
}

#[test]
fn run_returns_one_record_per_step() {
    let v: serde_json::Value = serde_json::from_str(&run_json("projectile", "spf2", 1, 0).unwrap()).unwrap();
    assert_eq!(v["steps"].as_array().unwrap().len(), 12);
    assert_eq!(v["status"]["status"], "completed");
}

#[test]
fn range_angle_update_weights_sum_to_one() {
    let v: serde_json::Value = serde_json::from_str(&range_angle_json("spf2", 0.2, 0.0, 3).unwrap()).unwrap();
    let total: f64 = v["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(v["particles"].as_array().unwrap().len(), 1000);
}

#[test]
fn errors_are_reported() {
    assert!(run_json("nowhere", "spf2", 1, 0).unwrap_err().contains("range_angle"));
    assert!(range_angle_json("kalman", 0.2, 0.0, 1).is_err());
}
