use ridgenet_web::{condition_curve, estimate, network, parse_csv};
use serde_json::Value;

/// 40 samples of 6 features; feature k+1 leans on feature k.
fn sample_csv() -> String {
    let mut s = String::from(",a,b,c,d,e,f\n");
    let mut state = 12345u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for r in 0..40 {
        let mut row = Vec::new();
        let mut prev = 0.0;
        for _ in 0..6 {
            let v = next() + 0.7 * prev;
            row.push(format!("{v:.6}"));
            prev = v;
        }
        s.push_str(&format!("s{r},{}\n", row.join(",")));
    }
    s
}

#[test]
fn parses_ids_and_rejects_bad_cells() {
    let x = parse_csv(&sample_csv()).unwrap();
    assert_eq!((x.nrows(), x.ncols()), (40, 6));
    assert_eq!(x.feature_names()[0], "a");
    let err = parse_csv("a,b\n1,x\n").unwrap_err();
    assert!(err.contains("line 2, column 2"), "{err}");
    assert!(parse_csv("a,b\n").is_err());
}

#[test]
fn curve_is_monotone_towards_target() {
    let v: Value = serde_json::from_str(&condition_curve(&sample_csv(), 1e-4, 1e4, 40).unwrap()).unwrap();
    let kappas: Vec<f64> = v["kappas"].as_array().unwrap().iter().map(|k| k.as_f64().unwrap()).collect();
    assert_eq!(kappas.len(), 40);
    assert!(kappas.iter().all(|&k| k >= 1.0));
    assert!(kappas[0] > kappas[39]);
    assert!((kappas[39] - 1.0).abs() < 1e-2);
}

#[test]
fn estimate_fixed_and_tuned() {
    let fixed: Value = serde_json::from_str(&estimate(&sample_csv(), 0.01, 5, 1).unwrap()).unwrap();
    assert_eq!(fixed["tuned"], false);
    let pcor = fixed["pcor"].as_array().unwrap();
    assert_eq!(pcor.len(), 6);
    for i in 0..6 {
        assert_eq!(pcor[i][i].as_f64().unwrap(), 1.0);
        for j in 0..6 {
            assert_eq!(pcor[i][j], pcor[j][i]);
        }
    }
    // neighbouring features are positively partially correlated
    assert!(pcor[0][1].as_f64().unwrap() > 0.1);
    let tuned: Value = serde_json::from_str(&estimate(&sample_csv(), 0.0, 5, 1).unwrap()).unwrap();
    assert_eq!(tuned["tuned"], true);
    assert!(tuned["lambda"].as_f64().unwrap() > 0.0);
}

#[test]
fn network_top_edges() {
    let v: Value = serde_json::from_str(&network(&sample_csv(), 0.5, "top", 5.0).unwrap()).unwrap();
    assert_eq!(v["edges"].as_array().unwrap().len(), 5);
    assert_eq!(v["community"].as_array().unwrap().len(), 6);
    assert!(v["report"].as_str().unwrap().starts_with("- Retained elements: 5\n"));
    assert!(network(&sample_csv(), 0.5, "bogus", 1.0).is_err());
}
