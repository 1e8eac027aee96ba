use std::path::PathBuf;

use gasmix_core::scenario::Scenario;
use gasmix_core::sim::steady;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Scenario::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn bundled_scenarios_have_steady_states() {
    for name in ["network_w110.toml", "network_w130.toml", "single_pipe.toml"] {
        let s = scenario(name);
        let rows = steady(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(rows.len(), s.graph().nodes().len());
        for (id, v) in &rows {
            assert!(v.p_mpa > 0.0 && v.rho > 0.0, "{name} {id}: {v:?}");
        }
    }
}

#[test]
fn larger_withdrawal_lowers_every_steady_pressure() {
    let lo = steady(&scenario("network_w110.toml")).unwrap();
    let hi = steady(&scenario("network_w130.toml")).unwrap();
    for ((id, a), (_, b)) in lo.iter().zip(&hi).skip(1) {
        assert!(b.p_mpa < a.p_mpa, "{id}: {} vs {}", a.p_mpa, b.p_mpa);
    }
}
