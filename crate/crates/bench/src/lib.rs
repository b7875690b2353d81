//! Fixtures shared by the benchmarks.

use topopt_core::{parse_config_str, Problem};

/// Carrier plate with loading uncertainty and `samples` seeded Monte Carlo points.
pub fn carrier(fine: usize, coarse: usize, samples: usize) -> Problem {
    let text = format!(
        r#"{{"benchmark": "carrier_plate", "lambda": 0.1, "fine_mesh": [{fine}, {fine}], "coarse_mesh": [{coarse}, {coarse}],
            "sampling": {{"kind": "monte_carlo", "n": {samples}, "seed": 1}}, "max_iters": 1}}"#
    );
    parse_config_str(&text).and_then(|c| c.build()).expect("benchmark configuration")
}
