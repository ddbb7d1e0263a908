//! Registry-wide ladder invariant: for every registered scenario, every
//! checker tied to its theorem tags decays (or stays at zero) as the family
//! parameter climbs the ladder {1e2, 1e3, 1e4}.

use std::collections::BTreeMap;

use difflim::scale::{build_scale, run_checkers, CheckerRecord, ScaleParams, NON_TREND_CHECKERS};
use difflim::scenarios::registry_default_entries;
use difflim::stats::convergence_trend;
use rayon::prelude::*;

#[test]
fn checker_values_decay_along_the_ladder_for_all_scenarios() {
    let n_bound = 5.0;
    let scenarios = registry_default_entries();
    let jobs: Vec<(usize, f64)> = (0..scenarios.len())
        .flat_map(|i| [100.0, 1_000.0, 10_000.0].map(|t| (i, t)))
        .collect();
    let results: Vec<(usize, f64, Vec<CheckerRecord>)> = jobs
        .par_iter()
        .map(|&(i, t_param)| {
            let sc = &scenarios[i];
            let step = ScaleParams::step_for(sc, t_param, 0.01);
            let tab = build_scale(&sc.drift, t_param, &ScaleParams::new(5.0, 1e-8, step))
                .unwrap_or_else(|e| panic!("{}: {e}", sc.id));
            (i, t_param, run_checkers(sc, &tab, n_bound, 1.0).unwrap())
        })
        .collect();
    for (idx, sc) in scenarios.iter().enumerate() {
        let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for (i, t_param, recs) in &results {
            if *i != idx {
                continue;
            }
            for rec in recs {
                series.entry(rec.checker.clone()).or_default().push((*t_param, rec.value));
            }
        }
        for (checker, values) in &series {
            if NON_TREND_CHECKERS.contains(&checker.as_str()) {
                // Bounded-only quantities; just require finiteness.
                assert!(values.iter().all(|v| v.1.is_finite()), "{}: {checker}", sc.id);
                continue;
            }
            let trend = convergence_trend(values, f64::INFINITY, 0.10);
            assert!(
                trend.pass,
                "{}: checker {checker} does not decay: {values:?}",
                sc.id
            );
            let first = values.first().unwrap().1;
            let last = values.last().unwrap().1;
            assert!(
                last <= first + 1e-9,
                "{}: checker {checker} grew from {first} to {last}",
                sc.id
            );
        }
    }
}
