//! Consistency of the pseudo-ML point estimator on the peer-effects design.

use nethac_core::mc::{run_probit_study, McConfig, SeMethod};

#[test]
fn point_estimates_are_consistent_at_n2000() {
    // mean beta_hat over 500 replications within 3 Monte Carlo standard
    // errors of the truth
    let cfg = McConfig {
        n_list: vec![2000],
        reps: 500,
        oracle_reps: 500,
        methods: vec![SeMethod::Oracle],
        master_seed: 606,
        ..McConfig::default()
    };
    let report = run_probit_study(&cfg).unwrap();
    let (_, mean_beta) = report.mean_beta[0];
    for (coord, mean) in mean_beta.iter().enumerate() {
        let se_of_mean = report.oracle_se(2000, coord).unwrap() / (cfg.reps as f64).sqrt();
        let err = (mean - cfg.beta_true[coord]).abs();
        assert!(
            err < 3.0 * se_of_mean,
            "beta_{}: mean {} vs true {} (3 MC SEs = {})",
            coord + 1,
            mean,
            cfg.beta_true[coord],
            3.0 * se_of_mean
        );
    }
}
