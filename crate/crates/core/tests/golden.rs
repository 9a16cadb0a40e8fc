//! Golden-file check: a fixed-seed 50-replication run renders byte-identically
//! to the committed reference output.
//!
//! Regenerate (after an intentional change) with
//! `UPDATE_GOLDEN=1 cargo test -p nethac-core --test golden`.

use std::path::PathBuf;

use nethac_core::mc::{run_probit_study, summarize, McConfig, ReportFormat, SeMethod};

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

#[test]
fn fixed_seed_report_matches_golden_files() {
    let cfg = McConfig {
        n_list: vec![120],
        reps: 50,
        oracle_reps: 50,
        methods: vec![SeMethod::Naive, SeMethod::Spatial, SeMethod::Network, SeMethod::Oracle],
        master_seed: 424242,
        ..McConfig::default()
    };
    let report = run_probit_study(&cfg).unwrap();
    let text = summarize(&report, ReportFormat::Text).unwrap();
    let csv = summarize(&report, ReportFormat::Csv).unwrap();

    let dir = golden_dir();
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("golden_probit_report.txt"), &text).unwrap();
        std::fs::write(dir.join("golden_probit_report.csv"), &csv).unwrap();
        panic!("golden files rewritten; rerun without UPDATE_GOLDEN");
    }
    let want_text = std::fs::read_to_string(dir.join("golden_probit_report.txt")).unwrap();
    let want_csv = std::fs::read_to_string(dir.join("golden_probit_report.csv")).unwrap();
    assert_eq!(text, want_text, "text report drifted from golden file");
    assert_eq!(csv, want_csv, "csv report drifted from golden file");
}
