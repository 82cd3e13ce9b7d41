//! Metrics, reference predictors, configuration files and the command
//! drivers behind the command-line tool.

mod baselines;
mod config;
mod metrics;
pub mod plot;
mod runner;

pub use baselines::{day_slot, naive_baselines, persistence, HistoricalAverage};
pub use config::{resolve_alias, DataConfig, DataSource, EvalConfig, ExperimentConfig};
pub use metrics::{compute_metrics, MetricReport, Metrics, Summary, UNDEFINED};
pub use runner::{
    ablate, evaluate, evaluate_checkpoint, generate_synthetic, load_data, parse_grid, report, run_jobs, sweep,
    test_metrics, train, train_run, write_report, Curves, Job, RunOutcome, Summary as ExperimentSummary, EVALUATION,
    MODEL_ROW, RUN_METRICS,
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ranges() {
        let g = parse_grid("0.1..1.0").unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], "0.1");
        assert_eq!(g[2], "0.3");
        assert_eq!(g[9], "1");
        assert_eq!(parse_grid("1..4").unwrap(), ["1", "2", "3", "4"]);
        assert_eq!(parse_grid("0..1:0.25").unwrap(), ["0", "0.25", "0.5", "0.75", "1"]);
        assert_eq!(parse_grid("0.05, 0.2").unwrap(), ["0.05", "0.2"]);
        for bad in ["", "2..1", "a..b", "0..1:0"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }
}
