//! Top-K ranking metrics, report formats and the experiment harnesses.

pub mod experiments;
pub mod metrics;
pub mod report;

pub use experiments::{
    ablation_arms, cold_start_arms, heads_arms, run_ablation, run_arm, run_arms, run_cold_start, run_heads_sweep,
    thread_cap, Arm, ArmResult, DEFAULT_FRACTIONS, DEFAULT_HEADS, DEFAULT_KS,
};
pub use metrics::{metrics_at, ndcg_at_k, rank_topk, recall_at_k, user_metrics, RankingContext};
pub use report::{
    parse_reports_csv, reports_csv, reports_json, sweep_csv, EvalReport, MetricAtK, ReportRow, REPORT_HEADER,
};
