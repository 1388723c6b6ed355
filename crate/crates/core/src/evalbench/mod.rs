//! OTB-style precision/success curves and VOT-style accuracy, robustness
//! and expected average overlap.

mod otb;
mod report;
mod vot;

pub use otb::{
    area_inflation, auc, center_errors, mean_iou, overlaps, precision_at_20, precision_curve,
    success_curve, success_curve_from_overlaps, Curve, PRECISION_THRESHOLDS, SUCCESS_THRESHOLDS,
};
pub use report::{parse_vot_table, render_otb_table, render_vot_table, OtbRow, VotRow};
pub use vot::{eao, vot_run, vot_scores, FrameFlag, OverlapCurve, RunSummary, Trajectory, VotConfig, VotScores};
