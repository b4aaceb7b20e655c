//! Switching-regression household model with a common latent factor.

pub mod alpha;
pub mod battery;
pub mod fit;
pub mod likelihood;
pub mod params;
pub mod prepare;
pub mod report;
pub mod structural;

pub use alpha::{estimate_alpha, AlphaEstimate};
pub use battery::{test_battery, test_battery_prepared, BatteryOptions, BatteryReport, Verdict};
pub use fit::{fit_model, fit_prepared, FitControl};
pub use params::{Layout, ModelKind, ReducedFormEstimates};
pub use prepare::{AlphaMode, StructuralData, StructuralSpec};
pub use structural::{
    lr_test, recover_sharing_rule, reservation_wage, solve_sharing, LrTest, ReservationWage, SharingSolution,
    StructuralParams,
};
