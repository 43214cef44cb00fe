use std::fmt::Write as _;

use crate::ppo::train::UpdateStats;

pub const METRICS_HEADER: &str = "global_step,episodic_return_mean_100,policy_loss_a,policy_loss_g,value_loss,entropy,approx_kl_a,approx_kl_g,clip_frac_a,clip_frac_g,lr_a,lr_g,sps";

/// One `metrics.csv` row, written after every update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub global_step: u64,
    /// Empty in the CSV until an episode has finished.
    pub episodic_return_mean_100: Option<f64>,
    pub stats: UpdateStats,
    pub sps: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let c = &self.stats.components;
        let mut s = format!("{},", self.global_step);
        if let Some(r) = self.episodic_return_mean_100 {
            write!(s, "{r}").expect("write to string");
        }
        for v in [
            c.policy_loss_a,
            c.policy_loss_g,
            c.value_loss,
            c.entropy,
            c.approx_kl_a,
            c.approx_kl_g,
            c.clip_frac_a,
            c.clip_frac_g,
            self.stats.lr_a,
            self.stats.lr_g,
        ] {
            write!(s, ",{v}").expect("write to string");
        }
        write!(s, ",{:.1}", self.sps).expect("write to string");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_has_one_field_per_column() {
        let row = MetricsRow {
            global_step: 1024,
            episodic_return_mean_100: None,
            stats: UpdateStats::default(),
            sps: 0.0,
        };
        let line = row.to_csv();
        assert_eq!(line.split(',').count(), METRICS_HEADER.split(',').count());
        assert!(line.starts_with("1024,,"));
    }
}
