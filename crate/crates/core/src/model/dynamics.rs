use super::grid::GridSpec;
use super::price::PriceChangeSpec;
use super::regen::RegenerationRule;
use crate::error::Result;

/// Everything a simulator needs to move the mid: intensities, the
/// regeneration rule and the jump size.
#[derive(Debug, Clone)]
pub struct PriceModel {
    pub spec: PriceChangeSpec,
    pub rule: RegenerationRule,
    /// Jump size in grid bins.
    pub bins: usize,
    /// Jump size in currency.
    pub jump_size: f64,
}

impl PriceModel {
    pub fn new(spec: PriceChangeSpec, rule: RegenerationRule, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        spec.validate()?;
        Ok(PriceModel {
            spec,
            rule,
            bins: grid.jump_bins(),
            jump_size: grid.jump_size,
        })
    }
}
