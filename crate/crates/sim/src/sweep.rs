// Copyright (c) The LightChain Simulator Authors
// SPDX-License-Identifier: Apache-2.0

use crate::config::{SimConfig, NUMERIC_KEYS};
use crate::engine::run;
use crate::error::{Result, SimError};
use crate::metrics::Metrics;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub axis_value: f64,
    pub seed: u64,
    pub metrics: Metrics,
}

/// Checks `axis` and every cell configuration without running anything.
pub fn sweep_configs(
    base: &SimConfig,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<(f64, SimConfig)>> {
    if !NUMERIC_KEYS.contains(&axis) {
        return Err(SimError::Config(format!(
            "unknown sweep axis '{axis}'; expected one of {}",
            NUMERIC_KEYS.join(", ")
        )));
    }
    let mut out = Vec::with_capacity(values.len() * seeds.len());
    for &v in values {
        for &seed in seeds {
            let mut c = base.clone();
            c.set_axis(axis, v)?;
            c.seed = seed;
            c.validate()?;
            out.push((v, c));
        }
    }
    Ok(out)
}

/// Runs the product `values x seeds`, values outermost. Every cell is
/// validated before the first run starts.
pub fn run_sweep(
    base: &SimConfig,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepCell>> {
    run_sweep_with(base, axis, values, seeds, |_| Ok(()))
}

/// Like [`run_sweep`], calling `on_cell` after each run.
pub fn run_sweep_with(
    base: &SimConfig,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
    mut on_cell: impl FnMut(&SweepCell) -> Result<()>,
) -> Result<Vec<SweepCell>> {
    let cells = sweep_configs(base, axis, values, seeds)?;
    let mut out = Vec::with_capacity(cells.len());
    for (v, c) in cells {
        let cell = SweepCell {
            axis_value: v,
            seed: c.seed,
            metrics: run(&c)?,
        };
        on_cell(&cell)?;
        out.push(cell);
    }
    Ok(out)
}
