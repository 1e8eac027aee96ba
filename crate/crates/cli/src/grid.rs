//! Parsing of `--grid` overrides such as `omega=0.5,1;kappa=0:1:21`.

use anyhow::{bail, Context, Result};
use gasmix_core::analysis::Grid;

/// Replacement grids for the forcing frequency and amplitude.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridOverride {
    pub omega: Option<Grid>,
    pub kappa: Option<Grid>,
}

/// Each `;`-separated entry is `name=values` where values are either a
/// comma-separated list or `start:stop:points`.
pub fn parse_grid(spec: &str) -> Result<GridOverride> {
    let mut out = GridOverride::default();
    for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, values) = part.split_once('=').with_context(|| format!("grid entry `{part}` lacks `=`"))?;
        let grid = parse_axis(values.trim()).with_context(|| format!("grid entry `{part}`"))?;
        let slot = match name.trim() {
            "omega" => &mut out.omega,
            "kappa" => &mut out.kappa,
            other => bail!("unknown grid axis `{other}`; expected omega or kappa"),
        };
        if slot.replace(grid).is_some() {
            bail!("grid axis `{}` given twice", name.trim());
        }
    }
    Ok(out)
}

fn parse_axis(s: &str) -> Result<Grid> {
    let num = |t: &str| t.trim().parse::<f64>().with_context(|| format!("`{t}` is not a number"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else { bail!("range must be start:stop:points") };
        let points = n.trim().parse::<usize>().with_context(|| format!("`{n}` is not a point count"))?;
        return Ok(Grid::range(num(a)?, num(b)?, points));
    }
    Ok(Grid::Values(s.split(',').map(num).collect::<Result<_>>()?))
}
