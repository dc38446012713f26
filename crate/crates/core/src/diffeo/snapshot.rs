//! Plain-text snapshot of a grid map.
//!
//! ```text
//! dim 2
//! box 0 1 0 1
//! resolution 65 513
//! support 0.1 0.9 0.1 0.9
//! <d_0> <d_1>        one line per node, row-major
//! ```
//!
//! Floats use the shortest representation that parses back to the same bits.

use std::io::{BufRead, Write};

use super::map::GridDiffeo;
use crate::error::{Error, Result};
use crate::grid::{BoxRegion, GridSpec};

pub fn write_snapshot<W: Write>(phi: &GridDiffeo, mut w: W) -> Result<()> {
    let g = phi.grid();
    let dim = g.dim();
    writeln!(w, "dim {dim}")?;
    let bounds: Vec<String> = (0..dim).map(|a| format!("{:?} {:?}", g.lo()[a], g.hi()[a])).collect();
    writeln!(w, "box {}", bounds.join(" "))?;
    let res: Vec<String> = g.resolution().iter().map(|n| n.to_string()).collect();
    writeln!(w, "resolution {}", res.join(" "))?;
    let s = phi.support();
    let sup: Vec<String> = (0..dim).map(|a| format!("{:?} {:?}", s.lo[a], s.hi[a])).collect();
    writeln!(w, "support {}", sup.join(" "))?;
    let mut line = String::new();
    for i in 0..g.len() {
        line.clear();
        for a in 0..dim {
            if a > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:?}", phi.displacement(a)[i]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn header<'a>(line: Option<std::io::Result<String>>, key: &str, buf: &'a mut String) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::Format(format!("missing `{key}` line")))??;
    *buf = line;
    buf.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| Error::Format(format!("expected `{key}` line")))
}

fn floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Format(format!("bad number `{t}`: {e}"))))
        .collect()
}

fn pairs(v: &[f64], dim: usize, what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != 2 * dim {
        return Err(Error::Format(format!("{what}: expected {} numbers", 2 * dim)));
    }
    Ok(((0..dim).map(|a| v[2 * a]).collect(), (0..dim).map(|a| v[2 * a + 1]).collect()))
}

pub fn read_snapshot<R: BufRead>(r: R) -> Result<GridDiffeo> {
    let mut lines = r.lines();
    let mut buf = String::new();
    let dim: usize = header(lines.next(), "dim", &mut buf)?
        .parse()
        .map_err(|e| Error::Format(format!("bad dim: {e}")))?;
    let (lo, hi) = pairs(&floats(header(lines.next(), "box", &mut buf)?)?, dim, "box")?;
    let res: Vec<usize> = header(lines.next(), "resolution", &mut buf)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Format(format!("bad resolution: {e}"))))
        .collect::<Result<_>>()?;
    let (slo, shi) = pairs(&floats(header(lines.next(), "support", &mut buf)?)?, dim, "support")?;
    let grid = GridSpec::new(lo, hi, res)?;
    let mut disp = vec![Vec::with_capacity(grid.len()); dim];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = floats(&line)?;
        if v.len() != dim {
            return Err(Error::Format(format!("node line with {} values", v.len())));
        }
        for a in 0..dim {
            disp[a].push(v[a]);
        }
    }
    if disp[0].len() != grid.len() {
        return Err(Error::Format(format!(
            "{} node lines for a grid of {} nodes",
            disp[0].len(),
            grid.len()
        )));
    }
    GridDiffeo::new(grid, disp, BoxRegion::new(slo, shi)?)
}
