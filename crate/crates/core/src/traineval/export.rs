//! Attention-weight export for inspection and heatmaps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataio::Window;
use crate::model::{Rkt, RktParams};
use crate::numerics::Tensor;

use super::Result;

/// Writes per-pair weights for one window as CSV with columns exactly
/// `t,j,alpha,rE,rT,beta`, one row per attended (target, source) cell.
pub fn export_attention(
    model: &Rkt<'_>,
    params: &RktParams,
    window: &Window,
    path: &Path,
) -> Result<()> {
    let fwd = model.forward_window(params, window)?;
    let l = window.len();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,j,alpha,rE,rT,beta")?;
    for t in 0..l {
        for j in 0..l {
            if fwd.attn_mask[t * l + j] {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    t,
                    j,
                    fwd.alpha.get2(t, j),
                    fwd.r_exercise.get2(t, j),
                    fwd.r_forget.get2(t, j),
                    fwd.beta.get2(t, j),
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Position-averaged `l x l` attention heatmap over many windows.
///
/// Cell `(t, j)` averages `beta[t][j]` over the windows that emit any
/// attention at target `t`, so each contributing row remains a
/// distribution: rows with at least one contributor sum to 1.
pub fn aggregate_attention(
    model: &Rkt<'_>,
    params: &RktParams,
    windows: &[Window],
) -> Result<Tensor> {
    let l = model.config.l;
    let mut sums = vec![0.0; l * l];
    let mut row_counts = vec![0u64; l];
    for window in windows {
        let fwd = model.forward_window(params, window)?;
        for t in 0..l {
            let any = (0..l).any(|j| fwd.attn_mask[t * l + j]);
            if !any {
                continue;
            }
            row_counts[t] += 1;
            for j in 0..l {
                sums[t * l + j] += fwd.beta.get2(t, j);
            }
        }
    }
    for t in 0..l {
        if row_counts[t] > 0 {
            let inv = 1.0 / row_counts[t] as f64;
            for j in 0..l {
                sums[t * l + j] *= inv;
            }
        }
    }
    Ok(Tensor::new(vec![l, l], sums).expect("sized by construction"))
}

/// Writes the aggregate matrix as a plain CSV grid, one row per target
/// position.
pub fn write_aggregate_csv(path: &Path, matrix: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(t).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
