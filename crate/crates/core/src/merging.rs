//! Patch merging, its full-rate convolution form, adaptive polyphase
//! sampling and the index-driven unpooling used by the decoder.

use crate::error::{param_err, shape_err, Error, Result};
use crate::numerics::{
    argmax_with_ties, circular_conv, lp_norm_sorted, plane_factor, GridSignal, Matrix, OffsetVector,
};
use crate::tokenizer::TokenMatrix;
use crate::trace::{Selection, SelectionKind, SelectionTrace};

#[derive(Clone, Debug, PartialEq)]
pub struct MergeConfig {
    /// Merge factor `P` on every grid axis.
    pub factor: usize,
    /// `E_merge` with `P^rank * D` rows, ordered (patch row, patch column, channel).
    pub merge: Matrix,
    /// `p` of the polyphase energy norm.
    pub energy_p: f64,
}

impl MergeConfig {
    pub fn new(factor: usize, merge: Matrix) -> Self {
        Self { factor, merge, energy_p: 2.0 }
    }

    fn factors(&self, grid: &[usize]) -> Result<(usize, usize)> {
        if self.factor == 0 {
            return param_err("merge factor must be at least 1");
        }
        if let Some(g) = grid.iter().find(|&&g| g % self.factor != 0) {
            return shape_err(format!("token grid axis {g} is not divisible by merge factor {}", self.factor));
        }
        Ok(plane_factor(grid.len(), self.factor))
    }

    fn check(&self, t: &TokenMatrix) -> Result<(usize, usize)> {
        let f = self.factors(t.grid())?;
        let want = self.factor.pow(t.rank() as u32) * t.dim();
        if self.merge.rows() != want {
            return shape_err(format!("merge matrix has {} rows, expected {want}", self.merge.rows()));
        }
        Ok(f)
    }
}

fn reduced_grid(grid: &[usize], factor: usize) -> Vec<usize> {
    grid.iter().map(|g| g / factor).collect()
}

/// Each `P` block of tokens is flattened row-major over (position, channel)
/// and projected by `E_merge`.
pub fn pmerge(t: &TokenMatrix, cfg: &MergeConfig) -> Result<TokenMatrix> {
    let (pr, pc) = cfg.check(t)?;
    let plane = t.plane();
    let out_grid = reduced_grid(t.grid(), cfg.factor);
    let blocks = t.len() / (pr * pc);
    let mut merged = Vec::with_capacity(blocks * cfg.merge.rows());
    for br in 0..plane.rows / pr {
        for bc in 0..plane.cols / pc {
            for dr in 0..pr {
                for dc in 0..pc {
                    merged.extend_from_slice(t.row((br * pr + dr) * plane.cols + bc * pc + dc));
                }
            }
        }
    }
    let merged = Matrix::from_raw(blocks, cfg.merge.rows(), merged);
    TokenMatrix::new(out_grid, merged.matmul(&cfg.merge)?)
}

/// Full-rate form of [`pmerge`]: output channel `k` is
/// `sum_j circular_conv(t_j, h(k, j))` where `h(k, j)[l] = E_merge[l * D + j, k]`.
/// Keeping every `P`-th row from phase 0 reproduces [`pmerge`].
pub fn pmerge_conv_fullrate(t: &TokenMatrix, cfg: &MergeConfig) -> Result<TokenMatrix> {
    let (pr, pc) = cfg.check(t)?;
    let d = t.dim();
    let d_out = cfg.merge.cols();
    let kernel_shape = vec![cfg.factor; t.rank()];
    let channels: Vec<GridSignal> = (0..d)
        .map(|j| GridSignal::from_raw(t.grid().to_vec(), 1, (0..t.len()).map(|i| t.row(i)[j]).collect()))
        .collect();
    let mut out = vec![0.0; t.len() * d_out];
    for k in 0..d_out {
        for (j, channel) in channels.iter().enumerate() {
            let taps = (0..pr * pc).map(|l| cfg.merge.get(l * d + j, k)).collect();
            let kernel = GridSignal::from_raw(kernel_shape.clone(), 1, taps);
            let y = circular_conv(channel, &kernel)?;
            for (n, v) in y.data().iter().enumerate() {
                out[n * d_out + k] += v;
            }
        }
    }
    Ok(TokenMatrix::from_parts(t.grid().to_vec(), t.len(), d_out, out))
}

/// Polyphase component `Y[k::P]` (per axis).
pub fn polyphase_component(y: &TokenMatrix, factor: usize, phase: &[usize]) -> Result<TokenMatrix> {
    let cfg = MergeConfig::new(factor, Matrix::zeros(0, 0));
    let (pr, pc) = cfg.factors(y.grid())?;
    if phase.len() != y.rank() || phase.iter().any(|&k| k >= factor) {
        return param_err(format!("phase {phase:?} is outside [0, {factor})"));
    }
    let (kr, kc) = if y.rank() == 1 { (0, phase[0]) } else { (phase[0], phase[1]) };
    let plane = y.plane();
    let grid = reduced_grid(y.grid(), factor);
    let mut data = Vec::with_capacity(y.len() / (pr * pc) * y.dim());
    for ir in 0..plane.rows / pr {
        for ic in 0..plane.cols / pc {
            data.extend_from_slice(y.row((kr + pr * ir) * plane.cols + kc + pc * ic));
        }
    }
    let rows = y.len() / (pr * pc);
    Ok(TokenMatrix::from_parts(grid, rows, y.dim(), data))
}

fn phases(rank: usize, factor: usize) -> Vec<Vec<usize>> {
    if rank == 1 {
        (0..factor).map(|k| vec![k]).collect()
    } else {
        (0..factor).flat_map(|r| (0..factor).map(move |c| vec![r, c])).collect()
    }
}

/// Adaptive polyphase sampling: keeps the component with the largest
/// `p`-norm, all channels pooled into one norm.
pub fn aps(y: &TokenMatrix, factor: usize, p: f64) -> Result<(TokenMatrix, Selection)> {
    let candidates = phases(y.rank(), factor);
    let components = candidates.iter().map(|k| polyphase_component(y, factor, k)).collect::<Result<Vec<_>>>()?;
    let norms = components.iter().map(|c| lp_norm_sorted(c.tokens().data(), p)).collect::<Result<Vec<_>>>()?;
    let (best, tied) = argmax_with_ties(&norms)?;
    let chosen = components.into_iter().nth(best).expect("index from argmax");
    Ok((chosen, Selection { offset: candidates[best].clone(), tied }))
}

/// `aps(pmerge_conv_fullrate(t))`.
pub fn a_pmerge(t: &TokenMatrix, cfg: &MergeConfig) -> Result<(TokenMatrix, Selection)> {
    let y = pmerge_conv_fullrate(t, cfg)?;
    aps(&y, cfg.factor, cfg.energy_p)
}

/// Scatters `z` into a zero grid of shape `target` at rows `phase + P * i`.
pub fn unpool(z: &TokenMatrix, phase: &[usize], factor: usize, target: &[usize]) -> Result<TokenMatrix> {
    if factor == 0 || target.len() != z.rank() || phase.len() != z.rank() {
        return Err(Error::Trace(format!("cannot unpool grid {:?} to {target:?} with phase {phase:?}", z.grid())));
    }
    if z.grid().iter().zip(target).any(|(g, t)| g * factor != *t) {
        return Err(Error::Trace(format!("grid {:?} times {factor} does not give {target:?}", z.grid())));
    }
    if phase.iter().any(|&k| k >= factor) {
        return Err(Error::Trace(format!("phase {phase:?} is outside [0, {factor})")));
    }
    let (pr, pc) = plane_factor(z.rank(), factor);
    let (kr, kc) = if z.rank() == 1 { (0, phase[0]) } else { (phase[0], phase[1]) };
    let zp = z.plane();
    let cols = zp.cols * pc;
    let d = z.dim();
    let m: usize = target.iter().product();
    let mut out = vec![0.0; m * d];
    for ir in 0..zp.rows {
        for ic in 0..zp.cols {
            let dst = (kr + pr * ir) * cols + kc + pc * ic;
            out[dst * d..(dst + 1) * d].copy_from_slice(z.row(ir * zp.cols + ic));
        }
    }
    Ok(TokenMatrix::from_parts(target.to_vec(), m, d, out))
}

/// Unpools one encoder stage from its trace: scatter at the recorded merge
/// phase, then rotate rows back by the stage's window offset if one was
/// recorded.
pub fn unpool_traced(
    z: &TokenMatrix,
    trace: &SelectionTrace,
    stage: usize,
    factor: usize,
    target: &[usize],
) -> Result<TokenMatrix> {
    let merge = trace
        .find(stage, SelectionKind::Merge)
        .ok_or_else(|| Error::Trace(format!("no merge phase recorded for stage {stage}")))?;
    let scattered = unpool(z, &merge.offset, factor, target)?;
    match trace.find(stage, SelectionKind::Window) {
        Some(w) => scattered.shift_rows(&-&OffsetVector::from(w.offset.as_slice())),
        None => Ok(scattered),
    }
}
