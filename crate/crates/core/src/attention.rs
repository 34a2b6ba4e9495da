//! Single-head self-attention with optional relative position bias, window
//! attention on a fixed partition (`wsa`) and on the highest-energy
//! partition (`a_wsa`).

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::numerics::{argmax_with_ties, lp_norm, plane_factor, softmax_rows, sorted_sum, Matrix, OffsetVector, Plane};
use crate::tokenizer::TokenMatrix;
use crate::trace::Selection;

/// Query/key/value projections, each `D x D'`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    query: Matrix,
    key: Matrix,
    value: Matrix,
}

impl AttentionParams {
    pub fn new(query: Matrix, key: Matrix, value: Matrix) -> Result<Self> {
        let dims = |m: &Matrix| (m.rows(), m.cols());
        if dims(&query) != dims(&key) || dims(&query) != dims(&value) {
            return shape_err(format!(
                "projection shapes differ: {:?} {:?} {:?}",
                dims(&query),
                dims(&key),
                dims(&value)
            ));
        }
        if query.cols() == 0 {
            return shape_err("projections need at least one output column");
        }
        Ok(Self { query, key, value })
    }

    pub fn input_dim(&self) -> usize {
        self.query.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.query.cols()
    }

    /// `1 / sqrt(D')`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.output_dim() as f64).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpeKind {
    #[default]
    None,
    /// Bias indexed by the signed distance `p_i - p_j`.
    Original,
    /// Bias indexed by the distance modulo the grid length.
    Adaptive,
}

/// Relative position lookup table. Token positions are the identity grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RpeTable {
    kind: RpeKind,
    bias: Vec<f64>,
}

impl RpeTable {
    pub fn none() -> Self {
        Self::default()
    }

    /// Table over signed distances: `prod(2 g - 1)` entries for grid `g`.
    pub fn original(bias: Vec<f64>) -> Result<Self> {
        Self::with_kind(RpeKind::Original, bias)
    }

    /// Table over circular distances: `prod(g)` entries for grid `g`.
    pub fn adaptive(bias: Vec<f64>) -> Result<Self> {
        Self::with_kind(RpeKind::Adaptive, bias)
    }

    fn with_kind(kind: RpeKind, bias: Vec<f64>) -> Result<Self> {
        if bias.iter().any(|b| !b.is_finite()) {
            return param_err("position bias entries must be finite");
        }
        Ok(Self { kind, bias })
    }

    pub fn kind(&self) -> RpeKind {
        self.kind
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Number of lookup entries a table of `kind` needs for `grid`.
    pub fn required_len(kind: RpeKind, grid: &[usize]) -> usize {
        match kind {
            RpeKind::None => 0,
            RpeKind::Original => grid.iter().map(|g| 2 * g - 1).product(),
            RpeKind::Adaptive => grid.iter().product(),
        }
    }

    /// The `M x M` bias for `grid`, or `None` when no bias is configured.
    pub fn bias_matrix(&self, grid: &[usize]) -> Result<Option<Matrix>> {
        match self.kind {
            RpeKind::None => Ok(None),
            RpeKind::Original => rpe_matrix(self, grid).map(Some),
            RpeKind::Adaptive => adaptive_rpe_matrix(self, grid).map(Some),
        }
    }

    fn check(&self, want: RpeKind, grid: &[usize]) -> Result<()> {
        if self.kind != want {
            return param_err(format!("expected a {want:?} table, got {:?}", self.kind));
        }
        let need = Self::required_len(want, grid);
        if self.bias.len() != need {
            return shape_err(format!(
                "{want:?} table for grid {grid:?} needs {need} entries, got {}",
                self.bias.len()
            ));
        }
        Ok(())
    }
}

fn pair_matrix(grid: &[usize], lookup: impl Fn(i64, i64) -> usize, bias: &[f64]) -> Matrix {
    let plane = Plane::of(grid);
    let m = plane.len();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let (ri, ci) = ((i / plane.cols) as i64, (i % plane.cols) as i64);
        for j in 0..m {
            let (rj, cj) = ((j / plane.cols) as i64, (j % plane.cols) as i64);
            out.push(bias[lookup(ri - rj, ci - cj)]);
        }
    }
    Matrix::from_raw(m, m, out)
}

/// `E[i, j] = B[p_i - p_j]`, with the signed distance offset by `g - 1`
/// per axis into the table.
pub fn rpe_matrix(table: &RpeTable, grid: &[usize]) -> Result<Matrix> {
    table.check(RpeKind::Original, grid)?;
    let plane = Plane::of(grid);
    let (span_r, span_c) = (plane.rows as i64, plane.cols as i64);
    let lookup = |dr: i64, dc: i64| ((dr + span_r - 1) * (2 * span_c - 1) + (dc + span_c - 1)) as usize;
    Ok(pair_matrix(grid, lookup, &table.bias))
}

/// `E[i, j] = B[(p_i - p_j) mod g]` per axis; circulant along every axis.
pub fn adaptive_rpe_matrix(table: &RpeTable, grid: &[usize]) -> Result<Matrix> {
    table.check(RpeKind::Adaptive, grid)?;
    let plane = Plane::of(grid);
    let (rows, cols) = (plane.rows as i64, plane.cols as i64);
    let lookup = |dr: i64, dc: i64| (dr.rem_euclid(rows) * cols + dc.rem_euclid(cols)) as usize;
    Ok(pair_matrix(grid, lookup, &table.bias))
}

/// `softmax(Q K^T / sqrt(D') + E_pos) V`.
pub fn sa(t: &TokenMatrix, params: &AttentionParams, rpe: &RpeTable) -> Result<TokenMatrix> {
    let bias = rpe.bias_matrix(t.grid())?;
    attend(t, params, bias.as_ref())
}

fn attend(t: &TokenMatrix, params: &AttentionParams, bias: Option<&Matrix>) -> Result<TokenMatrix> {
    if t.dim() != params.input_dim() {
        return shape_err(format!("tokens have dimension {}, projections expect {}", t.dim(), params.input_dim()));
    }
    let tokens = t.tokens();
    let q = tokens.matmul(&params.query)?;
    let k = tokens.matmul(&params.key)?;
    let v = tokens.matmul(&params.value)?;
    let scale = params.scale();
    let raw = q.matmul(&k.transpose())?;
    let logits: Vec<f64> = match bias {
        Some(b) => raw.data().iter().zip(b.data()).map(|(s, e)| s * scale + e).collect(),
        None => raw.data().iter().map(|s| s * scale).collect(),
    };
    let attn = softmax_rows(&Matrix::from_raw(raw.rows(), raw.cols(), logits));
    TokenMatrix::new(t.grid().to_vec(), attn.matmul(&v)?)
}

/// Shift-invariant score of a window-energy vector, maximised by `a_wsa`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowScore {
    #[default]
    Max,
    /// Every partition covers each token exactly once, so this score is the
    /// same for all offsets and always ties.
    Sum,
    L2,
}

impl WindowScore {
    /// Depends only on the multiset of energies.
    pub fn evaluate(self, v: &[f64]) -> f64 {
        match self {
            WindowScore::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            WindowScore::Sum => sorted_sum(v.iter().copied()),
            WindowScore::L2 => sorted_sum(v.iter().map(|x| x * x)).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowConfig {
    /// Window length `W` on every grid axis.
    pub window: usize,
    /// `p` of the per-token energy norm.
    pub energy_p: f64,
    pub score: WindowScore,
}

impl WindowConfig {
    pub fn new(window: usize) -> Self {
        Self { window, energy_p: 2.0, score: WindowScore::Max }
    }

    fn factors(&self, t: &TokenMatrix) -> Result<(usize, usize)> {
        if self.window == 0 {
            return param_err("window length must be at least 1");
        }
        if let Some(g) = t.grid().iter().find(|&&g| g % self.window != 0) {
            return shape_err(format!("token grid axis {g} is not divisible by window {}", self.window));
        }
        Ok(plane_factor(t.rank(), self.window))
    }

    fn window_grid(&self, rank: usize) -> Vec<usize> {
        vec![self.window; rank]
    }
}

/// `v[k]`: mean token `p`-norm over the circular window anchored at `k`.
pub fn window_energy(t: &TokenMatrix, cfg: &WindowConfig) -> Result<Vec<f64>> {
    let (wr, wc) = cfg.factors(t)?;
    let norms = (0..t.len()).map(|i| lp_norm(t.row(i), cfg.energy_p)).collect::<Result<Vec<_>>>()?;
    let plane = t.plane();
    let count = (wr * wc) as f64;
    let mut v = Vec::with_capacity(t.len());
    for r in 0..plane.rows {
        for c in 0..plane.cols {
            let mut acc = 0.0;
            for dr in 0..wr {
                for dc in 0..wc {
                    acc += norms[plane.wrap((r + dr) as i64, (c + dc) as i64)];
                }
            }
            v.push(acc / count);
        }
    }
    Ok(v)
}

/// Offset of the window partition whose energies score highest; the energies
/// of partition `m` are `v[W k + m]`.
pub fn select_window_offset(t: &TokenMatrix, cfg: &WindowConfig) -> Result<Selection> {
    let v = window_energy(t, cfg)?;
    let (wr, wc) = cfg.factors(t)?;
    let plane = t.plane();
    let mut candidates = Vec::with_capacity(wr * wc);
    let mut scores = Vec::with_capacity(wr * wc);
    for mr in 0..wr {
        for mc in 0..wc {
            let mut part = Vec::with_capacity(plane.len() / (wr * wc));
            for kr in 0..plane.rows / wr {
                for kc in 0..plane.cols / wc {
                    part.push(v[plane.wrap((wr * kr + mr) as i64, (wc * kc + mc) as i64)]);
                }
            }
            scores.push(cfg.score.evaluate(&part));
            candidates.push(if t.rank() == 1 { vec![mc] } else { vec![mr, mc] });
        }
    }
    let (best, tied) = argmax_with_ties(&scores)?;
    Ok(Selection { offset: candidates.swap_remove(best), tied })
}

/// Window attention on the partition chosen by [`select_window_offset`].
/// The output stays in the rotated frame: row `k` belongs to input row `k + m*`.
pub fn a_wsa(
    t: &TokenMatrix,
    cfg: &WindowConfig,
    params: &AttentionParams,
    rpe: &RpeTable,
) -> Result<(TokenMatrix, Selection)> {
    let sel = select_window_offset(t, cfg)?;
    let rotated = t.shift_rows(&OffsetVector::from(sel.offset.as_slice()))?;
    Ok((wsa(&rotated, cfg, params, rpe)?, sel))
}

/// Self-attention run independently on each non-overlapping `W` block, with
/// one bias table shared by all windows.
pub fn wsa(t: &TokenMatrix, cfg: &WindowConfig, params: &AttentionParams, rpe: &RpeTable) -> Result<TokenMatrix> {
    let (wr, wc) = cfg.factors(t)?;
    let window_grid = cfg.window_grid(t.rank());
    let bias = rpe.bias_matrix(&window_grid)?;
    let plane = t.plane();
    let d_out = params.output_dim();
    let mut out = vec![0.0; t.len() * d_out];
    for br in 0..plane.rows / wr {
        for bc in 0..plane.cols / wc {
            let members: Vec<usize> =
                (0..wr).flat_map(|dr| (0..wc).map(move |dc| (br * wr + dr) * plane.cols + bc * wc + dc)).collect();
            let data = members.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
            let block = TokenMatrix::from_parts(window_grid.clone(), members.len(), t.dim(), data);
            let y = attend(&block, params, bias.as_ref())?;
            for (slot, &i) in members.iter().enumerate() {
                out[i * d_out..(i + 1) * d_out].copy_from_slice(y.row(slot));
            }
        }
    }
    Ok(TokenMatrix::from_parts(t.grid().to_vec(), t.len(), d_out, out))
}
