//! Patch embedding on a fixed grid (`token`) and on the highest-scoring
//! grid offset (`a_token`).

use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::numerics::{
    argmax_with_ties, circular_shift, lp_norm, plane_factor, sorted_sum, validate_shape, GridSignal, Matrix,
    OffsetVector, Plane,
};
use crate::trace::Selection;

/// `M` tokens of dimension `D` laid out row-major on a token grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenMatrix {
    grid: Vec<usize>,
    tokens: Matrix,
}

impl TokenMatrix {
    pub fn new(grid: Vec<usize>, tokens: Matrix) -> Result<Self> {
        validate_shape(&grid)?;
        let m: usize = grid.iter().product();
        if tokens.rows() != m {
            return shape_err(format!("token grid {grid:?} holds {m} tokens, matrix has {} rows", tokens.rows()));
        }
        Ok(Self { grid, tokens })
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.grid.len()
    }

    /// Number of tokens `M`.
    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    /// Token dimension `D`.
    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.tokens.row(i)
    }

    /// Circular shift along the token grid: row `k` of the result is row
    /// `k + off` of `self`, per grid axis.
    pub fn shift_rows(&self, off: &OffsetVector) -> Result<TokenMatrix> {
        let s = circular_shift(&self.to_signal(), off)?;
        Ok(Self::from_signal(s))
    }

    /// Same storage viewed as a grid signal with `D` channels.
    pub fn to_signal(&self) -> GridSignal {
        GridSignal::from_raw(self.grid.clone(), self.dim(), self.tokens.data().to_vec())
    }

    pub fn from_signal(s: GridSignal) -> TokenMatrix {
        let grid = s.shape().to_vec();
        let (rows, cols) = (s.positions(), s.channels());
        TokenMatrix { grid, tokens: Matrix::from_raw(rows, cols, s.into_data()) }
    }

    pub fn max_abs_diff(&self, other: &TokenMatrix) -> f64 {
        if self.grid != other.grid {
            return f64::INFINITY;
        }
        self.tokens.max_abs_diff(&other.tokens)
    }

    pub(crate) fn plane(&self) -> Plane {
        Plane::of(&self.grid)
    }

    pub(crate) fn from_parts(grid: Vec<usize>, rows: usize, cols: usize, data: Vec<f64>) -> Self {
        TokenMatrix { grid, tokens: Matrix::from_raw(rows, cols, data) }
    }
}

/// Shift-invariant score over a whole token group, maximised by `a_token`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenScore {
    /// Sum of per-token l2 norms.
    #[default]
    SumL2,
    /// Largest per-token l2 norm.
    MaxL2,
    /// Sum of per-token l1 norms.
    SumL1,
}

impl TokenScore {
    /// The result depends only on the multiset of token rows, so any row
    /// permutation (in particular any grid rotation) leaves it bit-identical.
    pub fn evaluate(self, t: &TokenMatrix) -> f64 {
        let rows = (0..t.len()).map(|i| t.row(i));
        match self {
            TokenScore::SumL2 => sorted_sum(rows.map(l2)),
            TokenScore::MaxL2 => rows.map(l2).fold(f64::NEG_INFINITY, f64::max),
            TokenScore::SumL1 => sorted_sum(rows.map(|r| r.iter().map(|v| v.abs()).sum())),
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    lp_norm(v, 2.0).expect("p = 2 is valid")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbedConfig {
    /// Patch length `L` on every axis.
    pub patch: usize,
    /// Embedding `E` with `L^rank * C` rows and `D` columns.
    pub embed: Matrix,
    pub score: TokenScore,
}

impl PatchEmbedConfig {
    pub fn new(patch: usize, embed: Matrix, score: TokenScore) -> Result<Self> {
        if patch == 0 {
            return param_err("patch length must be at least 1");
        }
        Ok(Self { patch, embed, score })
    }

    fn check_input(&self, x: &GridSignal) -> Result<()> {
        let want = self.patch.pow(x.rank() as u32) * x.channels();
        if self.embed.rows() != want {
            return shape_err(format!(
                "embedding has {} input rows, patches of length {} over {} channels need {want}",
                self.embed.rows(),
                self.patch,
                x.channels()
            ));
        }
        Ok(())
    }
}

/// Token-grid shape produced by patches of length `patch` over `shape`.
pub fn token_grid(shape: &[usize], patch: usize) -> Result<Vec<usize>> {
    validate_shape(shape)?;
    if patch == 0 {
        return param_err("patch length must be at least 1");
    }
    if let Some(n) = shape.iter().find(|&&n| n % patch != 0) {
        return shape_err(format!("axis length {n} is not divisible by patch length {patch}"));
    }
    Ok(shape.iter().map(|n| n / patch).collect())
}

/// Row `k` is the `k`-th non-overlapping patch of `x` shifted by `m`,
/// flattened row-major over (patch row, patch column, channel).
pub fn reshape_patches(x: &GridSignal, patch: usize, m: &OffsetVector) -> Result<Matrix> {
    let grid = token_grid(x.shape(), patch)?;
    if m.rank() != x.rank() {
        return shape_err("offset rank does not match signal rank");
    }
    if m.as_slice().iter().any(|&o| o < 0 || o >= patch as i64) {
        return param_err(format!("patch offsets must lie in [0, {patch}), got {:?}", m.as_slice()));
    }
    let plane = x.plane();
    let gp = Plane::of(&grid);
    let (lr, lc) = plane_factor(x.rank(), patch);
    let (mr, mc) = m.plane();
    let width = lr * lc * x.channels();
    let mut out = Vec::with_capacity(gp.len() * width);
    for pr in 0..gp.rows {
        for pc in 0..gp.cols {
            for dr in 0..lr {
                for dc in 0..lc {
                    let pos = plane.wrap((pr * lr + dr) as i64 + mr, (pc * lc + dc) as i64 + mc);
                    out.extend_from_slice(x.position(pos));
                }
            }
        }
    }
    Ok(Matrix::from_raw(gp.len(), width, out))
}

fn embed_at(x: &GridSignal, cfg: &PatchEmbedConfig, m: &OffsetVector) -> Result<TokenMatrix> {
    let grid = token_grid(x.shape(), cfg.patch)?;
    let tokens = reshape_patches(x, cfg.patch, m)?.matmul(&cfg.embed)?;
    TokenMatrix::new(grid, tokens)
}

/// Fixed-grid patch embedding.
pub fn token(x: &GridSignal, cfg: &PatchEmbedConfig) -> Result<TokenMatrix> {
    cfg.check_input(x)?;
    embed_at(x, cfg, &OffsetVector::zeros(x.rank()))
}

/// Offsets in `[0, L)` per axis, row-major.
fn offset_candidates(rank: usize, l: usize) -> Vec<Vec<usize>> {
    if rank == 1 {
        (0..l).map(|m| vec![m]).collect()
    } else {
        (0..l).flat_map(|r| (0..l).map(move |c| vec![r, c])).collect()
    }
}

/// Patch embedding at the grid offset whose tokens maximise the configured
/// score. Ties go to the lowest offset and are flagged.
pub fn a_token(x: &GridSignal, cfg: &PatchEmbedConfig) -> Result<(TokenMatrix, Selection)> {
    cfg.check_input(x)?;
    let candidates = offset_candidates(x.rank(), cfg.patch);
    let groups =
        candidates.iter().map(|m| embed_at(x, cfg, &OffsetVector::from(m.as_slice()))).collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = groups.iter().map(|t| cfg.score.evaluate(t)).collect();
    let (best, tied) = argmax_with_ties(&scores)?;
    let tokens = groups.into_iter().nth(best).expect("index from argmax");
    Ok((tokens, Selection { offset: candidates[best].clone(), tied }))
}

/// Checks `tokens(S x, m) == S^{(m+1) div L} tokens(x, (m+1) mod L)` with a
/// unit shift on every axis, by exact comparison.
pub fn lemma1_oracle(x: &GridSignal, cfg: &PatchEmbedConfig, m: &OffsetVector) -> Result<bool> {
    Ok(lemma1_divergence(x, cfg, m)? == 0.0)
}

/// Max-abs difference between the two sides of [`lemma1_oracle`].
pub fn lemma1_divergence(x: &GridSignal, cfg: &PatchEmbedConfig, m: &OffsetVector) -> Result<f64> {
    cfg.check_input(x)?;
    let l = cfg.patch as i64;
    let shifted = circular_shift(x, &OffsetVector::splat(x.rank(), 1))?;
    let lhs = embed_at(&shifted, cfg, m)?;
    let next: Vec<i64> = m.as_slice().iter().map(|o| o + 1).collect();
    let rem = OffsetVector::new(next.iter().map(|o| o % l).collect());
    let quo = OffsetVector::new(next.iter().map(|o| o / l).collect());
    let rhs = embed_at(x, cfg, &rem)?.shift_rows(&quo)?;
    Ok(lhs.max_abs_diff(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::best_alignment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(v: &[f64]) -> GridSignal {
        GridSignal::from_vec(v.to_vec()).unwrap()
    }

    fn first_elem_cfg() -> PatchEmbedConfig {
        PatchEmbedConfig::new(2, Matrix::new(2, 1, vec![1.0, 0.0]).unwrap(), TokenScore::SumL2).unwrap()
    }

    fn random_cfg(rng: &mut ChaCha8Rng, patch: usize, rank: usize, c: usize, d: usize) -> PatchEmbedConfig {
        let rows = patch.pow(rank as u32) * c;
        let e = (0..rows * d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        PatchEmbedConfig::new(patch, Matrix::new(rows, d, e).unwrap(), TokenScore::SumL2).unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, shape: Vec<usize>, c: usize) -> GridSignal {
        let n = shape.iter().product::<usize>() * c;
        GridSignal::new(shape, c, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn reshape_examples() {
        let x = sig(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r0 = reshape_patches(&x, 2, &OffsetVector::new(vec![0])).unwrap();
        assert_eq!(r0.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!((r0.rows(), r0.cols()), (3, 2));
        let r1 = reshape_patches(&x, 2, &OffsetVector::new(vec![1])).unwrap();
        assert_eq!(r1.data(), &[2.0, 3.0, 4.0, 5.0, 6.0, 1.0]);
        let r = reshape_patches(&x, 1, &OffsetVector::new(vec![0])).unwrap();
        assert_eq!(r.rows(), 6);
    }

    #[test]
    fn reshape_rank2_multichannel_order() {
        // 2x4 grid, 2 channels, value = 10*pos + ch
        let data: Vec<f64> = (0..8).flat_map(|p| [10.0 * p as f64, 10.0 * p as f64 + 1.0]).collect();
        let x = GridSignal::new(vec![2, 4], 2, data).unwrap();
        let r = reshape_patches(&x, 2, &OffsetVector::new(vec![0, 1])).unwrap();
        assert_eq!((r.rows(), r.cols()), (2, 8));
        // patch 0 covers rows 0..2, cols 1..3
        assert_eq!(r.row(0), &[10.0, 11.0, 20.0, 21.0, 50.0, 51.0, 60.0, 61.0]);
        // patch 1 wraps: cols 3, 0
        assert_eq!(r.row(1), &[30.0, 31.0, 0.0, 1.0, 70.0, 71.0, 40.0, 41.0]);
    }

    #[test]
    fn reshape_errors() {
        let x = sig(&[1.0, 2.0, 3.0]);
        assert!(reshape_patches(&x, 2, &OffsetVector::new(vec![0])).is_err());
        let x = sig(&[1.0, 2.0, 3.0, 4.0]);
        assert!(reshape_patches(&x, 2, &OffsetVector::new(vec![2])).is_err());
    }

    #[test]
    fn token_examples() {
        let ident = PatchEmbedConfig::new(2, Matrix::identity(2), TokenScore::SumL2).unwrap();
        let t = token(&sig(&[1.0, 2.0, 3.0, 4.0]), &ident).unwrap();
        assert_eq!(t.tokens().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.grid(), &[2]);
        let t = token(&sig(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), &first_elem_cfg()).unwrap();
        assert_eq!(t.tokens().data(), &[1.0, 3.0, 5.0]);
        let t = token(&sig(&[0.0; 6]), &first_elem_cfg()).unwrap();
        assert!(t.tokens().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn token_rejects_wrong_embedding() {
        let cfg = PatchEmbedConfig::new(2, Matrix::identity(3), TokenScore::SumL2).unwrap();
        assert!(token(&sig(&[1.0, 2.0, 3.0, 4.0]), &cfg).is_err());
    }

    #[test]
    fn a_token_examples() {
        let cfg = first_elem_cfg();
        let (t, sel) = a_token(&sig(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), &cfg).unwrap();
        assert_eq!(sel, Selection { offset: vec![1], tied: false });
        assert_eq!(t.tokens().data(), &[2.0, 4.0, 6.0]);

        let (th, selh) = a_token(&sig(&[2.0, 3.0, 4.0, 5.0, 6.0, 1.0]), &cfg).unwrap();
        assert_eq!(selh.offset, vec![0]);
        // m* = (m_hat + 1) mod L and the token shift is (m_hat + 1) div L = 0
        assert_eq!((selh.offset[0] + 1) % 2, sel.offset[0]);
        assert_eq!(th, t);

        let (_, sel) = a_token(&sig(&[3.0; 6]), &cfg).unwrap();
        assert_eq!(sel, Selection { offset: vec![0], tied: true });
    }

    #[test]
    fn lemma1_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (n, l, m) in [(8, 2, 1), (12, 3, 2), (5, 1, 0)] {
            let cfg = random_cfg(&mut rng, l, 1, 1, 3);
            let x = random_signal(&mut rng, vec![n], 1);
            assert!(lemma1_oracle(&x, &cfg, &OffsetVector::new(vec![m])).unwrap());
        }
        let cfg = random_cfg(&mut rng, 2, 2, 3, 4);
        let x = random_signal(&mut rng, vec![6, 4], 3);
        for m in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            assert!(lemma1_oracle(&x, &cfg, &OffsetVector::new(m.to_vec())).unwrap());
        }
    }

    #[test]
    fn scores_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for rank in [1, 2] {
            let grid = if rank == 1 { vec![12] } else { vec![4, 3] };
            let t = TokenMatrix::from_signal(random_signal(&mut rng, grid.clone(), 5));
            for r in 0..12i64 {
                let off = OffsetVector::new(vec![r, r / 2][..rank].to_vec());
                let rot = t.shift_rows(&off).unwrap();
                for f in [TokenScore::SumL2, TokenScore::MaxL2, TokenScore::SumL1] {
                    assert_eq!(f.evaluate(&t).to_bits(), f.evaluate(&rot).to_bits());
                }
            }
        }
    }

    #[test]
    fn a_token_equivariant_rank2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = random_cfg(&mut rng, 4, 2, 3, 6);
        for _ in 0..20 {
            let x = random_signal(&mut rng, vec![16, 8], 3);
            let (t, s0) = a_token(&x, &cfg).unwrap();
            let off = OffsetVector::new(vec![rng.gen_range(0..16), rng.gen_range(0..8)]);
            let (ts, s1) = a_token(&circular_shift(&x, &off).unwrap(), &cfg).unwrap();
            assert!(!s0.tied && !s1.tied);
            assert_eq!(best_alignment(&t, &ts, 1).divergence, 0.0);
        }
    }

    #[test]
    fn fixed_token_is_not_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = random_cfg(&mut rng, 4, 1, 2, 8);
        let x = random_signal(&mut rng, vec![32], 2);
        let t = token(&x, &cfg).unwrap();
        for s in 1..4 {
            let ts = token(&circular_shift(&x, &OffsetVector::new(vec![s])).unwrap(), &cfg).unwrap();
            assert!(best_alignment(&t, &ts, 1).divergence > 1e-6);
        }
        // multiples of L are fine
        let ts = token(&circular_shift(&x, &OffsetVector::new(vec![8])).unwrap(), &cfg).unwrap();
        assert_eq!(best_alignment(&t, &ts, 1).divergence, 0.0);
    }
}
