//! Tiny classifier and encoder-decoder assembled from the adaptive layers.
//!
//! Encoder: tokenizer, then per stage window attention, an optional global
//! attention over the whole stage grid, and patch merging. The classifier
//! averages the final tokens and applies a linear head. The decoder walks
//! the stages backwards, scattering features at the recorded merge phases
//! and undoing window rotations, then spreads each token over its input
//! patch and applies the head per position.
//!
//! Every adaptive layer has a switch; with a switch off the fixed-grid
//! layer (or the signed-distance position bias) is used instead.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{a_wsa, sa, wsa, AttentionParams, RpeKind, RpeTable, WindowConfig, WindowScore};
use crate::error::{shape_err, Error, Result};
use crate::merging::{a_pmerge, pmerge, unpool, MergeConfig};
use crate::numerics::{argmax_tiebreak, plane_factor, GridSignal, Matrix, OffsetVector, Plane};
use crate::tokenizer::{a_token, token, PatchEmbedConfig, TokenMatrix, TokenScore};
use crate::trace::{SelectionKind, SelectionTrace};

/// One adaptive layer that can be swapped for its fixed-grid baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    AToken,
    AWsa,
    APmerge,
    AdaptiveRpe,
}

impl Switch {
    pub const ALL: [Switch; 4] = [Switch::AToken, Switch::AWsa, Switch::APmerge, Switch::AdaptiveRpe];

    pub fn name(self) -> &'static str {
        match self {
            Switch::AToken => "a_token",
            Switch::AWsa => "a_wsa",
            Switch::APmerge => "a_pmerge",
            Switch::AdaptiveRpe => "adaptive_rpe",
        }
    }
}

impl fmt::Display for Switch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Switch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Switch::ALL.into_iter().find(|sw| sw.name() == s).ok_or_else(|| Error::Config(format!("unknown switch `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switches {
    pub a_token: bool,
    pub a_wsa: bool,
    pub a_pmerge: bool,
    pub adaptive_rpe: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Self::all_on()
    }
}

impl Switches {
    pub fn all_on() -> Self {
        Self { a_token: true, a_wsa: true, a_pmerge: true, adaptive_rpe: true }
    }

    /// Every layer on its fixed grid.
    pub fn baseline() -> Self {
        Self { a_token: false, a_wsa: false, a_pmerge: false, adaptive_rpe: false }
    }

    pub fn get(&self, sw: Switch) -> bool {
        match sw {
            Switch::AToken => self.a_token,
            Switch::AWsa => self.a_wsa,
            Switch::APmerge => self.a_pmerge,
            Switch::AdaptiveRpe => self.adaptive_rpe,
        }
    }

    pub fn set(&mut self, sw: Switch, on: bool) {
        match sw {
            Switch::AToken => self.a_token = on,
            Switch::AWsa => self.a_wsa = on,
            Switch::APmerge => self.a_pmerge = on,
            Switch::AdaptiveRpe => self.adaptive_rpe = on,
        }
    }

    pub fn without(mut self, sw: Switch) -> Self {
        self.set(sw, false);
        self
    }

    pub fn fully_adaptive(&self) -> bool {
        Switch::ALL.into_iter().all(|sw| self.get(sw))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    /// Window length `W` per grid axis.
    pub window: usize,
    /// Merge factor `P` per grid axis.
    pub merge: usize,
    /// Attention output dimension `D'`.
    pub attn_dim: usize,
    /// Merged token dimension.
    pub out_dim: usize,
}

fn default_true() -> bool {
    true
}

fn default_p() -> f64 {
    2.0
}

/// Model description. The input rank is the length of `input_shape`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_shape: Vec<usize>,
    pub channels: usize,
    /// Patch length `L` per axis.
    pub patch: usize,
    pub embed_dim: usize,
    pub stages: Vec<StageConfig>,
    pub num_classes: usize,
    /// Add a relative position bias to every attention.
    #[serde(default = "default_true")]
    pub rpe: bool,
    /// Follow the window attention of each stage with attention over the
    /// whole stage grid.
    #[serde(default = "default_true")]
    pub global_attention: bool,
    #[serde(default)]
    pub token_score: TokenScore,
    #[serde(default)]
    pub window_score: WindowScore,
    /// `p` used by window energies and polyphase selection.
    #[serde(default = "default_p")]
    pub energy_p: f64,
    #[serde(default)]
    pub switches: Switches,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    /// 96 samples x 2 channels, two stages of window 3 and merge 2. The
    /// window is not a multiple of the merge factor, otherwise fixed merging
    /// after window alignment would already be equivariant.
    pub fn rank1_default() -> Self {
        Self {
            input_shape: vec![96],
            channels: 2,
            patch: 4,
            embed_dim: 8,
            stages: vec![
                StageConfig { window: 3, merge: 2, attn_dim: 8, out_dim: 16 },
                StageConfig { window: 3, merge: 2, attn_dim: 16, out_dim: 16 },
            ],
            num_classes: 4,
            rpe: true,
            global_attention: true,
            token_score: TokenScore::SumL2,
            window_score: WindowScore::Max,
            energy_p: 2.0,
            switches: Switches::all_on(),
            seed: 0,
        }
    }

    /// 48x48 pixels x 3 channels with the rank-1 stages.
    pub fn rank2_default() -> Self {
        Self { input_shape: vec![48, 48], channels: 3, ..Self::rank1_default() }
    }

    pub fn rank(&self) -> usize {
        self.input_shape.len()
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_switches(mut self, switches: Switches) -> Self {
        self.switches = switches;
        self
    }

    /// Token grid entering each stage, followed by the final grid.
    pub fn stage_grids(&self) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        Ok(self.grids())
    }

    fn grids(&self) -> Vec<Vec<usize>> {
        let mut grid: Vec<usize> = self.input_shape.iter().map(|n| n / self.patch).collect();
        let mut out = vec![grid.clone()];
        for s in &self.stages {
            grid = grid.iter().map(|g| g / s.merge).collect();
            out.push(grid.clone());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.input_shape.is_empty() || self.input_shape.len() > 2 {
            return bad(format!("input rank must be 1 or 2, got {:?}", self.input_shape));
        }
        if self.input_shape.contains(&0) {
            return bad("input axes must be non-empty".into());
        }
        if self.channels == 0 || self.embed_dim == 0 || self.num_classes == 0 {
            return bad("channels, embed_dim and num_classes must be positive".into());
        }
        if self.patch == 0 || self.input_shape.iter().any(|n| n % self.patch != 0) {
            return bad(format!("input {:?} is not divisible by patch {}", self.input_shape, self.patch));
        }
        if self.energy_p.is_nan() || self.energy_p < 1.0 {
            return bad(format!("energy_p must be >= 1, got {}", self.energy_p));
        }
        let mut grid: Vec<usize> = self.input_shape.iter().map(|n| n / self.patch).collect();
        for (i, s) in self.stages.iter().enumerate() {
            if s.window == 0 || s.merge == 0 || s.attn_dim == 0 || s.out_dim == 0 {
                return bad(format!("stage {} has a zero size", i + 1));
            }
            if grid.iter().any(|g| g % s.window != 0 || g % s.merge != 0) {
                return bad(format!(
                    "stage {} grid {grid:?} is not divisible by window {} and merge {}",
                    i + 1,
                    s.window,
                    s.merge
                ));
            }
            grid = grid.iter().map(|g| g / s.merge).collect();
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageWeights {
    pub window_attn: AttentionParams,
    /// Signed-distance and circular-distance tables for the window grid.
    pub window_bias: [Vec<f64>; 2],
    pub global_attn: Option<AttentionParams>,
    pub global_bias: [Vec<f64>; 2],
    pub merge: Matrix,
}

/// All parameters, drawn i.i.d. from U[-0.5, 0.5] with ChaCha8 seeded by the
/// config seed. The draw order does not depend on the switches, so an
/// ablated model shares every weight with its fully adaptive twin.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub embed: Matrix,
    pub stages: Vec<StageWeights>,
    pub head: Matrix,
}

struct Draw {
    rng: ChaCha8Rng,
    dist: Uniform<f64>,
}

impl Draw {
    fn vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.dist.sample(&mut self.rng)).collect()
    }

    fn matrix(&mut self, r: usize, c: usize) -> Matrix {
        Matrix::from_raw(r, c, self.vec(r * c))
    }

    fn attention(&mut self, d: usize, dp: usize) -> AttentionParams {
        let (q, k, v) = (self.matrix(d, dp), self.matrix(d, dp), self.matrix(d, dp));
        AttentionParams::new(q, k, v).expect("projections share a shape")
    }

    fn tables(&mut self, grid: &[usize]) -> [Vec<f64>; 2] {
        [
            self.vec(RpeTable::required_len(RpeKind::Original, grid)),
            self.vec(RpeTable::required_len(RpeKind::Adaptive, grid)),
        ]
    }
}

pub fn build_model(cfg: &ModelConfig) -> Result<ModelWeights> {
    cfg.validate()?;
    let rank = cfg.rank();
    let mut draw = Draw { rng: ChaCha8Rng::seed_from_u64(cfg.seed), dist: Uniform::new_inclusive(-0.5, 0.5) };
    let embed = draw.matrix(cfg.patch.pow(rank as u32) * cfg.channels, cfg.embed_dim);
    let grids = cfg.grids();
    let mut dim = cfg.embed_dim;
    let mut stages = Vec::with_capacity(cfg.depth());
    for (s, grid) in cfg.stages.iter().zip(&grids) {
        let window_attn = draw.attention(dim, s.attn_dim);
        let window_bias = draw.tables(&vec![s.window; rank]);
        let (global_attn, global_bias) = if cfg.global_attention {
            (Some(draw.attention(s.attn_dim, s.attn_dim)), draw.tables(grid))
        } else {
            (None, [Vec::new(), Vec::new()])
        };
        let merge = draw.matrix(s.merge.pow(rank as u32) * s.attn_dim, s.out_dim);
        stages.push(StageWeights { window_attn, window_bias, global_attn, global_bias, merge });
        dim = s.out_dim;
    }
    let head = draw.matrix(dim, cfg.num_classes);
    Ok(ModelWeights { embed, stages, head })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub logits: Vec<f64>,
    pub label: usize,
    pub trace: SelectionTrace,
}

/// Per-position output of the encoder-decoder on the input grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    /// One channel per class.
    pub map: GridSignal,
    pub trace: SelectionTrace,
}

impl Segmentation {
    /// Lowest-index argmax over the class channels at every position.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.map.positions()).map(|p| argmax_tiebreak(self.map.position(p)).expect("num_classes >= 1")).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    weights: ModelWeights,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let weights = build_model(&config)?;
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    fn bias_table(&self, tables: &[Vec<f64>; 2]) -> RpeTable {
        if !self.config.rpe {
            RpeTable::none()
        } else if self.config.switches.adaptive_rpe {
            RpeTable::adaptive(tables[1].clone()).expect("finite draws")
        } else {
            RpeTable::original(tables[0].clone()).expect("finite draws")
        }
    }

    fn check_input(&self, x: &GridSignal) -> Result<()> {
        if x.shape() != self.config.input_shape.as_slice() || x.channels() != self.config.channels {
            return shape_err(format!(
                "model expects {:?} x {}, got {:?} x {}",
                self.config.input_shape,
                self.config.channels,
                x.shape(),
                x.channels()
            ));
        }
        Ok(())
    }

    /// Runs the encoder and returns the final tokens with the selection trace.
    pub fn encode(&self, x: &GridSignal) -> Result<(TokenMatrix, SelectionTrace)> {
        self.check_input(x)?;
        let cfg = &self.config;
        let sw = cfg.switches;
        let mut trace = SelectionTrace::new();
        let embed = PatchEmbedConfig::new(cfg.patch, self.weights.embed.clone(), cfg.token_score)?;
        let mut t = if sw.a_token {
            let (t, sel) = a_token(x, &embed)?;
            trace.push(0, SelectionKind::Token, sel);
            t
        } else {
            token(x, &embed)?
        };
        for (i, (sc, w)) in cfg.stages.iter().zip(&self.weights.stages).enumerate() {
            let stage = i + 1;
            let window = WindowConfig { window: sc.window, energy_p: cfg.energy_p, score: cfg.window_score };
            let window_rpe = self.bias_table(&w.window_bias);
            t = if sw.a_wsa {
                let (t, sel) = a_wsa(&t, &window, &w.window_attn, &window_rpe)?;
                trace.push(stage, SelectionKind::Window, sel);
                t
            } else {
                wsa(&t, &window, &w.window_attn, &window_rpe)?
            };
            if let Some(global) = &w.global_attn {
                t = sa(&t, global, &self.bias_table(&w.global_bias))?;
            }
            let merge = MergeConfig { factor: sc.merge, merge: w.merge.clone(), energy_p: cfg.energy_p };
            t = if sw.a_pmerge {
                let (t, sel) = a_pmerge(&t, &merge)?;
                trace.push(stage, SelectionKind::Merge, sel);
                t
            } else {
                pmerge(&t, &merge)?
            };
        }
        Ok((t, trace))
    }

    fn head(&self, features: &[f64]) -> Vec<f64> {
        let head = &self.weights.head;
        (0..head.cols()).map(|k| features.iter().enumerate().map(|(j, f)| f * head.get(j, k)).sum()).collect()
    }

    /// Global average pool over the final token grid, then the linear head.
    pub fn classify(&self, x: &GridSignal) -> Result<Classification> {
        let (t, trace) = self.encode(x)?;
        let d = t.dim();
        let mut pooled = vec![0.0; d];
        for i in 0..t.len() {
            for (p, v) in pooled.iter_mut().zip(t.row(i)) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= t.len() as f64);
        let logits = self.head(&pooled);
        let label = argmax_tiebreak(&logits)?;
        Ok(Classification { logits, label, trace })
    }

    /// Encoder features carried back to input resolution through the trace,
    /// before the head. Positions never selected by a merge stay zero.
    pub fn decode_features(&self, x: &GridSignal) -> Result<(GridSignal, SelectionTrace)> {
        let (mut u, trace) = self.encode(x)?;
        let cfg = &self.config;
        let rank = cfg.rank();
        let grids = cfg.grids();
        for (i, sc) in cfg.stages.iter().enumerate().rev() {
            let stage = i + 1;
            let phase = trace.find(stage, SelectionKind::Merge).map_or_else(|| vec![0; rank], |e| e.offset.clone());
            u = unpool(&u, &phase, sc.merge, &grids[i])?;
            if let Some(w) = trace.find(stage, SelectionKind::Window) {
                u = u.shift_rows(&-&OffsetVector::from(w.offset.as_slice()))?;
            }
        }
        let m = trace.find(0, SelectionKind::Token).map_or_else(|| vec![0; rank], |e| e.offset.clone());
        let (mr, mc) = OffsetVector::from(m.as_slice()).plane();
        let (lr, lc) = plane_factor(rank, cfg.patch);
        let plane = Plane::of(&cfg.input_shape);
        let gp = Plane::of(&grids[0]);
        let d = u.dim();
        let mut out = vec![0.0; plane.len() * d];
        for kr in 0..gp.rows {
            for kc in 0..gp.cols {
                let feature = u.row(kr * gp.cols + kc);
                for dr in 0..lr {
                    for dc in 0..lc {
                        let pos = plane.wrap((kr * lr + dr) as i64 + mr, (kc * lc + dc) as i64 + mc);
                        out[pos * d..(pos + 1) * d].copy_from_slice(feature);
                    }
                }
            }
        }
        Ok((GridSignal::new(cfg.input_shape.clone(), d, out)?, trace))
    }

    /// Per-position class scores on the input grid.
    pub fn encode_decode(&self, x: &GridSignal) -> Result<Segmentation> {
        let (features, trace) = self.decode_features(x)?;
        let classes = self.config.num_classes;
        let mut map = Vec::with_capacity(features.positions() * classes);
        for p in 0..features.positions() {
            map.extend(self.head(features.position(p)));
        }
        let map = GridSignal::new(self.config.input_shape.clone(), classes, map)?;
        Ok(Segmentation { map, trace })
    }
}
