use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Counterexample, ReportBuilder};
use super::{ProveConfig, SuiteConfig, SuiteName};
use crate::align::{best_alignment, rotations};
use crate::attention::{a_wsa, sa, AttentionParams, RpeKind, RpeTable, WindowConfig};
use crate::error::{Error, Result};
use crate::merging::{a_pmerge, pmerge, pmerge_conv_fullrate, polyphase_component, MergeConfig};
use crate::metrics::{
    c_cons, channel_argmax, mascc, s_cons_zeropad, structured_inputs, synthetic_input, synthetic_inputs,
    ConsistencyReport, InputKind, MetricKind, ShiftSampler, TrialRecord,
};
use crate::numerics::{circular_shift, max_abs_diff, GridSignal, Matrix, OffsetVector};
use crate::pipeline::{Model, ModelConfig, Switch, Switches};
use crate::tokenizer::{a_token, lemma1_divergence, PatchEmbedConfig, TokenMatrix, TokenScore};
use crate::trace::{Selection, SelectionEntry, SelectionKind};

/// Every property the suites check or search for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    /// Shifting the input by one sample moves the patch offset by one and
    /// wraps into a token rotation.
    Lemma1,
    /// Adaptive tokenization of a shifted input is a rotation of the original.
    TokenEquivariance,
    /// Adaptive window attention of rotated tokens is a rotation of the
    /// original by a multiple of the window.
    WindowEquivariance,
    /// Patch merging equals the phase-0 subsample of its full-rate
    /// convolution form.
    MergeConvEquivalence,
    /// Adaptive patch merging of rotated tokens is a rotation of the original.
    MergeEquivariance,
    /// Fixed patch merging of unit-rotated tokens matches no rotation.
    MergeBreaks,
    /// Attention with the circular-distance bias commutes with rotation.
    AdaptiveRpeCommutes,
    /// Attention with the signed-distance bias does not.
    OriginalRpeBreaks,
    /// Classifier logits agree under two circular shifts of the input.
    End2endInvariance,
    /// Encoder-decoder maps agree after shifting each back.
    End2endEquivariance,
    /// A model with one adaptive switch off changes its logits under shift.
    AblationBreaks,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Lemma1 => "lemma1",
            Property::TokenEquivariance => "token_equivariance",
            Property::WindowEquivariance => "window_equivariance",
            Property::MergeConvEquivalence => "merge_conv_equivalence",
            Property::MergeEquivariance => "merge_equivariance",
            Property::MergeBreaks => "merge_breaks",
            Property::AdaptiveRpeCommutes => "adaptive_rpe_commutes",
            Property::OriginalRpeBreaks => "original_rpe_breaks",
            Property::End2endInvariance => "end2end_invariance",
            Property::End2endEquivariance => "end2end_equivariance",
            Property::AblationBreaks => "ablation_breaks",
        }
    }

    fn id(self) -> u64 {
        match self {
            Property::Lemma1 => 1,
            Property::TokenEquivariance => 2,
            Property::WindowEquivariance => 3,
            Property::MergeConvEquivalence => 4,
            Property::MergeEquivariance => 5,
            Property::MergeBreaks => 6,
            Property::AdaptiveRpeCommutes => 7,
            Property::OriginalRpeBreaks => 8,
            Property::End2endInvariance => 9,
            Property::End2endEquivariance => 10,
            Property::AblationBreaks => 11,
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Property::Lemma1 | Property::TokenEquivariance => 0.0,
            Property::End2endInvariance | Property::End2endEquivariance | Property::AblationBreaks => 1e-9,
            _ => 1e-12,
        }
    }

    /// Searches succeed by finding a divergence above tolerance.
    pub fn is_search(self) -> bool {
        matches!(self, Property::MergeBreaks | Property::OriginalRpeBreaks | Property::AblationBreaks)
    }

    pub fn uses_model(self) -> bool {
        matches!(self, Property::End2endInvariance | Property::End2endEquivariance | Property::AblationBreaks)
    }
}

/// Operator sizes of a primitive trial. `channels` is the input feature
/// count and `dim` the output feature count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    pub shape: Vec<usize>,
    pub factor: usize,
    pub channels: usize,
    pub dim: usize,
}

impl Sizes {
    fn rank(&self) -> usize {
        self.shape.len()
    }
}

pub(crate) struct Outcome {
    pub seed: u64,
    pub trial: u64,
    pub sizes: Option<Sizes>,
    pub model: Option<ModelConfig>,
    pub input: GridSignal,
    pub shifts: Vec<OffsetVector>,
    pub offsets: Vec<SelectionEntry>,
    pub divergence: f64,
    pub tied: bool,
    /// Label agreement of model trials.
    pub agreement: Option<f64>,
}

impl Outcome {
    pub fn into_counterexample(self, suite: SuiteName, property: Property) -> Counterexample {
        Counterexample {
            suite,
            property,
            seed: self.seed,
            trial: self.trial,
            sizes: self.sizes,
            model: self.model,
            input: self.input,
            shifts: self.shifts,
            offsets: self.offsets,
            divergence: self.divergence,
            tolerance: property.tolerance(),
        }
    }

    fn record(&self) -> TrialRecord {
        let pair = [self.shifts[0].clone(), self.shifts[1].clone()];
        TrialRecord {
            input: self.trial as usize,
            shifts: pair,
            agreement: self.agreement.unwrap_or(0.0),
            tied: self.tied,
        }
    }
}

/// Stream 0 draws data and weights, stream 1 draws shifts.
fn trial_rng(seed: u64, property: Property, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&property.id().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial.wrapping_mul(2).wrapping_add(stream));
    rng
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-half..=half)).collect()
}

fn weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, uniform(rng, rows * cols, 0.5)).expect("finite draws")
}

fn tokens(rng: &mut ChaCha8Rng, grid: &[usize], dim: usize) -> TokenMatrix {
    let n: usize = grid.iter().product();
    TokenMatrix::new(grid.to_vec(), Matrix::new(n, dim, uniform(rng, n * dim, 1.0)).expect("finite draws"))
        .expect("matching sizes")
}

fn attention(rng: &mut ChaCha8Rng, input: usize, output: usize) -> AttentionParams {
    let (q, k, v) = (weights(rng, input, output), weights(rng, input, output), weights(rng, input, output));
    AttentionParams::new(q, k, v).expect("same shapes")
}

fn uniform_shift(rng: &mut ChaCha8Rng, shape: &[usize]) -> OffsetVector {
    OffsetVector::new(shape.iter().map(|&n| rng.gen_range(0..n as i64)).collect())
}

fn entries(stage: usize, kind: SelectionKind, sels: &[&Selection]) -> Vec<SelectionEntry> {
    sels.iter().map(|s| SelectionEntry { stage, kind, offset: s.offset.clone(), tied: s.tied }).collect()
}

/// Regenerates the data of a primitive trial and evaluates it at `shift`.
pub(crate) fn eval_primitive(
    property: Property,
    seed: u64,
    trial: u64,
    sizes: &Sizes,
    shift: &OffsetVector,
) -> Result<Outcome> {
    let mut rng = trial_rng(seed, property, trial, 0);
    let rank = sizes.rank();
    let f = sizes.factor;
    let block = f.pow(rank as u32);
    let no_shift = || shift.clone();
    let (input, divergence, tied, offsets) = match property {
        Property::Lemma1 | Property::TokenEquivariance => {
            let n: usize = sizes.shape.iter().product::<usize>() * sizes.channels;
            let x = GridSignal::new(sizes.shape.clone(), sizes.channels, uniform(&mut rng, n, 1.0))?;
            let embed = weights(&mut rng, block * sizes.channels, sizes.dim);
            let cfg = PatchEmbedConfig::new(f, embed, TokenScore::default())?;
            if property == Property::Lemma1 {
                let d = lemma1_divergence(&x, &cfg, shift)?;
                (x, d, false, Vec::new())
            } else {
                let (a, sa) = a_token(&x, &cfg)?;
                let (b, sb) = a_token(&circular_shift(&x, shift)?, &cfg)?;
                let d = best_alignment(&a, &b, 1).divergence;
                (x, d, sa.tied || sb.tied, entries(0, SelectionKind::Token, &[&sa, &sb]))
            }
        }
        Property::WindowEquivariance => {
            let t = tokens(&mut rng, &sizes.shape, sizes.channels);
            let params = attention(&mut rng, sizes.channels, sizes.dim);
            let window_grid = vec![f; rank];
            let bias = uniform(&mut rng, RpeTable::required_len(RpeKind::Adaptive, &window_grid), 0.5);
            let rpe = RpeTable::adaptive(bias)?;
            let cfg = WindowConfig::new(f);
            let (a, sa) = a_wsa(&t, &cfg, &params, &rpe)?;
            let (b, sb) = a_wsa(&t.shift_rows(shift)?, &cfg, &params, &rpe)?;
            let d = best_alignment(&a, &b, f).divergence;
            (t.to_signal(), d, sa.tied || sb.tied, entries(1, SelectionKind::Window, &[&sa, &sb]))
        }
        Property::MergeConvEquivalence | Property::MergeEquivariance | Property::MergeBreaks => {
            let t = tokens(&mut rng, &sizes.shape, sizes.channels);
            let cfg = MergeConfig::new(f, weights(&mut rng, block * sizes.channels, sizes.dim));
            match property {
                Property::MergeConvEquivalence => {
                    let strided = polyphase_component(&pmerge_conv_fullrate(&t, &cfg)?, f, &vec![0; rank])?;
                    (t.to_signal(), pmerge(&t, &cfg)?.max_abs_diff(&strided), false, Vec::new())
                }
                Property::MergeEquivariance => {
                    let (a, sa) = a_pmerge(&t, &cfg)?;
                    let (b, sb) = a_pmerge(&t.shift_rows(shift)?, &cfg)?;
                    let d = best_alignment(&a, &b, 1).divergence;
                    (t.to_signal(), d, sa.tied || sb.tied, entries(1, SelectionKind::Merge, &[&sa, &sb]))
                }
                _ => {
                    let a = pmerge(&t, &cfg)?;
                    let b = pmerge(&t.shift_rows(shift)?, &cfg)?;
                    (t.to_signal(), best_alignment(&a, &b, 1).divergence, false, Vec::new())
                }
            }
        }
        Property::AdaptiveRpeCommutes | Property::OriginalRpeBreaks => {
            let t = tokens(&mut rng, &sizes.shape, sizes.channels);
            let params = attention(&mut rng, sizes.channels, sizes.dim);
            let rpe = if property == Property::AdaptiveRpeCommutes {
                RpeTable::adaptive(uniform(&mut rng, RpeTable::required_len(RpeKind::Adaptive, &sizes.shape), 0.5))?
            } else {
                RpeTable::original(uniform(&mut rng, RpeTable::required_len(RpeKind::Original, &sizes.shape), 0.5))?
            };
            let lhs = sa(&t.shift_rows(shift)?, &params, &rpe)?;
            let rhs = sa(&t, &params, &rpe)?.shift_rows(shift)?;
            (t.to_signal(), lhs.max_abs_diff(&rhs), false, Vec::new())
        }
        _ => return Err(Error::Config(format!("{property:?} needs a model"))),
    };
    Ok(Outcome {
        seed,
        trial,
        sizes: Some(sizes.clone()),
        model: None,
        input,
        shifts: vec![no_shift()],
        offsets,
        divergence,
        tied,
        agreement: None,
    })
}

/// Evaluates a model trial on explicit data.
pub(crate) fn eval_model(
    property: Property,
    model: &Model,
    input: &GridSignal,
    shifts: &[OffsetVector],
) -> Result<(f64, bool, Vec<SelectionEntry>, f64)> {
    let [s1, s2] = shifts else {
        return Err(Error::Trace(format!("model trials need two shifts, got {}", shifts.len())));
    };
    match property {
        Property::End2endInvariance | Property::AblationBreaks => {
            let a = model.classify(&circular_shift(input, s1)?)?;
            let b = model.classify(&circular_shift(input, s2)?)?;
            let tied = a.trace.any_tied() || b.trace.any_tied();
            let offsets = a.trace.entries().iter().chain(b.trace.entries()).cloned().collect();
            let agree = f64::from(u8::from(a.label == b.label));
            Ok((max_abs_diff(&a.logits, &b.logits), tied, offsets, agree))
        }
        Property::End2endEquivariance => {
            let a = model.encode_decode(&circular_shift(input, s1)?)?;
            let b = model.encode_decode(&circular_shift(input, s2)?)?;
            let back_a = circular_shift(&a.map, &-s1)?;
            let back_b = circular_shift(&b.map, &-s2)?;
            let tied = a.trace.any_tied() || b.trace.any_tied();
            let offsets = a.trace.entries().iter().chain(b.trace.entries()).cloned().collect();
            let (la, lb) = (channel_argmax(&back_a), channel_argmax(&back_b));
            let agree = la.iter().zip(&lb).filter(|(x, y)| x == y).count() as f64 / la.len() as f64;
            Ok((max_abs_diff(back_a.data(), back_b.data()), tied, offsets, agree))
        }
        _ => Err(Error::Config(format!("{property:?} is not a model property"))),
    }
}

/// Runs `count` model trials on generic inputs with two full-range shifts
/// each; trial `t` uses `models[t % models.len()]`.
fn model_trials(property: Property, models: &[Model], seed: u64, count: usize) -> Result<Vec<Outcome>> {
    (0..count as u64)
        .into_par_iter()
        .map(|trial| {
            let model = &models[trial as usize % models.len()];
            let cfg = model.config();
            let input = synthetic_input(
                &cfg.input_shape,
                cfg.channels,
                InputKind::Noise,
                &mut trial_rng(seed, property, trial, 0),
            )?;
            let mut shift_rng = trial_rng(seed, property, trial, 1);
            let shifts =
                vec![uniform_shift(&mut shift_rng, &cfg.input_shape), uniform_shift(&mut shift_rng, &cfg.input_shape)];
            let (divergence, tied, offsets, agreement) = eval_model(property, model, &input, &shifts)?;
            Ok(Outcome {
                seed,
                trial,
                sizes: None,
                model: Some(cfg.clone()),
                input,
                shifts,
                offsets,
                divergence,
                tied,
                agreement: Some(agreement),
            })
        })
        .collect()
}

fn primitive_trials(property: Property, seed: u64, cases: Vec<(u64, Sizes, OffsetVector)>) -> Result<Vec<Outcome>> {
    cases.into_par_iter().map(|(trial, sizes, shift)| eval_primitive(property, seed, trial, &sizes, &shift)).collect()
}

fn consistency(metric: MetricKind, outcomes: &[Outcome]) -> ConsistencyReport {
    ConsistencyReport::from_trials(metric, outcomes.iter().map(Outcome::record).collect())
}

/// Every offset in `[0, n)` per axis of `shape`.
fn all_offsets(shape: &[usize]) -> Vec<OffsetVector> {
    rotations(shape, 1).iter().map(|o| OffsetVector::from(o.as_slice())).collect()
}

/// Signal length and patch pairs used by the randomized Lemma 1 suite.
pub(crate) const LEMMA1_SIZES: [(usize, usize); 13] =
    [(4, 1), (4, 2), (4, 4), (6, 1), (6, 2), (6, 3), (8, 1), (8, 2), (8, 4), (12, 1), (12, 2), (12, 3), (12, 4)];

/// Token-grid lengths used by the randomized position-bias suite.
const RPE_GRIDS: [usize; 2] = [4, 8];

/// Search budgets for the break properties.
const MERGE_BREAK_BUDGET: usize = 100;
const RPE_BREAK_BUDGET: usize = 100;
const ABLATION_BUDGET: usize = 1000;

/// Number of model seeds the end-to-end suite spreads its trials over.
pub(crate) const END2END_SEEDS: u64 = 5;

fn model_label(switches: &Switches) -> String {
    if switches.fully_adaptive() {
        return "adaptive".into();
    }
    if *switches == Switches::baseline() {
        return "baseline".into();
    }
    let off: Vec<&str> = Switch::ALL.into_iter().filter(|&s| !switches.get(s)).map(Switch::name).collect();
    format!("without_{}", off.join("+"))
}

fn first_stage(cfg: &ModelConfig, suite: SuiteName) -> Result<(Vec<usize>, crate::pipeline::StageConfig)> {
    let stage = *cfg
        .stages
        .first()
        .ok_or_else(|| Error::Config(format!("suite {suite} needs a model with at least one stage")))?;
    Ok((cfg.stage_grids()?.swap_remove(0), stage))
}

pub(crate) fn run_suite(suite: SuiteName, cfg: &SuiteConfig, out: &mut ReportBuilder) -> Result<()> {
    let model = &cfg.model;
    let rank = model.rank();
    let seed = cfg.seed;
    let trials = cfg.trials as u64;
    let random_cases = |property: Property, sizes: &Sizes, count: u64| -> Vec<(u64, Sizes, OffsetVector)> {
        (0..count)
            .map(|t| (t, sizes.clone(), uniform_shift(&mut trial_rng(seed, property, t, 1), &sizes.shape)))
            .collect()
    };
    match suite {
        SuiteName::Lemma1 => {
            let mut cases = Vec::new();
            for t in 0..trials {
                let (n, l) = LEMMA1_SIZES[t as usize % LEMMA1_SIZES.len()];
                let sizes = Sizes { shape: vec![n; rank], factor: l, channels: model.channels, dim: model.embed_dim };
                for m in all_offsets(&vec![l; rank]) {
                    cases.push((t, sizes.clone(), m));
                }
            }
            out.property(suite, Property::Lemma1, None, primitive_trials(Property::Lemma1, seed, cases)?);
        }
        SuiteName::Claim1 => {
            let sizes = Sizes {
                shape: model.input_shape.clone(),
                factor: model.patch,
                channels: model.channels,
                dim: model.embed_dim,
            };
            let p = Property::TokenEquivariance;
            out.property(suite, p, None, primitive_trials(p, seed, random_cases(p, &sizes, trials))?);
        }
        SuiteName::Claim2 => {
            let (grid, stage) = first_stage(model, suite)?;
            let sizes = Sizes { shape: grid, factor: stage.window, channels: model.embed_dim, dim: stage.attn_dim };
            let p = Property::WindowEquivariance;
            out.property(suite, p, None, primitive_trials(p, seed, random_cases(p, &sizes, trials))?);
        }
        SuiteName::Claim3 | SuiteName::Apmerge => {
            let (grid, stage) = first_stage(model, suite)?;
            let sizes = Sizes { shape: grid, factor: stage.merge, channels: stage.attn_dim, dim: stage.out_dim };
            if suite == SuiteName::Claim3 {
                let p = Property::MergeConvEquivalence;
                let cases = (0..trials).map(|t| (t, sizes.clone(), OffsetVector::zeros(rank))).collect();
                out.property(suite, p, None, primitive_trials(p, seed, cases)?);
            } else {
                let p = Property::MergeEquivariance;
                out.property(suite, p, None, primitive_trials(p, seed, random_cases(p, &sizes, trials))?);
                let p = Property::MergeBreaks;
                let budget = trials.min(MERGE_BREAK_BUDGET as u64);
                let cases = (0..budget).map(|t| (t, sizes.clone(), OffsetVector::splat(rank, 1))).collect();
                out.property(suite, p, None, primitive_trials(p, seed, cases)?);
            }
        }
        SuiteName::Rpe => {
            let dim = model.stages.first().map_or(model.embed_dim, |s| s.attn_dim);
            let sizes_for = |t: u64| Sizes {
                shape: vec![RPE_GRIDS[t as usize % RPE_GRIDS.len()]; rank],
                factor: 1,
                channels: model.embed_dim,
                dim,
            };
            for (p, count) in [
                (Property::AdaptiveRpeCommutes, trials),
                (Property::OriginalRpeBreaks, trials.min(RPE_BREAK_BUDGET as u64)),
            ] {
                let cases = (0..count)
                    .map(|t| {
                        let sizes = sizes_for(t);
                        let shift = uniform_shift(&mut trial_rng(seed, p, t, 1), &sizes.shape);
                        (t, sizes, shift)
                    })
                    .collect();
                out.property(suite, p, None, primitive_trials(p, seed, cases)?);
            }
        }
        SuiteName::End2end => {
            let configured = cfg.configured_model();
            let label = model_label(&configured.switches);
            let models = (0..END2END_SEEDS)
                .map(|k| Model::new(configured.clone().with_seed(configured.seed.wrapping_add(k))))
                .collect::<Result<Vec<_>>>()?;
            let inv = model_trials(Property::End2endInvariance, &models, seed, cfg.trials)?;
            let equi = model_trials(Property::End2endEquivariance, &models, seed, cfg.trials)?;
            out.metric(suite, label.clone(), consistency(MetricKind::CCons, &inv));
            out.metric(suite, label, consistency(MetricKind::Mascc, &equi));
            out.property(suite, Property::End2endInvariance, None, inv);
            out.property(suite, Property::End2endEquivariance, None, equi);
        }
        SuiteName::Metrics => {
            let configured = cfg.configured_model();
            let count = cfg.trials.div_ceil(5);
            let inputs = synthetic_inputs(&configured.input_shape, configured.channels, count, seed)?;
            let structured = structured_inputs(&configured.input_shape, configured.channels, count, seed)?;
            let sampler = ShiftSampler::new(seed);
            let label = model_label(&configured.switches);
            let m = Model::new(configured.clone())?;
            out.metric(suite, label.clone(), c_cons(&m, &inputs, &sampler)?);
            out.metric(suite, label.clone(), mascc(&m, &inputs, &sampler)?);
            out.metric(suite, label, s_cons_zeropad(&m, &structured, &sampler)?);
            let baseline = Model::new(configured.with_switches(Switches::baseline()))?;
            out.metric(suite, "baseline", c_cons(&baseline, &inputs, &sampler)?);
            out.metric(suite, "baseline", mascc(&baseline, &inputs, &sampler)?);
        }
        SuiteName::Ablation => {
            let switches = if cfg.disable.is_empty() { Switch::ALL.to_vec() } else { cfg.disable.clone() };
            let budget = cfg.trials.min(ABLATION_BUDGET);
            for sw in switches {
                let ablated = model.clone().with_switches(Switches::all_on().without(sw));
                let label = model_label(&ablated.switches);
                let m = Model::new(ablated)?;
                let outcomes = model_trials(Property::AblationBreaks, std::slice::from_ref(&m), seed, budget)?;
                out.metric(suite, label, consistency(MetricKind::CCons, &outcomes));
                out.property(suite, Property::AblationBreaks, Some(sw), outcomes);
            }
        }
    }
    Ok(())
}

pub(crate) fn prove_suite(cfg: &ProveConfig, out: &mut ReportBuilder) -> Result<()> {
    let shape = vec![cfg.n; cfg.rank];
    let sizes = Sizes { shape: shape.clone(), factor: cfg.l, channels: cfg.channels, dim: cfg.dim };
    let exhaustive = |shifts: &[OffsetVector]| -> Vec<(u64, Sizes, OffsetVector)> {
        (0..cfg.inputs as u64)
            .flat_map(|t| shifts.iter().map(move |s| (t, s.clone())))
            .map(|(t, s)| (t, sizes.clone(), s))
            .collect()
    };
    let every_shift = all_offsets(&shape);
    let properties: Vec<(Property, Vec<OffsetVector>)> = match cfg.suite {
        SuiteName::Lemma1 => vec![(Property::Lemma1, all_offsets(&vec![cfg.l; cfg.rank]))],
        SuiteName::Claim1 => vec![(Property::TokenEquivariance, every_shift)],
        SuiteName::Claim2 => vec![(Property::WindowEquivariance, every_shift)],
        SuiteName::Claim3 => vec![(Property::MergeConvEquivalence, vec![OffsetVector::zeros(cfg.rank)])],
        SuiteName::Apmerge => {
            vec![(Property::MergeEquivariance, every_shift.clone()), (Property::MergeBreaks, every_shift)]
        }
        SuiteName::Rpe => {
            vec![(Property::AdaptiveRpeCommutes, every_shift.clone()), (Property::OriginalRpeBreaks, every_shift)]
        }
        other => return Err(Error::Config(format!("suite `{other}` cannot be proved exhaustively"))),
    };
    for (p, shifts) in properties {
        out.property(cfg.suite, p, None, primitive_trials(p, cfg.seed, exhaustive(&shifts))?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(shape: Vec<usize>, factor: usize) -> Sizes {
        Sizes { shape, factor, channels: 2, dim: 3 }
    }

    #[test]
    fn trials_regenerate_identically() {
        let s = sizes(vec![8], 2);
        let shift = OffsetVector::new(vec![3]);
        for p in [Property::TokenEquivariance, Property::WindowEquivariance, Property::MergeBreaks] {
            let a = eval_primitive(p, 4, 17, &s, &shift).unwrap();
            let b = eval_primitive(p, 4, 17, &s, &shift).unwrap();
            assert_eq!(a.input, b.input);
            assert_eq!(a.divergence.to_bits(), b.divergence.to_bits());
            assert_ne!(a.input, eval_primitive(p, 4, 18, &s, &shift).unwrap().input);
        }
    }

    #[test]
    fn primitive_outcomes() {
        let s = sizes(vec![8], 2);
        let one = OffsetVector::new(vec![1]);
        assert_eq!(eval_primitive(Property::Lemma1, 0, 0, &s, &one).unwrap().divergence, 0.0);
        assert_eq!(eval_primitive(Property::TokenEquivariance, 0, 0, &s, &one).unwrap().divergence, 0.0);
        assert!(
            eval_primitive(Property::MergeConvEquivalence, 0, 0, &s, &OffsetVector::zeros(1)).unwrap().divergence
                <= 1e-12
        );
        assert!(eval_primitive(Property::MergeBreaks, 0, 0, &s, &one).unwrap().divergence > 1e-12);
        assert!(eval_primitive(Property::AdaptiveRpeCommutes, 0, 0, &s, &one).unwrap().divergence <= 1e-12);
        assert!(eval_primitive(Property::OriginalRpeBreaks, 0, 0, &s, &one).unwrap().divergence > 1e-12);
        assert!(eval_primitive(Property::End2endInvariance, 0, 0, &s, &one).is_err());
    }

    #[test]
    fn property_names_match_serde() {
        for p in
            [Property::Lemma1, Property::MergeConvEquivalence, Property::End2endInvariance, Property::AblationBreaks]
        {
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
    }

    #[test]
    fn labels() {
        assert_eq!(model_label(&Switches::all_on()), "adaptive");
        assert_eq!(model_label(&Switches::baseline()), "baseline");
        assert_eq!(model_label(&Switches::all_on().without(Switch::AWsa)), "without_a_wsa");
    }

    #[test]
    fn lemma1_sizes_are_divisible() {
        assert!(LEMMA1_SIZES.iter().all(|(n, l)| n % l == 0));
        let all: Vec<_> =
            [4usize, 6, 8, 12].iter().flat_map(|&n| (1..=4).filter(move |l| n % l == 0).map(move |l| (n, l))).collect();
        assert_eq!(all, LEMMA1_SIZES.to_vec());
    }
}
