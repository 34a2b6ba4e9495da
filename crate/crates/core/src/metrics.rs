//! Shift-consistency metrics: classification agreement under pairs of
//! circular shifts, per-position agreement of segmentation maps after
//! shifting back, and the zero-padded (standard shift) variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::numerics::{argmax_tiebreak, circular_shift, GridSignal, OffsetVector};
use crate::pipeline::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    /// Some adaptive selection had a tied score.
    pub tied: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    /// One label per input position, row-major.
    pub labels: Vec<usize>,
    pub tied: bool,
}

pub trait Classifier: Sync {
    fn input_shape(&self) -> &[usize];
    fn predict(&self, x: &GridSignal) -> Result<Prediction>;
}

pub trait Segmenter: Sync {
    fn input_shape(&self) -> &[usize];
    fn segment(&self, x: &GridSignal) -> Result<SegmentPrediction>;
}

impl Classifier for Model {
    fn input_shape(&self) -> &[usize] {
        &self.config().input_shape
    }

    fn predict(&self, x: &GridSignal) -> Result<Prediction> {
        let c = self.classify(x)?;
        Ok(Prediction { label: c.label, tied: c.trace.any_tied() })
    }
}

impl Segmenter for Model {
    fn input_shape(&self) -> &[usize] {
        &self.config().input_shape
    }

    fn segment(&self, x: &GridSignal) -> Result<SegmentPrediction> {
        let s = self.encode_decode(x)?;
        Ok(SegmentPrediction { labels: s.labels(), tied: s.trace.any_tied() })
    }
}

/// Draws shift pairs per input. Offsets are uniform on `[0, max]` per axis;
/// without an explicit `max` the range is `[0, axis / 2)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSampler {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Vec<usize>>,
    pub pairs_per_input: usize,
    pub seed: u64,
}

impl ShiftSampler {
    pub fn new(seed: u64) -> Self {
        Self { max: None, pairs_per_input: 5, seed }
    }

    pub fn with_pairs(mut self, pairs: usize) -> Self {
        self.pairs_per_input = pairs;
        self
    }

    pub fn with_max(mut self, max: Vec<usize>) -> Self {
        self.max = Some(max);
        self
    }

    /// Inclusive per-axis upper bounds for `shape`.
    pub fn bounds(&self, shape: &[usize]) -> Result<Vec<usize>> {
        match &self.max {
            Some(max) => {
                if max.len() != shape.len() {
                    return shape_err(format!("sampler bounds {max:?} do not match shape {shape:?}"));
                }
                if max.iter().zip(shape).any(|(m, n)| m >= n) {
                    return param_err(format!("sampler bounds {max:?} must be below axis lengths {shape:?}"));
                }
                Ok(max.clone())
            }
            None => Ok(shape.iter().map(|&n| (n / 2).saturating_sub(1)).collect()),
        }
    }

    /// Shift pairs for input `index`. Each input has its own stream, so the
    /// pairs do not depend on how many inputs precede it or on scheduling.
    pub fn pairs(&self, shape: &[usize], index: usize) -> Result<Vec<[OffsetVector; 2]>> {
        let bounds = self.bounds(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut draw = || OffsetVector::new(bounds.iter().map(|&b| rng.gen_range(0..=b as i64)).collect());
        Ok((0..self.pairs_per_input).map(|_| [draw(), draw()]).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    CCons,
    Mascc,
    SConsZeropad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub input: usize,
    pub shifts: [OffsetVector; 2],
    /// 0 or 1 for labels, the agreeing fraction of positions for maps.
    pub agreement: f64,
    pub tied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub metric: MetricKind,
    pub trials: Vec<TrialRecord>,
    /// Mean of the per-trial agreements.
    pub aggregate: f64,
    pub tied_trials: usize,
}

impl ConsistencyReport {
    pub(crate) fn from_trials(metric: MetricKind, trials: Vec<TrialRecord>) -> Self {
        let aggregate = trials.iter().map(|t| t.agreement).sum::<f64>() / trials.len() as f64;
        let tied_trials = trials.iter().filter(|t| t.tied).count();
        Self { metric, trials, aggregate, tied_trials }
    }

    /// Aggregate over the trials without ties.
    pub fn tie_free_aggregate(&self) -> Option<f64> {
        let free: Vec<f64> = self.trials.iter().filter(|t| !t.tied).map(|t| t.agreement).collect();
        (!free.is_empty()).then(|| free.iter().sum::<f64>() / free.len() as f64)
    }
}

fn run_trials<F>(
    metric: MetricKind,
    shape: &[usize],
    inputs: &[GridSignal],
    sampler: &ShiftSampler,
    trial: F,
) -> Result<ConsistencyReport>
where
    F: Fn(&GridSignal, &[OffsetVector; 2]) -> Result<(f64, bool)> + Sync,
{
    if inputs.is_empty() {
        return param_err("at least one input is required");
    }
    if sampler.pairs_per_input == 0 {
        return param_err("at least one shift pair per input is required");
    }
    if let Some(x) = inputs.iter().find(|x| x.shape() != shape) {
        return shape_err(format!("input shape {:?} does not match model shape {shape:?}", x.shape()));
    }
    let per_input: Vec<Vec<TrialRecord>> = inputs
        .par_iter()
        .enumerate()
        .map(|(input, x)| {
            sampler
                .pairs(shape, input)?
                .into_iter()
                .map(|shifts| {
                    let (agreement, tied) = trial(x, &shifts)?;
                    Ok(TrialRecord { input, shifts, agreement, tied })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(ConsistencyReport::from_trials(metric, per_input.into_iter().flatten().collect()))
}

fn label_agreement<C: Classifier + ?Sized>(model: &C, a: &GridSignal, b: &GridSignal) -> Result<(f64, bool)> {
    let (pa, pb) = (model.predict(a)?, model.predict(b)?);
    Ok((f64::from(u8::from(pa.label == pb.label)), pa.tied || pb.tied))
}

/// Fraction of shift pairs on which the predicted labels agree.
pub fn c_cons<C: Classifier + ?Sized>(
    model: &C,
    inputs: &[GridSignal],
    sampler: &ShiftSampler,
) -> Result<ConsistencyReport> {
    run_trials(MetricKind::CCons, model.input_shape(), inputs, sampler, |x, [s1, s2]| {
        label_agreement(model, &circular_shift(x, s1)?, &circular_shift(x, s2)?)
    })
}

/// Fraction of positions whose labels agree once each map is shifted back,
/// averaged over shift pairs.
pub fn mascc<S: Segmenter + ?Sized>(
    model: &S,
    inputs: &[GridSignal],
    sampler: &ShiftSampler,
) -> Result<ConsistencyReport> {
    let shape = model.input_shape().to_vec();
    run_trials(MetricKind::Mascc, &shape, inputs, sampler, |x, [s1, s2]| {
        let unshifted = |s: &OffsetVector| -> Result<(Vec<usize>, bool)> {
            let p = model.segment(&circular_shift(x, s)?)?;
            if p.labels.len() != x.positions() {
                return shape_err(format!(
                    "segmenter returned {} labels for {} positions",
                    p.labels.len(),
                    x.positions()
                ));
            }
            let map = GridSignal::new(shape.clone(), 1, p.labels.iter().map(|&l| l as f64).collect())?;
            let back = circular_shift(&map, &-s)?;
            Ok((back.data().iter().map(|&l| l as usize).collect(), p.tied))
        };
        let (a, ta) = unshifted(s1)?;
        let (b, tb) = unshifted(s2)?;
        let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count();
        Ok((agree as f64 / a.len() as f64, ta || tb))
    })
}

/// `c_cons` with shifts that translate content and fill vacated positions
/// with zeros.
pub fn s_cons_zeropad<C: Classifier + ?Sized>(
    model: &C,
    inputs: &[GridSignal],
    sampler: &ShiftSampler,
) -> Result<ConsistencyReport> {
    run_trials(MetricKind::SConsZeropad, model.input_shape(), inputs, sampler, |x, [s1, s2]| {
        label_agreement(model, &zero_pad_shift(x, s1)?, &zero_pad_shift(x, s2)?)
    })
}

/// `out[n] = x[n + off]` where in range, zero elsewhere.
pub fn zero_pad_shift(x: &GridSignal, off: &OffsetVector) -> Result<GridSignal> {
    if off.rank() != x.rank() {
        return shape_err(format!("shift of rank {} applied to rank-{} signal", off.rank(), x.rank()));
    }
    let shape = x.shape();
    let c = x.channels();
    let mut out = vec![0.0; x.data().len()];
    let mut index = vec![0i64; shape.len()];
    for pos in 0..x.positions() {
        let mut rest = pos;
        for axis in (0..shape.len()).rev() {
            index[axis] = (rest % shape[axis]) as i64 + off.as_slice()[axis];
            rest /= shape[axis];
        }
        if index.iter().zip(shape).all(|(&i, &n)| (0..n as i64).contains(&i)) {
            let flat = index.iter().zip(shape).fold(0usize, |acc, (&i, &n)| acc * n + i as usize);
            out[pos * c..(pos + 1) * c].copy_from_slice(x.position(flat));
        }
    }
    GridSignal::new(shape.to_vec(), c, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Noise,
    Ramp,
    Impulse,
}

/// Input `i` of a synthetic set: every fourth input is a ramp, every fourth
/// (offset by one) a single impulse, the rest uniform noise on [-1, 1].
pub fn input_kind(i: usize) -> InputKind {
    match i % 4 {
        1 => InputKind::Ramp,
        3 => InputKind::Impulse,
        _ => InputKind::Noise,
    }
}

pub fn synthetic_input(shape: &[usize], channels: usize, kind: InputKind, rng: &mut impl Rng) -> Result<GridSignal> {
    let positions: usize = shape.iter().product();
    let mut data = vec![0.0; positions * channels];
    match kind {
        InputKind::Noise => data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0)),
        InputKind::Ramp => {
            let slopes: Vec<Vec<f64>> =
                (0..channels).map(|_| shape.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
            let offsets: Vec<f64> = (0..channels).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            for pos in 0..positions {
                let mut rest = pos;
                let mut index = vec![0usize; shape.len()];
                for axis in (0..shape.len()).rev() {
                    index[axis] = rest % shape[axis];
                    rest /= shape[axis];
                }
                for ch in 0..channels {
                    let v: f64 =
                        index.iter().zip(shape).zip(&slopes[ch]).map(|((&i, &n), s)| s * i as f64 / n as f64).sum();
                    data[pos * channels + ch] = v + offsets[ch];
                }
            }
        }
        InputKind::Impulse => {
            let pos = rng.gen_range(0..positions);
            for ch in 0..channels {
                data[pos * channels + ch] = rng.gen_range(0.5..=1.5);
            }
        }
    }
    GridSignal::new(shape.to_vec(), channels, data)
}

/// Mixed noise and structured inputs, reproducible from `seed`.
pub fn synthetic_inputs(shape: &[usize], channels: usize, count: usize, seed: u64) -> Result<Vec<GridSignal>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| synthetic_input(shape, channels, input_kind(i), &mut rng)).collect()
}

/// Ramps and impulses only.
pub fn structured_inputs(shape: &[usize], channels: usize, count: usize, seed: u64) -> Result<Vec<GridSignal>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = if i % 2 == 0 { InputKind::Ramp } else { InputKind::Impulse };
            synthetic_input(shape, channels, kind, &mut rng)
        })
        .collect()
}

/// Per-position argmax over channels, for checking segmentation metrics.
pub fn channel_argmax(x: &GridSignal) -> Vec<usize> {
    (0..x.positions()).map(|p| argmax_tiebreak(x.position(p)).expect("channels >= 1")).collect()
}
