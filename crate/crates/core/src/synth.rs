//! Synthetic bark-like corpus with controllable acoustics.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav_pcm16, Waveform};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestRow, Source};
use crate::seeds::{rng_for, streams};
use crate::taxonomy::{BodySize, Emotion, Gender};
use crate::training::split::largest_remainder;
use crate::training::{pitch_shift, thread_pool, time_stretch};

pub const SYNTH_RATE: u32 = 44100;
pub const MIN_CORPUS: usize = 100;
pub const F0_RANGE: (f64, f64) = (80.0, 2000.0);
const MAX_PARTIALS: usize = 30;
const VIBRATO_HZ: f64 = 5.0;
const VIBRATO_DEPTH: f64 = 0.01;

const DEFAULT_PROFILES: &str = include_str!("../data/emotion_acoustics.json");

/// Clip-level acoustic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub emotion: Emotion,
    pub size: BodySize,
    pub gender: Gender,
    pub f0: f64,
    /// RMS of the carrier at full envelope.
    pub energy: f64,
    /// 0 = purely harmonic, 1 = purely noise.
    pub noisiness: f64,
    pub duration: f64,
    /// Partial `k` has amplitude `k^-tilt`.
    pub tilt: f64,
    /// Low-pass cutoff of the noise component, Hz.
    pub noise_cutoff: f64,
    pub bursts: u32,
}

/// Base fundamental range per body size; large stays below 200 Hz and small above 800 Hz.
pub fn f0_range(size: BodySize) -> (f64, f64) {
    match size {
        BodySize::Large => (90.0, 195.0),
        BodySize::Medium => (250.0, 700.0),
        BodySize::Small => (820.0, 1600.0),
    }
}

impl SampleSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = f0_range(self.size);
        let bad = |m: String| Err(Error::Argument(m));
        if !(F0_RANGE.0..=F0_RANGE.1).contains(&self.f0) || !(lo..=hi).contains(&self.f0) {
            return bad(format!("f0 {} outside the {} range [{lo}, {hi}]", self.f0, self.size));
        }
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return bad(format!("energy {} outside (0, 1]", self.energy));
        }
        if !(0.0..=1.0).contains(&self.noisiness) {
            return bad(format!("noisiness {} outside [0, 1]", self.noisiness));
        }
        if !(self.duration >= 0.1 && self.duration <= 30.0) {
            return bad(format!("duration {} outside [0.1, 30] s", self.duration));
        }
        if !(self.tilt > 0.0 && self.tilt.is_finite()) {
            return bad("tilt must be positive".into());
        }
        if !(self.noise_cutoff > 20.0 && self.noise_cutoff < SYNTH_RATE as f64 / 2.0) {
            return bad(format!("noise cutoff {} Hz out of range", self.noise_cutoff));
        }
        if !(1..=4).contains(&self.bursts) {
            return bad(format!("burst count {} outside 1..=4", self.bursts));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionProfile {
    pub energy: [f64; 2],
    pub tilt: [f64; 2],
    pub noisiness: [f64; 2],
    pub noise_cutoff: [f64; 2],
    pub bursts: [u32; 2],
}

/// Emotion to acoustic-parameter ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable(BTreeMap<Emotion, EmotionProfile>);

impl ProfileTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<Emotion, EmotionProfile> = serde_json::from_str(text)?;
        if map.len() != Emotion::count() {
            return Err(Error::Config(format!("profile table has {} emotions, expected {}", map.len(), Emotion::count())));
        }
        for (e, p) in &map {
            let ordered = |r: [f64; 2]| r[0] <= r[1];
            let ok = ordered(p.energy)
                && p.energy[0] > 0.0
                && p.energy[1] <= 1.0
                && ordered(p.tilt)
                && p.tilt[0] > 0.0
                && ordered(p.noisiness)
                && p.noisiness[0] >= 0.0
                && p.noisiness[1] <= 1.0
                && ordered(p.noise_cutoff)
                && p.noise_cutoff[0] > 20.0
                && p.noise_cutoff[1] < SYNTH_RATE as f64 / 2.0
                && p.bursts[0] >= 1
                && p.bursts[0] <= p.bursts[1]
                && p.bursts[1] <= 4;
            if !ok {
                return Err(Error::Config(format!("invalid acoustic profile for `{e}`")));
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, e: Emotion) -> &EmotionProfile {
        &self.0[&e]
    }
}

impl Default for ProfileTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_PROFILES).expect("bundled profile table is valid")
    }
}

/// Relative class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMix {
    pub emotion: BTreeMap<Emotion, f64>,
    pub size: BTreeMap<BodySize, f64>,
    pub gender: BTreeMap<Gender, f64>,
    /// Fraction of rows produced by augmenting an original clip.
    pub enhanced_share: f64,
}

impl Default for ClassMix {
    /// Class counts of the reference corpus.
    fn default() -> Self {
        use Emotion::*;
        let emotion = [
            (Anxious, 15027.0),
            (Territorial, 9403.0),
            (Alert, 5319.0),
            (SeparationAnxiety, 3872.0),
            (Excited, 3319.0),
            (Fearful, 2340.0),
            (Playful, 1788.0),
            (Content, 1485.0),
        ]
        .into_iter()
        .collect();
        let size = [(BodySize::Large, 28824.0), (BodySize::Medium, 9758.0), (BodySize::Small, 3971.0)].into_iter().collect();
        let gender = [(Gender::Female, 26046.0), (Gender::Male, 16507.0)].into_iter().collect();
        Self { emotion, size, gender, enhanced_share: 0.628 }
    }
}

impl ClassMix {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mix: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, w: Vec<f64>| {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::Config(format!("{name} mix weights must be non-negative with a positive sum")));
            }
            Ok(())
        };
        check("emotion", self.emotion.values().copied().collect())?;
        check("size", self.size.values().copied().collect())?;
        check("gender", self.gender.values().copied().collect())?;
        if !(0.0..1.0).contains(&self.enhanced_share) {
            return Err(Error::Config("enhanced_share must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn weights<K: Ord + Copy>(map: &BTreeMap<K, f64>, all: &[K]) -> Vec<f64> {
        all.iter().map(|k| map.get(k).copied().unwrap_or(0.0)).collect()
    }

    /// Emotion counts for `n` clips, in `Emotion::ALL` order.
    pub fn emotion_counts(&self, n: usize) -> Vec<usize> {
        largest_remainder(n, &Self::weights(&self.emotion, Emotion::ALL))
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] { r[0] } else { rng.gen_range(r[0]..r[1]) }
}

fn log_uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    uniform(rng, [r[0].ln(), r[1].ln()]).exp()
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, all: &[T], weights: &[f64]) -> T {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (x, w) in all.iter().zip(weights) {
        if u < *w {
            return *x;
        }
        u -= w;
    }
    *all.iter().zip(weights).rev().find(|(_, w)| **w > 0.0).unwrap().0
}

/// Draws acoustic parameters for one clip of emotion `e`.
pub fn draw_spec(e: Emotion, mix: &ClassMix, profiles: &ProfileTable, rng: &mut ChaCha8Rng) -> SampleSpec {
    let p = profiles.get(e);
    let size = pick(rng, BodySize::ALL, &ClassMix::weights(&mix.size, BodySize::ALL));
    let gender = pick(rng, Gender::ALL, &ClassMix::weights(&mix.gender, Gender::ALL));
    let (lo, hi) = f0_range(size);
    // males sit in the lower part of the size range, females in the upper part
    let u = match gender {
        Gender::Male => rng.gen_range(0.0..0.6),
        Gender::Female => rng.gen_range(0.4..1.0),
    };
    SampleSpec {
        emotion: e,
        size,
        gender,
        f0: lo * (hi / lo).powf(u),
        energy: log_uniform(rng, p.energy),
        noisiness: uniform(rng, p.noisiness),
        duration: rng.gen_range(0.8..2.8),
        tilt: uniform(rng, p.tilt),
        noise_cutoff: log_uniform(rng, p.noise_cutoff),
        bursts: rng.gen_range(p.bursts[0]..=p.bursts[1]),
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Sum of attack/decay bursts spread over the clip, peak 1.
fn burst_envelope(n: usize, bursts: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = SYNTH_RATE as f64;
    let mut env = vec![0.0; n];
    let slot = n / bursts as usize;
    let attack = (0.008 * sr) as usize;
    let release = (0.005 * sr) as usize;
    for b in 0..bursts as usize {
        let len = ((rng.gen_range(0.12..0.35) * sr) as usize).min(slot.max(1));
        let start = b * slot + rng.gen_range(0..=(slot - len));
        let tau = 0.35 * len as f64;
        for i in 0..len {
            let a = if i < attack { i as f64 / attack as f64 } else { (-((i - attack) as f64) / tau).exp() };
            let r = if i + release > len { (len - i) as f64 / release as f64 } else { 1.0 };
            env[start + i] = f64::max(env[start + i], a * r);
        }
    }
    env
}

/// Renders one clip; identical `(spec, seed)` always give identical audio.
pub fn synth_sample(spec: &SampleSpec, seed: u64) -> Result<Waveform> {
    spec.validate()?;
    let mut rng = rng_for(seed, streams::SYNTH, &[]);
    let sr = SYNTH_RATE as f64;
    let n = (spec.duration * sr).round() as usize;

    let n_partials = ((0.45 * sr / (spec.f0 * (1.0 + VIBRATO_DEPTH))) as usize).clamp(1, MAX_PARTIALS);
    let phases: Vec<f64> = (0..n_partials).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let phase_cos: Vec<f64> = phases.iter().map(|p| p.cos()).collect();
    let phase_sin: Vec<f64> = phases.iter().map(|p| p.sin()).collect();
    let amps: Vec<f64> = (1..=n_partials).map(|k| (k as f64).powf(-spec.tilt)).collect();
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    let mut harmonic = vec![0.0; n];
    let mut phase = 0.0f64;
    for (i, h) in harmonic.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let f = spec.f0 * (1.0 + VIBRATO_DEPTH * (2.0 * PI * VIBRATO_HZ * t + vib_phase).sin());
        // partial k at phase k * phase + phases[k], via powers of e^{i phase}
        let (bc, bs) = (phase.cos(), phase.sin());
        let (mut c, mut s) = (bc, bs);
        let mut acc = 0.0;
        for k in 0..n_partials {
            acc += amps[k] * (s * phase_cos[k] + c * phase_sin[k]);
            (c, s) = (c * bc - s * bs, s * bc + c * bs);
        }
        *h = acc;
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
    }

    // two cascaded one-pole low-pass filters over white noise
    let alpha = 1.0 - (-2.0 * PI * spec.noise_cutoff / sr).exp();
    let (mut s1, mut s2) = (0.0, 0.0);
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            s1 += alpha * (normal(&mut rng) - s1);
            s2 += alpha * (s1 - s2);
            s2
        })
        .collect();

    let env = burst_envelope(n, spec.bursts, &mut rng);
    let (hr, nr) = (rms(&harmonic).max(1e-12), rms(&noise).max(1e-12));
    let (gh, gn) = ((1.0 - spec.noisiness).sqrt() / hr, spec.noisiness.sqrt() / nr);
    let carrier: Vec<f64> = (0..n).map(|i| gh * harmonic[i] + gn * noise[i]).collect();
    let gain = spec.energy / rms(&carrier).max(1e-12);
    let x: Vec<f64> = (0..n).map(|i| (gain * env[i] * carrier[i]).clamp(-1.0, 1.0)).collect();
    Waveform::new(x.into_iter().map(|v| v as f32).collect(), SYNTH_RATE)
}

fn breed(size: BodySize, rng: &mut ChaCha8Rng) -> &'static str {
    let names: &[&str] = match size {
        BodySize::Large => &["german_shepherd", "labrador_retriever", "rottweiler"],
        BodySize::Medium => &["beagle", "border_collie", "bulldog"],
        BodySize::Small => &["chihuahua", "pomeranian", "yorkshire_terrier"],
    };
    names.choose(rng).unwrap()
}

#[derive(Debug, Clone)]
struct Plan {
    emotion: Emotion,
    /// Index of the original plan this row augments.
    parent: Option<usize>,
}

/// Generates `n` clips under `out_dir/wav/` and writes `out_dir/manifest.jsonl`.
///
/// Original clips are rendered from drawn specs; enhanced rows time-stretch
/// and pitch-shift a random original of the same emotion. Work is spread
/// over `jobs` threads with per-row seeds, so output does not depend on it.
pub fn synth_corpus(n: usize, mix: &ClassMix, profiles: &ProfileTable, seed: u64, out_dir: &Path, jobs: usize) -> Result<Manifest> {
    if n < MIN_CORPUS {
        return Err(Error::Argument(format!("corpus size must be at least {MIN_CORPUS}, got {n}")));
    }
    mix.validate()?;
    let mut rng = rng_for(seed, streams::SYNTH, &[u64::MAX]);
    let mut plans = Vec::with_capacity(n);
    for (e, count) in Emotion::ALL.iter().zip(mix.emotion_counts(n)) {
        if count == 0 {
            continue;
        }
        let enhanced = ((count as f64 * mix.enhanced_share).round() as usize).min(count - 1);
        let first = plans.len();
        let originals = count - enhanced;
        plans.extend((0..originals).map(|_| Plan { emotion: *e, parent: None }));
        for _ in 0..enhanced {
            plans.push(Plan { emotion: *e, parent: Some(first + rng.gen_range(0..originals)) });
        }
    }
    // row order is shuffled so ids carry no class information
    let mut order: Vec<usize> = (0..plans.len()).collect();
    order.shuffle(&mut rng);

    let specs: Vec<Option<(SampleSpec, String)>> = plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            p.parent.is_none().then(|| {
                let mut r = rng_for(seed, streams::SYNTH, &[i as u64]);
                let spec = draw_spec(p.emotion, mix, profiles, &mut r);
                let b = breed(spec.size, &mut r).to_owned();
                (spec, b)
            })
        })
        .collect();

    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let rows: Vec<ManifestRow> = thread_pool(jobs)?.install(|| {
        order
            .par_iter()
            .enumerate()
            .map(|(row, &i)| {
                let root = plans[i].parent.unwrap_or(i);
                let (spec, breed) = specs[root].as_ref().unwrap();
                let mut w = synth_sample(spec, crate::seeds::derive_seed(seed, streams::SYNTH, &[root as u64]))?;
                if plans[i].parent.is_some() {
                    let mut r = rng_for(seed, streams::ENHANCE, &[i as u64]);
                    let factor = r.gen_range(0.9..1.1);
                    let semitones = r.gen_range(-2.0..2.0);
                    w = pitch_shift(&time_stretch(&w, factor)?, semitones)?;
                }
                let id = format!("syn_{row:06}");
                let rel = PathBuf::from("wav").join(format!("{id}.wav"));
                write_wav_pcm16(out_dir.join(&rel), &w)?;
                Ok(ManifestRow {
                    id,
                    path: rel,
                    emotion: spec.emotion,
                    breed: breed.clone(),
                    size: spec.size,
                    gender: spec.gender,
                    source: if plans[i].parent.is_some() { Source::Enhanced } else { Source::Original },
                    valence: None,
                    arousal: None,
                })
            })
            .collect::<Result<_>>()
    })?;
    let manifest = Manifest::new(rows, out_dir)?;
    manifest.save(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
