use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frame_seed, SimFrameModel};
use crate::error::{Error, Result};
use crate::yuv_io::{FramePlane, VideoSpec};

pub const PRESET_NAMES: [&str; 3] = ["static", "panning", "scene-change"];

const LATTICE: usize = 64;

/// Parameters of the generated luma.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentParams {
    pub texture_seed: u64,
    /// Pixels per lattice cell of the coarsest octave.
    pub feature_size: f64,
    /// Peak amplitude around mid-grey.
    pub contrast: f64,
    pub octaves: usize,
    /// Pixels per frame, horizontal then vertical.
    pub velocity: [f64; 2],
    /// Standard deviation of the per-frame sensor noise, in sample units.
    pub sensor_noise: f64,
    /// Display indices where a new scene starts.
    #[serde(default)]
    pub scene_cuts: Vec<usize>,
}

/// Encoder-side parameters shared by every frame of a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Complexity of pictures coded without a usable reference.
    pub intra_complexity: f64,
    pub inter_complexity: f64,
    pub rd_exponent: f64,
    pub dependence_gain: f64,
    pub noise_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub frames: usize,
    pub content: ContentParams,
    pub sim: SimParams,
    /// Target bitrates (bits/s) for rate sweeps.
    #[serde(default)]
    pub rate_points: Vec<f64>,
    /// Explicit per-frame models in display order; overrides `sim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_models: Option<Vec<SimFrameModel>>,
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "static" => include_str!("../../presets/static.json"),
            "panning" => include_str!("../../presets/panning.json"),
            "scene-change" => include_str!("../../presets/scene-change.json"),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.video_spec().validate()?;
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config("scenario frames must be at least 16x16".into()));
        }
        let c = &self.content;
        if !(c.feature_size >= 1.0 && c.contrast >= 0.0 && c.sensor_noise >= 0.0 && c.octaves >= 1) {
            return Err(Error::Config("content parameters out of range".into()));
        }
        if !c.velocity.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("velocity must be finite".into()));
        }
        self.model(self.sim.intra_complexity, 0.0).validate()?;
        self.model(self.sim.inter_complexity, self.sim.dependence_gain).validate()?;
        if let Some(models) = &self.frame_models {
            if models.len() != self.frames {
                return Err(Error::Config(format!(
                    "{} frame models for {} frames",
                    models.len(),
                    self.frames
                )));
            }
            models.iter().try_for_each(SimFrameModel::validate)?;
        }
        if self.rate_points.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config("rate points must be positive".into()));
        }
        Ok(())
    }

    /// Copy truncated or extended to `frames` pictures.
    pub fn with_frames(&self, frames: usize) -> Result<Self> {
        let mut s = self.clone();
        s.frames = frames;
        if let Some(models) = &mut s.frame_models {
            if frames > models.len() {
                return Err(Error::Config("cannot extend explicit frame models".into()));
            }
            models.truncate(frames);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn video_spec(&self) -> VideoSpec {
        VideoSpec { width: self.width, height: self.height, fps: self.fps, frame_count: self.frames }
    }

    pub fn scene_of(&self, index: usize) -> usize {
        self.content.scene_cuts.iter().filter(|&&c| c > 0 && c <= index).count()
    }

    fn model(&self, complexity: f64, dependence_gain: f64) -> SimFrameModel {
        SimFrameModel {
            complexity,
            rd_exponent: self.sim.rd_exponent,
            dependence_gain,
            noise_sigma: self.sim.noise_sigma,
        }
    }

    /// Encoder model for display frame `index` predicted from `refs`.
    /// Frames whose references all lie in an earlier scene behave as intra.
    pub fn frame_model(&self, index: usize, refs: &[usize]) -> SimFrameModel {
        if let Some(models) = &self.frame_models {
            return models[index];
        }
        let scene = self.scene_of(index);
        if refs.iter().any(|&r| self.scene_of(r) == scene) {
            self.model(self.sim.inter_complexity, self.sim.dependence_gain)
        } else {
            self.model(self.sim.intra_complexity, 0.0)
        }
    }

    /// Full-resolution luma of display frame `index`.
    pub fn render_frame(&self, index: usize) -> FramePlane {
        let c = &self.content;
        let scene = self.scene_of(index) as u64;
        let texture = Texture::new(c.texture_seed.wrapping_add(scene.wrapping_mul(7919)), c.octaves);
        let (dx, dy) = (c.velocity[0] * index as f64, c.velocity[1] * index as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(c.texture_seed, index));
        let noise = Normal::new(0.0, c.sensor_noise.max(f64::MIN_POSITIVE)).expect("finite sigma");
        FramePlane::from_fn(self.width, self.height, |x, y| {
            let v = texture.sample((x as f64 + dx) / c.feature_size, (y as f64 + dy) / c.feature_size);
            let n = if c.sensor_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (128.0 + c.contrast * v + n).round().clamp(0.0, 255.0) as u8
        })
    }

    pub fn render_all(&self) -> Vec<FramePlane> {
        (0..self.frames).into_par_iter().map(|i| self.render_frame(i)).collect()
    }
}

/// Periodic multi-octave value noise in `[-1, 1]`.
struct Texture {
    octaves: Vec<Vec<f64>>,
}

impl Texture {
    fn new(seed: u64, octaves: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let octaves = (0..octaves)
            .map(|_| (0..LATTICE * LATTICE).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Self { octaves }
    }

    fn sample(&self, u: f64, v: f64) -> f64 {
        let mut total = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        let mut freq = 1.0;
        for lattice in &self.octaves {
            total += amp * lerp_lattice(lattice, u * freq, v * freq);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        total / norm
    }
}

fn lerp_lattice(lattice: &[f64], u: f64, v: f64) -> f64 {
    let (fu, fv) = (u.floor(), v.floor());
    let (tu, tv) = (smooth(u - fu), smooth(v - fv));
    let wrap = |k: f64| (k.rem_euclid(LATTICE as f64)) as usize;
    let (x0, y0) = (wrap(fu), wrap(fv));
    let (x1, y1) = ((x0 + 1) % LATTICE, (y0 + 1) % LATTICE);
    let at = |x: usize, y: usize| lattice[y * LATTICE + x];
    let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * tu;
    let bottom = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * tu;
    top + (bottom - top) * tv
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preanalysis::compute_epp;
    use crate::yuv_io::downsample_half;

    #[test]
    fn presets_load() {
        for name in PRESET_NAMES {
            let s = Scenario::preset(name).unwrap();
            assert_eq!(s.name, name);
            assert!(s.sim.dependence_gain >= 0.5);
            assert!(s.rate_points.len() >= 4);
        }
        assert!(Scenario::preset("fast").is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = Scenario::preset("panning").unwrap().with_frames(3).unwrap();
        assert_eq!(s.render_frame(2), s.render_frame(2));
        assert_ne!(s.render_frame(1), s.render_frame(2));
    }

    #[test]
    fn motion_level_orders_presets() {
        let epp = |name: &str| {
            let s = Scenario::preset(name).unwrap().with_frames(8).unwrap();
            let low: Vec<_> = s.render_all().iter().map(|f| downsample_half(f).unwrap()).collect();
            let refs: Vec<_> = low.iter().collect();
            compute_epp(&refs, 8).unwrap()
        };
        assert!(epp("static") < 2.5);
        assert!(epp("panning") >= 2.5);
    }

    #[test]
    fn scene_cuts_switch_to_intra() {
        let s = Scenario::preset("scene-change").unwrap();
        let cut = s.content.scene_cuts[0];
        assert_eq!(s.scene_of(cut - 1) + 1, s.scene_of(cut));
        let across = s.frame_model(cut, &[cut - 1]);
        assert_eq!(across.complexity, s.sim.intra_complexity);
        assert_eq!(across.dependence_gain, 0.0);
        let within = s.frame_model(cut + 1, &[cut]);
        assert_eq!(within.complexity, s.sim.inter_complexity);
        assert_eq!(s.frame_model(0, &[]).complexity, s.sim.intra_complexity);
    }

    #[test]
    fn explicit_models_must_cover_every_frame() {
        let mut s = Scenario::preset("static").unwrap().with_frames(4).unwrap();
        let m = s.frame_model(1, &[0]);
        s.frame_models = Some(vec![m; 3]);
        assert!(s.validate().is_err());
        s.frame_models = Some(vec![m; 4]);
        s.validate().unwrap();
    }
}
