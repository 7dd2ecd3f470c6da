//! Synthetic datasets with a known miscalibration field.
//!
//! Both generators share one logit model: `l(x) = w.x + eps`, `f = sigm(l)`,
//! and outcomes drawn from `eta = sigm(l + shift(x))`. The stored true field
//! is `eta - f`.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn default_w() -> [f64; 2] {
    let s = 1.5 / std::f64::consts::SQRT_2;
    [s, -s]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThreeClusterSpec {
    pub n: usize,
    pub cluster_centers: [[f64; 2]; 3],
    pub cluster_std: f64,
    pub logit_direction: [f64; 2],
    pub logit_noise_std: f64,
    pub shifts: [f64; 3],
    pub seed: u64,
}

impl Default for ThreeClusterSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            cluster_centers: [[0.0, 0.0], [3.0, 0.0], [1.5, 2.6]],
            cluster_std: 0.6,
            logit_direction: default_w(),
            logit_noise_std: 0.5,
            shifts: [-1.0, 0.0, 1.0],
            seed: 0,
        }
    }
}

impl ThreeClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::Config(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::Config("cluster_std must be positive".into()));
        }
        if !(self.logit_noise_std >= 0.0 && self.logit_noise_std.is_finite()) {
            return Err(Error::Config("logit_noise_std must be non-negative".into()));
        }
        let finite = self
            .cluster_centers
            .iter()
            .flatten()
            .chain(&self.logit_direction)
            .chain(&self.shifts)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("three-cluster spec holds non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinusoidSpec {
    pub n: usize,
    pub amplitude: f64,
    pub frequency: u32,
    pub direction: [f64; 2],
    pub logit_direction: [f64; 2],
    pub logit_noise_std: f64,
    pub seed: u64,
}

impl Default for SinusoidSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            amplitude: 0.6,
            frequency: 3,
            direction: [1.0, 0.0],
            logit_direction: default_w(),
            logit_noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SinusoidSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config("amplitude must be non-negative".into()));
        }
        if self.frequency == 0 {
            return Err(Error::Config("frequency must be a positive integer".into()));
        }
        let norm = self.direction[0].hypot(self.direction[1]);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("direction must be a unit vector, |u| = {norm}")));
        }
        if !(self.logit_noise_std >= 0.0 && self.logit_noise_std.is_finite()) {
            return Err(Error::Config("logit_noise_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Logit shift at a point.
    pub fn shift(&self, x: [f64; 2]) -> f64 {
        let t = self.direction[0] * x[0] + self.direction[1] * x[1];
        self.amplitude * (2.0 * std::f64::consts::PI * f64::from(self.frequency) * t).sin()
    }
}

/// Shared label model: base logit plus Gaussian noise gives `f`; adding the
/// regime shift gives the true probability. Returns `(f, true_field, y)`.
fn outcomes(
    n: usize,
    base_logit: impl Fn(usize) -> f64,
    noise_std: f64,
    shift: impl Fn(usize) -> f64,
    seed: u64,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    let mut noise_rng = rng::stream(seed, Purpose::LogitNoise);
    let mut label_rng = rng::stream(seed, Purpose::Labels);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut f = Array1::zeros(n);
    let mut field = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let l = base_logit(i) + noise_std * normal.sample(&mut noise_rng);
        let fi = sigmoid(l);
        let eta = sigmoid(l + shift(i));
        f[i] = fi;
        field[i] = eta - fi;
        y[i] = if label_rng.gen::<f64>() < eta { 1.0 } else { 0.0 };
    }
    (f, field, y)
}

fn planar_logit(x: &Array2<f64>, w: [f64; 2]) -> impl Fn(usize) -> f64 + '_ {
    move |i| w[0] * x[[i, 0]] + w[1] * x[[i, 1]]
}

pub fn gen_three_cluster(spec: &ThreeClusterSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let mut pos_rng = rng::stream(spec.seed, Purpose::Positions);
    let mut cluster_rng = rng::stream(spec.seed, Purpose::Cluster);
    let normal = Normal::new(0.0, spec.cluster_std).unwrap();
    let clusters: Vec<i64> = (0..n).map(|_| cluster_rng.gen_range(0..3)).collect();
    let mut x = Array2::zeros((n, 2));
    for (i, &c) in clusters.iter().enumerate() {
        let center = spec.cluster_centers[c as usize];
        x[[i, 0]] = center[0] + normal.sample(&mut pos_rng);
        x[[i, 1]] = center[1] + normal.sample(&mut pos_rng);
    }
    let (f, field, y) = outcomes(
        n,
        planar_logit(&x, spec.logit_direction),
        spec.logit_noise_std,
        |i| spec.shifts[clusters[i] as usize],
        spec.seed,
    );
    let names = (0..3)
        .map(|c| (c as i64, format!("cluster{c}_shift{:+}", spec.shifts[c])))
        .collect();
    Ok(Dataset::new(x, f, y, Some(field), Some(clusters))?.with_group_names(names))
}

pub fn gen_sinusoidal(spec: &SinusoidSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut pos_rng = rng::stream(spec.seed, Purpose::Positions);
    let x = Array2::from_shape_simple_fn((spec.n, 2), || pos_rng.gen::<f64>());
    let shifts: Vec<f64> = x
        .outer_iter()
        .map(|r| spec.shift([r[0], r[1]]))
        .collect();
    let (f, field, y) = outcomes(
        spec.n,
        planar_logit(&x, spec.logit_direction),
        spec.logit_noise_std,
        |i| shifts[i],
        spec.seed,
    );
    Dataset::new(x, f, y, Some(field), None)
}

/// Stand-in for precomputed language-model triples: topic clusters in a
/// high-dimensional embedding space, each topic with its own logit shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PseudoLlmSpec {
    pub n: usize,
    pub dim: usize,
    /// One entry per topic; zero means the topic is calibrated.
    pub topic_shifts: Vec<f64>,
    /// Distance of each topic centre from the origin.
    pub center_norm: f64,
    /// Norm of the typical within-topic offset.
    pub spread: f64,
    /// Per-topic base logits are drawn from `U(-topic_bias, topic_bias)`.
    pub topic_bias: f64,
    pub logit_noise_std: f64,
    pub seed: u64,
}

impl Default for PseudoLlmSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            dim: 128,
            topic_shifts: vec![-1.5, -1.0, 0.0, 0.0, 1.0, 1.5],
            center_norm: 1.0,
            spread: 0.6,
            topic_bias: 1.0,
            logit_noise_std: 0.5,
            seed: 0,
        }
    }
}

impl PseudoLlmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.dim < 2 || self.topic_shifts.is_empty() {
            return Err(Error::Config("pseudo-LLM spec needs n >= 1, dim >= 2 and at least one topic".into()));
        }
        let finite = self.topic_shifts.iter().all(|v| v.is_finite());
        let pos = |v: f64| v >= 0.0 && v.is_finite();
        if !finite || !pos(self.center_norm) || !pos(self.spread) || !pos(self.topic_bias) || !pos(self.logit_noise_std)
        {
            return Err(Error::Config("pseudo-LLM spec holds negative or non-finite values".into()));
        }
        Ok(())
    }
}

pub fn gen_pseudo_llm(spec: &PseudoLlmSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d, t) = (spec.n, spec.dim, spec.topic_shifts.len());
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut layout_rng = rng::sub_stream(spec.seed, Purpose::Cluster, 1);
    let mut random_unit = || {
        let v: Vec<f64> = (0..d).map(|_| unit.sample(&mut layout_rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.into_iter().map(|a| a / norm).collect::<Vec<f64>>()
    };
    let centers: Vec<Vec<f64>> = (0..t).map(|_| random_unit()).collect();
    let direction = random_unit();
    let biases: Vec<f64> = (0..t)
        .map(|_| spec.topic_bias * (2.0 * layout_rng.gen::<f64>() - 1.0))
        .collect();

    let mut topic_rng = rng::stream(spec.seed, Purpose::Cluster);
    let topics: Vec<i64> = (0..n).map(|_| topic_rng.gen_range(0..t as i64)).collect();
    let mut pos_rng = rng::stream(spec.seed, Purpose::Positions);
    let scale = spec.spread / (d as f64).sqrt();
    let mut x = Array2::zeros((n, d));
    let mut within = vec![0.0; n];
    for i in 0..n {
        let c = &centers[topics[i] as usize];
        let mut proj = 0.0;
        for k in 0..d {
            let z = unit.sample(&mut pos_rng);
            x[[i, k]] = spec.center_norm * c[k] + scale * z;
            proj += direction[k] * z;
        }
        within[i] = proj;
    }
    let (f, field, y) = outcomes(
        n,
        |i| biases[topics[i] as usize] + within[i],
        spec.logit_noise_std,
        |i| spec.topic_shifts[topics[i] as usize],
        spec.seed,
    );
    let names = (0..t)
        .map(|k| (k as i64, format!("topic{k}_shift{:+}", spec.topic_shifts[k])))
        .collect();
    Ok(Dataset::new(x, f, y, Some(field), Some(topics))?.with_group_names(names))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_shift_cluster_has_zero_field() {
        let ds = gen_three_cluster(&ThreeClusterSpec {
            n: 3000,
            ..Default::default()
        })
        .unwrap();
        let g = ds.group_labels().unwrap();
        let t = ds.true_field().unwrap();
        let mut seen = 0;
        for i in 0..ds.len() {
            if g[i] == 1 {
                assert_eq!(t[i], 0.0);
                seen += 1;
            }
        }
        assert!(seen > 800);
    }

    #[test]
    fn unit_shift_at_zero_logit() {
        // sigm(1) - sigm(0)
        let v = sigmoid(1.0) - sigmoid(0.0);
        assert!((v - 0.231_058_578_630_005).abs() < 1e-12);
        let spec = ThreeClusterSpec {
            n: 3,
            logit_direction: [0.0, 0.0],
            logit_noise_std: 0.0,
            ..Default::default()
        };
        let ds = gen_three_cluster(&spec).unwrap();
        for i in 0..3 {
            let c = ds.group_labels().unwrap()[i] as usize;
            let expect = sigmoid(spec.shifts[c]) - 0.5;
            assert!((ds.true_field().unwrap()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn cluster_label_rates_match_eta() {
        let ds = gen_three_cluster(&ThreeClusterSpec::default()).unwrap();
        let g = ds.group_labels().unwrap();
        for c in 0..3 {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| g[i] == c).collect();
            let m = idx.len() as f64;
            let ybar = idx.iter().map(|&i| ds.outcomes()[i]).sum::<f64>() / m;
            let etas: Vec<f64> = idx
                .iter()
                .map(|&i| ds.confidences()[i] + ds.true_field().unwrap()[i])
                .collect();
            let ebar = etas.iter().sum::<f64>() / m;
            let var = etas.iter().map(|e| e * (1.0 - e)).sum::<f64>() / (m * m);
            assert!((ybar - ebar).abs() <= 3.0 * var.sqrt(), "cluster {c}: {ybar} vs {ebar}");
        }
    }

    #[test]
    fn zero_amplitude_sinusoid_is_calibrated() {
        let ds = gen_sinusoidal(&SinusoidSpec {
            amplitude: 0.0,
            n: 500,
            ..Default::default()
        })
        .unwrap();
        assert!(ds.true_field().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sinusoid_field_sign_follows_shift() {
        let spec = SinusoidSpec::default();
        let ds = gen_sinusoidal(&spec).unwrap();
        for (row, &t) in ds.embeddings().outer_iter().zip(ds.true_field().unwrap()) {
            let s = spec.shift([row[0], row[1]]);
            assert!(s.signum() == t.signum() || (s == 0.0 && t == 0.0), "{s} {t}");
            assert!((0.0..=1.0).contains(&row[0]) && (0.0..=1.0).contains(&row[1]));
        }
    }

    #[test]
    fn sinusoid_peak_matches_dense_grid() {
        let spec = SinusoidSpec {
            n: 1_000_000,
            amplitude: 1.0,
            frequency: 3,
            logit_noise_std: 0.0,
            ..Default::default()
        };
        let ds = gen_sinusoidal(&spec).unwrap();
        let peak = ds.true_field().unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // l = w.x spans [-|w|_1/.., ..] on the unit square; the shift spans [-1, 1].
        let w = spec.logit_direction;
        let (lo, hi) = (w[1], w[0]);
        let mut grid_max = 0.0f64;
        for i in 0..=200_000 {
            let t = lo + (hi - lo) * i as f64 / 200_000.0;
            grid_max = grid_max.max(sigmoid(t + 1.0) - sigmoid(t)).max(sigmoid(t) - sigmoid(t - 1.0));
        }
        assert!((peak - grid_max).abs() < 1e-3, "{peak} vs {grid_max}");
    }

    #[test]
    fn generators_are_deterministic_and_respect_invariants() {
        let a = gen_three_cluster(&ThreeClusterSpec { n: 200, seed: 4, ..Default::default() }).unwrap();
        let b = gen_three_cluster(&ThreeClusterSpec { n: 200, seed: 4, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        let s = gen_sinusoidal(&SinusoidSpec { n: 200, seed: 4, ..Default::default() }).unwrap();
        for ds in [&a, &s] {
            let t = ds.true_field().unwrap();
            for i in 0..ds.len() {
                let f = ds.confidences()[i];
                let eta = f + t[i];
                assert!(f > 0.0 && f < 1.0 && eta > 0.0 && eta < 1.0);
            }
        }
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(gen_three_cluster(&ThreeClusterSpec { n: 2, ..Default::default() }).is_err());
        let bad_k = SinusoidSpec { frequency: 0, ..Default::default() };
        assert!(matches!(gen_sinusoidal(&bad_k), Err(Error::Config(m)) if m.contains("frequency")));
        let bad_u = SinusoidSpec { direction: [1.0, 0.1], ..Default::default() };
        assert!(gen_sinusoidal(&bad_u).is_err());
    }

    #[test]
    fn pseudo_llm_plants_topic_regimes() {
        let ds = gen_pseudo_llm(&PseudoLlmSpec {
            n: 2000,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds.dim(), 128);
        let g = ds.group_labels().unwrap();
        let t = ds.true_field().unwrap();
        let spec = PseudoLlmSpec::default();
        for i in 0..ds.len() {
            let s = spec.topic_shifts[g[i] as usize];
            assert_eq!(t[i] == 0.0, s == 0.0);
            assert_eq!(t[i] > 0.0, s > 0.0);
        }
        let again = gen_pseudo_llm(&PseudoLlmSpec {
            n: 2000,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn changing_shifts_keeps_positions() {
        let a = gen_three_cluster(&ThreeClusterSpec { n: 100, ..Default::default() }).unwrap();
        let b = gen_three_cluster(&ThreeClusterSpec {
            n: 100,
            shifts: [-2.0, 0.5, 2.0],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a.embeddings(), b.embeddings());
        assert_eq!(a.confidences(), b.confidences());
    }
}
