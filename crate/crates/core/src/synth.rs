//! Synthetic point-pair instances: inliers `y = R*x + ε`, random outliers and
//! clustered outliers consistent with a single wrong rotation.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat3, Vec3, Vec4, Vector};
use crate::rotmath::{build_q, quat_angle, DataMatrix, Rotation, UnitQuaternion};
use crate::scalar::Real;

/// Inlier noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    /// Uniform in the ball of radius `delta`.
    Bounded { delta: f64 },
    Gaussian { sigma: f64 },
    /// Isotropic Gaussian conditioned on `‖ε‖ ≤ delta` (rejection sampling).
    TruncatedGaussian { sigma: f64, delta: f64 },
}

impl NoiseModel {
    /// Radius every inlier residual is guaranteed to respect, if any.
    pub fn bound(&self) -> Option<f64> {
        match *self {
            NoiseModel::None => Some(0.0),
            NoiseModel::Bounded { delta } | NoiseModel::TruncatedGaussian { delta, .. } => Some(delta),
            NoiseModel::Gaussian { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseModel::None => true,
            NoiseModel::Bounded { delta } => delta >= 0.0 && delta.is_finite(),
            NoiseModel::Gaussian { sigma } => sigma >= 0.0 && sigma.is_finite(),
            NoiseModel::TruncatedGaussian { sigma, delta } => {
                sigma >= 0.0 && sigma.is_finite() && delta > 0.0 && delta.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("bad noise parameters {self:?}"))
        }
    }
}

/// Distribution of the source points `x` (and of random outlier `y`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XDistribution {
    /// Entries i.i.d. `N(0, 1)`.
    #[default]
    GaussianUnit,
    /// Uniform on the unit sphere.
    UniformSphere,
}

/// How outliers are produced, as requested in a [`GenConfig`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierSpec {
    #[default]
    None,
    /// `x` and `y` independent and uniform on the unit sphere.
    RandomSphere,
    /// `x` and `y` independent with `N(0, I)` entries.
    RandomGaussian,
    /// All outliers satisfy `y = R_cl x` for the given quaternion.
    Clustered { w_cl: [f64; 4] },
    /// Clustered, with `w_cl` drawn so that `|w_clᵀw*| = dot`.
    ClusteredDot { dot: f64 },
}

/// Outlier model as recorded in an [`Instance`]; clustered quaternions are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierModel {
    None,
    RandomSphere,
    RandomGaussian,
    Clustered { w_cl: [f64; 4] },
}

/// Generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub ell: usize,
    pub kstar: usize,
    pub noise: NoiseModel,
    pub x_distribution: XDistribution,
    pub outliers: OutlierSpec,
    /// Source-point distribution for clustered outliers.
    pub cluster_x_distribution: XDistribution,
    /// Fixed ground truth, row-major; random when absent.
    pub r_star: Option<[f64; 9]>,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            ell: 10,
            kstar: 10,
            noise: NoiseModel::None,
            x_distribution: XDistribution::GaussianUnit,
            outliers: OutlierSpec::None,
            cluster_x_distribution: XDistribution::UniformSphere,
            r_star: None,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn clean(ell: usize, seed: u64) -> Self {
        GenConfig { ell, kstar: ell, seed, ..Default::default() }
    }

    pub fn gaussian(ell: usize, kstar: usize, sigma: f64, seed: u64) -> Self {
        let noise = if sigma > 0.0 { NoiseModel::Gaussian { sigma } } else { NoiseModel::None };
        GenConfig { ell, kstar, noise, seed, ..Default::default() }
    }

    pub fn with_outliers(mut self, spec: OutlierSpec) -> Self {
        self.outliers = spec;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 {
            return invalid("ell must be at least 1");
        }
        if self.kstar > self.ell {
            return invalid(format!("kstar {} exceeds ell {}", self.kstar, self.ell));
        }
        if self.kstar < self.ell && matches!(self.outliers, OutlierSpec::None) {
            return invalid("kstar < ell requires an outlier model");
        }
        if let OutlierSpec::ClusteredDot { dot } = self.outliers {
            if !(0.0..1.0).contains(&dot.abs()) {
                return invalid(format!("cluster dot {dot} must lie in [0, 1)"));
            }
        }
        self.noise.validate()
    }
}

/// One correspondence. `eps` is recorded for inliers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Pair<T: Real> {
    pub y: Vec3<T>,
    pub x: Vec3<T>,
    pub inlier: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec3<T>>,
}

/// A generated (or loaded) problem instance. Inliers come first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Instance<T: Real> {
    pub seed: u64,
    pub ell: usize,
    pub kstar: usize,
    #[serde(rename = "R_star")]
    pub r_star: Rotation<T>,
    pub noise_model: NoiseModel,
    pub outlier_model: OutlierModel,
    pub pairs: Vec<Pair<T>>,
}

impl<T: Real> Instance<T> {
    pub fn data_matrices(&self) -> Vec<DataMatrix<T>> {
        self.pairs.iter().map(|p| build_q(&p.y, &p.x)).collect()
    }

    pub fn inlier_set(&self) -> Vec<usize> {
        self.pairs.iter().enumerate().filter(|(_, p)| p.inlier).map(|(i, _)| i).collect()
    }

    pub fn w_star(&self) -> UnitQuaternion<T> {
        self.r_star.to_quaternion()
    }

    /// The clustered rotation, when the outlier model has one.
    pub fn w_cl(&self) -> Option<UnitQuaternion<T>> {
        match self.outlier_model {
            OutlierModel::Clustered { w_cl } => UnitQuaternion::from_vector(Vector(w_cl).cast()).ok(),
            _ => None,
        }
    }

    /// Checks internal consistency (counts, inliers first, finite data).
    pub fn validate(&self) -> Result<()> {
        if self.pairs.len() != self.ell || self.ell == 0 {
            return invalid(format!("ell = {} but {} pairs", self.ell, self.pairs.len()));
        }
        if self.kstar > self.ell {
            return invalid("kstar exceeds ell");
        }
        for (i, p) in self.pairs.iter().enumerate() {
            if p.inlier != (i < self.kstar) {
                return invalid(format!("pair {i}: inliers must occupy indices 0..kstar"));
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return invalid(format!("pair {i} has non-finite coordinates"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(s)?;
        Rotation::new(*inst.r_star.matrix())?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json(&s)
    }
}

/// Generator for the stream of pair `index` (stream 0 is reserved for global draws).
pub(crate) fn pair_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn global_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian3<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

fn unit3<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let g = gaussian3(rng);
        let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if n > 1e-12 {
            return [g[0] / n, g[1] / n, g[2] / n];
        }
    }
}

fn draw_point<R: Rng>(rng: &mut R, d: XDistribution) -> [f64; 3] {
    match d {
        XDistribution::GaussianUnit => gaussian3(rng),
        XDistribution::UniformSphere => unit3(rng),
    }
}

fn draw_noise<R: Rng>(rng: &mut R, m: NoiseModel) -> [f64; 3] {
    match m {
        NoiseModel::None => [0.0; 3],
        NoiseModel::Gaussian { sigma } => gaussian3(rng).map(|v| sigma * v),
        NoiseModel::Bounded { delta } => {
            let u = unit3(rng);
            let r = delta * rng.random::<f64>().cbrt();
            u.map(|v| r * v)
        }
        NoiseModel::TruncatedGaussian { sigma, delta } => loop {
            let e = gaussian3(rng).map(|v| sigma * v);
            if (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt() <= delta {
                break e;
            }
        },
    }
}

fn v3<T: Real>(a: [f64; 3]) -> Vec3<T> {
    Vec3::new(T::c(a[0]), T::c(a[1]), T::c(a[2]))
}

/// Uniformly random rotation (normalised Gaussian quaternion).
pub fn random_rotation<T: Real, R: Rng>(rng: &mut R) -> Rotation<T> {
    random_quaternion::<T, R>(rng).to_rotation()
}

pub fn random_quaternion<T: Real, R: Rng>(rng: &mut R) -> UnitQuaternion<T> {
    loop {
        let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(q) = UnitQuaternion::from_vector(Vector(g).cast()) {
            return q;
        }
    }
}

/// Inlier pairs `0..kstar` of the configured instance.
pub fn gen_inliers<T: Real>(config: &GenConfig, r_star: &Rotation<T>) -> Vec<Pair<T>> {
    (0..config.kstar)
        .map(|i| {
            let mut rng = pair_rng(config.seed, i);
            let x = draw_point(&mut rng, config.x_distribution);
            let e = draw_noise(&mut rng, config.noise);
            let x: Vec3<T> = v3(x);
            let eps: Vec3<T> = v3(e);
            Pair { y: r_star.apply(&x) + eps, x, inlier: true, eps: Some(eps) }
        })
        .collect()
}

/// `count` i.i.d. random outliers whose streams start at pair index `first`.
pub fn gen_random_outliers<T: Real>(count: usize, distribution: XDistribution, seed: u64, first: usize) -> Vec<Pair<T>> {
    (0..count)
        .map(|k| {
            let mut rng = pair_rng(seed, first + k);
            let x = draw_point(&mut rng, distribution);
            let y = draw_point(&mut rng, distribution);
            Pair { y: v3(y), x: v3(x), inlier: false, eps: None }
        })
        .collect()
}

/// `count` outliers exactly consistent with `R_cl`. Fails when `w_cl = ±w_star`.
pub fn gen_clustered_outliers<T: Real>(
    count: usize,
    w_cl: &UnitQuaternion<T>,
    w_star: &UnitQuaternion<T>,
    distribution: XDistribution,
    seed: u64,
    first: usize,
) -> Result<Vec<Pair<T>>> {
    if quat_angle(w_cl, w_star) <= T::tol(1e-6) {
        return invalid("clustered quaternion coincides with the ground truth");
    }
    let r_cl = w_cl.to_rotation();
    Ok((0..count)
        .map(|k| {
            let mut rng = pair_rng(seed, first + k);
            let x: Vec3<T> = v3(draw_point(&mut rng, distribution));
            Pair { y: r_cl.apply(&x), x, inlier: false, eps: None }
        })
        .collect())
}

/// A unit quaternion with `w_clᵀw* = dot`, otherwise uniformly oriented.
pub fn quaternion_at_dot<T: Real, R: Rng>(w_star: &UnitQuaternion<T>, dot: f64, rng: &mut R) -> Result<UnitQuaternion<T>> {
    if !(dot.abs() < 1.0) {
        return invalid(format!("dot {dot} must satisfy |dot| < 1"));
    }
    let ws = w_star.as_vec().cast::<f64>();
    loop {
        let g: Vec4<f64> = Vector(std::array::from_fn(|_| rng.sample(StandardNormal)));
        let perp = g - ws.scale(g.dot(&ws));
        if let Some(u) = perp.normalized() {
            let w = ws.scale(dot) + u.scale((1.0 - dot * dot).sqrt());
            return UnitQuaternion::from_vector(w.cast());
        }
    }
}

/// Full instance: inliers first, then outliers. Deterministic in `config.seed`.
pub fn gen_instance<T: Real>(config: &GenConfig) -> Result<Instance<T>> {
    config.validate()?;
    let mut grng = global_rng(config.seed);
    let r_star: Rotation<T> = match config.r_star {
        Some(r) => {
            let m: Mat3<f64> = Mat3::from_row_major(&r).expect("nine entries");
            Rotation::new(m.cast())?
        }
        None => random_rotation(&mut grng),
    };
    let w_star = r_star.to_quaternion();
    let n_out = config.ell - config.kstar;
    let mut pairs = gen_inliers(config, &r_star);
    let model = match config.outliers {
        OutlierSpec::None => OutlierModel::None,
        OutlierSpec::RandomSphere => {
            pairs.extend(gen_random_outliers(n_out, XDistribution::UniformSphere, config.seed, config.kstar));
            OutlierModel::RandomSphere
        }
        OutlierSpec::RandomGaussian => {
            pairs.extend(gen_random_outliers(n_out, XDistribution::GaussianUnit, config.seed, config.kstar));
            OutlierModel::RandomGaussian
        }
        OutlierSpec::Clustered { .. } | OutlierSpec::ClusteredDot { .. } => {
            let w_cl: UnitQuaternion<T> = match config.outliers {
                OutlierSpec::Clustered { w_cl } => UnitQuaternion::from_vector(Vector(w_cl).cast())?,
                OutlierSpec::ClusteredDot { dot } => quaternion_at_dot(&w_star, dot, &mut grng)?,
                _ => unreachable!(),
            };
            let out = gen_clustered_outliers(
                n_out,
                &w_cl,
                &w_star,
                config.cluster_x_distribution,
                config.seed,
                config.kstar,
            )?;
            pairs.extend(out);
            let v = w_cl.as_vec().cast::<f64>();
            OutlierModel::Clustered { w_cl: v.0 }
        }
    };
    let inst = Instance {
        seed: config.seed,
        ell: config.ell,
        kstar: config.kstar,
        r_star,
        noise_model: config.noise,
        outlier_model: model,
        pairs,
    };
    inst.validate().map_err(|e| Error::InvalidArgument(format!("generated instance invalid: {e}")))?;
    Ok(inst)
}
