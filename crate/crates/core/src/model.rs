//! Acquisition and relaxation grids, the separable IR-CPMG kernels, the
//! Kronecker-structured forward operator, phantoms and the noise model.
//!
//! Every vectorized field in this crate uses column-major order: a matrix
//! `X` of shape `rows x cols` is stored as `vec(X)`, the concatenation of its
//! columns. `nalgebra::DMatrix` uses the same layout, so reshapes are free.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Error, Result};

fn check_axis(name: &'static str, values: &[f64]) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::InvalidGrid {
            axis: name,
            reason: format!("needs at least 2 points, got {}", values.len()),
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(Error::InvalidGrid {
            axis: name,
            reason: format!("entries must be finite and positive, found {v}"),
        });
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid {
            axis: name,
            reason: "entries must be strictly increasing".into(),
        });
    }
    Ok(())
}

/// `count` points in geometric progression from `start` to `end` inclusive.
pub fn geometric_space(start: f64, end: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && start > 0.0 && end > start);
    let (a, b) = (start.ln(), end.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                end
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Sampling times of the two acquisition dimensions (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGrid {
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl AcquisitionGrid {
    pub fn new(t1: Vec<f64>, t2: Vec<f64>) -> Result<Self> {
        check_axis("t1", &t1)?;
        check_axis("t2", &t2)?;
        Ok(Self { t1, t2 })
    }

    /// Builds a grid without validation. Only used to probe degenerate
    /// kernels (e.g. `t = 0`) in tests.
    #[doc(hidden)]
    pub fn new_unchecked(t1: Vec<f64>, t2: Vec<f64>) -> Self {
        Self { t1, t2 }
    }

    /// Default IR-CPMG acquisition with `m1` inversion times geometric in
    /// [1 ms, 2.8 s] and `m2` echo times taken as window centers of a
    /// 1024-echo train with 500 us echo spacing.
    pub fn default_ir_cpmg(m1: usize, m2: usize) -> Result<Self> {
        const ECHO_SPACING: f64 = 500e-6;
        const ECHO_COUNT: usize = 1024;
        if m1 < 2 || !(2..=ECHO_COUNT).contains(&m2) {
            return Err(Error::InvalidGrid {
                axis: "t2",
                reason: format!("unsupported default acquisition size {m1}x{m2}"),
            });
        }
        let t1 = geometric_space(1e-3, 2.8, m1);
        let echoes: Vec<f64> = (1..=ECHO_COUNT).map(|n| n as f64 * ECHO_SPACING).collect();
        let plan = crate::io::WindowingPlan::geometric(ECHO_COUNT, m2)?;
        let t2 = plan.average(&echoes);
        Self::new(t1, t2)
    }

    pub fn t1(&self) -> &[f64] {
        &self.t1
    }

    pub fn t2(&self) -> &[f64] {
        &self.t2
    }

    pub fn m1(&self) -> usize {
        self.t1.len()
    }

    pub fn m2(&self) -> usize {
        self.t2.len()
    }
}

/// Relaxation times at which the distribution is sampled (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationGrid {
    t1: Vec<f64>,
    t2: Vec<f64>,
}

impl RelaxationGrid {
    pub fn new(t1: Vec<f64>, t2: Vec<f64>) -> Result<Self> {
        check_axis("T1", &t1)?;
        check_axis("T2", &t2)?;
        Ok(Self { t1, t2 })
    }

    /// `nx x ny` log-spaced grid over [1 ms, 10 s] on both axes.
    pub fn log_spaced(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid {
                axis: "T1",
                reason: format!("grid {nx}x{ny} too small"),
            });
        }
        Self::new(geometric_space(1e-3, 10.0, nx), geometric_space(1e-3, 10.0, ny))
    }

    pub fn t1(&self) -> &[f64] {
        &self.t1
    }

    pub fn t2(&self) -> &[f64] {
        &self.t2
    }

    pub fn nx(&self) -> usize {
        self.t1.len()
    }

    pub fn ny(&self) -> usize {
        self.t2.len()
    }
}

/// `K1[i][j] = 1 - 2 exp(-t1_i / T1_j)` (inversion recovery).
pub fn build_t1_kernel(grid: &AcquisitionGrid, relax: &RelaxationGrid) -> DMatrix<f64> {
    DMatrix::from_fn(grid.m1(), relax.nx(), |i, j| {
        1.0 - 2.0 * (-grid.t1[i] / relax.t1[j]).exp()
    })
}

/// `K2[i][j] = exp(-t2_i / T2_j)` (CPMG decay).
pub fn build_t2_kernel(grid: &AcquisitionGrid, relax: &RelaxationGrid) -> DMatrix<f64> {
    DMatrix::from_fn(grid.m2(), relax.ny(), |i, j| (-grid.t2[i] / relax.t2[j]).exp())
}

/// The two factors of `K = K2 (x) K1`, plus their Gram matrices.
///
/// `K` itself is never formed: `K f = vec(K1 X K2^T)` and
/// `K^T K f = vec(G1 X G2)` with `G1 = K1^T K1`, `G2 = K2^T K2`.
#[derive(Debug, Clone)]
pub struct KernelPair {
    k1: DMatrix<f64>,
    k2: DMatrix<f64>,
    gram1: DMatrix<f64>,
    gram2: DMatrix<f64>,
}

impl KernelPair {
    pub fn new(k1: DMatrix<f64>, k2: DMatrix<f64>) -> Result<Self> {
        if k1.iter().chain(k2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel entries"));
        }
        if k1.is_empty() || k2.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "kernel",
                expected: 1,
                found: 0,
            });
        }
        let gram1 = k1.tr_mul(&k1);
        let gram2 = k2.tr_mul(&k2);
        Ok(Self { k1, k2, gram1, gram2 })
    }

    pub fn from_grids(grid: &AcquisitionGrid, relax: &RelaxationGrid) -> Self {
        Self::new(build_t1_kernel(grid, relax), build_t2_kernel(grid, relax))
            .expect("kernels of validated grids are finite")
    }

    pub fn k1(&self) -> &DMatrix<f64> {
        &self.k1
    }

    pub fn k2(&self) -> &DMatrix<f64> {
        &self.k2
    }

    /// `(M1, M2)`.
    pub fn data_shape(&self) -> (usize, usize) {
        (self.k1.nrows(), self.k2.nrows())
    }

    /// `(N_x, N_y)`.
    pub fn map_shape(&self) -> (usize, usize) {
        (self.k1.ncols(), self.k2.ncols())
    }

    pub fn data_len(&self) -> usize {
        self.k1.nrows() * self.k2.nrows()
    }

    pub fn map_len(&self) -> usize {
        self.k1.ncols() * self.k2.ncols()
    }

    fn check_len(&self, what: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                found,
            })
        }
    }

    /// `K f = vec(K1 X K2^T)`.
    pub fn matvec(&self, f: &[f64]) -> Result<DVector<f64>> {
        let (nx, ny) = self.map_shape();
        self.check_len("distribution", nx * ny, f.len())?;
        let x = DMatrix::from_column_slice(nx, ny, f);
        let y = &self.k1 * x * self.k2.transpose();
        Ok(DVector::from_vec(y.data.into()))
    }

    /// `K^T r = vec(K1^T R K2)`.
    pub fn rmatvec(&self, r: &[f64]) -> Result<DVector<f64>> {
        let (m1, m2) = self.data_shape();
        self.check_len("signal", m1 * m2, r.len())?;
        let rm = DMatrix::from_column_slice(m1, m2, r);
        let y = self.k1.tr_mul(&rm) * &self.k2;
        Ok(DVector::from_vec(y.data.into()))
    }

    /// `K^T K v = vec(G1 V G2)` using the cached Gram matrices.
    pub fn gram_matvec(&self, v: &[f64]) -> Result<DVector<f64>> {
        let (nx, ny) = self.map_shape();
        self.check_len("distribution", nx * ny, v.len())?;
        let x = DMatrix::from_column_slice(nx, ny, v);
        let y = &self.gram1 * x * &self.gram2;
        Ok(DVector::from_vec(y.data.into()))
    }

    /// Dense `K2 (x) K1`. Only meant for small oracles.
    pub fn dense(&self) -> DMatrix<f64> {
        self.k2.kronecker(&self.k1)
    }
}

/// Free-function form of [`KernelPair::matvec`].
pub fn kron_matvec(kp: &KernelPair, f: &[f64]) -> Result<DVector<f64>> {
    kp.matvec(f)
}

/// Free-function form of [`KernelPair::rmatvec`].
pub fn kron_rmatvec(kp: &KernelPair, r: &[f64]) -> Result<DVector<f64>> {
    kp.rmatvec(r)
}

/// A relaxation-time distribution `F` (`N_x x N_y`).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    values: DMatrix<f64>,
}

impl Distribution {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution"));
        }
        Ok(Self { values })
    }

    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            values: DMatrix::zeros(nx, ny),
        }
    }

    pub fn from_vec(nx: usize, ny: usize, f: &[f64]) -> Result<Self> {
        if f.len() != nx * ny {
            return Err(Error::DimensionMismatch {
                what: "distribution",
                expected: nx * ny,
                found: f.len(),
            });
        }
        Self::new(DMatrix::from_column_slice(nx, ny, f))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Column-major vector view `f`.
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.values.as_slice())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }
}

/// Measured or simulated signal `S` (`M1 x M2`), optionally with the clean
/// model output and the noise that was added to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalData {
    values: DMatrix<f64>,
    clean: Option<DVector<f64>>,
    noise: Option<DVector<f64>>,
    noise_level: Option<f64>,
}

impl SignalData {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self {
            values,
            clean: None,
            noise: None,
            noise_level: None,
        })
    }

    pub fn from_vec(m1: usize, m2: usize, s: &[f64]) -> Result<Self> {
        if s.len() != m1 * m2 {
            return Err(Error::DimensionMismatch {
                what: "signal",
                expected: m1 * m2,
                found: s.len(),
            });
        }
        Self::new(DMatrix::from_column_slice(m1, m2, s))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// The noiseless model output `y`, when known.
    pub fn clean(&self) -> Option<&DVector<f64>> {
        self.clean.as_ref()
    }

    /// The added noise `e`, when known.
    pub fn noise(&self) -> Option<&DVector<f64>> {
        self.noise.as_ref()
    }

    /// The noise level `delta = ||e||`, when known.
    pub fn noise_level(&self) -> Option<f64> {
        self.noise_level
    }

    /// Attaches a known noise level without the noise vector itself.
    pub fn with_noise_level(mut self, delta: f64) -> Self {
        self.noise_level = Some(delta);
        self
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

/// Noiseless data `y = K f`.
pub fn forward_model(kp: &KernelPair, dist: &Distribution) -> Result<SignalData> {
    let (nx, ny) = kp.map_shape();
    if dist.shape() != (nx, ny) {
        return Err(Error::DimensionMismatch {
            what: "distribution",
            expected: nx * ny,
            found: dist.len(),
        });
    }
    let (m1, m2) = kp.data_shape();
    let y = kp.matvec(dist.as_slice())?;
    let mut sig = SignalData::from_vec(m1, m2, y.as_slice())?;
    sig.clean = Some(y);
    Ok(sig)
}

/// Adds `e = delta * eta` where `eta` is a unit-norm Gaussian direction drawn
/// from a ChaCha8 stream seeded with `seed`.
pub fn add_noise(sig: &SignalData, delta: f64, seed: u64) -> Result<SignalData> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "noise level",
            reason: format!("must be positive and finite, got {delta}"),
        });
    }
    let clean = sig
        .clean
        .clone()
        .unwrap_or_else(|| DVector::from_column_slice(sig.as_slice()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eta = DVector::from_fn(clean.len(), |_, _| StandardNormal.sample(&mut rng));
    let norm = eta.norm();
    eta /= norm;
    let noise = eta * delta;
    let s = &clean + &noise;
    let (m1, m2) = sig.shape();
    Ok(SignalData {
        values: DMatrix::from_column_slice(m1, m2, s.as_slice()),
        clean: Some(clean),
        noise: Some(noise),
        noise_level: Some(delta),
    })
}

/// Synthetic test distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Two separated peaks over a zero background.
    TwoPeaks,
    /// The same peaks plus a broad low-amplitude plateau.
    PeaksWithPlateau,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "p1-like" | "two-peaks" => Ok(Self::TwoPeaks),
            "p2" | "p2-like" | "plateau" => Ok(Self::PeaksWithPlateau),
            other => Err(Error::UnknownPhantom(other.to_string())),
        }
    }
}

/// A Gaussian bump in `(log10 T1, log10 T2)`.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    pub t1: f64,
    pub t2: f64,
    /// Standard deviation in decades.
    pub sigma: f64,
    pub amplitude: f64,
}

/// A flat-topped block in `(log10 T1, log10 T2)` with logistic edges.
#[derive(Debug, Clone, Copy)]
pub struct Plateau {
    pub t1_range: (f64, f64),
    pub t2_range: (f64, f64),
    /// Logistic edge width in decades.
    pub edge: f64,
    pub amplitude: f64,
}

pub const PHANTOM_PEAKS: [Peak; 2] = [
    Peak {
        t1: 0.05,
        t2: 0.02,
        sigma: 0.15,
        amplitude: 1.0,
    },
    Peak {
        t1: 0.5,
        t2: 0.2,
        sigma: 0.15,
        amplitude: 0.7,
    },
];

pub const PHANTOM_PLATEAU: Plateau = Plateau {
    t1_range: (0.3, 3.0),
    t2_range: (0.002, 0.02),
    edge: 0.04,
    amplitude: 0.1,
};

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Plateau {
    pub fn value(&self, t1: f64, t2: f64) -> f64 {
        let window = |x: f64, (lo, hi): (f64, f64)| {
            let x = x.log10();
            logistic((x - lo.log10()) / self.edge) * logistic((hi.log10() - x) / self.edge)
        };
        self.amplitude * window(t1, self.t1_range) * window(t2, self.t2_range)
    }

    /// Whether `(t1, t2)` lies inside the plateau at least `margin` decades
    /// away from every edge.
    pub fn contains_core(&self, t1: f64, t2: f64, margin: f64) -> bool {
        let inside = |x: f64, (lo, hi): (f64, f64)| {
            let x = x.log10();
            x >= lo.log10() + margin && x <= hi.log10() - margin
        };
        inside(t1, self.t1_range) && inside(t2, self.t2_range)
    }
}

impl Peak {
    pub fn value(&self, t1: f64, t2: f64) -> f64 {
        let d1 = (t1 / self.t1).log10();
        let d2 = (t2 / self.t2).log10();
        self.amplitude * (-(d1 * d1 + d2 * d2) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

impl PhantomKind {
    /// Overall factor applied to the unit-height shape. Chosen so that the
    /// Euclidean norm on the reference grid (64x64 for two peaks, 96x96 with
    /// the plateau) is 0.1225 and 0.0468 respectively, which puts the noise
    /// levels 1e-3 .. 1e-1 in the same signal-to-noise regime as the
    /// published experiments.
    pub fn amplitude_scale(self) -> f64 {
        match self {
            Self::TwoPeaks => 0.023966,
            Self::PeaksWithPlateau => 0.0058417,
        }
    }
}

/// Samples a synthetic phantom on `relax`.
pub fn make_phantom(kind: PhantomKind, relax: &RelaxationGrid) -> Distribution {
    let scale = kind.amplitude_scale();
    let values = DMatrix::from_fn(relax.nx(), relax.ny(), |j, k| {
        let (t1, t2) = (relax.t1[j], relax.t2[k]);
        let peaks: f64 = PHANTOM_PEAKS.iter().map(|p| p.value(t1, t2)).sum();
        let shape = match kind {
            PhantomKind::TwoPeaks => peaks,
            PhantomKind::PeaksWithPlateau => peaks + PHANTOM_PLATEAU.value(t1, t2),
        };
        scale * shape
    });
    Distribution { values }
}
