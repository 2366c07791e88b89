//! Gaussian states over quadrature pairs and the channels acting on them.
//!
//! Quadratures are ordered (x1, p1, x2, p2, ...) and vacuum has unit
//! variance, so the commutator shows up as `cov + iΩ ≥ 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::LossBudget;
use crate::error::{ensure, Error, Result};
use crate::seed::sub_rng;

const PHYSICAL_TOL: f64 = 1e-9;
const SAMPLE_BLOCK: usize = 8192;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub n_modes: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Symplectic form for `n` modes.
pub fn omega(n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

impl GaussianState {
    pub fn vacuum(n_modes: usize) -> Self {
        GaussianState {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        ensure(mean.len() % 2 == 0 && mean.len() > 0, "state.mean", || {
            format!("length {} is not a positive even number", mean.len())
        })?;
        ensure(cov.nrows() == mean.len() && cov.ncols() == mean.len(), "state.cov", || {
            format!("shape {}x{} does not match mean", cov.nrows(), cov.ncols())
        })?;
        let s = GaussianState {
            n_modes: mean.len() / 2,
            mean,
            cov,
        };
        s.validate()?;
        Ok(s)
    }

    /// Smallest eigenvalue of the real embedding of `cov + iΩ`.
    pub fn physicality_margin(&self) -> f64 {
        let n = 2 * self.n_modes;
        let w = omega(self.n_modes);
        let mut big = DMatrix::zeros(2 * n, 2 * n);
        big.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        big.view_mut((n, n), (n, n)).copy_from(&self.cov);
        big.view_mut((0, n), (n, n)).copy_from(&(-&w));
        big.view_mut((n, 0), (n, n)).copy_from(&w);
        SymmetricEigen::new(big).eigenvalues.min()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.cov.iter().all(|v| v.is_finite()), "state.cov", || "non-finite entry".into())?;
        let asym = (&self.cov - self.cov.transpose()).amax();
        ensure(asym <= 1e-9 * self.cov.amax().max(1.0), "state.cov", || {
            format!("not symmetric (max asymmetry {asym:e})")
        })?;
        let m = self.physicality_margin();
        ensure(m >= -PHYSICAL_TOL * self.cov.amax().max(1.0), "state.cov", || {
            format!("violates the uncertainty relation (min eigenvalue {m:e})")
        })
    }

    /// Covariance block of modes `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.cov.view((2 * i, 2 * j), (2, 2)).into_owned()
    }

    fn check_mode(&self, m: usize) -> Result<()> {
        ensure(m < self.n_modes, "channel.mode", || {
            format!("mode {m} not present in a {}-mode state", self.n_modes)
        })
    }

    /// Apply x → S x + noise with `s` acting on the listed modes.
    fn apply_local(&mut self, modes: &[usize], s: &DMatrix<f64>, noise: &DMatrix<f64>) {
        let n = 2 * self.n_modes;
        let mut full = DMatrix::identity(n, n);
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                full[(ia, ib)] = s[(a, b)];
            }
        }
        self.mean = &full * &self.mean;
        self.cov = &full * &self.cov * full.transpose();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                self.cov[(ia, ib)] += noise[(a, b)];
            }
        }
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;
    }
}

/// Gaussian channels. Transmissions and efficiencies are power fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelOp {
    TwoModeSqueeze { gain: f64, modes: (usize, usize) },
    Loss { transmission: f64, mode: usize },
    Phase { theta: f64, mode: usize },
    /// Recall of a stored mode through a beamsplitter of transmissivity `efficiency`.
    ///
    /// The π phase of the read-out is kept so the recalled field carries the
    /// sign it has after time reversal; vacuum fills the remainder.
    ConjugateRetrieve { efficiency: f64, mode: usize },
}

impl ChannelOp {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelOp::TwoModeSqueeze { gain, modes } => {
                ensure(gain.is_finite() && gain >= 1.0, "channel.gain", || {
                    format!("two-mode squeeze gain must be >= 1, got {gain}")
                })?;
                ensure(modes.0 != modes.1, "channel.modes", || "squeezer needs two distinct modes".into())
            }
            ChannelOp::Loss { transmission: v, .. } | ChannelOp::ConjugateRetrieve { efficiency: v, .. } => {
                ensure((0.0..=1.0).contains(&v), "channel.transmission", || {
                    format!("must lie in [0, 1], got {v}")
                })
            }
            ChannelOp::Phase { theta, .. } => {
                ensure(theta.is_finite(), "channel.theta", || "must be finite".into())
            }
        }
    }
}

fn attenuator(scale: f64, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = DMatrix::identity(2, 2) * (scale * t.sqrt());
    let n = DMatrix::identity(2, 2) * (1.0 - t);
    (s, n)
}

pub fn apply_channel(state: &GaussianState, op: ChannelOp) -> Result<GaussianState> {
    op.validate()?;
    let mut out = state.clone();
    match op {
        ChannelOp::TwoModeSqueeze { gain, modes: (a, b) } => {
            out.check_mode(a)?;
            out.check_mode(b)?;
            let c = gain.sqrt();
            let s = (gain - 1.0).sqrt();
            #[rustfmt::skip]
            let m = DMatrix::from_row_slice(4, 4, &[
                c, 0.0, s, 0.0,
                0.0, c, 0.0, -s,
                s, 0.0, c, 0.0,
                0.0, -s, 0.0, c,
            ]);
            out.apply_local(&[a, b], &m, &DMatrix::zeros(4, 4));
        }
        ChannelOp::Loss { transmission, mode } => {
            out.check_mode(mode)?;
            let (s, n) = attenuator(1.0, transmission);
            out.apply_local(&[mode], &s, &n);
        }
        ChannelOp::ConjugateRetrieve { efficiency, mode } => {
            out.check_mode(mode)?;
            let (s, n) = attenuator(-1.0, efficiency);
            out.apply_local(&[mode], &s, &n);
        }
        ChannelOp::Phase { theta, mode } => {
            out.check_mode(mode)?;
            let (sn, cs) = theta.sin_cos();
            let r = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
            out.apply_local(&[mode], &r, &DMatrix::zeros(2, 2));
        }
    }
    Ok(out)
}

pub fn db_to_gain(gain_db: f64) -> f64 {
    10f64.powf(gain_db / 10.0)
}

/// Detected (ASE, RASE) state: a two-mode squeezer between the ASE field and
/// the atoms, recall of the atomic mode with efficiency `eta`, then the
/// detection losses on both outputs.
pub fn rase_state(gain_db: f64, eta: f64, losses: &LossBudget) -> Result<GaussianState> {
    ensure(gain_db.is_finite() && gain_db >= 0.0, "gain_db", || format!("must be >= 0, got {gain_db}"))?;
    losses.validate()?;
    let l = losses.transmission();
    let chain = [
        ChannelOp::TwoModeSqueeze {
            gain: db_to_gain(gain_db),
            modes: (0, 1),
        },
        ChannelOp::ConjugateRetrieve {
            efficiency: eta,
            mode: 1,
        },
        ChannelOp::Loss {
            transmission: l,
            mode: 0,
        },
        ChannelOp::Loss {
            transmission: l,
            mode: 1,
        },
    ];
    chain
        .iter()
        .try_fold(GaussianState::vacuum(2), |s, &op| apply_channel(&s, op))
}

/// One heterodyne shot of the (ASE, RASE) pair.
///
/// The RASE quadratures are given in the frame of the time-reversed conjugate
/// field, so `q_r` is the negated physical momentum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratures {
    pub i_a: f64,
    pub q_a: f64,
    pub i_r: f64,
    pub q_r: f64,
}

impl Quadratures {
    pub fn as_array(&self) -> [f64; 4] {
        [self.i_a, self.q_a, self.i_r, self.q_r]
    }
}

/// Draw `n` joint samples of all quadratures, in parallel blocks whose
/// streams depend only on `seed` and the block index.
pub fn sample_raw(state: &GaussianState, n: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    ensure(n >= 1, "n", || "need at least one sample".into())?;
    let chol = state.cov.clone().cholesky().ok_or_else(|| {
        Error::invalid("state.cov", "covariance is not positive definite, cannot sample")
    })?;
    let l = chol.l();
    let dim = state.mean.len();
    let blocks = n.div_ceil(SAMPLE_BLOCK);
    let out: Vec<Vec<DVector<f64>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = sub_rng(seed, b as u64);
            let count = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
            (0..count)
                .map(|_| {
                    let z = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                    &state.mean + &l * z
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

pub fn sample_shots(state: &GaussianState, n: usize, seed: u64) -> Result<Vec<Quadratures>> {
    ensure(state.n_modes == 2, "state.n_modes", || {
        format!("shots need a two-mode state, got {}", state.n_modes)
    })?;
    Ok(sample_raw(state, n, seed)?
        .into_iter()
        .map(|v| Quadratures {
            i_a: v[0],
            q_a: v[1],
            i_r: v[2],
            q_r: -v[3],
        })
        .collect())
}

/// Analytic covariance of the shot tuple in the frame used by [`sample_shots`].
pub fn shot_covariance(state: &GaussianState) -> DMatrix<f64> {
    let f = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0, -1.0]));
    &f * &state.cov * &f
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).amax() < tol
    }

    #[test]
    fn vacuum_is_physical_and_pure() {
        let v = GaussianState::vacuum(3);
        assert!(v.physicality_margin().abs() < 1e-12);
        v.validate().unwrap();
    }

    #[test]
    fn squeezed_variance_matches_textbook() {
        let g = 5.0;
        let s = apply_channel(
            &GaussianState::vacuum(2),
            ChannelOp::TwoModeSqueeze { gain: g, modes: (0, 1) },
        )
        .unwrap();
        let c = 2.0 * (g * (g - 1.0)).sqrt();
        assert!((s.cov[(0, 0)] - (2.0 * g - 1.0)).abs() < 1e-12);
        assert!((s.cov[(3, 3)] - (2.0 * g - 1.0)).abs() < 1e-12);
        assert!((s.cov[(0, 2)] - c).abs() < 1e-12);
        assert!((s.cov[(1, 3)] + c).abs() < 1e-12);
        // a squeezed vacuum stays pure
        assert!(s.physicality_margin().abs() < 1e-9);
        // textbook form: cosh(2r) = 2G - 1, sinh(2r) = c
        let r = (g.sqrt()).acosh();
        assert!(((2.0 * r).cosh() - (2.0 * g - 1.0)).abs() < 1e-9);
        assert!(((2.0 * r).sinh() - c).abs() < 1e-9);
    }

    #[test]
    fn squeezed_variance_by_sampling() {
        let g = 3.0;
        let s = apply_channel(
            &GaussianState::vacuum(2),
            ChannelOp::TwoModeSqueeze { gain: g, modes: (0, 1) },
        )
        .unwrap();
        let n = 200_000;
        let xs = sample_raw(&s, n, 11).unwrap();
        let var = xs.iter().map(|v| v[0] * v[0]).sum::<f64>() / n as f64;
        let expect = 2.0 * g - 1.0;
        // 5σ band for a chi-square variance estimate
        assert!((var - expect).abs() < 5.0 * expect * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn loss_limits() {
        let s = rase_state(7.0, 0.17, &LossBudget::NONE).unwrap();
        let same = apply_channel(&s, ChannelOp::Loss { transmission: 1.0, mode: 0 }).unwrap();
        assert!(close(&same.cov, &s.cov, 1e-12));
        let gone = apply_channel(&s, ChannelOp::Loss { transmission: 0.0, mode: 0 }).unwrap();
        assert!(close(&gone.block(0, 0), &DMatrix::identity(2, 2), 1e-12));
        assert!(gone.block(0, 1).amax() < 1e-12);
    }

    #[test]
    fn zero_recall_leaves_vacuum() {
        let s = rase_state(20.0, 0.0, &LossBudget::default()).unwrap();
        assert!(close(&s.block(1, 1), &DMatrix::identity(2, 2), 1e-12));
        assert!(s.block(0, 1).amax() < 1e-12);
    }

    #[test]
    fn rase_state_moments() {
        let l = LossBudget::default().transmission();
        let s = rase_state(7.0, 0.17, &LossBudget::default()).unwrap();
        let g = db_to_gain(7.0);
        let c = 2.0 * (g * (g - 1.0)).sqrt();
        assert!((s.cov[(0, 0)] - (l * (2.0 * g - 1.0) + 1.0 - l)).abs() < 1e-12);
        let r = l * (0.17 * (2.0 * g - 1.0) + 0.83) + 1.0 - l;
        assert!((s.cov[(2, 2)] - r).abs() < 1e-12);
        let cov = shot_covariance(&s);
        assert!((cov[(0, 2)] + l * 0.17f64.sqrt() * c).abs() < 1e-12);
        assert!((cov[(1, 3)] + l * 0.17f64.sqrt() * c).abs() < 1e-12);
    }

    #[test]
    fn sampling_deterministic_and_checked() {
        let s = rase_state(7.0, 0.17, &LossBudget::default()).unwrap();
        assert_eq!(sample_shots(&s, 100, 3).unwrap(), sample_shots(&s, 100, 3).unwrap());
        assert_ne!(sample_shots(&s, 100, 3).unwrap(), sample_shots(&s, 100, 4).unwrap());
        assert!(sample_shots(&s, 0, 3).is_err());
        let bad = GaussianState {
            n_modes: 1,
            mean: DVector::zeros(2),
            cov: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        };
        assert!(bad.validate().is_err());
        assert!(sample_raw(&bad, 10, 1).is_err());
    }

    #[test]
    fn unphysical_parameters_rejected() {
        let v = GaussianState::vacuum(2);
        assert!(apply_channel(&v, ChannelOp::TwoModeSqueeze { gain: 0.5, modes: (0, 1) }).is_err());
        assert!(apply_channel(&v, ChannelOp::Loss { transmission: 1.5, mode: 0 }).is_err());
        assert!(apply_channel(&v, ChannelOp::Loss { transmission: 0.5, mode: 2 }).is_err());
    }

    fn arb_op() -> impl Strategy<Value = ChannelOp> {
        prop_oneof![
            (1.0..20.0f64).prop_map(|g| ChannelOp::TwoModeSqueeze { gain: g, modes: (0, 1) }),
            (0.0..=1.0f64, 0..2usize).prop_map(|(t, m)| ChannelOp::Loss { transmission: t, mode: m }),
            (0.0..=1.0f64, 0..2usize)
                .prop_map(|(t, m)| ChannelOp::ConjugateRetrieve { efficiency: t, mode: m }),
            (-4.0..4.0f64, 0..2usize).prop_map(|(t, m)| ChannelOp::Phase { theta: t, mode: m }),
        ]
    }

    proptest! {
        #[test]
        fn channels_preserve_physicality(ops in prop::collection::vec(arb_op(), 1..6)) {
            let mut s = GaussianState::vacuum(2);
            for op in ops {
                s = apply_channel(&s, op).unwrap();
                prop_assert!(s.physicality_margin() > -1e-7 * s.cov.amax().max(1.0));
            }
        }

        #[test]
        fn loss_composes(l1 in 0.0..=1.0f64, l2 in 0.0..=1.0f64, g in 1.0..30.0f64) {
            let s = apply_channel(&GaussianState::vacuum(2),
                ChannelOp::TwoModeSqueeze { gain: g, modes: (0, 1) }).unwrap();
            let two = apply_channel(&apply_channel(&s, ChannelOp::Loss { transmission: l1, mode: 1 }).unwrap(),
                ChannelOp::Loss { transmission: l2, mode: 1 }).unwrap();
            let one = apply_channel(&s, ChannelOp::Loss { transmission: l1 * l2, mode: 1 }).unwrap();
            prop_assert!(close(&two.cov, &one.cov, 1e-9 * g));
        }
    }
}
