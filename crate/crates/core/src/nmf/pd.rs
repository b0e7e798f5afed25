//! Private distributed NMF: each party keeps its rows of `X` and its `W`;
//! only secure sums of per-topic statistics are revealed.

use std::hash::{Hash, Hasher};

use super::rri::{initial_w, nnsvd_init, normalize_rows, relative_change, rri_nmf, t_row_from_sums, Sweeper};
use super::NmfParams;
use crate::error::{ensure, Error, Result};
use crate::matrix::DenseMatrix;
use crate::net::{decode_u64s, encode_u64s, topics, PartyHandle};
use crate::secsum::{secure_sum, SumPath};
use crate::Matrix;

/// One party's view: its rows of `X`, its private `W`, the shared
/// parameters and the agreed feature names.
#[derive(Clone, Debug)]
pub struct PartyNmfState {
    pub x: Matrix,
    pub w: Matrix,
    pub params: NmfParams,
    pub features: Vec<String>,
}

impl PartyNmfState {
    pub fn new(x: Matrix, params: NmfParams) -> Self {
        let w = DenseMatrix::zeros(x.rows(), params.k);
        Self { x, w, params, features: Vec::new() }
    }

    pub fn with_features(mut self, features: Vec<String>) -> Self {
        self.features = features;
        self
    }
}

/// Noisy denominators up to this many noise standard deviations are read as
/// zero by [`dp_noised_pd_nmf`].
pub const DEAD_TOPIC_SIGMAS: f64 = 6.0;

/// Gaussian noise added to every revealed sum, split evenly across parties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpNoise {
    /// Standard deviation of the total noise in each revealed value.
    pub sigma: f64,
}

impl DpNoise {
    fn per_party_sd(&self, parties: usize) -> f64 {
        self.sigma / (parties as f64).sqrt()
    }
}

/// Noise scale of the Gaussian mechanism,
/// `σ = sensitivity·sqrt(2 ln(1.25/δ))/ε`.
pub fn dp_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> Result<f64> {
    ensure!(epsilon > 0.0 && epsilon.is_finite(), Parameter, "epsilon must be positive, got {epsilon}");
    ensure!(delta > 0.0 && delta < 1.0, Parameter, "delta must lie in (0, 1), got {delta}");
    ensure!(sensitivity > 0.0 && sensitivity.is_finite(), Parameter, "sensitivity must be positive, got {sensitivity}");
    Ok(sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Runs distributed RRI-NMF sweeps on the parties' rows from the common
/// `t0`. Reveals `num_t`/`den_t` per topic per sweep and `T_final`.
pub fn pd_nmf_iter(net: &mut PartyHandle, state: &mut PartyNmfState, t0: &Matrix, path: &SumPath) -> Result<Matrix> {
    agree_on_setup(net, state)?;
    iterate(net, state, t0, path, None, "")
}

/// Distributed initialization by merging local topics: every party fits a
/// local model, weights its topics by the norms of its `W` columns, and the
/// parties run distributed NMF on those pseudo-corpora from a jointly drawn
/// random start.
pub fn pd_nmf_init(net: &mut PartyHandle, state: &PartyNmfState, path: &SumPath) -> Result<Matrix> {
    agree_on_setup(net, state)?;
    init(net, state, path, None)
}

/// Distributed initialization followed by distributed iteration on `X`.
pub fn pd_nmf(net: &mut PartyHandle, state: &mut PartyNmfState, path: &SumPath) -> Result<Matrix> {
    agree_on_setup(net, state)?;
    let t_init = init(net, state, path, None)?;
    iterate(net, state, &t_init, path, None, "")
}

/// [`pd_nmf`] with Gaussian noise added to every secure sum, each party
/// contributing `N(0, σ²/M)`. A topic whose noisy denominator is at most
/// [`DEAD_TOPIC_SIGMAS`]`·σ` is treated as dead and gets a zero row.
pub fn dp_noised_pd_nmf(
    net: &mut PartyHandle,
    state: &mut PartyNmfState,
    epsilon: f64,
    delta: f64,
    sensitivity: f64,
    path: &SumPath,
) -> Result<Matrix> {
    let noise = DpNoise { sigma: dp_sigma(epsilon, delta, sensitivity)? };
    agree_on_setup(net, state)?;
    let t_init = init(net, state, path, Some(noise))?;
    iterate(net, state, &t_init, path, Some(noise), "")
}

fn init(net: &mut PartyHandle, state: &PartyNmfState, path: &SumPath, noise: Option<DpNoise>) -> Result<Matrix> {
    let params = state.params;
    let (k, d) = (params.k, state.x.cols());
    let local = rri_nmf(&state.x, &params, &nnsvd_init(&state.x, k)?)?;
    let mut pseudo = local.t.clone();
    for j in 0..k {
        let weight = crate::norm2(&local.w.column(j));
        pseudo.row_mut(j).iter_mut().for_each(|v| *v *= weight);
    }

    let share = 1.0 / net.parties() as f64;
    let mut draw: Vec<f64> = DenseMatrix::<f64>::uniform(k, d, net.rng()).into_vec();
    draw.iter_mut().for_each(|v| *v *= share);
    let draw = noisy(net, draw, noise);
    let summed = secure_sum(net, "T0", &draw, path)?;
    let mut t0 = DenseMatrix::from_vec(k, d, summed.into_iter().map(|v| v.max(0.0)).collect())?;
    normalize_rows(&mut t0);

    let mut pseudo_state = PartyNmfState::new(pseudo, params.init_phase());
    iterate(net, &mut pseudo_state, &t0, path, noise, "init/")
}

fn iterate(
    net: &mut PartyHandle,
    state: &mut PartyNmfState,
    t0: &Matrix,
    path: &SumPath,
    noise: Option<DpNoise>,
    prefix: &str,
) -> Result<Matrix> {
    let params = state.params;
    params.validate()?;
    ensure!(state.x.is_nonnegative(), Domain, "NMF input must be nonnegative");
    ensure!(
        t0.rows() == params.k && t0.cols() == state.x.cols(),
        Shape,
        "T0 is {:?}, expected {}x{}",
        t0.shape(),
        params.k,
        state.x.cols()
    );
    state.w = initial_w(&state.x, t0)?;
    let mut sweeper = Sweeper::new(state.x.clone(), &state.w, t0)?;
    let mut t = t0.clone();
    for _ in 0..params.max_iters {
        let previous = t.clone();
        for topic in 0..params.k {
            let (num, den) = sweeper.local_step(&mut state.w, &t, topic, &params)?;
            let num = noisy(net, num, noise);
            let den = noisy(net, vec![den], noise);
            let num = secure_sum(net, &format!("{prefix}num_{topic}"), &num, path)?;
            let den = secure_sum(net, &format!("{prefix}den_{topic}"), &den, path)?[0];
            let row = match noise {
                Some(n) if den <= DEAD_TOPIC_SIGMAS * n.sigma => vec![0.0; num.len()],
                _ => t_row_from_sums(&num, den, &params),
            };
            sweeper.finish_step(&state.w, &row, topic);
            t.set_row(topic, &row);
        }
        if relative_change(&t, &previous) < params.tol {
            break;
        }
    }
    net.publish(format!("{prefix}T_final"), t.as_slice().to_vec());
    Ok(t)
}

fn noisy(net: &mut PartyHandle, mut values: Vec<f64>, noise: Option<DpNoise>) -> Vec<f64> {
    if let Some(noise) = noise {
        let sd = noise.per_party_sd(net.parties());
        let rng = net.rng();
        values.iter_mut().for_each(|v| *v += sd * rng.standard_normal());
    }
    values
}

/// Checks that every party uses the same rank, feature count and ordered
/// feature list.
fn agree_on_setup(net: &mut PartyHandle, state: &PartyNmfState) -> Result<()> {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    (state.params.k, state.x.cols(), &state.features).hash(&mut h);
    let mine = h.finish();
    let round = net.next_round();
    let all = net.all_gather(round, topics::FEATURE_HASH, encode_u64s(&[mine]))?;
    for (p, payload) in all.iter().enumerate() {
        if decode_u64s(payload)? != [mine] {
            return Err(Error::Protocol(format!("party p{p} disagrees on rank or feature list")));
        }
    }
    Ok(())
}

/// The centralized counterpart of distributed initialization, given each
/// party's rows and the agreed random start `t0`.
pub fn centralized_merge_init(parts: &[Matrix], params: &NmfParams, t0: &Matrix) -> Result<Matrix> {
    let mut pseudo = Vec::with_capacity(parts.len());
    for x in parts {
        let local = rri_nmf(x, params, &nnsvd_init(x, params.k)?)?;
        let mut p = local.t.clone();
        for j in 0..params.k {
            let weight = crate::norm2(&local.w.column(j));
            p.row_mut(j).iter_mut().for_each(|v| *v *= weight);
        }
        pseudo.push(p);
    }
    Ok(rri_nmf(&DenseMatrix::vstack(&pseudo)?, &params.init_phase(), t0)?.t)
}
