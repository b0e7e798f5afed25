use std::collections::BTreeSet;

use privdist::net::{NetworkConfig, ObservableTrace, SimNetwork};
use privdist::nmf::{
    best_fit_error, centralized_merge_init, dp_noised_pd_nmf, dp_sigma, nnsvd_init, normalize_rows, objective, pd_nmf,
    pd_nmf_init, pd_nmf_iter, random_init, rri_nmf, NmfParams, PartyNmfState,
};
use privdist::secsum::{FixedCodec, SumPath};
use privdist::{DenseMatrix, Error, Matrix, SeededRng};

fn params(k: usize, sweeps: usize) -> NmfParams {
    NmfParams { max_iters: sweeps, tol: 0.0, ..NmfParams::new(k) }
}

/// Splits rows into `m` contiguous blocks of at least 5 rows at random cut
/// points.
fn split(x: &Matrix, m: usize, rng: &mut SeededRng) -> Vec<Matrix> {
    const MIN: usize = 5;
    let n = x.rows();
    let slack = n - m * MIN;
    let mut cuts: Vec<usize> = (0..m - 1).map(|_| rng.below(slack + 1)).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts.iter().enumerate().map(|(i, c)| c + (i + 1) * MIN));
    bounds.push(n);
    bounds.windows(2).map(|w| x.select_rows(&(w[0]..w[1]).collect::<Vec<_>>())).collect()
}

struct Run {
    t: Vec<Matrix>,
    w: Vec<Matrix>,
    traces: Vec<ObservableTrace>,
}

fn run_parties(
    parts: &[Matrix],
    params: NmfParams,
    seed: u64,
    body: impl Fn(&mut privdist::net::PartyHandle, &mut PartyNmfState) -> privdist::Result<Matrix> + Sync,
) -> privdist::Result<Run> {
    let mut net = SimNetwork::with_config(NetworkConfig::new(parts.len()).seed(seed))?;
    let out = net.run(|h| {
        let mut state = PartyNmfState::new(parts[h.id().index()].clone(), params);
        let t = body(h, &mut state)?;
        Ok((t, state.w))
    })?;
    let (t, w) = out.into_iter().unzip();
    Ok(Run { t, w, traces: net.traces() })
}

fn iter_run(parts: &[Matrix], params: NmfParams, t0: &Matrix, path: SumPath) -> Run {
    run_parties(parts, params, 1, |h, s| pd_nmf_iter(h, s, t0, &path)).unwrap()
}

fn assert_replicated(run: &Run) {
    for t in &run.t[1..] {
        assert_eq!(t, &run.t[0]);
    }
    for tr in &run.traces[1..] {
        assert_eq!(tr, &run.traces[0]);
    }
}

fn low_rank(n: usize, d: usize, k: usize, rng: &mut SeededRng) -> Matrix {
    let w = Matrix::uniform(n, k, rng);
    let t = Matrix::uniform(k, d, rng);
    let mut x = w.matmul(&t).unwrap();
    x.as_mut_slice().iter_mut().for_each(|v| *v += 0.05 * rng.uniform());
    x
}

#[test]
fn single_party_matches_centralized_bit_for_bit() {
    let mut rng = SeededRng::new(1, 0);
    let x = Matrix::uniform(40, 12, &mut rng);
    let p = params(4, 30);
    let t0 = random_init(4, 12, &mut rng);
    let central = rri_nmf(&x, &p, &t0).unwrap();
    let run = iter_run(&[x], p, &t0, SumPath::Float);
    assert_eq!(run.t[0], central.t);
    assert_eq!(run.w[0], central.w);
}

#[test]
fn three_parties_reach_the_centralized_topics() {
    let mut rng = SeededRng::new(2, 0);
    let x = Matrix::uniform(200, 50, &mut rng);
    let p = params(5, 50);
    let t0 = random_init(5, 50, &mut rng);
    let central = rri_nmf(&x, &p, &t0).unwrap();
    let run = iter_run(&split(&x, 3, &mut rng), p, &t0, SumPath::Float);
    let dev = run.t[0].max_abs_diff(&central.t).unwrap();
    assert!(dev <= 1e-6, "deviation {dev}");
    assert_replicated(&run);
}

#[test]
fn fuzzed_splits_agree_with_centralized() {
    let mut rng = SeededRng::new(3, 0);
    for (case, m) in [2, 3, 5, 2, 3, 5].into_iter().enumerate() {
        let n = 30 + rng.below(60);
        let d = 8 + rng.below(20);
        let k = 1 + rng.below(5);
        let x = low_rank(n, d, k, &mut rng);
        let p = NmfParams { alpha: 0.01 * case as f64, beta: 0.1, gamma: 0.02, delta: 0.05, ..params(k, 25) };
        let t0 = random_init(k, d, &mut rng);
        let central = rri_nmf(&x, &p, &t0).unwrap();
        let parts = split(&x, m, &mut rng);
        let run = iter_run(&parts, p, &t0, SumPath::Float);
        let dev = run.t[0].max_abs_diff(&central.t).unwrap();
        assert!(dev <= 1e-6, "case {case} (M={m}): deviation {dev}");
        let w = DenseMatrix::vstack(&run.w).unwrap();
        assert!(w.max_abs_diff(&central.w).unwrap() <= 1e-6, "case {case}: W differs");
        assert_replicated(&run);
    }
}

#[test]
fn fixed_point_drift_is_bounded() {
    let mut rng = SeededRng::new(4, 0);
    let x = Matrix::uniform(60, 15, &mut rng);
    let sweeps = 10;
    let p = params(3, sweeps);
    let t0 = random_init(3, 15, &mut rng);
    let central = rri_nmf(&x, &p, &t0).unwrap();
    let m = 3;
    let bits = 31;
    let codec = FixedCodec::new(bits, 1e3).unwrap();
    let run = iter_run(&split(&x, m, &mut rng), p, &t0, SumPath::Fixed(codec));
    let dev = run.t[0].max_abs_diff(&central.t).unwrap();
    let unit = (sweeps * m) as f64 * 2f64.powi(-(bits as i32));
    let c = dev / unit;
    println!("fixed-point drift {dev:e}, c = {c:.3}");
    assert!(c <= 1e3, "drift constant {c}");
    assert_replicated(&run);
}

#[test]
fn zero_data_gives_uniform_topics() {
    let parts = vec![Matrix::zeros(4, 6), Matrix::zeros(3, 6)];
    let t0 = random_init(2, 6, &mut SeededRng::new(5, 0));
    let run = iter_run(&parts, params(2, 3), &t0, SumPath::Float);
    assert!(run.t[0].as_slice().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
}

#[test]
fn feature_mismatch_aborts() {
    let mut rng = SeededRng::new(6, 0);
    let parts = vec![Matrix::uniform(5, 4, &mut rng), Matrix::uniform(5, 4, &mut rng)];
    let t0 = random_init(2, 4, &mut rng);
    let res = run_parties(&parts, params(2, 3), 1, |h, s| {
        let names = if h.id().index() == 0 { ["a", "b", "c", "d"] } else { ["a", "b", "d", "c"] };
        *s = s.clone().with_features(names.iter().map(|n| n.to_string()).collect());
        pd_nmf_iter(h, s, &t0, &SumPath::Float)
    });
    assert!(matches!(res, Err(Error::Protocol(_))), "{:?}", res.err());

    let res = run_parties(&parts, params(2, 3), 1, |h, s| {
        if h.id().index() == 1 {
            s.params.k = 3;
        }
        let t0 = random_init(s.params.k, 4, &mut SeededRng::new(1, 0));
        pd_nmf_iter(h, s, &t0, &SumPath::Float)
    });
    assert!(matches!(res, Err(Error::Protocol(_))), "{:?}", res.err());
}

#[test]
fn transcript_holds_only_sums_and_final_topics() {
    let mut rng = SeededRng::new(7, 0);
    let x = Matrix::uniform(30, 8, &mut rng);
    let k = 3;
    let p = NmfParams { max_iters: 4, tol: 0.0, ..NmfParams::new(k) };
    let run = run_parties(&split(&x, 3, &mut rng), p, 2, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    assert_replicated(&run);
    let mut expected: BTreeSet<String> = ["T0", "T_final", "init/T_final"].iter().map(|s| s.to_string()).collect();
    for t in 0..k {
        for prefix in ["", "init/"] {
            expected.insert(format!("{prefix}num_{t}"));
            expected.insert(format!("{prefix}den_{t}"));
        }
    }
    let labels: BTreeSet<String> = run.traces[0].labels().map(str::to_string).collect();
    assert_eq!(labels, expected);
    assert_eq!(run.traces[0].all("num_0").count(), 4);
    assert_eq!(run.traces[0].last("T_final").unwrap(), run.t[0].as_slice());
}

/// Pseudo-corpus of one party, composed by hand from the centralized solver.
fn pseudo_corpus(x: &Matrix, p: &NmfParams) -> Matrix {
    let local = rri_nmf(x, p, &nnsvd_init(x, p.k).unwrap()).unwrap();
    let mut out = local.t.clone();
    for j in 0..p.k {
        let norm = local.w.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        out.row_mut(j).iter_mut().for_each(|v| *v *= norm);
    }
    out
}

fn shared_t0(trace: &ObservableTrace, k: usize, d: usize) -> Matrix {
    let raw = trace.last("T0").unwrap();
    let mut t0 = Matrix::from_vec(k, d, raw.iter().map(|v| v.max(0.0)).collect()).unwrap();
    normalize_rows(&mut t0);
    t0
}

#[test]
fn single_party_init_matches_hand_composition() {
    let mut rng = SeededRng::new(8, 0);
    let x = low_rank(40, 10, 3, &mut rng);
    let p = NmfParams::new(3);
    let run = run_parties(std::slice::from_ref(&x), p, 3, |h, s| pd_nmf_init(h, s, &SumPath::Float)).unwrap();
    let t0 = shared_t0(&run.traces[0], 3, 10);
    let oracle = rri_nmf(&pseudo_corpus(&x, &p), &p.init_phase(), &t0).unwrap();
    assert_eq!(run.t[0], oracle.t);
}

/// Each party's documents are positive multiples of single topics. Party `m`
/// uses topics `m..m+r` (mod `r+1`) out of `r+1` shared ones, so every local
/// rank-`r` model can be exact while no global rank-`r` model is.
fn hard_assignment_parts(m: usize, r: usize, d: usize, orthogonal: bool, rng: &mut SeededRng) -> Vec<Matrix> {
    let total = r + 1;
    let topics = if orthogonal {
        Matrix::from_fn(total, d, |i, j| if j % total == i { 0.5 + rng.uniform() } else { 0.0 })
    } else {
        Matrix::uniform(total, d, rng)
    };
    (0..m)
        .map(|party| {
            let n = 3 * r + rng.below(10);
            let mut x = Matrix::zeros(n, d);
            for i in 0..n {
                let topic = (party + if i < r { i } else { rng.below(r) }) % total;
                let scale = 0.5 + rng.uniform();
                let row: Vec<f64> = topics.row(topic).iter().map(|v| scale * v).collect();
                x.set_row(i, &row);
            }
            x
        })
        .collect()
}

fn init_gap(parts: &[Matrix], p: NmfParams, seed: u64) -> (f64, f64) {
    let run = run_parties(parts, p, seed, |h, s| pd_nmf_init(h, s, &SumPath::Float)).unwrap();
    let t_init = &run.t[0];
    let pseudo: Vec<Matrix> = parts.iter().map(|x| pseudo_corpus(x, &p)).collect();
    let e_hat = best_fit_error(&DenseMatrix::vstack(&pseudo).unwrap(), t_init).unwrap();
    let e_x = best_fit_error(&DenseMatrix::vstack(parts).unwrap(), t_init).unwrap();
    (e_hat, e_x)
}

#[test]
fn pseudo_corpus_error_bounds_data_error() {
    let mut rng = SeededRng::new(9, 0);
    for case in 0..10 {
        let m = 2 + rng.below(3);
        let r = 2 + rng.below(3);
        let d = 6 + rng.below(10);
        let parts = hard_assignment_parts(m, r, d, false, &mut rng);
        let p = NmfParams { max_iters: 500, tol: 1e-12, ..NmfParams::new(r) };
        let (e_hat, e_x) = init_gap(&parts, p, case);
        assert!(e_hat >= e_x - 1e-8, "case {case}: E_pseudo {e_hat} < E_X {e_x}");
    }
}

#[test]
fn init_bound_is_tight_for_orthogonal_topics() {
    let mut rng = SeededRng::new(10, 0);
    let (m, r, d) = (3, 3, 12);
    let parts = hard_assignment_parts(m, r, d, true, &mut rng);
    let p = NmfParams { max_iters: 500, tol: 1e-12, ..NmfParams::new(r) };
    let (e_hat, e_x) = init_gap(&parts, p, 4);
    assert!(e_x > 0.0);
    assert!((e_hat - e_x).abs() <= 1e-6 * e_x, "E_pseudo {e_hat}, E_X {e_x}");
}

#[test]
fn end_to_end_matches_centralized_pipeline() {
    let mut rng = SeededRng::new(11, 0);
    let x = low_rank(90, 20, 4, &mut rng);
    let parts = split(&x, 3, &mut rng);
    let p = NmfParams { max_iters: 40, tol: 0.0, ..NmfParams::new(4) };
    let run = run_parties(&parts, p, 5, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    assert_replicated(&run);
    let t0 = shared_t0(&run.traces[0], 4, 20);
    let t_init = centralized_merge_init(&parts, &p, &t0).unwrap();
    assert!(t_init.max_abs_diff(&Matrix::from_vec(4, 20, run.traces[0].last("init/T_final").unwrap().to_vec()).unwrap()).unwrap() <= 1e-9);
    let central = rri_nmf(&x, &p, &t_init).unwrap();
    let pd_obj = objective(&x, &DenseMatrix::vstack(&run.w).unwrap(), &run.t[0], &p).unwrap();
    let central_obj = central.objective(&x, &p).unwrap();
    assert!((pd_obj - central_obj).abs() <= 1e-6 * central_obj, "{pd_obj} vs {central_obj}");
}

#[test]
fn runs_are_deterministic() {
    let mut rng = SeededRng::new(12, 0);
    let parts = split(&low_rank(50, 10, 3, &mut rng), 3, &mut rng);
    let p = NmfParams { max_iters: 15, ..NmfParams::new(3) };
    let a = run_parties(&parts, p, 6, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    let b = run_parties(&parts, p, 6, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    assert_eq!(a.t, b.t);
    assert_eq!(a.traces, b.traces);
}

#[test]
fn global_topics_fit_the_union_better_than_local_ones() {
    let mut rng = SeededRng::new(13, 0);
    let (k, d) = (4, 30);
    let topics = Matrix::uniform(k, d, &mut rng).map(|v| v.powi(4));
    let mut parts = Vec::new();
    for m in 0..3 {
        let mut w = Matrix::uniform(25, k, &mut rng);
        w.as_mut_slice().iter_mut().for_each(|v| *v = v.powi(3));
        // each party barely sees one topic
        for i in 0..25 {
            w[(i, m)] *= 0.01;
        }
        let mut x = w.matmul(&topics).unwrap();
        x.as_mut_slice().iter_mut().for_each(|v| *v += 0.01 * rng.uniform());
        parts.push(x);
    }
    let x = DenseMatrix::vstack(&parts).unwrap();
    let p = NmfParams { max_iters: 100, ..NmfParams::new(k) };
    let run = run_parties(&parts, p, 7, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    let global = best_fit_error(&x, &run.t[0]).unwrap();
    for (m, part) in parts.iter().enumerate() {
        let local = rri_nmf(part, &p, &nnsvd_init(part, k).unwrap()).unwrap();
        let local_err = best_fit_error(&x, &local.t).unwrap();
        assert!(local_err >= global, "party {m}: local {local_err} < global {global}");
    }
}

#[test]
fn gaussian_mechanism_scale() {
    let s = dp_sigma(0.25, 0.01, 2.0).unwrap();
    assert!((s - 2.0 * (2.0 * 125f64.ln()).sqrt() / 0.25).abs() < 1e-12);
    assert!(matches!(dp_sigma(0.0, 0.01, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(dp_sigma(-1.0, 0.01, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(dp_sigma(1.0, 0.0, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(dp_sigma(1.0, 1.0, 1.0), Err(Error::Parameter(_))));
    assert!(matches!(dp_sigma(1.0, 0.5, 0.0), Err(Error::Parameter(_))));
}

#[test]
fn injected_noise_has_the_target_variance() {
    let (m, n, d, k) = (3, 8, 100, 5);
    let parts = vec![Matrix::zeros(n, d); m];
    let p = NmfParams { max_iters: 20, tol: 0.0, ..NmfParams::new(k) };
    let (eps, delta, sens) = (2.0, 0.05, 0.5);
    let sigma = dp_sigma(eps, delta, sens).unwrap();
    let run =
        run_parties(&parts, p, 8, |h, s| dp_noised_pd_nmf(h, s, eps, delta, sens, &SumPath::Float)).unwrap();
    // W stays zero on zero data, so every revealed numerator in either phase
    // is pure noise.
    assert!(run.w.iter().all(|w| w.as_slice().iter().all(|&v| v == 0.0)));
    let mut samples = Vec::new();
    for (label, values) in run.traces[0].entries() {
        if label.starts_with("num_") || label.starts_with("init/num_") {
            samples.extend_from_slice(values);
        }
    }
    assert!(samples.len() >= 10_000, "{} samples", samples.len());
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
    assert!((var / (sigma * sigma) - 1.0).abs() <= 0.05, "variance {var}, expected {}", sigma * sigma);
}

fn dp_corpus(rng: &mut SeededRng) -> (Vec<Matrix>, Matrix) {
    let x = low_rank(90, 20, 3, rng);
    (split(&x, 3, rng), x)
}

fn stacked_objective(run: &Run, x: &Matrix, p: &NmfParams) -> f64 {
    objective(x, &DenseMatrix::vstack(&run.w).unwrap(), &run.t[0], p).unwrap()
}

#[test]
fn vanishing_noise_matches_noiseless() {
    let mut rng = SeededRng::new(14, 0);
    let (parts, x) = dp_corpus(&mut rng);
    let p = NmfParams { max_iters: 20, tol: 0.0, ..NmfParams::new(3) };
    let plain = run_parties(&parts, p, 9, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    let noised = run_parties(&parts, p, 9, |h, s| dp_noised_pd_nmf(h, s, 1e9, 0.01, 1.0, &SumPath::Float)).unwrap();
    assert!(noised.t[0].max_abs_diff(&plain.t[0]).unwrap() <= 1e-6);
    let gap = (stacked_objective(&noised, &x, &p) - stacked_objective(&plain, &x, &p)).abs();
    assert!(gap <= 1e-6, "gap {gap}");
}

#[test]
fn generous_noise_hurts_the_objective() {
    let mut rng = SeededRng::new(15, 0);
    let (parts, x) = dp_corpus(&mut rng);
    let p = NmfParams { max_iters: 20, tol: 0.0, ..NmfParams::new(3) };
    let plain = run_parties(&parts, p, 10, |h, s| pd_nmf(h, s, &SumPath::Float)).unwrap();
    let noised = run_parties(&parts, p, 10, |h, s| dp_noised_pd_nmf(h, s, 0.25, 0.01, 1.0, &SumPath::Float)).unwrap();
    let (a, b) = (stacked_objective(&noised, &x, &p), stacked_objective(&plain, &x, &p));
    assert!(a > b, "noised {a} vs noiseless {b}");
}
