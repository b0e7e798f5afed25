use privdist::ksdp::{
    box_fit, ks_2sample_pvalue, ks_statistic, measure_ksdp, nmf_statistic, nmf_trace_statistic, q_ks, random_db,
    subsample_with, subsample_without, svd_family_distance, svd_statistics, DbSampler, Ecdf, RandomRows, SampleCache,
    SigmaSource, Statistic, SVD_STATISTIC_NAMES,
};
use privdist::net::{NetworkConfig, ObservableTrace, SimNetwork};
use privdist::secsum::{secsum, FixedCodec};
use privdist::{dot, Error, Matrix, SeededRng};

fn uniform(n: usize, hi: f64, rng: &mut SeededRng) -> Vec<f64> {
    (0..n).map(|_| hi * rng.uniform()).collect()
}

/// `sup |F − G|` evaluated at every sample point by direct counting.
fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

/// The alternating Kolmogorov series summed term by term until the terms
/// underflow.
fn q_ks_series(lambda: f64) -> f64 {
    let mut sum = 0.0;
    for j in 1..1_000_000u64 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        if term == 0.0 {
            break;
        }
        sum += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[test]
fn ks_statistic_cases() {
    let f = Ecdf::new(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(ks_statistic(&f, &f), 0.0);
    let g = Ecdf::new(&[2.0, 3.0, 4.0]).unwrap();
    assert!((ks_statistic(&f, &g) - 1.0 / 3.0).abs() < 1e-15);
    assert!((brute_ks(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]) - 1.0 / 3.0).abs() < 1e-15);
    let h = Ecdf::new(&[10.0, 11.0]).unwrap();
    assert_eq!(ks_statistic(&f, &h), 1.0);
    assert!(matches!(Ecdf::new(&[]), Err(Error::Domain(_))));
}

#[test]
fn ks_statistic_matches_brute_force_and_is_symmetric() {
    let mut rng = SeededRng::new(1, 0);
    for _ in 0..300 {
        let na = 1 + rng.below(30);
        let nb = 1 + rng.below(30);
        // Coarse values force ties.
        let a: Vec<f64> = (0..na).map(|_| rng.below(10) as f64).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.below(12) as f64 * 0.9).collect();
        let (fa, fb) = (Ecdf::new(&a).unwrap(), Ecdf::new(&b).unwrap());
        let d = ks_statistic(&fa, &fb);
        assert!((d - brute_ks(&a, &b)).abs() < 1e-12);
        assert_eq!(d, ks_statistic(&fb, &fa));
        assert!((0.0..=1.0).contains(&d));
    }
}

#[test]
fn kolmogorov_tail_matches_direct_series() {
    for i in 1..400 {
        let lambda = i as f64 * 0.01;
        let oracle = q_ks_series(lambda);
        assert!((q_ks(lambda) - oracle).abs() < 1e-9, "λ = {lambda}: {} vs {oracle}", q_ks(lambda));
    }
}

#[test]
fn p_value_is_nonincreasing_in_d() {
    let mut prev = 1.0;
    for i in 0..=1000 {
        let p = q_ks(i as f64 * 0.005);
        assert!(p <= prev);
        prev = p;
    }
}

#[test]
fn identical_samples_give_p_one() {
    let mut rng = SeededRng::new(2, 0);
    let a = uniform(50, 1.0, &mut rng);
    assert_eq!(ks_2sample_pvalue(&a, &a).unwrap(), 1.0);
}

#[test]
fn shifted_uniforms_are_detected() {
    let mut rng = SeededRng::new(3, 0);
    let a = uniform(200, 1.0, &mut rng);
    let b = uniform(200, 0.5, &mut rng);
    let p = ks_2sample_pvalue(&a, &b).unwrap();
    let ne: f64 = 100.0;
    let oracle = q_ks_series((ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * brute_ks(&a, &b));
    assert!(p < 1e-6, "p = {p}");
    assert!((p - oracle).abs() < 1e-12);
}

#[test]
fn small_samples_are_rejected() {
    assert!(matches!(ks_2sample_pvalue(&[0.0; 7], &[1.0; 20]), Err(Error::Domain(_))));
}

#[test]
fn null_p_values_are_calibrated() {
    let mut rng = SeededRng::new(4, 0);
    let trials = 1000;
    let rejections = (0..trials)
        .filter(|_| {
            let a = uniform(500, 1.0, &mut rng);
            let b = uniform(500, 1.0, &mut rng);
            ks_2sample_pvalue(&a, &b).unwrap() < 0.05
        })
        .count();
    let frac = rejections as f64 / trials as f64;
    assert!((0.03..=0.07).contains(&frac), "rejection rate {frac}");
}

/// Exact permutation tail probabilities `(P(D > D_obs), P(D ≥ D_obs))` over
/// all splits of the pooled sample into sizes `(na, nb)`.
fn exact_permutation_p(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let observed = brute_ks(a, b);
    let (mut above, mut at_least, mut total) = (0u64, 0u64, 0u64);
    // With continuous data only the interleaving pattern matters.
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (mut i, mut j, mut d) = (0.0, 0.0, 0.0f64);
        for pos in 0..n {
            if mask >> pos & 1 == 1 {
                i += 1.0;
            } else {
                j += 1.0;
            }
            d = d.max((i / na as f64 - j / nb as f64).abs());
        }
        total += 1;
        if d >= observed - 1e-12 {
            at_least += 1;
        }
        if d > observed + 1e-12 {
            above += 1;
        }
    }
    (above as f64 / total as f64, at_least as f64 / total as f64)
}

/// The permutation distribution of D is discrete; the asymptotic p-value
/// must land inside the jump at the observed D, up to 1e-3 in the far tail.
#[test]
fn asymptotic_p_falls_within_exact_permutation_step() {
    let mut rng = SeededRng::new(5, 0);
    for (na, nb) in [(8, 8), (8, 12), (10, 10), (12, 12), (9, 11)] {
        for _ in 0..4 {
            let shift = rng.uniform() * 0.8;
            let a = uniform(na, 1.0, &mut rng);
            let b: Vec<f64> = uniform(nb, 1.0, &mut rng).into_iter().map(|v| v + shift).collect();
            let (above, at_least) = exact_permutation_p(&a, &b);
            let asym = ks_2sample_pvalue(&a, &b).unwrap();
            assert!(above - 1e-3 <= asym && asym <= at_least + 1e-3, "({na},{nb}): exact step [{above}, {at_least}], asymptotic {asym}");
        }
    }
}

#[test]
fn subsample_audits() {
    let mut rng = SeededRng::new(6, 0);
    let db = Matrix::from_fn(30, 2, |i, j| (i * 2 + j) as f64);
    for _ in 0..50 {
        let x = rng.below(30);
        let (with, idx) = subsample_with(&db, x, 24, &mut rng).unwrap();
        assert_eq!(idx.iter().filter(|&&i| i == x).count(), 1);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        for (r, &i) in idx.iter().enumerate() {
            assert_eq!(with.row(r), db.row(i));
        }
        let (_, idx) = subsample_without(&db, x, 24, &mut rng).unwrap();
        assert!(!idx.contains(&x));
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
    }
    assert!(matches!(subsample_with(&db, 0, 30, &mut rng), Err(Error::Domain(_))));
    assert!(matches!(subsample_without(&db, 0, 0, &mut rng), Err(Error::Domain(_))));
}

#[test]
fn random_databases_follow_their_recipe() {
    let mut rng = SeededRng::new(7, 0);
    let source = Matrix::from_fn(10, 3, |i, j| (10 * j + i) as f64);
    let syn = random_db(&source, 40, RandomRows::ColumnMarginals, &mut rng);
    for i in 0..40 {
        for j in 0..3 {
            let v = syn[(i, j)];
            assert!(v >= (10 * j) as f64 && v < (10 * j + 10) as f64);
        }
    }
    let u = random_db(&source, 40, RandomRows::Uniform, &mut rng);
    assert!(u.as_slice().iter().all(|v| (0.0..1.0).contains(v)));
}

fn trace_of(label: &str, values: Vec<f64>) -> ObservableTrace {
    let mut t = ObservableTrace::new();
    t.push(label, values);
    t
}

fn first_value(name: &str) -> Statistic {
    let label = name.to_string();
    Statistic::new(name, move |t: &ObservableTrace, _x: &[f64]| Ok(t.last(&label).unwrap()[0]))
}

#[test]
fn constant_mechanism_leaks_nothing() {
    let mut rng = SeededRng::new(8, 0);
    let db = Matrix::uniform(40, 4, &mut rng);
    let mech = |_: &Matrix, _: &mut SeededRng| Ok(trace_of("out", vec![1.0]));
    let res = measure_ksdp(&mech, &mech, &[first_value("out")], &db, 3, 30, &DbSampler::default(), &mut rng, 1).unwrap();
    assert_eq!(res.pi, 1.0);
}

#[test]
fn planted_leak_is_detected() {
    let mut rng = SeededRng::new(9, 0);
    let db = Matrix::uniform(60, 5, &mut rng);
    let x = db.row(7).to_vec();
    let mech = move |s: &Matrix, _: &mut SeededRng| {
        let present = (0..s.rows()).any(|i| s.row(i) == x.as_slice());
        Ok(trace_of("flag", vec![if present { 1.0 } else { 0.0 }]))
    };
    let res = measure_ksdp(&mech, &mech, &[first_value("flag")], &db, 7, 50, &DbSampler::default(), &mut rng, 2).unwrap();
    assert!(res.pi < 1e-10, "π = {}", res.pi);
}

/// Mechanism: two parties each hold half the rows and run SecSum on their
/// column sums; the trace is the total.
fn secsum_mechanism(db: &Matrix, rng: &mut SeededRng) -> privdist::Result<ObservableTrace> {
    let half = db.rows() / 2;
    let parts = [db.select_rows(&(0..half).collect::<Vec<_>>()), db.select_rows(&(half..db.rows()).collect::<Vec<_>>())];
    let codec = FixedCodec::new(24, 1e4)?;
    let mut net = SimNetwork::with_config(NetworkConfig::new(2).seed(rng.next_u64()))?;
    net.run(|h| secsum(h, "sum", &parts[h.id().index()].column_sums(), &codec))?;
    Ok(net.traces().remove(0))
}

fn inner_with_sum() -> Statistic {
    Statistic::new("sum_inner_product", |t: &ObservableTrace, x: &[f64]| Ok(dot(t.last("sum").unwrap(), x)))
}

#[test]
fn secure_sum_of_iid_rows_hides_a_document() {
    let mut rng = SeededRng::new(10, 0);
    let db = Matrix::uniform(500, 20, &mut rng);
    let sampler = DbSampler::Synthetic { n_sub: 500, rows: RandomRows::Uniform };
    let mut pis: Vec<f64> = (0..20)
        .map(|doc| {
            measure_ksdp(&secsum_mechanism, &secsum_mechanism, &[inner_with_sum()], &db, doc * 25, 200, &sampler, &mut rng, 4)
                .unwrap()
                .pi
        })
        .collect();
    pis.sort_by(f64::total_cmp);
    let median = 0.5 * (pis[9] + pis[10]);
    println!("median π {median:.3}");
    assert!(median >= 0.2, "median π {median}");
}

#[test]
fn measurement_is_deterministic_and_thread_count_independent() {
    let db = Matrix::uniform(80, 6, &mut SeededRng::new(11, 0));
    let run = |threads| {
        let mut rng = SeededRng::new(12, 0);
        measure_ksdp(&secsum_mechanism, &secsum_mechanism, &[inner_with_sum()], &db, 5, 20, &DbSampler::default(), &mut rng, threads)
            .unwrap()
    };
    let (a, b, c) = (run(1), run(1), run(3));
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.samples, c.samples);
    assert_eq!(a.pi, c.pi);
}

#[test]
fn cached_samples_round_trip_and_reproduce_p_values() {
    let mut rng = SeededRng::new(13, 0);
    let db = Matrix::uniform(60, 4, &mut rng);
    let stats = [inner_with_sum(), Statistic::new("sum_norm", |t: &ObservableTrace, _x: &[f64]| {
        let s = t.last("sum").unwrap();
        Ok(dot(s, s).sqrt())
    })];
    let sampler = DbSampler::RandomDb { n_sub: Some(40), rows: RandomRows::ColumnMarginals };
    let res = measure_ksdp(&secsum_mechanism, &secsum_mechanism, &stats, &db, 2, 12, &sampler, &mut rng, 2).unwrap();
    let mut buf = Vec::new();
    res.samples.write_to(&mut buf).unwrap();
    let back = SampleCache::read_from(buf.as_slice()).unwrap();
    assert_eq!(back, res.samples);
    assert_eq!(back.p_values().unwrap(), res.p_values);
    assert_eq!(res.pi, res.p_values.iter().copied().fold(1.0, f64::min));
    assert!(SampleCache::read_from("garbage\n".as_bytes()).is_err());
    assert!(SampleCache::read_from("# ksdp-samples v1 statistics=a\nwith,1\n".as_bytes()).is_err());
}

#[test]
fn nmf_statistic_cases() {
    let t = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let w = [2.0, 3.0, 5.0];
    assert!((nmf_statistic(&t, &w, &[1.0, 0.0, 0.0]).unwrap() - 4.0).abs() < 1e-6);
    assert_eq!(nmf_statistic(&t, &w, &[0.0; 3]).unwrap(), 0.0);
}

/// Grid search over the first two coordinates at step 1e-3 with the third
/// minimized exactly on `[0, 1]`.
fn grid_box_fit(t: &Matrix, x: &[f64]) -> Vec<f64> {
    let g = t.matmul(&t.transpose()).unwrap();
    let b = t.mul_vec(x).unwrap();
    let f = |u: &[f64; 3]| {
        let mut v = 0.0;
        for i in 0..3 {
            v -= 2.0 * u[i] * b[i];
            for j in 0..3 {
                v += u[i] * g[(i, j)] * u[j];
            }
        }
        v
    };
    let steps = 1000;
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..=steps {
        for j in 0..=steps {
            let (u0, u1) = (i as f64 / steps as f64, j as f64 / steps as f64);
            let u2 = if g[(2, 2)] > 0.0 { ((b[2] - g[(2, 0)] * u0 - g[(2, 1)] * u1) / g[(2, 2)]).clamp(0.0, 1.0) } else { 0.0 };
            let u = [u0, u1, u2];
            let v = f(&u);
            if v < best.0 {
                best = (v, u);
            }
        }
    }
    best.1.to_vec()
}

#[test]
fn nmf_statistic_matches_grid_search() {
    let mut rng = SeededRng::new(14, 0);
    for _ in 0..3 {
        let t = Matrix::uniform(3, 8, &mut rng);
        let x: Vec<f64> = (0..8).map(|_| 1.2 * rng.uniform()).collect();
        let w = [rng.uniform() + 0.5, rng.uniform() + 0.5, rng.uniform() + 0.5];
        let oracle_a = grid_box_fit(&t, &x);
        let oracle: f64 = oracle_a.iter().zip(&w).map(|(a, w)| a * w * w).sum();
        let got = nmf_statistic(&t, &w, &x).unwrap();
        assert!((got - oracle).abs() <= 1e-2, "{got} vs {oracle}");
        let a = box_fit(&t, &x).unwrap();
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn nmf_trace_statistic_reads_topics_and_denominators() {
    let mut trace = ObservableTrace::new();
    trace.push("den_0", vec![9.0]);
    trace.push("den_0", vec![2.0]);
    trace.push("den_1", vec![3.0]);
    trace.push("T_final", vec![1.0, 0.0, 0.0, 1.0]);
    let s = nmf_trace_statistic(2, 2);
    assert!((s.eval(&trace, &[1.0, 0.0]).unwrap() - 4.0).abs() < 1e-6);
    assert!(s.eval(&ObservableTrace::new(), &[1.0, 0.0]).is_err());
}

#[test]
fn svd_statistics_cases() {
    let v = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
    let stats = svd_statistics(&v, &SigmaSource::Revealed(vec![4.0]), &[1.0, 1.0]).unwrap();
    assert_eq!(&stats[..3], &[4.0, 4.0, 16.0]);
    // Ŝ/‖Ŝ‖ = e1e1ᵀ and xxᵀ/‖x‖ has entries 1/√2.
    let r = 1.0 / 2f64.sqrt();
    let expected = [1.0 - r, r, r, r];
    let oracle = [
        expected.iter().copied().fold(0.0, f64::max),
        expected.iter().sum::<f64>(),
        expected.iter().map(|v| v * v).sum::<f64>(),
    ];
    for (s, o) in stats[3..].iter().zip(oracle) {
        assert!((s - o).abs() < 1e-15);
    }
    assert_eq!(SVD_STATISTIC_NAMES.len(), 6);

    let est = SigmaSource::Estimated { n_v: 10, n_a: 10, sigma_a_sq: vec![2.0] };
    assert_eq!(svd_statistics(&v, &est, &[1.0, 1.0]).unwrap(), stats);

    let zero = svd_statistics(&v, &SigmaSource::Revealed(vec![4.0]), &[0.0, 0.0]);
    assert!(matches!(zero, Err(Error::Domain(_))));
    let s_hat = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 0.0]]).unwrap();
    assert!(matches!(svd_family_distance(&s_hat, &[0.0, 0.0]), Err(Error::Domain(_))));
}
