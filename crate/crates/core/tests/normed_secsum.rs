use std::num::Wrapping;

use privdist::net::{topics, NetworkConfig, SimNetwork};
use privdist::nss::{
    dealer_offline, fixed_sqrt, normed_secsum, NssBackend, NssBudget, NssContext, NssMode, TripleStore,
};
use privdist::secsum::FixedPoint;
use privdist::{norm2, Error, SeededRng};

struct Outcome {
    outputs: Vec<Vec<f64>>,
    envelopes: Vec<privdist::net::Envelope>,
    consumed: Vec<NssBudget>,
}

fn run(inputs: &[Vec<f64>], backend: NssBackend, seed: u64) -> privdist::Result<Outcome> {
    let m = inputs.len();
    let budget = backend.budget(&[inputs[0].len()])?;
    let stores = dealer_offline(&budget, backend.frac_bits, m, &mut SeededRng::new(seed, 77))?;
    run_with_stores(inputs, backend, seed, stores)
}

fn run_with_stores(inputs: &[Vec<f64>], backend: NssBackend, seed: u64, stores: Vec<TripleStore>) -> privdist::Result<Outcome> {
    let mut net = SimNetwork::with_config(NetworkConfig::new(inputs.len()).seed(seed))?;
    let results = net.run(|h| {
        let mut ctx = NssContext::new(backend, stores[h.id().index()].clone());
        let out = normed_secsum(h, "s_hat", &inputs[h.id().index()], &mut ctx)?;
        Ok((out, ctx.store.consumed().clone()))
    })?;
    let (outputs, consumed) = results.into_iter().unzip();
    Ok(Outcome { outputs, envelopes: net.envelopes(), consumed })
}

/// Random party inputs whose sum has norm in `[0.05, 1]`.
fn instance(m: usize, d: usize, rng: &mut SeededRng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let direction: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let target = 0.05 + 0.95 * rng.uniform();
    let n = norm2(&direction);
    let s: Vec<f64> = direction.iter().map(|v| v / n * target).collect();
    let mut parts: Vec<Vec<f64>> = (0..m - 1).map(|_| (0..d).map(|_| rng.uniform() - 0.5).collect()).collect();
    let last: Vec<f64> = (0..d).map(|i| s[i] - parts.iter().map(|p| p[i]).sum::<f64>()).collect();
    parts.push(last);
    let sum: Vec<f64> = (0..d).map(|i| parts.iter().map(|p| p[i]).sum()).collect();
    (parts, sum)
}

fn oracle(sum: &[f64]) -> Vec<f64> {
    let n = norm2(sum);
    sum.iter().map(|v| v / n).collect()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_unit_vector_is_returned_exactly() {
    let out = run(&[vec![1.0, 0.0, 0.0, 0.0]], NssBackend::default(), 1).unwrap();
    assert_eq!(out.outputs[0], vec![1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn fuzzed_backends_agree_bit_for_bit() {
    let mut rng = SeededRng::new(2, 0);
    for f in [10u32, 20, 31] {
        for i in 0..100 {
            let m = 2 + rng.below(4);
            let d = if i % 2 == 0 { 10 } else { 100 };
            let (inputs, _) = instance(m, d, &mut rng);
            let ideal = run(&inputs, NssBackend::new(NssMode::Ideal, f), 100 + i).unwrap();
            let shared = run(&inputs, NssBackend::new(NssMode::SharedCircuit, f), 100 + i).unwrap();
            for p in 0..m {
                let a: Vec<u64> = ideal.outputs[p].iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = shared.outputs[p].iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b, "f = {f}, instance {i}, party {p}");
            }
        }
    }
}

#[test]
fn deviation_from_float_normalization() {
    let mut rng = SeededRng::new(3, 0);
    let f = 31;
    let mut worst_c = 0.0f64;
    for i in 0..200 {
        let m = 2 + rng.below(4);
        let d = if i % 2 == 0 { 10 } else { 100 };
        let (inputs, sum) = instance(m, d, &mut rng);
        let out = run(&inputs, NssBackend::new(NssMode::Ideal, f), i).unwrap();
        let expected = oracle(&sum);
        let dev = max_dev(&out.outputs[0], &expected);
        worst_c = worst_c.max(dev / (d as f64 * 2f64.powi(-(f as i32))));
        let norm_dev = (norm2(&out.outputs[0]) - 1.0).abs();
        assert!(norm_dev <= d as f64 * 2f64.powi(-(f as i32)), "instance {i}: norm off by {norm_dev}");
    }
    // Input quantization alone contributes up to M·2^-(f+1)/‖s‖ per entry,
    // which the smallest sums here push close to d·2^-f.
    println!("empirical c = {worst_c:.3}");
    assert!(worst_c <= 4.0, "c = {worst_c}");
}

#[test]
fn three_four_five_through_three_parties() {
    let inputs = vec![vec![0.1, 0.1, 0.0], vec![0.1, 0.2, -0.25], vec![0.1, 0.1, 0.25]];
    let out = run(&inputs, NssBackend::new(NssMode::SharedCircuit, 20), 4).unwrap();
    let tol = 3.0 * 2f64.powi(-20);
    for o in &out.outputs {
        assert!(max_dev(o, &[0.6, 0.8, 0.0]) <= tol, "{o:?}");
    }
}

#[test]
fn transcript_never_carries_the_norm() {
    let mut rng = SeededRng::new(5, 0);
    for i in 0..10 {
        let (inputs, sum) = instance(3, 10, &mut rng);
        let norm = norm2(&sum);
        let hidden = [norm, norm * norm, 1.0 / norm];
        let f = 31;
        let out = run(&inputs, NssBackend::new(NssMode::SharedCircuit, f), 200 + i).unwrap();
        let scale = 2f64.powi(f as i32);
        let decode = |w: u128| w as i128 as f64 / scale;
        let near = |v: f64| hidden.iter().any(|h| (v - h).abs() <= 1e-3);
        let mut opened: std::collections::BTreeMap<u64, Vec<Wrapping<u128>>> = Default::default();
        for env in &out.envelopes {
            let words = privdist::net::decode_u128s(&env.payload).unwrap();
            for &w in &words {
                assert!(!near(decode(w)), "instance {i}: payload word matches the norm");
            }
            if env.topic == topics::NSS_OPEN {
                let acc = opened.entry(env.round).or_insert_with(|| vec![Wrapping(0); words.len()]);
                for (a, w) in acc.iter_mut().zip(&words) {
                    *a += Wrapping(*w);
                }
            }
        }
        assert!(!opened.is_empty());
        for values in opened.values() {
            for v in values {
                assert!(!near(decode(v.0)), "instance {i}: an opened value matches the norm");
            }
        }
    }
}

#[test]
fn shared_trace_contains_only_the_output() {
    let inputs = vec![vec![0.2, 0.1], vec![0.1, 0.3]];
    let mut net = SimNetwork::with_config(NetworkConfig::new(2).seed(9)).unwrap();
    let backend = NssBackend::new(NssMode::SharedCircuit, 31);
    let stores = dealer_offline(&backend.budget(&[2]).unwrap(), 31, 2, &mut SeededRng::new(9, 1)).unwrap();
    net.run(|h| {
        let mut ctx = NssContext::new(backend, stores[h.id().index()].clone());
        normed_secsum(h, "s_hat", &inputs[h.id().index()], &mut ctx)
    })
    .unwrap();
    for trace in net.traces() {
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.entries()[0].0, "s_hat");
    }
}

#[test]
fn precision_improves_with_fractional_bits() {
    let mut rng = SeededRng::new(6, 0);
    let corpus: Vec<_> = (0..30).map(|_| instance(3, 20, &mut rng)).collect();
    let mut errors = Vec::new();
    for f in [10u32, 20, 31] {
        let worst = corpus
            .iter()
            .enumerate()
            .map(|(i, (inputs, sum))| {
                let out = run(inputs, NssBackend::new(NssMode::Ideal, f), i as u64).unwrap();
                max_dev(&out.outputs[0], &oracle(sum))
            })
            .fold(0.0, f64::max);
        errors.push(worst);
    }
    assert!(errors[2] <= errors[1] && errors[1] <= errors[0], "{errors:?}");
}

#[test]
fn fixed_sqrt_on_fuzzed_inputs() {
    let f = 31;
    let mut rng = SeededRng::new(7, 0);
    let ulp = 2f64.powi(-f);
    for _ in 0..1000 {
        let raw = 1 + (rng.next_u64() % (1u64 << f));
        let s = FixedPoint { raw: Wrapping(raw), frac_bits: f as u32 };
        let r = fixed_sqrt(s).unwrap().to_f64();
        let exact = s.to_f64().sqrt();
        assert!((r - exact).abs() <= 2.0 * ulp, "sqrt({}) = {r}, expected {exact}", s.to_f64());
    }
}

#[test]
fn fixed_sqrt_cases() {
    let one = FixedPoint { raw: Wrapping(1u64 << 31), frac_bits: 31 };
    assert!((fixed_sqrt(one).unwrap().to_f64() - 1.0).abs() <= 2f64.powi(-31));
    let zero = FixedPoint { raw: Wrapping(0), frac_bits: 31 };
    assert_eq!(fixed_sqrt(zero).unwrap().to_f64(), 0.0);
    let negative = FixedPoint { raw: Wrapping(-(1i64 << 30) as u64), frac_bits: 31 };
    assert!(matches!(fixed_sqrt(negative), Err(Error::Domain(_))));
}

#[test]
fn consumption_equals_budget() {
    let backend = NssBackend { mode: NssMode::SharedCircuit, frac_bits: 31, babylonian_iters: 12 };
    let mut rng = SeededRng::new(8, 0);
    let (inputs, _) = instance(3, 10, &mut rng);
    let out = run(&inputs, backend, 8).unwrap();
    let budget = backend.budget(&[10]).unwrap();
    assert!(budget.triples > 0);
    for consumed in &out.consumed {
        assert_eq!(consumed, &budget);
    }
}

#[test]
fn empty_store_fails_loudly() {
    let backend = NssBackend::new(NssMode::SharedCircuit, 31);
    let stores = dealer_offline(&NssBudget::default(), 31, 2, &mut SeededRng::new(1, 0)).unwrap();
    assert!(stores.iter().all(|s| s.remaining().is_empty()));
    let err = match run_with_stores(&[vec![0.1, 0.2], vec![0.3, 0.1]], backend, 1, stores) {
        Err(e) => e,
        Ok(_) => panic!("an empty store must not evaluate the circuit"),
    };
    assert!(matches!(err, Error::Offline(_)), "{err}");
}

#[test]
fn zero_sum_is_degenerate_in_every_mode() {
    for mode in [NssMode::Float, NssMode::Ideal, NssMode::SharedCircuit] {
        let err = match run(&[vec![0.5, -0.25], vec![-0.5, 0.25]], NssBackend::new(mode, 20), 1) {
            Err(e) => e,
            Ok(_) => panic!("{mode:?}: zero sum accepted"),
        };
        assert!(matches!(err, Error::Degenerate(_)), "{mode:?}: {err}");
    }
}

#[test]
fn triple_store_file_round_trip_after_use() {
    let backend = NssBackend::new(NssMode::SharedCircuit, 20);
    let budget = backend.budget(&[3]).unwrap().times(2);
    let stores = dealer_offline(&budget, 20, 2, &mut SeededRng::new(10, 0)).unwrap();
    let mut buf = Vec::new();
    stores[0].write_to(&mut buf).unwrap();
    let back = TripleStore::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(back.remaining(), stores[0].remaining());
    assert_eq!(back.frac_bits(), 20);
    let header: Vec<u64> = buf[..24].chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(header[0], 20);
    assert_eq!(header[1], budget.triples as u64);
}

#[test]
fn output_opening_has_its_own_tag() {
    let inputs = vec![vec![0.3, 0.0, 0.1], vec![0.0, 0.4, 0.1]];
    let out = run(&inputs, NssBackend::new(NssMode::SharedCircuit, 24), 12).unwrap();
    let mut total = vec![Wrapping(0u128); 3];
    let mut rounds = std::collections::BTreeSet::new();
    for env in out.envelopes.iter().filter(|e| e.topic == topics::NSS_OUTPUT) {
        rounds.insert(env.round);
        for (t, w) in total.iter_mut().zip(privdist::net::decode_u128s(&env.payload).unwrap()) {
            *t += Wrapping(w);
        }
    }
    assert_eq!(rounds.len(), 1);
    let last_round = out.envelopes.iter().map(|e| e.round).max().unwrap();
    assert_eq!(rounds.into_iter().next(), Some(last_round));
    // With two parties each share crosses the wire exactly once.
    let scale = 2f64.powi(24);
    for (t, o) in total.iter().zip(&out.outputs[0]) {
        assert_eq!(t.0 as i128 as f64 / scale, *o);
    }
}
