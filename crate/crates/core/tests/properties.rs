use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chunksched::entropy::{entropy_of, histogram_of, ActivationTensor, HistogramSpec};
use chunksched::fusion::{
    exhaustive, solve_dp, solve_greedy_threshold, static_fusion, surrogate_dispatch_latency, FusionWeights,
    OperatorChain, OperatorDesc, ResourceBudget,
};
use chunksched::policy::{
    kernel_calls, schedule, select_chunk, CalibrationRef, ChunkBounds, PolicyVariant, SchedulerFeatures,
    SchedulerPolicy, ROUTED_BUCKETS,
};
use chunksched::rotation::{check_majorization, fwht, fwht_in_place, SimplexVector};
use chunksched::scan::synth::random_scan_params;
use chunksched::scan::{scan_range, scan_sequential, ScanOutput, ScanState};

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6, 1..400)
}

fn bins() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![2usize, 3, 16, 32, 64, 100, 256, 512])
}

fn op() -> impl Strategy<Value = OperatorDesc> {
    (0.0f64..4.2, 0.0f64..2.0, 0.0f64..2.0, 1.0f64..16.0, 0.0f64..64.0).prop_map(|(h, ai, m, c, r)| OperatorDesc {
        entry_entropy: h,
        arithmetic_intensity: ai,
        memory_traffic: m,
        shared_mem_cost: c,
        register_cost: r,
    })
}

fn chain(max: usize) -> impl Strategy<Value = OperatorChain> {
    prop::collection::vec(op(), 1..=max).prop_map(|ops| OperatorChain::new(ops).unwrap())
}

fn budget() -> impl Strategy<Value = ResourceBudget> {
    (16.0f64..80.0, 64.0f64..256.0).prop_map(|(m, r)| ResourceBudget::new(m, r, 0.0, 16.0).unwrap())
}

proptest! {
    #[test]
    fn masses_sum_to_one(x in values(), k in bins(), stride in 1usize..5) {
        let spec = HistogramSpec::new(k, 1e-8).unwrap().with_stride(stride).unwrap();
        let h = histogram_of(&x, &spec).unwrap();
        prop_assert_eq!(h.masses.len(), k);
        prop_assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(h.sample_count, x.len().div_ceil(stride));
    }

    #[test]
    fn entropy_is_bounded_by_log_k(x in values(), k in bins()) {
        let spec = HistogramSpec::new(k, 1e-8).unwrap();
        let e = entropy_of(&ActivationTensor::from_vec(x).unwrap(), &spec).unwrap();
        prop_assert!(e.raw_nats <= (k as f64).ln() + 1e-9);
        prop_assert!(e.raw_nats >= -1e-7);
        prop_assert_eq!(e.normalized, e.raw_nats / (k as f64).ln());
    }

    #[test]
    fn entropy_ignores_order(mut x in values(), k in bins(), seed in any::<u64>()) {
        let spec = HistogramSpec::new(k, 1e-8).unwrap();
        let before = histogram_of(&x, &spec).unwrap();
        x.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let after = histogram_of(&x, &spec).unwrap();
        prop_assert_eq!(before.masses, after.masses);
    }

    #[test]
    fn stride_equals_explicit_subsample(x in values(), k in bins(), stride in 1usize..7) {
        let spec = HistogramSpec::new(k, 1e-8).unwrap();
        let strided = histogram_of(&x, &spec.with_stride(stride).unwrap()).unwrap();
        let picked: Vec<f64> = x.iter().step_by(stride).copied().collect();
        let explicit = histogram_of(&picked, &spec).unwrap();
        prop_assert_eq!(&strided.masses, &explicit.masses);
        if stride == 1 {
            prop_assert_eq!(strided.masses, histogram_of(&x, &spec).unwrap().masses);
        }
    }

    #[test]
    fn chunk_is_monotone_in_signal(a in 0.0f64..20.0, b in 0.0f64..20.0, h_ref in 0.5f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let cal = CalibrationRef::fixed(h_ref).unwrap();
        let bounds = ChunkBounds::default();
        let c_lo = select_chunk(lo, bounds, cal).unwrap().chunk;
        let c_hi = select_chunk(hi, bounds, cal).unwrap().chunk;
        prop_assert!(c_lo <= c_hi);
        for c in [c_lo, c_hi] {
            prop_assert!(c.is_power_of_two() && (32..=512).contains(&c));
        }
    }

    #[test]
    fn calibrated_rule_depends_only_on_the_ratio(ratio in 0.0f64..1.5, k1 in bins(), k2 in bins()) {
        let bounds = ChunkBounds::default();
        let c1 = select_chunk(ratio * (k1 as f64).ln(), bounds, CalibrationRef::log_k(k1).unwrap()).unwrap();
        let c2 = select_chunk(ratio * (k2 as f64).ln(), bounds, CalibrationRef::log_k(k2).unwrap()).unwrap();
        prop_assert!((c1.r.unwrap() - c2.r.unwrap()).abs() < 1e-12);
        // Away from rounding boundaries the chunks agree exactly.
        let raw = 32.0 + ratio.min(1.0) * 480.0;
        let frac = raw.log2().fract();
        if (frac - 0.5).abs() > 1e-9 {
            prop_assert_eq!(c1.chunk, c2.chunk);
        }
    }

    #[test]
    fn guard_with_zero_delta_is_transparent(h in 0.0f64..6.0, safe in prop::sample::select(ROUTED_BUCKETS.to_vec())) {
        let bounds = ChunkBounds::new(128, 2048).unwrap();
        let cal = CalibrationRef::log_k(256).unwrap();
        let f = SchedulerFeatures { full_entropy: Some(h), ..Default::default() };
        let inner = SchedulerPolicy::routed(PolicyVariant::FullHistogram).unwrap();
        let guarded = SchedulerPolicy::routed(PolicyVariant::Guarded {
            inner: Box::new(PolicyVariant::FullHistogram),
            safe_chunk: safe,
            min_delta_buckets: 0,
        }).unwrap();
        let a = schedule(&inner, &f, bounds, cal).unwrap();
        let b = schedule(&guarded, &f, bounds, cal).unwrap();
        prop_assert_eq!(a.chunk, b.chunk);
    }

    #[test]
    fn guard_agreeing_with_inner_returns_safe(chunk in prop::sample::select(ROUTED_BUCKETS.to_vec()), delta in 0u32..6) {
        let bounds = ChunkBounds::new(128, 2048).unwrap();
        let cal = CalibrationRef::log_k(256).unwrap();
        let f = SchedulerFeatures::default();
        let guarded = SchedulerPolicy::routed(PolicyVariant::Guarded {
            inner: Box::new(PolicyVariant::Static { chunk }),
            safe_chunk: chunk,
            min_delta_buckets: delta,
        }).unwrap();
        prop_assert_eq!(schedule(&guarded, &f, bounds, cal).unwrap().chunk, chunk);
    }

    #[test]
    fn kernel_calls_cover_the_sequence(len in 1usize..100_000, chunk in 1usize..5000) {
        let n = kernel_calls(len, chunk);
        prop_assert!(n * chunk >= len);
        prop_assert!((n - 1) * chunk < len);
    }

    #[test]
    fn dp_matches_enumeration(c in chain(10), b in budget()) {
        let w = FusionWeights::default();
        let dp = solve_dp(&c, &w, &b).unwrap();
        let ex = exhaustive(&c, &w, &b).unwrap().unwrap();
        prop_assert_eq!(dp.total_utility, ex.total_utility);
        dp.validate(&c, &b).unwrap();
    }

    #[test]
    fn plans_partition_the_chain(c in chain(24), b in budget(), group in 1usize..6) {
        let w = FusionWeights::default();
        let dp = solve_dp(&c, &w, &b).unwrap();
        for plan in [
            dp.clone(),
            solve_greedy_threshold(&c, &w, &b).unwrap(),
            static_fusion(&c, &w, &b, group).unwrap(),
        ] {
            plan.validate(&c, &b).unwrap();
            prop_assert_eq!(plan.regions.iter().map(|r| r.len()).sum::<usize>(), c.len());
            prop_assert!(plan.total_utility <= dp.total_utility);
        }
    }

    #[test]
    fn surrogate_is_monotone(a in 0usize..1000, b in 0usize..1000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(surrogate_dispatch_latency(lo, 0.05155) <= surrogate_dispatch_latency(hi, 0.05155));
    }

    #[test]
    fn hadamard_preserves_norm_and_bounds_peak(
        log_d in 0u32..11,
        seed in prop::collection::vec(-100.0f64..100.0, 1024),
    ) {
        let d = 1usize << log_d;
        let x = &seed[..d];
        let z = fwht(x).unwrap();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((nx - nz).abs() <= 1e-10 * nx.max(1e-300));
        let l1: f64 = x.iter().map(|v| v.abs()).sum();
        let peak = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(peak <= l1 / (d as f64).sqrt() * (1.0 + 1e-12));
        // Involution.
        let mut back = z.clone();
        fwht_in_place(&mut back).unwrap();
        for (u, v) in back.iter().zip(x) {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn every_distribution_majorizes_uniform(m in 2usize..40, raw in prop::collection::vec(0.0f64..1.0, 40)) {
        let mut p: Vec<f64> = raw[..m].to_vec();
        p[0] += 0.01;
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let p = SimplexVector::new(p).unwrap();
        let u = SimplexVector::uniform(m);
        prop_assert!(check_majorization(&u, &p).unwrap().majorized);
        prop_assert!(check_majorization(&p, &p).unwrap().majorized);
        prop_assert!(u.entropy() >= p.entropy() - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_scan_matches_single_pass(seed in any::<u64>(), split in 0usize..=96) {
        let p = random_scan_params(3, 4, 96, seed).unwrap();
        let h0 = ScanState::for_params(&p);
        let (seq, seq_h) = scan_sequential(&p, &h0).unwrap();
        let mut state = h0.clone();
        let mut out = ScanOutput::zeros(p.d, p.len);
        scan_range(&p, &mut state, 0..split, &mut out).unwrap();
        scan_range(&p, &mut state, split..p.len, &mut out).unwrap();
        prop_assert!(out.bit_identical(&seq));
        prop_assert!(state.h.iter().zip(&seq_h.h).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
