//! Cross-module flows: activations to chunk decisions to scans, plus the
//! deterministic sweeps.

use chunksched::entropy::HistogramSpec;
use chunksched::fusion::experiment::{launch_sweep, SweepConfig};
use chunksched::policy::{
    CalibrationRef, ChunkBounds, ChunkDistribution, PolicyVariant, Scheduler, SchedulerFeatures, SchedulerPolicy,
    TraceRecord, ROUTED_BUCKETS,
};
use chunksched::rotation::{rotation_sweep, RotationSweepConfig};
use chunksched::scan::io::{read_pair, write_pair};
use chunksched::scan::synth::{generate_activations, random_scan_params, Distribution, SyntheticSpec};
use chunksched::scan::{scan_chunked, scan_sequential, ScanState};
use chunksched::workload::{verify_fixtures, Fixtures};

#[test]
fn scheduled_chunks_preserve_the_scan() {
    let params = random_scan_params(8, 4, 1000, 11).unwrap();
    let h0 = ScanState::for_params(&params);
    let (reference, _) = scan_sequential(&params, &h0).unwrap();
    let spec = HistogramSpec::runtime_default();
    let bounds = ChunkBounds::default();
    let cal = CalibrationRef::log_k(spec.bins).unwrap();
    for (i, dist) in [
        Distribution::Uniform,
        Distribution::StandardNormal,
        Distribution::Laplace { scale: 1.0 },
        Distribution::Sparse { fraction: 0.1 },
    ]
    .into_iter()
    .enumerate()
    {
        let tensor = generate_activations(&SyntheticSpec::new(dist, i as u64, vec![16, 256]).unwrap()).unwrap();
        let variant = PolicyVariant::SampledHistogram { stride: 4 };
        let f = SchedulerFeatures::extract(&variant, &tensor, &spec).unwrap();
        let policy = SchedulerPolicy::new(variant, vec![32, 64, 128, 256, 512]).unwrap();
        let d = Scheduler::new(policy, bounds, cal).unwrap().decide(&f).unwrap();
        let (out, _) = scan_chunked(&params, &h0, d.chunk).unwrap();
        assert!(out.bit_identical(&reference), "{dist:?} -> chunk {}", d.chunk);
        let trace = TraceRecord::new(&d, &f);
        assert_eq!(trace.chunk, d.chunk);
        assert_eq!(trace.seq_len, Some(256));
    }
}

#[test]
fn random_policy_covers_buckets_reproducibly() {
    let run = || {
        let p = SchedulerPolicy::routed(PolicyVariant::Random { seed: 4 }).unwrap();
        let mut s = Scheduler::new(p, ChunkBounds::new(128, 2048).unwrap(), CalibrationRef::legacy()).unwrap();
        (0..2544)
            .map(|_| s.decide(&SchedulerFeatures::default()).unwrap().chunk)
            .collect::<ChunkDistribution>()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a.total(), 2544);
    assert_eq!(a.0.keys().copied().collect::<Vec<_>>(), ROUTED_BUCKETS.to_vec());
    for &n in a.0.values() {
        assert!((400..620).contains(&n), "{a}");
    }
    let round: ChunkDistribution = a.to_string().parse().unwrap();
    assert_eq!(round, a);
}

#[test]
fn scan_files_round_trip_to_the_same_output() {
    let dir = tempfile::tempdir().unwrap();
    let params = random_scan_params(4, 8, 300, 2).unwrap();
    let (out, _) = scan_sequential(&params, &ScanState::for_params(&params)).unwrap();
    write_pair(dir.path(), "case", &params, Some(&out)).unwrap();
    let (back, stored) = read_pair(dir.path(), "case").unwrap();
    assert_eq!(back, params);
    let (again, _) = scan_chunked(&back, &ScanState::for_params(&back), 7).unwrap();
    assert!(again.bit_identical(&stored.unwrap()));
}

#[test]
fn launch_sweep_is_deterministic_and_dp_never_launches_more() {
    let cfg = SweepConfig::default();
    let rows = launch_sweep(&cfg).unwrap();
    assert_eq!(rows, launch_sweep(&cfg).unwrap());
    assert_eq!(rows.len(), cfg.lengths.len() * cfg.regimes.len() * 4);
    for group in rows.chunks(4) {
        let base = group.iter().find(|r| r.policy == "no-fusion").unwrap();
        assert_eq!(base.launches, base.n);
        assert_eq!(base.reduction_pct, 0.0);
        for r in group {
            assert!(r.launches <= base.launches);
            assert!(r.launches >= base.n.div_ceil(cfg.budget.max_depth()));
        }
    }
}

#[test]
fn rotation_sweep_independent_of_thread_order() {
    let cfg = RotationSweepConfig {
        seeds: (0..16).rev().collect(),
        d: 256,
        ..Default::default()
    };
    let rows = rotation_sweep(&cfg).unwrap();
    assert!(rows.windows(2).all(|w| w[0].seed < w[1].seed));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let single = pool.install(|| rotation_sweep(&cfg).unwrap());
    assert_eq!(rows, single);
}

#[test]
fn embedded_fixtures_verify() {
    let fx = Fixtures::embedded().unwrap();
    let checks = verify_fixtures(&fx).unwrap();
    let bad: Vec<_> = checks.iter().filter(|c| !c.pass).collect();
    assert!(bad.is_empty(), "{bad:#?}");
}
