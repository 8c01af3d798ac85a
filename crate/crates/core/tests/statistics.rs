use gwlab_core::coupling::{route_root, CouplingPartition};
use gwlab_core::sampler::{RejectionSampler, SegmentSampler};
use gwlab_core::segments::{speed_regen, SegmentClass, SegmentTally};
use gwlab_core::stats::proportion;
use gwlab_core::{
    BiasParams, Move, OffspringDistribution, RandomnessStream, RegenConfig, RegenMode, Walk,
};

const DRAWS: u64 = 400_000;

fn within(hits: u64, n: u64, target: f64, sigmas: f64) -> bool {
    proportion(hits, n).within_sigmas(target, sigmas)
}

#[test]
fn routed_moves_follow_the_marginals() {
    let (k, beta, eps) = (3u32, 2.0, 1.0);
    let part = CouplingPartition::new(k, BiasParams::new(beta, eps).unwrap());
    let mut stream = RandomnessStream::new(3);
    let mut counts = [[0u64; 4]; 2];
    for _ in 0..DRAWS {
        let u = stream.next_uniform();
        for (w, walk) in [Walk::Beta, Walk::BetaEps].into_iter().enumerate() {
            let slot = match part.route(walk, u) {
                Move::Parent => 0,
                Move::Child(i) => i as usize,
            };
            counts[w][slot] += 1;
        }
    }
    for (w, b) in [(0, beta), (1, beta + eps)] {
        let kf = f64::from(k);
        let q = 1.0 / (kf * b + 1.0);
        let p = b / (kf * b + 1.0);
        assert!(within(counts[w][0], DRAWS, q, 4.0), "parent, bias {b}");
        for (i, &c) in counts[w].iter().enumerate().skip(1) {
            assert!(within(c, DRAWS, p, 4.0), "child {i}, bias {b}");
        }
    }
}

#[test]
fn root_choice_is_uniform() {
    let mut stream = RandomnessStream::new(9);
    let mut counts = [0u64; 3];
    for _ in 0..DRAWS {
        match route_root(stream.next_uniform(), 3) {
            Move::Child(i) => counts[i as usize - 1] += 1,
            Move::Parent => panic!("root has no parent"),
        }
    }
    for c in counts {
        assert!(within(c, DRAWS, 1.0 / 3.0, 4.0));
    }
}

#[test]
fn zero_regeneration_frequency_matches_the_exact_law() {
    let ray = OffspringDistribution::constant(1).unwrap();
    for (i, beta) in [2.0f64, 3.0, 5.0].into_iter().enumerate() {
        for mode in [RegenMode::Strict, RegenMode::Nonstrict] {
            let params = BiasParams::transient(beta, 1.0).unwrap();
            let config = RegenConfig::for_beta(beta).with_mode(mode);
            let mut sampler = RejectionSampler::new(&ray, params, config, 100 + i as u64).unwrap();
            let n = 100_000u64;
            let hits = (0..n).filter(|_| sampler.zero_sr_trial()).count() as u64;
            let exact = match mode {
                RegenMode::Strict => (beta - 1.0) / (beta + 1.0),
                RegenMode::Nonstrict => (beta - 1.0) / beta,
            };
            assert!(
                within(hits, n, exact, 4.0),
                "beta {beta}, {mode}: {hits}/{n}"
            );
        }
    }
}

fn tally(dist: &OffspringDistribution, beta: f64, eps: f64, n: u64, seed: u64) -> SegmentTally {
    let params = BiasParams::transient(beta, eps).unwrap();
    let mut sampler = SegmentSampler::new(dist, params, RegenConfig::for_beta(beta), seed).unwrap();
    SegmentTally::from_summaries(&sampler.collect_summaries(n).unwrap())
}

#[test]
fn single_forward_segments_dominate_on_the_ray() {
    let ray = OffspringDistribution::constant(1).unwrap();
    let t = tally(&ray, 10.0, 1.0, 100_000, 4);
    let est = proportion(t.b_count(0), t.segments());
    assert!(est.value >= 10.0 / 11.0 - 3.0 * est.stderr, "{est:?}");
    assert_eq!(t.violations.total(), 0);
}

#[test]
fn zero_eps_keeps_every_segment_coupled() {
    let dist = OffspringDistribution::uniform(1, 3).unwrap();
    let t = tally(&dist, 3.0, 0.0, 20_000, 5);
    assert_eq!(t.coupled, t.segments());
    assert_eq!(t.class_probability(SegmentClass::Coupled).value, 1.0);
}

#[test]
fn ray_speed_from_segments() {
    let ray = OffspringDistribution::constant(1).unwrap();
    let t = tally(&ray, 3.0, 1.0, 200_000, 6);
    let beta = speed_regen(&t, Walk::Beta).unwrap();
    let beta_eps = speed_regen(&t, Walk::BetaEps).unwrap();
    assert!(beta.within_sigmas(0.5, 4.0), "{beta:?}");
    assert!(beta_eps.within_sigmas(0.6, 4.0), "{beta_eps:?}");
}
