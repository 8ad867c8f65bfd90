//! End-to-end replay properties on the attack test bed.

use metafp_core::adversary::{
    attacker_uplink, feature_replay_attack, quantize_sv, run_signal_replay, FeatureReplayConfig, FeatureReplaySetup,
    ReplayTarget, SvEstimator,
};
use metafp_core::auth::authenticate_p1;
use metafp_core::classifier::FeatureConfig;
use metafp_core::harness::{attack_bed, AttackBed, ExperimentConfig, ExperimentKind, TARGET_DEVICE};
use metafp_core::phy::{CsiVector, Transmitter};
use metafp_core::rng::SeedTree;

fn bed(seed: u64) -> (ExperimentConfig, AttackBed) {
    let cfg = ExperimentConfig::preset(ExperimentKind::Attack, seed).unwrap();
    let bed = attack_bed(&cfg).unwrap();
    (cfg, bed)
}

fn genuine(cfg: &ExperimentConfig, bed: &AttackBed, n: usize, seeds: &SeedTree, tag: &str) -> Vec<CsiVector> {
    let tx = Transmitter::with_link(&cfg.surface, &bed.scenario, bed.link.clone());
    let secret = &bed.codes[cfg.attack.as_ref().unwrap().secret_index];
    (0..n)
        .map(|p| tx.packet(secret, bed.channel, &mut seeds.stream(&format!("{tag}/{p}"))).unwrap())
        .collect()
}

#[test]
fn signal_replay_acceptance_falls_with_distance() {
    let offsets = [0.0001, 0.0005, 0.002, 0.01, 0.05, 0.3, 3.0];
    let seeds = 30;
    let packets = 40;
    let mut mean = vec![0.0; offsets.len()];
    for seed in 0..seeds {
        let (cfg, bed) = bed(100 + seed);
        let spec = cfg.attack.as_ref().unwrap();
        let target = ReplayTarget {
            server: &bed.server,
            dev_id: TARGET_DEVICE,
            surface: &cfg.surface,
            scenario: &bed.scenario,
            legit_link: &bed.link,
            code: &bed.codes[spec.secret_index],
            channel: bed.channel,
        };
        let node = bed.scenario.geometry.tx_position;
        for (i, d) in offsets.iter().enumerate() {
            let mut a = spec.attacker.clone();
            a.position = [node[0], node[1] + d];
            let r = run_signal_replay(&target, &a, packets, &SeedTree::new(seed).subtree(&format!("relay/{i}"))).unwrap();
            mean[i] += r.acceptance_rate / seeds as f64;
        }
    }
    assert!(mean[0] >= 0.9, "co-located acceptance {mean:?}");
    for w in mean.windows(2) {
        assert!(w[1] <= w[0] + 0.02, "acceptance rises with distance: {mean:?}");
    }
    // Beyond the quarter-wavelength guard zone nothing gets through.
    for (d, m) in offsets.iter().zip(&mean) {
        if *d > 0.04 {
            assert!(*m <= 0.01, "{d} m: {m}");
        }
    }
}

#[test]
fn exact_secret_at_node_matches_legitimate_rate() {
    let (cfg, bed) = bed(21);
    let spec = cfg.attack.as_ref().unwrap();
    let secret = bed.codes[spec.secret_index].clone();
    assert_eq!(quantize_sv(&secret.sv, &cfg.surface.levels), secret.sv);

    let seeds = SeedTree::new(21);
    let burst = genuine(&cfg, &bed, 500, &seeds, "legit");
    let legit = burst
        .iter()
        .filter(|c| authenticate_p1(&bed.server, c, TARGET_DEVICE).unwrap().accepted)
        .count() as f64
        / burst.len() as f64;

    let oracle = SvEstimator {
        features: FeatureConfig::default(),
        params: None,
        constant: secret.sv.clone(),
        degenerate: true,
        offset: vec![0.0; secret.sv.len()],
        scale: 1.0,
        validation_rms: 0.0,
    };
    let mut attacker = spec.attacker.clone();
    attacker.position = bed.scenario.geometry.tx_position;
    let uplink = attacker_uplink(&bed.link, &attacker);
    let replay = FeatureReplayConfig::default();
    let heard: Vec<Vec<CsiVector>> = (0..replay.tests)
        .map(|t| genuine(&cfg, &bed, replay.packets_per_test, &seeds, &format!("heard/{t}")))
        .collect();
    let real: Vec<Vec<CsiVector>> = (0..replay.tests)
        .map(|t| genuine(&cfg, &bed, replay.packets_per_test, &seeds, &format!("real/{t}")))
        .collect();
    let setup = FeatureReplaySetup {
        server: &bed.server,
        dev_id: TARGET_DEVICE,
        target_class: bed.secret_class,
        cv: secret.cv,
        channel: bed.channel,
        scenario: &bed.scenario,
        attacker_surface: &cfg.surface,
        uplink: &uplink,
    };
    let r = feature_replay_attack(&oracle, &heard, &real, &setup, &replay, &seeds.subtree("attack")).unwrap();
    assert!(legit >= 0.95, "legitimate rate {legit}");
    assert!(
        (r.acceptance_rate - legit).abs() <= 0.05,
        "exact-code replay {} vs legitimate {legit}",
        r.acceptance_rate
    );
}
