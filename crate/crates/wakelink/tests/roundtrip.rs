use wakelink::config::{resolve, to_toml, Preset};
use wakelink::{dataset, params};
use wakelink_core::pipeline::{random_models, run_trial, LinkRealization, TrialPolicy};
use wakelink_core::signal::generate_dataset;
use wakelink_core::{derive_stream, Hyperparams, Purpose, Split};

#[test]
fn reloaded_models_give_identical_trials() {
    let cfg = Preset::Desk.config();
    let n = &cfg.network;
    let m = random_models(
        &cfg.sim,
        n.enc_hidden,
        n.dec_hidden,
        n.hyper_hidden,
        n.beta,
        n.threshold,
        &mut derive_stream(4, Purpose::Init, 0),
    );
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.wlnp");
    params::write(&p, &m).unwrap();
    let back = params::read(&p).unwrap();
    back.validate(&cfg.sim).unwrap();
    let ds = generate_dataset(&cfg.sim, &cfg.data, Split::Test, 0, 20);
    let lambda = Hyperparams::new(5.0, 1.0, 3.0).unwrap();
    for (i, ex) in ds.examples.iter().enumerate() {
        let link = LinkRealization::draw(&cfg.sim, &cfg.physical, Split::Test, 0, i as u32);
        for policy in [TrialPolicy::WAKE_UP, TrialPolicy::ALWAYS_ON] {
            assert_eq!(
                run_trial(ex, &lambda, &link, &m, &cfg.sim, &policy),
                run_trial(ex, &lambda, &link, &back, &cfg.sim, &policy)
            );
        }
    }
}

#[test]
fn large_preset_models_round_trip() {
    let cfg = Preset::Paper.config();
    let n = &cfg.network;
    let m = random_models(
        &cfg.sim,
        n.enc_hidden,
        n.dec_hidden,
        n.hyper_hidden,
        n.beta,
        n.threshold,
        &mut derive_stream(5, Purpose::Init, 0),
    );
    assert_eq!(m.encoder.layers[0].outputs(), 500);
    assert_eq!(m.decoder.layers[0].outputs(), 200);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.wlnp");
    params::write(&p, &m).unwrap();
    assert_eq!(params::read(&p).unwrap(), m);
}

#[test]
fn every_split_round_trips() {
    let cfg = Preset::Desk.config();
    let dir = tempfile::tempdir().unwrap();
    for (k, split) in [Split::Train, Split::Dt, Split::Pt, Split::Test].into_iter().enumerate() {
        let ds = generate_dataset(&cfg.sim, &cfg.data, split, k as u32, 5);
        let stem = dir.path().join(split.name());
        dataset::write(&stem, &ds, k as u32, cfg.sim.classes, cfg.sim.seed).unwrap();
        let (back, rep) = dataset::read(&dataset::paths(&stem)[0]).unwrap();
        assert_eq!((back, rep), (ds, k as u32));
    }
}

#[test]
fn resolved_config_survives_toml() {
    let o = vec![wakelink::config::parse_assignment("sim.snr_db=3.25").unwrap()];
    let c = resolve(Preset::Desk, None, &o).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, to_toml(&c).unwrap()).unwrap();
    assert_eq!(resolve(Preset::Desk, Some(&p), &[]).unwrap(), c);
}
