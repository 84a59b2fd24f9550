use homsim::analytic::{detection_rate, heralded_states_with_vacuum};
use homsim::hilbert::{inner, BasisIndex, Level, Operator, StateVector};
use homsim::model::{initial_state, ChannelTag, HamiltonianChoice, StageModel, SystemParams};
use homsim::stats::{binomial_stderr, ks_one_sample, ks_two_sample, mean_stderr};
use homsim::trajectory::{
    precompute_propagator, EngineKind, FastSampler, FixedStepEngine, Outcome, ProtocolEngine,
    Renormalization, RngStream, Sampler, TICK,
};
use homsim::Error;
use num_complex::Complex64;

fn one_photon_in_cavity_1() -> SystemParams {
    SystemParams {
        g: 0.0,
        omega: 0.0,
        hamiltonian: HamiltonianChoice::Full,
        ..SystemParams::default()
    }
}

fn photon_state(p: &SystemParams) -> StateVector {
    StateVector::basis(
        &p.dims(),
        BasisIndex::new(Level::A, Level::A, 1, 0).flatten(p.n_max),
    )
}

fn first_event_times(sampler: &Sampler, psi0: &StateVector, seed: u64, n: u64, t_max: f64) -> Vec<f64> {
    (0..n)
        .filter_map(|i| {
            let mut rng = RngStream::new(seed, i);
            let out = sampler.run_until_click(psi0, &mut rng, t_max).unwrap();
            out.click.map(|c| c.time)
        })
        .collect()
}

#[test]
fn no_dissipation_means_no_jumps() {
    let p = SystemParams {
        kappa: 0.0,
        hamiltonian: HamiltonianChoice::Full,
        ..SystemParams::default()
    };
    let model = StageModel::new(&p).unwrap();
    let psi0 = initial_state(&p);
    for kind in [EngineKind::Fixed, EngineKind::Fast] {
        let sampler = Sampler::new(kind, &model, p.dt, 50.0).unwrap();
        for i in 0..20 {
            let mut rng = RngStream::new(3, i);
            let out = sampler.run_until_click(&psi0, &mut rng, 50.0).unwrap();
            assert!(out.events.is_empty(), "{kind:?} jumped");
            assert!(out.click.is_none());
        }
    }
}

#[test]
fn heralded_states_have_zero_jump_probability() {
    let p = SystemParams::default();
    let engine = FixedStepEngine::new(&StageModel::new(&p).unwrap(), p.dt).unwrap();
    let (plus, minus) = heralded_states_with_vacuum(p.n_max);
    assert_eq!(engine.jump_probability(plus.amplitudes()), 0.0);
    assert_eq!(engine.jump_probability(minus.amplitudes()), 0.0);
}

#[test]
fn cavity_photon_escapes_at_twice_kappa() {
    let p = one_photon_in_cavity_1();
    let model = StageModel::new(&p).unwrap();
    let psi0 = photon_state(&p);
    let rate = 2.0 * p.kappa;
    let cdf = |t: f64| 1.0 - (-rate * t).exp();

    let fast = Sampler::new(EngineKind::Fast, &model, p.dt, 10.0).unwrap();
    let fast_times = first_event_times(&fast, &psi0, 11, 5000, 10.0);
    assert_eq!(fast_times.len(), 5000);
    let ks = ks_one_sample(&fast_times, cdf);
    assert!(ks.passes(0.01), "fast sampler: {ks:?}");

    // A step of 1e-4 keeps the per-step probability at 2e-3.
    let fixed = Sampler::new(EngineKind::Fixed, &model, 1e-4, 10.0).unwrap();
    let fixed_times = first_event_times(&fixed, &psi0, 12, 5000, 10.0);
    assert_eq!(fixed_times.len(), 5000);
    let ks = ks_one_sample(&fixed_times, cdf);
    assert!(ks.passes(0.01), "fixed-step engine: {ks:?}");
    let (mean, se) = mean_stderr(&fixed_times);
    assert!((mean - 1.0 / rate).abs() < 4.0 * se, "mean {mean} ± {se}");
}

#[test]
fn first_order_renormalization_agrees_statistically() {
    let p = one_photon_in_cavity_1();
    let model = StageModel::new(&p).unwrap();
    let psi0 = photon_state(&p);
    let exact = FixedStepEngine::new(&model, 1e-4).unwrap();
    let first = exact.clone().with_renormalization(Renormalization::FirstOrder);
    let run = |e: &FixedStepEngine, seed| -> Vec<f64> {
        (0..3000)
            .map(|i| {
                let mut rng = RngStream::new(seed, i);
                e.run_until_click(&psi0, &mut rng, 10.0).unwrap().click.unwrap().time
            })
            .collect()
    };
    let ks = ks_two_sample(&run(&exact, 21), &run(&first, 22));
    assert!(ks.passes(0.01), "{ks:?}");
}

#[test]
fn oversized_step_is_rejected() {
    let p = one_photon_in_cavity_1();
    let engine = FixedStepEngine::new(&StageModel::new(&p).unwrap(), 0.01).unwrap();
    let mut rng = RngStream::new(0, 0);
    match engine.step(&photon_state(&p), 0.0, &mut rng) {
        Err(Error::StepSizeViolation { probability, limit }) => {
            assert!((probability - 0.2).abs() < 1e-12);
            assert_eq!(limit, 0.05);
        }
        other => panic!("expected a step-size violation, got {other:?}"),
    }
}

#[test]
fn fast_and_fixed_samplers_agree_on_the_herald() {
    // Strong drive keeps the fixed-step run short.
    let p = SystemParams {
        omega: 1.0,
        delta: 5.0,
        kappa: 2.0,
        t_wait: 20.0,
        hamiltonian: HamiltonianChoice::Full,
        ..SystemParams::default()
    };
    let model = StageModel::new(&p).unwrap();
    let psi0 = initial_state(&p);
    let n = 2000;
    let fast = Sampler::new(EngineKind::Fast, &model, p.dt, p.t_wait).unwrap();
    let fixed = Sampler::new(EngineKind::Fixed, &model, p.dt, p.t_wait).unwrap();
    let a = first_event_times(&fast, &psi0, 31, n, p.t_wait);
    let b = first_event_times(&fixed, &psi0, 32, n, p.t_wait);
    let ks = ks_two_sample(&a, &b);
    assert!(ks.passes(0.01), "{ks:?}");
    let (pa, pb) = (a.len() as f64 / n as f64, b.len() as f64 / n as f64);
    let se = (binomial_stderr(pa, n as usize).powi(2) + binomial_stderr(pb, n as usize).powi(2)).sqrt();
    assert!((pa - pb).abs() < 4.0 * se, "{pa} vs {pb}");
}

#[test]
fn zero_window_gives_no_click() {
    let p = SystemParams::default();
    for kind in [EngineKind::Fixed, EngineKind::Fast] {
        let engine = ProtocolEngine::new(&SystemParams { t_wait: 1e-9, ..p.clone() }, kind).unwrap();
        let rec = engine.run_protocol(&mut RngStream::new(1, 0)).unwrap();
        assert_eq!(rec.outcome, Outcome::NoClick);
        assert!(rec.events.is_empty());
        let sampler = engine.sampler();
        let out = sampler
            .run_until_click(&initial_state(&p), &mut RngStream::new(1, 0), 0.0)
            .unwrap();
        assert!(out.click.is_none() && out.events.is_empty());
        assert_eq!(out.final_state, initial_state(&p));
    }
}

#[test]
fn streams_are_reproducible() {
    let p = SystemParams {
        gamma_ca: 0.3,
        gamma_cb: 0.3,
        eta: 0.7,
        ..SystemParams::default()
    };
    let engine = ProtocolEngine::new(&p, EngineKind::Fast).unwrap();
    for i in 0..50 {
        let a = engine.run_protocol(&mut RngStream::new(9, i)).unwrap();
        let b = engine.run_protocol(&mut RngStream::new(9, i)).unwrap();
        assert_eq!(a, b);
    }
    let differs = (0..50).any(|i| {
        engine.run_protocol(&mut RngStream::new(9, i)).unwrap().events
            != engine.run_protocol(&mut RngStream::new(10, i)).unwrap().events
    });
    assert!(differs);
}

#[test]
fn fast_sampler_times_lie_on_the_tick_grid() {
    let p = SystemParams::default();
    let engine = ProtocolEngine::new(&p, EngineKind::Fast).unwrap();
    let mut seen = 0;
    for i in 0..500 {
        let rec = engine.run_protocol(&mut RngStream::new(4, i)).unwrap();
        for e in &rec.events {
            assert_eq!((e.time / TICK).fract(), 0.0);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn herald_probability_matches_rate() {
    for eta in [1.0, 0.5] {
        let p = SystemParams {
            eta,
            ..SystemParams::default()
        };
        let engine = ProtocolEngine::new(&p, EngineKind::Fast).unwrap();
        let n = 20_000;
        let clicks = (0..n)
            .filter(|&i| {
                engine.run_herald(&mut RngStream::new(5, i)).unwrap().outcome != Outcome::NoClick
            })
            .count();
        let ps = clicks as f64 / n as f64;
        let want = 1.0 - (-detection_rate(&p) * p.t_wait).exp();
        let se = binomial_stderr(want, n as usize);
        assert!((ps - want).abs() < 4.0 * se, "η={eta}: {ps} vs {want} ± {se}");
    }
}

fn overlap2(a: &StateVector, b: &StateVector) -> f64 {
    inner(a, b).unwrap().norm_sqr()
}

#[test]
fn herald_projects_onto_bell_state() {
    let p = SystemParams::default();
    let engine = ProtocolEngine::new(&p, EngineKind::Fast).unwrap();
    let (plus, minus) = heralded_states_with_vacuum(p.n_max);
    let mut fids = Vec::new();
    for i in 0..5000 {
        let rec = engine.run_herald(&mut RngStream::new(6, i)).unwrap();
        if let Some(fc) = rec.first_click {
            let target = match fc.tag {
                ChannelTag::D1 => &plus,
                ChannelTag::D2 => &minus,
                other => panic!("unexpected herald {other:?}"),
            };
            fids.push(overlap2(target, &fc.post_click_state));
        }
    }
    assert!(fids.len() > 300);
    let (mean, _) = mean_stderr(&fids);
    assert!(mean >= 0.99, "mean fidelity {mean}");
}

fn second_detector_stats(phi: f64) -> (usize, usize, usize) {
    let p = SystemParams {
        phi,
        ..SystemParams::default()
    };
    let engine = ProtocolEngine::new(&p, EngineKind::Fast).unwrap();
    let (mut heralds, mut same, mut two) = (0, 0, 0);
    for i in 0..3000 {
        let rec = engine.run_protocol(&mut RngStream::new(7, i)).unwrap();
        let Some(first) = &rec.first_click else { continue };
        heralds += 1;
        if let Some((tag, time)) = rec.second_click {
            two += 1;
            assert!(time > first.time);
            if tag == first.tag {
                same += 1;
            }
        }
    }
    (heralds, two, same)
}

#[test]
fn phase_controls_second_detector() {
    let (heralds, two, same) = second_detector_stats(0.0);
    assert!(heralds > 200);
    assert!(two as f64 >= 0.99 * heralds as f64, "{two}/{heralds}");
    assert!(same as f64 >= 0.99 * two as f64, "φ=0: {same}/{two}");

    let (heralds, two, same) = second_detector_stats(std::f64::consts::PI);
    assert!(two as f64 >= 0.99 * heralds as f64);
    assert!((same as f64) <= 0.01 * two as f64, "φ=π: {same}/{two}");
}

#[test]
fn propagator_is_first_order_for_small_steps() {
    let p = SystemParams {
        hamiltonian: HamiltonianChoice::Full,
        gamma_ca: 0.2,
        ..SystemParams::default()
    };
    let model = StageModel::new(&p).unwrap();
    let dt = 1e-4;
    let u = precompute_propagator(&model.h_eff, dt).unwrap();
    let linear = &Operator::identity(model.dims()) - &model.h_eff.scale(Complex64::new(0.0, dt));
    let h_norm = model.h_eff.norm_one();
    assert!(u.max_abs_diff(&linear) <= (h_norm * dt).powi(2));
    assert!(precompute_propagator(&model.h_eff, 0.0).is_err());
}

#[test]
fn observe_tracks_unconditioned_decay() {
    // With no drive, ⟨n₁⟩ averaged over trajectories decays as e^{−2κt}.
    let p = SystemParams {
        kappa: 1.0,
        ..one_photon_in_cavity_1()
    };
    let model = StageModel::new(&p).unwrap();
    let n1 = homsim::model::cavity_number(0, p.n_max);
    let times = [0.25, 0.5, 1.0];
    let sampler = FastSampler::new(&model, 1.0).unwrap();
    let n = 4000;
    let mut sums = [0.0; 3];
    for i in 0..n {
        let obs = sampler
            .observe(&photon_state(&p), &mut RngStream::new(8, i), &times, &[n1.clone()])
            .unwrap();
        for (s, o) in sums.iter_mut().zip(&obs) {
            *s += o[0];
        }
    }
    for (s, t) in sums.iter().zip(times) {
        let want: f64 = (-2.0 * p.kappa * t).exp();
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((s / n as f64 - want).abs() < 4.0 * se, "t={t}");
    }
}
