use super::*;
use crate::dynamics::build_partition;

fn setup(j: f64, d: f64) -> (ModelSpec, Partition) {
    let m = ModelSpec::fig2().with_coupling(j);
    let m = ModelSpec { d, ..m };
    let p = build_partition(&m, (0.0, 0.0), 1.0).unwrap();
    (m, p)
}

fn reset_line(m: &ModelSpec) -> InitialLaw {
    InitialLaw::Uniform { v: (m.v_r, m.v_r), w: (2.0, 12.0) }
}

#[test]
fn single_neuron_matches_the_sampler() {
    let (m, p) = setup(3.0, 0.5);
    let cfg = NetworkConfig { n: 1, horizon: 20.0, seed: 4, ..Default::default() };
    let init = InitialLaw::Point { v: 1.0, w: 6.0 };
    let run = simulate_network(&m, &p, &cfg, &init, &Control::default()).unwrap();
    let k = Kappa::zero();
    let sampler = TimeChangeSampler::new(&m, &k, &Control::default());
    let mut rng = Stream::new(4, tag::NETWORK, 0);
    let (mut x, mut t) = (State::new(1.0, 6.0), 0.0);
    let mut expect = Vec::new();
    loop {
        let j = sampler.sample(x, t, &mut rng).unwrap();
        if j.t1 > cfg.horizon {
            break;
        }
        expect.push(j.t1);
        x = j.post_state;
        t = j.t1;
    }
    assert_eq!(run.raster.spikes.len(), expect.len());
    for ((a, i), b) in run.raster.spikes.iter().zip(&expect) {
        assert_eq!(*i, 0);
        assert!((a - b).abs() < 1e-6 * (1.0 + b), "{a} {b}");
    }
    assert!(run.state.pending.is_empty());
}

#[test]
fn kicks_act_only_after_the_delay() {
    let d = 0.7;
    let (m0, p) = setup(0.0, d);
    let (m1, _) = setup(8.0, d);
    let cfg = NetworkConfig { n: 3, horizon: 5.0, seed: 11, ..Default::default() };
    let init = reset_line(&m0);
    let a = simulate_network(&m0, &p, &cfg, &init, &Control::default()).unwrap();
    let b = simulate_network(&m1, &p, &cfg, &init, &Control::default()).unwrap();
    let first = a.raster.spikes[0].0;
    let before = |r: &SpikeRaster| r.spikes.iter().filter(|s| s.0 < first + d).copied().collect::<Vec<_>>();
    let (ea, eb) = (before(&a.raster), before(&b.raster));
    assert_eq!(ea.len(), eb.len());
    for (x, y) in ea.iter().zip(&eb) {
        assert_eq!(x.1, y.1);
        assert!((x.0 - y.0).abs() < 1e-6);
    }
    assert_ne!(a.raster.spikes, b.raster.spikes);
}

#[test]
fn every_spike_queues_n_minus_one_kicks() {
    let (m, p) = setup(2.0, 0.5);
    for batch in [0.0, 0.05] {
        let cfg = NetworkConfig { n: 20, horizon: 4.0, seed: 2, kick_batch: batch, ..Default::default() };
        let run = simulate_network(&m, &p, &cfg, &reset_line(&m), &Control::default()).unwrap();
        let spikes = run.raster.spikes.len();
        let pending = run.state.pending.len();
        assert_eq!(run.kicks_delivered, (spikes - pending) * 19);
        for k in &run.state.pending {
            assert!(k.t > cfg.horizon && k.t <= cfg.horizon + m.d + batch + 1e-12);
        }
        assert!(run.raster.spikes.windows(2).all(|w| w[0].0 <= w[1].0));
        if batch > 0.0 {
            assert!(run.state.pending.iter().all(|k| ((k.t / batch).round() * batch - k.t).abs() < 1e-12));
        }
    }
}

#[test]
fn zero_delay_needs_the_flag_and_trips_the_watchdog() {
    let (m, p) = setup(40.0, 0.0);
    let cfg = NetworkConfig { n: 10, horizon: 2.0, seed: 1, ..Default::default() };
    let init = reset_line(&m);
    let ctrl = Control::default();
    assert!(matches!(simulate_network(&m, &p, &cfg, &init, &ctrl), Err(Error::InvalidArgument(_))));
    let cfg = NetworkConfig { allow_zero_delay: true, watchdog: 5.0, ..cfg };
    match simulate_network(&m, &p, &cfg, &init, &ctrl) {
        Err(Error::BlowUpCascade { count, .. }) => assert!(count > 50),
        other => panic!("{other:?}"),
    }
    let (m, _) = setup(0.5, 0.0);
    let cfg = NetworkConfig { n: 5, horizon: 2.0, seed: 1, allow_zero_delay: true, ..Default::default() };
    let run = simulate_network(&m, &p, &cfg, &init, &ctrl).unwrap();
    assert_eq!(run.kicks_delivered, run.raster.spikes.len() * 4);
}

#[test]
fn same_raster_on_any_thread_count() {
    let (m, p) = setup(2.0, 0.3);
    let cfg = NetworkConfig { n: 30, horizon: 3.0, seed: 9, ..Default::default() };
    let go = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_network(&m, &p, &cfg, &reset_line(&m), &Control::default()).unwrap())
    };
    assert_eq!(go(1).raster, go(4).raster);
}

#[test]
fn rate_of_a_poisson_stream() {
    let mut rng = Stream::new(3, tag::CHECK, 0);
    let horizon = 5000.0;
    let mut t = 0.0;
    let mut spikes = Vec::new();
    loop {
        t += rng.exp1() / 2.0;
        if t > horizon {
            break;
        }
        spikes.push((t, 0));
    }
    let r = SpikeRaster { n: 1, horizon, spikes };
    let series = population_rate(&r, 1.0).unwrap();
    let mean = series.iter().map(|x| x.1).sum::<f64>() / series.len() as f64;
    let se = (2.0 / horizon).sqrt();
    assert!((mean - 2.0).abs() < 3.0 * se, "{mean}");
    let half = population_rate(&r, 0.5).unwrap();
    let mean_half = half.iter().map(|x| x.1).sum::<f64>() / half.len() as f64;
    assert!((mean - mean_half).abs() < 1e-12);
    assert!(population_rate(&r, 0.0).is_err());
    let empty = SpikeRaster { n: 3, horizon: 2.0, spikes: Vec::new() };
    assert!(population_rate(&empty, 0.5).unwrap().iter().all(|x| x.1 == 0.0));
}
