use ddpulse::dft::{CmCount, CmCounter};
use ddpulse::fast::{
    demodulate_cps_fast, direct_shape_counted, modulate_cps_fast, modulate_lps_fast, modulate_oddm_fast,
    predict_cm, reference_oddm_counted, CmParams, FastModem, Implementation,
};
use ddpulse::modem::{modulate_unified, DirectModem};
use ddpulse::qam::{qam_map, QamOrder};
use ddpulse::transforms::cp_remove;
use ddpulse::{CMatrix, DelayDopplerGrid, GuardConfig, GuardMode, ModemConfig, Technique};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn qam_grid(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DelayDopplerGrid {
    let bits: Vec<u8> = (0..2 * m * n).map(|_| rng.random_range(0..2)).collect();
    qam_map(&bits, QamOrder::new(4).unwrap(), m, n).unwrap()
}

fn cfg(t: Technique, m: usize, n: usize, l_us: usize, q: usize, alpha: f64) -> ModemConfig {
    ModemConfig { m, n, l_us, alpha, q: Some(q), l_cp: 2, technique: t, ..ModemConfig::reference() }
}

fn max_err(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn fast_equals_direct_modulator_and_demodulator() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &(m, n, l_us, q, trials) in &[(8, 4, 2, 2, 20), (32, 8, 4, 8, 10), (128, 32, 4, 12, 1)] {
        for t in Technique::ALL {
            let c = cfg(t, m, n, l_us, q, 0.25);
            let direct = DirectModem::new(&c).unwrap();
            let fast = FastModem::new(&c).unwrap();
            for _ in 0..trials {
                let d = qam_grid(m, n, &mut rng);
                let want = direct.modulate(&d).unwrap();
                let got = fast.modulate(&d, &mut CmCounter::new()).unwrap();
                assert!(max_err(&want.per_block.values, &got.per_block.values) < 1e-10, "{t:?} {m}");
                assert_eq!(want.stream.start_index, got.stream.start_index);
                let rx_d = direct.demodulate(&want.stream).unwrap();
                let rx_f = fast.demodulate(&want.stream, &mut CmCounter::new()).unwrap();
                assert!(max_err(&rx_d.symbols, &rx_f.symbols) < 1e-10, "{t:?} {m} demod");
            }
        }
    }
}

#[test]
fn untruncated_zero_roll_off_linear_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = cfg(Technique::Lps, 16, 4, 2, 8, 0.0);
    let d = qam_grid(16, 4, &mut rng);
    let (fast, _) = modulate_lps_fast(&d, &c).unwrap();
    let want = modulate_unified(&d, &c).unwrap();
    assert!(max_err(&want.per_block.values, &fast.per_block.values) < 1e-10);
}

#[test]
fn fast_cps_with_ce_after_ps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = GuardConfig::cyclic_extension(GuardMode::CeAfterPs, 4, 32);
    let c = cfg(Technique::Cps, 32, 8, 4, 8, 0.1).with_guard(g);
    let d = qam_grid(32, 8, &mut rng);
    let want = modulate_unified(&d, &c).unwrap();
    let (got, _) = modulate_cps_fast(&d, &c).unwrap();
    assert!(max_err(&want.per_block.values, &got.per_block.values) < 1e-10);
    let (rx, _) = demodulate_cps_fast(&got.stream, &c).unwrap();
    let want_rx = DirectModem::new(&c).unwrap().demodulate(&got.stream).unwrap();
    assert!(max_err(&rx.symbols, &want_rx.symbols) < 1e-10);
}

#[test]
fn zero_grid_leaves_counts_unchanged() {
    let c = cfg(Technique::Cps, 32, 8, 4, 8, 0.1);
    let (out, cm) = modulate_cps_fast(&DelayDopplerGrid::zeros(32, 8), &c).unwrap();
    assert!(out.stream.samples.iter().all(|v| v.norm() == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (_, cm2) = modulate_cps_fast(&qam_grid(32, 8, &mut rng), &c).unwrap();
    assert_eq!(cm.total(), cm2.total());
}

#[test]
fn counters_match_the_cost_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for q in [12, 22] {
        let p = CmParams { m: 128, n: 32, l_us: 4, q, alpha: 0.1 };
        let d = qam_grid(128, 32, &mut rng);
        for t in Technique::ALL {
            let c = cfg(t, 128, 32, 4, q, 0.1);
            let (out, cm) = match t {
                Technique::Cps => modulate_cps_fast(&d, &c).unwrap(),
                Technique::Lps => modulate_lps_fast(&d, &c).unwrap(),
                Technique::Oddm => modulate_oddm_fast(&d, &c).unwrap(),
            };
            assert_eq!(cm.total(), predict_cm(t, Implementation::Fast, &p).unwrap(), "{t:?} Q={q}");
            let mut rx = CmCounter::new();
            FastModem::new(&c).unwrap().demodulate(&out.stream, &mut rx).unwrap();
            assert_eq!(rx.total(), cm.total(), "{t:?} demodulator");
        }
        let mut cm = CmCounter::new();
        direct_shape_counted(&d, &cfg(Technique::Lps, 128, 32, 4, q, 0.1), &mut cm).unwrap();
        assert_eq!(cm.total(), predict_cm(Technique::Lps, Implementation::Direct, &p).unwrap());
        let mut cm = CmCounter::new();
        direct_shape_counted(&d, &cfg(Technique::Cps, 128, 32, 4, q, 0.1), &mut cm).unwrap();
        assert_eq!(cm.total(), predict_cm(Technique::Cps, Implementation::Direct, &p).unwrap());
        let mut cm = CmCounter::new();
        reference_oddm_counted(&d, &cfg(Technique::Oddm, 128, 32, 4, q, 0.1), &mut cm).unwrap();
        assert_eq!(cm.total(), predict_cm(Technique::Oddm, Implementation::ReferenceOddm, &p).unwrap());
        assert!(cm.shaping_executed > cm.shaping);
    }
}

#[test]
fn counted_reference_structures_reproduce_the_modems() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (m, n, l_us, q) = (16, 4, 4, 4);
    let d = qam_grid(m, n, &mut rng);

    let lps = cfg(Technique::Lps, m, n, l_us, q, 0.3);
    let blocks = direct_shape_counted(&d, &lps, &mut CmCounter::new()).unwrap();
    let want = modulate_unified(&d, &lps).unwrap();
    assert!(max_err(&blocks.values, &want.per_block.values) < 1e-12);

    // Circular direct shaping with the truncated pulse is the L-PS block
    // folded modulo M'.
    let cps = cfg(Technique::Cps, m, n, l_us, q, 0.3);
    let circ = direct_shape_counted(&d, &cps, &mut CmCounter::new()).unwrap();
    let mp = m * l_us;
    let mut folded = CMatrix::zeros(mp, n);
    for b in 0..n {
        for i in 0..blocks.values.nrows() {
            let row = (blocks.delay_origin + i as isize).rem_euclid(mp as isize) as usize;
            folded[(row, b)] += blocks.values[(i, b)];
        }
    }
    assert!(max_err(&circ.values, &folded) < 1e-12);

    let oddm = cfg(Technique::Oddm, m, n, l_us, q, 0.3);
    let core = reference_oddm_counted(&d, &oddm, &mut CmCounter::new()).unwrap();
    let want = cp_remove(&modulate_unified(&d, &oddm).unwrap().stream, oddm.l_cp_prime()).unwrap();
    assert_eq!(core.start_index, want.start_index);
    let err = core.samples.iter().zip(&want.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn crossover_and_ratio_are_reported() {
    // Informational: where direct L-PS stops being cheaper.
    let fast = predict_cm(Technique::Lps, Implementation::Fast, &CmParams { m: 128, n: 32, l_us: 4, q: 1, alpha: 0.1 })
        .unwrap();
    let first_worse = (1..=64)
        .find(|&q| {
            let p = CmParams { m: 128, n: 32, l_us: 4, q, alpha: 0.1 };
            predict_cm(Technique::Lps, Implementation::Direct, &p).unwrap() > fast
        })
        .unwrap();
    assert_eq!(first_worse, 33);
    let p = CmParams { m: 128, n: 32, l_us: 4, q: 22, alpha: 0.1 };
    let r = predict_cm(Technique::Oddm, Implementation::ReferenceOddm, &p).unwrap().as_f64()
        / predict_cm(Technique::Oddm, Implementation::Fast, &p).unwrap().as_f64();
    assert!((r - 61.93).abs() < 0.01, "{r}");
    assert!(CmCount::from_half_cms(3).to_string() == "1.5");
}
