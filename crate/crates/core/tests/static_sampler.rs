use std::f64::consts::PI;

use ppbell_core::estimators::{s_chd, ChdPlan};
use ppbell_core::oracle::{g_exact, s_chd_exact};
use ppbell_core::rng::{substream, Domain};
use ppbell_core::sampler::{accept, acceptance_probability, sample_tilde_p};
use ppbell_core::stats::LinearForm;
use ppbell_core::{Ensemble, Mode, ObservableSet, PairCount, StaticEnsemble};

const ANGLES: [f64; 4] = [PI / 16.0, PI / 8.0, 3.0 * PI / 16.0, PI / 4.0];

#[test]
fn acceptance_rate_is_one_over_n_plus_one() {
    let proposals = 1_000_000u64;
    for n in 1..=3u32 {
        let pc = PairCount::new(n).unwrap();
        let mut rng = substream(100 + n as u64, Domain::Auxiliary, 0);
        let mut hits = 0u64;
        let mut mean_p = 0.0;
        for _ in 0..proposals {
            let a = sample_tilde_p(pc, &mut rng);
            let b = sample_tilde_p(pc, &mut rng);
            mean_p += acceptance_probability(&a, &b, pc).unwrap();
            if accept(&a, &b, pc, &mut rng).unwrap() {
                hits += 1;
            }
        }
        let p = 1.0 / (n as f64 + 1.0);
        let sigma = (p * (1.0 - p) / proposals as f64).sqrt();
        let rate = hits as f64 / proposals as f64;
        assert!((rate - p).abs() < 3.0 * sigma, "N={n}: rate {rate} vs {p}");
        // the integral itself, without the accept coin
        mean_p /= proposals as f64;
        assert!((mean_p - p).abs() < 3.0 * sigma, "N={n}: mean acceptance {mean_p}");
    }
}

#[test]
fn static_chd_n1_matches_cosine_oracle() {
    let n = PairCount::new(1).unwrap();
    let ens = StaticEnsemble::new(n, 1 << 18, 7);
    for phi in ANGLES {
        let s = s_chd(&ens, n, phi).unwrap();
        assert!(s.within(s_chd_exact(1, phi), 3.0), "phi={phi}: {s:?}");
    }
    let mut obs = ObservableSet::new();
    let plan = ChdPlan::register(&mut obs, 1, 1, &ANGLES).unwrap();
    let acc = ens.accumulate(&obs).unwrap();
    for (k, phi) in ANGLES.into_iter().enumerate() {
        let g = plan.g(&acc, k).unwrap();
        assert!(g.within(g_exact(1, phi), 3.0), "phi={phi}: {g:?}");
    }
}

#[test]
fn static_chd_n2_at_quarter_count() {
    let n = PairCount::new(2).unwrap();
    let ens = StaticEnsemble::new(n, 1 << 22, 3);
    let s = s_chd(&ens, n, PI / 8.0).unwrap();
    assert!(s.within(1.082107, 3.0), "{s:?}");
}

#[test]
fn block_symmetry_and_zero_first_moment() {
    let n = PairCount::new(1).unwrap();
    let ens = StaticEnsemble::new(n, 1 << 16, 11);
    let mut obs = ObservableSet::new();
    let a1 = obs.push("a1", |p| p.amplitude(Mode::A1));
    let n_a1 = obs.push("nA1", |p| p.quasi_number(Mode::A1).value());
    let n_a2 = obs.push("nA2", |p| p.quasi_number(Mode::A2).value());
    let n_b1 = obs.push("nB1", |p| p.quasi_number(Mode::B1).value());
    let acc = ens.accumulate(&obs).unwrap();
    let m = acc.linear(&LinearForm::single(a1)).unwrap();
    assert!(m.value.re.abs() < 4.0 * m.se_re && m.value.im.abs() < 4.0 * m.se_im, "{m:?}");
    // one photon per side shared between two polarizations
    for k in [n_a1, n_a2, n_b1] {
        let e = acc.linear(&LinearForm::single(k)).unwrap();
        assert!(e.within(0.5, 4.0), "slot {k}: {e:?}");
    }
    let diff = acc
        .linear(&LinearForm::single(n_a1).term(n_a2, -1.0))
        .unwrap();
    assert!(diff.within(0.0, 4.0), "{diff:?}");
}

#[test]
fn seed_fixes_the_stream_and_batches_are_independent_of_workers() {
    let n = PairCount::new(1).unwrap();
    let ens = StaticEnsemble::new(n, 5000, 42);
    let a = ens.points().unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| ens.points().unwrap());
    assert_eq!(a, b);
    let other = StaticEnsemble::new(n, 5000, 43).points().unwrap();
    assert_ne!(a, other);
}
