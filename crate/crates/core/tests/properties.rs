use hmcycle::experiment::{downsample, InformedMode, Strategy as Sampling};
use hmcycle::gp::KernelSpec;
use hmcycle::phase::{
    accuracy, detect_events, segment_phases, DailySeries, DayInterval, EventKind, EventSet, PhaseConfig,
};
use hmcycle::Hormone;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind() -> impl Strategy<Value = EventKind> {
    prop_oneof![Just(EventKind::Peak), Just(EventKind::Valley)]
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 3..80)
}

/// Distance of the closest value to the mean +- std thresholds, computed
/// independently of the library.
fn threshold_margin(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
    v.iter().map(|x| ((x - m).abs() - s).abs()).fold(f64::INFINITY, f64::min)
}

fn sum_kernel() -> impl Strategy<Value = KernelSpec> {
    (0.1f64..5.0, 0.5f64..30.0, 0.1f64..10.0, 0.1f64..5.0, 0.2f64..5.0, 0.01f64..0.2)
        .prop_map(|(v1, l1, a, v2, l2, w)| KernelSpec::sum(KernelSpec::rq(v1, l1, a), KernelSpec::periodic(v2, l2, w)))
}

proptest! {
    #[test]
    fn events_are_invariant_under_power_of_two_scaling(v in series(), k in -8i32..8, start in -100i64..100, kind in kind()) {
        let a = 2f64.powi(k);
        let s = DailySeries::new(start, v.clone(), Hormone::LH).unwrap();
        let t = DailySeries::new(start, v.iter().map(|x| a * x).collect(), Hormone::LH).unwrap();
        prop_assert_eq!(detect_events(&s, kind).unwrap(), detect_events(&t, kind).unwrap());
    }

    #[test]
    fn events_are_invariant_under_shift_and_scale(v in series(), a in 0.1f64..10.0, b in -100.0f64..100.0, kind in kind()) {
        // stay away from values that sit on the threshold up to roundoff
        let range = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assume!(threshold_margin(&v) > 1e-9 * range.max(1.0));
        let s = DailySeries::new(0, v.clone(), Hormone::FSH).unwrap();
        let t = DailySeries::new(0, v.iter().map(|x| a * x + b).collect(), Hormone::FSH).unwrap();
        prop_assert_eq!(detect_events(&s, kind).unwrap(), detect_events(&t, kind).unwrap());
    }

    #[test]
    fn flagged_days_lie_inside_the_series(v in series(), start in -10i64..10, kind in kind()) {
        let s = DailySeries::new(start, v, Hormone::E2).unwrap();
        let e = detect_events(&s, kind).unwrap();
        prop_assert!(e.days.iter().all(|&d| d >= start && d < s.end_day()));
        prop_assert!(e.len() < s.len());
    }

    #[test]
    fn numerator_never_exceeds_denominator(
        p in prop::collection::btree_set(0i64..60, 0..30),
        t in prop::collection::btree_set(0i64..60, 1..30),
    ) {
        let pred = EventSet { kind: EventKind::Peak, days: p };
        let truth = EventSet { kind: EventKind::Peak, days: t };
        let r = accuracy(&pred, &truth).unwrap();
        prop_assert!(r.numerator <= r.denominator);
        prop_assert_eq!(r.denominator, truth.days.len() as f64);
    }

    #[test]
    fn segmentation_partitions_the_series(
        period in 20usize..36,
        cycles in 2usize..6,
        width in 1usize..4,
        offset in 0usize..20,
        start in -30i64..30,
    ) {
        let n = period * cycles;
        let v: Vec<f64> = (0..n).map(|i| if (i + period - offset % period) % period < width { 10.0 } else { 1.0 }).collect();
        let lh = DailySeries::new(start, v, Hormone::LH).unwrap();
        let seg = segment_phases(&lh, &PhaseConfig::default()).unwrap();
        prop_assert!(!seg.cycles.is_empty());
        prop_assert_eq!(seg.cycles[0].follicular.start, start);
        prop_assert_eq!(seg.cycles.last().unwrap().luteal.end, lh.end_day());
        for c in &seg.cycles {
            prop_assert_eq!(c.follicular.end, c.ovulation);
            prop_assert_eq!(c.luteal.start, c.ovulation + 1);
        }
        for w in seg.cycles.windows(2) {
            prop_assert_eq!(w[0].luteal.end, w[1].follicular.start);
        }
        let total: i64 = seg.cycles.iter().map(|c| c.cycle().len()).sum();
        prop_assert_eq!(total, n as i64);
    }

    #[test]
    fn kernels_are_symmetric_and_stationary(k in sum_kernel(), a in -100.0f64..100.0, b in -100.0f64..100.0) {
        let kab = k.eval(a, b);
        prop_assert_eq!(kab, k.eval(b, a));
        let lag = k.eval_lag((a - b).abs());
        prop_assert!((kab - lag).abs() <= 1e-12 * lag.abs().max(1.0));
        let shifted = k.eval(a + 17.0, b + 17.0);
        prop_assert!((kab - shifted).abs() <= 1e-9 * kab.abs().max(1.0));
    }

    #[test]
    fn informed_superset_contains_the_agnostic_grid(
        period in 1u32..8,
        seed in any::<u64>(),
        peak_at in 5usize..20,
    ) {
        let v: Vec<f64> = (0..56).map(|d| if d % 28 == peak_at || d % 28 == peak_at + 1 { 10.0 } else { 1.0 }).collect();
        let s = DailySeries::new(0, v, Hormone::LH).unwrap();
        let cycles = [DayInterval { start: 0, end: 28 }, DayInterval { start: 28, end: 56 }];
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let a = downsample(&s, &cycles, period, Sampling::Agnostic, InformedMode::Superset, seed, &mut r1).unwrap();
        let i = downsample(&s, &cycles, period, Sampling::Informed, InformedMode::Superset, seed, &mut r2).unwrap();
        prop_assert!(a.times.iter().all(|t| i.times.contains(t)));
        prop_assert!(i.times.windows(2).all(|w| w[1] > w[0]));
        for base in [0usize, 28] {
            let (lo, hi) = ((base + peak_at) as f64, (base + peak_at + 1) as f64);
            prop_assert!(i.times.iter().any(|&t| t >= lo && t <= hi));
        }
    }
}
