use proptest::prelude::*;

use sddelab::montecarlo::{wilson, ExplosionHistogram, MCReport};
use sddelab::{NoiseSource, Segment, StoppingEvent};

fn event() -> impl Strategy<Value = Option<StoppingEvent>> {
    prop_oneof![
        Just(None),
        (0.0..5.0f64).prop_map(|t| Some(StoppingEvent::BlowUpPlus(t))),
        (0.0..5.0f64).prop_map(|t| Some(StoppingEvent::BlowUpMinus(t))),
        (0.0..5.0f64).prop_map(|t| Some(StoppingEvent::Extinction(t))),
        Just(Some(StoppingEvent::Censored(5.0))),
    ]
}

proptest! {
    #[test]
    fn wilson_brackets_the_frequency(n in 1u64..5000, frac in 0.0..=1.0f64) {
        let hits = ((n as f64) * frac).floor() as u64;
        let (lo, hi) = wilson(hits, n);
        let p = hits as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-15 && p <= hi + 1e-15 && hi <= 1.0);
    }

    #[test]
    fn reports_conserve_counts(events in prop::collection::vec(event(), 1..300)) {
        let r = MCReport::from_outcomes(&events, |e| e.is_blow_up(), 0, String::new()).unwrap();
        prop_assert_eq!(r.event_counts.values().sum::<u64>(), r.n_replicas);
        prop_assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
        prop_assert_eq!(r.valid, r.denominator == r.n_replicas);
    }

    #[test]
    fn histogram_conserves_replicas(events in prop::collection::vec(event(), 1..300), horizon in 1u32..6) {
        let h = ExplosionHistogram::from_outcomes(&events, horizon, 0);
        prop_assert_eq!(h.bins.iter().sum::<u64>() + h.censored + h.faults, events.len() as u64);
    }

    #[test]
    fn coarse_increments_are_sums(seed in any::<u64>(), start in 0u64..1000, k in 0u32..6) {
        let noise = NoiseSource::new(seed, 1e-3);
        let factor = 1u64 << k;
        let sum: f64 = (0..factor).map(|j| noise.increment(start * factor + j)).sum();
        prop_assert_eq!(noise.coarse_increment(start * factor, factor).to_bits(), sum.to_bits());
    }

    #[test]
    fn segment_interpolates_within_range(values in prop::collection::vec(-10.0..10.0f64, 2..20), t in -1.0..=0.0f64) {
        let n = values.len() - 1;
        let seg = Segment::from_fn(1.0, n, |s| values[((s + 1.0) * n as f64).round() as usize]).unwrap();
        let (lo, hi) = seg.range();
        let v = seg.eval(t);
        prop_assert!(lo <= v && v <= hi);
        for (g, x) in seg.grid().iter().zip(seg.values()) {
            prop_assert_eq!(seg.eval(*g), *x);
        }
    }
}
