use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{InformedMode, Strategy};
use crate::error::{Error, Result};
use crate::phase::{detect_events, DailySeries, DayInterval, EventKind, Hormone};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingProvenance {
    pub sampling_period: u32,
    pub strategy: Strategy,
    pub noise_ratio: f64,
    pub seed: u64,
    /// Offset of the regular grid from the window start, in days.
    pub phase: u32,
}

/// Measured (day, level) pairs for one hormone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub hormone: Hormone,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: SamplingProvenance,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for one trial of one cell.
pub fn trial_seed(base: u64, key: &[u64], trial: usize) -> u64 {
    let mut h = mix64(base);
    for &k in key {
        h = mix64(h ^ k);
    }
    mix64(h ^ trial as u64)
}

/// Samples the training-window truth on a regular grid.
///
/// `truth` holds the noiseless daily levels over the training window and
/// `cycles` its cycle partition. The grid offset is drawn from `rng` in
/// `[0, period)`; informed sampling then guarantees a sample inside every
/// cycle's event (see [`InformedMode`]).
pub fn downsample(
    truth: &DailySeries,
    cycles: &[DayInterval],
    period_days: u32,
    strategy: Strategy,
    mode: InformedMode,
    seed: u64,
    rng: &mut impl RngCore,
) -> Result<ObservationSet> {
    if period_days == 0 {
        return Err(Error::InvalidInput("sampling period must be at least 1 day".into()));
    }
    let period = i64::from(period_days);
    let (start, end) = (truth.start_day, truth.end_day());
    let mut phase = rng.random_range(0..period_days) as i64;
    let kind = truth.hormone.scored_event();

    let events = if strategy == Strategy::Informed { cycle_extrema(truth, cycles, kind)? } else { Vec::new() };
    if strategy == Strategy::Informed && mode == InformedMode::Shift {
        if let Some((_, day)) = events.first() {
            phase = (day - start).rem_euclid(period);
        }
    }
    let mut days: Vec<i64> = (start + phase..end).step_by(period as usize).collect();
    if strategy == Strategy::Informed && mode == InformedMode::Superset {
        for (event_days, extremum) in &events {
            if !days.iter().any(|d| event_days.contains(d)) {
                days.push(*extremum);
            }
        }
        days.sort_unstable();
        days.dedup();
    }
    let values = days.iter().map(|&d| truth.value_on(d).expect("day inside window")).collect();
    Ok(ObservationSet {
        hormone: truth.hormone,
        times: days.iter().map(|&d| d as f64).collect(),
        values,
        provenance: SamplingProvenance {
            sampling_period: period_days,
            strategy,
            noise_ratio: 0.0,
            seed,
            phase: phase as u32,
        },
    })
}

/// Event days and their extremum (earliest on ties) within each cycle.
fn cycle_extrema(truth: &DailySeries, cycles: &[DayInterval], kind: EventKind) -> Result<Vec<(Vec<i64>, i64)>> {
    let mut out = Vec::new();
    for c in cycles {
        let Ok(slice) = truth.slice(c.start, c.end) else { continue };
        if slice.len() < 2 {
            continue;
        }
        let ev = detect_events(&slice, kind)?;
        let Some(&first) = ev.days.iter().next() else { continue };
        let mut best = first;
        for &d in &ev.days {
            let (v, b) = (slice.value_on(d).unwrap(), slice.value_on(best).unwrap());
            let better = match kind {
                EventKind::Peak => v > b,
                EventKind::Valley => v < b,
            };
            if better {
                best = d;
            }
        }
        out.push((ev.days.into_iter().collect(), best));
    }
    Ok(out)
}

/// Adds zero-mean Gaussian noise with standard deviation `ratio * sigma_f`.
pub fn add_noise(mut obs: ObservationSet, ratio: f64, sigma_f: f64, rng: &mut impl RngCore) -> Result<ObservationSet> {
    if !(ratio >= 0.0 && ratio.is_finite()) || !(sigma_f >= 0.0 && sigma_f.is_finite()) {
        return Err(Error::InvalidInput(format!("noise ratio {ratio} and scale {sigma_f} must be nonnegative")));
    }
    obs.provenance.noise_ratio = ratio;
    let sd = ratio * sigma_f;
    if sd == 0.0 {
        return Ok(obs);
    }
    let normal = Normal::new(0.0, sd).expect("positive finite sd");
    for v in &mut obs.values {
        *v += normal.sample(rng);
    }
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn window() -> (DailySeries, Vec<DayInterval>) {
        // two 28-day cycles with a 2-day peak on days 14-15 and 42-43
        let v: Vec<f64> = (0..56).map(|d| if d % 28 == 14 || d % 28 == 15 { 10.0 } else { 1.0 }).collect();
        let s = DailySeries::new(0, v, Hormone::LH).unwrap();
        (s, vec![DayInterval { start: 0, end: 28 }, DayInterval { start: 28, end: 56 }])
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn daily_sampling_is_complete_and_strategy_free() {
        let (s, c) = window();
        let a = downsample(&s, &c, 1, Strategy::Agnostic, InformedMode::Superset, 0, &mut rng(1)).unwrap();
        let i = downsample(&s, &c, 1, Strategy::Informed, InformedMode::Superset, 0, &mut rng(1)).unwrap();
        assert_eq!(a.len(), 56);
        assert_eq!(a.times, i.times);
        assert_eq!(a.values, i.values);
    }

    #[test]
    fn informed_hits_every_event() {
        let (s, c) = window();
        for seed in 0..20 {
            for mode in [InformedMode::Superset, InformedMode::Shift] {
                let o = downsample(&s, &c, 4, Strategy::Informed, mode, seed, &mut rng(seed)).unwrap();
                for (lo, hi) in [(14.0, 15.0), (42.0, 43.0)] {
                    assert!(o.times.iter().any(|&t| t >= lo && t <= hi), "seed {seed} {mode:?} {:?}", o.times);
                }
            }
        }
    }

    #[test]
    fn superset_contains_agnostic_grid() {
        let (s, c) = window();
        for seed in 0..20 {
            let a = downsample(&s, &c, 6, Strategy::Agnostic, InformedMode::Superset, seed, &mut rng(seed)).unwrap();
            let i = downsample(&s, &c, 6, Strategy::Informed, InformedMode::Superset, seed, &mut rng(seed)).unwrap();
            assert!(a.times.iter().all(|t| i.times.contains(t)));
            assert!(i.len() <= a.len() + 2);
        }
    }

    #[test]
    fn seeded_sampling_is_repeatable() {
        let (s, c) = window();
        let a = downsample(&s, &c, 2, Strategy::Agnostic, InformedMode::Superset, 5, &mut rng(5)).unwrap();
        let b = downsample(&s, &c, 2, Strategy::Agnostic, InformedMode::Superset, 5, &mut rng(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.times.windows(2).all(|w| w[1] - w[0] == 2.0));
    }

    #[test]
    fn zero_noise_is_identity() {
        let (s, c) = window();
        let o = downsample(&s, &c, 1, Strategy::Agnostic, InformedMode::Superset, 0, &mut rng(0)).unwrap();
        let n = add_noise(o.clone(), 0.0, 3.0, &mut rng(9)).unwrap();
        assert_eq!(n.values, o.values);
    }

    #[test]
    fn noise_scale() {
        let obs = ObservationSet {
            hormone: Hormone::P4,
            times: (0..1000).map(f64::from).collect(),
            values: vec![0.0; 1000],
            provenance: SamplingProvenance {
                sampling_period: 1,
                strategy: Strategy::Agnostic,
                noise_ratio: 0.0,
                seed: 0,
                phase: 0,
            },
        };
        let sigma_f = 4.0;
        let noisy = add_noise(obs, 0.1, sigma_f, &mut rng(2024)).unwrap();
        let n = noisy.values.len() as f64;
        let m = noisy.values.iter().sum::<f64>() / n;
        let sd = (noisy.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        assert!((sd - 0.4).abs() < 0.04, "{sd}");
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = trial_seed(1, &[2, 3], 0);
        assert_eq!(a, trial_seed(1, &[2, 3], 0));
        assert_ne!(a, trial_seed(1, &[2, 3], 1));
        assert_ne!(a, trial_seed(1, &[3, 2], 0));
    }
}
