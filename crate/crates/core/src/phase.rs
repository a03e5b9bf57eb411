//! Event detection, cycle segmentation, period estimation and accuracy scoring.
//!
//! Events are flagged with a mean ± one standard deviation threshold over the
//! evaluated window: a peak day lies strictly above `mean + std`, a valley day
//! strictly below `mean - std`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{auxiliary_from_slice, ParameterSet, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hormone {
    LH,
    FSH,
    E2,
    P4,
    Ih,
}

impl Hormone {
    pub const ALL: [Hormone; 5] = [Hormone::LH, Hormone::FSH, Hormone::E2, Hormone::P4, Hormone::Ih];

    pub fn label(self) -> &'static str {
        match self {
            Hormone::LH => "LH",
            Hormone::FSH => "FSH",
            Hormone::E2 => "E2",
            Hormone::P4 => "P4",
            Hormone::Ih => "Ih",
        }
    }

    /// Event scored for this hormone: the E2 valley, a peak for the others.
    pub fn scored_event(self) -> EventKind {
        match self {
            Hormone::E2 => EventKind::Valley,
            _ => EventKind::Peak,
        }
    }

    /// Hormone level for a model state (serum LH/FSH or the derived ovarian hormones).
    pub fn level(self, state: &[f64], params: &ParameterSet) -> f64 {
        match self {
            Hormone::LH => state[StateVector::LH],
            Hormone::FSH => state[StateVector::FSH],
            Hormone::E2 => auxiliary_from_slice(state, params).e2,
            Hormone::P4 => auxiliary_from_slice(state, params).p4,
            Hormone::Ih => auxiliary_from_slice(state, params).ih,
        }
    }
}

impl fmt::Display for Hormone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Hormone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Hormone::ALL
            .into_iter()
            .find(|h| h.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown hormone `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Peak,
    Valley,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Peak => "peak",
            EventKind::Valley => "valley",
        })
    }
}

/// Denominator used for the standard deviation in the threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    /// N denominator.
    #[default]
    Population,
    /// N - 1 denominator.
    Sample,
}

/// Daily hormone levels starting at an integer day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub start_day: i64,
    pub values: Vec<f64>,
    pub hormone: Hormone,
}

impl DailySeries {
    pub fn new(start_day: i64, values: Vec<f64>, hormone: Hormone) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{hormone} series must be nonempty and finite")));
        }
        Ok(DailySeries { start_day, values, hormone })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One past the last day.
    pub fn end_day(&self) -> i64 {
        self.start_day + self.values.len() as i64
    }

    pub fn value_on(&self, day: i64) -> Option<f64> {
        let i = day.checked_sub(self.start_day)?;
        usize::try_from(i).ok().and_then(|i| self.values.get(i).copied())
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.values.len() as i64).map(move |i| self.start_day + i)
    }

    /// Sub-series over `[start, end)`, clipped to the available days.
    pub fn slice(&self, start: i64, end: i64) -> Result<DailySeries> {
        let a = (start.max(self.start_day) - self.start_day) as usize;
        let b = (end.min(self.end_day()) - self.start_day).max(0) as usize;
        if a >= b {
            return Err(Error::InvalidInput(format!("empty slice [{start}, {end}) of {}", self.hormone)));
        }
        DailySeries::new(self.start_day + a as i64, self.values[a..b].to_vec(), self.hormone)
    }
}

/// Days flagged as a peak or valley.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSet {
    pub kind: EventKind,
    pub days: BTreeSet<i64>,
}

impl EventSet {
    pub fn empty(kind: EventKind) -> Self {
        EventSet { kind, days: BTreeSet::new() }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

pub(crate) fn mean_std(values: &[f64], convention: StdConvention) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let denom = match convention {
        StdConvention::Population => n,
        StdConvention::Sample => (n - 1.0).max(1.0),
    };
    (mean, (ss / denom).sqrt())
}

fn flag(values: &[f64], kind: EventKind, convention: StdConvention) -> Vec<bool> {
    let (mean, std) = mean_std(values, convention);
    if std == 0.0 {
        return vec![false; values.len()];
    }
    match kind {
        EventKind::Peak => values.iter().map(|&v| v > mean + std).collect(),
        EventKind::Valley => values.iter().map(|&v| v < mean - std).collect(),
    }
}

/// Flags event days with the population-std threshold.
pub fn detect_events(series: &DailySeries, kind: EventKind) -> Result<EventSet> {
    detect_events_with(series, kind, StdConvention::Population)
}

pub fn detect_events_with(series: &DailySeries, kind: EventKind, convention: StdConvention) -> Result<EventSet> {
    if series.len() < 2 {
        return Err(Error::InvalidInput("event detection needs at least two days".into()));
    }
    let days = flag(&series.values, kind, convention)
        .into_iter()
        .zip(series.days())
        .filter_map(|(f, d)| f.then_some(d))
        .collect();
    Ok(EventSet { kind, days })
}

/// Groups flagged sample indices into clusters. A new cluster starts when the
/// quiet stretch between two flagged samples lasts at least `min_gap_days`.
fn clusters(times: &[f64], flags: &[bool], step: f64, min_gap_days: f64) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, &f) in flags.iter().enumerate() {
        if !f {
            continue;
        }
        match out.last_mut() {
            Some((_, end)) if times[i] - times[*end] - step < min_gap_days - 1e-9 => *end = i,
            _ => out.push((i, i)),
        }
    }
    out
}

/// Settings shared by period estimation and segmentation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    /// Quiet days needed to separate two peak clusters.
    pub min_cluster_gap_days: f64,
    /// Leading cycles discarded before measuring the period.
    pub transient_cycles: usize,
    /// Shift applied to the peak-to-peak midpoint cycle boundaries, in days.
    pub boundary_offset_days: i64,
    pub std_convention: StdConvention,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            min_cluster_gap_days: 5.0,
            transient_cycles: 2,
            boundary_offset_days: 0,
            std_convention: StdConvention::Population,
        }
    }
}

/// Per-cluster maxima of a uniformly sampled signal, refined by a parabola
/// through the maximum sample and its neighbours. Clusters whose maximum sits
/// on the first or last sample are cut off by the series ends and skipped.
pub fn peak_times(times: &[f64], values: &[f64], config: &PhaseConfig) -> Vec<f64> {
    if times.len() < 2 {
        return Vec::new();
    }
    let step = times[1] - times[0];
    let flags = flag(values, EventKind::Peak, config.std_convention);
    clusters(times, &flags, step, config.min_cluster_gap_days)
        .into_iter()
        .filter_map(|(a, b)| {
            let k = argmax_first(&values[a..=b]) + a;
            if k == 0 || k + 1 >= values.len() {
                return None;
            }
            let (ym, y0, yp) = (values[k - 1], values[k], values[k + 1]);
            let denom = ym - 2.0 * y0 + yp;
            Some(if denom < 0.0 { times[k] + 0.5 * step * (ym - yp) / denom } else { times[k] })
        })
        .collect()
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    /// Mean peak-to-peak spacing after the transient, in days.
    pub period: f64,
    /// Max minus min of the measured cycle lengths.
    pub spread: f64,
    pub cycle_lengths: Vec<f64>,
    pub peak_times: Vec<f64>,
}

/// Period from successive LH-peak maxima of a uniformly sampled signal.
pub fn estimate_period_sampled(times: &[f64], values: &[f64], config: &PhaseConfig) -> Result<PeriodEstimate> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::InvalidInput("period estimation needs matching times and values".into()));
    }
    let all = peak_times(times, values, config);
    let kept: Vec<f64> = all.iter().skip(config.transient_cycles).copied().collect();
    if kept.len() < 2 {
        return Err(Error::PeriodUndetectable(format!(
            "{} peak clusters found, {} after discarding {} transient cycles",
            all.len(),
            kept.len(),
            config.transient_cycles
        )));
    }
    let lengths: Vec<f64> = kept.windows(2).map(|w| w[1] - w[0]).collect();
    let period = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let spread = lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - lengths.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PeriodEstimate { period, spread, cycle_lengths: lengths, peak_times: all })
}

/// Period of a daily series.
pub fn estimate_period(series: &DailySeries, config: &PhaseConfig) -> Result<PeriodEstimate> {
    let times: Vec<f64> = series.days().map(|d| d as f64).collect();
    estimate_period_sampled(&times, &series.values, config)
}

/// Half-open day interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayInterval {
    pub start: i64,
    pub end: i64,
}

impl DayInterval {
    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, day: i64) -> bool {
        day >= self.start && day < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclePhases {
    pub follicular: DayInterval,
    pub ovulation: i64,
    pub luteal: DayInterval,
}

impl CyclePhases {
    pub fn cycle(&self) -> DayInterval {
        DayInterval { start: self.follicular.start, end: self.luteal.end }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSegmentation {
    pub cycles: Vec<CyclePhases>,
}

/// Splits an LH series into follicular / ovulation / luteal phases.
///
/// Ovulation is the (earliest) LH maximum of each peak cluster. Cycle
/// boundaries sit at the midpoints between successive ovulation days, shifted
/// by `boundary_offset_days`; the series ends bound the first and last cycle.
pub fn segment_phases(lh: &DailySeries, config: &PhaseConfig) -> Result<PhaseSegmentation> {
    let ovulations = ovulation_days(lh, config)?;
    let mut bounds = vec![lh.start_day];
    for w in ovulations.windows(2) {
        let mid = (w[0] + w[1]).div_euclid(2) + config.boundary_offset_days;
        bounds.push(mid.clamp(w[0] + 1, w[1]));
    }
    bounds.push(lh.end_day());

    let cycles = ovulations
        .iter()
        .zip(bounds.windows(2))
        .map(|(&ov, b)| CyclePhases {
            follicular: DayInterval { start: b[0], end: ov },
            ovulation: ov,
            luteal: DayInterval { start: ov + 1, end: b[1] },
        })
        .collect();
    Ok(PhaseSegmentation { cycles })
}

/// Earliest LH maximum of every peak cluster.
pub fn ovulation_days(lh: &DailySeries, config: &PhaseConfig) -> Result<Vec<i64>> {
    if lh.len() < 2 {
        return Err(Error::InvalidInput("segmentation needs at least two days".into()));
    }
    let times: Vec<f64> = lh.days().map(|d| d as f64).collect();
    let flags = flag(&lh.values, EventKind::Peak, config.std_convention);
    let cl = clusters(&times, &flags, 1.0, config.min_cluster_gap_days);
    if cl.is_empty() {
        return Err(Error::PeriodUndetectable("no LH peak cluster detected".into()));
    }
    Ok(cl.into_iter().map(|(a, b)| lh.start_day + (a + argmax_first(&lh.values[a..=b])) as i64).collect())
}

/// Correctly identified event days over ground-truth event days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRatio {
    pub numerator: f64,
    pub denominator: f64,
}

impl fmt::Display for AccuracyRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}/{:.1}", self.numerator, self.denominator)
    }
}

pub fn accuracy(predicted: &EventSet, truth: &EventSet) -> Result<AccuracyRatio> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("ground-truth event set is empty".into()));
    }
    if predicted.kind != truth.kind {
        return Err(Error::InvalidInput("predicted and true events differ in kind".into()));
    }
    let hits = predicted.days.intersection(&truth.days).count();
    Ok(AccuracyRatio { numerator: hits as f64, denominator: truth.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> DailySeries {
        DailySeries::new(1, values.to_vec(), Hormone::LH).unwrap()
    }

    #[test]
    fn constant_series_has_no_events() {
        let s = series(&[3.0; 10]);
        assert!(detect_events(&s, EventKind::Peak).unwrap().is_empty());
        assert!(detect_events(&s, EventKind::Valley).unwrap().is_empty());
    }

    #[test]
    fn hand_computed_peak_days() {
        // mean 2, population std 4, threshold 6
        let s = series(&[0., 0., 0., 0., 10., 10., 0., 0., 0., 0.]);
        let ev = detect_events(&s, EventKind::Peak).unwrap();
        assert_eq!(ev.days.into_iter().collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn sample_std_convention_is_wider() {
        let v = [0., 0., 0., 0., 10., 10., 0., 0., 0., 0.];
        let (_, pop) = mean_std(&v, StdConvention::Population);
        let (_, samp) = mean_std(&v, StdConvention::Sample);
        assert!(samp > pop);
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(detect_events(&series(&[1.0]), EventKind::Peak).is_err());
        assert!(DailySeries::new(0, vec![], Hormone::LH).is_err());
        assert!(DailySeries::new(0, vec![f64::NAN, 1.0], Hormone::LH).is_err());
    }

    #[test]
    fn sinusoid_period() {
        let days: Vec<f64> = (0..=200).map(f64::from).collect();
        let v: Vec<f64> = days.iter().map(|t| (2.0 * std::f64::consts::PI * t / 28.0).sin()).collect();
        let est = estimate_period_sampled(&days, &v, &PhaseConfig::default()).unwrap();
        assert!((est.period - 28.0).abs() < 0.5, "{}", est.period);
    }

    #[test]
    fn constant_signal_period_undetectable() {
        let s = DailySeries::new(0, vec![1.0; 100], Hormone::LH).unwrap();
        assert!(matches!(estimate_period(&s, &PhaseConfig::default()), Err(Error::PeriodUndetectable(_))));
    }

    #[test]
    fn noise_split_clusters_merge() {
        let times: Vec<f64> = (0..10).map(f64::from).collect();
        let flags = [false, true, false, true, false, false, false, false, false, true];
        let c = clusters(&times, &flags, 1.0, 5.0);
        assert_eq!(c, vec![(1, 3), (9, 9)]);
    }

    #[test]
    fn single_sharp_peak_segmentation() {
        let mut v = vec![1.0; 28];
        v[14] = 50.0;
        let s = DailySeries::new(0, v, Hormone::LH).unwrap();
        let seg = segment_phases(&s, &PhaseConfig::default()).unwrap();
        assert_eq!(seg.cycles.len(), 1);
        let c = &seg.cycles[0];
        assert_eq!(c.ovulation, 14);
        assert_eq!(c.follicular, DayInterval { start: 0, end: 14 });
        assert_eq!(c.luteal, DayInterval { start: 15, end: 28 });
    }

    #[test]
    fn duplicated_cycle_segmentation_shifts() {
        let one: Vec<f64> =
            (0..28).map(|d| if (13..=15).contains(&d) { 10.0 + (d == 14) as i32 as f64 } else { 1.0 }).collect();
        let two: Vec<f64> = one.iter().chain(one.iter()).copied().collect();
        let seg = segment_phases(&DailySeries::new(0, two, Hormone::LH).unwrap(), &PhaseConfig::default()).unwrap();
        assert_eq!(seg.cycles.len(), 2);
        let (a, b) = (&seg.cycles[0], &seg.cycles[1]);
        assert_eq!(b.ovulation - a.ovulation, 28);
        assert_eq!(b.cycle().start - a.cycle().start, 28);
        assert_eq!(a.follicular.len(), b.follicular.len());
        assert_eq!(a.luteal.len(), b.luteal.len());
    }

    #[test]
    fn accuracy_cases() {
        let set = |k: EventKind, d: &[i64]| EventSet { kind: k, days: d.iter().copied().collect() };
        let r = accuracy(&set(EventKind::Peak, &[14, 15]), &set(EventKind::Peak, &[14, 15])).unwrap();
        assert_eq!((r.numerator, r.denominator), (2.0, 2.0));
        let r = accuracy(&set(EventKind::Valley, &[]), &set(EventKind::Valley, &[1, 2, 3, 4, 5])).unwrap();
        assert_eq!((r.numerator, r.denominator), (0.0, 5.0));
        let r = accuracy(&set(EventKind::Peak, &[3]), &set(EventKind::Peak, &[3, 4])).unwrap();
        assert_eq!((r.numerator, r.denominator), (1.0, 2.0));
        assert!(matches!(
            accuracy(&set(EventKind::Peak, &[3]), &set(EventKind::Peak, &[])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn slicing() {
        let s = DailySeries::new(10, (0..20).map(f64::from).collect(), Hormone::P4).unwrap();
        let sub = s.slice(15, 18).unwrap();
        assert_eq!(sub.start_day, 15);
        assert_eq!(sub.values, vec![5.0, 6.0, 7.0]);
        assert_eq!(s.value_on(29), Some(19.0));
        assert_eq!(s.value_on(30), None);
        assert!(s.slice(40, 50).is_err());
    }
}
