//! Mechanistic 13-state delay model of the hormonal menstrual cycle (Clark et al., 2003).
//!
//! Thirteen delay differential equations describe the pituitary gonadotropins
//! (LH and FSH, each with a reserve pool) and nine ovarian stage compartments.
//! Estradiol, progesterone and inhibin are algebraic (linear) functions of the
//! ovarian compartments. Progesterone and inhibin feed back on gonadotropin
//! synthesis with discrete delays.
//!
//! State ordering is canonical:
//!
//! | index | state  | description                               |
//! |-------|--------|-------------------------------------------|
//! | 0     | LH_RP  | LH reserve pool (µg)                      |
//! | 1     | LH     | serum LH (µg/L)                           |
//! | 2     | FSH_RP | FSH reserve pool (µg)                     |
//! | 3     | FSH    | serum FSH (µg/L)                          |
//! | 4     | RcF    | recruited follicles                       |
//! | 5     | SeF    | secondary follicles                       |
//! | 6     | PrF    | preovulatory follicles                    |
//! | 7     | Sc1    | ovulatory scar, stage 1                   |
//! | 8     | Sc2    | ovulatory scar, stage 2                   |
//! | 9..12 | Lut1-4 | luteal stages 1-4                         |
//!
//! Parameter values are never hard-coded here; they are read from the
//! `name = value` data file shipped in `data/nominal_parameters.txt`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dde::HistoryFunction;
use crate::error::{Error, Result};

/// Number of dynamic states in the model.
pub const STATE_DIM: usize = 13;

/// Canonical state names, in storage order.
pub const STATE_NAMES: [&str; STATE_DIM] =
    ["LH_RP", "LH", "FSH_RP", "FSH", "RcF", "SeF", "PrF", "Sc1", "Sc2", "Lut1", "Lut2", "Lut3", "Lut4"];

/// Upper bound on the feedback delays accepted by [`ParameterSet::validate`], in days.
pub const DEFAULT_MAX_DELAY: f64 = 5.0;

const NOMINAL_PARAMETERS: &str = include_str!("../data/nominal_parameters.txt");
const NOMINAL_INITIAL_STATE: &str = include_str!("../data/nominal_initial_state.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Constraint {
    Positive,
    Delay,
    NonNegative,
}

macro_rules! parameter_set {
    ($( $(#[$doc:meta])* $field:ident : $kind:ident ),* $(,)?) => {
        /// Rate constants, delays, exponents and linear coefficients of the model.
        ///
        /// Field names match the keys of the parameter data file exactly.
        #[allow(non_snake_case)]
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        pub struct ParameterSet {
            $( $(#[$doc])* pub $field: f64, )*
        }

        impl ParameterSet {
            /// Every field name, in declaration order.
            pub const FIELD_NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            const CONSTRAINTS: &'static [Constraint] = &[$(Constraint::$kind),*];

            /// Looks a parameter up by its canonical name.
            pub fn get(&self, name: &str) -> Option<f64> {
                match name {
                    $( stringify!($field) => Some(self.$field), )*
                    _ => None,
                }
            }

            /// Overwrites a parameter by its canonical name.
            pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
                match name {
                    $( stringify!($field) => { self.$field = value; Ok(()) } )*
                    _ => Err(Error::Config(format!("unknown parameter `{name}`"))),
                }
            }

            fn values(&self) -> Vec<f64> {
                vec![$(self.$field),*]
            }

            fn from_values(v: &[f64]) -> Self {
                let mut it = v.iter().copied();
                ParameterSet { $( $field: it.next().expect("length checked"), )* }
            }
        }
    };
}

parameter_set! {
    /// Basal LH synthesis rate.
    V0_LH: Positive,
    /// Maximal estradiol-stimulated LH synthesis rate.
    V1_LH: Positive,
    /// E2 level of half-maximal LH synthesis stimulation.
    Km_LH: Positive,
    /// P4 inhibition constant of LH synthesis.
    Ki_LH_P: Positive,
    /// LH release rate from the reserve pool.
    k_LH: Positive,
    c_LH_P: Positive,
    c_LH_E: Positive,
    /// LH clearance rate.
    a_LH: Positive,
    V_FSH: Positive,
    Ki_FSH_Ih: Positive,
    k_FSH: Positive,
    c_FSH_P: Positive,
    c_FSH_E: Positive,
    a_FSH: Positive,
    /// Blood volume scaling.
    nu: Positive,
    /// Delay of progesterone feedback on LH synthesis (days).
    delta_P: Delay,
    /// Delay of inhibin feedback on FSH synthesis (days).
    delta_Ih: Delay,
    b: Positive,
    c1: Positive,
    c2: Positive,
    c3: Positive,
    c4: Positive,
    c5: Positive,
    d1: Positive,
    d2: Positive,
    k1: Positive,
    k2: Positive,
    k3: Positive,
    k4: Positive,
    /// LH exponent in follicle recruitment.
    alpha_LH: Positive,
    beta: Positive,
    gamma: Positive,
    e0: NonNegative,
    e1: NonNegative,
    e2: NonNegative,
    e3: NonNegative,
    p0: NonNegative,
    p1: NonNegative,
    p2: NonNegative,
    h0: NonNegative,
    h1: NonNegative,
    h2: NonNegative,
    h3: NonNegative,
}

impl ParameterSet {
    /// Parses a `name = value` document. Every field must appear exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let mut values = vec![None; Self::FIELD_NAMES.len()];
        for (line, key, value) in pairs {
            let idx = Self::FIELD_NAMES
                .iter()
                .position(|n| *n == key)
                .ok_or_else(|| Error::Config(format!("line {line}: unknown parameter `{key}`")))?;
            if values[idx].replace(value).is_some() {
                return Err(Error::Config(format!("line {line}: duplicate parameter `{key}`")));
            }
        }
        let mut full = Vec::with_capacity(values.len());
        for (name, v) in Self::FIELD_NAMES.iter().zip(&values) {
            full.push(v.ok_or_else(|| Error::Config(format!("{name} missing")))?);
        }
        let params = Self::from_values(&full);
        params.validate(DEFAULT_MAX_DELAY)?;
        Ok(params)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Checks positivity and delay bounds.
    pub fn validate(&self, max_delay: f64) -> Result<()> {
        for ((name, kind), v) in Self::FIELD_NAMES.iter().zip(Self::CONSTRAINTS).zip(self.values()) {
            let ok = v.is_finite()
                && match kind {
                    Constraint::Positive => v > 0.0,
                    Constraint::Delay => (0.0..=max_delay).contains(&v),
                    Constraint::NonNegative => v >= 0.0,
                };
            if !ok {
                let want = match kind {
                    Constraint::Positive => "strictly positive".to_string(),
                    Constraint::Delay => format!("in [0, {max_delay}] days"),
                    Constraint::NonNegative => "nonnegative".to_string(),
                };
                return Err(Error::Config(format!("{name} = {v} must be {want}")));
            }
        }
        Ok(())
    }

    /// Renders the set in the data-file format; `parse` reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in Self::FIELD_NAMES.iter().zip(self.values()) {
            out.push_str(&format!("{name} = {v}\n"));
        }
        out
    }
}

/// The healthy-cycle parameter set shipped with the crate.
pub fn nominal_parameters() -> ParameterSet {
    ParameterSet::parse(NOMINAL_PARAMETERS).expect("bundled parameter file is valid")
}

/// A state on (or very close to) the nominal limit cycle, used as the
/// constant initial history.
pub fn nominal_initial_state() -> StateVector {
    let pairs = parse_key_values(NOMINAL_INITIAL_STATE).expect("bundled state file parses");
    let mut s = [f64::NAN; STATE_DIM];
    for (_, key, value) in pairs {
        let idx = STATE_NAMES.iter().position(|n| *n == key).expect("bundled state file uses canonical names");
        s[idx] = value;
    }
    let s = StateVector(s);
    assert!(s.is_finite(), "bundled state file is complete");
    s
}

fn parse_key_values(text: &str) -> Result<Vec<(usize, String, f64)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `name = value`", i + 1)))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {}: `{key}` has non-numeric value `{}`", i + 1, value.trim())))?;
        out.push((i + 1, key.to_string(), value));
    }
    Ok(out)
}

/// The 13 model states in canonical order (see module docs).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub const LH_RP: usize = 0;
    pub const LH: usize = 1;
    pub const FSH_RP: usize = 2;
    pub const FSH: usize = 3;
    pub const RCF: usize = 4;
    pub const SEF: usize = 5;
    pub const PRF: usize = 6;
    pub const SC1: usize = 7;
    pub const SC2: usize = 8;
    pub const LUT1: usize = 9;
    pub const LUT2: usize = 10;
    pub const LUT3: usize = 11;
    pub const LUT4: usize = 12;

    pub fn zeros() -> Self {
        StateVector([0.0; STATE_DIM])
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        let arr: [f64; STATE_DIM] = s
            .try_into()
            .map_err(|_| Error::InvalidInput(format!("state needs {STATE_DIM} components, got {}", s.len())))?;
        Ok(StateVector(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn lh(&self) -> f64 {
        self.0[Self::LH]
    }

    pub fn fsh(&self) -> f64 {
        self.0[Self::FSH]
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for StateVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Ovarian hormones derived algebraically from the follicular/luteal states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryHormones {
    /// Estradiol (ng/L).
    pub e2: f64,
    /// Progesterone (nmol/L).
    pub p4: f64,
    /// Inhibin (U/mL).
    pub ih: f64,
}

/// Progesterone and inhibin at their respective lagged times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayedValues {
    /// P4(t - delta_P)
    pub p4: f64,
    /// Ih(t - delta_Ih)
    pub ih: f64,
}

pub fn auxiliary_hormones(state: &StateVector, p: &ParameterSet) -> AuxiliaryHormones {
    auxiliary_from_slice(&state.0, p)
}

pub(crate) fn auxiliary_from_slice(s: &[f64], p: &ParameterSet) -> AuxiliaryHormones {
    let (sef, prf, lut3, lut4) = (s[StateVector::SEF], s[StateVector::PRF], s[StateVector::LUT3], s[StateVector::LUT4]);
    AuxiliaryHormones {
        e2: p.e0 + p.e1 * sef + p.e2 * prf + p.e3 * lut4,
        p4: p.p0 + p.p1 * lut3 + p.p2 * lut4,
        ih: p.h0 + p.h1 * prf + p.h2 * lut3 + p.h3 * lut4,
    }
}

/// Right-hand side of the 13 delay differential equations.
///
/// `delayed` must carry P4(t - delta_P) and Ih(t - delta_Ih). The LH powers use
/// `max(LH, 0)` so that roundoff-level negative concentrations do not produce NaN.
pub fn derivative(t: f64, state: &StateVector, delayed: DelayedValues, p: &ParameterSet) -> Result<StateVector> {
    let mut out = StateVector::zeros();
    derivative_into(t, &state.0, delayed, p, &mut out.0)?;
    Ok(out)
}

pub(crate) fn derivative_into(
    t: f64,
    s: &[f64],
    delayed: DelayedValues,
    p: &ParameterSet,
    out: &mut [f64],
) -> Result<()> {
    let check = |term: &'static str, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NumericalDomain { term, t })
        }
    };

    let AuxiliaryHormones { e2, p4, .. } = auxiliary_from_slice(s, p);
    let lh_rp = s[StateVector::LH_RP];
    let lh = s[StateVector::LH];
    let fsh_rp = s[StateVector::FSH_RP];
    let fsh = s[StateVector::FSH];
    let rcf = s[StateVector::RCF];
    let sef = s[StateVector::SEF];
    let prf = s[StateVector::PRF];
    let sc1 = s[StateVector::SC1];
    let sc2 = s[StateVector::SC2];
    let lut = &s[StateVector::LUT1..=StateVector::LUT4];

    let e2_8 = check("E2^8", e2.powi(8))?;
    let km_8 = p.Km_LH.powi(8);
    let lh_synthesis =
        check("LH synthesis", (p.V0_LH + p.V1_LH * e2_8 / (km_8 + e2_8)) / (1.0 + delayed.p4 / p.Ki_LH_P))?;
    let lh_release = check("LH release", p.k_LH * (1.0 + p.c_LH_P * p4) * lh_rp / (1.0 + p.c_LH_E * e2))?;
    let fsh_synthesis = check("FSH synthesis", p.V_FSH / (1.0 + delayed.ih / p.Ki_FSH_Ih))?;
    let fsh_release = check("FSH release", p.k_FSH * (1.0 + p.c_FSH_P * p4) * fsh_rp / (1.0 + p.c_FSH_E * e2 * e2))?;

    let lh_pos = lh.max(0.0);
    let lh_alpha = check("LH^alpha", lh_pos.powf(p.alpha_LH))?;
    let lh_beta = check("LH^beta", lh_pos.powf(p.beta))?;
    let lh_gamma = check("LH^gamma", lh_pos.powf(p.gamma))?;

    let recruit = p.c2 * lh_alpha * rcf;
    let ovulate = p.c4 * lh_pos * sef;
    let luteinize = p.c5 * lh_gamma * prf;

    out[StateVector::LH_RP] = lh_synthesis - lh_release;
    out[StateVector::LH] = lh_release / p.nu - p.a_LH * lh;
    out[StateVector::FSH_RP] = fsh_synthesis - fsh_release;
    out[StateVector::FSH] = fsh_release / p.nu - p.a_FSH * fsh;
    out[StateVector::RCF] = p.b * fsh + p.c1 * fsh * rcf - recruit;
    out[StateVector::SEF] = recruit + p.c3 * lh_beta * sef - ovulate;
    out[StateVector::PRF] = ovulate - luteinize;
    out[StateVector::SC1] = luteinize - p.d1 * sc1;
    out[StateVector::SC2] = p.d1 * sc1 - p.d2 * sc2;
    out[StateVector::LUT1] = p.d2 * sc2 - p.k1 * lut[0];
    out[StateVector::LUT2] = p.k1 * lut[0] - p.k2 * lut[1];
    out[StateVector::LUT3] = p.k2 * lut[1] - p.k3 * lut[2];
    out[StateVector::LUT4] = p.k3 * lut[2] - p.k4 * lut[3];

    for (i, v) in out.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NumericalDomain { term: STATE_NAMES[i], t });
        }
    }
    Ok(())
}

/// History that returns `state` for every time at or before the start.
pub fn constant_history(state: StateVector) -> HistoryFunction {
    let v = state.0.to_vec();
    Arc::new(move |_t: f64| v.clone())
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in STATE_NAMES.iter().zip(self.0.iter()).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_aux(p: &mut ParameterSet) {
        for n in ["e0", "e1", "e2", "e3", "p0", "p1", "p2", "h0", "h1", "h2", "h3"] {
            p.set(n, 0.0).unwrap();
        }
    }

    #[test]
    fn estradiol_linear_form_unit_inputs() {
        let mut p = nominal_parameters();
        zero_aux(&mut p);
        p.e0 = 1.0;
        p.e1 = 2.0;
        p.e2 = 3.0;
        p.e3 = 4.0;
        let mut s = StateVector::zeros();
        s[StateVector::SEF] = 1.0;
        s[StateVector::PRF] = 1.0;
        s[StateVector::LUT4] = 1.0;
        assert_eq!(auxiliary_hormones(&s, &p).e2, 10.0);
    }

    #[test]
    fn zero_coefficients_zero_hormones() {
        let mut p = nominal_parameters();
        zero_aux(&mut p);
        let s = StateVector([3.0; STATE_DIM]);
        let a = auxiliary_hormones(&s, &p);
        assert_eq!((a.e2, a.p4, a.ih), (0.0, 0.0, 0.0));
    }

    #[test]
    fn progesterone_hand_evaluation() {
        let mut p = nominal_parameters();
        zero_aux(&mut p);
        p.p1 = 0.5;
        p.p2 = 2.0;
        let mut s = StateVector::zeros();
        s[StateVector::LUT3] = 4.0;
        s[StateVector::LUT4] = 3.0;
        assert_eq!(auxiliary_hormones(&s, &p).p4, 8.0);
    }

    #[test]
    fn auxiliary_is_affine_in_state() {
        let p = nominal_parameters();
        let s = nominal_initial_state();
        let mut s2 = s;
        for v in s2.0.iter_mut() {
            *v *= 2.0;
        }
        let a0 = auxiliary_hormones(&StateVector::zeros(), &p);
        let a1 = auxiliary_hormones(&s, &p);
        let a2 = auxiliary_hormones(&s2, &p);
        for (x0, x1, x2) in [(a0.e2, a1.e2, a2.e2), (a0.p4, a1.p4, a2.p4), (a0.ih, a1.ih, a2.ih)] {
            assert!(((x2 - x1) - (x1 - x0)).abs() <= 1e-12 * x2.abs().max(1.0));
        }
    }

    /// Rate constants zeroed directly (bypassing validation) to isolate terms.
    fn all_rates_zero() -> ParameterSet {
        let mut p = nominal_parameters();
        for name in ParameterSet::FIELD_NAMES {
            p.set(name, 0.0).unwrap();
        }
        p.Km_LH = 1.0;
        p.Ki_LH_P = 1.0;
        p.Ki_FSH_Ih = 1.0;
        p.nu = 1.0;
        p.alpha_LH = 0.77;
        p.beta = 0.2;
        p.gamma = 0.02;
        p
    }

    #[test]
    fn zero_constants_zero_derivative() {
        let p = all_rates_zero();
        let s = StateVector([2.0; STATE_DIM]);
        let d = derivative(0.0, &s, DelayedValues { p4: 1.0, ih: 1.0 }, &p).unwrap();
        assert_eq!(d, StateVector::zeros());
    }

    #[test]
    fn lh_release_hand_evaluation() {
        let mut p = all_rates_zero();
        p.k_LH = 1.0;
        p.nu = 2.0;
        p.a_LH = 0.5;
        let mut s = StateVector::zeros();
        s[StateVector::LH_RP] = 4.0;
        s[StateVector::LH] = 2.0;
        let d = derivative(0.0, &s, DelayedValues { p4: 0.0, ih: 0.0 }, &p).unwrap();
        assert_eq!(d[StateVector::LH], 1.0);
    }

    #[test]
    fn recruitment_source_hand_evaluation() {
        let mut p = all_rates_zero();
        p.b = 1.0;
        let mut s = StateVector::zeros();
        s[StateVector::FSH] = 3.0;
        s[StateVector::RCF] = 7.0;
        s[StateVector::LH] = 5.0;
        let d = derivative(0.0, &s, DelayedValues { p4: 0.0, ih: 0.0 }, &p).unwrap();
        assert_eq!(d[StateVector::RCF], 3.0);

        p.b = 2.0;
        let d2 = derivative(0.0, &s, DelayedValues { p4: 0.0, ih: 0.0 }, &p).unwrap();
        assert_eq!(d2[StateVector::RCF], 2.0 * d[StateVector::RCF]);
    }

    #[test]
    fn derivative_is_bitwise_deterministic() {
        let p = nominal_parameters();
        let s = nominal_initial_state();
        let dv = DelayedValues { p4: 2.5, ih: 0.7 };
        let a = derivative(3.0, &s, dv, &p).unwrap();
        let b = derivative(3.0, &s, dv, &p).unwrap();
        assert!(a.0.iter().zip(b.0.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn negative_lh_is_clamped_before_powers() {
        let p = nominal_parameters();
        let mut s = nominal_initial_state();
        s[StateVector::LH] = -1e-12;
        assert!(derivative(0.0, &s, DelayedValues { p4: 0.0, ih: 0.0 }, &p).is_ok());
    }

    #[test]
    fn overflow_is_reported_with_term() {
        let p = nominal_parameters();
        let mut s = nominal_initial_state();
        s[StateVector::SEF] = 1e300;
        let err = derivative(0.0, &s, DelayedValues { p4: 0.0, ih: 0.0 }, &p).unwrap_err();
        assert!(matches!(err, Error::NumericalDomain { .. }), "{err}");
    }

    #[test]
    fn nominal_set_is_complete_and_valid() {
        let p = nominal_parameters();
        p.validate(DEFAULT_MAX_DELAY).unwrap();
        assert_eq!(ParameterSet::parse(&p.to_text()).unwrap(), p);
    }

    #[test]
    fn missing_field_is_named() {
        let text: String = NOMINAL_PARAMETERS
            .lines()
            .filter(|l| !l.trim_start().starts_with("Km_LH"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = ParameterSet::parse(&text).unwrap_err().to_string();
        assert!(err.contains("Km_LH missing"), "{err}");
    }

    #[test]
    fn extra_and_nonpositive_fields_rejected() {
        let extra = format!("{NOMINAL_PARAMETERS}\nbogus = 1\n");
        assert!(ParameterSet::parse(&extra).unwrap_err().to_string().contains("bogus"));

        let mut p = nominal_parameters();
        p.k_LH = 0.0;
        let err = ParameterSet::parse(&p.to_text()).unwrap_err().to_string();
        assert!(err.contains("k_LH"), "{err}");

        let mut p = nominal_parameters();
        p.delta_P = 6.0;
        assert!(p.validate(DEFAULT_MAX_DELAY).is_err());
    }

    #[test]
    fn nominal_hormones_nonnegative() {
        let p = nominal_parameters();
        let a = auxiliary_hormones(&nominal_initial_state(), &p);
        assert!(a.e2 >= 0.0 && a.p4 >= 0.0 && a.ih >= 0.0);
    }

    #[test]
    fn constant_history_is_constant() {
        let s = nominal_initial_state();
        let h = constant_history(s);
        assert_eq!(h(-3.0), s.0.to_vec());
        assert_eq!(h(0.0), s.0.to_vec());
        assert_eq!(h(-1.0), h(-100.0));
    }
}
