//! Paired censored samples, Kaplan–Meier estimation and censored-data scores.
//!
//! All scores are computed on the pooled `2I` units of a sample and then
//! differenced within pairs. Ties follow the usual product-limit convention:
//! at a common timestamp events are processed before censorings, so a unit
//! censored at `t` is still at risk for the events at `t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed unit: `time = min(S, C)` and whether the event was seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub time: f64,
    pub event: bool,
}

impl Unit {
    pub fn new(time: f64, event: bool) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::NegativeTime(time));
        }
        Ok(Self { time, event })
    }

    pub fn event(time: f64) -> Result<Self> {
        Self::new(time, true)
    }

    pub fn censored(time: f64) -> Result<Self> {
        Self::new(time, false)
    }
}

/// Which unit of a pair received treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    FirstTreated,
    SecondTreated,
}

impl Assignment {
    /// `V = Z_1 - Z_2`, i.e. `+1` when the first unit is treated.
    pub fn sign(self) -> f64 {
        match self {
            Assignment::FirstTreated => 1.0,
            Assignment::SecondTreated => -1.0,
        }
    }

    pub fn from_sign(sign: f64) -> Self {
        if sign >= 0.0 {
            Assignment::FirstTreated
        } else {
            Assignment::SecondTreated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub first: Unit,
    pub second: Unit,
    pub assignment: Assignment,
}

impl Pair {
    pub fn new(first: Unit, second: Unit, assignment: Assignment) -> Self {
        Self {
            first,
            second,
            assignment,
        }
    }

    pub fn treated(&self) -> Unit {
        match self.assignment {
            Assignment::FirstTreated => self.first,
            Assignment::SecondTreated => self.second,
        }
    }

    pub fn control(&self) -> Unit {
        match self.assignment {
            Assignment::FirstTreated => self.second,
            Assignment::SecondTreated => self.first,
        }
    }
}

/// `I >= 1` matched pairs with optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pairs: Vec<Pair>,
    pair_ids: Option<Vec<String>>,
}

impl PairedSample {
    pub fn new(pairs: Vec<Pair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        for p in &pairs {
            Unit::new(p.first.time, p.first.event)?;
            Unit::new(p.second.time, p.second.event)?;
        }
        Ok(Self {
            pairs,
            pair_ids: None,
        })
    }

    pub fn with_ids(pairs: Vec<Pair>, ids: Vec<String>) -> Result<Self> {
        if ids.len() != pairs.len() {
            return Err(Error::LengthMismatch {
                expected: pairs.len(),
                actual: ids.len(),
            });
        }
        let mut sample = Self::new(pairs)?;
        sample.pair_ids = Some(ids);
        Ok(sample)
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn pair_ids(&self) -> Option<&[String]> {
        self.pair_ids.as_deref()
    }

    /// Number of pairs `I`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pooled units in pair-major order: `(1,1), (1,2), (2,1), ...`.
    pub fn units(&self) -> Vec<Unit> {
        self.pairs.iter().flat_map(|p| [p.first, p.second]).collect()
    }

    /// The assignment signs `V_i`.
    pub fn signs(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.assignment.sign()).collect()
    }
}

/// One row of the long-format input (`pair_id,position,treated,time,event`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub pair_id: String,
    pub position: u8,
    pub treated: bool,
    pub time: f64,
    pub event: bool,
}

/// Assemble a sample from long-format records. Pairs keep the order in which
/// their id first appears.
pub fn build_sample(records: &[Record]) -> Result<PairedSample> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut slots: BTreeMap<&str, [Option<(Unit, bool)>; 2]> = BTreeMap::new();
    for r in records {
        if r.position != 1 && r.position != 2 {
            return Err(Error::InvalidPosition {
                pair: r.pair_id.clone(),
                position: r.position,
            });
        }
        let unit = Unit::new(r.time, r.event)?;
        let entry = slots.entry(r.pair_id.as_str()).or_insert_with(|| {
            order.push(r.pair_id.as_str());
            [None, None]
        });
        let slot = &mut entry[(r.position - 1) as usize];
        if slot.is_some() {
            return Err(Error::DuplicateUnit(r.pair_id.clone(), r.position));
        }
        *slot = Some((unit, r.treated));
    }

    let mut pairs = Vec::with_capacity(order.len());
    let mut ids = Vec::with_capacity(order.len());
    for id in order {
        let [a, b] = slots[id];
        let (first, t1) = a.ok_or_else(|| Error::IncompletePair(id.to_string(), 1))?;
        let (second, t2) = b.ok_or_else(|| Error::IncompletePair(id.to_string(), 2))?;
        let assignment = match (t1, t2) {
            (true, false) => Assignment::FirstTreated,
            (false, true) => Assignment::SecondTreated,
            (true, true) => return Err(Error::BothTreated(id.to_string())),
            (false, false) => return Err(Error::NeitherTreated(id.to_string())),
        };
        pairs.push(Pair::new(first, second, assignment));
        ids.push(id.to_string());
    }
    PairedSample::with_ids(pairs, ids)
}

/// Distinct observed times with risk-set counts.
#[derive(Debug, Clone)]
pub(crate) struct RiskTable {
    pub times: Vec<f64>,
    /// Units with `time >= times[k]`.
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl RiskTable {
    pub fn new(units: &[Unit]) -> Self {
        let mut sorted: Vec<(f64, bool)> = units.iter().map(|u| (u.time, u.event)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let mut times = Vec::new();
        let mut at_risk = Vec::new();
        let mut events = Vec::new();
        let mut i = 0;
        while i < n {
            let t = sorted[i].0;
            let mut j = i;
            let mut m = 0;
            while j < n && sorted[j].0 == t {
                m += sorted[j].1 as usize;
                j += 1;
            }
            times.push(t);
            at_risk.push(n - i);
            events.push(m);
            i = j;
        }
        Self {
            times,
            at_risk,
            events,
        }
    }

    /// Restrict to times carrying at least one event.
    pub fn event_times(&self) -> RiskTable {
        let keep: Vec<usize> = (0..self.times.len()).filter(|&k| self.events[k] > 0).collect();
        RiskTable {
            times: keep.iter().map(|&k| self.times[k]).collect(),
            at_risk: keep.iter().map(|&k| self.at_risk[k]).collect(),
            events: keep.iter().map(|&k| self.events[k]).collect(),
        }
    }

    /// Number of entries with `times[k] <= t`.
    pub fn count_le(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }
}

/// Right-continuous survival step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn at(&self, t: f64) -> f64 {
        km_at(self, t)
    }
}

/// Product-limit estimator over the distinct event times.
pub fn km_estimate(units: &[Unit]) -> Result<SurvivalCurve> {
    if units.is_empty() {
        return Err(Error::EmptyInput);
    }
    let table = RiskTable::new(units).event_times();
    let mut s = 1.0;
    let values = table
        .at_risk
        .iter()
        .zip(&table.events)
        .map(|(&n, &m)| {
            s *= 1.0 - m as f64 / n as f64;
            s
        })
        .collect();
    Ok(SurvivalCurve {
        knots: table.times,
        values,
    })
}

pub fn km_at(curve: &SurvivalCurve, t: f64) -> f64 {
    match curve.knots.partition_point(|&k| k <= t) {
        0 => 1.0,
        k => curve.values[k - 1],
    }
}

fn km_value(units: &[Unit], tau: f64) -> f64 {
    let table = RiskTable::new(units).event_times();
    let k = table.count_le(tau);
    (0..k)
        .map(|j| 1.0 - table.events[j] as f64 / table.at_risk[j] as f64)
        .product()
}

/// Jackknife pseudo-observations `n K(tau) - (n-1) K_{-u}(tau)` for every unit.
///
/// Runs in `O(n log n)`: the leave-one-out estimator is rebuilt from prefix
/// products with the unit removed from every risk set it belongs to, and
/// suffix products of the full-sample factors after the unit's own time.
pub fn pseudo_observations(units: &[Unit], tau: f64) -> Result<Vec<f64>> {
    let n = units.len();
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    let table = RiskTable::new(units).event_times();
    let kt = table.count_le(tau);
    let nk = &table.at_risk[..kt];
    let mk = &table.events[..kt];

    // reduced[k] = prod_{j<k} (1 - m_j/(n_j - 1)), valid while the removed
    // unit is at risk and not failing at t_j, which forces m_j <= n_j - 1.
    let mut reduced = vec![1.0; kt + 1];
    for k in 0..kt {
        let f = if nk[k] > 1 {
            1.0 - mk[k] as f64 / (nk[k] - 1) as f64
        } else {
            0.0
        };
        reduced[k + 1] = reduced[k] * f;
    }
    // full_suffix[k] = prod_{j>=k, j<kt} (1 - m_j/n_j)
    let mut full_suffix = vec![1.0; kt + 1];
    for k in (0..kt).rev() {
        full_suffix[k] = full_suffix[k + 1] * (1.0 - mk[k] as f64 / nk[k] as f64);
    }
    let k_full = full_suffix[0];
    let nf = n as f64;

    units
        .iter()
        .map(|u| {
            // event times at which the unit is at risk (t_k <= Y), capped at tau
            let p = table.times[..kt].partition_point(|&s| s <= u.time);
            let own = u.event && p > 0 && table.times[p - 1] == u.time;
            let loo = if own {
                let e = p - 1;
                if nk[e] < 2 {
                    // sole unit at risk; nothing survives it in the reduced sample
                    debug_assert_eq!(mk[e], 1);
                    reduced[e]
                } else {
                    let f = 1.0 - (mk[e] - 1) as f64 / (nk[e] - 1) as f64;
                    reduced[e] * f * full_suffix[p]
                }
            } else {
                if p > 0 && nk[p - 1] < 2 {
                    return Err(Error::DegenerateRiskSet);
                }
                reduced[p] * full_suffix[p]
            };
            Ok(nf * k_full - (nf - 1.0) * loo)
        })
        .collect()
}

/// Literal leave-one-out recomputation; `O(n^2 log n)`.
pub fn pseudo_observations_naive(units: &[Unit], tau: f64) -> Result<Vec<f64>> {
    let n = units.len();
    if n < 2 {
        return Err(Error::EmptyInput);
    }
    let full = km_value(units, tau);
    let nf = n as f64;
    let mut rest = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            rest.clear();
            rest.extend(units.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, u)| *u));
            nf * full - (nf - 1.0) * km_value(&rest, tau)
        })
        .collect())
}

/// Log-rank scores `H(Y) - delta`, with `H` the pooled Nelson–Aalen estimator.
pub fn logrank_scores(units: &[Unit]) -> Result<Vec<f64>> {
    if units.is_empty() {
        return Err(Error::EmptyInput);
    }
    let table = RiskTable::new(units);
    let mut h = 0.0;
    let cum: Vec<f64> = table
        .at_risk
        .iter()
        .zip(&table.events)
        .map(|(&n, &m)| {
            h += m as f64 / n as f64;
            h
        })
        .collect();
    Ok(units
        .iter()
        .map(|u| {
            let k = table.count_le(u.time);
            cum[k - 1] - u.event as u8 as f64
        })
        .collect())
}

/// Prentice–Wilcoxon scores `1 - J(Y) - delta J(Y)` with
/// `J(a) = prod_{Y_k <= a} (n_k - m_k + 1)/(n_k + 1)`.
pub fn pw_scores(units: &[Unit]) -> Result<Vec<f64>> {
    if units.is_empty() {
        return Err(Error::EmptyInput);
    }
    let table = RiskTable::new(units);
    let mut j = 1.0;
    let cum: Vec<f64> = table
        .at_risk
        .iter()
        .zip(&table.events)
        .map(|(&n, &m)| {
            j *= (n - m + 1) as f64 / (n + 1) as f64;
            j
        })
        .collect();
    Ok(units
        .iter()
        .map(|u| {
            let jy = cum[table.count_le(u.time) - 1];
            1.0 - jy - if u.event { jy } else { 0.0 }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Pseudo,
    Logrank,
    Pw,
}

impl ScoreKind {
    /// All three families, as defined here, grow with survival, so a treated
    /// survival advantage pushes `sum d_i V_i` upwards for each of them.
    pub fn benefit_is_upper(self) -> bool {
        true
    }
}

/// Per-unit scores and per-pair differences for one score family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    /// Analysis time for pseudo-observation scores.
    pub tau: Option<f64>,
    pub kind: ScoreKind,
    pub q: Vec<[f64; 2]>,
    pub d: Vec<f64>,
}

impl ScoreSet {
    pub fn from_unit_scores(kind: ScoreKind, tau: Option<f64>, scores: &[f64]) -> Self {
        let q: Vec<[f64; 2]> = scores.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let d = q.iter().map(|[a, b]| a - b).collect();
        Self { tau, kind, q, d }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Scores over the pooled sample, differenced within pairs (`q_i1 - q_i2`).
/// `tau` is required for pseudo-observations and ignored otherwise.
pub fn pair_differences(sample: &PairedSample, kind: ScoreKind, tau: Option<f64>) -> Result<ScoreSet> {
    let units = sample.units();
    let scores = match kind {
        ScoreKind::Pseudo => {
            let tau = tau.ok_or_else(|| Error::InvalidArgument("pseudo-observation scores need an analysis time".into()))?;
            if !(tau >= 0.0) {
                return Err(Error::InvalidArgument(format!("analysis time {tau} must be >= 0")));
            }
            pseudo_observations(&units, tau)?
        }
        ScoreKind::Logrank => logrank_scores(&units)?,
        ScoreKind::Pw => pw_scores(&units)?,
    };
    let tau = if kind == ScoreKind::Pseudo { tau } else { None };
    Ok(ScoreSet::from_unit_scores(kind, tau, &scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(spec: &[(f64, bool)]) -> Vec<Unit> {
        spec.iter().map(|&(t, e)| Unit::new(t, e).unwrap()).collect()
    }

    fn rec(id: &str, pos: u8, treated: bool, time: f64, event: bool) -> Record {
        Record {
            pair_id: id.into(),
            position: pos,
            treated,
            time,
            event,
        }
    }

    #[test]
    fn build_sample_single_pair() {
        let s = build_sample(&[rec("a", 1, true, 8.3, true), rec("a", 2, false, 1.8, true)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.signs(), vec![1.0]);
        assert_eq!(s.pair_ids().unwrap(), &["a".to_string()]);
    }

    #[test]
    fn build_sample_validation() {
        let r = build_sample(&[
            rec("a", 1, true, 1.0, true),
            rec("a", 2, false, 2.0, true),
            rec("b", 1, true, 1.0, true),
        ]);
        assert_eq!(r.unwrap_err(), Error::IncompletePair("b".into(), 2));

        let r = build_sample(&[rec("a", 1, true, 1.0, true), rec("a", 2, true, 2.0, true)]);
        assert_eq!(r.unwrap_err(), Error::BothTreated("a".into()));

        let r = build_sample(&[rec("a", 1, false, 1.0, true), rec("a", 2, false, 2.0, true)]);
        assert_eq!(r.unwrap_err(), Error::NeitherTreated("a".into()));

        let r = build_sample(&[rec("a", 1, true, 1.0, true), rec("a", 1, false, 2.0, true)]);
        assert_eq!(r.unwrap_err(), Error::DuplicateUnit("a".into(), 1));

        let r = build_sample(&[rec("a", 1, true, -1.0, true), rec("a", 2, false, 2.0, true)]);
        assert!(matches!(r.unwrap_err(), Error::NegativeTime(_)));
    }

    #[test]
    fn km_basic_cases() {
        let c = km_estimate(&units(&[(1.0, true), (2.0, true)])).unwrap();
        assert_eq!(c.at(1.5), 0.5);
        assert_eq!(c.at(0.5), 1.0);
        assert_eq!(c.at(1.0), 0.5);
        assert_eq!(c.at(9.0), 0.0);

        let tau = 3.0;
        let c = km_estimate(&units(&[(tau + 5.0, true), (tau - 1.0, true)])).unwrap();
        assert_eq!(c.at(tau), 0.5);

        let c = km_estimate(&units(&[(1.0, false), (4.0, false)])).unwrap();
        assert!(c.knots.is_empty());
        assert_eq!(c.at(10.0), 1.0);

        assert_eq!(km_estimate(&[]).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn km_events_before_censorings() {
        // the unit censored at 2 is still at risk for the event at 2
        let c = km_estimate(&units(&[(2.0, true), (2.0, false), (3.0, true)])).unwrap();
        assert!((c.at(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.at(3.0), 0.0);
    }

    #[test]
    fn two_unit_pseudo_example() {
        let tau = 2.5;
        let u = units(&[(tau + 5.0, true), (tau - 1.0, true)]);
        assert_eq!(pseudo_observations(&u, tau).unwrap(), vec![1.0, 0.0]);
        assert_eq!(pseudo_observations_naive(&u, tau).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn pseudo_exhausted_and_time_zero() {
        let u = units(&[(1.0, true), (2.0, true), (3.0, true), (4.0, true)]);
        for q in pseudo_observations(&u, 10.0).unwrap() {
            assert_eq!(q, 0.0);
        }
        let u = units(&[(1.0, true), (2.0, false), (3.0, true)]);
        assert_eq!(pseudo_observations(&u[..2], 0.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(pseudo_observations_naive(&u, 0.0).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn naive_two_units_one_removed() {
        // removing the unit failing at 1 leaves a one-unit KM that is 1 at tau = 1.5
        let u = units(&[(1.0, true), (2.0, true)]);
        let q = pseudo_observations_naive(&u, 1.5).unwrap();
        assert_eq!(q, vec![2.0 * 0.5 - 1.0, 2.0 * 0.5]);
        assert_eq!(pseudo_observations(&u, 1.5).unwrap(), q);
    }

    #[test]
    fn fast_handles_ties_and_last_unit() {
        let u = units(&[
            (1.0, true),
            (1.0, true),
            (1.0, false),
            (2.0, false),
            (3.0, true),
            (3.0, true),
            (4.0, true),
        ]);
        for tau in [0.5, 1.0, 2.5, 3.0, 4.0, 9.0] {
            let fast = pseudo_observations(&u, tau).unwrap();
            let naive = pseudo_observations_naive(&u, tau).unwrap();
            for (a, b) in fast.iter().zip(&naive) {
                assert!((a - b).abs() < 1e-12, "tau {tau}: {fast:?} vs {naive:?}");
            }
        }
    }

    #[test]
    fn logrank_cases() {
        assert_eq!(logrank_scores(&units(&[(3.0, true)])).unwrap(), vec![0.0]);
        assert_eq!(
            logrank_scores(&units(&[(1.0, true), (2.0, false)])).unwrap(),
            vec![-0.5, 0.5]
        );
        let u = units(&[(1.0, true), (2.0, true), (2.0, true), (5.0, true), (7.0, true)]);
        let s: f64 = logrank_scores(&u).unwrap().iter().sum();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn pw_cases() {
        assert_eq!(pw_scores(&units(&[(3.0, true)])).unwrap(), vec![0.0]);
        let q = pw_scores(&units(&[(1.0, true), (2.0, true)])).unwrap();
        assert!((q[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((q[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tied_pair_has_zero_difference() {
        let u = Unit::event(2.0).unwrap();
        let v = Unit::censored(4.0).unwrap();
        let s = PairedSample::new(vec![
            Pair::new(u, u, Assignment::FirstTreated),
            Pair::new(u, v, Assignment::SecondTreated),
        ])
        .unwrap();
        for kind in [ScoreKind::Pseudo, ScoreKind::Logrank, ScoreKind::Pw] {
            let set = pair_differences(&s, kind, Some(3.0)).unwrap();
            assert_eq!(set.d[0], 0.0);
        }
    }

    #[test]
    fn pseudo_needs_tau() {
        let u = Unit::event(2.0).unwrap();
        let s = PairedSample::new(vec![Pair::new(u, u, Assignment::FirstTreated)]).unwrap();
        assert!(pair_differences(&s, ScoreKind::Pseudo, None).is_err());
    }
}
