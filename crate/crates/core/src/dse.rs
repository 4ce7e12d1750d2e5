// SPDX-License-Identifier: Apache-2.0
//! Exhaustive grid search over a named parameter space.
//!
//! Axes are arithmetic progressions `min + k*step` computed by index, so long
//! axes do not accumulate drift. The grid is the Cartesian product with the
//! first declared axis as the outermost loop. `tune` minimizes, keeps the
//! earliest trial on ties, and records per-point failures without stopping.

use std::io::Write;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on materialized grid size.
pub const MAX_GRID_POINTS: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamRange {
    pub fn new(min: f64, max: f64, step: f64) -> ParamRange {
        ParamRange { min, max, step }
    }

    fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.step.is_finite() && self.step > 0.0 && self.min <= self.max
    }

    /// Number of grid values; `max` counts when reached within `1e-9 * step`.
    fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    fn value(&self, k: usize, len: usize) -> f64 {
        let v = self.min + k as f64 * self.step;
        if k + 1 == len && (v - self.max).abs() <= 1e-9 * self.step {
            self.max
        } else {
            v
        }
    }
}

/// Ordered axes; declaration order is loop nesting order, outermost first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    axes: IndexMap<String, ParamRange>,
}

pub type ParamPoint = IndexMap<String, f64>;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DseError {
    #[error("axis `{0}` is empty: need finite min <= max and step > 0")]
    EmptyAxis(String),
    #[error("axis `{0}` declared twice")]
    DuplicateAxis(String),
    #[error("grid has more than {MAX_GRID_POINTS} points")]
    GridTooLarge,
    #[error("all {evaluations} trials failed")]
    NoSuccessfulTrial { evaluations: usize },
}

impl ParamSpace {
    pub fn new() -> ParamSpace {
        ParamSpace::default()
    }

    pub fn with(mut self, name: &str, range: ParamRange) -> Result<ParamSpace, DseError> {
        self.push(name, range)?;
        Ok(self)
    }

    pub fn push(&mut self, name: &str, range: ParamRange) -> Result<(), DseError> {
        if self.axes.contains_key(name) {
            return Err(DseError::DuplicateAxis(name.to_string()));
        }
        self.axes.insert(name.to_string(), range);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.axes.keys().map(String::as_str)
    }

    pub fn axes(&self) -> impl Iterator<Item = (&str, &ParamRange)> {
        self.axes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }
}

pub fn axis_values(name: &str, range: &ParamRange) -> Result<Vec<f64>, DseError> {
    if !range.is_valid() {
        return Err(DseError::EmptyAxis(name.to_string()));
    }
    let raw = (range.max - range.min) / range.step;
    if raw >= MAX_GRID_POINTS as f64 {
        return Err(DseError::GridTooLarge);
    }
    let len = range.len();
    Ok((0..len).map(|k| range.value(k, len)).collect())
}

/// Number of grid points, without materializing them.
pub fn grid_size(space: &ParamSpace) -> Result<usize, DseError> {
    let mut total = 1usize;
    for (name, range) in space.axes() {
        let n = axis_values(name, range)?.len();
        total = total.checked_mul(n).filter(|t| *t <= MAX_GRID_POINTS).ok_or(DseError::GridTooLarge)?;
    }
    Ok(total)
}

pub fn enumerate_grid(space: &ParamSpace) -> Result<Vec<ParamPoint>, DseError> {
    grid_size(space)?;
    let axes: Vec<(&str, Vec<f64>)> =
        space.axes().map(|(name, range)| axis_values(name, range).map(|v| (name, v))).collect::<Result<_, _>>()?;
    let mut points: Vec<ParamPoint> = vec![ParamPoint::new()];
    for (name, values) in &axes {
        let mut next = Vec::with_capacity(points.len() * values.len());
        for point in &points {
            for v in values {
                let mut p = point.clone();
                p.insert(name.to_string(), *v);
                next.push(p);
            }
        }
        points = next;
    }
    Ok(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: ParamPoint,
    pub objective: Option<f64>,
    pub ok: bool,
    pub fault: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
    pub evaluations: usize,
}

/// Why an evaluation produced no objective.
#[derive(Debug)]
pub enum TrialFailure<E> {
    /// Recorded on the trial; the search continues.
    Fault(String),
    /// Stops the search and is handed back to the caller.
    Abort(E),
}

#[derive(Debug, Error)]
pub enum TuneError<E> {
    #[error(transparent)]
    Dse(#[from] DseError),
    #[error("tuning aborted")]
    Aborted(E),
}

fn record(index: usize, params: ParamPoint, outcome: Result<f64, String>) -> Trial {
    match outcome {
        Ok(v) if v.is_nan() => {
            Trial { index, params, objective: None, ok: false, fault: Some("objective is NaN".into()) }
        }
        Ok(v) => Trial { index, params, objective: Some(v), ok: true, fault: None },
        Err(msg) => Trial { index, params, objective: None, ok: false, fault: Some(msg) },
    }
}

fn finish(trials: Vec<Trial>) -> Result<TuneResult, DseError> {
    let mut best: Option<&Trial> = None;
    for t in trials.iter().filter(|t| t.ok) {
        let v = t.objective.expect("ok trials carry an objective");
        // Strict comparison keeps the earliest trial on ties.
        if best.is_none_or(|b| v < b.objective.expect("ok")) {
            best = Some(t);
        }
    }
    let evaluations = trials.len();
    let best = best.cloned().ok_or(DseError::NoSuccessfulTrial { evaluations })?;
    Ok(TuneResult { best, trials, evaluations })
}

fn points_for(space: &ParamSpace, budget: Option<usize>) -> Result<Vec<ParamPoint>, DseError> {
    let mut points = enumerate_grid(space)?;
    if let Some(b) = budget {
        points.truncate(b);
    }
    Ok(points)
}

/// Sequential search with an evaluator that may abort the whole run.
pub fn tune_with<F, E>(space: &ParamSpace, budget: Option<usize>, mut eval: F) -> Result<TuneResult, TuneError<E>>
where
    F: FnMut(&ParamPoint) -> Result<f64, TrialFailure<E>>,
{
    let points = points_for(space, budget)?;
    let mut trials = Vec::with_capacity(points.len());
    for (index, params) in points.into_iter().enumerate() {
        let outcome = match eval(&params) {
            Ok(v) => Ok(v),
            Err(TrialFailure::Fault(msg)) => Err(msg),
            Err(TrialFailure::Abort(e)) => return Err(TuneError::Aborted(e)),
        };
        trials.push(record(index, params, outcome));
    }
    Ok(finish(trials)?)
}

/// Minimizes `eval` over the grid of `space`, evaluating at most `budget` points.
pub fn tune<F>(eval: F, space: &ParamSpace, budget: Option<usize>) -> Result<TuneResult, DseError>
where
    F: FnMut(&ParamPoint) -> Result<f64, String>,
{
    let mut eval = eval;
    tune_with::<_, std::convert::Infallible>(space, budget, |p| eval(p).map_err(TrialFailure::Fault)).map_err(|e| {
        match e {
            TuneError::Dse(d) => d,
            TuneError::Aborted(never) => match never {},
        }
    })
}

/// Parallel evaluation for pure objectives; trial order matches [`tune`].
pub fn tune_parallel<F>(eval: F, space: &ParamSpace, budget: Option<usize>) -> Result<TuneResult, DseError>
where
    F: Fn(&ParamPoint) -> Result<f64, String> + Sync,
{
    let points = points_for(space, budget)?;
    let trials: Vec<Trial> = points
        .into_par_iter()
        .enumerate()
        .map(|(index, params)| {
            let outcome = eval(&params);
            record(index, params, outcome)
        })
        .collect();
    finish(trials)
}

/// Writes trials as CSV: `trial`, one column per axis, `objective`, `ok`.
pub fn write_trials_csv<W: Write>(space: &ParamSpace, trials: &[Trial], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trial".to_string()];
    header.extend(space.names().map(str::to_string));
    header.push("objective".into());
    header.push("ok".into());
    w.write_record(&header)?;
    for t in trials {
        let mut row = vec![t.index.to_string()];
        for name in space.names() {
            row.push(t.params.get(name).map(|v| v.to_string()).unwrap_or_default());
        }
        row.push(t.objective.map(|v| v.to_string()).unwrap_or_default());
        row.push(t.ok.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(axes: &[(&str, f64, f64, f64)]) -> ParamSpace {
        let mut s = ParamSpace::new();
        for (n, lo, hi, st) in axes {
            s.push(n, ParamRange::new(*lo, *hi, *st)).unwrap();
        }
        s
    }

    #[test]
    fn axis_is_arithmetic_progression() {
        let v = axis_values("u", &ParamRange::new(60.0, 85.0, 5.0)).unwrap();
        assert_eq!(v, vec![60.0, 65.0, 70.0, 75.0, 80.0, 85.0]);
        let v = axis_values("u", &ParamRange::new(60.0, 87.0, 5.0)).unwrap();
        assert_eq!(v.last(), Some(&85.0));
        let d = axis_values("d", &ParamRange::new(0.55, 1.0, 0.05)).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(*d.last().unwrap(), 1.0);
        assert_eq!(d[3], 0.55 + 3.0 * 0.05);
    }

    #[test]
    fn two_axis_product_order() {
        let g = enumerate_grid(&space(&[("a", 0.0, 1.0, 1.0), ("b", 0.0, 1.0, 1.0)])).unwrap();
        let pairs: Vec<(f64, f64)> = g.iter().map(|p| (p["a"], p["b"])).collect();
        assert_eq!(pairs, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn empty_axis_rejected() {
        let s = space(&[("a", 1.0, 0.0, 1.0)]);
        assert_eq!(enumerate_grid(&s).unwrap_err(), DseError::EmptyAxis("a".into()));
        let s = space(&[("b", 0.0, 1.0, 0.0)]);
        assert_eq!(grid_size(&s).unwrap_err(), DseError::EmptyAxis("b".into()));
        let mut s = ParamSpace::new();
        s.push("x", ParamRange::new(0.0, 1.0, 1.0)).unwrap();
        assert!(s.push("x", ParamRange::new(0.0, 1.0, 1.0)).is_err());
        let s = space(&[("a", 0.0, 1e9, 1e-3)]);
        assert_eq!(grid_size(&s).unwrap_err(), DseError::GridTooLarge);
    }

    #[test]
    fn parabola_vertex_on_grid() {
        let s = space(&[("u", 60.0, 80.0, 5.0)]);
        let r = tune(|p| Ok((p["u"] - 70.0).powi(2)), &s, None).unwrap();
        assert_eq!(r.best.params["u"], 70.0);
        assert_eq!(r.best.objective, Some(0.0));
        assert_eq!(r.evaluations, 5);
    }

    #[test]
    fn ties_keep_first_and_faults_are_recorded() {
        let s = space(&[("x", 0.0, 4.0, 1.0)]);
        let r = tune(
            |p| {
                if p["x"] == 0.0 {
                    Err("boom".into())
                } else {
                    Ok((p["x"] - 2.5).abs().floor())
                }
            },
            &s,
            None,
        )
        .unwrap();
        assert_eq!(r.best.index, 2);
        assert!(!r.trials[0].ok);
        assert_eq!(r.trials[0].fault.as_deref(), Some("boom"));
        assert_eq!(r.trials[0].objective, None);
    }

    #[test]
    fn all_faults_is_an_error() {
        let s = space(&[("x", 0.0, 2.0, 1.0)]);
        let e = tune(|_| Err("no".into()), &s, None).unwrap_err();
        assert_eq!(e, DseError::NoSuccessfulTrial { evaluations: 3 });
        let e = tune(|_| Ok(f64::NAN), &s, None).unwrap_err();
        assert_eq!(e, DseError::NoSuccessfulTrial { evaluations: 3 });
    }

    #[test]
    fn budget_truncates_in_order() {
        let s = space(&[("x", 0.0, 9.0, 1.0)]);
        let r = tune(|p| Ok(-p["x"]), &s, Some(4)).unwrap();
        assert_eq!(r.evaluations, 4);
        assert_eq!(r.best.params["x"], 3.0);
    }

    #[test]
    fn abort_stops_the_search() {
        let s = space(&[("x", 0.0, 9.0, 1.0)]);
        let mut seen = 0;
        let r = tune_with(&s, None, |p| {
            seen += 1;
            if p["x"] == 2.0 {
                Err(TrialFailure::Abort("halt"))
            } else {
                Ok(p["x"])
            }
        });
        assert!(matches!(r, Err(TuneError::Aborted("halt"))));
        assert_eq!(seen, 3);
    }

    #[test]
    fn parallel_matches_sequential() {
        let s = space(&[("a", 0.0, 1.0, 0.1), ("b", -1.0, 1.0, 0.25)]);
        let f = |p: &ParamPoint| Ok((p["a"] - 0.3).powi(2) + (p["b"] + 0.2).abs());
        let seq = tune(f, &s, None).unwrap();
        let par = tune_parallel(f, &s, None).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn csv_export() {
        let s = space(&[("u", 60.0, 65.0, 5.0)]);
        let r = tune(|p| if p["u"] > 60.0 { Ok(1.5) } else { Err("x".into()) }, &s, None).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&s, &r.trials, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "trial,u,objective,ok\n0,60,,false\n1,65,1.5,true\n");
    }
}
