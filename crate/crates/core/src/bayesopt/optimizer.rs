use std::collections::{HashSet, VecDeque};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acquisition::expected_improvement_at;
use super::gp::{Gp, GpHyper, NoiseModel};
use super::lbfgs::{minimize_box, LbfgsOptions};
use super::space::SearchSpace;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for};

const CANDIDATES: usize = 512;
const CONTINUOUS_NUDGE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_acquisitions: usize,
    /// Quasi-Newton starts per acquisition.
    pub restarts: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self { n_init: 5, n_acquisitions: 50, restarts: 8, noise: NoiseModel::default(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub unit: Vec<f64>,
    pub raw: Vec<f64>,
    pub value: f64,
    /// The objective errored or returned a non-finite value and was scored 0.
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoState {
    pub space: SearchSpace,
    pub evaluations: Vec<Evaluation>,
    pub hyper: Option<GpHyper>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub unit: Vec<f64>,
    pub raw: Vec<f64>,
    pub hyper: Option<GpHyper>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoOutcome {
    pub best_raw: Vec<f64>,
    pub best_value: f64,
    pub state: BoState,
}

impl BoState {
    pub fn new(space: SearchSpace, seed: u64) -> Self {
        Self { space, evaluations: Vec::new(), hyper: None, seed }
    }

    /// Earliest evaluation attaining the maximum.
    pub fn best(&self) -> Option<&Evaluation> {
        self.evaluations.iter().fold(None, |acc: Option<&Evaluation>, e| match acc {
            Some(b) if b.value >= e.value => Some(b),
            _ => Some(e),
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.evaluations.iter().map(|e| e.value).collect()
    }

    pub fn is_evaluated(&self, unit: &[f64]) -> bool {
        self.evaluations
            .iter()
            .any(|e| e.unit.iter().zip(unit).all(|(a, b)| (a - b).abs() <= 1e-12))
    }

    fn record(&mut self, unit: Vec<f64>, value: std::result::Result<f64, String>) {
        let raw = self.space.from_unit(&unit);
        let iteration = self.evaluations.len();
        let (value, failed) = match value {
            Ok(v) if v.is_finite() => (v, false),
            Ok(v) => {
                log::warn!("objective returned {v} at iteration {iteration}; scored 0");
                (0.0, true)
            }
            Err(e) => {
                log::warn!("objective failed at iteration {iteration}: {e}; scored 0");
                (0.0, true)
            }
        };
        log::info!("bo iteration {iteration}: {:?} -> {value:.4}", raw);
        self.evaluations.push(Evaluation { iteration, unit, raw, value, failed });
    }

    /// One row per evaluation: iteration, raw values, objective, running best.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = vec!["iteration".to_string()];
        header.extend(self.space.names().into_iter().map(String::from));
        header.extend(["objective".into(), "best".into()]);
        w.write_record(&header).map_err(csv_err)?;
        let mut best = f64::NEG_INFINITY;
        for e in &self.evaluations {
            best = best.max(e.value);
            let mut rec = vec![e.iteration.to_string()];
            rec.extend(e.raw.iter().map(|v| v.to_string()));
            rec.extend([e.value.to_string(), best.to_string()]);
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Stratified design: each dimension's unit interval is cut into `n` strata
/// and every stratum receives exactly one point.
pub fn latin_hypercube(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[j] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    points
}

/// Moves a duplicate proposal to the closest unevaluated configuration:
/// breadth-first over discrete index steps, then a small random nudge of the
/// continuous coordinates. `None` means the space is exhausted.
fn dedupe(state: &BoState, unit: Vec<f64>, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    if !state.is_evaluated(&unit) {
        return Some(unit);
    }
    let space = &state.space;
    let key = |u: &[f64]| -> Vec<u64> { u.iter().map(|v| v.to_bits()).collect() };
    let mut seen: HashSet<Vec<u64>> = HashSet::from([key(&unit)]);
    let mut queue = VecDeque::from([unit.clone()]);
    while let Some(cur) = queue.pop_front() {
        for (j, dim) in space.dims.iter().enumerate() {
            let Some(n) = dim.n_values().filter(|&n| n > 1) else { continue };
            let idx = (cur[j] * (n - 1) as f64).round() as i64;
            for step in [-1i64, 1] {
                let next = idx + step;
                if next < 0 || next >= n as i64 {
                    continue;
                }
                let mut cand = cur.clone();
                cand[j] = next as f64 / (n - 1) as f64;
                if !seen.insert(key(&cand)) {
                    continue;
                }
                if !state.is_evaluated(&cand) {
                    return Some(cand);
                }
                queue.push_back(cand);
            }
        }
    }
    if space.dims.iter().all(|d| d.is_discrete()) {
        return None;
    }
    for _ in 0..64 {
        let mut cand = unit.clone();
        for (c, d) in cand.iter_mut().zip(&space.dims) {
            if !d.is_discrete() {
                *c = (*c + rng.gen_range(-CONTINUOUS_NUDGE..=CONTINUOUS_NUDGE)).clamp(0.0, 1.0);
            }
        }
        if !state.is_evaluated(&cand) {
            return Some(cand);
        }
    }
    None
}

/// Maximises expected improvement over the unit cube with multi-start
/// projected L-BFGS from the best random candidates and the incumbent.
pub fn propose_next(state: &BoState, restarts: usize, noise: NoiseModel) -> Option<Proposal> {
    let space = &state.space;
    let d = space.len();
    let iteration = state.evaluations.len();
    let mut rng = rng_for(state.seed, "bo-propose", iteration as u64);
    let points: Vec<Vec<f64>> = state.evaluations.iter().map(|e| e.unit.clone()).collect();
    let values = state.values();
    let incumbent = state.best()?;
    let best = incumbent.value;

    let gp = match Gp::fit(&points, &values, noise, derive_seed(state.seed, "bo-gp", iteration as u64)) {
        Ok(gp) => Some(gp),
        Err(e) => {
            log::warn!("surrogate fit failed at iteration {iteration}: {e}; proposing at random");
            None
        }
    };
    let candidate = match &gp {
        Some(gp) => {
            let ei = |u: &[f64]| expected_improvement_at(gp, u, best);
            let mut cands: Vec<(f64, Vec<f64>)> = (0..CANDIDATES)
                .map(|_| {
                    let u: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
                    (ei(&u), u)
                })
                .collect();
            cands.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut starts: Vec<Vec<f64>> = cands.iter().take(restarts.max(1)).map(|c| c.1.clone()).collect();
            starts.push(incumbent.unit.clone());
            let (lo, hi) = (vec![0.0; d], vec![1.0; d]);
            let opts = LbfgsOptions { max_iter: 50, ..LbfgsOptions::default() };
            let mut winner = (cands[0].0, cands[0].1.clone());
            for s in &starts {
                let (u, neg) = minimize_box(|u| -ei(u), s, &lo, &hi, &opts);
                if -neg > winner.0 {
                    winner = (-neg, u);
                }
            }
            winner.1
        }
        None => (0..d).map(|_| rng.gen::<f64>()).collect(),
    };
    let unit = dedupe(state, space.snap_unit(&candidate), &mut rng)?;
    Some(Proposal { raw: space.from_unit(&unit), unit, hyper: gp.map(|g| g.hyper().clone()) })
}

/// Runs `n_init` stratified evaluations followed by up to `n_acquisitions`
/// EI-driven ones. Objective errors are scored 0 and the run continues.
pub fn optimize<F>(space: &SearchSpace, config: &BoConfig, mut objective: F) -> Result<BoOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut state = BoState::new(space.clone(), config.seed);
    let mut eval = |state: &mut BoState, unit: Vec<f64>| {
        let raw = state.space.from_unit(&unit);
        let value = objective(&raw).map_err(|e| e.to_string());
        state.record(unit, value);
    };
    if space.is_empty() {
        eval(&mut state, Vec::new());
    } else {
        let mut rng = rng_for(config.seed, "bo-init", 0);
        for u in latin_hypercube(config.n_init.max(1), space.len(), &mut rng) {
            let Some(u) = dedupe(&state, space.snap_unit(&u), &mut rng) else { break };
            eval(&mut state, u);
        }
        for _ in 0..config.n_acquisitions {
            let Some(p) = propose_next(&state, config.restarts, config.noise) else {
                log::info!("search space exhausted after {} evaluations", state.evaluations.len());
                break;
            };
            state.hyper = p.hyper;
            eval(&mut state, p.unit);
        }
    }
    let best = state.best().ok_or_else(|| Error::numerical("optimisation produced no evaluations"))?;
    Ok(BoOutcome { best_raw: best.raw.clone(), best_value: best.value, state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::Dim;

    #[test]
    fn lhs_fills_every_stratum() {
        let mut rng = rng_for(1, "t", 0);
        let pts = latin_hypercube(7, 3, &mut rng);
        for j in 0..3 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[j] * 7.0) as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn exhausts_small_discrete_space() {
        let space = SearchSpace::new(vec![Dim::discrete("k", [1.0, 2.0, 3.0])]).unwrap();
        let cfg = BoConfig { n_init: 2, n_acquisitions: 10, ..BoConfig::default() };
        let out = optimize(&space, &cfg, |x| Ok(-(x[0] - 2.0).abs())).unwrap();
        assert_eq!(out.state.evaluations.len(), 3);
        assert_eq!(out.best_raw, vec![2.0]);
    }

    #[test]
    fn failures_score_zero() {
        let space = SearchSpace::new(vec![Dim::continuous("x", 0.0, 1.0)]).unwrap();
        let cfg = BoConfig { n_init: 3, n_acquisitions: 2, ..BoConfig::default() };
        let out = optimize(&space, &cfg, |x| if x[0] < 2.0 { Err(Error::numerical("boom")) } else { Ok(1.0) }).unwrap();
        assert!(out.state.evaluations.iter().all(|e| e.failed && e.value == 0.0));
    }
}
