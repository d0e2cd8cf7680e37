use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::signal::{Label, SubjectInfo};

/// Subject-level stratified assignment into `k` validation folds. Indices
/// refer to `subjects`; assignment depends only on the sorted ids and `seed`,
/// never on the input order.
pub fn stratified_folds(subjects: &[SubjectInfo], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::param(format!("need at least 2 folds, got {k}")));
    }
    if subjects.len() < k {
        return Err(Error::data(format!("{} subjects cannot fill {k} folds", subjects.len())));
    }
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by(|&a, &b| subjects[a].subject_id.cmp(&subjects[b].subject_id));
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (i, label) in [Label::Case, Label::Control].into_iter().enumerate() {
        let mut group: Vec<usize> = order.iter().copied().filter(|&s| subjects[s].label == label).collect();
        group.shuffle(&mut rng_for(seed, "kfold", i as u64));
        for s in group {
            folds[next % k].push(s);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_by(|&a, &b| subjects[a].subject_id.cmp(&subjects[b].subject_id));
    }
    Ok(folds)
}

/// Complement of `fold` within `0..n`.
pub fn training_indices(n: usize, fold: &[usize]) -> Vec<usize> {
    (0..n).filter(|i| !fold.contains(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(n_case: usize, n_control: usize) -> Vec<SubjectInfo> {
        let case = (0..n_case).map(|i| SubjectInfo { subject_id: format!("c{i:02}"), label: Label::Case });
        let ctrl = (0..n_control).map(|i| SubjectInfo { subject_id: format!("h{i:02}"), label: Label::Control });
        case.chain(ctrl).collect()
    }

    #[test]
    fn ten_subjects_five_folds_partition() {
        let s = cohort(5, 5);
        let folds = stratified_folds(&s, 5, 3).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 2));
    }

    #[test]
    fn order_invariant() {
        let s = cohort(6, 7);
        let mut r = s.clone();
        r.reverse();
        let ids = |subs: &[SubjectInfo], folds: Vec<Vec<usize>>| -> Vec<Vec<String>> {
            folds.into_iter().map(|f| f.into_iter().map(|i| subs[i].subject_id.clone()).collect()).collect()
        };
        assert_eq!(ids(&s, stratified_folds(&s, 5, 9).unwrap()), ids(&r, stratified_folds(&r, 5, 9).unwrap()));
    }

    #[test]
    fn too_few_subjects() {
        assert!(stratified_folds(&cohort(2, 2), 5, 0).is_err());
    }
}
