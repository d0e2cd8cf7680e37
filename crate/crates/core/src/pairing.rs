//! Same-channel subject pairs with neighbour labels, and channel-grouped batches.
//!
//! Pairs hold subject indices into an [`ImageStore`], never image copies, so
//! the `c * N * (N - 1) / 2` pair list costs a few words per pair.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::signal::{Label, SubjectInfo};
use crate::spectral::ImageStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairExample {
    /// Subject index of the lexicographically smaller subject id.
    pub subject_a: usize,
    pub subject_b: usize,
    pub channel: usize,
    /// 1 when both subjects share a label.
    pub y: u8,
}

impl PairExample {
    pub fn is_neighbor(&self) -> bool {
        self.y == 1
    }

    pub fn subject_pair(&self) -> (usize, usize) {
        (self.subject_a, self.subject_b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub pairs: Vec<PairExample>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn subject_pairs(&self, channels: usize) -> usize {
        self.pairs.len() / channels.max(1)
    }
}

/// Every unordered subject pair on every channel, subject-pair major.
pub fn enumerate_pairs(subjects: &[SubjectInfo], channels: usize) -> Vec<PairExample> {
    let n = subjects.len();
    let mut out = Vec::with_capacity(channels * n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = if subjects[i].subject_id <= subjects[j].subject_id { (i, j) } else { (j, i) };
            let y = u8::from(subjects[i].label == subjects[j].label);
            out.extend((0..channels).map(|channel| PairExample { subject_a: a, subject_b: b, channel, y }));
        }
    }
    out
}

/// Pairs over the subjects of an image store. Every listed subject must have
/// images in the store; pair indices refer to store positions.
pub fn build_pairs(subjects: &[SubjectInfo], store: &ImageStore) -> Result<Vec<PairExample>> {
    for s in subjects {
        match store.subject_index(&s.subject_id) {
            Some(idx) if store.subjects()[idx].label == s.label => {}
            Some(_) => {
                return Err(Error::data(format!("label of subject {} disagrees with image store", s.subject_id)))
            }
            None => {
                return Err(Error::data(format!("missing image for subject {} (all channels)", s.subject_id)))
            }
        }
    }
    if subjects.len() == store.subjects().len() {
        return Ok(enumerate_pairs(store.subjects(), store.n_channels()));
    }
    // restrict to the listed subjects but keep store indices
    let idx: Vec<usize> = subjects.iter().map(|s| store.subject_index(&s.subject_id).unwrap()).collect();
    let local: Vec<SubjectInfo> = idx.iter().map(|&i| store.subjects()[i].clone()).collect();
    Ok(enumerate_pairs(&local, store.n_channels())
        .into_iter()
        .map(|p| PairExample { subject_a: idx[p.subject_a], subject_b: idx[p.subject_b], ..p })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PairStats {
    pub subjects: usize,
    pub channels: usize,
    pub subject_pairs: usize,
    pub total: usize,
    pub neighbors: usize,
    pub non_neighbors: usize,
    pub case_case: usize,
    pub control_control: usize,
    pub case_control: usize,
}

pub fn pair_stats(subjects: &[SubjectInfo], pairs: &[PairExample], channels: usize) -> PairStats {
    let mut s = PairStats { subjects: subjects.len(), channels, total: pairs.len(), ..PairStats::default() };
    for p in pairs {
        match (subjects[p.subject_a].label, subjects[p.subject_b].label) {
            (Label::Case, Label::Case) => s.case_case += 1,
            (Label::Control, Label::Control) => s.control_control += 1,
            _ => s.case_control += 1,
        }
    }
    s.neighbors = s.case_case + s.control_control;
    s.non_neighbors = s.case_control;
    s.subject_pairs = if channels == 0 { 0 } else { pairs.len() / channels };
    s
}

fn group_by_subject_pair(pairs: &[PairExample], channels: usize) -> Result<Vec<Vec<PairExample>>> {
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<PairExample>> = BTreeMap::new();
    for p in pairs {
        let key = p.subject_pair();
        let g = groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::with_capacity(channels)
        });
        g.push(*p);
    }
    order
        .into_iter()
        .map(|key| {
            let mut g = groups.remove(&key).unwrap();
            g.sort_by_key(|p| p.channel);
            let complete = g.len() == channels && g.iter().enumerate().all(|(i, p)| p.channel == i);
            if !complete {
                return Err(Error::data(format!(
                    "incomplete channel group for subject pair ({}, {}): {} of {channels} channels",
                    key.0,
                    key.1,
                    g.len()
                )));
            }
            Ok(g)
        })
        .collect()
}

/// Subsample the majority neighbour class, at subject-pair granularity, to
/// match the minority class count.
pub fn balance_pairs(pairs: &[PairExample], channels: usize, seed: u64) -> Result<Vec<PairExample>> {
    let groups = group_by_subject_pair(pairs, channels)?;
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = groups.into_iter().partition(|g| g[0].y == 1);
    let keep = pos.len().min(neg.len());
    let mut rng = rng_for(seed, "balance", 0);
    let majority = if pos.len() > neg.len() { &mut pos } else { &mut neg };
    majority.shuffle(&mut rng);
    majority.truncate(keep);
    let mut out: Vec<PairExample> = pos.into_iter().chain(neg).flatten().collect();
    out.sort();
    Ok(out)
}

/// One epoch of batches. Subject pairs are shuffled as whole channel groups;
/// each batch holds up to `subject_pairs_per_batch` groups (the last may be short).
pub fn batch_iter(
    pairs: &[PairExample],
    channels: usize,
    subject_pairs_per_batch: usize,
    shuffle_seed: u64,
) -> Result<Vec<PairBatch>> {
    if channels == 0 || subject_pairs_per_batch == 0 {
        return Err(Error::param("channel count and subject pairs per batch must be positive"));
    }
    let mut groups = group_by_subject_pair(pairs, channels)?;
    let mut rng = rng_for(shuffle_seed, "batch-shuffle", 0);
    groups.shuffle(&mut rng);
    Ok(groups
        .chunks(subject_pairs_per_batch)
        .map(|chunk| PairBatch { pairs: chunk.iter().flatten().copied().collect() })
        .collect())
}

pub fn binomial2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subjects(labels: &[Label]) -> Vec<SubjectInfo> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| SubjectInfo { subject_id: format!("s{i:02}"), label })
            .collect()
    }

    #[test]
    fn reference_cohort_pair_count() {
        let mut labels = vec![Label::Case; 45];
        labels.extend(vec![Label::Control; 39]);
        let subj = subjects(&labels);
        let pairs = enumerate_pairs(&subj, 16);
        assert_eq!(pairs.len(), 55776);
        let stats = pair_stats(&subj, &pairs, 16);
        assert_eq!(stats.subject_pairs, 3486);
        assert_eq!(stats.case_case, 16 * binomial2(45));
        assert_eq!(stats.control_control, 16 * binomial2(39));
        assert_eq!(stats.case_control, 16 * 45 * 39);
    }

    #[test]
    fn two_neighbors_one_channel() {
        let pairs = enumerate_pairs(&subjects(&[Label::Case, Label::Case]), 1);
        assert_eq!(pairs, vec![PairExample { subject_a: 0, subject_b: 1, channel: 0, y: 1 }]);
    }

    #[test]
    fn three_subjects_two_channels() {
        let pairs = enumerate_pairs(&subjects(&[Label::Case, Label::Case, Label::Control]), 2);
        assert_eq!(pairs.len(), 6);
        assert_eq!(pairs.iter().filter(|p| p.y == 1).count(), 2);
        assert_eq!(pairs.iter().filter(|p| p.y == 0).count(), 4);
    }

    #[test]
    fn canonical_order_follows_subject_id() {
        let subj = vec![
            SubjectInfo { subject_id: "zz".into(), label: Label::Case },
            SubjectInfo { subject_id: "aa".into(), label: Label::Control },
        ];
        let pairs = enumerate_pairs(&subj, 1);
        assert_eq!((pairs[0].subject_a, pairs[0].subject_b), (1, 0));
    }

    #[test]
    fn reference_cohort_batching() {
        let subj = subjects(&[Label::Case; 84]);
        let pairs = enumerate_pairs(&subj, 16);
        let batches = batch_iter(&pairs, 16, 16, 3).unwrap();
        assert_eq!(batches.len(), 218);
        assert!(batches[..217].iter().all(|b| b.len() == 256));
        assert_eq!(batches[217].len(), 14 * 16);
    }

    #[test]
    fn single_pair_batch() {
        let pairs = enumerate_pairs(&subjects(&[Label::Case, Label::Control]), 1);
        let batches = batch_iter(&pairs, 1, 16, 0).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].pairs, pairs);
    }

    #[test]
    fn incomplete_group_is_rejected() {
        let mut pairs = enumerate_pairs(&subjects(&[Label::Case, Label::Control, Label::Case]), 2);
        pairs.remove(3);
        assert!(batch_iter(&pairs, 2, 16, 0).is_err());
    }

    #[test]
    fn balancing_equalizes_classes() {
        let subj = subjects(&[Label::Case, Label::Case, Label::Case, Label::Control]);
        let pairs = enumerate_pairs(&subj, 2);
        let balanced = balance_pairs(&pairs, 2, 1).unwrap();
        let pos = balanced.iter().filter(|p| p.y == 1).count();
        let neg = balanced.len() - pos;
        assert_eq!(pos, neg);
        assert_eq!(pos, 6);
    }
}
