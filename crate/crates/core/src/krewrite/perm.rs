use std::collections::BTreeSet;
use std::fmt;

/// Sign of a generalized Kronecker symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PermSign {
    Minus,
    Zero,
    Plus,
}

impl PermSign {
    pub fn value(self) -> i32 {
        match self {
            PermSign::Minus => -1,
            PermSign::Zero => 0,
            PermSign::Plus => 1,
        }
    }

    pub fn flip(self) -> PermSign {
        match self {
            PermSign::Minus => PermSign::Plus,
            PermSign::Zero => PermSign::Zero,
            PermSign::Plus => PermSign::Minus,
        }
    }
}

impl fmt::Display for PermSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// `epsilon^{target}_{prefix, Q}`: the sign of the permutation taking the
/// sequence `prefix ++ Q` (with `Q` in increasing order) onto `target` (in
/// increasing order), or zero if they differ as sets or an index repeats.
pub fn epsilon_sign(prefix: &[u32], q: &[u32], target: &[u32]) -> PermSign {
    let mut q_sorted = q.to_vec();
    q_sorted.sort_unstable();
    let seq: Vec<u32> = prefix.iter().chain(q_sorted.iter()).copied().collect();
    let seq_set: BTreeSet<u32> = seq.iter().copied().collect();
    let target_set: BTreeSet<u32> = target.iter().copied().collect();
    if seq_set.len() != seq.len() || target_set.len() != target.len() || seq_set != target_set {
        return PermSign::Zero;
    }
    let order: Vec<u32> = target_set.into_iter().collect();
    let pos: Vec<usize> = seq.iter().map(|x| order.binary_search(x).unwrap_or(0)).collect();
    let mut inversions = 0usize;
    for i in 0..pos.len() {
        for k in i + 1..pos.len() {
            if pos[i] > pos[k] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        PermSign::Plus
    } else {
        PermSign::Minus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_transposition() {
        assert_eq!(epsilon_sign(&[2], &[1], &[1, 2]), PermSign::Minus);
    }

    #[test]
    fn identity_is_plus() {
        assert_eq!(epsilon_sign(&[1], &[2, 3], &[1, 2, 3]), PermSign::Plus);
        assert_eq!(epsilon_sign(&[], &[3, 1], &[1, 3]), PermSign::Plus);
    }

    #[test]
    fn repeats_and_mismatch_vanish() {
        assert_eq!(epsilon_sign(&[1], &[1], &[1, 2]), PermSign::Zero);
        assert_eq!(epsilon_sign(&[3], &[1], &[1, 2]), PermSign::Zero);
        assert_eq!(epsilon_sign(&[1], &[2], &[1, 1, 2]), PermSign::Zero);
    }

    proptest! {
        #[test]
        fn antisymmetric_in_prefix(a in 1u32..6, b in 1u32..6, q in prop::collection::btree_set(1u32..8, 0..4)) {
            let q: Vec<u32> = q.into_iter().collect();
            let mut target: Vec<u32> = q.iter().copied().chain([a, b]).collect();
            target.sort_unstable();
            target.dedup();
            let s1 = epsilon_sign(&[a, b], &q, &target);
            let s2 = epsilon_sign(&[b, a], &q, &target);
            prop_assert_eq!(s1, s2.flip());
        }
    }
}
