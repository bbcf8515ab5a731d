use crate::textkit::TokenSeq;

/// Token-level Levenshtein distance: the minimum number of single-token
/// insertions, deletions, and substitutions (unit costs) turning `a` into
/// `b`. Two-row dynamic program.
pub fn levenshtein(a: &TokenSeq, b: &TokenSeq) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let n = short.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut cur = vec![0usize; n + 1];
    for (j, &lb) in long.ids().iter().enumerate() {
        cur[0] = j + 1;
        for (i, &sa) in short.ids().iter().enumerate() {
            let sub = prev[i] + usize::from(sa != lb);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}
