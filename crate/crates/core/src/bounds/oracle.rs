use super::{BoundError, DegreeProfile};

/// A minimum-depth tree, as the out-degrees of its nodes in preorder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub depth: u32,
    pub preorder_degrees: Vec<usize>,
}

impl Witness {
    /// Depth of the tree encoded by a preorder degree word, root at depth 0.
    pub fn depth_of(word: &[usize]) -> Option<u32> {
        let mut open: Vec<u32> = vec![0];
        let mut max = 0;
        for &deg in word {
            let d = open.pop()?;
            max = max.max(d);
            open.extend(std::iter::repeat_n(d + 1, deg));
        }
        open.is_empty().then_some(max)
    }
}

/// Exhaustive minimum depth over every rooted tree with the given out-degree counts.
pub fn brute_force_min_depth(p: &DegreeProfile) -> Result<Witness, BoundError> {
    if p.n > 15 {
        return Err(BoundError::TooLarge(p.n));
    }
    let counts = p.counts().ok_or_else(|| BoundError::Unrealizable("fractions are not multiples of 1/n".into()))?;
    if counts.iter().sum::<u64>() != p.n || p.n == 0 {
        return Err(BoundError::Unrealizable("counts do not sum to n".into()));
    }
    let edges: u64 = counts.iter().enumerate().map(|(j, &c)| j as u64 * c).sum();
    if edges + 1 != p.n {
        return Err(BoundError::Unrealizable(format!("{edges} edges for {} nodes", p.n)));
    }
    let mut search = Search {
        remaining: counts.iter().map(|&c| c as usize).collect(),
        left: p.n as usize,
        open: vec![0],
        word: Vec::new(),
        best: None,
    };
    search.run(0);
    let (depth, preorder_degrees) = search.best.expect("a realizable profile has a tree");
    Ok(Witness { depth, preorder_degrees })
}

struct Search {
    remaining: Vec<usize>,
    left: usize,
    open: Vec<u32>,
    word: Vec<usize>,
    best: Option<(u32, Vec<usize>)>,
}

impl Search {
    fn run(&mut self, max: u32) {
        if self.left == 0 {
            if self.best.as_ref().is_none_or(|b| max < b.0) {
                self.best = Some((max, self.word.clone()));
            }
            return;
        }
        let Some(d) = self.open.pop() else { return };
        let max = max.max(d);
        if self.best.as_ref().is_none_or(|b| max < b.0) {
            for deg in (0..self.remaining.len()).rev() {
                if self.remaining[deg] == 0 {
                    continue;
                }
                let open_after = self.open.len() + deg;
                if (self.left > 1 && open_after == 0) || open_after > self.left - 1 {
                    continue;
                }
                self.remaining[deg] -= 1;
                self.left -= 1;
                self.word.push(deg);
                let base = self.open.len();
                self.open.extend(std::iter::repeat_n(d + 1, deg));
                self.run(max);
                self.open.truncate(base);
                self.word.pop();
                self.left += 1;
                self.remaining[deg] += 1;
            }
        }
        self.open.push(d);
    }
}

/// Every out-degree profile of a tree with `1..=n_max` nodes and degrees at
/// most `l_max`, trimmed to its largest used degree (at least 1).
pub fn realizable_profiles(n_max: u64, l_max: usize) -> Vec<DegreeProfile> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        let mut counts = vec![0u64; l_max + 1];
        fill(n, l_max, 0, n, &mut counts, &mut out);
    }
    out
}

fn fill(n: u64, l_max: usize, j: usize, left: u64, counts: &mut Vec<u64>, out: &mut Vec<DegreeProfile>) {
    if j == l_max {
        counts[j] = left;
        let edges: u64 = counts.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
        if edges + 1 == n {
            let top = counts.iter().rposition(|&c| c > 0).unwrap_or(0).max(1);
            out.push(DegreeProfile::from_counts(&counts[..=top]));
        }
        return;
    }
    for c in 0..=left {
        counts[j] = c;
        fill(n, l_max, j + 1, left - c, counts, out);
    }
    counts[j] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_binary_and_chain() {
        let w = brute_force_min_depth(&DegreeProfile::from_counts(&[4, 0, 3])).unwrap();
        assert_eq!(w.depth, 2);
        assert_eq!(Witness::depth_of(&w.preorder_degrees), Some(2));
        assert_eq!(brute_force_min_depth(&DegreeProfile::from_counts(&[1, 4])).unwrap().depth, 4);
    }

    #[test]
    fn unrealizable_rejected() {
        assert!(matches!(
            brute_force_min_depth(&DegreeProfile::from_counts(&[3, 0, 3])),
            Err(BoundError::Unrealizable(_))
        ));
    }

    #[test]
    fn profile_count_small() {
        // n=1: {1}; n=2: {1,1}; n=3: {1,2,0} and {2,0,1}.
        assert_eq!(realizable_profiles(3, 2).len(), 4);
    }
}
