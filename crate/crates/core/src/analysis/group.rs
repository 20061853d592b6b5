use serde::{Deserialize, Serialize};

/// Largest number of groups [`cluster_nodes`] produces.
pub const MAX_GROUPS: usize = 4;
/// Relative gap between neighbouring values that starts a new group.
pub const SPLIT_GAP: f64 = 0.5;

/// Partition of nodes by one statistic, highest group first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGrouping {
    pub groups: Vec<Vec<String>>,
    /// Mean statistic per group.
    pub stats: Vec<f64>,
    pub labels: Vec<String>,
}

impl NodeGrouping {
    pub fn group_of(&self, node: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|n| n == node))
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

fn labels(n: usize) -> Vec<String> {
    let names: &[&str] = match n {
        0 => &[],
        1 => &["all"],
        2 => &["high", "low"],
        3 => &["leader", "high", "low"],
        _ => &["leader", "high", "mid", "low"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

fn relative_gap(hi: f64, lo: f64) -> f64 {
    let d = hi - lo;
    if d <= 0.0 {
        0.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        d / lo
    }
}

/// Splits nodes at large relative gaps between their sorted statistics.
pub fn cluster_nodes(values: &[(String, f64)]) -> NodeGrouping {
    let mut v: Vec<(String, f64)> = values.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut cuts: Vec<(usize, f64)> = (1..v.len())
        .map(|i| (i, relative_gap(v[i - 1].1, v[i].1)))
        .filter(|&(_, g)| g > SPLIT_GAP)
        .collect();
    if cuts.len() >= MAX_GROUPS {
        cuts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        cuts.truncate(MAX_GROUPS - 1);
    }
    let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c.0).collect();
    bounds.sort_unstable();
    bounds.push(v.len());
    let mut groups = Vec::new();
    let mut stats = Vec::new();
    let mut start = 0;
    for end in bounds {
        if end == start {
            continue;
        }
        let slice = &v[start..end];
        let mut ids: Vec<String> = slice.iter().map(|x| x.0.clone()).collect();
        ids.sort();
        groups.push(ids);
        stats.push(slice.iter().map(|x| x.1).sum::<f64>() / slice.len() as f64);
        start = end;
    }
    let labels = labels(groups.len());
    NodeGrouping { groups, stats, labels }
}
