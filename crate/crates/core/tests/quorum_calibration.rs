mod common;

use chainscope::analysis::{cluster_nodes, CandidateId};
use chainscope::metrics::{series, Aggregate, MetricName, Selector, XAxis};
use chainscope::model::Role;
use chainscope::netsim::CapKind;
use common::*;

#[test]
fn leader_and_cpu_knees() {
    check_quorum_knees().unwrap();
}

#[test]
fn rejections_and_pinned_pools() {
    check_quorum_rejections().unwrap();
}

#[test]
fn executable_cap_is_the_culprit() {
    check_quorum_cap_culprit().unwrap();
}

#[test]
fn rejections_stay_under_one_percent_before_the_knee() {
    let rp = chainscope::analysis::rejection_and_pool(&quorum().frame).unwrap();
    for &(x, share) in &rp.rejected_share {
        if x <= 1500.0 {
            assert!(share < 0.01, "{:.2}% rejected at {x}", share * 100.0);
        }
    }
}

/// Mean CPU per node over the lower half of the sweep.
fn low_rate_cpu() -> Vec<(String, f64)> {
    let s = quorum();
    let rates = s.frame.rates();
    let low = &rates[..rates.len() / 2];
    s.frame
        .nodes_with_role(Role::QuorumNode)
        .into_iter()
        .map(|n| {
            let c = series(&s.frame, &Selector::metric(MetricName::CpuMean).nodes(&[&n]).steps(low), Aggregate::Mean, XAxis::Rate)
                .unwrap();
            let m = c.iter().map(|p| p.1).sum::<f64>() / c.len() as f64;
            (n, m)
        })
        .collect()
}

#[test]
fn cpu_groups_leader_submission_nodes_and_the_rest() {
    let g = cluster_nodes(&low_rate_cpu());
    let ids = |i: usize| {
        let mut v = g.groups[i].clone();
        v.sort();
        v
    };
    assert_eq!(g.len(), 3, "{:?}", g.groups);
    assert_eq!(ids(0), ["node0"]);
    assert_eq!(ids(1), ["node1", "node2", "node3"]);
    assert_eq!(ids(2), ["node4", "node5", "node6", "node7"]);
}

#[test]
fn pool_caps_rank_behind_the_executable_cap() {
    let rep = &quorum().report;
    let exec = rep.rank_of(CandidateId::Cap(CapKind::ClientExecutableCap)).unwrap();
    assert_eq!(exec, 0);
    for k in [CapKind::PoolExecCap, CapKind::PoolNonexecCap] {
        if let Some(r) = rep.rank_of(CandidateId::Cap(k)) {
            assert!(r > exec);
        }
    }
}
