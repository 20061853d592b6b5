mod common;

use chainscope::model::Architecture;
use common::*;

#[test]
fn every_fabric_stage_is_found_when_capped() {
    let (n, misses) = injection_misses(Architecture::Fabric).unwrap();
    assert_eq!(n, 9);
    assert!(misses.is_empty(), "{misses:?}");
}

#[test]
fn every_quorum_stage_is_found_when_capped() {
    let (n, misses) = injection_misses(Architecture::Quorum).unwrap();
    assert_eq!(n, 8);
    assert!(misses.is_empty(), "{misses:?}");
}
