//! The committed golden chain must reload to the exact values of the run
//! that produced it, on every platform this builds on.

use std::path::Path;

use balasso::persistence::load_chain;

#[test]
fn golden_chain_loads_to_expected_values() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_chain");
    let store = load_chain(&dir).expect("golden chain loads");
    assert_eq!(store.len(), 20);
    assert_eq!(store.meta.p, 2);

    let first = &store.draws()[0];
    assert_eq!(first.beta[0], 1.4474214909379919);
    assert_eq!(first.beta[1], -0.20091712846141688);
    assert_eq!(first.sigma2, 0.4851653992309144);
    assert_eq!(first.tau2[0], 8.54631956956097);
    assert_eq!(first.tau2[1], 0.48003376234955203);
    assert_eq!(first.lambda2[0], 0.026218850850160198);
    assert_eq!(first.lambda2[1], 1.4874785851813772);

    let last = &store.draws()[19];
    assert_eq!(last.beta[0], 1.8199839190781568);
    assert_eq!(last.beta[1], -0.03475876693942018);
    assert_eq!(last.sigma2, 0.3981470722717037);
    assert_eq!(last.lambda2[0], 0.004774012675487095);
    assert_eq!(last.lambda2[1], 0.5845592420490061);

    assert_eq!(
        store.content_hash(),
        "0b2913228a271c204f90698826345066b891224b33cc5bc4d5b3c7306afd6a54"
    );
}
