use petriflow_bench::{functional, grid, short_sim, timed_functional, WAVEFRONT3_SOURCE};

#[test]
fn workloads_build_and_run() {
    assert_eq!(functional(3, false).num_transitions(), 21);
    let g = grid(2);
    let r = petriflow::simulate(&g.net, &g.timing, &short_sim(500)).unwrap();
    assert!(r.throughput.iter().all(|&x| x > 0.0));
    let m = timed_functional(1, 0.1);
    m.timing.validate(&m.net).unwrap();
    assert_eq!(petriflow::dsl::load(WAVEFRONT3_SOURCE, None).unwrap().net.num_places(), 48);
}
