use mbsfn_sim::scheduler::CqiPolicy;
use mbsfn_sim::traffic::draw_offsets;
use mbsfn_sim::{run, ScenarioConfig, TransmissionMode};

/// One MBSFN cell with two static cars, no shadowing, perfect decoding at
/// CQI 15: every CAM fits into the first MBSFN subframe after generation.
fn two_car_cell() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.layout.mbsfn_rings = 0;
    c.users.per_cell = 2;
    c.users.cars_per_cell = 2;
    c.users.mobility = false;
    c.channel.shadowing_std_db = 0.0;
    c.radio.error_free = true;
    c.radio.reservation_cqi = 15;
    c.run.cqi_policy = CqiPolicy::Fixed(15);
    c.run.n_tti = 1000;
    c.run.seed = 17;
    c
}

#[test]
fn hand_traced_multicast_schedule() {
    let c = two_car_cell();
    let r = run(&c).unwrap();
    assert_eq!(r.reserved_subframes, 1);
    assert_eq!(r.latency.n_users, 2);
    assert_eq!(r.latency.n_packets, 9);
    let offsets = draw_offsets(2, 100, c.run.seed);
    for (i, &off) in offsets.iter().enumerate() {
        // Only subframe 1 of each frame is an MBSFN subframe.
        let wait = (11 - off % 10) % 10;
        for s in 0..r.latency.n_packets {
            let e = r.latency.get(s, i);
            assert!(!e.censored);
            assert_eq!(e.latency_tti, wait + 1, "source {i} packet {s} (offset {off})");
        }
    }
    assert_eq!(r.packets_superseded, 0);
    for t in &r.trace {
        assert!(t.mbsfn_rbs == 0 || t.tti % 10 == 1);
        assert!(t.mbsfn_rbs % 5 == 0);
    }
}

#[test]
fn hand_traced_unicast_schedule() {
    let mut c = two_car_cell();
    c.run.mode = TransmissionMode::UnicastBaseline;
    let r = run(&c).unwrap();
    assert_eq!(r.reserved_subframes, 0);
    for e in &r.latency.entries {
        assert_eq!(e.latency_tti, 1);
    }
    // 2400 bits at 120 x 5.5547 bits per RB: 4 RBs per copy.
    assert!(r.trace.iter().all(|t| t.cam_rbs % 4 == 0));
    assert_eq!(r.trace.iter().map(|t| t.cam_rbs).sum::<u32>(), 4 * r.packets_generated as u32);
}

fn small_area() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.run.n_tti = 600;
    c
}

#[test]
fn identical_seed_identical_record() {
    let c = small_area();
    assert_eq!(run(&c).unwrap(), run(&c).unwrap());
}

#[test]
fn resources_are_conserved() {
    for mode in [TransmissionMode::Multicast, TransmissionMode::UnicastBaseline] {
        let mut c = small_area();
        c.run.mode = mode;
        let r = run(&c).unwrap();
        for t in &r.trace {
            assert!(t.max_cell_rbs <= 25);
            if mode == TransmissionMode::Multicast && t.mbsfn_rbs > 0 {
                assert!(t.mbsfn_subframe);
                assert_eq!(t.ordinary_rbs, 0);
            }
        }
        assert!(r.ordinary_throughput_mbps.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn adaptive_never_needs_more_rbs_than_its_bound() {
    let mut c = small_area();
    c.run.cqi_policy = CqiPolicy::Adaptive { bound: 3 };
    let r = run(&c).unwrap();
    assert!(r.trace.iter().any(|t| t.mbsfn_rbs > 0));
    for t in &r.trace {
        assert!(t.mbsfn_rbs <= t.mbsfn_rbs_reference, "TTI {}", t.tti);
        assert!(t.mbsfn_cqi == 0 || t.mbsfn_cqi >= 3);
    }
}

#[test]
fn overload_is_flagged() {
    let mut c = small_area();
    c.traffic.packet_bytes = 600;
    let r = run(&c).unwrap();
    assert_eq!(r.reserved_subframes, 6);
    assert!(r.required_subframes > 6);
    assert!(r.summary.congested);
    assert!(!r.warnings.is_empty());
}
