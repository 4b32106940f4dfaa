#![no_main]
use libfuzzer_sys::fuzz_target;
use rcmservo_core::view_graph::ViewGraph;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(g) = ViewGraph::from_json(s) {
            assert!(g.is_connected());
            let again = ViewGraph::from_json(&g.to_json()).expect("round trip");
            assert_eq!(again.to_json(), g.to_json());
        }
    }
});
