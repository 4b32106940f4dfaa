#![no_main]
use libfuzzer_sys::fuzz_target;
use rcmservo_core::simulator::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = ScenarioConfig::parse(s) {
            // accepted configs must re-serialize to an equivalent config
            let again = ScenarioConfig::parse(&cfg.to_toml()).expect("round trip");
            assert_eq!(again, cfg);
        }
    }
});
