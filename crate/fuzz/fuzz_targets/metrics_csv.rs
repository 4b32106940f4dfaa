#![no_main]
use libfuzzer_sys::fuzz_target;
use rcmservo_core::simulator::read_metrics_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_metrics_csv(data);
});
