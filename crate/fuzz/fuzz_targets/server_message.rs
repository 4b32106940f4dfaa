#![no_main]
use libfuzzer_sys::fuzz_target;
use rcmservo_bridge::protocol::decode_server_message;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = decode_server_message(s);
    }
});
