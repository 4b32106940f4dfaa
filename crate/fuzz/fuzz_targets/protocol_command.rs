#![no_main]
use libfuzzer_sys::fuzz_target;
use rcmservo_bridge::protocol::{encode_command, parse_command};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok((seq, cmd)) = parse_command(s) {
            assert_eq!(parse_command(&encode_command(seq, &cmd)), Ok((seq, cmd)));
        }
    }
});
