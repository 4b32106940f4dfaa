//! Replays the protocol fuzz seeds on stable.

use std::path::Path;

use rcmservo_bridge::protocol::{decode_server_message, encode_command, encode_server_message, parse_command};

fn seeds(target: &str) -> Vec<String> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed_"))
        .map(|p| std::fs::read_to_string(p).unwrap())
        .collect();
    out.sort();
    out
}

#[test]
fn protocol_command_seeds() {
    let mut accepted = 0;
    for text in seeds("protocol_command") {
        if let Ok((seq, cmd)) = parse_command(&text) {
            assert_eq!(parse_command(&encode_command(seq, &cmd)), Ok((seq, cmd)));
            accepted += 1;
        }
    }
    assert!(accepted >= 6);
}

#[test]
fn server_message_seeds() {
    for text in seeds("server_message") {
        let (seq, m) = decode_server_message(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        assert_eq!(decode_server_message(&encode_server_message(seq, &m)).unwrap(), (seq, m));
    }
}
