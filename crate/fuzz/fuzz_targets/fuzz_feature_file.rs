#![no_main]
use libfuzzer_sys::fuzz_target;
use mthfl::data::{encode_feature_file, parse_feature_file};

fuzz_target!(|data: &[u8]| {
    let Ok(parsed) = parse_feature_file(data) else { return };
    // anything accepted must re-encode to the same bytes
    let encoded = encode_feature_file(&parsed).expect("re-encode");
    assert_eq!(encoded, data);
});
