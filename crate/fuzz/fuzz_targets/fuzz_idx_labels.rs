#![no_main]
use libfuzzer_sys::fuzz_target;
use mthfl::data::{parse_idx_labels, parse_idx_pair};

fuzz_target!(|data: &[u8]| {
    let _ = parse_idx_labels(data);
    // u16 LE prefix = length of the images part, rest is the labels part
    if data.len() < 2 {
        return;
    }
    let split = (u16::from_le_bytes([data[0], data[1]]) as usize).min(data.len() - 2);
    let (images, labels) = data[2..].split_at(split);
    if let Ok(m) = parse_idx_pair(images, labels) {
        assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
