#![no_main]

use libfuzzer_sys::fuzz_target;
use streamtree::simulator::{parse_trace, write_trace};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_trace(text) {
        let again = parse_trace(&write_trace(&records)).expect("written trace parses");
        assert_eq!(again, records);
    }
});
