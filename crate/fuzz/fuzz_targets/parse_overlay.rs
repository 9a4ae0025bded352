#![no_main]

use libfuzzer_sys::fuzz_target;
use streamtree::overlay::{check_property1, check_property2, parse_snapshot, write_snapshot};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(g) = parse_snapshot(text) {
        let _ = check_property1(&g);
        let _ = check_property2(&g);
        let text = write_snapshot(&g);
        let again = parse_snapshot(&text).expect("written snapshot parses");
        assert_eq!(write_snapshot(&again), text);
    }
});
