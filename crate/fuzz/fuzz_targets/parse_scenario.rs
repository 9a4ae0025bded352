#![no_main]

use libfuzzer_sys::fuzz_target;
use streamtree::simulator::ChurnScenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sc) = ChurnScenario::parse(text) {
        let again = ChurnScenario::parse(&sc.serialize()).expect("serialized scenario parses");
        assert_eq!(again, sc);
    }
});
