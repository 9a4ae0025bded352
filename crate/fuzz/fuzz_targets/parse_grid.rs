#![no_main]

use libfuzzer_sys::fuzz_target;
use streamtree::bounds::{bounds_table, Grid};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = Grid::parse(text) {
        if grid.points().len() <= 64 {
            let _ = bounds_table(&grid);
        }
    }
});
