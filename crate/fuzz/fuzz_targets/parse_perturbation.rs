#![no_main]

use dirac_bvp::Grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let grid = Grid::new(1.0, 4).unwrap();
    let _ = dirac_bvp::io::parse_perturbation(text, grid, 2);
});
