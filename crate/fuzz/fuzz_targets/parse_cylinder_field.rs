#![no_main]

use dirac_bvp::spectral::{build_partition, EigenMode, LambdaHatRule};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let modes: Vec<EigenMode> = [-2.0, -0.5, 0.0, 0.5, 2.0]
        .iter()
        .enumerate()
        .map(|(index, &lambda)| EigenMode { index, lambda })
        .collect();
    let partition = build_partition(&modes, 1.0, 1.0, &LambdaHatRule::NonNegative).unwrap();
    let _ = dirac_bvp::io::parse_cylinder_field(text, &partition);
});
