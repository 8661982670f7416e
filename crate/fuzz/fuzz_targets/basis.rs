//! The augmentation basis grammar must never panic and must round-trip
//! through its own rendering, at any covariate dimensions.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ordaipw::basis::AugmentationBasis;

fuzz_target!(|data: &[u8]| {
    let [p, q, rest @ ..] = data else {
        return;
    };
    let Ok(spec) = std::str::from_utf8(rest) else {
        return;
    };
    let (p, q) = ((p % 8) as usize, (q % 8) as usize);
    if let Ok(basis) = AugmentationBasis::parse(spec, p, q) {
        let again = AugmentationBasis::parse(&basis.spec_string(), p, q)
            .expect("rendered spec must parse");
        assert_eq!(basis, again);
    }
});
