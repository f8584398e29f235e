#![no_main]

use hyperbolic_bn::odecore::RadialProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(profile) = RadialProfile::from_json(text) {
        let again = RadialProfile::from_json(&profile.to_json()).expect("written profiles parse");
        assert_eq!(again.len(), profile.len());
    }
});
