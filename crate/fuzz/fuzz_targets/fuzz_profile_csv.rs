#![no_main]

use hyperbolic_bn::odecore::ProfileColumns;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cols) = ProfileColumns::parse_csv(data) {
        assert!(cols.validate().is_ok());
        let again = ProfileColumns::parse_csv(cols.to_csv_string().as_bytes()).expect("written profiles parse");
        assert_eq!(again.len(), cols.len());
    }
});
