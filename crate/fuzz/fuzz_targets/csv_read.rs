#![no_main]

use knapp_lab::table::{read_rows, write_rows};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_rows(data) else { return };
    let mut buf = Vec::new();
    write_rows(&mut buf, &rows).unwrap();
    let back = read_rows(buf.as_slice()).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!(a.lambda.to_bits(), b.lambda.to_bits());
        assert_eq!(a.k, b.k);
        assert_eq!(a.status, b.status);
    }
});
