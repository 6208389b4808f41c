#![no_main]

use libfuzzer_sys::fuzz_target;
use sqg_cli::tables::{
    parse_breakthroughs, parse_dominance, parse_kernel, parse_scan, parse_trajectory, Table,
};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = Table::parse(text) {
        let _ = table.render();
    }
    let _ = parse_trajectory(text);
    let _ = parse_breakthroughs(text);
    let _ = parse_dominance(text);
    let _ = parse_kernel(text);
    let _ = parse_scan(text);
});
