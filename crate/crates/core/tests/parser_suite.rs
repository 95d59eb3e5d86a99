// SPDX-License-Identifier: Apache-2.0

//! Round trip over the Verilog fixture suite: parse, print, parse again.

use std::path::PathBuf;

use assertgen::rtl::parser::parse_source;
use assertgen::rtl::print::print_file;
use assertgen::rtl::tree::file_tree;
use assertgen::rtl::{parse_design, SourceFile};

fn suite() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata/verilog");
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "v"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).unwrap())
        })
        .collect()
}

#[test]
fn suite_has_at_least_ten_files() {
    assert!(suite().len() >= 10);
}

#[test]
fn print_then_reparse_is_structurally_equal() {
    for (name, src) in suite() {
        let first = parse_source(&name, &src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = print_file(&first.file);
        let second =
            parse_source(&name, &printed).unwrap_or_else(|e| panic!("{name} reprint: {e}\n{printed}"));
        let (a, b) = (file_tree(&first.file), file_tree(&second.file));
        assert!(a == b, "{name}: diff at {:?}\n{printed}", a.diff(&b));
        // Printing is a fixed point after one pass.
        assert_eq!(printed, print_file(&second.file), "{name}");
    }
}

#[test]
fn every_suite_file_elaborates() {
    for (name, src) in suite() {
        let design = parse_design(&[SourceFile::new(name.clone(), src)], None);
        assert!(design.is_ok(), "{name}: {:?}", design.err());
    }
}

#[test]
fn opaque_regions_warn_but_parse() {
    let (name, src) = suite().into_iter().find(|(n, _)| n.starts_with("12_")).unwrap();
    let parsed = parse_source(&name, &src).unwrap();
    assert!(parsed.warnings.len() >= 3, "{:?}", parsed.warnings);
}
