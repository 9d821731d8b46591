use std::path::{Path, PathBuf};

use udplab::data::{load_idx, parse_idx_images, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
use udplab::{Error, ParseErrorKind};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn parse_kind(e: Error) -> ParseErrorKind {
    match e {
        Error::Parse { kind, .. } => kind,
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn fixture_parses_byte_exact() {
    let set = load_idx(&fixture("tiny-images-idx3-ubyte"), &fixture("tiny-labels-idx1-ubyte"), None).unwrap();
    assert_eq!(set.len(), 3);
    assert_eq!(set.dim(), 4);
    assert_eq!(set.labels(), &[7, 0, 9]);
    let raw = [[0u8, 255, 128, 64], [1, 2, 3, 4], [255, 254, 0, 17]];
    for (i, row) in raw.iter().enumerate() {
        let expected: Vec<f64> = row.iter().map(|&b| f64::from(b) / 255.0).collect();
        assert_eq!(set.point(i), expected.as_slice());
    }
}

#[test]
fn bad_magic_is_reported() {
    let e = load_idx(&fixture("bad-magic-images-idx3-ubyte"), &fixture("tiny-labels-idx1-ubyte"), None).unwrap_err();
    assert_eq!(
        parse_kind(e),
        ParseErrorKind::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: IDX_LABELS_MAGIC
        }
    );
}

#[test]
fn truncated_payload_is_reported() {
    let e = load_idx(&fixture("truncated-images-idx3-ubyte"), &fixture("tiny-labels-idx1-ubyte"), None).unwrap_err();
    assert_eq!(parse_kind(e), ParseErrorKind::Truncated { needed: 28, available: 23 });
}

#[test]
fn count_mismatch_is_reported() {
    let e = load_idx(&fixture("tiny-images-idx3-ubyte"), &fixture("short-labels-idx1-ubyte"), None).unwrap_err();
    assert_eq!(parse_kind(e), ParseErrorKind::CountMismatch { images: 3, labels: 2 });
}

#[test]
fn missing_file_is_an_io_error() {
    let e = load_idx(&fixture("absent"), &fixture("tiny-labels-idx1-ubyte"), None).unwrap_err();
    assert!(matches!(e, Error::Io { .. }), "{e}");
}

#[test]
fn header_shorter_than_sixteen_bytes() {
    let e = parse_idx_images(&[0, 0, 8, 3, 0, 0], Path::new("mem")).unwrap_err();
    assert!(matches!(parse_kind(e), ParseErrorKind::Truncated { .. }));
}
