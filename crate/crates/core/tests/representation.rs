mod common;

use jay_repair::minilang::{enumerate_statement_locations, LineRegion};
use jay_repair::representation::{
    build_input, build_input_region, RepresentationConfig, END_BUGGY, START_BUGGY,
};
use proptest::prelude::*;

#[test]
fn every_seed_program_roundtrips_through_the_tokenizer() {
    let c = common::corpus();
    let v = common::vocab(&c);
    assert!(v.len() < 1000, "vocabulary has {} entries", v.len());
    for e in &c.entries {
        let ids = v.encode(&e.program.text);
        assert_eq!(v.decode(&ids), e.program.text, "{}", e.program.name);
        // lexeme-level tokens keep sequences well below one token per character
        assert!(ids.len() * 3 < e.program.text.len() * 2, "{} {} {}", e.program.name, ids.len(), e.program.text.len());
    }
}

#[test]
fn one_marker_pair_for_every_corpus_span() {
    let c = common::corpus();
    let v = common::vocab(&c);
    let cfg = RepresentationConfig::default();
    for e in &c.entries {
        for span in enumerate_statement_locations(&e.ast) {
            let built = build_input(&v, &e.program, span, &cfg).unwrap();
            assert!(built.tokens.len() <= cfg.max_input_len);
            let starts: Vec<_> = built.tokens.iter().enumerate().filter(|(_, &t)| t == START_BUGGY).collect();
            let ends: Vec<_> = built.tokens.iter().enumerate().filter(|(_, &t)| t == END_BUGGY).collect();
            assert_eq!((starts.len(), ends.len()), (1, 1));
            assert!(starts[0].0 < ends[0].0);
            let text = v.decode(&built.tokens);
            assert_eq!(text.matches("[START_BUGGY]").count(), 1);
            assert_eq!(text.matches("[END_BUGGY]").count(), 1);
            assert_eq!(built, build_input(&v, &e.program, span, &cfg).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn truncation_never_drops_the_region(
        idx in 0usize..30,
        start in 1usize..40,
        len in 0usize..4,
        n in 0usize..8,
        max_input in 8usize..120,
    ) {
        let c = common::corpus();
        let v = common::vocab(&c);
        let e = &c.entries[idx % c.entries.len()];
        let lines = e.program.line_count();
        let start = 1 + (start - 1) % lines;
        let len = len.min(lines + 1 - start);
        let region = LineRegion { start, len };
        let cfg = RepresentationConfig { context_lines: n, max_input_len: max_input, max_target_len: 64 };
        let body = v.encode(&jay_repair::minilang::join_lines(&region.split(&e.program.text).1));
        match build_input_region(&v, &e.program.text, region, &cfg) {
            Ok(built) => {
                prop_assert!(built.tokens.len() <= max_input);
                let s = built.tokens.iter().position(|&t| t == START_BUGGY).unwrap();
                let t = built.tokens.iter().position(|&t| t == END_BUGGY).unwrap();
                prop_assert_eq!(&built.tokens[s + 1..t], &body[..]);
                prop_assert_eq!(built.tokens.iter().filter(|&&t| t == START_BUGGY).count(), 1);
            }
            Err(_) => prop_assert!(body.len() + 2 > max_input),
        }
    }
}
