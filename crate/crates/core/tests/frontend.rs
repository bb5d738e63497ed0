use formlang_core::frontend::{parse, print_module};
use proptest::prelude::*;

const POISSON: &str = include_str!("../../cli/tests/corpus/poisson_h1.form");
const HYPER: &str = include_str!("../../cli/tests/corpus/hyperelasticity.form");

fn spans_in_bounds(src: &str) -> Result<(), TestCaseError> {
    for d in parse(src).diagnostics {
        prop_assert!(
            d.span.start <= d.span.end && d.span.end <= src.len(),
            "{:?} in {:?}",
            d,
            src
        );
        prop_assert!(src.is_char_boundary(d.span.start) && src.is_char_boundary(d.span.end));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_text_never_panics(src in "\\PC{0,80}") {
        spans_in_bounds(&src)?;
    }

    #[test]
    fn token_soup_never_panics(
        toks in prop::collection::vec(
            prop::sample::select(vec![
                "u", "v", "f", "=", "*", "+", "-", "/", "**", "(", ")", "[", "]", ",", "dx",
                "ds(1)", "grad", "inner", "1", "2.5", "\n", "i", "as_vector", "avg", "'+'",
                "derivative", ":", "{", "}", "\\\n", "#c\n",
            ]),
            0..40,
        )
    ) {
        let body: String = toks.concat();
        spans_in_bounds(&format!("{POISSON}\n{body}"))?;
    }

    // Deleting a slice of a valid module gives diagnostics, not panics.
    #[test]
    fn truncated_modules_report_in_bounds(cut in 0usize..HYPER.len(), len in 0usize..20) {
        let (a, b) = (cut, (cut + len).min(HYPER.len()));
        if HYPER.is_char_boundary(a) && HYPER.is_char_boundary(b) {
            spans_in_bounds(&format!("{}{}", &HYPER[..a], &HYPER[b..]))?;
        }
    }
}

#[test]
fn printed_corpus_reparses_to_the_same_forms() {
    for src in [POISSON, HYPER] {
        let m = parse(src).module;
        let again = parse(&print_module(&m));
        assert!(!again.has_errors(), "{:?}", again.diagnostics);
        for (name, form) in m.exported_forms() {
            assert_eq!(again.module.form(name), Some(form), "{name}");
        }
    }
}

#[test]
fn dangling_operator_points_at_the_star() {
    let src = "P = FiniteElement(\"Lagrange\", triangle, 1)\nu = TrialFunction(P)\nv = TestFunction(P)\na = v*dx + u*v*\n";
    let p = parse(src);
    assert!(p.has_errors());
    let d = &p.diagnostics[0];
    assert_eq!(d.kind, "SyntaxError");
    assert!(d.span.start >= src.rfind('*').unwrap(), "{d:?}");
}
