use proptest::prelude::*;
use revstrike::analyzer::{check_exploit_static, CheckError, Reason};
use revstrike::mock::{html_escape, Sanitizer};
use revstrike::payload::{builtin_payloads, Payload};

fn payload(id: &str) -> Payload {
    builtin_payloads().into_iter().find(|p| p.payload_id == id).unwrap()
}

fn page(inner: &str) -> String {
    format!("<!DOCTYPE html><html><head><title>r</title></head><body><table><tr><td>{inner}</td></tr></table></body></html>")
}

/// Hand-labelled reports: (case, html, payload id, confirmed, reason).
fn corpus() -> Vec<(&'static str, String, &'static str, bool, Reason)> {
    let poly = payload("polyglot").text;
    let nbsp = payload("polyglot-nbsp").text;
    let script = payload("script").text;
    vec![
        ("text sink", page(&poly), "polyglot", true, Reason::Executable),
        ("double-quoted attr", format!("<div title=\"{poly}\">x</div>"), "polyglot", true, Reason::Executable),
        ("single-quoted attr", format!("<a href='{poly}'>x</a>"), "polyglot", true, Reason::Executable),
        // The leading quote turns an unquoted value into a quoted one that runs to EOF.
        ("unquoted attr", format!("<div title={poly}>x</div>"), "polyglot", false, Reason::Inert),
        ("script in text", page(&script), "script", true, Reason::Executable),
        ("escaped text", page(&html_escape(&poly)), "polyglot", false, Reason::Escaped),
        ("escaped attr", format!("<div title=\"{}\">x</div>", html_escape(&poly)), "polyglot", false, Reason::Escaped),
        ("escaped script", page(&html_escape(&script)), "script", false, Reason::Escaped),
        ("textarea", format!("<textarea>{poly}</textarea>"), "polyglot", false, Reason::Inert),
        ("title", format!("<html><head><title>{script}</title></head></html>"), "script", false, Reason::Inert),
        ("template", format!("<template>{poly}</template>"), "polyglot", false, Reason::Inert),
        ("noscript", format!("<noscript>{script}</noscript>"), "script", false, Reason::Inert),
        ("comment", format!("<!-- {script} -->"), "script", false, Reason::Inert),
        ("plain-text script type", "<script type=\"text/plain\">alert(1)</script>".into(), "script", false, Reason::Absent),
        ("url-encoded", page(&Sanitizer::UrlEncode.apply(&poly)), "polyglot", false, Reason::Encoded),
        ("plus-encoded", page(&poly.replace(' ', "+")), "polyglot", false, Reason::Encoded),
        ("nbsp folded", page(&nbsp.replace('\u{a0}', " ")), "polyglot-nbsp", true, Reason::Executable),
        ("nbsp unfolded", page(&nbsp), "polyglot-nbsp", false, Reason::Inert),
        ("truncated", page(&Sanitizer::Truncate(20).apply(&poly)), "polyglot", false, Reason::Truncated),
        ("short prefix", page("\"'/><i"), "polyglot", false, Reason::Absent),
        ("absent", page("nothing to see"), "polyglot", false, Reason::Absent),
        ("img without src", "<img onerror='alert(1)'>".into(), "polyglot", false, Reason::Absent),
        ("other marker", "<img src=x onerror='alert(2)'>".into(), "polyglot", false, Reason::Absent),
        ("svg onload", "<svg onload='alert(1)'></svg>".into(), "script", true, Reason::Executable),
        ("body onload", "<body onload=\"alert(1)\">".into(), "script", true, Reason::Executable),
    ]
}

#[test]
fn labelled_corpus() {
    let mut failures = Vec::new();
    for (case, html, id, confirmed, reason) in corpus() {
        let v = check_exploit_static(html.as_bytes(), &payload(id)).unwrap();
        if v.confirmed != confirmed || v.reason != reason {
            failures.push(format!("{case}: got {} {}, want {confirmed} {reason}", v.confirmed, v.reason));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn unparseable_reports_are_typed_errors() {
    let p = payload("polyglot");
    assert!(matches!(check_exploit_static(b"", &p), Err(CheckError::ParseFailure(_))));
    let binary: Vec<u8> = (0..512u32).map(|i| (i * 37 % 256) as u8).collect();
    assert!(matches!(check_exploit_static(&binary, &p), Err(CheckError::ParseFailure(_))));
}

fn inert_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 .,:;-]{0,40}"
}

fn template() -> impl Strategy<Value = &'static str> {
    prop_oneof![
        Just("<td>{v}</td>"),
        Just("<p title=\"{v}\">x</p>"),
        Just("<a href='{v}'>{v}</a>"),
        Just("<span class=x>{v}</span>"),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// The polyglot escapes every text and quoted-attribute sink, whatever
    /// surrounds it.
    #[test]
    fn raw_polyglot_is_always_confirmed(pre in inert_text(), post in inert_text(), t in template()) {
        let v = format!("{pre}{}{post}", payload("polyglot").text);
        let html = page(&t.replace("{v}", &v));
        prop_assert!(check_exploit_static(html.as_bytes(), &payload("polyglot")).unwrap().confirmed);
    }

    /// Entity-escaping defeats every builtin payload in every sink.
    #[test]
    fn escaped_payloads_never_confirm(which in 0usize..3, pre in inert_text(), t in template()) {
        let p = &builtin_payloads()[which];
        let v = html_escape(&format!("{pre}{}", p.text));
        let html = page(&t.replace("{v}", &v));
        let verdict = check_exploit_static(html.as_bytes(), p).unwrap();
        prop_assert!(!verdict.confirmed);
        prop_assert_eq!(verdict.reason, Reason::Escaped);
    }

    /// Reports with no markup from the payload are absent, never confirmed.
    #[test]
    fn inert_reports_are_absent(body in inert_text(), which in 0usize..3) {
        let html = page(&body);
        let v = check_exploit_static(html.as_bytes(), &builtin_payloads()[which]).unwrap();
        prop_assert!(!v.confirmed);
        prop_assert_eq!(v.reason, Reason::Absent);
    }

    /// Arbitrary input yields a verdict or a typed error, deterministically.
    #[test]
    fn arbitrary_bytes_do_not_panic(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        let p = payload("polyglot");
        let a = check_exploit_static(&bytes, &p);
        prop_assert_eq!(a, check_exploit_static(&bytes, &p));
    }
}
