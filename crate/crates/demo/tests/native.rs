use spectensor_demo::{rank_one_svg, selection_svg, sparse_fit_svg};

#[test]
fn sparse_fit_renders() {
    let svg = sparse_fit_svg(5.0, 0.01, 0.01, 0.01, 3);
    assert!(svg.starts_with("<svg"), "{svg}");
}

#[test]
fn bad_width_is_reported_not_panicked() {
    assert!(sparse_fit_svg(-1.0, 0.01, 0.01, 0.0, 0).starts_with("error:"));
    assert!(sparse_fit_svg(5.0, -1.0, 0.01, 0.0, 0).starts_with("error:"));
}

#[test]
fn selection_renders() {
    assert!(selection_svg(15, 5.0, 2).starts_with("<svg"));
    assert!(selection_svg(1000, 5.0, 2).starts_with("error:"));
}

#[test]
fn rank_one_renders() {
    let svg = rank_one_svg(1e-3, 20.0, 4);
    assert!(svg.starts_with("<svg"), "{svg}");
}
