use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyfairsinkhorn::pyfairsinkhorn;

fn run(code: &str) -> PyResult<()> {
    pyo3::append_to_inittab!(pyfairsinkhorn);
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("fs", py.import("pyfairsinkhorn")?)?;
        py.run(&std::ffi::CString::new(code).unwrap(), Some(&globals), None)
    })
}

#[test]
fn metrics_and_errors_cross_the_boundary() {
    run(r#"
assert fs.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
r = fs.evaluate([0.9, 0.2, 0.7, 0.1], [1, 0, 1, 0], [0, 0, 1, 1], "g", level_names=["x", "y"])
assert r["attribute_name"] == "g"
try:
    fs.sinkhorn_distance([0.0], [1.0], cost="cubic")
    raise AssertionError("expected ValueError")
except ValueError as e:
    assert "cubic" in str(e)
try:
    fs.RunConfig.from_toml("seed = 1\n[bogus]\n")
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#)
    .unwrap();
}
