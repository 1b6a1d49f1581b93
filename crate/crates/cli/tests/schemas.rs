mod common;

use common::*;
use serde_json::Value;

fn load(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(data(name)).unwrap()).unwrap()
}

#[test]
fn every_schema_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        jsonschema::JSONSchema::compile(&schema(&name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        n += 1;
    }
    assert_eq!(n, 7);
}

#[test]
fn shipped_inputs_match_input_schemas() {
    for f in ["rotating.json", "jordan.json", "order_one.json", "order_two.json", "anisotropic.json", "no_diffusion.json", "ou1d.json"] {
        assert_valid("model.schema.json", &load(f));
    }
    for f in ["kinetic_b1.json", "kinetic_b2.json"] {
        assert_valid("kinetic_params.schema.json", &load(f));
    }
    for f in ["shift.json", "zero.json"] {
        assert_valid("perturbation.schema.json", &load(f));
    }
}

#[test]
fn schemas_reject_wrong_shapes() {
    let s = schema("certificate.schema.json");
    let compiled = jsonschema::JSONSchema::compile(&s).unwrap();
    assert!(!compiled.is_valid(&serde_json::json!({"P": [[1.0]], "mu": 0.5})));
    let s = schema("perturbation.schema.json");
    let compiled = jsonschema::JSONSchema::compile(&s).unwrap();
    assert!(!compiled.is_valid(&serde_json::json!({"kind": "shift_difference"})));
}
