mod common;

use common::{gradient_config, gradient_errors, jittered};
use slm_core::{init_params, Backbone, ModelParams};

fn assert_close(params: &ModelParams<f64>) {
    let backbone = params.config.backbone;
    for (name, err) in gradient_errors(params) {
        println!("{backbone} {name:<24} rel err = {err:.2e}");
        assert!(err <= 1e-4, "{backbone}: {name} relative error {err:e}");
    }
}

#[test]
fn universal_transformer_gradients_match_finite_differences() {
    assert_close(&jittered(Backbone::UniversalTransformer));
}

#[test]
fn bilstm_gradients_match_finite_differences() {
    assert_close(&jittered(Backbone::Bilstm));
}

#[test]
fn gradients_match_at_initialization() {
    for backbone in [Backbone::UniversalTransformer, Backbone::Bilstm] {
        let p: ModelParams<f64> = init_params(&gradient_config(backbone)).unwrap();
        assert_close(&p);
    }
}
