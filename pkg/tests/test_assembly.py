import numpy as np
import pytest

from memfit import (
    Dataset,
    ErrorSpec,
    FixedPrecision,
    GammaPrior,
    ModelSpec,
    PriorSet,
    SpecError,
    assemble_joint_model,
    parse_formula,
    resolve_priors,
    simulate_missing_scenario,
    validate_spec,
)
from memfit.model import validation_errors


def missing_spec(priors=None):
    return ModelSpec(
        formula_moi=parse_formula("y ~ x + z1 + z2"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="x", types=("missing",))],
        formula_imp=[parse_formula("x ~ z1 + z2")],
        formula_mis=[parse_formula("m ~ z1 + z2 + x")],
        priors=priors or PriorSet(),
    )


def repeats_dataset(n=40, k=2, seed=0, with_missing=False):
    rng = np.random.default_rng(seed)
    smoking = (rng.random(n) < 0.5).astype(float)
    sbp = 0.2 * smoking + rng.normal(size=n) * 0.2
    cols = {"disease": (rng.random(n) < 0.3).astype(float), "smoking": smoking}
    for r in range(k):
        cols[f"sbp{r + 1}"] = sbp + 0.1 * rng.normal(size=n)
    data = Dataset(cols)
    if with_missing:
        for r in range(k):
            col = data.column(f"sbp{r + 1}")
            col[:3] = np.nan
    return data


def sbp_repeats_spec():
    return ModelSpec(
        formula_moi=parse_formula("disease ~ sbp + smoking"),
        family_moi="binomial",
        errors=[ErrorSpec(variable="sbp", types=("classical",), repeated=True)],
        formula_imp=[parse_formula("sbp ~ smoking")],
        priors=PriorSet(
            coefficients={"beta.sbp": (0.0, 0.01)},
            precisions={
                "tau.sbp.classical": GammaPrior(100, 1),
                "tau.sbp.imp": GammaPrior(10, 1),
            },
            initial_precisions={"tau.sbp.classical": 100.0, "tau.sbp.imp": 10.0},
        ),
    )


def test_missing_scenario_spec_validates_clean():
    data, _ = simulate_missing_scenario(seed=3, n=200)
    diags = validate_spec(missing_spec(), data)
    assert validation_errors(diags) == []


def test_error_variable_not_in_moi():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    spec = missing_spec()
    spec.formula_moi = parse_formula("y ~ z1")
    diags = validate_spec(spec, data)
    assert any("not in model of interest" in m for m in validation_errors(diags))


def test_repeated_needs_two_columns():
    data = repeats_dataset(k=1)
    spec = sbp_repeats_spec()
    diags = validate_spec(spec, data)
    assert any("at least 2 repeat columns" in m for m in validation_errors(diags))


def test_missing_mask_outside_error_variables():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    data.column("z1")[0] = np.nan
    diags = validate_spec(missing_spec(), data)
    assert any("z1" in m for m in validation_errors(diags))


def test_all_missing_error_variable():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    data.column("x")[:] = np.nan
    diags = validate_spec(missing_spec(), data)
    assert any("no observed values" in m for m in validation_errors(diags))


def test_scaling_length_mismatch():
    data = repeats_dataset()
    spec = sbp_repeats_spec()
    spec.errors[0].scaling = np.ones(3)
    diags = validate_spec(spec, data)
    assert any("classical_error_scaling" in m for m in validation_errors(diags))


def test_masked_entries_require_missing_type():
    data = repeats_dataset(with_missing=True)
    spec = sbp_repeats_spec()
    diags = validate_spec(spec, data)
    assert any("'missing' is not" in m for m in validation_errors(diags))


def test_fully_observed_missing_type_warns():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    full = Dataset(
        {name: np.nan_to_num(data.column(name), nan=0.0) for name in data.names}
    )
    diags = validate_spec(missing_spec(), full)
    assert validation_errors(diags) == []
    assert any(
        d.severity == "warning" and "fully observed" in d.message for d in diags
    )


def test_imputation_formula_required_for_classical():
    data = repeats_dataset()
    spec = sbp_repeats_spec()
    spec.formula_imp = [None]
    diags = validate_spec(spec, data)
    assert any("imputation formula required" in m for m in validation_errors(diags))


def test_error_variable_cannot_drive_other_imputation():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    spec = missing_spec()
    spec.formula_imp = [parse_formula("x ~ z1 + x_true")]
    diags = validate_spec(spec, data)
    assert validation_errors(diags) == []  # x_true is error-free, so legal
    spec2 = ModelSpec(
        formula_moi=parse_formula("y ~ x + w + z1"),
        family_moi="gaussian",
        errors=[
            ErrorSpec(variable="x", types=("missing",)),
            ErrorSpec(variable="w", types=("missing",)),
        ],
        formula_imp=[parse_formula("x ~ w"), parse_formula("w ~ z1")],
    )
    diags2 = validate_spec(spec2, data)
    assert any(
        "covariates there must be observed without error" in m
        for m in validation_errors(diags2)
    )


def test_binomial_response_must_be_binary():
    data = repeats_dataset()
    data.column("disease")[0] = 2.0
    diags = validate_spec(sbp_repeats_spec(), data)
    assert any("0/1" in m for m in validation_errors(diags))


def test_assemble_sbp_repeats_levels_and_registry():
    data = repeats_dataset()
    model = assemble_joint_model(sbp_repeats_spec(), data)
    assert model.level_names == ["moi", "sbp.classical.1", "sbp.classical.2", "sbp.imp"]
    for name in ("beta.sbp", "tau.sbp.classical", "tau.sbp.imp"):
        assert name in model.parameter_names
    assert "tau.moi" not in model.parameter_names  # binomial: no dispersion
    assert model.sections["beta.sbp"] == "error_coefficients"
    assert model.sections["beta.smoking"] == "moi"
    assert model.sections["alpha.sbp.smoking"] == "imputation"


def test_assemble_berkson_only():
    rng = np.random.default_rng(1)
    n = 30
    data = Dataset(
        {
            "y": rng.normal(size=n),
            "w": rng.normal(size=n),
            "z": rng.normal(size=n),
        }
    )
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ w + z"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="w", types=("berkson",))],
    )
    model = assemble_joint_model(spec, data)
    assert model.level_names == ["moi", "w.berkson"]
    assert not any(name.startswith("alpha.") for name in model.parameter_names)
    assert "tau.w.berkson" in model.parameter_names
    assert "tau.w.imp" not in model.parameter_names


def test_assemble_missing_scenario_levels():
    data, _ = simulate_missing_scenario(seed=3, n=100)
    model = assemble_joint_model(missing_spec(), data)
    assert model.level_names == ["moi", "x.pinned", "x.imp", "x.mis"]
    for name in ("gamma.x", "gamma.x.0", "gamma.x.z1", "gamma.x.z2"):
        assert name in model.parameter_names
    assert "tau.x.classical" not in model.parameter_names  # pinned, not classical
    assert model.sections["gamma.x"] == "error_coefficients"
    assert model.sections["gamma.x.z2"] == "missingness"
    ev = model.error_vars[0]
    assert ev.pinned
    np.testing.assert_array_equal(ev.missing_mask, data.mask("x"))


def test_level_count_invariant():
    cases = []
    data, _ = simulate_missing_scenario(seed=3, n=60)
    cases.append((missing_spec(), data))
    cases.append((sbp_repeats_spec(), repeats_dataset()))
    for spec, dataset in cases:
        model = assemble_joint_model(spec, dataset)
        expected = 1
        for err, f_imp, f_mis in zip(spec.errors, spec.formula_imp, spec.formula_mis):
            if err.has("classical"):
                cols = (
                    dataset.repeat_columns(err.variable) if err.repeated else [err.variable]
                )
                expected += len(cols)
            elif err.has("missing"):
                expected += 1  # pinned level stands in for the classical one
            if err.has("berkson"):
                expected += 1
            if f_imp is not None:
                expected += 1
            if f_mis is not None:
                expected += 1
        assert len(model.level_names) == expected


def test_assembly_deterministic():
    data, _ = simulate_missing_scenario(seed=3, n=80)
    a = assemble_joint_model(missing_spec(), data)
    b = assemble_joint_model(missing_spec(), data)
    assert a.parameter_names == b.parameter_names
    assert a.level_names == b.level_names
    assert a.sections == b.sections


def test_registry_partition_into_sections():
    data, _ = simulate_missing_scenario(seed=3, n=60)
    model = assemble_joint_model(missing_spec(), data)
    assert set(model.sections) == set(model.parameter_names)
    assert len(model.parameter_names) == len(set(model.parameter_names))


def test_resolve_priors_defaults_and_overrides():
    data = repeats_dataset()
    model = assemble_joint_model(sbp_repeats_spec(), data)
    priors = model.priors
    assert priors.coefficients["beta.sbp"] == (0.0, 0.01)
    assert priors.coefficients["alpha.sbp.smoking"] == (0.0, 0.001)  # default
    assert priors.precisions["tau.sbp.classical"] == GammaPrior(100, 1)
    assert priors.initial["tau.sbp.classical"] == 100.0
    assert priors.initial["tau.sbp.imp"] == 10.0


def test_resolve_priors_initial_defaults_to_prior_mean():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    spec = missing_spec(
        priors=PriorSet(precisions={"tau.x.imp": GammaPrior(4.0, 2.0)})
    )
    model = assemble_joint_model(spec, data)
    assert model.priors.initial["tau.x.imp"] == pytest.approx(2.0)


def test_fixed_precision_on_binomial_moi_rejected():
    data = repeats_dataset()
    spec = sbp_repeats_spec()
    spec.priors.precisions["tau.moi"] = FixedPrecision(1.0)
    diags = validate_spec(spec, data)
    assert any("binomial" in m for m in validation_errors(diags))
    with pytest.raises(SpecError):
        assemble_joint_model(spec, data)


def test_unknown_coefficient_prior_rejected():
    data, _ = simulate_missing_scenario(seed=3, n=50)
    spec = missing_spec(priors=PriorSet(coefficients={"beta.nope": (0.0, 1.0)}))
    with pytest.raises(SpecError, match="unknown parameter"):
        assemble_joint_model(spec, data)


def test_four_level_classical_berkson_structure():
    rng = np.random.default_rng(2)
    n = 40
    r = rng.normal(size=n)
    data = Dataset(
        {
            "y": rng.normal(size=n),
            "x": r + 0.1 * rng.normal(size=n),
            "z": rng.normal(size=n),
        }
    )
    spec = ModelSpec(
        formula_moi=parse_formula("y ~ x + z"),
        family_moi="gaussian",
        errors=[ErrorSpec(variable="x", types=("classical", "berkson"))],
        formula_imp=[parse_formula("x ~ z")],
    )
    model = assemble_joint_model(spec, data)
    assert model.level_names == ["moi", "x.classical", "x.berkson", "x.imp"]
    ev = model.error_vars[0]
    assert ev.two_latent and not ev.pinned
    assert {"tau.x.classical", "tau.x.berkson", "tau.x.imp"} <= set(
        model.parameter_names
    )
