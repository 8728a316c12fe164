"""Core operator tests: tensor validation, the bilinear map, Jacobians,
iteration, and the tensor file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gonosomal.operator import (
    AnnihilatedStateError,
    DimensionMismatchError,
    GonosomalOperator,
    InheritanceTensor,
    PopulationState,
    StopReason,
    TensorFormatError,
    as_state_vector,
    dump_tensor,
    hemophilia_operator,
    hemophilia_tensor,
    load_tensor,
)

OP = hemophilia_operator()

# one generation from the all-ones state, as exact fractions
ALL_ONES_IMAGE = (3 / 4, 13 / 12, 19 / 12, 7 / 12)
ALL_ONES_NORMALIZED = (3 / 16, 13 / 48, 19 / 48, 7 / 48)

finite_coord = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
state_strategy = st.tuples(finite_coord, finite_coord, finite_coord, finite_coord)


# ---------------------------------------------------------------------------
# tensor construction
# ---------------------------------------------------------------------------


def test_hemophilia_rows_sum_to_one_in_float():
    rows = hemophilia_tensor().rows()
    assert rows.shape == (4, 4)
    assert (rows.sum(axis=1) == 1.0).all()


def test_hemophilia_coefficients():
    t = hemophilia_tensor()
    # healthy x healthy: all offspring healthy, split between the sexes
    assert t.gamma_f[0, 0, 0] == 0.5
    assert t.gamma_m[0, 0, 0] == 0.5
    # healthy female x carrier male: daughters are carriers
    assert t.gamma_f[0, 1, 1] == 0.5
    assert t.gamma_m[0, 1, 0] == 0.5
    # carrier female x healthy male: four equally likely outcomes
    assert t.gamma_f[1, 0, 0] == t.gamma_f[1, 0, 1] == 0.25
    assert t.gamma_m[1, 0, 0] == t.gamma_m[1, 0, 1] == 0.25
    # carrier x carrier: the affected daughter genotype is lethal
    assert t.gamma_f[1, 1, 0] == 0.0
    assert t.gamma_f[1, 1, 1] == pytest.approx(1 / 3)
    assert t.gamma_m[1, 1, 0] == pytest.approx(1 / 3)
    assert t.gamma_m[1, 1, 1] == pytest.approx(1 / 3)
    assert t.is_nonnegative()


def test_tensor_shape_validation():
    gf = np.zeros((2, 2, 2))
    gm = np.zeros((2, 2, 2))
    with pytest.raises(ValueError):
        InheritanceTensor(gf, gm)  # rows sum to 0, not 1
    with pytest.raises(ValueError, match="shape"):
        InheritanceTensor(np.zeros((2, 3, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        InheritanceTensor(np.full((1, 1, 1), np.nan), np.full((1, 1, 1), 1.0))


def test_tensor_row_sum_tolerance():
    gf = np.full((1, 1, 1), 0.5)
    gm = np.full((1, 1, 1), 0.5 + 1e-6)
    with pytest.raises(ValueError):
        InheritanceTensor(gf, gm)
    # loosening the tolerance admits the same data
    t = InheritanceTensor(gf, gm, rowsum_tol=1e-5)
    assert t.n == 1 and t.nu == 1


def test_tensor_is_immutable():
    t = hemophilia_tensor()
    with pytest.raises(ValueError):
        t.gamma_f[0, 0, 0] = 1.0


# ---------------------------------------------------------------------------
# the bilinear map
# ---------------------------------------------------------------------------


def test_all_ones_image():
    np.testing.assert_allclose(
        OP.apply_raw(np.ones(4)), ALL_ONES_IMAGE, rtol=0, atol=5e-16
    )


def test_all_ones_normalized_image():
    np.testing.assert_allclose(
        OP.apply_normalized(np.ones(4)), ALL_ONES_NORMALIZED, rtol=0, atol=5e-16
    )


def test_accepts_population_state_and_lists():
    ps = PopulationState.from_vector(np.ones(4), 2, 2)
    np.testing.assert_array_equal(OP.apply_raw(ps), OP.apply_raw([1, 1, 1, 1]))


def test_batch_matches_scalar_rows():
    rng = np.random.default_rng(5)
    batch = rng.uniform(-4, 4, size=(64, 4))
    whole = OP.apply_raw(batch)
    for row, img in zip(batch, whole):
        np.testing.assert_array_equal(OP.apply_raw(row), img)


def test_wrong_arity_rejected():
    with pytest.raises(DimensionMismatchError):
        OP.apply_raw([1.0, 2.0, 3.0])


@settings(deadline=None, max_examples=200)
@given(state_strategy)
def test_sum_product_identity(state):
    s = np.array(state)
    fs, ms = OP.block_sums(s)
    residual = OP.sum_product_residual(s)
    assert residual <= 1e-12 * max(1.0, abs(fs * ms))


@settings(deadline=None, max_examples=200)
@given(state_strategy, st.floats(min_value=0.1, max_value=5.0))
def test_female_block_scaling(state, a):
    s = np.array(state)
    scaled = s.copy()
    scaled[:2] *= a
    base = OP.apply_raw(s)
    np.testing.assert_allclose(
        OP.apply_raw(scaled), a * base, rtol=0, atol=1e-12 * max(1.0, np.abs(base).max())
    )


def test_normalized_scale_invariance():
    s = np.array([0.4, 0.3, 0.8, 0.1])
    scaled = s * np.array([7.0, 7.0, 0.25, 0.25])
    np.testing.assert_allclose(
        OP.apply_normalized(scaled), OP.apply_normalized(s), rtol=0, atol=1e-14
    )


def test_annihilated_state_raises():
    with pytest.raises(AnnihilatedStateError):
        OP.apply_normalized([0.0, 0.0, 1.0, 1.0])
    with pytest.raises(AnnihilatedStateError):
        OP.apply_normalized([1.0, 1.0, 0.0, 0.0])


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------


def test_jacobian_raw_matches_finite_differences():
    rng = np.random.default_rng(11)
    s = rng.uniform(-3, 3, size=(20, 4))
    h = 1e-6
    fd = np.empty((20, 4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd[:, :, j] = (OP.apply_raw(s + e) - OP.apply_raw(s - e)) / (2 * h)
    assert np.abs(OP.jacobian_raw(s) - fd).max() <= 1e-6


def test_jacobian_normalized_matches_finite_differences():
    rng = np.random.default_rng(12)
    s = rng.uniform(0.2, 2.0, size=(20, 4))
    h = 1e-6
    fd = np.empty((20, 4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fd[:, :, j] = (OP.apply_normalized(s + e) - OP.apply_normalized(s - e)) / (2 * h)
    assert np.abs(OP.jacobian_normalized(s) - fd).max() <= 1e-6


def test_jacobian_eigenvalues_at_known_fixed_points():
    at_origin = np.linalg.eigvals(OP.jacobian_raw(np.zeros(4)))
    assert np.abs(at_origin).max() == 0.0
    at_pair = np.sort(np.linalg.eigvals(OP.jacobian_raw(np.array([2.0, 0, 2.0, 0]))).real)
    np.testing.assert_allclose(at_pair, [-0.5, 0.0, 1.0, 2.0], rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# iteration
# ---------------------------------------------------------------------------


def test_iterate_converges_to_origin():
    rec = OP.iterate([1.0, 1.0, 1.0, 1.0])
    assert rec.stop_reason is StopReason.CONVERGED
    assert rec.steps_taken == 15
    assert np.abs(rec.limit).max() <= 1e-30
    assert rec.step_indices[0] == 0 and rec.step_indices[-1] == 15


def test_iterate_diverges_fast():
    rec = OP.iterate([3.0, 0.0, 3.0, 0.0])
    assert rec.stop_reason is StopReason.DIVERGED
    assert rec.steps_taken == 7
    assert rec.limit is None


def test_iterate_exhausts_budget_and_thins():
    rec = OP.iterate([0.3, 0.2, 0.4, 0.1], mode="normalized", budget=3000)
    assert rec.stop_reason is StopReason.BUDGET_EXHAUSTED
    idx = set(rec.step_indices.tolist())
    assert rec.step_indices[-1] == 3000
    assert 1000 in idx and 1010 in idx
    assert 1001 not in idx
    assert len(rec.step_indices) == 1201


def test_iterate_normalized_from_annihilated_raises():
    with pytest.raises(AnnihilatedStateError) as err:
        OP.iterate([0.0, 0.0, 0.5, 0.5], mode="normalized")
    assert err.value.step == 0


def test_iterate_fixed_point_is_immediate():
    rec = OP.iterate([2.0, 0.0, 2.0, 0.0])
    assert rec.stop_reason is StopReason.CONVERGED
    assert rec.steps_taken == 1
    np.testing.assert_array_equal(rec.limit, [2.0, 0.0, 2.0, 0.0])


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------


def test_population_state_round_trip():
    ps = PopulationState.from_vector(np.array([1.0, 2.0, 3.0, 4.0]), 2, 2)
    np.testing.assert_array_equal(ps.female, [1.0, 2.0])
    np.testing.assert_array_equal(ps.male, [3.0, 4.0])
    np.testing.assert_array_equal(ps.vector, [1.0, 2.0, 3.0, 4.0])


def test_population_state_rejects_non_finite():
    with pytest.raises(ValueError):
        PopulationState.from_vector(np.array([np.inf, 0.0, 1.0, 1.0]), 2, 2)


def test_as_state_vector_batch_shape():
    batch = np.zeros((7, 3, 4))
    assert as_state_vector(batch, 4).shape == (7, 3, 4)


# ---------------------------------------------------------------------------
# tensor files
# ---------------------------------------------------------------------------


def test_dump_load_round_trip(tmp_path):
    for mode in ("raw", "normalized"):
        path = tmp_path / f"{mode}.tensor"
        path.write_text(dump_tensor(hemophilia_tensor(), mode=mode))
        loaded, loaded_mode = load_tensor(path)
        assert loaded_mode == mode
        np.testing.assert_array_equal(loaded.gamma_f, hemophilia_tensor().gamma_f)
        np.testing.assert_array_equal(loaded.gamma_m, hemophilia_tensor().gamma_m)


def test_load_tensor_defaults_to_raw_without_mode_line(tmp_path):
    text = dump_tensor(hemophilia_tensor(), mode="raw")
    body = "\n".join(l for l in text.splitlines() if not l.startswith("mode"))
    path = tmp_path / "nomode.tensor"
    path.write_text(body + "\n")
    _, mode = load_tensor(path)
    assert mode == "raw"


def test_load_tensor_accepts_comments_and_blank_lines(tmp_path):
    text = dump_tensor(hemophilia_tensor(), mode="raw")
    lines = ["# crossing table", ""]
    for line in text.splitlines():
        lines.extend([line, "# next"])
    path = tmp_path / "commented.tensor"
    path.write_text("\n".join(lines) + "\n")
    loaded, _ = load_tensor(path)
    np.testing.assert_array_equal(loaded.rows(), hemophilia_tensor().rows())


def test_load_tensor_rejects_bad_row_sum(tmp_path):
    path = tmp_path / "bad.tensor"
    path.write_text("2 2\n0.5 0 0.4 0\n0 0.5 0.5 0\n0.25 0.25 0.25 0.25\n0 0.4 0.3 0.3\n")
    with pytest.raises(TensorFormatError):
        load_tensor(path)


def test_load_tensor_rejects_negative_in_normalized_mode(tmp_path):
    path = tmp_path / "signed.tensor"
    path.write_text(
        "mode normalized\n2 2\n1.5 0 -0.5 0\n0 0.5 0.5 0\n"
        "0.25 0.25 0.25 0.25\n0 0.4 0.3 0.3\n"
    )
    with pytest.raises(TensorFormatError):
        load_tensor(path)


def test_load_tensor_rejects_wrong_row_count(tmp_path):
    path = tmp_path / "short.tensor"
    path.write_text("2 2\n0.5 0 0.5 0\n")
    with pytest.raises(TensorFormatError):
        load_tensor(path)


def test_load_tensor_rejects_garbage(tmp_path):
    path = tmp_path / "garbage.tensor"
    path.write_text("garbage here\n")
    with pytest.raises(TensorFormatError):
        load_tensor(path)
