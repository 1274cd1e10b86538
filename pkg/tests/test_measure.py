import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ouq.measure import (
    BatchSupport,
    EvaluationError,
    Marginal,
    MeasureError,
    ParamLayout,
    ProductMeasure,
    effective_support,
    event_probability,
    expectation,
)


def marginals(lo=-5.0, hi=5.0, max_atoms=4):
    @st.composite
    def build(draw):
        k = draw(st.integers(1, max_atoms))
        pos = draw(st.lists(st.floats(lo, hi), min_size=k, max_size=k))
        raw = draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k))
        total = sum(raw)
        return Marginal(tuple(pos), tuple(r / total for r in raw), (lo, hi))

    return build()


class TestMarginal:
    def test_rejects_length_mismatch(self):
        with pytest.raises(MeasureError):
            Marginal((0.0, 1.0), (1.0,))

    def test_rejects_negative_weight(self):
        with pytest.raises(MeasureError):
            Marginal((0.0, 1.0), (1.5, -0.5))

    def test_rejects_bad_total(self):
        with pytest.raises(MeasureError):
            Marginal((0.0, 1.0), (0.5, 0.4))

    def test_renormalizes_rounding_noise(self):
        m = Marginal((0.0, 1.0), (0.5, 0.5 + 5e-10))
        assert sum(m.weights) == pytest.approx(1.0, abs=1e-15)

    def test_rejects_atom_outside_interval(self):
        with pytest.raises(MeasureError):
            Marginal((2.0,), (1.0,), (0.0, 1.0))

    def test_moments(self):
        m = Marginal((0.0, 2.0), (0.25, 0.75))
        assert m.mean() == pytest.approx(1.5)
        assert m.variance() == pytest.approx(0.75)

    def test_dirac(self):
        m = Marginal.dirac(0.3)
        assert m.size == 1 and m.mean() == 0.3 and m.variance() == 0.0


class TestProductMeasure:
    def test_support_order_and_weights(self):
        pm = ProductMeasure((Marginal((0.0, 1.0), (0.2, 0.8)), Marginal((5.0, 6.0, 7.0), (0.5, 0.25, 0.25))))
        pts, w = pm.support()
        assert pm.support_size == 6
        assert pts[:3].tolist() == [[0.0, 5.0], [0.0, 6.0], [0.0, 7.0]]
        assert w.tolist() == pytest.approx([0.1, 0.05, 0.05, 0.4, 0.2, 0.2])

    def test_empty_rejected(self):
        with pytest.raises(MeasureError):
            ProductMeasure(())

    @given(st.lists(marginals(), min_size=1, max_size=3))
    @settings(max_examples=60, deadline=None)
    def test_product_expectation_factorizes(self, margs):
        pm = ProductMeasure(tuple(margs))
        got = expectation(pm, lambda x: np.prod(x, axis=1))
        assert got == pytest.approx(np.prod([m.mean() for m in margs]), abs=1e-9)

    @given(st.lists(marginals(), min_size=1, max_size=3))
    @settings(max_examples=40, deadline=None)
    def test_json_round_trip(self, margs):
        pm = ProductMeasure(tuple(margs))
        back = ProductMeasure.from_json(pm.to_json())
        for a, b in zip(pm.marginals, back.marginals):
            assert a.positions == b.positions
            assert a.weights == pytest.approx(b.weights, abs=1e-15)

    def test_event_probability(self):
        pm = ProductMeasure((Marginal((0.0, 1.0), (0.3, 0.7)),))
        assert event_probability(pm, lambda x: x[:, 0] > 0.5) == pytest.approx(0.7)

    def test_evaluation_failure_names_point(self):
        pm = ProductMeasure((Marginal((0.0, 1.0), (0.5, 0.5)),))
        with pytest.raises(EvaluationError) as err:
            expectation(pm, lambda x: 1.0 / x[:, 0] if np.all(x[:, 0] != 0) else np.log(x[:, 0]))
        assert err.value.point is not None and tuple(err.value.point) == (0.0,)

    def test_malformed_json(self):
        with pytest.raises(MeasureError):
            ProductMeasure.from_dict({"marginals": [{"positions": [1.0]}]})


class TestLayout:
    def test_sizes_and_pinning(self):
        lay = ParamLayout((2, 1, 3), ((0, 1), (0, 2), (5, 6)), pinned={1: 1.5})
        assert lay.size == 2 + 2 + 3 + 3
        assert lay.bounds.shape == (lay.size, 2)
        pm = lay.decode(np.zeros(lay.size) + 0.5)
        assert pm.marginals[1].positions == (1.5,)

    def test_encode_decode_round_trip(self):
        lay = ParamLayout((2, 3), ((0, 1), (-1, 1)))
        pm = ProductMeasure((Marginal((0.2, 0.9), (0.3, 0.7)), Marginal((-0.5, 0.0, 0.5), (0.2, 0.5, 0.3))))
        back = lay.decode(lay.encode(pm))
        for a, b in zip(pm.marginals, back.marginals):
            assert a.positions == pytest.approx(b.positions)
            assert a.weights == pytest.approx(b.weights)

    def test_decode_clamps_positions(self):
        lay = ParamLayout((1,), ((0, 1),))
        assert lay.decode(np.array([3.0])).marginals[0].positions == (1.0,)

    def test_pinned_outside_interval(self):
        with pytest.raises(MeasureError):
            ParamLayout((1,), ((0, 1),), pinned={0: 2.0})

    def test_batch_matches_single_measure(self):
        lay = ParamLayout((2, 2), ((0, 1), (0, 1)))
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (5, lay.size))
        batch = BatchSupport(lay, X)
        for n in range(5):
            pts, w = lay.decode(X[n]).support()
            assert batch.points[n] == pytest.approx(pts)
            assert batch.weights[n] == pytest.approx(w)


class TestEffectiveSupport:
    def test_drops_light_atoms_and_merges_close_ones(self):
        pm = ProductMeasure(
            (
                Marginal((0.0, 1.0, 0.5), (0.5, 0.49995, 0.00005)),
                Marginal((0.3, 0.30001), (0.5, 0.5)),
            )
        )
        assert effective_support(pm, 1e-4, 1e-3, ((0, 1), (0, 1))) == (2, 1)

    def test_tolerance_validation(self):
        with pytest.raises(MeasureError):
            effective_support(ProductMeasure((Marginal.dirac(0.0),)), tol=1.0)
