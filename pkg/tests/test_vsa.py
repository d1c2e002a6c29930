import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olivesynth.errors import DomainError, FormatError, ShapeError
from olivesynth.vsa import (
    BatchContext, adversarial_loss, bind, cosine_distance, cyclic_loss, random_codebook, read_matrix, total_loss,
    write_matrix,
)

seeds = st.integers(0, 2**32 - 1)


def bipolar(seed, n=3, d=64):
    return random_codebook(seed, n, d)


def vector_with_distance(x: np.ndarray, dist: float, seed: int) -> np.ndarray:
    """Unit-norm-free construction of a vector at cosine distance ``dist`` from ``x``."""
    rng = np.random.default_rng(seed)
    e = x / np.linalg.norm(x)
    r = rng.normal(size=x.shape)
    r -= (r @ e) * e
    r /= np.linalg.norm(r)
    cos = 1.0 - dist
    return cos * e + math.sqrt(1.0 - cos * cos) * r


# --- bind / distance ---

@given(seeds)
def test_bind_properties(seed):
    u, v, w = bipolar(seed)
    np.testing.assert_array_equal(bind(u, v), bind(v, u))
    np.testing.assert_array_equal(bind(bind(u, v), w), bind(u, bind(v, w)))
    np.testing.assert_array_equal(bind(bind(u, v), v), u)


def test_bound_vector_is_dissimilar():
    u, v = random_codebook(3, 2, 4096)
    b = bind(u, v)
    assert abs(1 - cosine_distance(b, u)) < 0.1 and abs(1 - cosine_distance(b, v)) < 0.1


def test_cosine_distance_cases():
    x = np.array([1.0, 2.0, 3.0])
    assert cosine_distance(x, x) == 0.0
    assert cosine_distance(x, -x) == 2.0
    assert cosine_distance([1.0, 0], [0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        cosine_distance([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ShapeError):
        cosine_distance([1.0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        bind(np.ones((2, 2)), np.ones((2, 2)))


# --- adversarial ---

def test_constant_half_discriminator():
    x = list(random_codebook(0, 5, 128))
    ctx = BatchContext(v_x=x, v_y=x, v_gx=x, f_vx=x, d_y=lambda v: 0.5)
    assert abs(adversarial_loss(ctx) - 3 * math.log(0.5)) < 1e-12


def test_single_terms():
    v = [np.ones(4)]
    assert adversarial_loss(BatchContext(v_y=v, d_y=lambda _: 0.8)) == pytest.approx(math.log(0.8), abs=1e-15)
    assert adversarial_loss(BatchContext(v_gx=v, d_y=lambda _: 0.8)) == pytest.approx(math.log(0.2), abs=1e-15)
    assert adversarial_loss(BatchContext()) == 0.0


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_degenerate_probability_raises(p):
    with pytest.raises(DomainError):
        adversarial_loss(BatchContext(v_y=[np.ones(4)], d_y=lambda _: p))


def test_mismatched_mapper_batch():
    with pytest.raises(ShapeError):
        adversarial_loss(BatchContext(v_x=[np.ones(3)], f_vx=[np.ones(3)] * 2))


@given(st.floats(0.05, 0.9), st.floats(0.01, 0.09))
def test_adversarial_monotone(p, dp):
    v = [np.ones(4)]
    lo = adversarial_loss(BatchContext(v_y=v, d_y=lambda _: p))
    hi = adversarial_loss(BatchContext(v_y=v, d_y=lambda _: p + dp))
    assert hi > lo
    lo = adversarial_loss(BatchContext(v_gx=v, d_y=lambda _: p))
    hi = adversarial_loss(BatchContext(v_gx=v, d_y=lambda _: p + dp))
    assert hi < lo


# --- cyclic / total ---

def test_cyclic_identity_and_antipodal():
    x = [random_codebook(1, 3, 64), random_codebook(2, 3, 64)]
    assert cyclic_loss(x, x) == 0.0
    assert cyclic_loss(x, [-a for a in x]) == 2.0


def test_cyclic_two_samples_mean():
    rng = np.random.default_rng(4)
    x1, x2 = rng.normal(size=(1, 32)), rng.normal(size=(1, 32))
    c1, c2 = vector_with_distance(x1[0], 0.2, 1), vector_with_distance(x2[0], 0.4, 2)
    assert cyclic_loss([x1, x2], [c1[None], c2[None]]) == pytest.approx(0.3, abs=1e-12)


def test_cyclic_shape_errors():
    with pytest.raises(ShapeError):
        cyclic_loss([np.ones((2, 3))], [])
    with pytest.raises(ShapeError):
        cyclic_loss([], [])
    with pytest.raises(ShapeError):
        cyclic_loss([np.ones((2, 3))], [np.ones((3, 3))])


def test_total_closed_form():
    x = list(random_codebook(0, 4, 64))
    ctx = BatchContext(v_x=x, v_y=x, v_gx=x, f_vx=x, v_cycle=x, d_y=lambda v: 0.5)
    assert abs(total_loss(ctx) - 3 * math.log(0.5)) < 1e-12
    assert total_loss(BatchContext(v_x=x, v_cycle=[-v for v in x])) == 2.0


@given(seeds)
@settings(max_examples=30)
def test_total_is_additive_and_order_free(seed):
    rng = np.random.default_rng(seed)
    n, d = 6, 48
    x = list(rng.normal(size=(n, d)))
    w = rng.normal(size=d)

    def disc(v):
        return 1.0 / (1.0 + math.exp(-float(np.tanh(v @ w / d))))

    ctx = BatchContext(v_x=x, v_y=list(rng.normal(size=(n, d))), v_gx=list(rng.normal(size=(n, d))),
                       f_vx=list(rng.normal(size=(n, d))), v_cycle=list(rng.normal(size=(n, d))), d_y=disc)
    total = total_loss(ctx)
    assert abs(total - (adversarial_loss(ctx) + cyclic_loss(ctx.v_x, ctx.v_cycle))) < 1e-12
    perm = rng.permutation(n)
    shuffled = BatchContext(
        v_x=[ctx.v_x[i] for i in perm], v_y=[ctx.v_y[i] for i in perm], v_gx=[ctx.v_gx[i] for i in perm],
        f_vx=[ctx.f_vx[i] for i in perm], v_cycle=[ctx.v_cycle[i] for i in perm], d_y=disc,
    )
    assert abs(total_loss(shuffled) - total) < 1e-12


# --- codebook / IO ---

def test_codebook_near_orthogonal():
    cb = random_codebook(42, 100, 4096)
    assert set(np.unique(cb)) == {-1.0, 1.0}
    cos = cb @ cb.T / 4096
    np.fill_diagonal(cos, 0)
    assert np.abs(cos).max() < 0.1
    np.testing.assert_array_equal(cb, random_codebook(42, 100, 4096))
    with pytest.raises(ShapeError):
        random_codebook(0, 1, 0)


def test_matrix_roundtrip(tmp_path):
    m = np.random.default_rng(0).normal(size=(5, 7))
    write_matrix(tmp_path / "m.txt", m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.txt"), m)
    (tmp_path / "c.txt").write_text("# header\n1 2\n\n3 4 # tail\n")
    np.testing.assert_array_equal(read_matrix(tmp_path / "c.txt"), [[1, 2], [3, 4]])
    (tmp_path / "bad.txt").write_text("1 2\n3\n")
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "bad.txt")
    (tmp_path / "nan.txt").write_text("1 x\n")
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "nan.txt")
