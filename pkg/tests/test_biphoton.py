import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airy_biphoton.biphoton import (
    BiphotonAmplitude,
    SourceSpec,
    apply_arm,
    coincidence_map,
    conditional_slice,
    gaussian_schmidt_spectrum,
    make_source,
    schmidt_number,
    schmidt_spectrum,
)
from airy_biphoton.grid import make_grid
from airy_biphoton.masks import AiryMaskSpec, airy_mask
from airy_biphoton.propagation import FourierLens, FreeSpace, Imaging, MaskElement, OpticalSystem

from oracles import double_gaussian_moments

WL = 810e-9
K = 2 * np.pi / WL
GRID = make_grid(512, 1.0)
# resolvable sigma range on GRID is [4 dq, 1 / (4 dx)] = [0.049, 0.25]


def moments(cmap):
    p = cmap.values
    x1, x2 = cmap.x1[:, None], cmap.x2[None, :]
    mean = lambda f: float(np.sum(p * f))  # noqa: E731
    return mean((x1 - x2) ** 2) - mean(x1 - x2) ** 2, mean((x1 + x2) ** 2) - mean(x1 + x2) ** 2


def test_equal_widths_give_product_state():
    state = make_source(SourceSpec("gaussian", 0.1, 0.1), GRID, GRID)
    s = schmidt_spectrum(state)
    assert np.sum(s > 1e-10 * s[0]) == 1
    assert s[0] == pytest.approx(1.0, abs=1e-12)


def test_unequal_widths_are_entangled():
    state = make_source(SourceSpec("gaussian", 0.06, 0.24), GRID, GRID)
    assert schmidt_number(schmidt_spectrum(state)) > 1.5


def test_momentum_anticorrelation():
    # Gaussian conditioning: E[q2 | q1] = -q1 (s-^2 - s+^2) / (s-^2 + s+^2)
    sp, sm = 0.05, 0.25
    g = make_grid(1024, 1.0)
    cmap = coincidence_map(make_source(SourceSpec("gaussian", sp, sm), g, g))
    slope = (sm**2 - sp**2) / (sm**2 + sp**2)
    for q1 in (-0.2, 0.0, 0.15):
        sl = conditional_slice(cmap, "signal", q1)
        mean = sl.values @ sl.coords
        assert mean == pytest.approx(-slope * sl.fixed_coordinate, abs=1e-9)


def test_ideal_epr_position_ridge():
    state = make_source(SourceSpec("ideal_epr", sigma_minus=0.25), GRID, GRID)
    cmap = coincidence_map(state.to_position())
    sp = 2 * GRID.dq
    slope = (0.25**2 - sp**2) / (0.25**2 + sp**2)
    for x1 in (-40.0, 0.0, 25.0):
        sl = conditional_slice(cmap, "signal", x1)
        assert sl.coords[np.argmax(sl.values)] == pytest.approx(slope * x1, abs=GRID.dx)
    var_minus, var_plus = moments(cmap)
    assert var_plus > 100 * var_minus


def test_ideal_epr_uses_narrowest_width():
    a = make_source(SourceSpec("ideal_epr", sigma_minus=0.2), GRID, GRID).amp
    q1, q2 = GRID.q[:, None], GRID.q[None, :]
    b = np.exp(-((q1 + q2) ** 2) / (16 * GRID.dq**2) - (q1 - q2) ** 2 / (4 * 0.2**2))
    assert np.allclose(a / a.max(), b / b.max(), rtol=0, atol=1e-14)


@pytest.mark.parametrize("sp, sm", [(0.01, 0.1), (0.1, 0.3), (0.1, 0.02)])
def test_unresolved_source_rejected(sp, sm):
    with pytest.raises(ValueError):
        make_source(SourceSpec("gaussian", sp, sm), GRID, GRID)


def test_source_spec_validation():
    with pytest.raises(ValueError):
        SourceSpec("gaussian", None, 0.1)
    with pytest.raises(ValueError):
        SourceSpec("squeezed", 0.1, 0.1)
    with pytest.raises(ValueError):
        SourceSpec("gaussian", -0.1, 0.1)


def test_identity_system_leaves_state():
    state = make_source(SourceSpec("gaussian", 0.06, 0.2), GRID, GRID).to_position()
    out = apply_arm(apply_arm(state, "signal", OpticalSystem(WL, [])), "idler", OpticalSystem(WL, []))
    assert np.array_equal(out.amp, state.amp)


def test_arm_operations_commute():
    g = make_grid(256, 20e-6)
    state = make_source(SourceSpec("gaussian", 4 * g.dq, 9 * g.dq), g, g)
    a = OpticalSystem(WL, [FreeSpace(0.05), FourierLens(0.3)])
    mask = airy_mask(AiryMaskSpec(4 * g.dx, K, a=0.05), g)
    b = OpticalSystem(WL, [MaskElement(mask), FreeSpace(0.02), Imaging(3.0)])
    ab = apply_arm(apply_arm(state, "signal", a), "idler", b)
    ba = apply_arm(apply_arm(state, "idler", b), "signal", a)
    assert np.max(np.abs(ab.amp - ba.amp)) < 1e-12 * np.max(np.abs(ab.amp))
    assert ab.grid1 == ba.grid1 and ab.grid2 == ba.grid2


def test_bad_arm_name():
    state = make_source(SourceSpec("gaussian", 0.1, 0.1), GRID, GRID)
    with pytest.raises(ValueError):
        apply_arm(state, "pump", OpticalSystem(WL, []))


def test_amplitude_validation():
    g = make_grid(8, 1.0)
    with pytest.raises(ValueError):
        BiphotonAmplitude(g, g, np.zeros((8, 8)))
    with pytest.raises(ValueError):
        BiphotonAmplitude(g, g, np.ones((8, 4)))
    bad = np.ones((8, 8), complex)
    bad[1, 2] = np.inf
    with pytest.raises(ValueError):
        BiphotonAmplitude(g, g, bad)


def test_map_ignores_phase():
    state = make_source(SourceSpec("gaussian", 0.06, 0.2), GRID, GRID)
    rng = np.random.default_rng(2)
    phase = np.exp(1j * rng.uniform(0, 2 * np.pi, state.amp.shape))
    other = BiphotonAmplitude(state.grid1, state.grid2, state.amp * phase, state.domains)
    assert np.allclose(coincidence_map(other).values, coincidence_map(state).values, rtol=1e-12, atol=0)


def test_product_map_factorizes():
    g = make_grid(64, 1.0)
    f = np.exp(-((g.x - 3) ** 2) / 30) * (1 + 0.1j * g.x)
    h = np.exp(-((g.x + 5) ** 2) / 50)
    cmap = coincidence_map(BiphotonAmplitude(g, g, np.outer(f, h)))
    m1, m2 = cmap.values.sum(axis=1), cmap.values.sum(axis=0)
    assert np.allclose(cmap.values, np.outer(m1, m2), atol=1e-15)
    a = conditional_slice(cmap, "signal", -10.0).values
    b = conditional_slice(cmap, "signal", 12.0).values
    assert np.allclose(a, b, atol=1e-14)


def test_position_map_widths():
    # |c(x1, x2)|^2 ~ exp(-s+^2 (x1+x2)^2 / 2 - s-^2 (x1-x2)^2 / 2)
    sp, sm = 0.06, 0.2
    cmap = coincidence_map(make_source(SourceSpec("gaussian", sp, sm), GRID, GRID).to_position())
    var_minus, var_plus = moments(cmap)
    assert var_minus == pytest.approx(1 / sm**2, rel=1e-6)
    assert var_plus == pytest.approx(1 / sp**2, rel=1e-6)
    ref = double_gaussian_moments(sp, sm)
    assert var_minus == pytest.approx(ref["var_x_minus"], rel=1e-3)


def test_conditional_variances():
    sp, sm = 0.06, 0.2
    state = make_source(SourceSpec("gaussian", sp, sm), GRID, GRID)
    qslice = conditional_slice(coincidence_map(state), "signal", 0.0)
    xslice = conditional_slice(coincidence_map(state.to_position()), "signal", 0.0)

    def var(sl):
        m = sl.values @ sl.coords
        return sl.values @ (sl.coords - m) ** 2

    assert var(xslice) == pytest.approx(1 / (sp**2 + sm**2), rel=1e-6)
    assert var(qslice) == pytest.approx(sp**2 * sm**2 / (sp**2 + sm**2), rel=1e-6)


def test_conditional_slice_off_grid_and_outside():
    cmap = coincidence_map(make_source(SourceSpec("gaussian", 0.06, 0.2), GRID, GRID).to_position())
    sl = conditional_slice(cmap, "idler", 10.3)
    assert sl.off_grid and sl.fixed_coordinate == 10.0
    assert sl.values.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        conditional_slice(cmap, "signal", 1e6)
    with pytest.raises(ValueError):
        conditional_slice(cmap, "both", 0.0)


def test_schmidt_closed_form_against_svd():
    # 64 x 64 double Gaussian built directly, with widths well inside the window
    q = np.linspace(-12, 12, 64, endpoint=False)
    sp, sm = 0.75, 3.0
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    amp = np.exp(-((Q1 + Q2) ** 2) / (4 * sp**2) - (Q1 - Q2) ** 2 / (4 * sm**2))
    g = make_grid(64, 1.0)
    s = schmidt_spectrum(BiphotonAmplitude(g, g, amp))
    ratio = sm / sp
    closed = gaussian_schmidt_spectrum(ratio, 10)
    assert np.allclose(s[:10], closed, atol=1e-6)
    assert schmidt_number(s) == pytest.approx((ratio + 1 / ratio) / 2, rel=1e-6)
    assert schmidt_number(closed) == pytest.approx(2.125, rel=1e-6)


def test_closed_form_symmetric_in_ratio():
    assert np.allclose(gaussian_schmidt_spectrum(4.0, 8), gaussian_schmidt_spectrum(0.25, 8))
    assert np.allclose(gaussian_schmidt_spectrum(1.0, 4), [1, 0, 0, 0])


def test_local_unitaries_keep_spectrum():
    g = make_grid(256, 20e-6)
    state = make_source(SourceSpec("gaussian", 4 * g.dq, 9 * g.dq), g, g)
    before = schmidt_spectrum(state)
    mask = airy_mask(AiryMaskSpec(4 * g.dx, K, a=0.0), g)
    sig = OpticalSystem(WL, [FreeSpace(0.02), FourierLens(0.3)])
    idl = OpticalSystem(WL, [MaskElement(mask), FreeSpace(0.01), Imaging(-2.0)])
    after = apply_arm(apply_arm(state, "signal", sig, check_sampling=False), "idler", idl, check_sampling=False)
    assert np.max(np.abs(schmidt_spectrum(after)[:40] - before[:40])) < 1e-10


@settings(max_examples=25, deadline=None)
@given(sp=st.floats(0.05, 0.25), sm=st.floats(0.05, 0.25), seed=st.integers(0, 2**31))
def test_map_normalized(sp, sm, seed):
    state = make_source(SourceSpec("gaussian", sp, sm), GRID, GRID)
    rng = np.random.default_rng(seed)
    sys = OpticalSystem(WL, [FreeSpace(rng.uniform(0, 5.0))])
    for s in (state, state.to_position(), apply_arm(state, "idler", sys, check_sampling=False)):
        assert coincidence_map(s).values.sum() == pytest.approx(1.0, abs=1e-12)
    assert state.norm() == pytest.approx(1.0, rel=1e-12)
