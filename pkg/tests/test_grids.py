import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaplab.grids import (
    GridFunction,
    Region,
    SpaceTimeGrid,
    anisotropic_norm,
    energy_norm,
    full_domain_region,
    gradient,
    initial_slice_mean_power,
    origin_cell_mean_radial_power,
    read_binary,
    steklov_average,
    sup_oscillation,
    write_binary,
    write_csv,
)


def small_grid(n=1, h=1 / 16, dt=1 / 64, t_end=0.25):
    return SpaceTimeGrid(n=n, extent=1.0, h=h, dt=dt, t_start=0.0, t_end=t_end)


def test_grid_validation():
    with pytest.raises(ValueError):
        SpaceTimeGrid(n=4, extent=1.0, h=0.1, dt=0.1, t_start=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        SpaceTimeGrid(n=1, extent=1.0, h=0.3, dt=0.1, t_start=0.0, t_end=1.0)  # 2/h not integer
    with pytest.raises(ValueError):
        SpaceTimeGrid(n=1, extent=1.0, h=0.5, dt=0.3, t_start=0.0, t_end=1.0)  # span/dt


def test_grid_nodes():
    g = small_grid(h=1 / 4)
    assert g.nodes_per_axis == 9
    assert np.allclose(g.axis_nodes()[[0, -1]], [-1.0, 1.0])
    assert g.num_times == 17


def test_gridfunction_shape_and_immutability():
    g = small_grid()
    u = GridFunction(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        bad = np.zeros(g.shape)
        bad[0, 0] = np.inf
        GridFunction(g, bad)
    with pytest.raises((ValueError, AttributeError)):
        u.values[0, 0] = 1.0


# ---------------------------------------------------------------------------
# gradient

def test_gradient_exact_on_affine():
    g = small_grid(n=2, h=1 / 8, dt=1 / 16)
    u = GridFunction.from_callable(g, lambda x, y, t: 0.75 * x - 0.25 * y + 0.1)
    for ix in [(3, 4), (7, 2), (10, 10)]:
        grad = gradient(u, ix, 2)
        assert grad == pytest.approx([0.75, -0.25], abs=1e-13)


def test_gradient_zero_on_constant():
    g = small_grid()
    u = GridFunction(g, np.full(g.shape, 3.2))
    assert gradient(u, (5,), 1) == pytest.approx([0.0], abs=1e-14)


def test_gradient_rejects_boundary():
    g = small_grid()
    u = GridFunction(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        gradient(u, (0,), 1)
    with pytest.raises(ValueError):
        gradient(u, (g.nodes_per_axis - 1,), 1)


def test_gradient_second_order_on_quadratic():
    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        g = small_grid(h=h)
        u = GridFunction.from_callable(g, lambda x, t: x * x)
        xq = 0.25
        ix = g.space_index((xq,))
        errs.append(abs(gradient(u, ix, 1)[0] - 2 * xq))
    # central differences are exact on quadratics up to roundoff
    assert max(errs) < 1e-12


def test_gradient_interpolation_off_node():
    g = small_grid(n=1, h=1 / 32)
    u = GridFunction.from_callable(g, lambda x, t: 0.4 * x + 1.0)
    assert u.gradient_at((0.013,), 0.1)[0] == pytest.approx(0.4, abs=1e-10)


# ---------------------------------------------------------------------------
# anisotropic norm

def test_norm_constant_on_unit_measure_region():
    g = small_grid(h=1 / 16, dt=1 / 64, t_end=1.0)
    f = GridFunction(g, np.full(g.shape, 0.37))
    region = Region(center=(0.0,), half_widths=(0.5,), t_start=0.0, t_end=1.0)
    for q, r in [(2.0, 2.0), (3.0, 5.0), (1.0, 7.0)]:
        assert anisotropic_norm(f, q, r, region) == pytest.approx(0.37, rel=1e-12)


def test_norm_separable_product():
    g = small_grid(h=1 / 64, dt=1 / 64, t_end=1.0)
    f = GridFunction.from_callable(g, lambda x, t: np.cos(x) * (1.0 + t))
    region = Region(center=(0.0,), half_widths=(1.0,), t_start=0.0, t_end=1.0)
    q, r = 3.0, 4.0
    got = anisotropic_norm(f, q, r, region)
    xs = np.linspace(-1, 1, 20001)
    gq = np.trapezoid(np.abs(np.cos(xs)) ** q, xs) ** (1 / q)
    ts = np.linspace(0, 1, 20001)
    hr = np.trapezoid((1 + ts) ** r, ts) ** (1 / r)
    assert got == pytest.approx(gq * hr, rel=2e-4)


def test_norm_infinite_exponents_take_sups():
    g = small_grid(h=1 / 16, dt=1 / 16, t_end=1.0)
    f = GridFunction.from_callable(g, lambda x, t: x + t)
    region = full_domain_region(g)
    assert anisotropic_norm(f, np.inf, np.inf, region) == pytest.approx(2.0, rel=1e-12)
    # q = r collapses to the space-time norm
    got = anisotropic_norm(f, 2.0, 2.0, region)
    idx, tw = region.time_weights(g)
    sw = region.space_weights(g)
    direct = sum(
        w * float(np.sum(f.values[j] ** 2 * sw)) for j, w in zip(idx, tw)
    ) ** 0.5
    assert got == pytest.approx(direct, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-5.0, 5.0), st.floats(1.0, 6.0), st.floats(1.0, 6.0))
def test_norm_absolutely_homogeneous(c, q, r):
    g = small_grid(h=1 / 8, dt=1 / 8, t_end=1.0)
    base = GridFunction.from_callable(g, lambda x, t: np.sin(3 * x) + t)
    scaled = GridFunction(g, c * base.values)
    region = full_domain_region(g)
    assert anisotropic_norm(scaled, q, r, region) == pytest.approx(
        abs(c) * anisotropic_norm(base, q, r, region), rel=1e-12, abs=1e-13
    )


def test_norm_monotone_in_region():
    g = small_grid(h=1 / 16, dt=1 / 32, t_end=0.5)
    f = GridFunction.from_callable(g, lambda x, t: 1.0 + np.cos(x) + t)
    inner = Region(center=(0.0,), half_widths=(0.25,), t_start=0.125, t_end=0.375)
    outer = Region(center=(0.0,), half_widths=(0.75,), t_start=0.0, t_end=0.5)
    for q, r in [(2.0, 3.0), (1.0, 1.0)]:
        assert anisotropic_norm(f, q, r, inner) <= anisotropic_norm(f, q, r, outer)


def test_norm_radial_power_2d_matches_closed_form():
    # |x|^(-a) with a q < n over the unit disk, constant in time
    a, q = 0.25, 2.0
    m = a * q
    h = 1 / 64
    g = SpaceTimeGrid(n=2, extent=1.0, h=h, dt=0.25, t_start=0.0, t_end=1.0)
    mesh = g.meshgrid()
    rr = np.hypot(*mesh)
    space = np.where(rr > 0, np.where(rr > 0, rr, 1.0) ** (-a), 0.0)
    space[rr == 0] = origin_cell_mean_radial_power(2, h, m) ** (1 / q)
    f = GridFunction(g, np.broadcast_to(space, g.shape).copy())
    region = Region(center=(0.0, 0.0), radius=1.0, t_start=0.0, t_end=1.0)
    exact = (2.0 * np.pi / (2.0 - m)) ** (1.0 / q)
    assert anisotropic_norm(f, q, 3.0, region) == pytest.approx(exact, rel=0.02)


def test_norm_mixed_infinite_exponents():
    g = small_grid(h=1 / 16, dt=1 / 16, t_end=1.0)
    f = GridFunction.from_callable(g, lambda x, t: (1.0 + t) * np.cos(x))
    region = full_domain_region(g)
    # q = inf: spatial sup per slice, then temporal L^4
    got = anisotropic_norm(f, np.inf, 4.0, region)
    ts = np.linspace(0, 1, 40001)
    exact = np.trapezoid((1 + ts) ** 4, ts) ** 0.25
    assert got == pytest.approx(exact, rel=1e-3)


def test_ball_weights_3d_counting():
    g = SpaceTimeGrid(n=3, extent=1.0, h=1 / 8, dt=0.5, t_start=0.0, t_end=1.0)
    region = Region(center=(0.0, 0.0, 0.0), radius=0.6, t_start=0.0, t_end=1.0)
    w = region.space_weights(g)
    mask = region.space_mask(g)
    assert np.all(w[mask] == g.h**3)
    assert np.all(w[~mask] == 0.0)
    assert abs(np.sum(w) - 4.0 / 3.0 * np.pi * 0.6**3) < 0.1


def test_energy_norm_2d_constant():
    g = small_grid(n=2, h=1 / 8, dt=1 / 8, t_end=1.0)
    region = Region(center=(0.0, 0.0), half_widths=(0.5, 0.5), t_start=0.0, t_end=1.0)
    const = GridFunction(g, np.full(g.shape, 1.3))
    assert energy_norm(const, 3.0, region) == pytest.approx(1.3, rel=1e-12)


def test_origin_cell_mean_3d_subgrid_consistency():
    # corner quadrature has a sharp radial cutoff, so refinement in the
    # subcell count settles at the few-per-mille level
    h, m = 1 / 16, 1.5
    coarse = origin_cell_mean_radial_power(3, h, m, subcells=32)
    fine = origin_cell_mean_radial_power(3, h, m, subcells=96)
    assert coarse == pytest.approx(fine, rel=5e-3)


def test_norm_rejects_empty_region():
    g = small_grid()
    f = GridFunction(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        bad = Region(center=(0.0,), half_widths=(0.5,), t_start=5.0, t_end=6.0)
        anisotropic_norm(f, 2.0, 2.0, bad)


# ---------------------------------------------------------------------------
# steklov average

def test_steklov_constant_in_time_unchanged():
    g = small_grid(dt=1 / 32, t_end=0.5)
    u = GridFunction.from_callable(g, lambda x, t: np.cos(x))
    w = 4 * g.dt
    avg = steklov_average(u, w)
    keep = g.times() <= g.t_end - w + 1e-12
    assert np.allclose(avg.values[keep], u.values[keep], atol=1e-13)
    assert np.allclose(avg.values[~keep], 0.0)


def test_steklov_linear_in_time_shifts():
    g = small_grid(dt=1 / 64, t_end=0.5)
    u = GridFunction.from_callable(g, lambda x, t: t + 0 * x)
    w = 8 * g.dt
    avg = steklov_average(u, w)
    ts = g.times()
    keep = ts <= g.t_end - w + 1e-12
    assert np.allclose(avg.values[keep, 3], ts[keep] + w / 2, atol=1e-13)


def test_steklov_window_refinement_converges():
    g = small_grid(dt=1 / 256, t_end=0.25)
    u = GridFunction.from_callable(g, lambda x, t: np.sin(8 * t) + 0 * x)
    errs = []
    for k in (16, 8, 4, 2):
        w = k * g.dt
        avg = steklov_average(u, w)
        keep = g.times() <= g.t_end - 16 * g.dt
        errs.append(np.max(np.abs(avg.values[keep] - u.values[keep])))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # first-order in the window size
    assert errs[-1] < errs[0] / 4


def test_steklov_commutes_with_constants():
    g = small_grid(dt=1 / 64, t_end=0.5)
    u = GridFunction.from_callable(g, lambda x, t: np.sin(3 * t) * np.cos(x))
    shifted = GridFunction(g, u.values + 4.0)
    w = 4 * g.dt
    a1 = steklov_average(u, w)
    a2 = steklov_average(shifted, w)
    keep = g.times() <= g.t_end - w + 1e-12
    assert np.allclose(a2.values[keep], a1.values[keep] + 4.0, atol=1e-12)


def test_steklov_rejects_bad_windows():
    g = small_grid()
    u = GridFunction(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        steklov_average(u, 10.0)
    with pytest.raises(ValueError):
        steklov_average(u, g.dt * 1.5)


# ---------------------------------------------------------------------------
# energy norm

def test_energy_norm_zero_and_constant():
    g = small_grid(h=1 / 16, dt=1 / 64, t_end=1.0)
    region = Region(center=(0.0,), half_widths=(0.5,), t_start=0.0, t_end=1.0)
    zero = GridFunction(g, np.zeros(g.shape))
    assert energy_norm(zero, 2.0, region) == 0.0
    const = GridFunction(g, np.full(g.shape, 1.7))
    assert energy_norm(const, 2.0, region) == pytest.approx(1.7, rel=1e-12)


def test_energy_norm_affine_gradient_term():
    g = small_grid(h=1 / 32, dt=1 / 64, t_end=1.0)
    a = 0.6
    u = GridFunction.from_callable(g, lambda x, t: a * x)
    region = Region(center=(0.0,), half_widths=(0.5,), t_start=0.0, t_end=1.0)
    p = 3.0
    got = energy_norm(u, p, region)
    sup_l2 = (a * a * (0.5**3 * 2 / 3)) ** 0.5  # integral of (ax)^2 over [-1/2,1/2]
    grad_term = a * 1.0 ** (1 / p)  # |a| * measure^(1/p), unit measure
    assert got == pytest.approx(sup_l2 + grad_term, rel=1e-3)


# ---------------------------------------------------------------------------
# sup oscillation

def test_sup_oscillation_constant_zero_both_modes():
    g = small_grid()
    u = GridFunction(g, np.full(g.shape, 2.5))
    region = Region(center=(0.0,), radius=0.5, t_start=0.0, t_end=0.25)
    center = ((0.0,), 0.25)
    assert sup_oscillation(u, region, center) == 0.0
    assert sup_oscillation(u, region, center, affine_part=(2.5, np.zeros(1))) == 0.0


def test_sup_oscillation_affine_cancellation():
    g = small_grid(n=2, h=1 / 8, dt=1 / 16)
    u = GridFunction.from_callable(g, lambda x, y, t: 1.0 + 0.3 * x - 0.2 * y)
    region = Region(center=(0.0, 0.0), radius=0.5, t_start=0.0, t_end=0.25)
    center = ((0.0, 0.0), 0.25)
    got = sup_oscillation(u, region, center, affine_part=(1.0, np.array([0.3, -0.2])))
    assert got == pytest.approx(0.0, abs=1e-13)


def test_sup_oscillation_radial_power():
    g = small_grid(h=1 / 128, dt=1 / 8, t_end=0.25)
    u = GridFunction.from_callable(g, lambda x, t: np.abs(x) ** 1.5)
    rho = 0.25
    region = Region(center=(0.0,), radius=rho, t_start=0.0, t_end=0.25)
    got = sup_oscillation(u, region, ((0.0,), 0.25))
    assert got == pytest.approx(rho**1.5, abs=1.5 * rho**0.5 * g.h)


def test_sup_oscillation_invariances():
    g = small_grid(h=1 / 16)
    base = GridFunction.from_callable(g, lambda x, t: np.sin(2 * x) + t)
    shifted = GridFunction(g, base.values + 5.0)
    region = Region(center=(0.0,), radius=0.5, t_start=0.0, t_end=0.25)
    center = ((0.0,), 0.25)
    assert sup_oscillation(base, region, center) == pytest.approx(
        sup_oscillation(shifted, region, center), rel=1e-12
    )
    # adding an affine function is absorbed by updating the affine part
    aff = GridFunction.from_callable(g, lambda x, t: 0.7 * x - 0.1)
    combo = GridFunction(g, base.values + aff.values)
    v0 = base.value_at((0.0,), 0.25)
    g0 = base.gradient_at((0.0,), 0.25)
    got1 = sup_oscillation(base, region, center, affine_part=(v0, g0))
    got2 = sup_oscillation(combo, region, center, affine_part=(v0 - 0.1, g0 + np.array([0.7])))
    assert got1 == pytest.approx(got2, abs=1e-12)


def test_sup_oscillation_rejects_outside_center():
    g = small_grid()
    u = GridFunction(g, np.zeros(g.shape))
    region = Region(center=(0.0,), radius=0.25, t_start=0.0, t_end=0.25)
    with pytest.raises(ValueError):
        sup_oscillation(u, region, ((0.9,), 0.25))


# ---------------------------------------------------------------------------
# singular cell rules

def test_origin_cell_mean_1d_exact():
    h, m = 1 / 16, 0.5
    got = origin_cell_mean_radial_power(1, h, m)
    exact = (2 * (h / 2) ** (1 - m) / (1 - m)) / h
    assert got == pytest.approx(exact, rel=1e-14)


def test_origin_cell_mean_rejects_nonintegrable():
    with pytest.raises(ValueError):
        origin_cell_mean_radial_power(1, 0.1, 1.0)
    with pytest.raises(ValueError):
        initial_slice_mean_power(0.01, 1.2)


def test_initial_slice_mean_matches_integral():
    dt, m = 1 / 64, 0.4
    got = initial_slice_mean_power(dt, m)
    exact = (dt / 2) ** (1 - m) / (1 - m) / (dt / 2)
    assert got == pytest.approx(exact, rel=1e-14)


# ---------------------------------------------------------------------------
# serialization

def test_binary_roundtrip(tmp_path):
    g = small_grid(n=2, h=1 / 8, dt=1 / 16)
    rng = np.random.default_rng(7)
    u = GridFunction(g, rng.standard_normal(g.shape))
    path = tmp_path / "u.bin"
    write_binary(u, path)
    back = read_binary(path)
    assert back.grid == g
    assert np.array_equal(back.values, u.values)


def test_csv_export_small_only(tmp_path):
    g = small_grid(h=1 / 4, dt=1 / 8, t_end=0.25)
    u = GridFunction(g, np.zeros(g.shape))
    write_csv(u, tmp_path / "u.csv")
    header = (tmp_path / "u.csv").read_text().splitlines()[0]
    assert header == "t,x1,value"
    big = SpaceTimeGrid(n=3, extent=1.0, h=1 / 32, dt=1 / 128, t_start=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        write_csv(GridFunction(big, np.zeros(big.shape)), tmp_path / "big.csv")
