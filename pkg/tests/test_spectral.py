"""Spectral substrate tests: transforms, calculus, projection, norms."""

import numpy as np
import pytest

from vesim import (
    ContractError,
    Field,
    Grid,
    RankError,
    SymmetryError,
    curl_tensor,
    dealias,
    divergence,
    gradient,
    laplacian,
    leray_project,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from vesim.spectral import inner, l2_norm, l2_norm_sq, pair_indices


def random_field(grid, rank, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    data = scale * rng.standard_normal((grid.ncomp(rank),) + grid.shape)
    return Field(grid, rank, data)


def fd4_derivative(a, axis, h):
    """4th-order centered finite difference on a periodic axis (oracle)."""
    return (
        -np.roll(a, -2, axis) + 8 * np.roll(a, -1, axis)
        - 8 * np.roll(a, 1, axis) + np.roll(a, 2, axis)
    ) / (12.0 * h)


class TestGridValidation:
    def test_dim_bounds(self):
        with pytest.raises(ContractError):
            Grid(1, 16)
        with pytest.raises(ContractError):
            Grid(4, 16)

    @pytest.mark.parametrize("n", [4, 7, 12, 48])
    def test_n_power_of_two(self, n):
        with pytest.raises(ContractError):
            Grid(2, n)

    def test_wavenumber_range(self):
        g = Grid(2, 8)
        ks = np.sort(np.unique(g.k[0]))
        assert ks.min() == -3 and ks.max() == 4  # {-n/2+1, ..., n/2}
        # Nyquist zeroed in derivative wavenumbers
        assert np.max(np.abs(g.kd[0])) == 3


class TestTransforms:
    def test_constant_single_mode(self):
        g = Grid(2, 8)
        f = Field(g, 0, np.full((1,) + g.shape, 2.5))
        fh = to_spectral(f)
        assert fh.data[0][0, 0] == pytest.approx(2.5 * g.npoints)
        off = fh.data[0].copy()
        off[0, 0] = 0.0
        assert np.max(np.abs(off)) < 1e-12

    def test_sine_two_modes(self):
        g = Grid(2, 8)
        f = Field(g, 0, (np.sin(g.x[0]) + 0 * g.x[1])[np.newaxis])
        fh = to_spectral(f)
        nz = np.argwhere(np.abs(fh.data[0]) > 1e-9)
        assert sorted(map(tuple, nz)) == [(1, 0), (7, 0)]

    def test_matches_direct_dft_sum(self):
        # oracle: O(n^4) plain summation of the transform definition
        g = Grid(2, 8)
        f = random_field(g, 0, seed=3)
        fh = to_spectral(f).data[0]
        n = g.n
        direct = np.zeros((n, n), dtype=complex)
        k1 = np.fft.fftfreq(n, 1.0 / n)
        x = 2.0 * np.pi * np.arange(n) / n
        for a, ka in enumerate(k1):
            for b, kb in enumerate(k1):
                phase = np.exp(-1j * (ka * x[:, None] + kb * x[None, :]))
                direct[a, b] = np.sum(f.data[0] * phase)
        assert np.max(np.abs(fh - direct)) <= 1e-12 * np.max(np.abs(direct))

    @pytest.mark.parametrize("dim,rank", [(2, 0), (2, 1), (2, 2), (3, 0), (3, 1), (3, 2)])
    def test_round_trip(self, dim, rank):
        g = Grid(dim, 16 if dim == 2 else 8)
        f = random_field(g, rank, seed=rank + dim)
        back = to_physical(to_spectral(f))
        rel = np.max(np.abs(back.data - f.data)) / np.max(np.abs(f.data))
        assert rel <= 1e-12

    def test_zero_spectrum(self):
        g = Grid(2, 8)
        f = to_physical(Field.zeros(g, 0, repr="spectral"))
        assert np.all(f.data == 0.0)

    def test_mode_pair_gives_cosine(self):
        g = Grid(2, 8)
        fh = Field.zeros(g, 0, repr="spectral")
        fh.data[0][1, 0] = 0.5 * g.npoints
        fh.data[0][-1, 0] = 0.5 * g.npoints
        f = to_physical(fh)
        expect = np.cos(g.x[0]) + 0 * g.x[1]
        assert np.max(np.abs(f.data[0] - expect)) < 1e-12

    def test_repr_contract_errors(self):
        g = Grid(2, 8)
        f = random_field(g, 0)
        with pytest.raises(ContractError):
            to_physical(f)
        with pytest.raises(ContractError):
            to_spectral(to_spectral(f))

    def test_non_hermitian_rejected(self):
        g = Grid(2, 8)
        fh = Field.zeros(g, 0, repr="spectral")
        fh.data[0][1, 0] = 1.0  # no conjugate partner
        with pytest.raises(SymmetryError):
            to_physical(fh)


class TestCalculus:
    def test_gradient_of_sine(self):
        g = Grid(2, 16)
        f = Field(g, 0, (np.sin(g.x[0]) + 0 * g.x[1])[np.newaxis])
        df = gradient(f)
        assert np.max(np.abs(df.data[0] - (np.cos(g.x[0]) + 0 * g.x[1]))) < 1e-12
        assert np.max(np.abs(df.data[1])) < 1e-13

    def test_gradient_of_constant(self):
        g = Grid(3, 8)
        f = Field(g, 1, np.full((3,) + g.shape, 1.25))
        assert np.max(np.abs(gradient(f).data)) == 0.0

    def test_gradient_index_convention(self):
        # (grad v)_{ij} = d v_i / d x_j stored at component i*dim + j
        g = Grid(2, 16)
        v = Field.zeros(g, 1)
        v.data[0] = np.sin(g.x[1]) + 0 * g.x[0]  # v_0 depends on x_1
        gv = gradient(v)
        assert np.max(np.abs(gv.comp(0, 1) - (np.cos(g.x[1]) + 0 * g.x[0]))) < 1e-12
        assert np.max(np.abs(gv.comp(0, 0))) < 1e-13

    @pytest.mark.parametrize("dim", [2, 3])
    def test_gradient_matches_fd4(self, dim):
        n = 64 if dim == 2 else 32
        g = Grid(dim, n)
        # smooth but not band-limited at low order
        f = Field(g, 0, np.exp(np.sin(g.x[0]) + np.cos(sum(g.x[1:])))[np.newaxis])
        df = gradient(f)
        h = g.dx
        for a in range(dim):
            fd = fd4_derivative(f.data[0], a, h)
            err = np.max(np.abs(df.data[a] - fd))
            assert err < 30.0 * h**4  # FD oracle truncation dominates

    def test_gradient_rank2_rejected(self):
        g = Grid(2, 8)
        with pytest.raises(RankError):
            gradient(random_field(g, 2))

    def test_divergence_taylor_green(self):
        g = Grid(2, 32)
        v = Field.zeros(g, 1)
        v.data[0] = np.sin(g.x[0]) * np.cos(g.x[1])
        v.data[1] = -np.cos(g.x[0]) * np.sin(g.x[1])
        assert np.max(np.abs(divergence(v).data)) <= 1e-12

    def test_divergence_identity_tensor(self):
        g = Grid(3, 8)
        F = Field.zeros(g, 2)
        for i in range(3):
            F.data[i * 3 + i] = 1.0
        assert np.max(np.abs(divergence(F).data)) == 0.0

    def test_divergence_matches_fd4(self):
        g = Grid(2, 64)
        F = Field.zeros(g, 2)
        F.data[0] = np.exp(np.sin(g.x[0])) * np.cos(g.x[1])
        F.data[1] = np.sin(2 * g.x[0]) + np.cos(g.x[1])
        F.data[2] = np.cos(g.x[0] + g.x[1])
        F.data[3] = np.exp(np.cos(g.x[1])) + 0 * g.x[0]
        dF = divergence(F)
        h = g.dx
        for i in range(2):
            fd = fd4_derivative(F.comp(i, 0), 0, h) + fd4_derivative(F.comp(i, 1), 1, h)
            assert np.max(np.abs(dF.data[i] - fd)) < 40.0 * h**4

    def test_divergence_scalar_rejected(self):
        g = Grid(2, 8)
        with pytest.raises(RankError):
            divergence(random_field(g, 0))

    def test_div_grad_equals_laplacian(self):
        g = Grid(2, 16)
        f = random_field(g, 0, seed=9)
        lhs = divergence(gradient(f))
        rhs = laplacian(f)
        assert np.max(np.abs(lhs.data - rhs.data)) <= 1e-12 * max(np.max(np.abs(rhs.data)), 1)


class TestCurlTensor:
    def test_gradient_type_tensor_vanishes(self):
        # rows E_ij = d_j g_i have symmetric second derivatives
        g = Grid(2, 32)
        gv = Field.zeros(g, 1)
        gv.data[0] = np.sin(g.x[0]) * np.cos(2 * g.x[1])
        gv.data[1] = np.cos(g.x[0] + g.x[1])
        E = gradient(gv)
        out = curl_tensor(E)
        assert np.max(np.abs(out.data)) <= 1e-11

    def test_constant_tensor(self):
        g = Grid(3, 8)
        E = Field(g, 2, np.full((9,) + g.shape, 0.7))
        assert np.max(np.abs(curl_tensor(E).data)) == 0.0

    @pytest.mark.parametrize("dim", [2, 3])
    def test_matches_fd4(self, dim):
        n = 64 if dim == 2 else 32
        g = Grid(dim, n)
        rng = np.random.default_rng(5)
        E = Field.zeros(g, 2)
        # smooth random trig polynomial content
        for c in range(g.ncomp(2)):
            E.data[c] = np.sin((c % 3 + 1) * g.x[0]) * np.cos(g.x[1]) + 0.3 * rng.standard_normal()
        out = curl_tensor(E)
        h = g.dx
        pairs = pair_indices(dim)
        for i in range(dim):
            for p, (j, m) in enumerate(pairs):
                fd = fd4_derivative(E.comp(i, j), m, h) - fd4_derivative(E.comp(i, m), j, h)
                assert np.max(np.abs(out.data[i * len(pairs) + p] - fd)) < 40.0 * h**4

    def test_rank_check(self):
        g = Grid(2, 8)
        with pytest.raises(RankError):
            curl_tensor(random_field(g, 1))


class TestLeray:
    def test_annihilates_gradients(self):
        g = Grid(2, 32)
        phi = Field(g, 0, (np.sin(g.x[0]) * np.cos(3 * g.x[1]))[np.newaxis])
        v = gradient(phi)
        assert np.max(np.abs(leray_project(v).data)) <= 1e-12

    def test_taylor_green_unchanged(self):
        g = Grid(2, 64)
        v = Field.zeros(g, 1)
        v.data[0] = np.sin(g.x[0]) * np.cos(g.x[1])
        v.data[1] = -np.cos(g.x[0]) * np.sin(g.x[1])
        pv = leray_project(v)
        assert np.max(np.abs(pv.data - v.data)) <= 1e-13

    @pytest.mark.parametrize("dim", [2, 3])
    def test_idempotent_and_divergence_free(self, dim):
        g = Grid(dim, 32 if dim == 2 else 16)
        v = random_field(g, 1, seed=11)
        p1 = leray_project(v)
        p2 = leray_project(p1)
        scale = np.max(np.abs(p1.data))
        assert np.max(np.abs(p2.data - p1.data)) <= 1e-13 * scale
        assert np.max(np.abs(divergence(p1).data)) <= 1e-12 * scale * g.n

    def test_passes_mean_through(self):
        g = Grid(2, 8)
        v = Field(g, 1, np.stack([np.full(g.shape, 0.3), np.full(g.shape, -0.1)]))
        pv = leray_project(v)
        assert np.max(np.abs(pv.data - v.data)) < 1e-14


class TestDealias:
    def test_low_modes_unchanged(self):
        g = Grid(2, 16)  # band: |k_j| <= 5
        fh = Field.zeros(g, 0, repr="spectral")
        fh.data[0][2, 3] = 1.0
        fh.data[0][-2, -3] = 1.0
        out = dealias(fh)
        assert np.array_equal(out.data, fh.data)

    def test_nyquist_mode_zeroed(self):
        g = Grid(2, 16)
        fh = Field.zeros(g, 0, repr="spectral")
        fh.data[0][8, 0] = 1.0  # k = n/2
        assert np.max(np.abs(dealias(fh).data)) == 0.0

    @pytest.mark.parametrize("dim", [2, 3])
    def test_mask_matches_enumeration(self, dim):
        g = Grid(dim, 16)
        f = random_field(g, 0, seed=2)
        out = dealias(to_spectral(f)).data[0]
        k1 = np.fft.fftfreq(g.n, 1.0 / g.n)
        cut = g.n / 3.0
        fh = to_spectral(f).data[0]
        for idx in np.ndindex(*g.shape):
            keep = all(abs(k1[i]) <= cut for i in idx)
            if keep:
                assert out[idx] == fh[idx]
            else:
                assert out[idx] == 0.0

    def test_requires_spectral(self):
        g = Grid(2, 8)
        with pytest.raises(ContractError):
            dealias(random_field(g, 0))


class TestSobolevNorms:
    def test_sine_l2(self):
        g = Grid(2, 16)
        f = Field(g, 0, (np.sin(g.x[0]) + 0 * g.x[1])[np.newaxis])
        assert sobolev_norm(f, 0) == pytest.approx(np.sqrt(2 * np.pi**2), rel=1e-12)

    def test_sine_h1_doubles(self):
        g = Grid(2, 16)
        f = Field(g, 0, (np.sin(g.x[0]) + 0 * g.x[1])[np.newaxis])
        assert sobolev_norm(f, 1) ** 2 == pytest.approx(2 * (2 * np.pi**2), rel=1e-12)

    def test_h1_parseval_cross_check(self):
        g = Grid(2, 32)
        f = random_field(g, 0, seed=7)
        # physical-space quadrature of ||f||^2 + ||grad f||^2
        grad = gradient(f)
        phys = l2_norm_sq(f) + l2_norm_sq(grad)
        assert sobolev_norm(f, 1) ** 2 == pytest.approx(phys, rel=1e-10)

    def test_l2_equals_uniform_quadrature(self):
        g = Grid(3, 8)
        f = random_field(g, 1, seed=8)
        quad = np.sum(f.data**2) * g.dx**3
        assert sobolev_norm(f, 0) ** 2 == pytest.approx(quad, rel=1e-10)

    def test_monotone_in_order(self):
        g = Grid(2, 16)
        f = random_field(g, 0, seed=1)
        norms = [sobolev_norm(f, s) for s in range(5)]
        assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:]))

    def test_order_cap(self):
        g = Grid(2, 8)
        with pytest.raises(ContractError):
            sobolev_norm(random_field(g, 0), 5)

    def test_inner_product_reprs_match(self):
        g = Grid(2, 16)
        f = random_field(g, 1, seed=4)
        h = random_field(g, 1, seed=5)
        a = inner(f, h)
        b = inner(to_spectral(f), to_spectral(h))
        assert a == pytest.approx(b, rel=1e-12)
        assert l2_norm(f) == pytest.approx(np.sqrt(inner(f, f)), rel=1e-12)


class TestFieldContainer:
    def test_component_count_checked(self):
        g = Grid(2, 8)
        with pytest.raises(ContractError):
            Field(g, 1, np.zeros((3,) + g.shape))

    def test_algebra_requires_matching(self):
        g = Grid(2, 8)
        a = random_field(g, 1, seed=0)
        b = random_field(g, 2, seed=1)
        with pytest.raises(ContractError):
            a + b  # noqa: B018

    def test_scalar_algebra(self):
        g = Grid(2, 8)
        a = random_field(g, 1, seed=0)
        c = 2.0 * a - a
        assert np.allclose(c.data, a.data)
        assert np.allclose((-a).data, -a.data)
