import numpy as np
import pytest

from woplab import autodiff as ad
from woplab.autodiff import ParameterStore, Tape, Tensor, backward, gradient_check
from woplab.models import (
    DeepOnetConfig,
    FnoConfig,
    deeponet_forward,
    dirichlet_envelope,
    fno_forward,
    fourier_layer,
    init_deeponet,
    init_fno,
)
from woplab.solver import make_grid

from test_autodiff import naive_dft, naive_idft

TOY_FNO = FnoConfig(n_points=16, modes=4, width=4, layers=2)
TOY_DEEPONET = DeepOnetConfig(n_points=16, branch_hidden=8, trunk_hidden=8, latent=8, depth=2)


@pytest.fixture(scope="module")
def grid16():
    return make_grid(16)


def rand_fields(rng, batch, n):
    u0 = rng.normal(size=(batch, n))
    u0[:, 0] = u0[:, -1] = 0.0
    c = 1.0 + 0.2 * rng.random((batch, n))
    return u0, c


class TestInit:
    def test_fno_deterministic(self):
        a = init_fno(FnoConfig(), seed=7)
        b = init_fno(FnoConfig(), seed=7)
        for (na, ta), (nb, tb) in zip(a.params.items(), b.params.items()):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_fno_parameter_count(self):
        model = init_fno(FnoConfig(), seed=0)
        # spectral (complex, counted as re/im pairs) + pointwise + lift + projection
        expected = (
            4 * 16 * 64 * 64 * 2
            + 4 * (64 * 64 + 64)
            + (3 * 64 + 64)
            + (64 * 128 + 128 + 128 * 1 + 1)
        )
        assert expected == 549_633
        assert model.params.entry_count() == expected

    def test_fno_all_finite(self):
        model = init_fno(TOY_FNO, seed=3)
        for _, t in model.params.items():
            values = t.data.view(np.float64) if t.is_complex else t.data
            assert np.all(np.isfinite(values))

    def test_deeponet_deterministic(self):
        a = init_deeponet(DeepOnetConfig(), seed=9)
        b = init_deeponet(DeepOnetConfig(), seed=9)
        for (na, ta), (nb, tb) in zip(a.params.items(), b.params.items()):
            assert na == nb
            np.testing.assert_array_equal(ta.data, tb.data)

    def test_deeponet_parameter_count(self):
        model = init_deeponet(DeepOnetConfig(), seed=0)
        branch = (256 * 128 + 128) + (128 * 128 + 128) + (128 * 128 + 128)
        trunk = (1 * 128 + 128) + (128 * 128 + 128) + (128 * 128 + 128)
        assert branch == 65_920 and trunk == 33_280
        assert model.params.entry_count() == branch + trunk + 1

    def test_bad_configs_rejected(self):
        with pytest.raises(ValueError):
            init_fno(FnoConfig(n_points=16, modes=40), seed=0)
        with pytest.raises(ValueError):
            init_deeponet(DeepOnetConfig(depth=0), seed=0)


class TestEnvelope:
    def test_endpoints_exact_zero(self):
        env = dirichlet_envelope(make_grid(128))
        assert env[0] == 0.0 and env[-1] == 0.0

    def test_midpoint_peak(self):
        env = dirichlet_envelope(make_grid(129))  # odd grid has a node at 0.5
        assert env[64] == pytest.approx(1.0, abs=1e-15)

    def test_symmetry(self):
        env = dirichlet_envelope(make_grid(65))
        np.testing.assert_allclose(env, env[::-1], atol=1e-15)


class TestFourierLayer:
    def test_zero_input_zero_bias(self, grid16):
        w = Tensor(np.zeros((4, 4)))
        b = Tensor(np.zeros(4))
        r = Tensor(np.ones((4, 4, 4), complex))
        v = Tensor(np.zeros((2, 4, 16)))
        out = fourier_layer(v, r, w, b, modes=4)
        np.testing.assert_array_equal(out.data, np.zeros((2, 4, 16)))

    def test_spectral_identity_path(self, grid16):
        # full modes, R = identity per mode, W = 0: layer reduces to gelu(v)
        rng = np.random.default_rng(2)
        n, width = 16, 3
        v = rng.normal(size=(2, width, n))
        modes = n // 2 + 1
        r = Tensor(np.stack([np.eye(width, dtype=complex)] * modes))
        out = fourier_layer(
            Tensor(v), r, Tensor(np.zeros((width, width))), Tensor(np.zeros(width)), modes
        )
        expected = ad.gelu(Tensor(v)).data
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_matches_composed_oracle(self, grid16):
        # brute-force path: naive DFT -> dense per-mode multiply -> naive inverse
        rng = np.random.default_rng(4)
        batch, width, n, modes = 2, 3, 16, 5
        v = rng.normal(size=(batch, width, n))
        r = rng.normal(size=(modes, width, width)) + 1j * rng.normal(size=(modes, width, width))
        w = rng.normal(size=(width, width))
        b = rng.normal(size=width)
        out = fourier_layer(Tensor(v), Tensor(r), Tensor(w), Tensor(b), modes)

        spec = naive_dft(v)[..., :modes]
        mixed = np.einsum("bik,kio->bok", spec, r)
        spatial = naive_idft(mixed, n)
        local = np.einsum("bcn,cd->bdn", v, w) + b[None, :, None]
        z = local + spatial
        from scipy.special import erf

        expected = 0.5 * z * (1 + erf(z / np.sqrt(2)))
        np.testing.assert_allclose(out.data, expected, atol=1e-10)

    def test_spectral_branch_is_band_limited(self):
        # the F^-1 R F path cannot carry DFT energy at or above the retained cutoff
        rng = np.random.default_rng(5)
        n, width, modes = 32, 4, 6
        v = rng.normal(size=(1, width, n))
        r = Tensor(rng.normal(size=(modes, width, width)) + 1j * rng.normal(size=(modes, width, width)))
        branch = ad.irdft(ad.mode_mix(ad.rdft_truncated(Tensor(v), modes), r), n)
        spectrum = naive_dft(branch.data)
        assert np.max(np.abs(spectrum[..., modes : n - modes + 1])) < 1e-10


class TestFnoForward:
    def test_boundary_exactness_and_shape(self, grid16):
        rng = np.random.default_rng(6)
        model = init_fno(TOY_FNO, seed=1)
        u0, c = rand_fields(rng, 5, 16)
        out = fno_forward(model, u0, c, grid16)
        assert out.data.shape == (5, 16)
        assert np.all(out.data[:, 0] == 0.0) and np.all(out.data[:, -1] == 0.0)

    def test_default_shape(self):
        grid = make_grid(128)
        model = init_fno(FnoConfig(), seed=1)
        rng = np.random.default_rng(7)
        u0, c = rand_fields(rng, 2, 128)
        assert fno_forward(model, u0, c, grid).data.shape == (2, 128)

    def test_per_sample_independence(self, grid16):
        rng = np.random.default_rng(8)
        model = init_fno(TOY_FNO, seed=2)
        u0, c = rand_fields(rng, 3, 16)
        out = fno_forward(model, u0, c, grid16).data
        dup = fno_forward(model, np.vstack([u0, u0[1:2]]), np.vstack([c, c[1:2]]), grid16).data
        np.testing.assert_array_equal(dup[3], out[1])
        np.testing.assert_array_equal(dup[:3], out)

    def test_padding_variant_runs(self):
        grid = make_grid(16)
        cfg = FnoConfig(n_points=16, modes=4, width=4, layers=2, padding=4)
        model = init_fno(cfg, seed=3)
        rng = np.random.default_rng(9)
        u0, c = rand_fields(rng, 2, 16)
        out = fno_forward(model, u0, c, grid)
        assert out.data.shape == (2, 16)
        assert np.all(out.data[:, 0] == 0.0)

    def test_gradient_check_toy_model(self, grid16):
        rng = np.random.default_rng(10)
        model = init_fno(TOY_FNO, seed=4)
        u0, c = rand_fields(rng, 2, 16)
        target = rng.normal(size=(2, 16))

        def f():
            return ad.relative_l2_loss(fno_forward(model, u0, c, grid16), target)

        report = gradient_check(f, model.params, h=1e-5, tol=1e-4, max_entries=25)
        assert report.passed, report


class TestDeepOnetForward:
    def test_zero_branch_gives_zero(self, grid16):
        model = init_deeponet(TOY_DEEPONET, seed=5)
        last = TOY_DEEPONET.depth - 1
        model.params[f"branch_{last}_w"].data[:] = 0.0
        model.params[f"branch_{last}_b"].data[:] = 0.0
        rng = np.random.default_rng(11)
        u0, c = rand_fields(rng, 3, 16)
        out = deeponet_forward(model, u0, c, grid16)
        np.testing.assert_array_equal(out.data, np.zeros((3, 16)))

    def test_boundary_exactness(self, grid16):
        model = init_deeponet(TOY_DEEPONET, seed=6)
        rng = np.random.default_rng(12)
        u0, c = rand_fields(rng, 4, 16)
        out = deeponet_forward(model, u0, c, grid16).data
        assert np.all(out[:, 0] == 0.0) and np.all(out[:, -1] == 0.0)

    def test_inner_product_double_loop_oracle(self, grid16):
        model = init_deeponet(TOY_DEEPONET, seed=7)
        rng = np.random.default_rng(13)
        u0, c = rand_fields(rng, 3, 16)
        out = deeponet_forward(model, u0, c, grid16).data

        # brute-force recomputation with plain loops
        def mlp(x, prefix):
            h = x
            for i in range(TOY_DEEPONET.depth):
                h = h @ model.params[f"{prefix}_{i}_w"].data + model.params[f"{prefix}_{i}_b"].data
                if i < TOY_DEEPONET.depth - 1:
                    h = np.maximum(h, 0)
            return h

        branch = mlp(np.concatenate([u0, c], axis=1), "branch")
        trunk = mlp(grid16.xs[:, None], "trunk")
        env = dirichlet_envelope(grid16)
        b0 = float(model.params["output_bias"].data)
        expected = np.empty((3, 16))
        for bi in range(3):
            for j in range(16):
                acc = sum(branch[bi, k] * trunk[j, k] for k in range(TOY_DEEPONET.latent))
                expected[bi, j] = (acc + b0) * env[j]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_rank_bound(self, grid16):
        # pre-envelope, pre-bias output has numerical rank <= latent size
        cfg = DeepOnetConfig(n_points=16, branch_hidden=8, trunk_hidden=8, latent=4, depth=2, output_bias=False)
        model = init_deeponet(cfg, seed=8)
        rng = np.random.default_rng(14)
        u0, c = rand_fields(rng, 12, 16)
        branch_in = Tensor(np.concatenate([u0, c], axis=1))
        trunk_in = Tensor(grid16.xs[:, None])
        from woplab.models import _mlp

        pre = ad.matmul_nt(
            _mlp(branch_in, model.params, "branch", cfg.depth),
            _mlp(trunk_in, model.params, "trunk", cfg.depth),
        )
        assert np.linalg.matrix_rank(pre.data, tol=1e-10) <= cfg.latent

    def test_gradient_check_toy_model(self, grid16):
        rng = np.random.default_rng(15)
        model = init_deeponet(TOY_DEEPONET, seed=9)
        u0, c = rand_fields(rng, 2, 16)
        target = rng.normal(size=(2, 16))

        def f():
            return ad.relative_l2_loss(deeponet_forward(model, u0, c, grid16), target)

        report = gradient_check(f, model.params, h=1e-5, tol=1e-4, max_entries=25)
        assert report.passed, report


class TestCheckpointIntegration:
    def test_fno_round_trip(self, tmp_path, grid16):
        from woplab.checkpoint import load_checkpoint, save_checkpoint
        from woplab.models import from_checkpoint

        model = init_fno(TOY_FNO, seed=11)
        p = tmp_path / "m.wopm"
        save_checkpoint(p, "fno", model.params)
        kind, params = load_checkpoint(p)
        assert kind == "fno"
        rebuilt = from_checkpoint(kind, params, TOY_FNO)
        rng = np.random.default_rng(16)
        u0, c = rand_fields(rng, 2, 16)
        np.testing.assert_array_equal(
            fno_forward(model, u0, c, grid16).data,
            fno_forward(rebuilt, u0, c, grid16).data,
        )

    def test_wopm_bytes_stable(self, tmp_path):
        from woplab.checkpoint import load_checkpoint, save_checkpoint

        model = init_deeponet(TOY_DEEPONET, seed=12)
        p1 = tmp_path / "a.wopm"
        p2 = tmp_path / "b.wopm"
        save_checkpoint(p1, "deeponet", model.params)
        kind, params = load_checkpoint(p1)
        save_checkpoint(p2, kind, params)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corruption_detected(self, tmp_path):
        from woplab.checkpoint import load_checkpoint, save_checkpoint
        from woplab.errors import FormatError

        model = init_deeponet(TOY_DEEPONET, seed=13)
        p = tmp_path / "c.wopm"
        save_checkpoint(p, "deeponet", model.params)
        blob = bytearray(p.read_bytes())
        blob[:4] = b"JUNK"
        p.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_checkpoint(p)
        save_checkpoint(p, "deeponet", model.params)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(FormatError):
            load_checkpoint(p)
