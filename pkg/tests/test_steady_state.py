"""Drift model, stationary solutions, and stability.

The independent oracle here rebuilds the dynamics from the 2x2 operator
form of the feedback master equation,

    drho/dt = -i alpha [sy, rho] + gamma D[s] rho
              - i lam sqrt(gamma) [sy, s rho + rho s^dag]
              + (lam^2/eta) D[sy] rho,

extracts the affine Bloch map numerically, and compares matrix, offset,
stationary state and eigenvalues against the closed forms.
"""

import math

import numpy as np
import pytest

from blochlock import (
    BlochVector,
    DegenerateSteadyStateError,
    InvalidParamsError,
    SystemParams,
    deterministic_solution,
    drift_model,
    driving_only_steady_state,
    feedback_steady_state,
    ideal_drive,
    ideal_gain,
    kappa,
    stability_eigenvalues,
)

SIG = np.array([[0, 0], [1, 0]], dtype=complex)       # |g><e|, basis (e, g)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def lindblad_rhs(rho, p: SystemParams):
    """Master-equation right-hand side in operator form (oracle route)."""
    def D(A, r):
        return A @ r @ A.conj().T - 0.5 * (A.conj().T @ A @ r + r @ A.conj().T @ A)

    out = -1j * p.alpha * (SY @ rho - rho @ SY)
    out = out + p.gamma * D(SIG, rho)
    T = SIG @ rho + rho @ SIG.conj().T
    out = out - 1j * p.lam * math.sqrt(p.gamma) * (SY @ T - T @ SY)
    if p.lam != 0.0:
        out = out + (p.lam ** 2 / p.eta) * D(SY, rho)
    return out


def bloch_velocity(b, p: SystemParams):
    rho = 0.5 * (np.eye(2) + b[0] * SX + b[1] * SY + b[2] * SZ)
    dr = lindblad_rhs(rho, p)
    return np.array([np.real(np.trace(dr @ s)) for s in (SX, SY, SZ)])


def affine_map_from_lindblad(p: SystemParams):
    """Matrix and offset of the Bloch dynamics, probed numerically."""
    offset = bloch_velocity(np.zeros(3), p)
    cols = [bloch_velocity(e, p) - offset for e in np.eye(3)]
    return np.column_stack(cols), offset


def random_params(rng, n):
    for _ in range(n):
        yield SystemParams(gamma=rng.uniform(0.2, 3.0),
                           eta=rng.uniform(0.05, 1.0),
                           alpha=rng.uniform(-2.0, 2.0),
                           lam=rng.uniform(-1.5, 0.5))


class TestDriftModel:
    def test_free_decay(self):
        m = drift_model(SystemParams(1.0, 1.0, 0.0, 0.0))
        assert np.allclose(m.matrix, np.diag([-0.5, -0.5, -1.0]))
        assert np.allclose(m.offset, [0, 0, -1])

    def test_equator_design_block(self):
        # gain -sqrt(gamma)/2 with no drive: kappa = -1/4, offset vanishes
        m = drift_model(SystemParams(1.0, 1.0, 0.0, -0.5))
        assert m.kappa == pytest.approx(-0.25, abs=1e-15)
        assert np.allclose(m.matrix, np.diag([0.0, -0.5, -0.5]), atol=1e-15)
        assert np.allclose(m.offset, 0.0, atol=1e-15)

    def test_worked_example(self):
        m = drift_model(SystemParams(1.0, 0.5, 0.3, -0.4))
        assert m.kappa == pytest.approx(-0.08, abs=1e-15)
        assert np.allclose(m.matrix, [[-0.34, 0, 0.6], [0, -0.5, 0], [-0.6, 0, -0.84]],
                           atol=1e-15)
        assert np.allclose(m.offset, [0, 0, -0.2], atol=1e-15)

    def test_y_decoupled(self):
        rng = np.random.default_rng(3)
        for p in random_params(rng, 50):
            m = drift_model(p).matrix
            assert m[1, 0] == m[1, 2] == m[0, 1] == m[2, 1] == 0.0

    def test_matches_lindblad_oracle(self):
        rng = np.random.default_rng(5)
        for p in random_params(rng, 100):
            matrix, offset = affine_map_from_lindblad(p)
            model = drift_model(p)
            assert np.allclose(model.matrix, matrix, atol=1e-10)
            assert np.allclose(model.offset, offset, atol=1e-10)

    def test_eta_zero_with_gain_rejected(self):
        p = SystemParams(1.0, 0.0, 0.1, -0.3)
        with pytest.raises(InvalidParamsError):
            drift_model(p)
        with pytest.raises(InvalidParamsError):
            kappa(p)

    def test_eta_zero_without_gain_is_plain_decay(self):
        m = drift_model(SystemParams(1.0, 0.0, 0.2, 0.0))
        assert np.allclose(m.noise(np.array([0.3, 0.1, -0.5])), 0.0)


class TestDrivingOnly:
    def test_undriven_decays_to_ground(self):
        assert driving_only_steady_state(1.0, 0.0) == BlochVector(0, 0, -1)

    def test_strong_driving_approaches_center(self):
        b = driving_only_steady_state(1.0, 1e3)
        assert math.hypot(b.x, b.z) < 2e-3

    def test_worked_example(self):
        b = driving_only_steady_state(1.0, 1 / math.sqrt(8))
        assert b.x == pytest.approx(-1 / math.sqrt(2), abs=1e-12)
        assert b.z == pytest.approx(-0.5, abs=1e-12)

    def test_is_fixed_point_of_drift(self):
        for alpha in np.linspace(-3, 3, 31):
            p = SystemParams(1.3, 0.7, alpha, 0.0)
            b = driving_only_steady_state(1.3, alpha).as_array()
            assert np.allclose(drift_model(p).drift(b), 0.0, atol=1e-12)

    def test_locus_is_lower_half_ellipse(self):
        # eliminating the drive gives (2z+1)^2 = 1 - 2x^2, with z < 0
        r_prev = 1.0 + 1e-15
        for alpha in np.linspace(0, 50, 200):
            b = driving_only_steady_state(1.0, alpha)
            assert b.z < 0 and b.y == 0
            assert (2 * b.z + 1) ** 2 == pytest.approx(1 - 2 * b.x ** 2, abs=1e-12)
            r = math.hypot(b.x, b.z)
            assert r <= r_prev + 1e-12  # purity shrinks as |drive| grows
            r_prev = r


class TestFeedbackSteadyState:
    def test_lam_zero_reduction_eta_independent(self):
        for gamma in (0.5, 1.0, 2.0):
            for eta in (0.2, 0.5, 1.0):
                for alpha in np.linspace(-2, 2, 9):
                    b = feedback_steady_state(SystemParams(gamma, eta, alpha, 0.0))
                    ref = driving_only_steady_state(gamma, alpha)
                    assert np.allclose(b.as_array(), ref.as_array(), atol=1e-12)

    def test_unit_eta_design_gives_target_pure_state(self):
        for theta in np.linspace(-3.0, 3.0, 25):
            p = SystemParams(1.0, 1.0, ideal_drive(theta, 1.0), ideal_gain(theta, 1.0))
            b = feedback_steady_state(p)
            target = [math.sin(theta), 0.0, math.cos(theta)]
            assert np.allclose(b.as_array(), target, atol=1e-9)

    def test_pi_sixth_design(self):
        theta = math.pi / 6
        p = SystemParams(1.0, 1.0, ideal_drive(theta, 1.0), ideal_gain(theta, 1.0))
        b = feedback_steady_state(p)
        assert b.x == pytest.approx(0.5, abs=1e-9)
        assert b.z == pytest.approx(0.8660254037844387, abs=1e-9)

    def test_no_drive_means_no_x(self):
        b = feedback_steady_state(SystemParams(1.0, 1.0, 0.0, -1.0))
        assert b.x == 0.0

    def test_fixed_point_consistency_random(self):
        rng = np.random.default_rng(17)
        count = 0
        for p in random_params(rng, 1000):
            model = drift_model(p)
            try:
                b = feedback_steady_state(p).as_array()
            except DegenerateSteadyStateError:
                continue
            count += 1
            resid = model.matrix @ b + model.offset
            scale = max(1.0, float(np.linalg.norm(model.matrix @ b)))
            assert np.linalg.norm(resid) <= 1e-9 * scale
            # cross-check against a direct linear solve of the x-z block
            blk = model.matrix[np.ix_([0, 2], [0, 2])]
            ref = np.linalg.solve(blk, -model.offset[[0, 2]])
            assert np.allclose([b[0], b[2]], ref, atol=1e-9)
        assert count > 950

    def test_matches_liouvillian_null_space(self):
        # fully independent oracle: kernel of the vectorized Lindblad map
        rng = np.random.default_rng(23)
        basis = [np.eye(2, dtype=complex)[:, [i]] @ np.eye(2, dtype=complex)[[j], :]
                 for i in range(2) for j in range(2)]
        for p in random_params(rng, 25):
            L = np.zeros((4, 4), dtype=complex)
            for k, e in enumerate(basis):
                from blochlock.bloch import SIGMA_X, SIGMA_Y, SIGMA_Z  # noqa: F401
                L[:, k] = lindblad_rhs(e, p).reshape(-1)
            w, v = np.linalg.eig(L)
            rho = v[:, np.argmin(np.abs(w))].reshape(2, 2)
            rho = rho / np.trace(rho)
            x = float(np.real(np.trace(rho @ SX)))
            z = float(np.real(np.trace(rho @ SZ)))
            b = feedback_steady_state(p)
            assert np.allclose([x, z], [b.x, b.z], atol=1e-8)

    def test_degenerate_equator_design(self):
        with pytest.raises(DegenerateSteadyStateError):
            feedback_steady_state(SystemParams(1.0, 1.0, 0.0, -0.5))

    def test_eta_zero_requires_no_gain(self):
        with pytest.raises(InvalidParamsError):
            feedback_steady_state(SystemParams(1.0, 0.0, 0.1, -0.2))
        b = feedback_steady_state(SystemParams(1.0, 0.0, 0.25, 0.0))
        assert b == driving_only_steady_state(1.0, 0.25)


class TestStability:
    def test_equator_design_marginal(self):
        p = SystemParams(1.0, 1.0, 0.0, -0.5)
        rep = stability_eigenvalues(p)
        evs = sorted(ev.real for ev in rep.eigenvalues)
        assert evs == pytest.approx([-0.5, -0.5, 0.0], abs=1e-12)
        assert rep.classification == "marginal"

    def test_ground_design_stable(self):
        p = SystemParams(1.0, 1.0, 0.0, 0.0)
        rep = stability_eigenvalues(p)
        assert sorted(ev.real for ev in rep.eigenvalues) == \
            pytest.approx([-1.0, -0.5, -0.5], abs=1e-12)
        assert rep.classification == "stable"

    def test_pi_sixth_design(self):
        theta = math.pi / 6
        p = SystemParams(1.0, 1.0, ideal_drive(theta, 1.0), ideal_gain(theta, 1.0))
        rep = stability_eigenvalues(p)
        assert sorted(ev.real for ev in rep.eigenvalues) == \
            pytest.approx([-0.75, -0.5, -0.5], abs=1e-9)
        assert rep.classification == "stable"
        # trace/determinant of the x-z block match sum/product of its pair
        m = drift_model(p).matrix
        pair = [ev for ev in rep.eigenvalues if abs(ev.real + 0.5) > 1e-12 or True]
        tr = m[0, 0] + m[2, 2]
        det = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        xz = [ev for ev in rep.eigenvalues]
        # one eigenvalue is the decoupled y one (-gamma/2); remove one instance
        xz.remove(min(xz, key=lambda e: abs(e - (-0.5))))
        assert sum(xz).real == pytest.approx(tr, abs=1e-12)
        assert (xz[0] * xz[1]).real == pytest.approx(det, abs=1e-12)

    def test_matches_general_eigensolver(self):
        rng = np.random.default_rng(29)
        for p in random_params(rng, 200):
            rep = stability_eigenvalues(p)
            ref = np.linalg.eigvals(drift_model(p).matrix)
            got = sorted(rep.eigenvalues, key=lambda v: (v.real, v.imag))
            ref = sorted((complex(v) for v in ref), key=lambda v: (v.real, v.imag))
            for a, b in zip(got, ref):
                assert abs(a - b) < 1e-9

    def test_unit_eta_design_theorem(self):
        gamma = 1.7
        for theta in np.arange(-math.pi + 0.1, math.pi, 0.1):
            p = SystemParams(gamma, 1.0, ideal_drive(theta, gamma),
                             ideal_gain(theta, gamma))
            rep = stability_eigenvalues(p)
            expect = sorted([-gamma / 2, -gamma / 2,
                             -gamma * math.cos(theta) ** 2])
            got = sorted(ev.real for ev in rep.eigenvalues)
            assert np.allclose(got, expect, atol=1e-9)
            assert max(abs(ev.imag) for ev in rep.eigenvalues) < 1e-9


class TestDeterministicSolution:
    def rk4_reference(self, p, b0, t_final, n=20000):
        model = drift_model(p)
        f = lambda b: model.matrix @ b + model.offset  # noqa: E731
        b = b0.as_array()
        h = t_final / n
        for _ in range(n):
            k1 = f(b)
            k2 = f(b + 0.5 * h * k1)
            k3 = f(b + 0.5 * h * k2)
            k4 = f(b + h * k3)
            b = b + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return b

    def test_matches_rk4(self):
        rng = np.random.default_rng(31)
        b0 = BlochVector(0.2, 0.4, -0.5)
        for p in random_params(rng, 8):
            for t in (0.7, 2.3):
                ref = self.rk4_reference(p, b0, t)
                out = deterministic_solution(p, b0, np.array([t]))[0]
                assert np.allclose(out, ref, atol=1e-9)

    def test_starts_at_initial_state(self):
        p = SystemParams(1.0, 0.8, 0.3, -0.4)
        out = deterministic_solution(p, BlochVector(0.1, 0.2, 0.3), np.array([0.0]))
        assert np.allclose(out[0], [0.1, 0.2, 0.3], atol=1e-14)

    def test_converges_to_steady_state(self):
        p = SystemParams(1.0, 0.6, 0.4, -0.7)
        out = deterministic_solution(p, BlochVector(0, 0, -1), np.array([80.0]))[0]
        ss = feedback_steady_state(p).as_array()
        assert np.allclose(out, ss, atol=1e-12)

    def test_marginal_equator_design(self):
        # singular x-z block with vanishing offset: x frozen, y,z decay
        p = SystemParams(1.0, 1.0, 0.0, -0.5)
        b0 = BlochVector(0.3, 0.2, -0.4)
        t = np.array([0.0, 1.0, 5.0])
        out = deterministic_solution(p, b0, t)
        assert np.allclose(out[:, 0], 0.3, atol=1e-12)
        assert np.allclose(out[:, 1], 0.2 * np.exp(-0.5 * t), atol=1e-12)
        assert np.allclose(out[:, 2], -0.4 * np.exp(-0.5 * t), atol=1e-12)

    def test_oscillatory_branch(self):
        # strong drive makes the x-z pair complex; solution must stay real
        p = SystemParams(1.0, 1.0, 2.0, 0.0)
        rep = stability_eigenvalues(p)
        assert max(abs(ev.imag) for ev in rep.eigenvalues) > 0.1
        b0 = BlochVector(0.0, 0.0, -1.0)
        out = deterministic_solution(p, b0, np.linspace(0, 3, 7))
        ref = self.rk4_reference(p, b0, 3.0)
        assert np.allclose(out[-1], ref, atol=1e-9)


class TestParamValidation:
    def test_gamma_positive(self):
        with pytest.raises(InvalidParamsError):
            SystemParams(0.0, 1.0, 0.0, 0.0)

    def test_eta_range(self):
        with pytest.raises(InvalidParamsError):
            SystemParams(1.0, 1.2, 0.0, 0.0)
        with pytest.raises(InvalidParamsError):
            SystemParams(1.0, -0.1, 0.0, 0.0)
