"""Constraint oracles: direct-substitution spot values, an independent
closed-form drift check, and central finite differences of every row's
defining function along the modeled flow."""

import numpy as np
import pytest

from inspect_rta import _kernels
from inspect_rta.constants import DEFAULT_CONSTANTS
from inspect_rta.constraints import (
    ConstraintContext,
    all_h_values,
    build_constraint_specs,
    evaluate_rows,
    h_batt,
    h_chief,
    h_deputy,
    h_ez,
    h_omega_box,
    h_prox,
    h_psm,
    h_speed,
    h_temp,
    h_velocity_box,
    lie_derivatives,
    hocbf_compose,
    pack_constraint_params,
    psm_trig_grid,
    row_index,
    row_names,
)
from inspect_rta.dynamics import SunState, pack_state, random_unit_quaternion
from inspect_rta.errors import GradientSingularityError
from tests.helpers import make_state

C = DEFAULT_CONSTANTS
A_MAX = 1.0 / 12.0


def ctx_of(state, others=(), sun_theta=0.0):
    return ConstraintContext(
        state=state, others=list(others), sun=SunState(sun_theta)
    )


class TestChief:
    def test_boundary(self):
        s = make_state(p=(15.0, 0, 0))
        assert h_chief(ctx_of(s)) == pytest.approx(0.0, abs=1e-12)

    def test_direct_substitution(self):
        s = make_state(p=(100.0, 0, 0))
        assert h_chief(ctx_of(s)) == pytest.approx(np.sqrt(2 * A_MAX * 85), rel=1e-12)
        assert h_chief(ctx_of(s)) == pytest.approx(3.7639, abs=1e-4)

    def test_inward_velocity_subtracts(self):
        s0 = make_state(p=(100.0, 0, 0))
        s1 = make_state(p=(100.0, 0, 0), v=(-1.0, 0, 0))
        assert h_chief(ctx_of(s1)) == pytest.approx(h_chief(ctx_of(s0)) - 1.0, rel=1e-12)

    def test_continuation_is_continuous(self):
        vals = [
            h_chief(ctx_of(make_state(p=(r, 0, 0))))
            for r in (15.0 - 1e-8, 15.0, 15.0 + 1e-8)
        ]
        assert abs(vals[2] - vals[0]) < 1e-3
        assert h_chief(ctx_of(make_state(p=(10.0, 0, 0)))) < 0


class TestDeputy:
    def test_boundary_zero_relative_velocity(self):
        a = make_state(p=(50.0, 0, 0), v=(0.1, 0.2, 0))
        b = make_state(p=(60.0, 0, 0), v=(0.1, 0.2, 0))
        assert h_deputy(ctx_of(a, [b]), 0) == pytest.approx(0.0, abs=1e-12)

    def test_direct_substitution(self):
        a = make_state(p=(0.0, 0, 0), v=(0.3, 0, 0))
        b = make_state(p=(110.0, 0, 0), v=(0.3, 0, 0))
        assert h_deputy(ctx_of(a, [b]), 0) == pytest.approx(
            np.sqrt(4 * A_MAX * 100), rel=1e-12
        )
        assert h_deputy(ctx_of(a, [b]), 0) == pytest.approx(5.7735, abs=1e-4)

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = make_state(p=rng.uniform(-100, 100, 3), v=rng.uniform(-1, 1, 3))
            b = make_state(p=rng.uniform(-100, 100, 3), v=rng.uniform(-1, 1, 3))
            assert h_deputy(ctx_of(a, [b]), 0) == h_deputy(ctx_of(b, [a]), 0)


class TestSpeedProx:
    def test_speed_values(self):
        assert h_speed(ctx_of(make_state())) == pytest.approx(0.2)
        s = make_state(p=(100.0, 0, 0))
        assert h_speed(ctx_of(s)) == pytest.approx(0.2 + 7.5 * C.n * 100, rel=1e-12)
        assert h_speed(ctx_of(s)) == pytest.approx(0.97025, abs=1e-5)
        lim = 0.2 + 7.5 * C.n * 100
        s_at = make_state(p=(100.0, 0, 0), v=(0, lim, 0))
        assert h_speed(ctx_of(s_at)) == pytest.approx(0.0, abs=1e-12)

    def test_prox_values(self):
        assert h_prox(ctx_of(make_state(p=(800.0, 0, 0)))) == pytest.approx(0.0, abs=1e-12)
        s = make_state(p=(100.0, 0, 0))
        assert h_prox(ctx_of(s)) == pytest.approx(np.sqrt(2 * A_MAX * 700), rel=1e-12)
        assert h_prox(ctx_of(s)) == pytest.approx(10.8012, abs=1e-4)
        outward = make_state(p=(100.0, 0, 0), v=(0.5, 0, 0))
        assert h_prox(ctx_of(outward)) == pytest.approx(h_prox(ctx_of(s)) - 0.5, rel=1e-12)


def closed_form_drift_distance(p, v, t):
    """Independent inline CWH transition for the oracle."""
    n = C.n
    nt = n * t
    cs, sn = np.cos(nt), np.sin(nt)
    x = (4 - 3 * cs) * p[0] + sn / n * v[0] + 2 / n * (1 - cs) * v[1]
    y = (
        6 * (sn - nt) * p[0]
        + p[1]
        - 2 / n * (1 - cs) * v[0]
        + (4 * sn - 3 * nt) / n * v[1]
    )
    z = cs * p[2] + sn / n * v[2]
    return np.sqrt(x * x + y * y + z * z)


class TestPsm:
    def test_drifting_far_state(self):
        s = make_state(p=(100.0, 0, 0))
        grid = np.array(
            [closed_form_drift_distance(s.trans.p, s.trans.v, t) for t in range(501)]
        )
        assert h_psm(ctx_of(s)) == pytest.approx(grid.min() - 15.0, rel=1e-12)

    def test_immediate_violation(self):
        s = make_state(p=(15.0, 0, 0), v=(-0.5, 0, 0))
        assert h_psm(ctx_of(s)) < 0

    def test_far_boundary_safe(self):
        s = make_state(p=(800.0, 0, 0))
        assert h_psm(ctx_of(s)) > 0


class TestBoxes:
    def test_velocity_box(self):
        assert np.allclose(h_velocity_box(ctx_of(make_state())), [25.0, 25, 25])
        s = make_state(v=(5.0, 0, 0))
        assert h_velocity_box(ctx_of(s))[0] == pytest.approx(0.0, abs=1e-12)

    def test_omega_box(self):
        w = 2.0 * np.pi / 180.0
        s = make_state(w=(w, 0, 0))
        vals = h_omega_box(ctx_of(s))
        assert vals[0] == pytest.approx(0.0, abs=1e-9)
        assert vals[1] == pytest.approx(w * w, rel=1e-9)


class TestAttitudeConstraints:
    def test_ez_boresight_at_sun(self):
        s = make_state()  # identity: boresight +x = sun at theta 0
        assert h_ez(ctx_of(s)) == pytest.approx(-0.349066, abs=1e-6)

    def test_ez_boresight_anti_sun(self):
        q = np.array([0.0, 0, 1.0, 0])
        s = make_state(q=q)
        assert h_ez(ctx_of(s)) == pytest.approx(np.pi - np.deg2rad(20), rel=1e-9)
        assert h_ez(ctx_of(s)) == pytest.approx(2.79253, abs=1e-5)

    def test_ez_boundary(self):
        ang = np.deg2rad(20.0)
        q = np.array([0.0, 0, np.sin(ang / 2), np.cos(ang / 2)])
        s = make_state(q=q)
        assert h_ez(ctx_of(s)) == pytest.approx(0.0, abs=1e-12)

    def test_temp_boundary_with_vanished_weights(self):
        # identity attitude: node -y, sun +x, earth -x: both incidences pi/2
        s = make_state(t=10.0)
        assert h_temp(ctx_of(s)) == pytest.approx(0.0, abs=1e-12)

    def test_temp_direct_substitution(self):
        q = np.array([0.0, 0, np.sin(np.pi / 4), np.cos(np.pi / 4)])  # node -> +x
        s = make_state(q=q, t=5.0)
        expected = 10 - 5 - 0.05 * (np.pi / 2) - 0.01 * (np.pi / 2 - np.pi)
        assert h_temp(ctx_of(s)) == pytest.approx(expected, rel=1e-12)
        assert h_temp(ctx_of(s)) == pytest.approx(4.93717, abs=1e-5)

    def test_batt_boundary(self):
        q = np.array([0.0, 0, np.sin(np.pi / 4), np.cos(np.pi / 4)])  # node -> +x
        s = make_state(q=q, e=1000.0)
        assert h_batt(ctx_of(s)) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Lie-derivative finite-difference oracle
# ---------------------------------------------------------------------------

def cwh_accel(p, v):
    n = C.n
    return np.array(
        [3 * n * n * p[0] + 2 * n * v[1], -2 * n * v[0], -(n * n) * p[2]]
    )


def flow_direction(x, others, u, cp):
    """State velocity of the modeled system: controlled self, ballistic
    neighbours, frozen sun."""
    dx = np.asarray(_kernels.state_derivative(x, u, cp)).copy()
    dx[15] = 0.0
    d_others = np.zeros_like(others)
    for j in range(others.shape[0]):
        d_others[j, 0:3] = others[j, 3:6]
        d_others[j, 3:6] = cwh_accel(others[j, 0:3], others[j, 3:6])
    return dx, d_others


def sample_feasible(rng, n_others=1):
    """Rejection-sample a state keeping every row away from boundaries,
    gradient seams, and clamp switches."""
    cp = C.pack()
    pp = pack_constraint_params(C)
    cos_nt, sin_nt, t_grid = psm_trig_grid(C)
    while True:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        p = direction * rng.uniform(40, 600)
        speed_cap = min(0.2 + 7.5 * C.n * np.linalg.norm(p), 4.0)
        v = rng.normal(size=3)
        v = v / np.linalg.norm(v) * rng.uniform(0.0, 0.7) * speed_cap
        q = random_unit_quaternion(rng)
        w = rng.uniform(-0.8, 0.8, size=3) * 0.0349
        x = np.empty(16)
        x[0:3] = p
        x[3:6] = v
        x[6:10] = q
        x[10:13] = w
        x[13] = rng.uniform(2000, 7000)
        x[14] = rng.uniform(-5, 8)
        x[15] = rng.uniform(0, 2 * np.pi)
        others = np.zeros((n_others, 6))
        ok_others = True
        for j in range(n_others):
            od = rng.normal(size=3)
            od /= np.linalg.norm(od)
            others[j, 0:3] = p + od * rng.uniform(30, 200)
            if np.linalg.norm(others[j, 0:3]) > 700:
                ok_others = False
            others[j, 3:6] = rng.uniform(-0.5, 0.5, size=3)
        if not ok_others:
            continue
        h_raw, psi, lf, gu, rhs, degen = _kernels.constraint_rows(
            x, others, cp, pp, cos_nt, sin_nt, t_grid
        )
        if degen.any():
            continue
        # per-family margins matched to each row's natural scale
        margins = np.concatenate(
            [
                [0.5],                      # chief
                np.full(n_others, 0.5),     # deputies
                [0.02, 0.5, 0.5],           # speed, prox, psm
                [1.0, 1.0, 1.0],            # velocity boxes
                [0.05, 0.2, 50.0],          # ez, temp, batt
                [1e-4, 1e-4, 1e-4],         # rate boxes
            ]
        )
        if np.any(h_raw < margins) or np.any(psi < 0.2 * margins):
            continue
        # stay away from thermal/power clamp switches for smooth FD
        rot = np.asarray(_kernels.quat_to_rot(q))
        sun = np.array([np.cos(x[15]), np.sin(x[15]), 0.0])
        node = -rot[:, 1]
        panel = -rot[:, 0]
        margins = [
            abs(node @ sun),
            abs(node @ np.array([-1.0, 0, 0])),
            abs(panel @ sun),
        ]
        if min(margins) < 1e-3:
            continue
        return x, others


def fd_rate(value_fn, x, others, dx, d_others, eps=1e-6):
    a = value_fn(x + eps * dx, others + eps * d_others)
    b = value_fn(x - eps * dx, others - eps * d_others)
    return (a - b) / (2 * eps)


class TestLieDerivatives:
    def test_analytic_matches_finite_difference(self):
        """Every row's (L_f + L_g u) against central differences along the
        flow at 1000 random feasible states."""
        rng = np.random.default_rng(2024)
        cp = C.pack()
        pp = pack_constraint_params(C)
        cos_nt, sin_nt, t_grid = psm_trig_grid(C)

        def rows_at(x, others):
            return _kernels.constraint_rows(x, others, cp, pp, cos_nt, sin_nt, t_grid)

        worst = 0.0
        for trial in range(1000):
            x, others = sample_feasible(rng, n_others=1 + trial % 2)
            u = np.concatenate(
                [
                    rng.uniform(-0.8, 0.8, size=3) * C.f_max,
                    rng.uniform(-0.8, 0.8, size=3) * C.tau_max,
                ]
            )
            dx, d_others = flow_direction(x, others, u, cp)
            h_raw, psi, lf, gu, rhs, degen = rows_at(x, others)
            m = h_raw.size

            def h_of(idx):
                return lambda xx, oo: rows_at(xx, oo)[0][idx]

            def psi_of(idx):
                return lambda xx, oo: rows_at(xx, oo)[1][idx]

            for i in range(m):
                analytic = float(lf[i] + gu[i] @ u)
                fd = fd_rate(psi_of(i), x, others, dx, d_others)
                denom = max(abs(analytic), abs(fd), 1e-5)
                rel = abs(analytic - fd) / denom
                worst = max(worst, rel)
                assert rel < 1e-4, (
                    f"row {row_names(others.shape[0])[i]} trial {trial}: "
                    f"analytic {analytic} vs fd {fd}"
                )
                # second-order rows: also validate the first-stage rate
                # (psi = h_dot + gain*h) against differences of h itself
                name = row_names(others.shape[0])[i]
                if name in ("ez", "temp", "batt"):
                    h_dot_analytic = float(psi[i] - 5.0 * h_raw[i])
                    h_dot_fd = fd_rate(h_of(i), x, others, dx, d_others)
                    denom = max(abs(h_dot_analytic), abs(h_dot_fd), 1e-5)
                    assert abs(h_dot_analytic - h_dot_fd) / denom < 1e-4

    def test_constant_row_zero_derivative(self):
        # omega box at w = 0 has zero gradient: lf and gu vanish
        s = make_state(p=(100.0, 0, 0))
        ctx = ctx_of(s)
        spec = [sp for sp in build_constraint_specs(0) if sp.name == "w1"][0]
        lf, gu = lie_derivatives(spec, ctx)
        assert lf == 0.0
        assert np.allclose(gu, 0.0)

    def test_gradient_singularity_raises(self):
        s = make_state(p=(0.0, 0, 0))
        ctx = ctx_of(s)
        spec = build_constraint_specs(0)[0]  # chief
        with pytest.raises(GradientSingularityError):
            lie_derivatives(spec, ctx)


class TestHocbf:
    def test_degree_one_passthrough(self):
        s = make_state(p=(100.0, 0, 0), v=(0.1, 0, 0))
        ctx = ctx_of(s)
        spec = build_constraint_specs(0)[0]
        lf1, gu1 = lie_derivatives(spec, ctx)
        lf2, gu2, stage = hocbf_compose(spec, ctx)
        assert lf1 == lf2 and np.array_equal(gu1, gu2)
        assert stage == pytest.approx(h_chief(ctx))

    def test_ez_row_depends_on_torque(self):
        rng = np.random.default_rng(5)
        s = make_state(
            p=(100.0, 0, 0), q=random_unit_quaternion(rng), w=(0.01, -0.01, 0.02)
        )
        ctx = ctx_of(s, sun_theta=1.0)
        spec = [sp for sp in build_constraint_specs(0) if sp.name == "ez"][0]
        lf, gu, stage = hocbf_compose(spec, ctx)
        assert np.any(np.abs(gu[3:6]) > 0)
        assert np.allclose(gu[0:3], 0.0)

    def test_stationary_attitude_stage_reduces_to_alpha(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            s = make_state(p=(80.0, 0, 0), q=random_unit_quaternion(rng), w=(0, 0, 0))
            ctx = ctx_of(s, sun_theta=rng.uniform(0, 2 * np.pi))
            spec = [sp for sp in build_constraint_specs(0) if sp.name == "ez"][0]
            try:
                lf, gu, stage = hocbf_compose(spec, ctx)
            except GradientSingularityError:
                continue
            assert stage == pytest.approx(5.0 * h_ez(ctx), rel=1e-12, abs=1e-12)

    def test_degree_two_rows_have_control_authority(self):
        """Composed rows carry a nonzero control coefficient on at least 99%
        of random states (exact degeneracies are tolerated and logged)."""
        rng = np.random.default_rng(71)
        good = {"ez": 0, "temp": 0, "batt": 0}
        total = 0
        for _ in range(1000):
            x, others = sample_feasible(rng, n_others=0)
            ctx = ConstraintContext(
                state=make_state(
                    p=x[0:3], v=x[3:6], q=x[6:10], w=x[10:13], e=x[13], t=x[14]
                ),
                others=[],
                sun=SunState(x[15]),
            )
            total += 1
            for name in good:
                spec = [sp for sp in build_constraint_specs(0) if sp.name == name][0]
                _, gu, _ = hocbf_compose(spec, ctx)
                if np.any(np.abs(gu[3:6]) > 1e-12):
                    good[name] += 1
        for name, count in good.items():
            assert count >= 0.99 * total, name


class TestRowConsistency:
    def test_kernel_rows_match_public_h(self):
        rng = np.random.default_rng(77)
        for _ in range(50):
            x, others = sample_feasible(rng, n_others=2)
            state = make_state(
                p=x[0:3], v=x[3:6], q=x[6:10], w=x[10:13], e=x[13], t=x[14]
            )
            other_states = [
                make_state(p=others[j, 0:3], v=others[j, 3:6]) for j in range(2)
            ]
            ctx = ConstraintContext(
                state=state, others=other_states, sun=SunState(x[15])
            )
            values = all_h_values(ctx)
            assert values["chief"] == pytest.approx(h_chief(ctx), rel=1e-12)
            assert values["deputy_0"] == pytest.approx(h_deputy(ctx, 0), rel=1e-12)
            assert values["deputy_1"] == pytest.approx(h_deputy(ctx, 1), rel=1e-12)
            assert values["speed"] == pytest.approx(h_speed(ctx), rel=1e-12)
            assert values["prox"] == pytest.approx(h_prox(ctx), rel=1e-12)
            assert values["psm"] == pytest.approx(h_psm(ctx), rel=1e-12)
            assert values["vx"] == pytest.approx(h_velocity_box(ctx)[0], rel=1e-12)
            assert values["ez"] == pytest.approx(h_ez(ctx), rel=1e-12)
            assert values["temp"] == pytest.approx(h_temp(ctx), rel=1e-12)
            assert values["batt"] == pytest.approx(h_batt(ctx), rel=1e-12)
            assert values["w1"] == pytest.approx(h_omega_box(ctx)[0], rel=1e-12)

    def test_box_rows_admit_zero_control_inside(self):
        """Velocity and rate boxes satisfy their row at u = 0 whenever the
        state is interior: the box families are forward invariant under zero
        control in their own channel."""
        rng = np.random.default_rng(88)
        for _ in range(200):
            x, others = sample_feasible(rng, n_others=0)
            h_raw, psi, lf, gu, rhs, degen = evaluate_rows(
                ConstraintContext(
                    state=make_state(
                        p=x[0:3], v=x[3:6], q=x[6:10], w=x[10:13], e=x[13], t=x[14]
                    ),
                    others=[],
                    sun=SunState(x[15]),
                )
            )
            names = row_names(0)
            for i, name in enumerate(names):
                if name in ("vx", "vy", "vz", "w1", "w2", "w3"):
                    # row reads gu.u >= rhs; u = 0 must satisfy it
                    assert 0.0 >= rhs[i] - 1e-12, name

    def test_alpha_functions_class_kappa(self):
        for spec in build_constraint_specs(2):
            assert spec.alpha(0.0) == 0.0
            grid = np.linspace(-3, 3, 31)
            vals = np.array([spec.alpha(g) for g in grid])
            assert np.all(np.diff(vals) > 0)
