import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bousslab.model import (
    ConfigurationError,
    DomainError,
    InitialDataSpec,
    X_WARMUP,
    Z_MODEL,
    build_initial_state,
    frame_transform,
    make_params,
    rho0_profile,
    smooth_ramp,
    validate_spec,
    velocity_to_z_frame,
    warmup_support,
    x_to_z,
    z_to_x,
)


class TestMakeParams:
    def test_unit_betas(self):
        p = make_params(1.0, 1.0)
        assert p.gamma1 == 0.0 and p.gamma2 == 0.0
        assert p.blow_up_range

    def test_desk_values(self):
        p = make_params(1.2, 0.9)
        assert p.gamma1 == pytest.approx(0.1823216, abs=1e-7)
        assert p.gamma2 == pytest.approx(0.1053605, abs=1e-7)
        assert p.blow_up_range
        # default epsilon is half the margin: ln(3/2)/2
        assert p.epsilon == pytest.approx(math.log(1.5) / 2, abs=1e-12)
        assert p.epsilon == pytest.approx(0.2027326, abs=1e-7)

    def test_outside_range(self):
        assert not make_params(2.5, 1.0).blow_up_range

    def test_range_flag_equivalence(self):
        # beta1 < 2 beta2  <=>  2 exp(-g1 - g2) > 1
        for b1, b2 in [(1.0, 0.51), (1.5, 0.76), (1.9, 0.94), (2.0, 1.0), (1.6, 0.8)]:
            p = make_params(b1, b2)
            assert p.blow_up_range == (2 * math.exp(-p.gamma1 - p.gamma2) > 1.0)

    @pytest.mark.parametrize(
        "b1,b2",
        [(0.9, 0.9), (1.2, 1.1), (1.2, 0.0), (1.2, -0.5), (float("inf"), 0.9)],
    )
    def test_rejects_bad_betas(self, b1, b2):
        with pytest.raises(ConfigurationError):
            make_params(b1, b2)

    def test_rejects_epsilon_outside_margin(self):
        # margin for (1.2, 0.9) is ln(3/2); anything at or above violates the
        # corrected positivity condition 2 exp(-g1-g2-eps) > 1
        with pytest.raises(ConfigurationError):
            make_params(1.2, 0.9, epsilon=1.01 * math.log(1.5))
        with pytest.raises(ConfigurationError):
            make_params(1.2, 0.9, epsilon=-0.1)
        p = make_params(1.2, 0.9, epsilon=0.9 * math.log(1.5))
        assert 2 * math.exp(-p.gamma1 - p.gamma2 - p.epsilon) > 1.0

    @given(
        st.floats(min_value=1.0, max_value=5.0),
        st.floats(min_value=0.05, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_rederivation_idempotent(self, b1, b2):
        p = make_params(b1, b2)
        q = make_params(math.exp(p.gamma1), math.exp(-p.gamma2))
        assert abs(q.gamma1 - p.gamma1) <= 1e-12
        assert abs(q.gamma2 - p.gamma2) <= 1e-12


class TestBump:
    def test_ramp_endpoints_and_midpoint(self):
        r = smooth_ramp(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
        assert r[0] == 0.0 and r[1] == 0.0
        assert r[2] == pytest.approx(0.5, abs=1e-15)
        assert r[3] == 1.0 and r[4] == 1.0

    def test_plateau_is_exactly_one(self):
        spec = InitialDataSpec()
        assert rho0_profile((spec.L0 + spec.L3) / 2, spec) == 1.0

    def test_downramp_midpoint_is_half(self):
        spec = InitialDataSpec()
        assert rho0_profile((spec.L3 + spec.L4) / 2, spec) == pytest.approx(0.5, abs=1e-15)

    def test_outside_support_is_zero(self):
        spec = InitialDataSpec()
        assert rho0_profile(spec.L4 + 0.1, spec) == 0.0
        assert rho0_profile(0.9, spec) == 0.0

    def test_amplitude_scaling(self):
        spec = InitialDataSpec(rho_amplitude=0.0)
        z = np.linspace(0, 16, 100)
        assert np.all(rho0_profile(z, spec) == 0.0)

    def test_discrete_smoothness_refines(self):
        # second differences within the uniform down-ramp zone shrink ~h^2
        p = make_params(1.2, 0.9)
        devs = []
        for n in (512, 2048):
            st_ = build_initial_state(InitialDataSpec(n_markers=n), p)
            m = (st_.z > st_.z[0] + 1e-9) & (st_.z > 12.0 + 1e-6) & (st_.z < 14.0 - 1e-6)
            idx = np.nonzero(m)[0]
            d2 = np.abs(st_.rho[idx + 1] - 2 * st_.rho[idx] + st_.rho[idx - 1])
            devs.append(np.max(d2))
        assert devs[1] < 0.35 * devs[0]


class TestInitialState:
    def test_desk_state_invariants(self):
        p = make_params(1.2, 0.9)
        spec = InitialDataSpec()
        st_ = build_initial_state(spec, p)
        assert np.all(np.diff(st_.z) > 0)
        assert np.all(st_.phi == st_.z)
        assert np.all((st_.rho >= 0) & (st_.rho <= 1))
        assert np.all(st_.omega == 0) and np.all(st_.W == 0) and np.all(st_.D == 1)
        assert st_.n >= spec.n_markers
        for label in (1.0, spec.L0, spec.L1, spec.L2, spec.L3, spec.L4):
            assert st_.z[st_.label_index(label)] == label

    def test_ramp_zones_are_denser(self):
        p = make_params(1.2, 0.9)
        st_ = build_initial_state(InitialDataSpec(), p)
        gaps = np.diff(st_.z)
        mids = 0.5 * (st_.z[1:] + st_.z[:-1])
        ramp = gaps[(mids > 1.0) & (mids < 2.0)].mean()
        plateau = gaps[(mids > 4.0) & (mids < 8.0)].mean()
        assert ramp < 0.35 * plateau

    def test_warmup_layout(self):
        p = make_params(1.0, 1.0)
        spec = InitialDataSpec(frame=X_WARMUP, n_markers=256)
        st_ = build_initial_state(spec, p)
        assert 0.0 < st_.z[0] and st_.z[-1] < 1.0
        s_lo, s_hi = warmup_support(spec)
        for label in (s_lo, 1.0 / 3.0, 2.0 / 3.0, s_hi):
            st_.label_index(label)
        assert rho0_profile(0.5, spec) == 1.0
        assert rho0_profile(s_lo / 2, spec) == 0.0

    @pytest.mark.parametrize(
        "kw,msg",
        [
            (dict(L0=0.5), "1 < L0"),
            (dict(L0=9.0), "L0 < L1"),
            (dict(L0=3.0), "L0 <= L1/4"),
            (dict(L2=8.01), "L2 >= L1 + gamma1"),
            (dict(n_markers=10), "n_markers"),
            (dict(rho_amplitude=1.5), "rho_amplitude"),
        ],
    )
    def test_validation_names_constraint(self, kw, msg):
        import re

        p = make_params(1.2, 0.9)
        with pytest.raises(ConfigurationError, match=re.escape(msg)):
            validate_spec(InitialDataSpec(**kw), p)

    def test_gamma_ladder_coupling(self):
        # gamma1 < L1/4 fails for a small ladder with a large beta1
        p = make_params(3.4, 1.0)  # gamma1 ~ 1.22 >= L1/4 = 1.2
        with pytest.raises(ConfigurationError, match="gamma1"):
            validate_spec(InitialDataSpec(L1=4.8, L0=1.2, L2=6.5, L3=7.0, L4=8.0), p)


class TestFrameTransform:
    def test_z_zero_is_x_one(self):
        assert frame_transform(0.0, "z_to_x") == 1.0

    def test_round_trip_deep(self):
        x = math.exp(-14.0)
        z = frame_transform(x, "x_to_z")
        assert z == pytest.approx(14.0, rel=1e-14)
        assert frame_transform(z, "z_to_x") == pytest.approx(x, rel=1e-14)

    def test_velocity_map_example(self):
        # omega == 1, beta1=1.2, beta2=0.9 at x = 0.5: u = 0.5 ln(0.8)
        u = 0.5 * math.log(0.8)
        assert u == pytest.approx(-0.1115718, abs=1e-7)
        assert velocity_to_z_frame(u, 0.5) == pytest.approx(0.2231436, abs=1e-7)

    @pytest.mark.parametrize("bad,direction", [(0.0, "x_to_z"), (-1.0, "x_to_z"), (1.5, "x_to_z"), (-0.1, "z_to_x")])
    def test_domain_errors(self, bad, direction):
        with pytest.raises(DomainError):
            frame_transform(bad, direction)

    def test_unknown_direction(self):
        with pytest.raises(DomainError):
            frame_transform(1.0, "sideways")

    @given(st.floats(min_value=1e-12, max_value=1.0))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, x):
        assert z_to_x(x_to_z(x)) == pytest.approx(x, rel=1e-14)
