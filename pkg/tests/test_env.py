import math

import numpy as np
import pytest

from secure_lawn import env as E
from secure_lawn._validation import ConfigError, InputError, UsageError
from secure_lawn.augment import AugmentationSpec
from secure_lawn.radio import Pose, RadioParams, distance, step_secrecy

CFG = E.EnvConfig()


def _action(vx, vy, beam=None, m=4):
    beam = np.ones(2 * m) if beam is None else np.asarray(beam)
    return np.concatenate([[vx, vy], beam])


def test_reset_deterministic():
    a, b = E.reset(CFG, 7), E.reset(CFG, 7)
    assert a == b
    np.testing.assert_array_equal(a.observation(), b.observation())


def test_reset_destination_delta_normalized():
    s = E.reset(CFG, 0)
    diag = math.hypot(200, 200)
    assert s.base_features["dest_dx"] == 200 / diag
    assert s.base_features["dest_dy"] == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert s.base_features["prev_csec"] == 0.0
    assert s.t == 0
    assert s.augmented_features == {}
    assert s.aav == Pose(0, 0, 100)


def test_kinematics_example():
    s = E.reset(CFG, 0)
    out = E.step(s, _action(1, 0), CFG)
    assert (out.next_state.aav.x, out.next_state.aav.y) == (10.0, 0.0)
    assert out.next_state.t == 1


def test_speed_norm_clipped():
    v, w = E.decode_action(_action(1, 1), CFG)
    assert np.hypot(*v) == pytest.approx(10.0, rel=1e-12)
    assert np.vdot(w, w).real == pytest.approx(CFG.radio.p_max, rel=1e-12)


def test_out_of_box_actions_clipped():
    v, _ = E.decode_action(_action(5, 0), CFG)
    np.testing.assert_array_equal(v, [10.0, 0.0])


def test_zero_beam_falls_back_to_uniform():
    _, w = E.decode_action(_action(0, 0, np.zeros(8)), CFG)
    np.testing.assert_allclose(w, np.full(4, math.sqrt(30)), rtol=1e-12)


def test_position_clamped():
    s = E.reset(CFG, 0)
    out = E.step(s, _action(-1, -1), CFG)
    assert (out.next_state.aav.x, out.next_state.aav.y) == (0.0, 0.0)


def test_colocated_eve_without_jammer_gives_no_secrecy():
    cfg = E.EnvConfig(radio=RadioParams(jammer_power=0.0), eve=Pose(10, 0, 100))
    rng = np.random.default_rng(0)
    for _ in range(20):
        s = E.reset(cfg, 0)
        beam = rng.uniform(-1, 1, 8)
        out = E.step(s, _action(1, 0, beam), cfg)
        assert out.c_sec == 0.0


def test_reward_matches_formula():
    s = E.reset(CFG, 0)
    a = _action(0.3, 0.9, np.linspace(-1, 1, 8))
    out = E.step(s, a, CFG)
    v, w = E.decode_action(a, CFG)
    new = Pose(0.3 * 10, 0.9 * 10 / 1.0, 100)
    phys = step_secrecy(CFG.bs, new, CFG.eve, CFG.jammer, w, CFG.radio)
    progress = (distance(Pose(0, 0, 100), CFG.destination) - distance(new, CFG.destination)) / 10
    assert out.reward == 0.1 * phys.c_sec + 1.0 * progress + 0.0
    assert out.base_reward == out.reward
    assert out.intrinsic == 0.0


def test_arrival_bonus_and_terminal():
    cfg = E.EnvConfig(start=Pose(195, 195), destination=Pose(200, 200))
    out = E.step(E.reset(cfg, 0), _action(1, 1), cfg)
    assert out.terminal and out.terminal_reason == "reached"
    assert out.base_reward > 10.0
    with pytest.raises(UsageError):
        E.step(out.next_state, _action(0, 0), cfg)


def test_horizon_termination_and_time():
    cfg = E.EnvConfig(horizon=5)
    s = E.reset(cfg, 0)
    ts = []
    for _ in range(5):
        out = E.step(s, _action(0, 0), cfg)
        s = out.next_state
        ts.append(s.t)
    assert ts == [1, 2, 3, 4, 5]
    assert out.terminal and out.terminal_reason == "horizon"


def test_non_finite_action_rejected():
    with pytest.raises(InputError):
        E.step(E.reset(CFG, 0), _action(float("nan"), 0), CFG)
    with pytest.raises(InputError):
        E.step(E.reset(CFG, 0), np.zeros(3), CFG)


@pytest.mark.parametrize(
    "kwargs",
    [{"horizon": 0}, {"v_max": 0}, {"arrival_radius": 0}, {"width": -1}, {"start": Pose(200, 200)}],
)
def test_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        E.EnvConfig(**kwargs)


def test_position_stays_in_area_and_determinism():
    rng = np.random.default_rng(1)
    actions = rng.uniform(-1.5, 1.5, size=(100, 10))

    def run():
        s, out = E.reset(CFG, 3), []
        for a in actions:
            r = E.step(s, a, CFG)
            out.append(r)
            s = r.next_state
            assert 0 <= s.aav.x <= 200 and 0 <= s.aav.y <= 200
            if r.terminal:
                break
        return out

    first, second = run(), run()
    assert [r.reward for r in first] == [r.reward for r in second]
    assert [r.next_state.aav for r in first] == [r.next_state.aav for r in second]


def test_episode_return_examples():
    s = E.reset(CFG, 0)
    zero = E.StepResult(s, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, False, None)
    assert E.episode_return([zero] * 3).sum_secrecy == 0.0
    one = zero._replace(c_sec=3.0)
    assert E.episode_return([one]) == (1.0, 3.0, False)
    with pytest.raises(InputError):
        E.episode_return([])


def test_replay_oracle_fifty_steps():
    """Fixed policy rollout re-accumulated with an independent loop."""
    rng = np.random.default_rng(5)
    actions = rng.uniform(-1, 1, size=(50, 10))
    actions[:, :2] = np.abs(actions[:, :2]) * 0.2
    s, results = E.reset(CFG, 0), []
    for a in actions:
        r = E.step(s, a, CFG)
        results.append(r)
        s = r.next_state
    ret = E.episode_return(results)

    x, y, total, sec = 0.0, 0.0, 0.0, 0.0
    dest = (200.0, 200.0, 100.0)
    for a in actions:
        vx, vy = a[0] * 10, a[1] * 10
        nx, ny = min(max(x + vx, 0), 200), min(max(y + vy, 0), 200)
        w = a[2:6] + 1j * a[6:]
        w = w * math.sqrt(120) / np.linalg.norm(w)
        phys = step_secrecy(CFG.bs, Pose(nx, ny, 100), CFG.eve, CFG.jammer, w, CFG.radio)
        prog = (math.dist((x, y, 100), dest) - math.dist((nx, ny, 100), dest)) / 10
        total += 0.1 * phys.c_sec + prog
        sec += phys.c_sec
        x, y = nx, ny
    assert ret.sum_reward == pytest.approx(total, rel=1e-12)
    assert ret.sum_secrecy == pytest.approx(sec, rel=1e-12)
    assert not ret.reached


def _spec(weight, features=(("eve_bearing", "atan2(sub(eve_y, aav_y), sub(eve_x, aav_x))"),)):
    return AugmentationSpec(features, "add(mul(0.2, c_sec), progress)", weight)


def test_zero_weight_intrinsic_reproduces_base_trace():
    aug_cfg = E.EnvConfig(augmentation=_spec(0.0))
    rng = np.random.default_rng(2)
    actions = rng.uniform(-1, 1, size=(40, 10))
    s0, s1 = E.reset(CFG, 0), E.reset(aug_cfg, 0)
    for a in actions:
        r0, r1 = E.step(s0, a, CFG), E.step(s1, a, aug_cfg)
        assert r0.reward == r1.reward
        assert r1.intrinsic != 0.0 or r1.c_sec == 0.0
        s0, s1 = r0.next_state, r1.next_state


def test_augmented_reward_and_features():
    cfg = E.EnvConfig(augmentation=_spec(0.5))
    s = E.reset(cfg, 0)
    assert list(s.augmented_features) == ["eve_bearing"]
    assert s.augmented_features["eve_bearing"] == math.atan2(100, 150)
    assert s.observation().shape == (cfg.obs_dim,) == (10,)
    out = E.step(s, _action(1, 0), cfg)
    progress = out.base_reward - 0.1 * out.c_sec
    assert out.intrinsic == pytest.approx(0.2 * out.c_sec + progress, rel=1e-12)
    assert out.reward == out.base_reward + 0.5 * out.intrinsic
    assert out.next_state.augmented_features["eve_bearing"] == math.atan2(100, 150 - 10)


def test_augmented_name_clash_rejected():
    with pytest.raises(ConfigError):
        E.EnvConfig(augmentation=AugmentationSpec((("pos_x", "aav_x"),), "c_sec", 0.1))


def test_bad_expression_falls_back_without_crash():
    spec = AugmentationSpec((("bad", "log(sub(aav_z, aav_z))"),), "div(1, sub(aav_z, aav_z))", 1.0)
    cfg = E.EnvConfig(augmentation=spec)
    out = E.step(E.reset(cfg, 0), _action(1, 1), cfg)
    assert out.next_state.augmented_features["bad"] == 0.0
    assert out.intrinsic == 0.0
    assert spec.diagnostics.errors >= 3


def test_wrapper_and_trace(tmp_path):
    env = E.SecrecyEnv(CFG)
    with pytest.raises(UsageError):
        env.step(_action(0, 0))
    obs = env.reset(0)
    assert obs.shape == (9,)
    results = [env.step(_action(1, 1))[1] for _ in range(3)]
    E.write_trace(tmp_path / "t.csv", results)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ",".join(E.TRACE_FIELDS)
    assert len(lines) == 4
