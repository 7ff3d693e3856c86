"""Tests for the canonical sorting-line topology and event classification."""

import pytest

from sortline import petri
from sortline.factory import (COLOR_BLUE, COLOR_GREEN, ConfigError,
                              EVENT_COLLISION, EVENT_CORRECT, EVENT_FIRED,
                              EVENT_GOAL, EVENT_INVALID, EVENT_MISSORT,
                              EVENT_NON_ACTION, FactoryConfig, base_marking,
                              build_factory, classify_step, delivery_outcomes,
                              inject_products, line_is_empty, scripted_action)
from sortline.petri import (Completion, enabled_transitions, fire, product,
                            validate_net)


@pytest.fixture(scope="module")
def topo():
    return build_factory()


# ------------------------------------------------------------ construction

def test_census_and_sizes(topo):
    net = topo.net
    assert len(net.places) == 24
    assert len(net.transitions) == 11
    assert topo.n_actions == 12
    assert topo.obs_length == 101
    by_cls = {}
    for p in net.places:
        by_cls[p.cls] = by_cls.get(p.cls, 0) + 1
    assert by_cls == {"resource": 2, "storage": 4, "regular": 5,
                      "regular_short": 2, "hidden": 11}


def test_every_transition_owns_a_distinct_hidden_place(topo):
    hiddens = [tr.hidden for tr in topo.net.transitions]
    assert len(set(hiddens)) == 11
    assert all(topo.net.places[h].cls == "hidden" for h in hiddens)


def test_default_net_validates_clean(topo):
    m = inject_products(topo, base_marking(topo), [COLOR_GREEN, COLOR_BLUE])
    assert validate_net(topo.net, initial=m) == []


def test_duration_overrides_apply():
    t = build_factory(FactoryConfig(durations={"install_rivets": 3}))
    j = t.net.transition_index("install_rivets")
    assert t.net.transitions[j].duration == 3


def test_duration_out_of_bounds_rejected():
    with pytest.raises(ConfigError):
        build_factory(FactoryConfig(durations={"install_rivets": 5}))


def test_unknown_transition_in_durations_rejected():
    with pytest.raises(ConfigError):
        build_factory(FactoryConfig(durations={"warp_drive": 1}))


def test_bad_max_products_rejected():
    with pytest.raises(ConfigError):
        build_factory(FactoryConfig(max_products=0))


# ------------------------------------------------------------ injection

def test_inject_single_product_counters(topo):
    m = inject_products(topo, base_marking(topo), [COLOR_BLUE])
    assert m.count(topo.p_store_carriage) == 1
    assert m.count(topo.p_store_lower) == 1
    assert m.count(topo.p_store_upper) == 1
    for p in topo.regular_places + topo.short_places:
        assert m.count(p) == 0


def test_inject_three_products_counters(topo):
    m = inject_products(topo, base_marking(topo),
                        [COLOR_BLUE, COLOR_GREEN, COLOR_GREEN])
    assert m.count(topo.p_store_carriage) == 3
    assert m.count(topo.p_store_lower) == 3
    assert m.count(topo.p_store_upper) == 3
    # color order is preserved for the loader
    assert [t.color for t in m.contents[topo.p_store_lower]] \
        == [COLOR_BLUE, COLOR_GREEN, COLOR_GREEN]


def test_inject_empty_rejected(topo):
    with pytest.raises(ConfigError):
        inject_products(topo, base_marking(topo), [])


def test_inject_over_max_rejected(topo):
    with pytest.raises(ConfigError):
        inject_products(topo, base_marking(topo), [COLOR_BLUE] * 4)


def test_inject_unknown_color_rejected(topo):
    with pytest.raises(ConfigError):
        inject_products(topo, base_marking(topo), ["purple"])


def test_initially_only_loading_is_enabled(topo):
    m = inject_products(topo, base_marking(topo), [COLOR_GREEN] * 3)
    assert enabled_transitions(topo.net, m) == [topo.t_load]


def test_base_marking_has_free_resources(topo):
    m = base_marking(topo)
    assert m.count(topo.r_rotary) == 1
    assert m.count(topo.r_assembly) == 1
    assert line_is_empty(topo, m)
    # goods in the stores do not count as "on the line"
    assert line_is_empty(topo, inject_products(topo, m, [COLOR_BLUE]))


# ------------------------------------------------------- event classification

def mk_completion(topo, transition, tok):
    place = topo.p_storage if transition == topo.t_storage_delivery else None
    deposits = ((place, tok),) if place is not None else ()
    return Completion(transition, tok, deposits)


def test_correct_delivery_green_to_storage(topo):
    comp = mk_completion(topo, topo.t_storage_delivery, product(COLOR_GREEN, True))
    out = delivery_outcomes(topo, [comp])
    assert out == [("correct", topo.p_storage, comp.payload)]


def test_correct_delivery_blue_shipped(topo):
    comp = mk_completion(topo, topo.t_ship, product(COLOR_BLUE, True))
    (kind, place, _tok), = delivery_outcomes(topo, [comp])
    assert kind == "correct" and place is None


@pytest.mark.parametrize("transition_attr,tok", [
    ("t_storage_delivery", product(COLOR_BLUE, True)),    # finished blue to storage
    ("t_storage_delivery", product(COLOR_GREEN, False)),  # raw green to storage
    ("t_ship", product(COLOR_GREEN, True)),               # finished green shipped
    ("t_ship", product(COLOR_BLUE, False)),               # raw blue shipped
])
def test_missort_cases(topo, transition_attr, tok):
    comp = mk_completion(topo, getattr(topo, transition_attr), tok)
    (kind, _place, _tok), = delivery_outcomes(topo, [comp])
    assert kind == "missort"


def test_ordinary_move_is_not_a_delivery(topo):
    j = topo.net.transition_index("belt_to_rotary")
    comp = Completion(j, product(COLOR_BLUE), ((topo.p_rotary, product(COLOR_BLUE)),))
    assert delivery_outcomes(topo, [comp]) == []


def test_classify_collision_beats_everything(topo):
    comp = mk_completion(topo, topo.t_storage_delivery, product(COLOR_GREEN, True))
    ev = classify_step(topo, 3, True, True, [comp], correct_before=2, n_products=3)
    assert ev.event == EVENT_COLLISION


def test_classify_missort_beats_goal(topo):
    good = mk_completion(topo, topo.t_ship, product(COLOR_BLUE, True))
    bad = mk_completion(topo, topo.t_storage_delivery, product(COLOR_BLUE, True))
    ev = classify_step(topo, 11, False, False, [good, bad], correct_before=2, n_products=3)
    assert ev.event == EVENT_MISSORT
    assert ev.correct == 1 and ev.missorted == 1
    assert ev.to_remove == ((topo.p_storage, bad.payload),)


def test_classify_goal_on_last_delivery(topo):
    comp = mk_completion(topo, topo.t_ship, product(COLOR_BLUE, True))
    ev = classify_step(topo, 11, False, False, [comp], correct_before=2, n_products=3)
    assert ev.event == EVENT_GOAL


def test_classify_correct_delivery_midway(topo):
    comp = mk_completion(topo, topo.t_ship, product(COLOR_BLUE, True))
    ev = classify_step(topo, 11, False, False, [comp], correct_before=0, n_products=3)
    assert ev.event == EVENT_CORRECT


def test_classify_invalid_versus_fired_versus_wait(topo):
    assert classify_step(topo, 4, False, False, [], 0, 3).event == EVENT_INVALID
    assert classify_step(topo, 4, True, False, [], 0, 3).event == EVENT_FIRED
    assert classify_step(topo, topo.non_action, False, False, [], 0, 3).event \
        == EVENT_NON_ACTION


# ------------------------------------------------------------ behaviour

def test_rivets_only_installed_by_assembly(topo):
    riveters = [tr.name for tr in topo.net.transitions if tr.transform == "rivet"]
    assert riveters == ["install_rivets"]


def test_loader_takes_color_from_part_queue(topo):
    m = inject_products(topo, base_marking(topo), [COLOR_GREEN, COLOR_BLUE])
    m = fire(topo.net, m, topo.t_load)
    for _ in range(2):
        m, comps = petri.tick(topo.net, m)
    assert m.contents[topo.p_entry][0].color == COLOR_GREEN
    assert m.contents[topo.p_entry][0].kind == petri.KIND_PRODUCT
    assert not m.contents[topo.p_entry][0].riveted


def scripted_episode(colors, reward="r1"):
    from sortline.env import SortingLineEnv
    env = SortingLineEnv(reward=reward)
    env.reset(colors=colors)
    total, steps = 0.0, 0
    while True:
        a = scripted_action(env.topology, env.marking)
        res = env.step(a)
        total += res.reward
        steps += 1
        if res.terminated or res.truncated:
            return res, total, steps


@pytest.mark.parametrize("colors", [
    [COLOR_GREEN], [COLOR_BLUE],
    [COLOR_BLUE, COLOR_GREEN, COLOR_GREEN],
    [COLOR_GREEN, COLOR_BLUE, COLOR_GREEN],
    [COLOR_BLUE, COLOR_BLUE, COLOR_BLUE],
    [COLOR_GREEN, COLOR_GREEN, COLOR_GREEN],
])
def test_scripted_operator_completes_every_mix(colors):
    res, total, steps = scripted_episode(colors)
    assert res.terminated and res.info["event"] == EVENT_GOAL
    assert res.info["correct"] == len(colors)
    assert res.info["missorted"] == 0
    assert total == 1.0  # perfect run under the sparse reward
    assert steps <= 60


def test_scripted_operator_reward_accounting_with_step_costs():
    res, total, steps = scripted_episode([COLOR_GREEN, COLOR_BLUE, COLOR_BLUE],
                                         reward="r2")
    assert res.info["event"] == EVENT_GOAL
    # every non-terminal step costs 0.001, no invalid actions happen
    assert total == pytest.approx(1.0 - 0.001 * (steps - 1))
