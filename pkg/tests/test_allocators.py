import random

import pytest

from welfaremax.allocators import (
    AllocatorConfig,
    AllocatorError,
    greedy_marginal,
    max_seq,
    maxgrd,
    round_robin,
    seqgrd,
    seqgrd_nm,
    snake,
    supgrd,
)
from welfaremax.diffusion import Allocation
from welfaremax.oracle import SpreadOracle, WelfareOracle, exact_welfare, optimal_allocation
from welfaremax.utility import ItemCatalog, expected_truncated_utility

from conftest import graph_from, superior_instance

CFG = AllocatorConfig(seed=5, mc_samples=400)


def test_seqgrd_single_item_reduces_to_influence_maximization():
    g = graph_from("0 1 1\n0 2 1\n3 4 1\n")
    cat = ItemCatalog(["a"], prices={"a": 1}, valuations={("a",): 3.5})
    alloc = seqgrd(g, cat, Allocation.empty(), ["a"], {"a": 2}, CFG)
    assert alloc.seeds_for("a") == {0, 3}
    util = expected_truncated_utility(cat, ["a"])[0]
    spread = SpreadOracle(g).spread([0, 3])
    assert exact_welfare(g, cat, alloc) == pytest.approx(util * spread)


def test_seqgrd_exhausts_budgets_with_distinct_seeds(path_graph, blocking_catalog):
    budgets = {"i": 1, "j": 1, "k": 1}
    alloc = seqgrd(path_graph, blocking_catalog, Allocation.empty(), ["i", "j", "k"], budgets, CFG)
    assert len(alloc) == 3
    assert len(alloc.seed_nodes()) == 3  # block-disjoint seeds
    for it, b in budgets.items():
        assert len(alloc.seeds_for(it)) <= b


def test_seqgrd_defers_blocking_item(path_graph, blocking_catalog):
    lines = []
    alloc = seqgrd(
        path_graph,
        blocking_catalog,
        Allocation.empty(),
        ["i", "j", "k"],
        {"i": 1, "j": 1, "k": 1},
        CFG,
        trace=lines.append,
    )
    decisions = {}
    tentative_order = []
    for ln in lines:
        fields = dict(kv.split("=") for kv in ln.split())
        if fields["phase"] == "tentative":
            decisions[fields["item"]] = fields["decision"]
            tentative_order.append(fields["item"])
    # items enter the tentative phase in non-increasing expected utility order
    assert tentative_order == ["i", "j", "k"]
    assert decisions == {"i": "keep", "j": "defer", "k": "keep"}
    # j lands on the seed after i and k
    assert alloc.seeds_for("i") == {0}
    assert alloc.seeds_for("k") == {1}
    assert alloc.seeds_for("j") == {2}


def test_seqgrd_beats_seqgrd_nm_on_blocking_fixture(path_graph, blocking_catalog):
    items = ["i", "j", "k"]
    budgets = {"i": 1, "j": 1, "k": 1}
    with_check = seqgrd(path_graph, blocking_catalog, Allocation.empty(), items, budgets, CFG)
    without = seqgrd_nm(path_graph, blocking_catalog, Allocation.empty(), items, budgets, CFG)
    w1 = exact_welfare(path_graph, blocking_catalog, with_check)
    w2 = exact_welfare(path_graph, blocking_catalog, without)
    assert w1 > w2


def test_seqgrd_nm_matches_seqgrd_when_marginals_positive():
    g = graph_from("0 1 1\n2 3 1\n")
    cat = ItemCatalog(
        ["a", "b"],
        prices={"a": 1, "b": 1},
        valuations={("a",): 3, ("b",): 2.5, ("a", "b"): 3},
    )
    items, budgets = ["a", "b"], {"a": 1, "b": 1}
    a1 = seqgrd(g, cat, Allocation.empty(), items, budgets, CFG)
    a2 = seqgrd_nm(g, cat, Allocation.empty(), items, budgets, CFG)
    assert a1 == a2


def test_seqgrd_single_item_nm_identical():
    g = graph_from("0 1 1\n1 2 0.5\n")
    cat = ItemCatalog(["a"], prices={"a": 1}, valuations={("a",): 3})
    a1 = seqgrd(g, cat, Allocation.empty(), ["a"], {"a": 1}, CFG)
    a2 = seqgrd_nm(g, cat, Allocation.empty(), ["a"], {"a": 1}, CFG)
    assert a1 == a2


def test_seqgrd_rejects_overlapping_items(pair_graph, trio_catalog):
    base = Allocation.of([(1, "i1")])
    with pytest.raises(AllocatorError, match="overlap"):
        seqgrd(pair_graph, trio_catalog, base, ["i1"], {"i1": 1}, CFG)


def test_maxgrd_picks_dominant_item():
    g = graph_from("0 1 1\n2 3 1\n")
    cat = ItemCatalog(
        ["hi", "lo"],
        prices={"hi": 1, "lo": 1},
        valuations={("hi",): 11, ("lo",): 2, ("hi", "lo"): 11},
    )
    alloc = maxgrd(g, cat, Allocation.empty(), ["hi", "lo"], {"hi": 1, "lo": 1}, CFG)
    assert alloc.items() == {"hi"}


def test_maxgrd_single_item_matches_seqgrd_nm():
    g = graph_from("0 1 1\n1 2 0.5\n")
    cat = ItemCatalog(["a"], prices={"a": 1}, valuations={("a",): 3})
    assert maxgrd(g, cat, Allocation.empty(), ["a"], {"a": 1}, CFG) == seqgrd_nm(
        g, cat, Allocation.empty(), ["a"], {"a": 1}, CFG
    )


def test_worked_example_welfare_gap(fork_graph, strong_weak_catalog):
    items, budgets = ["i", "j"], {"i": 1, "j": 1}
    seq = seqgrd(fork_graph, strong_weak_catalog, Allocation.empty(), items, budgets, CFG)
    mx = maxgrd(fork_graph, strong_weak_catalog, Allocation.empty(), items, budgets, CFG)
    assert exact_welfare(fork_graph, strong_weak_catalog, seq) == 22.0
    assert exact_welfare(fork_graph, strong_weak_catalog, mx) == 30.0
    best = max_seq(fork_graph, strong_weak_catalog, items, budgets, CFG)
    assert best == mx


def test_max_seq_single_item_agreement():
    g = graph_from("0 1 1\n")
    cat = ItemCatalog(["a"], prices={"a": 1}, valuations={("a",): 3})
    alloc = max_seq(g, cat, ["a"], {"a": 1}, CFG)
    assert alloc == seqgrd(g, cat, Allocation.empty(), ["a"], {"a": 1}, CFG)


def test_maxgrd_choice_invariant_under_utility_scaling():
    g = graph_from("0 1 0.7\n1 2 0.5\n2 0 0.4\n0 3 0.6\n")
    for scale in (1.0, 7.0):
        cat = ItemCatalog(
            ["p", "q"],
            prices={"p": scale * 1, "q": scale * 1},
            valuations={
                ("p",): scale * 3,
                ("q",): scale * 2.4,
                ("p", "q"): scale * 3.1,
            },
        )
        alloc = maxgrd(g, cat, Allocation.empty(), ["p", "q"], {"p": 1, "q": 1}, CFG)
        assert alloc.items() == {"p"}


def test_supgrd_validates_and_names_condition():
    g = graph_from("0 1 0.5\n")
    soft = ItemCatalog(
        ["a", "b"],
        prices={"a": 1, "b": 1},
        valuations={("a",): 3, ("b",): 1.5, ("a", "b"): 3.6},
    )
    with pytest.raises(Exception, match="pure competition"):
        supgrd(g, soft, Allocation.of([(0, "b")]), "a", 1, CFG)


def test_supgrd_base_empty_single_item_reduces_to_im():
    g = graph_from("0 1 1\n0 2 1\n0 3 1\n4 0 0.2\n")
    cat = ItemCatalog(["a"], prices={"a": 1}, valuations={("a",): 2})
    alloc = supgrd(g, cat, Allocation.empty(), "a", 1, AllocatorConfig(eps=0.3, seed=2))
    assert alloc.pairs == frozenset({(0, "a")})  # the hub maximizes spread


def test_supgrd_near_optimal_on_small_instance():
    rng = random.Random(14)
    graph, catalog, base = superior_instance(rng, n_hi=8, e_hi=9)
    cfg = AllocatorConfig(eps=0.15, ell=1.0, seed=31)
    alloc = supgrd(graph, catalog, base, "sup", 2, cfg)
    got = exact_welfare(graph, catalog, alloc.merged(base))
    _, opt = optimal_allocation(graph, catalog, {"sup": 2}, base)
    assert got >= 0.6 * opt


def test_round_robin_and_snake_patterns():
    seeds = [10, 11, 12, 13]
    budgets = {"i": 2, "j": 2}
    rr = round_robin(seeds, ["i", "j"], budgets)
    assert rr.pairs == frozenset({(10, "i"), (11, "j"), (12, "i"), (13, "j")})
    sn = snake(seeds, ["i", "j"], budgets)
    assert sn.pairs == frozenset({(10, "i"), (11, "j"), (12, "j"), (13, "i")})


def test_round_robin_single_item_is_block():
    alloc = round_robin([4, 5, 6], ["only"], {"only": 3})
    assert alloc.seeds_for("only") == {4, 5, 6}
    assert alloc == snake([4, 5, 6], ["only"], {"only": 3})


def test_round_robin_skips_exhausted_budgets():
    alloc = round_robin([1, 2, 3], ["a", "b"], {"a": 1, "b": 2})
    assert alloc.pairs == frozenset({(1, "a"), (2, "b"), (3, "b")})


def test_round_robin_seed_shortage():
    with pytest.raises(AllocatorError, match="exactly"):
        round_robin([1], ["a", "b"], {"a": 1, "b": 1})


def test_greedy_marginal_matches_exact_greedy_on_deterministic_graph():
    g = graph_from("0 1 1\n1 2 1\n3 4 1\n")
    cat = ItemCatalog(["a"], prices={"a": 0}, valuations={("a",): 1})
    alloc = greedy_marginal(g, cat, ["a"], {"a": 2}, AllocatorConfig(seed=1, mc_samples=50))
    # exact greedy: 0 first (spread 3), then 3 (spread 2)
    assert alloc.pairs == frozenset({(0, "a"), (3, "a")})


def test_greedy_marginal_three_items_follows_oracle_trace(pair_graph, trio_catalog):
    cfg = AllocatorConfig(seed=3, mc_samples=60)
    alloc = greedy_marginal(
        pair_graph, trio_catalog, ["i1", "i2", "i3"], {"i1": 1, "i2": 1, "i3": 1}, cfg
    )
    # replay the greedy trace with the exact oracle (p=1 makes estimates exact)
    oracle = WelfareOracle(pair_graph, trio_catalog)
    chosen = Allocation.empty()
    for _ in range(3):
        best, best_val = None, float("-inf")
        for node in range(pair_graph.n):
            for item in trio_catalog.items:
                if (node, item) in chosen.pairs:
                    continue
                if len(chosen.seeds_for(item)) >= 1:
                    continue
                val = oracle.marginal(Allocation.of([(node, item)]), chosen)
                if val > best_val:
                    best, best_val = (node, item), val
        chosen = chosen.merged(Allocation.of([best]))
    assert exact_welfare(pair_graph, trio_catalog, alloc) == pytest.approx(
        oracle.welfare(chosen)
    )


def test_greedy_marginal_zero_budgets_yield_empty():
    g = graph_from("0 1 1\n")
    cat = ItemCatalog(["a"], prices={"a": 0}, valuations={("a",): 1})
    alloc = greedy_marginal(g, cat, ["a"], {"a": 0}, CFG)
    assert alloc == Allocation.empty()


def test_greedy_marginal_cap():
    g = graph_from("0 1 1\n")
    cat = ItemCatalog(["a"], prices={"a": 0}, valuations={("a",): 1})
    cfg = AllocatorConfig(seed=0, mc_samples=10, gm_pair_cap=1)
    with pytest.raises(AllocatorError, match="seqgrd"):
        greedy_marginal(g, cat, ["a"], {"a": 2}, cfg)


def test_budget_feasibility_across_allocators(fork_graph, strong_weak_catalog):
    items, budgets = ["i", "j"], {"i": 1, "j": 1}
    for fn in (seqgrd, seqgrd_nm, maxgrd):
        alloc = fn(fork_graph, strong_weak_catalog, Allocation.empty(), items, budgets, CFG)
        for it in items:
            assert len(alloc.seeds_for(it)) <= budgets[it]
