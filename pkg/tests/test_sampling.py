"""Test-network carving: selection, link thinning, remainder aggregation.

The thinning oracle enumerates every deletion sequence of a small instance
to get exact per-link deletion probabilities, then checks Monte Carlo
frequencies against them.  Aggregation is checked for bitwise strength
conservation on a generated economy.
"""

import numpy as np
import pytest

from prodnet.errors import (
    EmptySelectionError,
    SizeMismatchError,
    TargetExceedsEdgesError,
    UnlabeledNodeError,
    ZeroSectorDenominatorError,
)
from prodnet.network import (
    NodeAccounts,
    build_network,
    induced_subgraph,
    strengths,
    validate_accounts,
)
from prodnet.sampling import (
    aggregate_proxy,
    impute_from_sectors,
    select_top_firms,
    trim_links,
)
from prodnet.synth import SectorTable, SynthConfig, derive_sector_table, generate_ground_truth


def small_economy(seed=7, n_firms=300):
    cfg = SynthConfig(n_firms=n_firms, n_sectors=5, mean_degree=4.0, seed=seed)
    return generate_ground_truth(cfg)


def carve(truth, n_keep, rng, degree_factor=0.5):
    kept_ids = select_top_firms(truth.net, n_keep)
    sub, mapping = induced_subgraph(truth.net, kept_ids)
    assert np.array_equal(mapping, kept_ids)
    target = sub.mean_degree() * degree_factor
    plan = trim_links(sub, target, rng)
    net, acc = aggregate_proxy(truth.net, truth.accounts, kept_ids, plan.kept)
    return kept_ids, plan, net, acc


class TestSelectTopFirms:
    def test_ranking_and_inside_purchase_filter(self):
        net = build_network(5, [0, 1, 2, 3, 4], [4, 0, 1, 2, 3],
                            [10.0, 10.0, 8.0, 1.0, 0.5])
        # top three sellers are 0, 1, 2 but firm 2 buys nothing inside
        assert select_top_firms(net, 3).tolist() == [0, 1]

    def test_ties_break_towards_lower_id(self):
        net = build_network(5, [0, 1, 1, 2, 3, 4], [1, 0, 2, 0, 4, 3],
                            [5.0, 3.0, 2.0, 5.0, 5.0, 5.0])
        assert select_top_firms(net, 2).tolist() == [0, 1]

    def test_bad_sizes_rejected(self, diamond):
        with pytest.raises(EmptySelectionError):
            select_top_firms(diamond, 0)
        with pytest.raises(EmptySelectionError):
            select_top_firms(diamond, 10)

    def test_no_internal_purchases_rejected(self):
        # both big sellers ship only to the small fry
        net = build_network(4, [0, 1], [2, 3], [9.0, 8.0])
        with pytest.raises(EmptySelectionError):
            select_top_firms(net, 2)

    def test_selected_are_the_largest_sellers(self):
        truth = small_economy()
        kept = select_top_firms(truth.net, 50)
        _, s_out = strengths(truth.net)
        cutoff = np.sort(s_out)[-50]
        assert (s_out[kept] >= cutoff).all()


class TestTrimLinks:
    def test_partition_of_edges(self, rng):
        truth = small_economy(seed=3, n_firms=120)
        plan = trim_links(truth.net, truth.net.mean_degree() / 2, rng)
        combined = np.concatenate([plan.kept.weight, plan.deleted_weight])
        assert np.array_equal(np.sort(combined), np.sort(truth.net.weight))
        assert plan.kept.n_edges == round(truth.net.mean_degree() / 2
                                          * truth.net.n_nodes)
        assert plan.n_deleted == truth.net.n_edges - plan.kept.n_edges

    def test_noop_when_target_is_current_degree(self, diamond, rng):
        plan = trim_links(diamond, 1.0, rng)
        assert plan.n_deleted == 0
        assert np.array_equal(plan.kept.weight, diamond.weight)

    def test_excessive_target_rejected(self, diamond, rng):
        with pytest.raises(TargetExceedsEdgesError):
            trim_links(diamond, 3.0, rng)
        with pytest.raises(TargetExceedsEdgesError):
            trim_links(diamond, -1.0, rng)

    def test_deletion_probabilities_match_enumeration(self):
        # exact inclusion probabilities of successive 1/weight sampling
        def enumerate_probs(weights, n_delete):
            inv = 1.0 / np.asarray(weights)
            probs = np.zeros(inv.size)

            def walk(available, depth, p):
                if depth == n_delete:
                    return
                total = inv[list(available)].sum()
                for e in available:
                    pe = p * inv[e] / total
                    probs[e] += pe
                    walk(available - {e}, depth + 1, pe)

            walk(frozenset(range(inv.size)), 0, 1.0)
            return probs

        src = [0, 0, 0, 1, 1, 2, 2, 3]
        dst = [1, 2, 3, 2, 3, 0, 3, 0]
        w = np.array([0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        net = build_network(4, src, dst, w)
        expected = enumerate_probs(w, 3)

        reps = 3000
        counts = np.zeros(net.n_edges)
        key_of = {(s, d): e for e, (s, d) in enumerate(zip(net.src, net.dst))}
        rng = np.random.default_rng(20240818)
        for _ in range(reps):
            plan = trim_links(net, 5 / 4, rng)
            for s, d in zip(plan.deleted_src, plan.deleted_dst):
                counts[key_of[(s, d)]] += 1
        freq = counts / reps
        sigma = np.sqrt(expected * (1 - expected) / reps)
        assert (np.abs(freq - expected) < 4 * sigma + 1e-9).all()

    def test_cheap_links_go_first_on_average(self, rng):
        truth = small_economy(seed=11, n_firms=150)
        plan = trim_links(truth.net, truth.net.mean_degree() / 3, rng)
        assert np.median(plan.deleted_weight) < np.median(plan.kept.weight)


class TestAggregateProxy:
    def test_hand_example_edge_classes(self):
        # firms 0,1 kept; 2,3,4 folded away; link 1->0 pretend-deleted
        net = build_network(5,
                            [0, 0, 1, 2, 3, 3, 4],
                            [1, 2, 0, 3, 1, 4, 2],
                            [6.0, 2.0, 5.0, 3.0, 4.0, 1.0, 2.0])
        s_in, s_out = strengths(net)
        acc = NodeAccounts.from_components(s_in, s_out,
                                           np.full(5, 2.0), np.full(5, 3.0))
        kept = build_network(2, [0], [1], [6.0])
        prox, pacc = aggregate_proxy(net, acc, np.array([0, 1]), kept)

        assert prox.n_nodes == 3 and prox.proxy == 2
        flows = {(s, d): w for s, d, w in zip(prox.src, prox.dst, prox.weight)}
        # deleted 1->0 flow reroutes through the remainder both ways
        assert flows[(0, 2)] == pytest.approx(2.0)      # 0's sale to firm 2
        assert flows[(1, 2)] == pytest.approx(5.0)      # deleted outbound
        assert flows[(2, 0)] == pytest.approx(5.0)      # deleted inbound
        assert flows[(2, 1)] == pytest.approx(4.0)      # firm 3's sale to 1
        assert flows[(2, 2)] == pytest.approx(3.0 + 1.0 + 2.0)
        assert prox.total_weight == pytest.approx(net.total_weight + 5.0)
        assert pacc.value_added[2] == pytest.approx(6.0)
        assert pacc.final_demand[2] == pytest.approx(9.0)

    def test_strength_conservation(self, rng):
        truth = small_economy()
        kept_ids, plan, net, acc = carve(truth, 60, rng)
        k = kept_ids.size
        net_in, net_out = strengths(net)
        # accounts agree with the carved network bitwise ...
        assert np.array_equal(net_in, acc.s_in)
        assert np.array_equal(net_out, acc.s_out)
        # ... and with the full economy to a few ulp
        np.testing.assert_allclose(net_in[:k], truth.accounts.s_in[kept_ids],
                                   rtol=1e-14)
        np.testing.assert_allclose(net_out[:k], truth.accounts.s_out[kept_ids],
                                   rtol=1e-14)
        assert validate_accounts(acc, net).ok
        assert validate_accounts(acc, net).max_rel_error == 0.0

    def test_total_weight_grows_by_deleted_mass(self, rng):
        truth = small_economy(seed=9)
        kept_ids, plan, net, acc = carve(truth, 80, rng)
        expect = truth.net.total_weight + plan.deleted_total
        assert net.total_weight == pytest.approx(expect, rel=1e-12)

    def test_remainder_accounts_sum_excluded(self, rng):
        truth = small_economy(seed=13)
        kept_ids, plan, net, acc = carve(truth, 70, rng)
        member = np.zeros(truth.net.n_nodes, dtype=bool)
        member[kept_ids] = True
        assert acc.value_added[-1] == pytest.approx(
            truth.accounts.value_added[~member].sum(), rel=1e-12)
        assert acc.final_demand[-1] == pytest.approx(
            truth.accounts.final_demand[~member].sum(), rel=1e-12)
        assert np.array_equal(acc.value_added[:-1],
                              truth.accounts.value_added[kept_ids])

    def test_size_mismatch_rejected(self, rng):
        truth = small_economy(seed=5, n_firms=80)
        kept_ids = select_top_firms(truth.net, 20)
        sub, _ = induced_subgraph(truth.net, kept_ids)
        with pytest.raises(SizeMismatchError):
            aggregate_proxy(truth.net, truth.accounts, kept_ids[:-1], sub)


class TestImputeFromSectors:
    def test_final_demand_recovered_exactly(self):
        truth = small_economy(seed=21, n_firms=200)
        table = derive_sector_table(truth.accounts, truth.labels)
        imputed = impute_from_sectors(truth.accounts, table, truth.labels)
        # within-sector demand ratios are constant, so imputation is exact
        assert imputed.final_demand == pytest.approx(
            truth.accounts.final_demand, rel=1e-9)

    def test_value_added_proportional_within_sector(self):
        truth = small_economy(seed=22, n_firms=200)
        table = derive_sector_table(truth.accounts, truth.labels)
        imputed = impute_from_sectors(truth.accounts, table, truth.labels)
        rate = table.y / table.x
        assert imputed.value_added == pytest.approx(
            rate[truth.labels] * truth.accounts.s_in, rel=1e-12)

    def test_passthrough_label(self):
        acc = NodeAccounts.from_components([1.0, 2.0], [2.0, 1.0],
                                           [5.0, 6.0], [7.0, 8.0])
        table = SectorTable.from_sides(x=np.array([2.0]), d=np.array([2.0]),
                                       f=np.array([2.0]))
        out = impute_from_sectors(acc, table, [0, -1])
        assert out.value_added[1] == 6.0 and out.final_demand[1] == 8.0
        assert out.value_added[0] == pytest.approx(table.y[0] / 2.0 * 1.0)

    def test_zero_denominator_with_live_member(self):
        acc = NodeAccounts.from_components([1.0], [1.0], [1.0], [1.0])
        table = SectorTable.from_sides(x=np.array([0.0]), d=np.array([2.0]),
                                       f=np.array([1.0]))
        with pytest.raises(ZeroSectorDenominatorError):
            impute_from_sectors(acc, table, [0])

    def test_zero_denominator_without_members_is_fine(self):
        acc = NodeAccounts.from_components([0.0, 3.0], [1.0, 3.0],
                                           [1.0, 1.0], [1.0, 1.0])
        table = SectorTable.from_sides(x=np.array([0.0, 3.0]),
                                       d=np.array([2.0, 3.0]),
                                       f=np.array([1.0, 2.0]))
        out = impute_from_sectors(acc, table, [0, 1])
        assert out.value_added[0] == 0.0

    def test_negative_ratio_clamped_with_warning(self):
        acc = NodeAccounts.from_components([2.0], [2.0], [1.0], [1.0])
        # sector sells less than it buys, so residual value added is negative
        table = SectorTable.from_sides(x=np.array([5.0]), d=np.array([2.0]),
                                       f=np.array([1.0]))
        with pytest.warns(UserWarning):
            out = impute_from_sectors(acc, table, [0])
        assert out.value_added[0] == 0.0

    def test_label_validation(self):
        acc = NodeAccounts.from_components([1.0], [1.0], [1.0], [1.0])
        table = SectorTable.from_sides(x=np.array([2.0]), d=np.array([2.0]),
                                       f=np.array([2.0]))
        with pytest.raises(UnlabeledNodeError):
            impute_from_sectors(acc, table, [-2])
        with pytest.raises(SizeMismatchError):
            impute_from_sectors(acc, table, [1])
        with pytest.raises(SizeMismatchError):
            impute_from_sectors(acc, table, [0, 0])
