import itertools
import math

import pytest

from dpchain.audit import find_leaks
from dpchain.chaincode import (
    ChaincodeContext,
    QuerySpec,
    TxCategory,
    classify,
    execute_query,
    execute_write,
    record_response,
    spec_digest,
)
from dpchain.errors import InvalidRecord, UnknownAggregate, UnknownType
from dpchain.ledger import PurchaseRecord, RecordRules, Transaction, TxType, WorldState
from dpchain.privacy import (
    Aggregate,
    NoiseSource,
    PrivacyParams,
    QueryBatch,
    QueryDescriptor,
)

RULES = RecordRules(
    customers=frozenset({"Bob", "Claire", "David", "Ali", "Alice"}),
    colors=frozenset({"red", "blue"}),
)


def make_ctx(records=(), epsilon=0.5, seed=1, **kwargs):
    state = WorldState(RULES)
    for r in records:
        state.put_record(r)
    return ChaincodeContext(
        channel_id="supply",
        state=state,
        params=PrivacyParams(epsilon=epsilon, sensitivity=100.0),
        noise=NoiseSource(seed),
        **kwargs,
    )


def rec(key, owner="Bob", quantity=50):
    return PurchaseRecord(key=key, product="widget", owner=owner, quantity=quantity, color="red")


def sum_spec(*owners, requested_epsilon=None):
    return QuerySpec(
        batch=QueryBatch(
            queries=tuple(QueryDescriptor(aggregate=Aggregate.SUM, owner=o) for o in owners)
        ),
        requested_epsilon=requested_epsilon,
    )


def bob_5050_records():
    # 101 records of quantity 50 for Bob: true sum exactly 5050
    return tuple(rec(f"b{i}", quantity=50) for i in range(101))


# --- classify ------------------------------------------------------------------


def test_classify_write_is_financial():
    tx = Transaction("t1", TxType.WRITE, rec("a1"), "c", 0)
    assert classify(tx) is TxCategory.FINANCIAL


def test_classify_init_is_financial():
    tx = Transaction("t1", TxType.INIT, rec("a1"), "c", 0)
    assert classify(tx) is TxCategory.FINANCIAL


def test_classify_query():
    tx = Transaction("t1", TxType.QUERY, sum_spec("Bob"), "c", 0)
    assert classify(tx) is TxCategory.QUERY


def test_classify_malformed_payload():
    with pytest.raises(UnknownType):
        classify(Transaction("t1", TxType.WRITE, {"not": "a record"}, "c", 0))
    with pytest.raises(UnknownType):
        classify(Transaction("t1", TxType.QUERY, rec("a1"), "c", 0))


# --- execute_write --------------------------------------------------------------


def test_execute_write_produces_single_write_no_reads():
    ctx = make_ctx()
    rw = execute_write(ctx, rec("a1"))
    assert len(rw) == 1
    item = rw[0]
    assert (item.key, item.record, item.version) == ("a1", rec("a1"), 1)
    assert len(ctx.state) == 0  # state untouched until commit


def test_execute_write_versions_follow_committed_state():
    ctx = make_ctx(records=[rec("a1")])
    rw = execute_write(ctx, rec("a1", quantity=60))
    assert rw[0].version == 2


def test_execute_write_rejects_out_of_range_quantity():
    with pytest.raises(InvalidRecord):
        execute_write(make_ctx(), rec("a1", quantity=101))


# --- execute_query ---------------------------------------------------------------


def test_query_values_in_input_order():
    records = [rec("k1", "Bob", 10), rec("k2", "Claire", 20), rec("k3", "David", 30)]
    ctx = make_ctx(records, epsilon=1e6)  # vanishing noise
    response = execute_query(ctx, sum_spec("David", "Bob", "Claire"))
    assert len(response.values) == 3
    assert [round(v) for v in response.values] == [30, 10, 20]


def test_query_order_preserved_for_all_permutations():
    records = [rec("k1", "Bob", 11), rec("k2", "Claire", 22), rec("k3", "David", 33)]
    truth = {"Bob": 11, "Claire": 22, "David": 33}
    for perm in itertools.permutations(["Bob", "Claire", "David"]):
        ctx = make_ctx(records, epsilon=1e6, seed=hash(perm) % 2**32)
        response = execute_query(ctx, sum_spec(*perm))
        assert [round(v) for v in response.values] == [truth[o] for o in perm]


def test_query_absent_owner_centres_at_zero():
    ctx = make_ctx([rec("k1", "Bob", 50)], epsilon=0.5, seed=21)
    values = [execute_query(ctx, sum_spec("Alice")).values[0] for _ in range(2000)]
    mean = sum(values) / len(values)
    assert abs(mean) < 20.0  # SE of mean ~ 6.3 at lam=200


def test_query_monte_carlo_mean_and_deviation():
    ctx = make_ctx(bob_5050_records(), epsilon=0.5, seed=31)
    assert ctx.state.sum_quantity_by_owner("Bob") == 5050
    values = [execute_query(ctx, sum_spec("Bob")).values[0] for _ in range(10_000)]
    mean = sum(values) / len(values)
    mad = sum(abs(v - 5050.0) for v in values) / len(values)
    assert abs(mean - 5050.0) <= 6.0
    assert abs(mad - 200.0) <= 10.0


def test_query_unknown_aggregate():
    ctx = make_ctx()
    spec = QuerySpec(batch=QueryBatch(queries=(QueryDescriptor(aggregate="median", owner="Bob"),)))
    with pytest.raises(UnknownAggregate):
        execute_query(ctx, spec)


def test_requested_epsilon_below_max_is_honored():
    ctx = make_ctx(epsilon=0.5, epsilon_max=2.5)
    spec = sum_spec("Bob", requested_epsilon=1.5)
    assert ctx.effective_epsilon(spec) == 1.5
    assert execute_query(ctx, spec).epsilon_used == 1.5


def test_requested_epsilon_above_max_is_capped():
    ctx = make_ctx(epsilon=0.5, epsilon_max=2.5)
    spec = sum_spec("Bob", requested_epsilon=9.0)
    assert ctx.effective_epsilon(spec) == 2.5
    assert execute_query(ctx, spec).epsilon_used == 2.5


def test_noise_disabled_returns_exact_sums():
    records = [rec("k1", "Bob", 10), rec("k2", "Bob", 20)]
    ctx = make_ctx(records, noise_enabled=False)
    response = execute_query(ctx, sum_spec("Bob"))
    assert response.values == (30.0,)
    assert math.isinf(response.epsilon_used)


# --- reuse ----------------------------------------------------------------------


def test_reuse_returns_identical_response_and_spends_nothing():
    ctx = make_ctx(bob_5050_records(), reuse_enabled=True)
    spec = sum_spec("Bob")
    first = execute_query(ctx, spec, client_id="c1")
    spent_after_first = ctx.epsilon_spent.total()
    second = execute_query(ctx, spec, client_id="c1")
    assert second == first
    assert ctx.epsilon_spent.total() == spent_after_first


def test_reuse_disabled_draws_fresh_noise():
    ctx = make_ctx(bob_5050_records(), reuse_enabled=False)
    spec = sum_spec("Bob")
    assert execute_query(ctx, spec) != execute_query(ctx, spec)


def test_different_epsilon_is_a_different_digest():
    spec_a = sum_spec("Bob")
    assert spec_digest(spec_a, 0.5) != spec_digest(spec_a, 1.0)
    ctx = make_ctx(bob_5050_records(), reuse_enabled=True, epsilon_max=2.5)
    r1 = execute_query(ctx, sum_spec("Bob", requested_epsilon=0.5))
    r2 = execute_query(ctx, sum_spec("Bob", requested_epsilon=1.0))
    assert r1.epsilon_used != r2.epsilon_used


def test_record_response_feeds_reuse_cache():
    ctx = make_ctx(bob_5050_records(), reuse_enabled=True)
    spec = sum_spec("Bob")
    response = execute_query(ctx, spec)
    entry = record_response(ctx, spec, response, timestamp=1000)
    assert entry.spec_digest == spec_digest(spec, response.epsilon_used)
    assert entry.response == response
    assert ctx.response_cache[entry.spec_digest] == response


def test_epsilon_spend_tracked_per_client():
    ctx = make_ctx(bob_5050_records(), epsilon=0.5)
    execute_query(ctx, sum_spec("Bob"), client_id="c1")
    execute_query(ctx, sum_spec("Bob"), client_id="c1")
    execute_query(ctx, sum_spec("Claire"), client_id="c2")
    assert ctx.epsilon_spent.spent == {"c1": 1.0, "c2": 0.5}


# --- leak audit -----------------------------------------------------------------


def test_query_response_never_carries_true_sum():
    ctx = make_ctx(bob_5050_records(), epsilon=0.5, seed=8)
    spec = sum_spec("Bob")
    for _ in range(50):
        response = execute_query(ctx, spec)
        entry = record_response(ctx, spec, response, timestamp=999)
        assert find_leaks(response, [5050]) == []
        assert find_leaks(entry, [5050]) == []
