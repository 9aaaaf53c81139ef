"""Smoke test for the dcs extension module. Run after `pip install crates/py`."""

import dcs

assert dcs.join("gset", [{"x"}, {"y"}, {"x"}]) == {"x", "y"}
assert dcs.join("maxint", [3, 9, 4]) == 9
assert dcs.join("gset-map", [{"a": {"1"}}, {"a": {"2"}, "b": {"3"}}]) == {"a": {"1", "2"}, "b": {"3"}}
assert dcs.leq("maxint", 2, 5)

# same two payloads, once concurrent and once causal
x = dcs.Contribution(1, 0, "k", "gset", {"x"})
y = dcs.Contribution(2, 0, "k", "gset", {"y"})
y_after_x = dcs.Contribution(2, 0, "k", "gset", {"y"}, parents=[x.rid])
assert x.rid == dcs.Contribution(1, 0, "k", "gset", {"x"}).rid
assert y.rid != y_after_x.rid

concurrent = dcs.ProvenanceDag([x, y])
causal = dcs.ProvenanceDag([y_after_x, x])
assert len(causal) == 2
assert concurrent.are_concurrent(x.rid, y.rid)
assert causal.is_ancestor(x.rid, y_after_x.rid)
assert causal.layers() == [[x.rid], [y_after_x.rid]]
assert dcs.join("gset", [c.payload for c in (x, y)]) == dcs.join("gset", [c.payload for c in (x, y_after_x)])
assert not dcs.isomorphic(concurrent, causal)
equivalent, witness = dcs.observationally_equivalent(concurrent, causal)
assert not equivalent and witness
assert dcs.isomorphic(causal, dcs.ProvenanceDag([x, y_after_x]))

try:
    dcs.ProvenanceDag([y_after_x])
except ValueError:
    pass
else:
    raise AssertionError("missing parent accepted")

# simulator: same seed, same bytes; any seed, isomorphic history
a = dcs.simulate("random", seed=1)
b = dcs.simulate("random", seed=1)
c = dcs.simulate("random", seed=2)
assert a["digest"] == b["digest"]
assert a["convergence_failures"] == []
assert dcs.isomorphic(dcs.ProvenanceDag(a["contributions"]), dcs.ProvenanceDag(c["contributions"]))

log = dcs.write_log(a["contributions"])
assert [r.rid for r in dcs.read_log(log)] == [r.rid for r in a["contributions"]]

assert dcs.ambiguity_rate(None, trials=5) == 0.0
assert dcs.ambiguity_rate("causal-forgery", trials=5) == 1.0

print("smoke test ok:", a["scenario"], a["outcome"], a["digest"][:16])
