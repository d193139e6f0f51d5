"""
Interaction logs to leave-one-out splits
========================================

A raw log is a list of (user, item, timestamp) lines. We filter it to a
k-core, map ids to dense integers and hold out the last two items per user.
"""
import tempfile
from pathlib import Path

from reppad.corpus import prepare
from reppad.harness.synth import SynthConfig, synthesize

work = Path(tempfile.mkdtemp())
log = synthesize(work, SynthConfig(num_users=300, num_items=200, seed=0))
print(log.read_text().splitlines()[:3])

corpus, split = prepare(log, k=5)
print(corpus.summary())

# item 0 is reserved for padding, so ids start at 1
u = split.users[0]
print("train:", split.train_items[u])
print("valid target:", split.valid_target[u], "test target:", split.test_target[u])

# the test history includes the validation item
assert split.test_history(u) == split.train_items[u] + [split.valid_target[u]]
