"""
The command-line pipeline and its manifests
===========================================

Every command writes a manifest beside its outputs; replaying it with
``report --manifest`` regenerates the outputs and checks their digests.
"""

# %%
import json
import tempfile
from pathlib import Path

from dnstiming.cli import main

work = Path(tempfile.mkdtemp())
tx = work / "tx.csv"

# %%
main(["simulate", "--profile", "local", "--queries", "20000", "--seed", "7", "--attack", "--out", str(tx)])
main(["sweep", "--input", str(tx), "--alpha", "0:0.08:0.005", "--out", str(work / "sweep.csv")])
print((work / "sweep.csv").read_text())

# %%
main(["report", "--input", str(tx), "--seed", "1", "--out-dir", str(work / "report")])
print((work / "report" / "summary.txt").read_text())
print(json.dumps(json.loads((work / "report" / "manifest.json").read_text())["argv"]))

# %% [markdown]
# Replay into a fresh directory; the command exits 0 only if every output
# matches its recorded digest.

# %%
code = main(["report", "--manifest", str(work / "report" / "manifest.json"), "--out-dir", str(work / "replay")])
print("exit code", code)
