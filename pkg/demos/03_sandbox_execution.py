"""Execute a multi-block workflow in the sandbox: shared interpreter state,
halt-on-error, per-block timeouts, and write confinement.

Run:  python3 demos/03_sandbox_execution.py
"""

import tempfile
from pathlib import Path

from benchsmith.ingest import DatasetManifest, build_dataset_manifest
from benchsmith.insights import CodeBlock, WorkflowBundle
from benchsmith.sandbox import SandboxLimits, execute_workflow

workdir = Path(tempfile.mkdtemp(prefix="sandbox-demo-"))
data = workdir / "counts.csv"
data.write_text("gene,control,treated\nG1,5,9\nG2,4,4\n")
manifest = build_dataset_manifest([(str(data), "toy counts")])


def bundle(codes):
    return WorkflowBundle(
        workflow_id="demo", insight_id="demo-i1",
        blocks=[CodeBlock(code=c, reasoning="", derived_from=[]) for c in codes],
    )


limits = SandboxLimits(per_block_seconds=5, total_seconds=30)

print("1) state persists across blocks; the preamble exposes the dataset path as `adata`:")
report = execute_workflow(bundle([
    "rows = open(adata).read().splitlines()[1:]",
    "shift = max(int(r.split(',')[2]) - int(r.split(',')[1]) for r in rows)",
    "print('largest treated-vs-control shift:', shift)",
]), manifest, limits=limits, session_root=workdir / "s1")
for i, block in enumerate(report.blocks):
    print(f"   block {i}: {block.status} {block.stdout.strip()}")

print("\n2) an error halts the run; later blocks are not-run:")
report = execute_workflow(bundle(["x = 1", "1 / 0", "print('never')"]),
                          DatasetManifest(), limits=limits, session_root=workdir / "s2")
print("  ", [b.status for b in report.blocks])

print("\n3) a sleeping block trips the per-block limit:")
report = execute_workflow(bundle(["import time", "time.sleep(60)"]), DatasetManifest(),
                          limits=SandboxLimits(per_block_seconds=0.5, total_seconds=10),
                          session_root=workdir / "s3")
print("  ", [b.status for b in report.blocks])

print("\n4) writes outside the session directory are refused:")
report = execute_workflow(bundle([f"open({str(workdir / 'escape.txt')!r}, 'w')"]),
                          DatasetManifest(), limits=limits, session_root=workdir / "s4")
print("  ", report.blocks[0].status, "-", report.blocks[0].stderr.strip().splitlines()[-1])
