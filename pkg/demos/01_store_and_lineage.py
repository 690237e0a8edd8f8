"""Walk through the artifact store: content addressing, lineage, and verify.

Run:  python3 demos/01_store_and_lineage.py
"""

import json
import tempfile

from benchsmith.store import ArtifactStore, ProvenanceStamp

root = tempfile.mkdtemp(prefix="benchstore-demo-")
store = ArtifactStore(root)
print(f"store at {root}\n")

# Every artifact is a JSON payload stored under the digest of its canonical
# serialization: putting the same payload twice yields the same id.
paper = {
    "paper_id": "demo-paper",
    "sections": [["Abstract", "We profile a tissue."], ["Results", "A population expands."]],
    "priority_order": [0, 1],
}
paper_id = store.put_artifact(
    "paper", paper, ProvenanceStamp(producer="load_paper", pipeline_stage="ingest")
)
again = store.put_artifact(
    "paper", dict(paper), ProvenanceStamp(producer="load_paper", pipeline_stage="ingest")
)
print("first put: ", paper_id)
print("second put:", again, "(deduplicated)" if again == paper_id else "(BUG)")

# Children carry their parents in the provenance stamp; stages are monotone
# along any parent chain.
insight = {
    "insight_id": "demo-paper-i1",
    "paper_id": "demo-paper",
    "rank": 1,
    "summary": "The population expands under treatment.",
    "derivation": "Composition comparison across conditions.",
    "grounding_text": "We observed a marked expansion.",
    "status": "candidate",
}
insight_id = store.put_artifact(
    "insight", insight,
    ProvenanceStamp(producer="extract_insights", pipeline_stage="insight-extraction",
                    parent_ids=[paper_id], model_id="demo-model"),
)
print("\ninsight:", insight_id)
print("parents:", [str(p) for p in store.parents_of(insight_id)])

# Filtered listing, ordered by creation time.
for aid, payload in store.get_artifacts("insight", parent=paper_id):
    print("listed: ", aid, "->", payload["summary"])

print("\nverify mismatches:", store.verify())
print(json.dumps(store.get_provenance(insight_id), indent=2))
