from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from benchsmith.ingest import (
    DelimiterCollision,
    EmptyDocument,
    MissingFile,
    NotADirectory,
    UnknownPath,
    build_dataset_manifest,
    bundle_sources,
    load_paper,
    parse_bundle,
    select_lite,
    snapshot_repository,
)


def write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


class TestLoadPaper:
    def test_priority_order_abstract_results_methods(self, tmp_path):
        paper = write(
            tmp_path / "p.md",
            "# Abstract\nsummary\n# Methods\nhow\n# Results\nwhat\n",
        )
        doc = load_paper(paper)
        ordered = [doc.sections[i][0] for i in doc.priority_order]
        assert ordered == ["Abstract", "Results", "Methods"]

    def test_full_priority_ladder(self, tmp_path):
        paper = write(
            tmp_path / "p.md",
            "# Intro\na\n# Methods\nb\n# Discussion\nc\n# Figure Legends\nd\n"
            "# Results\ne\n# Abstract\nf\n# Appendix\ng\n",
        )
        doc = load_paper(paper)
        ordered = [doc.sections[i][0] for i in doc.priority_order]
        assert ordered == [
            "Abstract", "Results", "Figure Legends", "Discussion", "Methods",
            "Intro", "Appendix",
        ]

    def test_headingless_becomes_single_body(self, tmp_path):
        doc = load_paper(write(tmp_path / "p.txt", "just prose\nmore prose\n"))
        assert doc.sections == [("body", "just prose\nmore prose")]
        assert doc.priority_order == [0]

    def test_empty_file_errors(self, tmp_path):
        with pytest.raises(EmptyDocument):
            load_paper(write(tmp_path / "p.md", ""))

    def test_preamble_before_first_heading_kept(self, tmp_path):
        doc = load_paper(write(tmp_path / "p.md", "title line\n# Abstract\nstuff\n"))
        assert doc.sections[0] == ("body", "title line")


class TestSnapshot:
    def test_extension_filter(self, tmp_path):
        write(tmp_path / "repo" / "a.py", "pass\n")
        write(tmp_path / "repo" / "b.R", "x <- 1\n")
        write(tmp_path / "repo" / "notes.md", "text\n")
        snap = snapshot_repository(tmp_path / "repo")
        assert snap.paths() == ["a.py", "b.R"]

    def test_nested_paths_forward_slashes(self, tmp_path):
        write(tmp_path / "repo" / "analysis" / "load_data.R", "read.csv('x')\n")
        snap = snapshot_repository(tmp_path / "repo")
        assert snap.paths() == ["analysis/load_data.R"]
        assert "analysis/" in snap.tree_rendering
        assert "load_data.R" in snap.tree_rendering

    def test_empty_directory_valid(self, tmp_path):
        (tmp_path / "repo").mkdir()
        snap = snapshot_repository(tmp_path / "repo")
        assert snap.files == []

    def test_not_a_directory(self, tmp_path):
        with pytest.raises(NotADirectory):
            snapshot_repository(tmp_path / "nope")

    def test_binary_and_oversize_skipped(self, tmp_path):
        (tmp_path / "repo").mkdir()
        (tmp_path / "repo" / "bin.py").write_bytes(b"\x00\x01\x02")
        write(tmp_path / "repo" / "big.py", "x" * 2_000_000)
        write(tmp_path / "repo" / "ok.py", "pass\n")
        snap = snapshot_repository(tmp_path / "repo")
        assert snap.paths() == ["ok.py"]

    def test_deterministic_across_runs(self, tmp_path):
        write(tmp_path / "repo" / "b.py", "b\n")
        write(tmp_path / "repo" / "a.py", "a\n")
        first = snapshot_repository(tmp_path / "repo")
        second = snapshot_repository(tmp_path / "repo")
        assert first.paths() == second.paths() == ["a.py", "b.py"]


class TestBundle:
    def test_single_file_byte_exact(self, tmp_path):
        write(tmp_path / "repo" / "x.py", "pass")
        snap = snapshot_repository(tmp_path / "repo")
        assert bundle_sources(snap, ["x.py"]) == "### BEGIN x.py\npass\n### END x.py\n"

    def test_two_files_in_selection_order(self, tmp_path):
        write(tmp_path / "repo" / "a.py", "a = 1\n")
        write(tmp_path / "repo" / "b.py", "b = 2\n")
        snap = snapshot_repository(tmp_path / "repo")
        bundle = bundle_sources(snap, ["b.py", "a.py"])
        assert bundle.index("### BEGIN b.py") < bundle.index("### BEGIN a.py")

    def test_unknown_path(self, tmp_path):
        (tmp_path / "repo").mkdir()
        snap = snapshot_repository(tmp_path / "repo")
        with pytest.raises(UnknownPath):
            bundle_sources(snap, ["ghost.py"])

    def test_marker_collision_rejected(self, tmp_path):
        write(tmp_path / "repo" / "evil.py", "### BEGIN sneaky\n")
        snap = snapshot_repository(tmp_path / "repo")
        with pytest.raises(DelimiterCollision):
            bundle_sources(snap, ["evil.py"])

    @settings(max_examples=50, deadline=None)
    @given(
        contents=st.lists(
            st.text(
                alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r"),
                max_size=200,
            ).filter(lambda s: not any(
                l.startswith("### BEGIN ") or l.startswith("### END ") for l in s.splitlines()
            )),
            min_size=1,
            max_size=4,
        )
    )
    def test_round_trip_property(self, contents):
        from benchsmith.ingest import RepositorySnapshot

        files = []
        for i, content in enumerate(contents):
            normalized = content if (not content or content.endswith("\n")) else content + "\n"
            files.append((f"f{i}.py", normalized, len(normalized.encode())))
        snap = RepositorySnapshot(repo_id="r", files=files, tree_rendering="")
        selection = [p for p, _, _ in files]
        recovered = parse_bundle(bundle_sources(snap, selection))
        assert recovered == [(p, c) for p, c, _ in files]


class TestManifests:
    def test_sizes_recorded(self, tmp_path):
        a = write(tmp_path / "a.bin", "x" * 100)
        b = write(tmp_path / "b.bin", "y" * 200)
        manifest = build_dataset_manifest([(str(a), "first"), (str(b), "second")])
        assert manifest.total_bytes == 300
        assert [d for _, _, d in manifest.entries] == ["first", "second"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            build_dataset_manifest([(str(tmp_path / "ghost"), "")])

    def test_empty_manifest(self):
        assert build_dataset_manifest([]).total_bytes == 0


class TestSelectLite:
    @staticmethod
    def triplet(total):
        return {"triplet_id": f"t{total}", "manifest": {"entries": [], "total_bytes": total}}

    def test_strictly_smaller_kept(self):
        small, big = self.triplet(500 * 10**6), self.triplet(900 * 10**6)
        assert select_lite([small, big]) == [small]

    def test_boundary_excluded(self):
        at_limit = self.triplet(750 * 10**6)
        assert select_lite([at_limit]) == []

    def test_idempotent(self):
        batch = [self.triplet(n * 10**6) for n in (100, 750, 800, 10)]
        once = select_lite(batch)
        assert select_lite(once) == once
