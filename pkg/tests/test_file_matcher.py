"""
Tests for similar-file suggestions on missing inputs.

Test cases:
1. Near-miss name (pretrain_smal.json) → pretrain_small.json suggested first
2. Only files with the requested suffix are suggested
3. Files one directory down are found
4. Keyword filter prefers files sharing a word with the request
5. Nothing similar → empty list, plain message
6. require_file → MissingFile with suggested_files; existing path returned as Path
"""
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import MissingFile
from src.file_matcher import extract_keywords, find_similar_files, get_file_not_found_message, require_file


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    for name in ("pretrain_small.json", "joint_small.json", "synth_small.json", "notes.txt"):
        (tmp_path / name).write_text("{}", encoding="utf-8")
    (tmp_path / "runs").mkdir()
    (tmp_path / "runs" / "action.ckpt").write_bytes(b"CACK")
    monkeypatch.chdir(tmp_path)
    return tmp_path


class TestFindSimilarFiles:
    """find_similar_files"""

    def test_near_miss(self, workdir):
        """pretrain_smal.json → pretrain_small.json first"""
        assert find_similar_files("pretrain_smal.json")[0] == "pretrain_small.json"

    def test_suffix_filter(self, workdir):
        """notes.json → notes.txt is not offered"""
        assert "notes.txt" not in find_similar_files("notes.json")

    def test_one_level_down(self, workdir):
        """actions.ckpt → runs/action.ckpt"""
        assert find_similar_files("actions.ckpt") == [str(Path("runs") / "action.ckpt")]

    def test_keyword_preference(self, workdir):
        """joint.json → joint_small.json ahead of the other configs"""
        assert find_similar_files("joint.json")[0] == "joint_small.json"

    def test_max_suggestions(self, workdir):
        """max_suggestions 1 → at most one entry"""
        assert len(find_similar_files("small.json", max_suggestions=1)) <= 1

    def test_nothing_similar(self, workdir):
        """model.caem with no .caem files → []"""
        assert find_similar_files("model.caem") == []

    def test_keywords(self):
        """'pretrain_small_v2' → letters then digits"""
        assert extract_keywords("pretrain_small_v2") == ["pretrain", "small", "v", "2"]


class TestMessages:
    """get_file_not_found_message / require_file"""

    def test_plain_message(self):
        """No suggestions → single line"""
        assert get_file_not_found_message("x.ckpt", [], "Checkpoint") == "Checkpoint not found: x.ckpt"

    def test_message_lists_suggestions(self):
        """Suggestions appear as a bullet list"""
        message = get_file_not_found_message("a.json", ["b.json"], "Config")
        assert message.startswith("Config not found: a.json")
        assert "  - b.json" in message

    def test_require_missing(self, workdir):
        """Absent synth_smal.json → MissingFile suggesting synth_small.json"""
        with pytest.raises(MissingFile) as exc:
            require_file("synth_smal.json", "Scene spec")
        assert exc.value.code == "MISSING_FILE"
        assert "synth_small.json" in exc.value.suggested_files

    def test_require_existing(self, workdir):
        """Existing file → Path back"""
        assert require_file("joint_small.json") == Path("joint_small.json")
