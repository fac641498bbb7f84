import pytest

from conftest import GOLDEN_DIR, check_golden


def test_missing_digest_is_skipped_not_recorded(tmp_path):
    with pytest.raises(pytest.skip.Exception, match="MASKNOISE_RECORD_GOLDEN"):
        check_golden("absent", "abc", directory=tmp_path, record=False)
    assert list(tmp_path.iterdir()) == []


def test_recording_writes_then_compares(tmp_path):
    check_golden("demo", "abc", directory=tmp_path / "g", record=True)
    assert (tmp_path / "g" / "demo.sha256").read_text() == "abc\n"
    check_golden("demo", "abc", directory=tmp_path / "g", record=False)
    with pytest.raises(AssertionError):
        check_golden("demo", "abd", directory=tmp_path / "g", record=False)


def test_committed_digests_are_sha256_hex():
    digests = sorted(GOLDEN_DIR.glob("*.sha256"))
    assert digests
    for path in digests:
        text = path.read_text().strip()
        assert len(text) == 64 and all(ch in "0123456789abcdef" for ch in text), path.name
