"""
Filename similarity matching utility
Suggest similar input files when a non-existent manifest, config or checkpoint is requested
"""
from pathlib import Path
from typing import Iterator, List, Union
import difflib
import re
import unicodedata

from .errors import MissingFile


# Suffixes of the inputs the CLI consumes
INPUT_SUFFIXES = (".jsonl", ".json", ".csv", ".ckpt", ".caem", ".png")


def normalize_filename(name: str) -> str:
    """Normalize filename to NFC for cross-platform compatibility (macOS uses NFD)"""
    return unicodedata.normalize('NFC', name.lower())


def extract_keywords(filename: str) -> List[str]:
    """
    Alphabetic and numeric tokens of a filename stem
    ('pretrain_small_v2' -> ['pretrain', 'small', 'v', '2'])
    """
    normalized = normalize_filename(filename)
    return re.findall(r'[a-z]+', normalized) + re.findall(r'\d+', normalized)


def _search_dirs(requested: Path) -> List[Path]:
    parent = requested.parent if requested.parent.is_absolute() else Path.cwd() / requested.parent
    dirs = [parent] if parent.is_dir() else []
    return dirs + ([Path.cwd()] if Path.cwd() not in dirs else [])


def _candidates(requested: Path) -> Iterator[Path]:
    """Files with a matching suffix next to the request, one level below it, and in the cwd"""
    suffixes = (requested.suffix.lower(),) if requested.suffix else INPUT_SUFFIXES
    seen = set()
    for directory in _search_dirs(requested):
        try:
            paths = sorted(directory.glob("*")) + sorted(directory.glob("*/*"))
        except OSError:
            continue
        for path in paths:
            if path not in seen and path.is_file() and path.suffix.lower() in suffixes:
                seen.add(path)
                yield path


def _display(path: Path) -> str:
    try:
        return str(path.relative_to(Path.cwd()))
    except ValueError:
        return str(path)


def find_similar_files(
    requested_path: str,
    max_suggestions: int = 3,
    cutoff: float = 0.3
) -> List[str]:
    """
    Find input files similar to the requested file

    Candidates sharing a keyword (two letters or more) with the request are
    preferred; the survivors are ranked by difflib name similarity.

    Args:
        requested_path: Requested file path
        max_suggestions: Maximum number of suggestions
        cutoff: Minimum similarity (0.0-1.0)

    Returns:
        Display paths of the closest files, best first
    """
    requested = Path(requested_path)
    candidates = list(_candidates(requested))
    if not candidates:
        return []

    keywords = [kw for kw in extract_keywords(requested.stem) if len(kw) >= 2]
    with_keyword = [p for p in candidates if any(kw in normalize_filename(p.stem) for kw in keywords)]
    pool = with_keyword or candidates

    by_name = {}
    for path in pool:
        by_name.setdefault(normalize_filename(path.name), path)
    names = difflib.get_close_matches(normalize_filename(requested.name), list(by_name), n=max_suggestions,
                                      cutoff=cutoff)
    return [_display(by_name[name]) for name in names]


def get_file_not_found_message(
    requested_path: str,
    similar_files: List[str],
    what: str = "File"
) -> str:
    """
    MISSING_FILE error message, with suggestions when there are any

    Args:
        requested_path: Requested file path
        similar_files: List of similar files
        what: Kind of file for the message ("Manifest", "Checkpoint", ...)
    """
    base_msg = f"{what} not found: {requested_path}"
    if not similar_files:
        return base_msg

    suggestions = "\n".join(f"  - {f}" for f in similar_files)
    return f"{base_msg}\n\nDid you mean one of these?\n{suggestions}"


def require_file(path: Union[str, Path], what: str = "File") -> Path:
    """Path if it exists, otherwise MissingFile carrying similar-file suggestions"""
    path = Path(path)
    if not path.exists():
        similar = find_similar_files(str(path))
        raise MissingFile(get_file_not_found_message(str(path), similar, what), similar or None)
    return path
