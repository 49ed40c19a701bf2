"""Synthetic commits whose diffs, function sources and messages agree with each other."""
import json
from pathlib import Path
from typing import List, Optional, Sequence

from commits.models import CommitRecord, FunctionSource

OLD_LINE = 'total = total + value;'

# (new line, message) per kind of change
KINDS = (
    ('total = total * factor;', 'Use factor to scale total'),
    ('total = total - offset;', 'Subtract offset from total'),
    ('total = Math.max(total, limit);', 'Clamp total to limit'),
    ('logger.debug(total);', 'Log the total'),
)

NAMES = ('Price', 'Score', 'Weight', 'Height', 'Length', 'Volume', 'Budget', 'Margin')


def method_source(name: str, body_line: str) -> str:
    return '\n'.join([
        f"public int {name}(int value) {{",
        '    int total = value;',
        f"    {body_line}",
        '    return total;',
        '}',
    ])


def toy_diff(file_path: str, name: str, start: int, old_line: str, new_line: str) -> str:
    return '\n'.join([
        f"diff --git a/{file_path} b/{file_path}",
        'index 83db48f..bf269f4 100644',
        f"--- a/{file_path}",
        f"+++ b/{file_path}",
        f"@@ -{start},5 +{start},5 @@",
        f" public int {name}(int value) {{",
        '     int total = value;',
        f"-    {old_line}",
        f"+    {new_line}",
        '     return total;',
        ' }',
    ]) + '\n'


def toy_record(index: int, kind: Optional[int] = None, project: Optional[str] = None,
               timestamp: Optional[int] = None, with_start_line: bool = True) -> CommitRecord:
    kind = index % len(KINDS) if kind is None else kind
    new_line, message = KINDS[kind]
    name = f"compute{NAMES[index % len(NAMES)]}{index}"
    file_path = f"src/main/java/org/toy/Calc{index}.java"
    start = 10 + index
    line = start if with_start_line else None
    return CommitRecord(
        commit_id=f"c{index:04d}",
        message=f"{message}.\n\nLonger explanation of change {index}.",
        diff=toy_diff(file_path, name, start, OLD_LINE, new_line),
        file_changed=1,
        project=project or f"project{index % 4}",
        timestamp=1_500_000_000 + 3600 * index if timestamp is None else timestamp,
        functions=[
            FunctionSource('deleted', method_source(name, OLD_LINE), file_path, line),
            FunctionSource('added', method_source(name, new_line), file_path, line),
        ],
    )


def toy_corpus(count: int = 40) -> List[CommitRecord]:
    return [toy_record(index) for index in range(count)]


def write_dataset(records: Sequence[CommitRecord], path) -> Path:
    path = Path(path)
    with path.open('w', encoding='utf-8') as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict()) + '\n')
    return path
