"""
Table conversion utility
Render metric tables (per-class reports, confusion matrices) as Markdown for stdout
"""
from typing import List, Optional, Sequence


def format_cell(value) -> str:
    """Percent-style formatting for fractions, plain text otherwise"""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{100.0 * value:.1f}"
    return str(value).strip()


def convert_table_to_markdown(table: List[List]) -> str:
    """
    Convert a list-of-rows table to a Markdown table

    Args:
        table: Rows of cells; the first row is the header

    Returns:
        Markdown format string
    """
    if not table:
        return ""

    cleaned_table = [[format_cell(cell) for cell in row] for row in table]

    # Normalize all rows to same column count
    max_cols = max(len(row) for row in cleaned_table)
    normalized_table = [row + [""] * (max_cols - len(row)) for row in cleaned_table]

    lines = []

    # First row as header
    lines.append("| " + " | ".join(normalized_table[0]) + " |")
    lines.append("| " + " | ".join(["---"] * max_cols) + " |")

    for row in normalized_table[1:]:
        lines.append("| " + " | ".join(row) + " |")

    return "\n".join(lines)


def per_class_table(rows: Sequence, average_accuracy: float, average_f1: float,
                    title: Optional[str] = None) -> str:
    """
    Per-class accuracy / F1 table with an average row

    Args:
        rows: PerClassRow models
        average_accuracy: Mean of the per-class accuracies
        average_f1: Mean of the per-class F1 scores
        title: Optional bold caption

    Returns:
        Markdown string
    """
    table = [["Class", "Acc.", "F1"]]
    for row in rows:
        table.append([row.class_name, row.accuracy, row.f1])
    table.append(["**Avg.**", average_accuracy, average_f1])

    md = convert_table_to_markdown(table)
    return f"**{title}**\n\n{md}" if title else md


def confusion_table(class_order: Sequence[str], counts: Sequence[Sequence[int]]) -> str:
    """Confusion matrix as Markdown (rows = truth, columns = prediction)"""
    table = [["truth \\ pred"] + list(class_order)]
    for name, row in zip(class_order, counts):
        table.append([name] + [int(c) for c in row])
    return convert_table_to_markdown(table)
