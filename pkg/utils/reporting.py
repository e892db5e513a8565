"""
CSV output shared by every study and trajectory dump

Files are comma-separated with '.' decimals; comment rows start with '#'.
Floats are written with repr() so identical runs give identical bytes.
"""
import csv
import io
import logging
from typing import Iterable, List, Optional, Sequence

from config import Config

logger = logging.getLogger(__name__)


def format_value(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return '1' if value else '0'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    try:
        # numpy scalars
        if hasattr(value, 'item'):
            return format_value(value.item())
    except (TypeError, ValueError):
        pass
    return str(value)


def provenance_comments(command: str, config_echo: Sequence[str], seed) -> List[str]:
    """Leading comment rows: tool version, full config echo, seed"""
    lines = [f"switchsim {Config.VERSION}", f"command={command}"]
    lines.extend(f"config {line}" for line in config_echo)
    lines.append(f"seed={seed}")
    return lines


def render_csv(header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = (),
               trailer: Sequence[str] = ()) -> str:
    buffer = io.StringIO()
    for line in comments:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    for line in trailer:
        buffer.write(f"# {line}\n")
    return buffer.getvalue()


def write_csv(target: Optional[str], header: Sequence[str], rows: Iterable[Sequence],
              comments: Sequence[str] = (), trailer: Sequence[str] = (), stream=None) -> str:
    """Write to the file at target, or to stream when target is None or '-'"""
    text = render_csv(header, rows, comments, trailer)
    if target and target != '-':
        with open(target, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        logger.info(f"Results written to {target}")
    elif stream is not None:
        stream.write(text)
    return text


def estimate_row(label, estimate) -> list:
    """The `label,n,mean,stderr,aborted` row of an McEstimate"""
    return [label, estimate.n, estimate.mean, estimate.stderr, estimate.aborted]


def fit_comment(fit) -> str:
    return f"slope={format_value(fit.slope)},intercept={format_value(fit.intercept)},r2={format_value(fit.r2)}"
