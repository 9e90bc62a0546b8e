"""Run reports on disk.

A report directory holds:

    report.txt   structured text, described below
    config.txt   the scenario in config-file syntax
    s_a.bin      Alice's final key, packed bits (absent on abort)
    s_b.bin      Bob's final key (absent on abort)
    s_e.bin      eavesdropper's key when the run had corrupt devices

report.txt is a sequence of ``[section]`` blocks. ``[summary]``,
``[timings]`` and ``[auth]`` contain ``key = value`` lines; ``[transcript]``
contains one record per line in the form
``seq | step | sender->receiver | channel | kind | digest [| extras]``.
Key files are written only for runs that did not abort.
"""
import os

import numpy as np

from mdqkd.orchestrator.config import format_config

REPORT = "report.txt"


def _section(name, items):
    lines = [f"[{name}]"]
    lines += [f"{k} = {v}" for k, v in items]
    return lines


def format_report(result):
    summary = [("verdict", result.verdict)]
    if result.abort_detail:
        summary.append(("abort_detail", result.abort_detail))
    summary.append(("adversary", result.config.adversary.describe()))
    summary += list(result.report.as_dict().items())
    summary.append(("key_bits", 0 if result.s_a is None else len(result.s_a)))
    summary.append(("keys_equal", result.s_a is not None and result.s_b is not None
                    and bool(np.array_equal(result.s_a, result.s_b))))
    summary.append(("fingerprint", result.fingerprint()))
    st = result.stats
    timings = [(k, f"{v:.3f}") for k, v in st.get("timings", {}).items()]
    timings.append(("total", f"{st.get('total_seconds', 0):.3f}"))
    auth = [("messages", st.get("auth_messages", 0)),
            ("distinct_lengths", " ".join(str(x) for x in st.get("auth_lengths", [])))]
    for link, acc in st.get("pools", {}).items():
        auth.append((f"pool.{link}", " ".join(f"{k}:{v}" for k, v in acc.items() if k != "link")))
    lines = _section("summary", summary) + [""] + _section("timings", timings) + [""]
    lines += _section("auth", auth) + ["", "[transcript]"] + result.transcript.lines()
    return "\n".join(lines) + "\n"


def _write_key(path, bits):
    with open(path, "wb") as fh:
        fh.write(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes())


def write_report(result, directory, s_e=None):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, REPORT), "w", encoding="utf-8") as fh:
        fh.write(format_report(result))
    with open(os.path.join(directory, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_config(result.config))
    if result.aborted:
        return
    _write_key(os.path.join(directory, "s_a.bin"), result.s_a)
    _write_key(os.path.join(directory, "s_b.bin"), result.s_b)
    if s_e is not None:
        _write_key(os.path.join(directory, "s_e.bin"), s_e)


def read_report(directory):
    """Parse report.txt into ``{section: {key: value}}`` plus the transcript lines."""
    out = {}
    section = None
    with open(os.path.join(directory, REPORT), encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1]
                out[section] = [] if section == "transcript" else {}
                continue
            if not line or section is None:
                continue
            if section == "transcript":
                out[section].append(line)
            else:
                k, _, v = line.partition(" = ")
                out[section][k] = v
    return out


def read_key(directory, name):
    """Key bits from ``<name>.bin``, or None when the file is absent."""
    path = os.path.join(directory, f"{name}.bin")
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fh:
        return np.unpackbits(np.frombuffer(fh.read(), dtype=np.uint8))
