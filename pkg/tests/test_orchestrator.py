import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqkd import cli, emulator
from mdqkd.emulator import CountsTable
from mdqkd.errors import ValidationError
from mdqkd.orchestrator import analysis, report, sifting
from mdqkd.orchestrator.config import (AdversarySpec, ScenarioConfig, format_config,
                                       load_config, parse_config)
from mdqkd.orchestrator.protocol import replay, run_protocol
from mdqkd.orchestrator.transport import (Frame, Scheduler, SocketTransport, decode_frame,
                                          decode_payload, encode_frame, encode_payload,
                                          make_transport)
from mdqkd.transcript import AUTHENTICATED
from mdqkd.vss import share

from conftest import RECORDED_COUNTS, small_config, tiny_config

# ------------------------------------------------------------------ config


def test_config_roundtrip():
    cfg = small_config(adversary=AdversarySpec.parse("A1:leak_raw_key", "A2:silent+garbage_rbs"),
                       decoding="distributed", transport="socket", seed=7)
    again = parse_config(format_config(cfg))
    assert again == cfg
    counts = parse_config(f"data = counts:{RECORDED_COUNTS}\neps_sec = 1e-9\n")
    assert counts.counts_path == RECORDED_COUNTS and not counts.synthetic
    assert parse_config(format_config(counts)) == counts


def test_config_relative_counts_path(tmp_path):
    path = tmp_path / "scenario.txt"
    path.write_text("data = counts:c.txt  # next to the scenario\n")
    assert load_config(path).counts_path == str(tmp_path / "c.txt")


BASE = format_config(small_config())


@pytest.mark.parametrize("text, line", [
    (BASE + "frobnicate = 1\n", BASE.count("\n") + 1),
    (BASE + "seed = 3\n", BASE.count("\n") + 1),
    ("data = synthetic\nn_rounds = 1.5\n", 2),
    (BASE + "q_x = 0.9\n", BASE.count("\n") + 1),
    ("just words\n", 1),
    ("data = tape\n", 1),
    ("data = synthetic\ncalibration.lambda.zeta = 1 0\n", 2),
])
def test_config_errors_carry_line(text, line):
    with pytest.raises(ValidationError) as err:
        parse_config(text)
    assert err.value.line == line


@pytest.mark.parametrize("text", [
    "data = synthetic\nn_rounds = 10\n",
    f"data = counts:{RECORDED_COUNTS}\nintensity.mu = 0.1\n",
    f"data = counts:{RECORDED_COUNTS}\ndecoding = psychic\n",
    BASE + "adversary.cp = A5:silent\n",
])
def test_config_rejects_inconsistent_scenarios(text):
    with pytest.raises(ValidationError):
        parse_config(text)


@pytest.mark.parametrize("kw", [
    dict(qkd_module="A1"),
    dict(qkd_module="A3", qkd_behaviour="leak_raw_key"),
    dict(qkd_module="A1", qkd_behaviour="sneeze"),
    dict(cp_unit="A1"),
    dict(cp_unit="B", cp_behaviours=("silent",)),
    dict(cp_unit="A2", cp_behaviours=("silent", "gossip")),
])
def test_adversary_spec_validation(kw):
    with pytest.raises(ValueError):
        AdversarySpec(**kw)


def test_adversary_description():
    spec = AdversarySpec.parse("A2:inconsistent_distribution", "A4:silent+garbage_rbs")
    assert spec.describe() == "QKD_A2:inconsistent_distribution, CP_A4:silent+garbage_rbs"
    assert AdversarySpec().honest and AdversarySpec().describe() == "honest"
    assert analysis.corrupt_devices(spec) == {"QKD_A2", "CP_A4"}


def test_scenario_needs_one_data_source():
    cfg = small_config()
    with pytest.raises(ValueError):
        ScenarioConfig(source=cfg.source, channel=cfg.channel, counts_path="x")
    with pytest.raises(ValueError):
        ScenarioConfig(channel=cfg.channel)


# --------------------------------------------------------------- transport

payloads = st.recursive(
    st.none() | st.integers(-2 ** 70, 2 ** 70) | st.binary(max_size=64)
    | st.lists(st.integers(0, 1), max_size=300).map(lambda b: np.array(b, np.uint8))
    | st.lists(st.booleans(), max_size=300).map(lambda b: np.array(b, dtype=bool)),
    lambda inner: st.lists(inner, max_size=4).map(tuple), max_leaves=12)


def same(a, b):
    if isinstance(a, np.ndarray):
        return isinstance(b, np.ndarray) and a.dtype == b.dtype and np.array_equal(a, b)
    if isinstance(a, tuple):
        return isinstance(b, tuple) and len(a) == len(b) and all(map(same, a, b))
    return a == b


@settings(max_examples=200)
@given(payloads)
def test_payload_roundtrip(obj):
    assert same(decode_payload(encode_payload(obj)), obj)


def test_payload_kinds():
    for obj in (np.arange(6, dtype=np.int64).reshape(2, 3), np.eye(3, dtype=np.uint8),
                np.array([0.5, -1.25]), np.array([True, False, True]), np.eye(2, dtype=bool)):
        assert same(decode_payload(encode_payload(obj)), obj)
    assert decode_payload(encode_payload(True)) == 1
    with pytest.raises(TypeError):
        encode_payload({"a": 1})
    with pytest.raises(ValueError):
        decode_payload(encode_payload(5) + b"\x00")


@settings(max_examples=100)
@given(payloads, st.text(max_size=20), st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 64 - 1))
def test_frame_roundtrip(obj, kind, seq, tag):
    frame = Frame("A1", "B", kind, AUTHENTICATED, obj, seq, tag, 128)
    back = decode_frame(encode_frame(frame))
    assert same(back.payload, obj)
    assert (back.sender, back.receiver, back.kind, back.seq, back.tag, back.pad_offset) == \
        ("A1", "B", kind, seq, tag, 128)


def test_frame_decode_errors():
    data = encode_frame(Frame("A1", "A2", "x", AUTHENTICATED, b"abc"))
    with pytest.raises(ValueError, match="magic"):
        decode_frame(b"ZZ" + data[2:])
    with pytest.raises(ValueError):
        decode_frame(data + b"\x00")


def test_socket_transport_moves_large_payloads():
    t = SocketTransport()
    try:
        bits = np.random.default_rng(0).integers(0, 2, 20_000_000, dtype=np.uint8)
        out = t.deliver(Frame("A1", "A2", "big", "shielded-internal", bits))
        assert np.array_equal(out.payload, bits) and t.bytes_moved > len(bits) // 8
    finally:
        t.close()
    with pytest.raises(ValueError):
        make_transport("pigeon")


def test_scheduler_modes():
    tasks = {f"A{i}": (lambda i=i: i * i) for i in range(1, 5)}
    a, b = Scheduler("seeded", 3), Scheduler("seeded", 3)
    assert a.run(tasks) == b.run(tasks) == Scheduler("free").run(tasks)
    assert a.order_log == b.order_log
    with pytest.raises(ValueError):
        Scheduler("chaotic")


# ------------------------------------------------------------ honest runs


def test_honest_run_delivers_equal_keys(honest_small):
    res = honest_small
    assert not res.aborted
    assert np.array_equal(res.s_a, res.s_b)
    assert len(res.s_a) == res.report.l_final == res.public["l"]
    assert res.report.l_final == 32 * (min(res.report.l_pairs) // 32)
    assert not res.transcript.unresolved_complaints()


def test_honest_run_authentication_accounting(honest_small):
    st_ = honest_small.stats
    assert st_["auth_messages"] == 15
    assert honest_small.report.l_au == 960
    for acc in st_["pools"].values():
        assert acc["consumed"] == 64 * acc["messages"]
    auth = [r for r in honest_small.transcript if r.channel == AUTHENTICATED]
    assert len(auth) == 15 and all(r.verified for r in auth)


def test_honest_run_step_order(honest_small):
    steps = []
    for r in honest_small.transcript:
        if not steps or steps[-1] != r.step:
            steps.append(r.step)
    per_pair = [f"{n} {name} pair{j}" for j in (1, 2)
                for n, name in ((4, "distribution"), (5, "sifting"), (6, "estimation"))]
    assert steps == ["1-3 quantum", *per_pair, "6 final length", "7 permutation",
                     "8 information reconciliation", "8 random bit strings",
                     "8 error verification", "9 privacy amplification"]


def test_run_is_independent_of_scheduling_and_transport(honest_small):
    base = honest_small.fingerprint()
    assert run_protocol(small_config(scheduler="free")).fingerprint() == base
    assert run_protocol(small_config(transport="socket")).fingerprint() == base


def test_replay_reproduces_the_transcript():
    first = run_protocol(tiny_config())
    ok, again = replay(tiny_config(), first.transcript.lines())
    assert ok and again.fingerprint() == first.fingerprint()
    ok, _ = replay(tiny_config(seed=2), first.transcript.lines())
    assert not ok


def test_tiny_run_aborts_at_estimation():
    res = run_protocol(tiny_config())
    assert res.aborted and res.verdict == "EstimationNegative"
    assert res.s_a is None and res.report.l_final == 0


def test_corrupt_share_copies_and_syndromes_do_not_change_the_key(honest_small):
    spec = AdversarySpec(cp_unit="A1", cp_behaviours=("wrong_share_copies", "tampered_syndrome"))
    res = run_protocol(small_config(adversary=spec))
    assert not res.aborted
    assert np.array_equal(res.s_a, honest_small.s_a) and np.array_equal(res.s_b, res.s_a)


# ------------------------------------------------------------ counts files


def aggregate_tables(cfg):
    tables = []
    for j in (1, 2):
        log = emulator.generate_rounds(cfg.source, cfg.channel, cfg.seed, stream=j,
                                       method=cfg.generation)
        tables.append(emulator.aggregate(log, emulator.sift_masks(log)))
    return tables


def test_counts_file_run(tmp_path):
    cfg = small_config()
    path = tmp_path / "counts.txt"
    emulator.save_counts(path, cfg.source, aggregate_tables(cfg))
    res = run_protocol(replace(cfg, source=None, channel=None, counts_path=str(path)))
    assert not res.aborted and np.array_equal(res.s_a, res.s_b)


def test_counts_file_with_random_x_outcomes_aborts(tmp_path):
    cfg = small_config()
    tables = [CountsTable(t.z_count, t.z_errors, t.x_counts,
                          [[c // 2 for c in row] for row in t.x_counts], t.n_rounds)
              for t in aggregate_tables(cfg)]
    path = tmp_path / "counts.txt"
    emulator.save_counts(path, cfg.source, tables)
    res = run_protocol(replace(cfg, source=None, channel=None, counts_path=str(path)))
    assert res.verdict == "EstimationNegative"


# ----------------------------------------------------------------- sifting


def test_sifting_commutes_with_sharing():
    cfg = tiny_config()
    src = replace(cfg.source, n_rounds=200_000)
    log = emulator.generate_rounds(src, cfg.channel, 3)
    z = log.alice_bit[log.alice_label == emulator.LAMBDA]
    g = np.random.default_rng(4)
    shares = share(z, [g.integers(0, 2, len(z), dtype=np.uint8) for _ in range(3)])
    out = sifting.sift(log, shares)
    expected = log.alice_bit[out.masks.z] ^ 1
    assert np.array_equal(out.shares.secret(), expected)
    assert len(out.z_b) == len(expected)


# ------------------------------------------------------------------ reports


def test_report_roundtrip(tmp_path, honest_small):
    report.write_report(honest_small, tmp_path)
    parsed = report.read_report(tmp_path)
    assert parsed["summary"]["verdict"] == "ok"
    assert parsed["summary"]["keys_equal"] == "True"
    assert parsed["summary"]["fingerprint"] == honest_small.fingerprint()
    assert parsed["transcript"] == honest_small.transcript.lines()
    key = report.read_key(tmp_path, "s_a")
    assert np.array_equal(key[:len(honest_small.s_a)], honest_small.s_a)
    assert report.read_key(tmp_path, "s_e") is None
    assert load_config(tmp_path / "config.txt") == honest_small.config


def test_aborted_run_writes_no_keys(tmp_path):
    res = run_protocol(tiny_config())
    report.write_report(res, tmp_path)
    assert not os.path.exists(tmp_path / "s_a.bin") and not os.path.exists(tmp_path / "s_b.bin")
    assert report.read_report(tmp_path)["summary"]["verdict"] == "EstimationNegative"


# ------------------------------------------------------------------ analysis


def test_eve_view_input_checks(honest_small):
    with pytest.raises(ValueError):
        analysis.eve_view(honest_small)
    with pytest.raises(ValueError):
        analysis.eve_view(honest_small, {"QKD_A1", "QKD_A2"})
    with pytest.raises(ValueError):
        analysis.eve_view(honest_small, {"CP_A1", "CP_A2"})
    with pytest.raises(ValueError):
        analysis.eve_view(run_protocol(tiny_config()), {"CP_A1"})


def test_eve_view_of_honest_run_is_unbiased(honest_small):
    frac, z = analysis.bit_bias(analysis.eve_view(honest_small, {"QKD_A1", "CP_A2"}),
                                honest_small.s_a)
    assert abs(z) < 4


def test_otp_demo_and_uniformity():
    key = np.random.default_rng(5).integers(0, 2, 8 * 4096, dtype=np.uint8)
    image = bytes(range(256)) * 16
    out = analysis.demo_otp(image, key, key)
    assert out["bob_plain"] == image and out["eve_plain"] is None
    assert analysis.byte_uniformity(b"") == (0.0, 1.0)
    assert analysis.byte_uniformity(b"\x00" * 4096)[1] < 1e-6
    with pytest.raises(ValueError):
        analysis.demo_otp(image, key[:100], key)


def test_rate_curve_shape():
    rows = analysis.rate_curve(small_config().with_(source=replace(
        small_config().source, n_rounds=10 ** 11)), [0, 6, 12, 60])
    k_d = [r[1] for r in rows]
    k_h = [r[2] for r in rows]
    assert k_d[0] > 0 and all(a >= b for a, b in zip(k_d, k_d[1:]))
    assert k_d[-1] == 0 and k_h[-1] == 0
    assert all(h >= d for d, h in zip(k_d, k_h))
    with pytest.raises(ValueError):
        analysis.rate_curve(load_config_counts(), [0])


def load_config_counts():
    return parse_config(f"data = counts:{RECORDED_COUNTS}\n")


@pytest.mark.xfail(strict=True, reason="decoy bound on the recorded counts is 13% above the "
                                       "reported single-photon count, doubling the key length")
def test_calibrated_rate_at_24_db():
    src, tables = emulator.load_counts(RECORDED_COUNTS)
    cfg = ScenarioConfig(source=src, channel=analysis.calibration_from_counts(src, tables[0]))
    (_, k_d, _), = analysis.rate_curve(cfg, [24.0])
    assert abs(k_d / 1.1e-7 - 1) <= 0.15, k_d


def test_calibration_reproduces_counts():
    src, tables = emulator.load_counts(RECORDED_COUNTS)
    ch = analysis.calibration_from_counts(src, tables[0])
    expected = emulator.expected_counts(src, ch)
    assert expected.z_count == pytest.approx(tables[0].z_count, rel=1e-9)
    assert expected.x_counts[0][0] == pytest.approx(tables[0].x_counts[0][0], rel=1e-9)


# ----------------------------------------------------------------------- CLI


def test_cli_parse_helpers():
    spec = cli.parse_adversary("QKD_A1:leak_raw_key,CP_A2:silent+garbage_rbs")
    assert spec.describe() == "QKD_A1:leak_raw_key, CP_A2:silent+garbage_rbs"
    assert cli.parse_adversary("honest").honest and cli.parse_adversary("").honest
    for bad in ("QKD_A1", "CP_A1:silent,CP_A2:silent", "TV_A1:silent", "CP_A9:silent"):
        with pytest.raises(ValidationError):
            cli.parse_adversary(bad)
    assert cli.parse_losses("10:14:2") == [10.0, 12.0, 14.0]
    assert cli.parse_losses("1,2.5") == [1.0, 2.5]
    with pytest.raises(ValidationError):
        cli.parse_losses("1:2:0")


def test_cli_estimate_and_ingest(capsys):
    assert cli.main(["ingest", RECORDED_COUNTS]) == 0
    assert "pair 2" in capsys.readouterr().out
    assert cli.main(["estimate", "--counts", RECORDED_COUNTS]) == 0
    out = capsys.readouterr().out
    assert "[summary]" in out and "aborted = False" in out


def test_cli_errors_exit_2(tmp_path, capsys):
    assert cli.main(["ingest", str(tmp_path / "missing.txt")]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense\n")
    assert cli.main(["run", "--config", str(bad), "--report", str(tmp_path / "r")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_simulate_and_abort(tmp_path, capsys):
    params = tmp_path / "tiny.txt"
    params.write_text(format_config(tiny_config()))
    counts = tmp_path / "counts.txt"
    assert cli.main(["simulate", "--params", str(params), "--rounds", "100000",
                     "--out", str(counts)]) == 0
    assert emulator.load_counts(counts)[0].n_rounds == 100000
    out_dir = tmp_path / "run"
    assert cli.main(["run", "--config", str(params), "--report", str(out_dir)]) == 1
    assert not (out_dir / "s_a.bin").exists()
    assert cli.main(["demo-otp", "--image", str(params), "--run", str(out_dir)]) == 2
    assert cli.main(["rate-curve", "--config", str(params), "--losses", "0,60"]) == 0
    assert "loss_db" in capsys.readouterr().out


def test_cli_run_with_adversary_and_otp(tmp_path, capsys):
    params = tmp_path / "small.txt"
    params.write_text(format_config(small_config()))
    out_dir = tmp_path / "run"
    assert cli.main(["run", "--config", str(params), "--report", str(out_dir),
                     "--adversary", "QKD_A1:leak_raw_key", "--seed", "2"]) == 0
    assert (out_dir / "s_e.bin").exists()
    image = tmp_path / "img.bin"
    n_bytes = len(report.read_key(out_dir, "s_a")) // 8 // 2
    image.write_bytes(bytes(range(256)) * (n_bytes // 256) or b"\x01")
    assert cli.main(["demo-otp", "--image", str(image), "--run", str(out_dir)]) == 0
    assert "bob_plain == image: True" in capsys.readouterr().out
    assert (out_dir / "eve_plain.bin").exists()
