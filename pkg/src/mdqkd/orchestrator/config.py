"""Scenario configuration files.

Format: UTF-8, one ``key = value`` per line, ``#`` starts a comment, blank
lines are ignored. Keys:

    data                  synthetic | counts:<path>
    n_rounds              int (synthetic only)
    intensity.<label>     real, label in lambda, mu, nu, omega
    q_z | q_x             real, complementary
    p.<label>             real, label in mu, nu, omega
    loss_db, detector_efficiency, dark_count_prob, misalignment    real
    calibration.<a>.<b>   "<gain> <error_rate>"
    eps_sec, t_ev         security budget inputs
    code_rate, block_bits LDPC parameters
    qber_prior            decoder prior in (0, 0.5)
    decoding              central | distributed
    generation            sparse | pulse
    transport             bus | socket
    scheduler             seeded | free
    seed                  int
    pool_bits             pre-shared pad bits per authenticated link
    auth_mode             tight | loose
    adversary.qkd         <module>:<behaviour>, module A1 or A2
    adversary.cp          <unit>:<behaviour>[+<behaviour>...], unit A1..A4
"""
import re
from dataclasses import dataclass, field, replace

from mdqkd.emulator import LABELS, X_LABELS, ChannelParams, SourceParams
from mdqkd.errors import ValidationError

QKD_BEHAVIOURS = ("leak_raw_key", "inconsistent_distribution")
CP_BEHAVIOURS = ("wrong_share_copies", "wrong_mv_inputs", "tampered_syndrome", "garbage_rbs",
                 "silent")
QKD_MODULES = ("A1", "A2")
CP_UNITS = ("A1", "A2", "A3", "A4")


@dataclass(frozen=True)
class AdversarySpec:
    qkd_module: str = ""
    qkd_behaviour: str = ""
    cp_unit: str = ""
    cp_behaviours: tuple = ()

    def __post_init__(self):
        if bool(self.qkd_module) != bool(self.qkd_behaviour):
            raise ValueError("a corrupted QKD module needs exactly one behaviour")
        if self.qkd_module and self.qkd_module not in QKD_MODULES:
            raise ValueError(f"QKD module must be one of {QKD_MODULES}")
        if self.qkd_behaviour and self.qkd_behaviour not in QKD_BEHAVIOURS:
            raise ValueError(f"unknown QKD behaviour {self.qkd_behaviour!r}")
        if bool(self.cp_unit) != bool(self.cp_behaviours):
            raise ValueError("a corrupted CP unit needs at least one behaviour")
        if self.cp_unit and self.cp_unit not in CP_UNITS:
            raise ValueError(f"CP unit must be one of {CP_UNITS}")
        for b in self.cp_behaviours:
            if b not in CP_BEHAVIOURS:
                raise ValueError(f"unknown CP behaviour {b!r}")

    @property
    def honest(self):
        return not self.qkd_module and not self.cp_unit

    def corrupt_units(self):
        return (self.cp_unit,) if self.cp_unit else ()

    def describe(self):
        parts = []
        if self.qkd_module:
            parts.append(f"QKD_{self.qkd_module}:{self.qkd_behaviour}")
        if self.cp_unit:
            parts.append(f"CP_{self.cp_unit}:{'+'.join(self.cp_behaviours)}")
        return ", ".join(parts) or "honest"

    @classmethod
    def parse(cls, qkd="", cp=""):
        kw = {}
        if qkd:
            m, _, b = qkd.partition(":")
            kw.update(qkd_module=m.strip(), qkd_behaviour=b.strip())
        if cp:
            u, _, bs = cp.partition(":")
            kw.update(cp_unit=u.strip(),
                      cp_behaviours=tuple(x.strip() for x in bs.split("+") if x.strip()))
        return cls(**kw)


HONEST = AdversarySpec()


@dataclass(frozen=True)
class ScenarioConfig:
    source: SourceParams = None
    channel: ChannelParams = None
    counts_path: str = ""
    eps_sec: float = 1e-8
    t_ev: int = 64
    code_rate: float = 0.81
    block_bits: int = 1 << 16
    qber_prior: float = 0.025
    decoding: str = "central"
    generation: str = "sparse"
    transport: str = "bus"
    scheduler: str = "seeded"
    seed: int = 1
    pool_bits: int = 4096
    auth_mode: str = "tight"
    adversary: AdversarySpec = field(default_factory=AdversarySpec)

    def __post_init__(self):
        if (self.channel is None) == (not self.counts_path):
            raise ValueError("exactly one data source: a channel model or a counts file")
        if self.source is None and not self.counts_path:
            raise ValueError("synthetic data needs source parameters")
        if self.decoding not in ("central", "distributed"):
            raise ValueError("decoding must be central or distributed")
        if self.generation not in ("sparse", "pulse"):
            raise ValueError("generation must be sparse or pulse")
        if self.transport not in ("bus", "socket"):
            raise ValueError("transport must be bus or socket")
        if self.scheduler not in ("seeded", "free"):
            raise ValueError("scheduler must be seeded or free")
        if self.auth_mode not in ("tight", "loose"):
            raise ValueError("auth_mode must be tight or loose")
        if not 0 < self.qber_prior < 0.5:
            raise ValueError("qber_prior must lie in (0, 0.5)")
        if self.block_bits % 8 or self.block_bits <= 0:
            raise ValueError("block_bits must be a positive multiple of 8")
        if self.pool_bits < 0:
            raise ValueError("pool_bits must be non-negative")

    @property
    def synthetic(self):
        return not self.counts_path

    def with_(self, **kw):
        return replace(self, **kw)


_LINE = re.compile(r"^([A-Za-z_][\w.]*)\s*=\s*(.*)$")


def parse_config(text, base_dir="."):
    """Parse a scenario file; errors carry the offending line number."""
    items = {}
    lines = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ValidationError(f"expected 'key = value', got {line!r}", no, 1)
        key, value = m.group(1), m.group(2).strip()
        if key in items:
            raise ValidationError(f"duplicate key {key!r}", no, 1)
        items[key] = value
        lines[key] = no

    def take(key, conv, default=None):
        if key not in items:
            return default
        v = items.pop(key)
        try:
            return conv(v)
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {exc}", lines[key],
                                  len(key) + 4) from None

    def num(v):
        return float(v)

    def integer(v):
        f = float(v)
        if f != int(f):
            raise ValueError(f"{v!r} is not an integer")
        return int(f)

    data = take("data", str, "synthetic")
    kw = {}
    counts_path = ""
    if data.startswith("counts:"):
        import os
        counts_path = data[len("counts:"):].strip()
        if not os.path.isabs(counts_path):
            counts_path = os.path.join(base_dir, counts_path)
    elif data != "synthetic":
        raise ValidationError(f"unknown data source {data!r}", lines.get("data", 0), 1)

    intens = {lab: take(f"intensity.{lab}", num) for lab in LABELS}
    q_z = take("q_z", num)
    q_x = take("q_x", num)
    if q_z is None and q_x is not None:
        q_z = 1 - q_x
    elif q_z is not None and q_x is not None and abs(q_z + q_x - 1) > 1e-12:
        raise ValidationError("q_z and q_x must sum to 1", lines["q_x"], 1)
    p_a = {lab: take(f"p.{lab}", num) for lab in X_LABELS}
    n_rounds = take("n_rounds", integer)
    chan_kw = {}
    for key in ("loss_db", "detector_efficiency", "dark_count_prob", "misalignment"):
        v = take(key, num)
        if v is not None:
            chan_kw[key] = v
    calibration = {}
    for key in [k for k in items if k.startswith("calibration.")]:
        parts = key.split(".")
        if len(parts) != 3 or parts[1] not in LABELS or parts[2] not in LABELS:
            raise ValidationError(f"bad calibration key {key!r}", lines[key], 1)
        vals = take(key, lambda v: [float(x) for x in v.split()])
        if len(vals) != 2:
            raise ValidationError("calibration needs '<gain> <error_rate>'", lines[key], 1)
        calibration[parts[1], parts[2]] = tuple(vals)

    try:
        if not counts_path:
            missing = [k for k, v in intens.items() if v is None] + \
                      [k for k, v in p_a.items() if v is None]
            if missing or q_z is None or n_rounds is None:
                raise ValidationError(f"synthetic data needs intensities, q_z, p.* and n_rounds"
                                      f" (missing {missing or 'q_z/n_rounds'})")
            kw["source"] = SourceParams(intens, q_z, p_a, n_rounds)
            kw["channel"] = ChannelParams(calibration=calibration, **chan_kw)
        else:
            if any(v is not None for v in intens.values()) or n_rounds is not None:
                raise ValidationError("a counts file carries its own source parameters")
            kw["counts_path"] = counts_path
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(str(exc)) from None

    for key, conv in (("eps_sec", num), ("t_ev", integer), ("code_rate", num),
                      ("block_bits", integer), ("qber_prior", num), ("decoding", str),
                      ("generation", str), ("transport", str), ("scheduler", str),
                      ("seed", integer), ("pool_bits", integer), ("auth_mode", str)):
        v = take(key, conv)
        if v is not None:
            kw[key] = v
    try:
        kw["adversary"] = AdversarySpec.parse(take("adversary.qkd", str, ""),
                                              take("adversary.cp", str, ""))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if items:
        key = next(iter(items))
        raise ValidationError(f"unknown key {key!r}", lines[key], 1)
    try:
        return ScenarioConfig(**kw)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def load_config(path):
    import os
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def format_config(cfg):
    out = []
    if cfg.counts_path:
        out.append(f"data = counts:{cfg.counts_path}")
    else:
        src, ch = cfg.source, cfg.channel
        out.append("data = synthetic")
        out.append(f"n_rounds = {src.n_rounds}")
        for lab in LABELS:
            out.append(f"intensity.{lab} = {src.intensity_values[lab]!r}")
        out.append(f"q_z = {src.q_z!r}")
        for lab in X_LABELS:
            out.append(f"p.{lab} = {src.p_a[lab]!r}")
        for key in ("loss_db", "detector_efficiency", "dark_count_prob", "misalignment"):
            out.append(f"{key} = {getattr(ch, key)!r}")
        for (a, b), (g, e) in sorted(ch.calibration.items()):
            out.append(f"calibration.{a}.{b} = {g!r} {e!r}")
    for key in ("eps_sec", "t_ev", "code_rate", "block_bits", "qber_prior", "decoding",
                "generation", "transport", "scheduler", "seed", "pool_bits", "auth_mode"):
        out.append(f"{key} = {getattr(cfg, key)!r}".replace("'", ""))
    adv = cfg.adversary
    if adv.qkd_module:
        out.append(f"adversary.qkd = {adv.qkd_module}:{adv.qkd_behaviour}")
    if adv.cp_unit:
        out.append(f"adversary.cp = {adv.cp_unit}:{'+'.join(adv.cp_behaviours)}")
    return "\n".join(out) + "\n"


def desk_config(**overrides):
    """Synthetic scenario sized for a single desk run with a positive key.

    Loss-free relay, vacuum weakest decoy and about 5e8 rounds per pair: the
    smallest regime where the finite-size decoy bounds leave key after error
    correction at the default security budget.
    """
    src = SourceParams({"lambda": 0.35, "mu": 0.41, "nu": 0.1, "omega": 0.0}, 0.37,
                       {"mu": 0.115, "nu": 0.505, "omega": 0.38}, 500_000_000)
    ch = ChannelParams(loss_db=0.0, detector_efficiency=0.65, dark_count_prob=1e-8,
                       misalignment=0.005)
    return ScenarioConfig(source=src, channel=ch).with_(**overrides)
