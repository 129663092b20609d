"""Experiment front end: scenario configs, seeded geometry, sweeps, CSV output.

Configs are sectioned key-value documents (INI syntax). Geometry realizations
are derived deterministically from (seed, geometry index) only, so every
scheme and axis value within one sweep sees paired geometries and paired
fading blocks.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Scenario, build_upa, geometry_tables
from .channel import channel_statistics
from .estimation import estimation_statistics, nmse
from .optimizer import (PgaConfig, broadside_orientation, optimize_orientation,
                        uniform_cap_orientation)
from .simulation import ergodic_rate
from .surrogates import mrc_surrogate, wzf_surrogate

SPEED_OF_LIGHT = 3.0e8  # nominal, m/s

AXES = ("N", "K", "power", "theta_max", "b", "pilot_fraction", "angular_separation")
SCHEMES = ("mrc-opt", "mrc-ran", "wzf-opt", "wzf-ran", "fix", "nmse-opt")
OUTPUTS = ("surrogate", "ergodic")

# receivers whose rates are reported per scheme; orientation-only schemes are
# scored under both receivers
_SCHEME_RECEIVERS = {
    "mrc-opt": ("mrc",),
    "mrc-ran": ("mrc",),
    "wzf-opt": ("wzf",),
    "wzf-ran": ("wzf",),
    "fix": ("mrc", "wzf"),
    "nmse-opt": ("mrc", "wzf"),
}


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario configuration; dB fields keep the document's units."""

    n_row: int
    n_col: int
    carrier_hz: float
    gain_exponent: float
    rho_over_4pi: float
    cluster_rcs: tuple
    n_clusters: int
    n_users: int
    user_radius_m: tuple
    user_height_m: tuple
    radial_uniform: bool
    cluster_radius_m: tuple
    cluster_height_m: tuple
    noise_dbm: float
    power_dbm: float
    pilot_power_dbm: float
    tau_p: int | None            # None tracks the number of users
    coherence_length: int
    theta_max_deg: float
    geometries: int
    blocks_per_geometry: int
    seed: int

    def __post_init__(self):
        if self.n_row < 1 or self.n_col < 1 or self.n_users < 1 or self.n_clusters < 0:
            raise ValueError("array/user/cluster counts out of range")
        if len(self.cluster_rcs) != self.n_clusters or any(s <= 0 for s in self.cluster_rcs):
            raise ValueError("cluster_rcs must list one positive value per cluster")
        for name, (lo, hi) in (("users.radius_m", self.user_radius_m),
                               ("users.height_m", self.user_height_m),
                               ("clusters.radius_m", self.cluster_radius_m),
                               ("clusters.height_m", self.cluster_height_m)):
            if hi < lo or ("radius" in name and lo < 0):
                raise ValueError(f"empty or invalid region {name} = ({lo}, {hi})")
        if self.tau_p is not None and self.tau_p < self.n_users:
            raise ValueError("tau_p must be >= K")
        if self.coherence_length <= self.pilot_length:
            raise ValueError("T_c must exceed tau_p")
        if not 0 < self.theta_max_deg <= 90:
            raise ValueError("theta_max_deg must lie in (0, 90]")
        if self.geometries < 1 or self.blocks_per_geometry < 1:
            raise ValueError("mc counts must be >= 1")

    @property
    def pilot_length(self):
        return self.n_users if self.tau_p is None else self.tau_p

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz


def default_config():
    """Baseline configuration: 2x4 array at 6 GHz, 4 users, 3 clusters,
    b = 4, -80 dBm noise, 20 dBm powers, theta_max 60 deg, tau_p = K, T_c = 200."""
    return ScenarioConfig(
        n_row=2, n_col=4, carrier_hz=6.0e9,
        gain_exponent=4.0, rho_over_4pi=1.0e-3,
        cluster_rcs=(100.0 / 3.0,) * 3, n_clusters=3,
        n_users=4, user_radius_m=(0.0, 300.0), user_height_m=(100.0, 200.0),
        radial_uniform=False,
        cluster_radius_m=(0.0, 350.0), cluster_height_m=(50.0, 250.0),
        noise_dbm=-80.0, power_dbm=20.0, pilot_power_dbm=20.0,
        tau_p=None, coherence_length=200, theta_max_deg=60.0,
        geometries=100, blocks_per_geometry=100, seed=12345,
    )


_SCHEMA = {
    "array": ("n_row", "n_col", "carrier_hz"),
    "channel": ("b", "rho_over_4pi", "cluster_rcs", "Q"),
    "users": ("K", "radius_m", "height_m"),
    "clusters": ("radius_m", "height_m"),
    "link": ("noise_dbm", "power_dbm", "pilot_power_dbm", "tau_p", "T_c"),
    "rotation": ("theta_max_deg",),
    "mc": ("geometries", "blocks_per_geometry", "seed"),
}
_OPTIONAL = {("users", "radial_uniform")}


def _pair(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'min, max', got {text!r}")
    return tuple(parts)


def parse_config(text):
    """Parse a sectioned key-value document; missing or unknown fields reject."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(text)
    missing, unknown = [], []
    for section, keys in _SCHEMA.items():
        if not parser.has_section(section):
            missing.extend(f"{section}.{k}" for k in keys)
            continue
        for k in keys:
            if not parser.has_option(section, k):
                missing.append(f"{section}.{k}")
        for k in parser.options(section):
            if k not in keys and (section, k) not in _OPTIONAL:
                unknown.append(f"{section}.{k}")
    unknown.extend(f"{s}.*" for s in parser.sections() if s not in _SCHEMA)
    if missing or unknown:
        raise ValueError(
            f"config rejected; missing fields: {missing or 'none'}, "
            f"unknown fields: {unknown or 'none'}")

    get = parser.get
    n_clusters = int(get("channel", "Q"))
    rcs_text = get("channel", "cluster_rcs").strip()
    if n_clusters == 0:
        rcs = ()
    else:
        rcs_raw = [float(p) for p in rcs_text.split(",")]
        if len(rcs_raw) == 1:
            rcs = tuple(rcs_raw * n_clusters)
        elif len(rcs_raw) == n_clusters:
            rcs = tuple(rcs_raw)
        else:
            raise ValueError("cluster_rcs must be one value or one per cluster")
    tau_raw = get("link", "tau_p").strip()
    tau_p = None if tau_raw == "K" else int(tau_raw)
    radial_uniform = (parser.getboolean("users", "radial_uniform")
                      if parser.has_option("users", "radial_uniform") else False)
    return ScenarioConfig(
        n_row=int(get("array", "n_row")),
        n_col=int(get("array", "n_col")),
        carrier_hz=float(get("array", "carrier_hz")),
        gain_exponent=float(get("channel", "b")),
        rho_over_4pi=float(get("channel", "rho_over_4pi")),
        cluster_rcs=rcs,
        n_clusters=n_clusters,
        n_users=int(get("users", "K")),
        user_radius_m=_pair(get("users", "radius_m")),
        user_height_m=_pair(get("users", "height_m")),
        radial_uniform=radial_uniform,
        cluster_radius_m=_pair(get("clusters", "radius_m")),
        cluster_height_m=_pair(get("clusters", "height_m")),
        noise_dbm=float(get("link", "noise_dbm")),
        power_dbm=float(get("link", "power_dbm")),
        pilot_power_dbm=float(get("link", "pilot_power_dbm")),
        tau_p=tau_p,
        coherence_length=int(get("link", "T_c")),
        theta_max_deg=float(get("rotation", "theta_max_deg")),
        geometries=int(get("mc", "geometries")),
        blocks_per_geometry=int(get("mc", "blocks_per_geometry")),
        seed=int(get("mc", "seed")),
    )


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_document(cfg):
    """Canonical sectioned key-value rendering of a configuration."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["array"] = {"n_row": cfg.n_row, "n_col": cfg.n_col,
                       "carrier_hz": repr(cfg.carrier_hz)}
    parser["channel"] = {"b": repr(cfg.gain_exponent),
                         "rho_over_4pi": repr(cfg.rho_over_4pi),
                         "cluster_rcs": ", ".join(repr(s) for s in cfg.cluster_rcs),
                         "Q": cfg.n_clusters}
    parser["users"] = {"K": cfg.n_users,
                       "radius_m": ", ".join(repr(v) for v in cfg.user_radius_m),
                       "height_m": ", ".join(repr(v) for v in cfg.user_height_m),
                       "radial_uniform": str(cfg.radial_uniform).lower()}
    parser["clusters"] = {"radius_m": ", ".join(repr(v) for v in cfg.cluster_radius_m),
                          "height_m": ", ".join(repr(v) for v in cfg.cluster_height_m)}
    parser["link"] = {"noise_dbm": repr(cfg.noise_dbm),
                      "power_dbm": repr(cfg.power_dbm),
                      "pilot_power_dbm": repr(cfg.pilot_power_dbm),
                      "tau_p": "K" if cfg.tau_p is None else cfg.tau_p,
                      "T_c": cfg.coherence_length}
    parser["rotation"] = {"theta_max_deg": repr(cfg.theta_max_deg)}
    parser["mc"] = {"geometries": cfg.geometries,
                    "blocks_per_geometry": cfg.blocks_per_geometry,
                    "seed": cfg.seed}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_hash(cfg):
    return hashlib.sha256(config_document(cfg).encode("utf-8")).hexdigest()


def derive_seed(*parts):
    """Stable 64-bit child seed from integer tags."""
    ss = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(ss.generate_state(1, np.uint64)[0])


def _sample_cylinder(rng, count, radius_range, height_range, radial_uniform):
    lo, hi = radius_range
    u = rng.random(count)
    if radial_uniform:
        r = lo + u * (hi - lo)
    else:
        r = np.sqrt(lo ** 2 + u * (hi ** 2 - lo ** 2))  # uniform over the annulus area
    azimuth = rng.random(count) * 2.0 * np.pi
    height = height_range[0] + rng.random(count) * (height_range[1] - height_range[0])
    return np.column_stack([r * np.cos(azimuth), r * np.sin(azimuth), height])


def generate_geometry(cfg, seed, angular_separation=None):
    """One random Scenario: users and clusters drawn uniformly in their regions.

    User and cluster draws use separate streams derived from ``seed`` so
    cluster placements stay paired when only the number of users changes.
    With ``angular_separation`` (radians) set, the users sit on a common ring
    at mid radius/height with that azimuth spacing and a random base azimuth.
    """
    users_rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0)))
    clusters_rng = np.random.default_rng(np.random.SeedSequence((int(seed), 1)))
    if angular_separation is None:
        users = _sample_cylinder(users_rng, cfg.n_users, cfg.user_radius_m,
                                 cfg.user_height_m, cfg.radial_uniform)
    else:
        radius = 0.5 * (cfg.user_radius_m[0] + cfg.user_radius_m[1])
        height = 0.5 * (cfg.user_height_m[0] + cfg.user_height_m[1])
        base = users_rng.random() * 2.0 * np.pi
        azimuth = base + angular_separation * np.arange(cfg.n_users)
        users = np.column_stack([radius * np.cos(azimuth), radius * np.sin(azimuth),
                                 np.full(cfg.n_users, height)])
    clusters = _sample_cylinder(clusters_rng, cfg.n_clusters, cfg.cluster_radius_m,
                                cfg.cluster_height_m, cfg.radial_uniform)
    k = cfg.n_users
    return Scenario(
        antenna_positions=build_upa(cfg.n_row, cfg.n_col, cfg.wavelength),
        user_positions=users,
        cluster_positions=clusters,
        cluster_rcs=np.array(cfg.cluster_rcs),
        wavelength=cfg.wavelength,
        aperture=4.0 * np.pi * cfg.rho_over_4pi,
        gain_exponent=cfg.gain_exponent,
        theta_max=np.deg2rad(cfg.theta_max_deg),
        noise_power=dbm_to_watt(cfg.noise_dbm),
        data_powers=np.full(k, dbm_to_watt(cfg.power_dbm)),
        pilot_powers=np.full(k, dbm_to_watt(cfg.pilot_power_dbm)),
        pilot_length=cfg.pilot_length,
        coherence_length=cfg.coherence_length,
    )


def apply_axis(cfg, axis, value):
    """Configuration with one sweep-axis value applied."""
    if axis == "N":
        total = int(value)
        if total % cfg.n_row:
            raise ValueError(f"antenna count {total} not divisible by n_row={cfg.n_row}")
        return replace(cfg, n_col=total // cfg.n_row)
    if axis == "K":
        return replace(cfg, n_users=int(value))
    if axis == "power":
        return replace(cfg, power_dbm=float(value), pilot_power_dbm=float(value))
    if axis == "theta_max":
        return replace(cfg, theta_max_deg=float(value))
    if axis == "b":
        return replace(cfg, gain_exponent=float(value))
    if axis == "pilot_fraction":
        tau = max(cfg.n_users, int(round(float(value) * cfg.coherence_length)))
        return replace(cfg, tau_p=tau)
    if axis == "angular_separation":
        return cfg  # applied at geometry generation
    raise ValueError(f"unknown sweep axis {axis!r}")


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: an axis, its values, the schemes to score, and the outputs."""

    axis: str
    values: tuple
    schemes: tuple
    outputs: tuple = ("surrogate",)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("values must be non-empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}; valid: {SCHEMES}")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad:
            raise ValueError(f"unknown outputs {bad}; valid: {OUTPUTS}")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    scheme: str
    metric: str
    mean: float
    stderr: float
    n_geometries: int
    seed: int


@dataclass(frozen=True)
class SweepReport:
    rows: tuple
    seed: int
    config_sha256: str
    failures: tuple   # (value, geometry, scheme, message) per excluded evaluation
    # per-geometry samples behind each row, keyed (value, scheme, metric) ->
    # tuple of (geometry, value); enables paired comparisons across schemes
    samples: dict = None


def _resolve_orientation(scheme, scenario, tables, seed, geometry, restarts, pga_cfg):
    if scheme == "fix":
        return broadside_orientation(scenario.n_antennas)
    if scheme in ("mrc-ran", "wzf-ran"):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1, geometry)))
        return uniform_cap_orientation(scenario.n_antennas, scenario.theta_max, rng)
    receiver = scheme.split("-")[0]
    orient, _ = optimize_orientation(
        scenario, tables, receiver, cfg=pga_cfg, n_restarts=restarts,
        seed=derive_seed(seed, 3, geometry, SCHEMES.index(scheme)))
    return orient


def _metric_rows(scheme, scenario, tables, orient, outputs, axis, block_seed, blocks):
    """metric name -> scalar for one (scheme, geometry) evaluation."""
    stats = channel_statistics(scenario, tables, orient)
    est = estimation_statistics(stats, scenario)
    out = {}
    for receiver in _SCHEME_RECEIVERS[scheme]:
        terms = (mrc_surrogate if receiver == "mrc" else wzf_surrogate)(stats, est, scenario)
        out[f"sum_rate_sur_{receiver}"] = terms.sum_rate
        if axis == "pilot_fraction":
            # data-phase spectral efficiency, before the pilot-overhead pre-log
            out[f"data_rate_sur_{receiver}"] = terms.sum_rate / scenario.prelog
    out["mean_nmse"] = float(np.mean(nmse(stats, est, scenario).nmse))
    if "ergodic" in outputs:
        for receiver in _SCHEME_RECEIVERS[scheme]:
            report = ergodic_rate(scenario, orient, receiver, blocks, block_seed,
                                  stats=stats, est=est)
            out[f"sum_rate_erg_{receiver}"] = report.sum_rate
    return out


def run_sweep(config, spec, seed=None, restarts=1, pga_cfg=None):
    """Execute a sweep: per axis value and scheme, mean and standard error over
    paired geometry realizations. Per-geometry failures are excluded and
    reported, not fatal."""
    seed = config.seed if seed is None else int(seed)
    # validate axis values upfront (e.g. K <= N for any wZF scheme)
    needs_wzf = any("wzf" in s or s in ("fix", "nmse-opt") for s in spec.schemes)
    for value in spec.values:
        cfg_v = apply_axis(config, spec.axis, value)
        if needs_wzf and cfg_v.n_users > cfg_v.n_row * cfg_v.n_col:
            raise ValueError(
                f"axis value {value}: K={cfg_v.n_users} exceeds N="
                f"{cfg_v.n_row * cfg_v.n_col}, invalid for wZF schemes")

    samples = {}   # (value, scheme, metric) -> list of scalars
    failures = []
    for value in spec.values:
        cfg_v = apply_axis(config, spec.axis, value)
        ang = np.deg2rad(float(value)) if spec.axis == "angular_separation" else None
        for g in range(config.geometries):
            try:
                scenario = generate_geometry(cfg_v, derive_seed(seed, 0, g),
                                             angular_separation=ang)
                tables = geometry_tables(scenario)
            except Exception as exc:  # geometry failure hits every scheme
                for scheme in spec.schemes:
                    failures.append((float(value), g, scheme, str(exc)))
                continue
            block_seed = derive_seed(seed, 2, g)
            for scheme in spec.schemes:
                try:
                    orient = _resolve_orientation(scheme, scenario, tables, seed, g,
                                                  restarts, pga_cfg)
                    metrics = _metric_rows(scheme, scenario, tables, orient,
                                           spec.outputs, spec.axis, block_seed,
                                           config.blocks_per_geometry)
                except Exception as exc:
                    failures.append((float(value), g, scheme, str(exc)))
                    continue
                for metric, val in metrics.items():
                    samples.setdefault((float(value), scheme, metric), []).append((g, val))

    metric_order = ["sum_rate_sur_mrc", "sum_rate_sur_wzf", "data_rate_sur_mrc",
                    "data_rate_sur_wzf", "sum_rate_erg_mrc", "sum_rate_erg_wzf",
                    "mean_nmse"]
    rows = []
    for value in spec.values:
        for scheme in spec.schemes:
            for metric in metric_order:
                key = (float(value), scheme, metric)
                if key not in samples:
                    continue
                data = np.array([v for _, v in samples[key]])
                stderr = float(data.std(ddof=1) / np.sqrt(len(data))) if len(data) > 1 else 0.0
                rows.append(SweepRow(spec.axis, float(value), scheme, metric,
                                     float(data.mean()), stderr, len(data), seed))
    frozen = {key: tuple(vals) for key, vals in samples.items()}
    return SweepReport(rows=tuple(rows), seed=seed, config_sha256=config_hash(config),
                       failures=tuple(failures), samples=frozen)


CSV_COLUMNS = ("axis", "value", "scheme", "metric", "mean", "stderr",
               "n_geometries", "seed")


def emit_csv(report, path):
    """Write sweep rows as UTF-8 CSV; a leading comment embeds the config hash."""
    lines = [f"# config_sha256={report.config_sha256} seed={report.seed}",
             ",".join(CSV_COLUMNS)]
    for r in report.rows:
        lines.append(",".join([r.axis, repr(float(r.value)), r.scheme, r.metric,
                               repr(float(r.mean)), repr(float(r.stderr)),
                               str(r.n_geometries), str(r.seed)]))
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV artifact {path}: {exc}") from exc
    return path


def parse_csv(path):
    """Read back an emitted CSV: (metadata dict, list of SweepRow)."""
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            for token in ln[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    meta[k] = v
        elif ln:
            body.append(ln)
    header = body[0].split(",")
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    for ln in body[1:]:
        axis, value, scheme, metric, mean, stderr, n_geo, seed = ln.split(",")
        rows.append(SweepRow(axis, float(value), scheme, metric, float(mean),
                             float(stderr), int(n_geo), int(seed)))
    return meta, rows


@dataclass(frozen=True)
class ValidationReport:
    """Surrogate-vs-ergodic comparison at the configured default scenario."""

    surrogate_mean: dict      # receiver -> mean surrogate sum rate
    ergodic_mean: dict        # receiver -> mean ergodic sum rate
    relative_gap: dict        # receiver -> |sur - erg| / sur
    tolerances: dict
    passed: bool
    n_geometries: int
    n_blocks: int
    seed: int


def validate_surrogates(config, seed=None, geometries=None, blocks=None,
                        restarts=1, pga_cfg=None, tolerances=None):
    """Check that optimized-orientation surrogates track block-level ergodic rates."""
    seed = config.seed if seed is None else int(seed)
    geometries = config.geometries if geometries is None else int(geometries)
    blocks = config.blocks_per_geometry if blocks is None else int(blocks)
    tolerances = tolerances or {"mrc": 0.05, "wzf": 0.08}
    sur = {rec: [] for rec in tolerances}
    erg = {rec: [] for rec in tolerances}
    for g in range(geometries):
        scenario = generate_geometry(config, derive_seed(seed, 0, g))
        tables = geometry_tables(scenario)
        for rec in tolerances:
            orient, trace = optimize_orientation(
                scenario, tables, rec, cfg=pga_cfg, n_restarts=restarts,
                seed=derive_seed(seed, 3, g))
            sur[rec].append(trace.final_objective)
            erg[rec].append(ergodic_rate(scenario, orient, rec, blocks,
                                         derive_seed(seed, 2, g)).sum_rate)
    sur_mean = {rec: float(np.mean(v)) for rec, v in sur.items()}
    erg_mean = {rec: float(np.mean(v)) for rec, v in erg.items()}
    gap = {rec: abs(sur_mean[rec] - erg_mean[rec]) / sur_mean[rec] for rec in tolerances}
    passed = all(gap[rec] < tolerances[rec] for rec in tolerances)
    return ValidationReport(surrogate_mean=sur_mean, ergodic_mean=erg_mean,
                            relative_gap=gap, tolerances=dict(tolerances),
                            passed=passed, n_geometries=geometries,
                            n_blocks=blocks, seed=seed)
