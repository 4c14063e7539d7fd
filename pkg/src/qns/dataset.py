"""Deterministic generation, noising, splitting, and persistence of
(spectrum, curve) corpora.

Every record owns an RNG seeded from (global seed, record index), so
records are reproducible individually, generation order does not
matter, and worker pools produce byte-identical corpora.  Records are
persisted as JSON Lines with all numbers printed at 17 significant
digits (exact float64 round trip) plus a manifest carrying a content
digest.
"""

import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, MigrationError, ValidationError
from .grids import GRID_POINTS, FrequencyGrid, TimeGrid
from .inversion import phenomenological_roundtrip
from .sequences import SequenceFamily
from .simulate import (
    FAST,
    CoherenceCurve,
    QuadratureConfig,
    StretchedExpParams,
    coherence_curve,
    measured_t2,
)
from .spectra import (
    CompositeModel,
    LorentzianFeatureParams,
    LorentzianParams,
    ModelKind,
    NoiseSpectrum,
    OneOverFParams,
    StretchedDecayParams,
    sample_spectrum,
)
from .validation import require

FORMAT_VERSION = 1

FAMILIES = (
    "stretched",
    "one_over_f",
    "lorentzian",
    "double_lorentzian",
    "one_over_f_lorentzian",
)

NOISE_AMPLITUDE = 0.05
NOISE_CLIP_LOW = 1e-9
NOISE_CLIP_HIGH = 1.05


@dataclass(frozen=True)
class GridConfig:
    """Time window and grid used for a generation run."""

    t_min: float = 1e-6
    t_max: float = 2e-3
    t2_window: tuple = (120e-6, 600e-6)
    tau_pi: float = 0.0

    @classmethod
    def for_window(cls, lo: float, hi: float, tau_pi: float = 0.0) -> "GridConfig":
        """Grid bracketing a T2 window, short-time regime when hi <= 150 us."""
        require(0 < lo < hi, "t2 window must satisfy 0 < lo < hi")
        if hi <= 150e-6:
            return cls(t_min=0.5e-6, t_max=500e-6, t2_window=(lo, hi), tau_pi=tau_pi)
        return cls(t_min=1e-6, t_max=2e-3, t2_window=(lo, hi), tau_pi=tau_pi)

    def time_grid(self) -> TimeGrid:
        return TimeGrid.log_spaced(self.t_min, self.t_max)


@dataclass(frozen=True)
class DatasetRecord:
    """One (spectrum, curve) pair with its provenance."""

    id: str
    family: str
    params: dict
    time_grid: np.ndarray
    coherence: np.ndarray
    freq_grid: np.ndarray
    spectrum: np.ndarray
    sequence_family: str
    seed: int
    noisy_coherence: np.ndarray | None = None

    def curve(self) -> CoherenceCurve:
        return CoherenceCurve(
            grid=TimeGrid(self.time_grid),
            coherence=self.coherence,
            sequence_family=self.sequence_family,
        )

    def noise_spectrum(self) -> NoiseSpectrum:
        return NoiseSpectrum(
            grid=FrequencyGrid(self.freq_grid),
            values=self.spectrum,
            model=rebuild_model(self.family, self.params),
        )


def rebuild_model(family: str, params: dict) -> CompositeModel:
    """Reconstruct the analytic spectrum model of a record."""
    if family == "stretched":
        return CompositeModel(
            ModelKind.STRETCHED_EXP_DERIVED,
            (
                StretchedDecayParams(
                    params["t2"], params["power"], int(params.get("n_pulses", 1))
                ),
            ),
        )
    if family == "one_over_f":
        return CompositeModel(
            ModelKind.ONE_OVER_F, (OneOverFParams(params["amplitude"], params["exponent"]),)
        )
    if family == "lorentzian":
        return CompositeModel(
            ModelKind.LORENTZIAN, (LorentzianParams(params["delta"], params["tau_c"]),)
        )
    if family == "double_lorentzian":
        return CompositeModel(
            ModelKind.DOUBLE_LORENTZIAN,
            (
                LorentzianParams(params["delta1"], params["tau_c1"]),
                LorentzianParams(params["delta2"], params["tau_c2"]),
            ),
        )
    if family == "one_over_f_lorentzian":
        return CompositeModel(
            ModelKind.ONE_OVER_F_PLUS_LORENTZIAN,
            (
                OneOverFParams(params["amplitude"], params["exponent"]),
                LorentzianFeatureParams(
                    params["feature_height"],
                    params["feature_center"],
                    params["feature_width"],
                ),
            ),
        )
    raise ValidationError(f"unknown family {family!r}")


def _record_seed(global_seed: int, index: int) -> int:
    digest = hashlib.sha256(f"qns:{global_seed}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _chi_scale_probe(model, grid_config, family, t_star, config):
    """chi(t_star) of a unit-amplitude model; scaling S linearly scales chi."""
    spec = NoiseSpectrum(
        grid=FrequencyGrid.from_time_grid(grid_config.time_grid(), family.n_pulses),
        values=model(FrequencyGrid.from_time_grid(grid_config.time_grid(), family.n_pulses).omega),
        model=model,
    )
    from .simulate import _get_kernel

    kernel = _get_kernel(family.pulse_fractions(), config)
    return kernel.chi(spec.evaluate, t_star, grid_config.tau_pi)


def _has_interior_local_max(values) -> bool:
    v = values
    for i in range(2, len(v) - 2):
        if v[i] > v[i - 1] and v[i] >= v[i + 1] and v[i] > 1.05 * min(v[0], v[-1]):
            return True
    return False


def _draw_params(family_name, rng, grid_config, seq_family, config):
    """One parameter draw; returns (params dict, model) or None to resample."""
    lo, hi = grid_config.t2_window
    t_star = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    if family_name == "stretched":
        power = float(rng.uniform(0.3, 3.0))
        return {"t2": t_star, "power": power, "n_pulses": seq_family.n_pulses}, None
    if family_name == "one_over_f":
        exponent = float(rng.uniform(0.5, 2.0))
        unit = CompositeModel(ModelKind.ONE_OVER_F, (OneOverFParams(1.0, exponent),))
        chi_ref = _chi_scale_probe(unit, grid_config, seq_family, t_star, config)
        if chi_ref <= 0:
            return None
        amplitude = 1.0 / chi_ref
        return (
            {"amplitude": amplitude, "exponent": exponent},
            CompositeModel(ModelKind.ONE_OVER_F, (OneOverFParams(amplitude, exponent),)),
        )
    if family_name == "lorentzian":
        tau_c = float(np.exp(rng.uniform(np.log(1e-6), np.log(1e-2))))
        unit = CompositeModel(ModelKind.LORENTZIAN, (LorentzianParams(1.0, tau_c),))
        chi_ref = _chi_scale_probe(unit, grid_config, seq_family, t_star, config)
        if chi_ref <= 0:
            return None
        delta = float(np.sqrt(1.0 / chi_ref))
        if not 1e3 <= delta <= 1e6:
            return None
        return (
            {"delta": delta, "tau_c": tau_c},
            CompositeModel(ModelKind.LORENTZIAN, (LorentzianParams(delta, tau_c),)),
        )
    if family_name == "double_lorentzian":
        tau_c1 = float(np.exp(rng.uniform(np.log(1e-5), np.log(1e-2))))
        ratio = float(np.exp(rng.uniform(np.log(1e-3), np.log(0.1))))
        tau_c2 = max(tau_c1 * ratio, 1.1e-7)
        w1 = float(rng.uniform(0.2, 0.8))
        deltas = []
        for tau_c, share in ((tau_c1, w1), (tau_c2, 1.0 - w1)):
            unit = CompositeModel(ModelKind.LORENTZIAN, (LorentzianParams(1.0, tau_c),))
            chi_ref = _chi_scale_probe(unit, grid_config, seq_family, t_star, config)
            if chi_ref <= 0:
                return None
            deltas.append(float(np.sqrt(share / chi_ref)))
        if not all(1e3 <= d <= 1e6 for d in deltas):
            return None
        comps = (
            LorentzianParams(deltas[0], tau_c1),
            LorentzianParams(deltas[1], tau_c2),
        )
        return (
            {
                "delta1": deltas[0],
                "tau_c1": tau_c1,
                "delta2": deltas[1],
                "tau_c2": tau_c2,
            },
            CompositeModel(ModelKind.DOUBLE_LORENTZIAN, comps),
        )
    if family_name == "one_over_f_lorentzian":
        exponent = float(rng.uniform(0.5, 2.0))
        center = float(np.exp(rng.uniform(np.log(3e4), np.log(8e5))))
        width = center * float(rng.uniform(0.15, 0.45))
        height_factor = float(np.exp(rng.uniform(np.log(1.5), np.log(6.0))))
        base_unit = OneOverFParams(1.0, exponent)
        h0 = height_factor * (center / (2 * np.pi)) ** (-exponent)
        unit = CompositeModel(
            ModelKind.ONE_OVER_F_PLUS_LORENTZIAN,
            (base_unit, LorentzianFeatureParams(h0, center, width)),
        )
        chi_ref = _chi_scale_probe(unit, grid_config, seq_family, t_star, config)
        if chi_ref <= 0:
            return None
        scale = 1.0 / chi_ref
        model = CompositeModel(
            ModelKind.ONE_OVER_F_PLUS_LORENTZIAN,
            (
                OneOverFParams(scale, exponent),
                LorentzianFeatureParams(scale * h0, center, width),
            ),
        )
        return (
            {
                "amplitude": scale,
                "exponent": exponent,
                "feature_height": scale * h0,
                "feature_center": center,
                "feature_width": width,
            },
            model,
        )
    raise ValidationError(f"unknown family {family_name!r}")


def make_record(
    family_name: str,
    global_seed: int,
    index: int,
    grid_config: GridConfig,
    seq_family: SequenceFamily,
    config: QuadratureConfig = FAST,
    max_attempts: int = 400,
) -> DatasetRecord:
    """Generate record ``index`` deterministically from the global seed."""
    require(family_name in FAMILIES, f"unknown family {family_name!r}")
    seed = _record_seed(global_seed, index)
    rng = np.random.default_rng(seed)
    grid = grid_config.time_grid()
    lo, hi = grid_config.t2_window
    for _ in range(max_attempts):
        drawn = _draw_params(family_name, rng, grid_config, seq_family, config)
        if drawn is None:
            continue
        params, model = drawn
        if family_name == "stretched":
            spectrum, curve = phenomenological_roundtrip(
                StretchedExpParams(params["t2"], params["power"]),
                grid,
                seq_family,
                config=config,
            )
        else:
            spectrum = sample_spectrum(model, FrequencyGrid.from_time_grid(grid, seq_family.n_pulses))
            curve = coherence_curve(spectrum, seq_family, grid, config=config)
        t2_measured = measured_t2(curve)
        if t2_measured is None or not lo <= t2_measured <= hi:
            continue
        if family_name == "one_over_f_lorentzian" and not _has_interior_local_max(
            spectrum.values
        ):
            continue
        return DatasetRecord(
            id=f"{family_name}-{index:06d}",
            family=family_name,
            params=params,
            time_grid=grid.times,
            coherence=curve.coherence,
            freq_grid=spectrum.grid.omega,
            spectrum=spectrum.values,
            sequence_family=seq_family.label,
            seed=seed,
            noisy_coherence=None,
        )
    raise ValidationError(
        f"record {index} of family {family_name!r} was rejected {max_attempts} times; "
        "the parameter ranges and T2 window are incompatible"
    )


def _worker_count(workers):
    if workers is not None:
        return max(int(workers), 1)
    env = os.environ.get("QNS_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError as exc:
            raise ValidationError(f"QNS_THREADS must be an integer, got {env!r}") from exc
    return 1


_POOL_ARGS = {}


def _pool_make(index):
    a = _POOL_ARGS
    return make_record(
        a["family"], a["seed"], index, a["grid_config"], a["seq_family"], a["config"]
    )


def _pool_init(args):
    _POOL_ARGS.update(args)


def generate(
    family_name: str,
    count: int,
    seed: int,
    grid_config: GridConfig | None = None,
    sequence: str | SequenceFamily = "hahn",
    config: QuadratureConfig = FAST,
    workers: int | None = None,
    start_index: int = 0,
) -> list:
    """Generate ``count`` records of one family.

    Records are independent given (seed, index), so the output is
    byte-identical for any worker count.  Raises when the configured
    ranges reject more than ~90% of draws.
    """
    require(count >= 1, "count must be >= 1")
    if grid_config is None:
        grid_config = GridConfig()
    seq_family = (
        SequenceFamily.parse(sequence, grid_config.tau_pi)
        if isinstance(sequence, str)
        else sequence
    )
    indices = list(range(start_index, start_index + count))
    n_workers = min(_worker_count(workers), count)
    if n_workers <= 1:
        records = [
            make_record(family_name, seed, i, grid_config, seq_family, config)
            for i in indices
        ]
    else:
        args = {
            "family": family_name,
            "seed": seed,
            "grid_config": grid_config,
            "seq_family": seq_family,
            "config": config,
        }
        with ProcessPoolExecutor(
            max_workers=n_workers, initializer=_pool_init, initargs=(args,)
        ) as pool:
            records = list(pool.map(_pool_make, indices, chunksize=16))
    return records


def add_measurement_noise(record: DatasetRecord, seed: int) -> DatasetRecord:
    """Additive uniform noise of +-5% amplitude, clipped to the
    measurable coherence range."""
    rng = np.random.default_rng(_record_seed(seed, int(record.id.split("-")[-1])))
    noise = rng.uniform(-NOISE_AMPLITUDE, NOISE_AMPLITUDE, record.coherence.shape)
    noisy = np.clip(record.coherence + noise, NOISE_CLIP_LOW, NOISE_CLIP_HIGH)
    return DatasetRecord(
        **{**record.__dict__, "noisy_coherence": noisy}
    )


def split(records, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Stratified-by-family disjoint (train, validation, test) tranches."""
    ratios = tuple(float(r) for r in ratios)
    require(len(ratios) == 3, "ratios must have three entries")
    require(abs(sum(ratios) - 1.0) < 1e-9, "ratios must sum to 1")
    rng = np.random.default_rng(seed)
    by_family = {}
    for rec in records:
        by_family.setdefault(rec.family, []).append(rec)
    tranches = ([], [], [])
    for family in sorted(by_family):
        group = by_family[family]
        order = rng.permutation(len(group))
        n = len(group)
        # Largest-remainder allocation keeps tranche sizes exact.
        raw = [r * n for r in ratios]
        counts = [int(x) for x in raw]
        remainder = n - sum(counts)
        fracs = sorted(range(3), key=lambda i: raw[i] - counts[i], reverse=True)
        for i in range(remainder):
            counts[fracs[i % 3]] += 1
        pos = 0
        for tranche, c in zip(tranches, counts):
            tranche.extend(group[j] for j in order[pos : pos + c])
            pos += c
    # Small families can starve a tranche entirely; backfill from the
    # fullest tranche so every split is usable.
    for idx, tranche in enumerate(tranches):
        if not tranche:
            donor = max(tranches, key=len)
            if len(donor) <= 1:
                raise ValidationError("not enough records to populate three tranches")
            tranche.append(donor.pop())
    return tranches


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _fmt_array(a) -> str:
    return "[" + ",".join(_fmt(v) for v in a) + "]"


def record_to_line(rec: DatasetRecord) -> str:
    parts = [
        f'"id":{json.dumps(rec.id)}',
        f'"family":{json.dumps(rec.family)}',
        '"params":{'
        + ",".join(f"{json.dumps(k)}:{_fmt(v)}" for k, v in sorted(rec.params.items()))
        + "}",
        f'"time_grid_s":{_fmt_array(rec.time_grid)}',
        f'"coherence":{_fmt_array(rec.coherence)}',
        f'"freq_grid_rad_s":{_fmt_array(rec.freq_grid)}',
        f'"spectrum":{_fmt_array(rec.spectrum)}',
        f'"sequence_family":{json.dumps(rec.sequence_family)}',
        f'"seed":{rec.seed}',
    ]
    if rec.noisy_coherence is not None:
        parts.append(f'"noisy_coherence":{_fmt_array(rec.noisy_coherence)}')
    return "{" + ",".join(parts) + "}"


def record_from_line(line: str) -> DatasetRecord:
    try:
        obj = json.loads(line)
        params = dict(obj["params"])
        noisy = obj.get("noisy_coherence")
        return DatasetRecord(
            id=obj["id"],
            family=obj["family"],
            params=params,
            time_grid=np.asarray(obj["time_grid_s"], dtype=float),
            coherence=np.asarray(obj["coherence"], dtype=float),
            freq_grid=np.asarray(obj["freq_grid_rad_s"], dtype=float),
            spectrum=np.asarray(obj["spectrum"], dtype=float),
            sequence_family=obj["sequence_family"],
            seed=int(obj["seed"]),
            noisy_coherence=None if noisy is None else np.asarray(noisy, dtype=float),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"malformed corpus line: {exc}") from exc


def _spot_check(records, rng, fraction=0.01, rtol=1e-4, config=FAST):
    """Recompute chi for a random sample and compare to the stored curve."""
    n = max(1, int(len(records) * fraction))
    idx = rng.choice(len(records), size=min(n, len(records)), replace=False)
    for i in idx:
        rec = records[int(i)]
        model = rebuild_model(rec.family, rec.params)
        spec = NoiseSpectrum(
            grid=FrequencyGrid(rec.freq_grid), values=rec.spectrum, model=model
        )
        seq_family = SequenceFamily.parse(rec.sequence_family)
        curve = coherence_curve(spec, seq_family, TimeGrid(rec.time_grid), config=config)
        stored_chi = -np.log(rec.coherence)
        mask = stored_chi > 1e-9
        rel = np.abs(curve.chi[mask] - stored_chi[mask]) / np.maximum(
            stored_chi[mask], 1e-12
        )
        if rel.size and float(np.max(rel)) > rtol:
            raise CorruptionError(
                f"record {rec.id} failed the consistency spot check "
                f"(max rel chi error {float(np.max(rel)):.3e})"
            )


def manifest_path(path: str) -> str:
    return str(path) + ".manifest.json"


def save(records, path: str, extra: dict | None = None, spot_check: bool = True) -> dict:
    """Write a corpus and its manifest atomically; returns the manifest."""
    require(len(records) >= 1, "cannot save an empty corpus")
    if spot_check:
        _spot_check(records, np.random.default_rng(0))
    payload = "".join(record_to_line(r) + "\n" for r in records).encode()
    digest = hashlib.sha256(payload).hexdigest()
    counts = {}
    for r in records:
        counts[r.family] = counts.get(r.family, 0) + 1
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_records": len(records),
        "per_family_counts": counts,
        "content_digest": f"sha256:{digest}",
    }
    if extra:
        manifest.update(extra)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
    mtmp = manifest_path(path) + ".tmp"
    with open(mtmp, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(mtmp, manifest_path(path))
    return manifest


def load(path: str, verify: bool = True) -> list:
    """Read a corpus, verifying the manifest digest and format version."""
    with open(path, "rb") as fh:
        payload = fh.read()
    if verify:
        try:
            with open(manifest_path(path)) as fh:
                manifest = json.load(fh)
        except FileNotFoundError as exc:
            raise CorruptionError(f"manifest missing for {path}") from exc
        version = manifest.get("format_version")
        if version != FORMAT_VERSION:
            raise MigrationError(
                f"corpus format version {version!r} is not supported (expected {FORMAT_VERSION})"
            )
        digest = "sha256:" + hashlib.sha256(payload).hexdigest()
        if digest != manifest.get("content_digest"):
            raise CorruptionError(f"content digest mismatch for {path}")
    lines = payload.decode().splitlines()
    return [record_from_line(line) for line in lines if line.strip()]


def curves_matrix(records, noisy: bool = False) -> np.ndarray:
    rows = []
    for r in records:
        if noisy:
            if r.noisy_coherence is None:
                raise ValidationError(f"record {r.id} has no noisy coherence")
            rows.append(r.noisy_coherence)
        else:
            rows.append(r.coherence)
    return np.asarray(rows, dtype=float)


def spectra_matrix(records) -> np.ndarray:
    return np.asarray([r.spectrum for r in records], dtype=float)
