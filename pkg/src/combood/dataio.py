"""Feature-matrix interchange (.npy / CSV) and the versioned detector archive."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.lib.format as npf

from .detector import ComboodDetector, DetectorConfig
from .knn import NormalizedKnn
from .mahalanobis import RegularizedMahalanobis
from .transform import PowerTransform

ARCHIVE_MAGIC = b"COMBOODA"
FORMAT_VERSION = 1
ARCHIVE_SUFFIX = ".combood"

_KIND_ARRAY = 0
_KIND_F64 = 1
_KIND_I64 = 2

_FLOAT32_LE = np.dtype("<f4")
_FLOAT64_LE = np.dtype("<f8")


@dataclass(frozen=True)
class FeatureMatrix:
    """Row-major matrix of per-sample feature vectors (float64, all finite)."""

    values: np.ndarray
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got ndim={values.ndim}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"feature matrix must be at least 1x1, got shape {values.shape}")
        if not np.isfinite(values).all():
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {i}, col {j}")
        object.__setattr__(self, "values", values)
        if self.ids is not None:
            ids = tuple(str(s) for s in self.ids)
            if len(ids) != values.shape[0]:
                raise ValueError(f"got {len(ids)} row ids for {values.shape[0]} rows")
            object.__setattr__(self, "ids", ids)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def _load_npy(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        try:
            version = npf.read_magic(f)
        except ValueError as exc:
            raise ValueError(f"{path}: not a .npy file ({exc})") from exc
        if version != (1, 0):
            raise ValueError(
                f"{path}: unsupported .npy format version {version[0]}.{version[1]}; only 1.0 is read"
            )
        try:
            shape, fortran_order, dtype = npf.read_array_header_1_0(f)
        except ValueError as exc:
            raise ValueError(f"{path}: malformed .npy header ({exc})") from exc
        if fortran_order:
            raise ValueError(f"{path}: Fortran-order arrays are rejected; re-export in C order")
        if dtype not in (_FLOAT32_LE, _FLOAT64_LE):
            raise ValueError(
                f"{path}: unsupported dtype {dtype}; expected little-endian float32 or float64"
            )
        if len(shape) not in (1, 2):
            raise ValueError(f"{path}: expected a 1-D or 2-D array, got {len(shape)} dimensions")
        count = int(np.prod(shape, dtype=np.int64))
        data = np.fromfile(f, dtype=dtype, count=count)
        if data.size != count:
            raise ValueError(
                f"{path}: truncated data section (expected {count} values, got {data.size})"
            )
    arr = data.reshape(shape)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return arr.astype(np.float64)  # float32 inputs widen; float64 stays bit-identical


def _load_csv(path: Path) -> np.ndarray:
    with open(path, newline="") as f:
        raw = [row for row in csv.reader(f) if row]
    if not raw:
        raise ValueError(f"{path}: empty CSV")
    start = 0
    try:
        for cell in raw[0]:
            float(cell)
    except ValueError:
        start = 1  # single header row
    if start == len(raw):
        raise ValueError(f"{path}: CSV has a header but no data rows")
    ncols = len(raw[start])
    out = np.empty((len(raw) - start, ncols))
    for i, row in enumerate(raw[start:]):
        if len(row) != ncols:
            raise ValueError(f"{path}: ragged CSV — row {i} has {len(row)} fields, expected {ncols}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError as exc:
                raise ValueError(f"{path}: row {i}, col {j}: cannot parse {cell!r} as a real") from exc
            if not np.isfinite(v):
                raise ValueError(f"{path}: row {i}, col {j}: non-finite value {cell!r}")
            out[i, j] = v
    return out


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("npy", "csv"):
            raise ValueError(f"unsupported format {fmt!r}; expected 'npy' or 'csv'")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".npy":
        return "npy"
    if suffix == ".csv":
        return "csv"
    raise ValueError(f"{path}: cannot infer format from suffix {suffix!r}; pass fmt='npy' or 'csv'")


def load_matrix(path, fmt: str | None = None) -> FeatureMatrix:
    """Load a feature matrix from a .npy (v1.0) or CSV file.

    Values are validated finite and widened to float64. 1-D .npy arrays are
    read as a single row.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    loader = _load_npy if _infer_format(path, fmt) == "npy" else _load_csv
    return FeatureMatrix(values=loader(path))


def save_matrix(matrix, path, fmt: str | None = None) -> None:
    """Save a matrix as .npy (v1.0, float64 C-order) or headered CSV.

    CSV cells use shortest round-trip decimal formatting, so load(save(M))
    is element-wise bit-identical for both formats.
    """
    path = Path(path)
    values = matrix.values if isinstance(matrix, FeatureMatrix) else None
    if values is None:
        values = FeatureMatrix(values=np.asarray(matrix, dtype=np.float64)).values
    fmt = _infer_format(path, fmt)
    if fmt == "npy":
        np.save(path, np.ascontiguousarray(values, dtype=np.float64))
        return
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"f{j}" for j in range(values.shape[1])])
        for row in values:
            writer.writerow([repr(float(v)) for v in row])


@dataclass
class DetectorArchive:
    """Self-describing container of a fitted detector's numeric state."""

    config: DetectorConfig
    transform: PowerTransform
    mahalanobis: RegularizedMahalanobis
    knn: NormalizedKnn
    threshold: float | None
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_detector(cls, detector: ComboodDetector) -> "DetectorArchive":
        if getattr(detector, "knn_", None) is None:
            raise ValueError("detector is not fitted; nothing to archive")
        return cls(
            config=detector.config,
            transform=detector.transform_,
            mahalanobis=detector.maha_,
            knn=detector.knn_,
            threshold=detector.threshold_,
        )

    def to_detector(self) -> ComboodDetector:
        det = ComboodDetector(
            reg_c=self.config.reg_c,
            k=self.config.k,
            target_tpr=self.config.target_tpr,
            clamp_eps=self.config.clamp_eps,
        )
        det.transform_ = self.transform
        det.maha_ = self.mahalanobis
        det.knn_ = self.knn
        det.n_embed_ = self.knn.dim_
        det.threshold_ = self.threshold
        return det


def _array_payload(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=_FLOAT64_LE)
    head = struct.pack("<B", arr.ndim) + b"".join(struct.pack("<Q", d) for d in arr.shape)
    return head + arr.tobytes()


def _sections_from_archive(archive: DetectorArchive) -> list[tuple[str, int, bytes]]:
    cfg, t, m, k = archive.config, archive.transform, archive.mahalanobis, archive.knn
    sections = [
        ("config/reg_c", _KIND_F64, struct.pack("<d", cfg.reg_c)),
        ("config/k", _KIND_I64, struct.pack("<q", cfg.k)),
        ("config/target_tpr", _KIND_F64, struct.pack("<d", cfg.target_tpr)),
        ("config/clamp_eps", _KIND_F64, struct.pack("<d", cfg.clamp_eps)),
        ("transform/lambdas", _KIND_ARRAY, _array_payload(t.lambdas_)),
        ("transform/means", _KIND_ARRAY, _array_payload(t.means_)),
        ("transform/stds", _KIND_ARRAY, _array_payload(t.stds_)),
        ("maha/mu", _KIND_ARRAY, _array_payload(m.mu_)),
        ("maha/chol", _KIND_ARRAY, _array_payload(m.chol_)),
        ("maha/reg_c", _KIND_F64, struct.pack("<d", m.reg_c)),
        ("maha/logdet", _KIND_F64, struct.pack("<d", m.logdet_)),
        ("knn/train", _KIND_ARRAY, _array_payload(k.train_)),
        ("knn/k", _KIND_I64, struct.pack("<q", k.k)),
    ]
    if archive.threshold is not None:
        sections.append(("threshold", _KIND_F64, struct.pack("<d", archive.threshold)))
    return sections


def _check_archive_consistency(archive: DetectorArchive) -> None:
    t, m, k, cfg = archive.transform, archive.mahalanobis, archive.knn, archive.config
    d = t.n_features_
    if not (len(t.lambdas_) == len(t.means_) == len(t.stds_) == d):
        raise ValueError("transform arrays disagree on feature count")
    if m.dim_ != d or m.mu_.shape != (d,) or m.chol_.shape != (d, d):
        raise ValueError(
            f"parametric model dimension {m.dim_} does not match transform feature count {d}"
        )
    if not (np.diag(m.chol_) > 0).all():
        raise ValueError("Cholesky factor must have a strictly positive diagonal")
    if k.train_.ndim != 2 or k.train_.shape[1] != k.dim_:
        raise ValueError("neighbor model training matrix disagrees with its dimension")
    if not 1 <= k.k <= k.train_.shape[0]:
        raise ValueError(f"neighbor count k={k.k} out of range for {k.train_.shape[0]} training rows")
    if k.k != cfg.k or m.reg_c != cfg.reg_c:
        raise ValueError("component parameters disagree with the archived config")


def save_detector(archive: DetectorArchive, path) -> None:
    """Write a detector archive as a length-prefixed binary .combood file.

    All reals are stored as raw little-endian 64-bit payloads, so a
    save/load round trip reproduces every numeric field bit-exactly.
    """
    _check_archive_consistency(archive)
    sections = _sections_from_archive(archive)
    buf = io.BytesIO()
    buf.write(ARCHIVE_MAGIC)
    buf.write(struct.pack("<I", archive.format_version))
    buf.write(struct.pack("<I", len(sections)))
    for name, kind, payload in sections:
        encoded = name.encode("ascii")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", kind))
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    Path(path).write_bytes(buf.getvalue())


def _read_exact(f, count: int, path, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise ValueError(f"{path}: truncated archive while reading {what}")
    return data


def _parse_array(payload: bytes, path, name: str) -> np.ndarray:
    if len(payload) < 1:
        raise ValueError(f"{path}: empty array payload in section {name}")
    ndim = payload[0]
    head_len = 1 + 8 * ndim
    if ndim not in (1, 2) or len(payload) < head_len:
        raise ValueError(f"{path}: malformed array header in section {name}")
    shape = struct.unpack_from(f"<{ndim}Q", payload, 1)
    expected = head_len + 8 * int(np.prod(shape, dtype=np.int64))
    if len(payload) != expected:
        raise ValueError(f"{path}: array payload size mismatch in section {name}")
    return np.frombuffer(payload[head_len:], dtype=_FLOAT64_LE).reshape(shape).copy()


def load_detector(path) -> DetectorArchive:
    """Read a .combood archive written by :func:`save_detector`.

    A format_version other than the library's is an error, never a silent
    reinterpretation; truncated or inconsistent files never produce a
    partial detector.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as f:
        magic = _read_exact(f, len(ARCHIVE_MAGIC), path, "magic")
        if magic != ARCHIVE_MAGIC:
            raise ValueError(f"{path}: not a detector archive (bad magic)")
        version = struct.unpack("<I", _read_exact(f, 4, path, "version"))[0]
        if version != FORMAT_VERSION:
            raise ValueError(
                f"{path}: archive format_version {version} is not supported "
                f"(this build reads version {FORMAT_VERSION})"
            )
        n_sections = struct.unpack("<I", _read_exact(f, 4, path, "section count"))[0]
        sections: dict[str, tuple[int, bytes]] = {}
        for _ in range(n_sections):
            name_len = struct.unpack("<H", _read_exact(f, 2, path, "section name length"))[0]
            name = _read_exact(f, name_len, path, "section name").decode("ascii")
            kind = _read_exact(f, 1, path, f"kind of {name}")[0]
            payload_len = struct.unpack("<Q", _read_exact(f, 8, path, f"length of {name}"))[0]
            payload = _read_exact(f, payload_len, path, f"payload of {name}")
            if name in sections:
                raise ValueError(f"{path}: duplicate section {name}")
            sections[name] = (kind, payload)
        if f.read(1):
            raise ValueError(f"{path}: trailing data after the last section")

    def take(name: str, kind: int) -> bytes:
        if name not in sections:
            raise ValueError(f"{path}: missing section {name}")
        got_kind, payload = sections.pop(name)
        if got_kind != kind:
            raise ValueError(f"{path}: section {name} has kind {got_kind}, expected {kind}")
        return payload

    def f64(name: str) -> float:
        payload = take(name, _KIND_F64)
        if len(payload) != 8:
            raise ValueError(f"{path}: scalar section {name} has wrong size")
        return struct.unpack("<d", payload)[0]

    def i64(name: str) -> int:
        payload = take(name, _KIND_I64)
        if len(payload) != 8:
            raise ValueError(f"{path}: scalar section {name} has wrong size")
        return struct.unpack("<q", payload)[0]

    def array(name: str) -> np.ndarray:
        return _parse_array(take(name, _KIND_ARRAY), path, name)

    config = DetectorConfig(
        reg_c=f64("config/reg_c"),
        k=i64("config/k"),
        target_tpr=f64("config/target_tpr"),
        clamp_eps=f64("config/clamp_eps"),
    )
    transform = PowerTransform()
    transform.lambdas_ = array("transform/lambdas")
    transform.means_ = array("transform/means")
    transform.stds_ = array("transform/stds")
    transform.n_features_ = transform.lambdas_.shape[0]

    maha = RegularizedMahalanobis(reg_c=f64("maha/reg_c"))
    maha.mu_ = array("maha/mu")
    maha.chol_ = array("maha/chol")
    maha.logdet_ = f64("maha/logdet")
    maha.dim_ = maha.mu_.shape[0]

    knn = NormalizedKnn(k=i64("knn/k"), clamp_eps=config.clamp_eps)
    knn.train_ = array("knn/train")
    knn.dim_ = knn.train_.shape[1] if knn.train_.ndim == 2 else 0

    threshold = f64("threshold") if "threshold" in sections else None

    if sections:
        raise ValueError(f"{path}: unrecognized sections {sorted(sections)}")

    archive = DetectorArchive(
        config=config,
        transform=transform,
        mahalanobis=maha,
        knn=knn,
        threshold=threshold,
        format_version=version,
    )
    _check_archive_consistency(archive)
    return archive
