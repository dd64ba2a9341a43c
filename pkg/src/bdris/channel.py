"""OFDM channel generation and the scattering/admittance channel descriptions.

Time-domain links are finite tap-delay lines with circularly symmetric
complex Gaussian taps (equal power per tap, scaled by distance-dependent
pathloss).  With a cyclic prefix the per-subcarrier channels are the
unnormalized N-point DFT of the zero-padded taps, and the end-to-end
channel through the surface is diagonal in the frequency domain:

    h_n = h_rt_n + h_ri_n @ Theta_n @ h_it_n

with an exactly equivalent admittance-parameter form evaluated blockwise.
This module also carries the dense block-circulant oracle that certifies
that diagonalization on small instances, plus a time-domain symbol-level
check built on explicit circular convolutions.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .network import AdmittanceMatrixSet

# Dense-oracle ceiling: instances with N*M beyond this are refused.
DENSE_ORACLE_LIMIT = 512


class InstanceTooLarge(ValueError):
    """Dense verification requested on an instance too big to build."""


@dataclass(frozen=True)
class FrequencyGrid:
    """N subcarriers spaced bandwidth/N apart, centered on the carrier."""

    carrier_hz: float
    bandwidth_hz: float
    subcarriers: int

    def __post_init__(self):
        if self.subcarriers < 1:
            raise ValueError("need at least one subcarrier")
        if self.carrier_hz <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("carrier and bandwidth must be positive")

    @property
    def frequencies(self) -> np.ndarray:
        n = self.subcarriers
        idx = np.arange(1, n + 1)
        return self.carrier_hz + (idx - (n + 1) / 2) * self.bandwidth_hz / n

    @property
    def omegas(self) -> np.ndarray:
        return 2 * np.pi * self.frequencies


@dataclass(frozen=True)
class PathlossModel:
    """Distance-dependent link gains zeta = zeta0 * d**(-exponent)."""

    reference_gain_db: float
    distance_rt: float
    distance_ri: float
    distance_it: float
    exponent_rt: float
    exponent_ri: float
    exponent_it: float

    def __post_init__(self):
        if min(self.distance_rt, self.distance_ri, self.distance_it) <= 0:
            raise ValueError("distances must be positive")

    def gain(self, link: str) -> float:
        zeta0 = 10.0 ** (self.reference_gain_db / 10.0)
        d = getattr(self, f"distance_{link}")
        eps = getattr(self, f"exponent_{link}")
        return zeta0 * d ** (-eps)


@dataclass(frozen=True)
class TapChannels:
    """Time-domain taps: direct link (rt), surface-to-receiver rows (ri),
    transmitter-to-surface columns (it)."""

    h_rt: np.ndarray  # (d_rt,)
    h_ri: np.ndarray  # (d_ri, m)
    h_it: np.ndarray  # (d_it, m)

    @property
    def elements(self) -> int:
        return self.h_ri.shape[1]


@dataclass(frozen=True)
class FreqChannels:
    """Per-subcarrier channels: scalars (n,), rows (n, m), columns (n, m)."""

    h_rt: np.ndarray
    h_ri: np.ndarray
    h_it: np.ndarray


@dataclass(frozen=True)
class AdmittanceChannels:
    """Admittance-parameter channel description, exact image of FreqChannels."""

    y_rt: np.ndarray
    y_ri: np.ndarray
    y_it: np.ndarray
    y0: float


@dataclass(frozen=True)
class ChannelSet:
    """One realization: taps plus both derived frequency-domain forms."""

    taps: TapChannels
    freq: FreqChannels
    adm: AdmittanceChannels
    seed: int

    @property
    def channel_hash(self) -> str:
        return tap_hash(self.taps)


def tap_hash(taps: TapChannels) -> str:
    """Deterministic fingerprint of a tap realization (first 16 sha1 hex chars)."""
    digest = hashlib.sha1()
    for arr in (taps.h_rt, taps.h_ri, taps.h_it):
        digest.update(np.ascontiguousarray(arr).tobytes())
    return digest.hexdigest()[:16]


def generate_taps(
    seed: int, elements: int, tap_counts: tuple[int, int, int], pathloss: PathlossModel
) -> TapChannels:
    """Draw CSCG taps with per-tap variance zeta_link / tap_count.

    The expected total tap energy of each link equals its pathloss gain.
    Draw order is fixed (rt, ri, it) so realizations are reproducible.
    """
    d_rt, d_ri, d_it = tap_counts
    if min(d_rt, d_ri, d_it) < 1:
        raise ValueError("tap counts must be >= 1")
    rng = np.random.default_rng(seed)

    def draw(shape, zeta, taps):
        scale = np.sqrt(zeta / (2 * taps))
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    h_rt = draw((d_rt,), pathloss.gain("rt"), d_rt)
    h_ri = draw((d_ri, elements), pathloss.gain("ri"), d_ri)
    h_it = draw((d_it, elements), pathloss.gain("it"), d_it)
    return TapChannels(h_rt=h_rt, h_ri=h_ri, h_it=h_it)


def freq_channels(taps: TapChannels, subcarriers: int) -> FreqChannels:
    """Unnormalized N-point DFT of the zero-padded taps.

    Equals the diagonal of F @ circ(taps) @ F^H for the normalized DFT
    matrix F, since that diagonal is the DFT of the circulant's first
    column.
    """
    n = subcarriers
    for arr in (taps.h_rt, taps.h_ri, taps.h_it):
        if arr.shape[0] > n:
            raise ValueError("tap count exceeds subcarrier count")
    return FreqChannels(
        h_rt=np.fft.fft(taps.h_rt, n=n),
        h_ri=np.fft.fft(taps.h_ri, n=n, axis=0),
        h_it=np.fft.fft(taps.h_it, n=n, axis=0),
    )


def admittance_channels(fc: FreqChannels, y0: float) -> AdmittanceChannels:
    """Exact admittance-parameter image of the frequency-domain channels."""
    cascade = np.einsum("nm,nm->n", fc.h_ri, fc.h_it)
    return AdmittanceChannels(
        y_rt=-2 * y0 * (fc.h_rt - cascade),
        y_ri=-2 * y0 * fc.h_ri,
        y_it=-2 * y0 * fc.h_it,
        y0=y0,
    )


def build_channel_set(
    seed: int,
    elements: int,
    tap_counts: tuple[int, int, int],
    pathloss: PathlossModel,
    subcarriers: int,
    y0: float,
) -> ChannelSet:
    taps = generate_taps(seed, elements, tap_counts, pathloss)
    fc = freq_channels(taps, subcarriers)
    return ChannelSet(taps=taps, freq=fc, adm=admittance_channels(fc, y0), seed=seed)


def effective_channel_scattering(fc: FreqChannels, theta: np.ndarray) -> np.ndarray:
    """h_n = h_rt_n + h_ri_n @ Theta_n @ h_it_n for a stack of Theta_n."""
    return fc.h_rt + np.einsum("ni,nij,nj->n", fc.h_ri, theta, fc.h_it)


def effective_channel_admittance(
    ac: AdmittanceChannels, yset: AdmittanceMatrixSet
) -> np.ndarray:
    """Admittance-form effective channel, evaluated block by block.

    h_n = (1/(2*y0)) * (-y_rt_n + y_ri_n @ (Y_n + y0*I)^-1 @ y_it_n); the
    block-diagonal structure of Y_n turns the inverse into G independent
    group-size solves per subcarrier.
    """
    topo = yset.topology
    n = ac.y_rt.shape[0]
    g, mb = topo.group_count, topo.group_size
    blocks = yset.blocks() + ac.y0 * np.eye(mb)
    y_ri = ac.y_ri.reshape(n, g, mb)
    y_it = ac.y_it.reshape(n, g, mb)
    sol = np.linalg.solve(blocks, y_it[..., None])[..., 0]
    through = np.einsum("ngi,ngi->n", y_ri, sol)
    return (-ac.y_rt + through) / (2 * ac.y0)


def _normalized_dft(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def _interleave_permutation(n: int, m: int) -> np.ndarray:
    """Permutation with ones at (time-major index, element-major index).

    Row (p-1)*m + i picks element-major entry (i-1)*n + p, i.e. it converts
    vectors stored element by element into vectors stored time sample by
    time sample.
    """
    gamma = np.zeros((n * m, n * m))
    for p in range(n):
        for i in range(m):
            gamma[p * m + i, i * n + p] = 1.0
    return gamma


def proposition1_oracle(taps: TapChannels, theta: np.ndarray) -> float:
    """Dense certificate that the frequency-domain channel is diagonal.

    Builds the full NM x NM time-domain operator: each element pair gets
    the circulant whose DFT diagonal matches its per-subcarrier scattering
    entries, blocks are interleaved by the permutation above, and the
    result is sandwiched between circulant tap matrices and normalized DFT
    matrices.  Returns the larger of the off-diagonal magnitude and the
    worst mismatch between the diagonal and the per-subcarrier formula.
    """
    n, m, _ = theta.shape
    if n * m > DENSE_ORACLE_LIMIT:
        raise InstanceTooLarge(f"dense oracle limited to N*M <= {DENSE_ORACLE_LIMIT}")

    fc = freq_channels(taps, n)
    h_direct = effective_channel_scattering(fc, theta)

    f = _normalized_dft(n)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n

    hrt_pad = np.zeros(n, dtype=complex)
    hrt_pad[: taps.h_rt.shape[0]] = taps.h_rt
    h_rt_bar = hrt_pad[idx]

    hri_pad = np.zeros((n, m), dtype=complex)
    hri_pad[: taps.h_ri.shape[0]] = taps.h_ri
    h_ri_bar = hri_pad[idx].reshape(n, n * m)

    hit_pad = np.zeros((n, m), dtype=complex)
    hit_pad[: taps.h_it.shape[0]] = taps.h_it
    h_it_bar = hit_pad[idx].transpose(0, 2, 1).reshape(n * m, n)

    # element-major block matrix: circulant per element pair
    theta_taps = np.fft.ifft(theta, axis=0)
    elem_major = np.zeros((n * m, n * m), dtype=complex)
    for i in range(m):
        for j in range(m):
            elem_major[i * n : (i + 1) * n, j * n : (j + 1) * n] = theta_taps[
                idx, i, j
            ]
    gamma = _interleave_permutation(n, m)
    theta_bar = gamma @ elem_major @ gamma.T

    h_dense = f @ (h_rt_bar + h_ri_bar @ theta_bar @ h_it_bar) @ f.conj().T
    off = h_dense - np.diag(np.diag(h_dense))
    return float(
        max(np.max(np.abs(off)), np.max(np.abs(np.diag(h_dense) - h_direct)))
    )


def _circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Time-domain circular convolution by linear convolution plus wraparound."""
    n = a.shape[0]
    full = np.convolve(a, b)
    out = full[:n].copy()
    out[: n - 1] += full[n:]
    return out


def symbol_level_check(
    taps: TapChannels, theta: np.ndarray, symbols: np.ndarray
) -> np.ndarray:
    """Propagate one OFDM symbol through the time domain, no noise.

    Transmit IDFT, circular convolution through the transmitter-side taps,
    the surface's tap response (inverse DFT of its per-subcarrier
    scattering entries), and the receiver-side taps, then a receive DFT.
    The result equals diag(h_n) @ symbols for the same effective channel.
    """
    n, m, _ = theta.shape
    if n * m > DENSE_ORACLE_LIMIT:
        raise InstanceTooLarge(f"symbol check limited to N*M <= {DENSE_ORACLE_LIMIT}")
    if symbols.shape != (n,):
        raise ValueError("one symbol per subcarrier required")

    f = _normalized_dft(n)
    s_time = f.conj().T @ symbols

    hrt_pad = np.zeros(n, dtype=complex)
    hrt_pad[: taps.h_rt.shape[0]] = taps.h_rt
    hri_pad = np.zeros((n, m), dtype=complex)
    hri_pad[: taps.h_ri.shape[0]] = taps.h_ri
    hit_pad = np.zeros((n, m), dtype=complex)
    hit_pad[: taps.h_it.shape[0]] = taps.h_it
    theta_taps = np.fft.ifft(theta, axis=0)

    incident = [_circular_convolve(hit_pad[:, j], s_time) for j in range(m)]
    reflected = []
    for i in range(m):
        acc = np.zeros(n, dtype=complex)
        for j in range(m):
            acc += _circular_convolve(theta_taps[:, i, j], incident[j])
        reflected.append(acc)
    received = _circular_convolve(hrt_pad, s_time)
    for i in range(m):
        received += _circular_convolve(hri_pad[:, i], reflected[i])
    return f @ received


def write_complex_matrix(path, matrix: np.ndarray) -> None:
    """Plain-text export: one row per line, one 'a+bi' token per value."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(" ".join(f"{v.real:.17g}{v.imag:+.17g}i" for v in row) + "\n")


def read_complex_matrix(path) -> np.ndarray:
    """Inverse of write_complex_matrix."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([complex(tok.replace("i", "j")) for tok in line.split()])
    return np.array(rows, dtype=complex)


def export_tap_channels(taps: TapChannels, directory) -> list[str]:
    """Write the three tap matrices as plain-text files; returns the paths."""
    import os

    paths = []
    for name, arr in (("rt", taps.h_rt), ("ri", taps.h_ri), ("it", taps.h_it)):
        path = os.path.join(directory, f"taps_{name}.txt")
        write_complex_matrix(path, arr)
        paths.append(path)
    return paths
