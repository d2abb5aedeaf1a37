"""Assembly of the stacked synthesis system.

The synthesis problem is linear: stack every study's coefficient vector
into one long vector ``b``, place the per-study coefficient covariances on
the diagonal of a block matrix ``V``, and relate ``b`` to the population
parameters through a zero/one design matrix ``W``.  A study that fits the
full model contributes an identity block to ``W``; a study that omits a
predictor contributes an identity with that row removed; moderator columns
append a 1 wherever a focal coefficient comes from a study satisfying the
moderator's predicate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ._linalg import cholesky_spd, solve_lower, spd_condition_number
from .exceptions import AssemblyError, InputError, SingularityError
from .studies import (
    PredictorCatalog,
    Provenance,
    StudyRegression,
    recover_xtx_inverse,
    resolve_covariance,
    validate_collection,
)

#: relative pivot tolerance for the design-matrix rank check
RANK_RTOL = 1e-10

#: condition number above which results carry a multicollinearity warning
CONDITION_WARNING_THRESHOLD = 1e8


class SynthesisMode(enum.Enum):
    GLS = "gls"
    WLS_DIAGONAL = "wls"
    POOLED_MSE = "pooled"


@dataclass(frozen=True)
class ModeratorSpec:
    """An extra parameter for the shift in a focal slope under a study feature.

    ``applies_when`` receives the study and decides whether its coefficient
    on ``target`` is shifted.  Predicates should depend only on study
    features or the study's model signature (0/1 information), matching the
    dummy-variable role of the column.
    """

    name: str
    target: str
    applies_when: Callable[[StudyRegression], bool]
    source: Optional[str] = None  # textual form, when parsed from a file

    def column_label(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class StackedSystem:
    """The assembled synthesis problem ``b = W beta + e``."""

    b: np.ndarray
    blocks: tuple[np.ndarray, ...]
    w: np.ndarray
    param_labels: tuple[str, ...]
    row_index: tuple[tuple[str, str], ...]
    mode: SynthesisMode
    catalog: PredictorCatalog
    study_ids: tuple[str, ...]
    block_slices: tuple[slice, ...]
    beta_count: int
    moderator_count: int
    block_provenance: tuple[Provenance, ...]
    block_rho: tuple[Optional[float], ...] = ()
    corr_fill: Optional[float] = None
    warnings: tuple[str, ...] = ()
    slopes_only: bool = False

    @property
    def k(self) -> int:
        return len(self.study_ids)

    @property
    def n_rows(self) -> int:
        return self.b.shape[0]

    @property
    def n_params(self) -> int:
        return self.w.shape[1]

    @property
    def full_model(self) -> bool:
        """True when every study contributed a row for every beta column."""
        return self.n_rows == self.k * self.beta_count

    @property
    def has_intercept_rows(self) -> bool:
        label = self.catalog.intercept_label
        return label is not None and any(lab == label for _, lab in self.row_index)

    @property
    def V(self) -> np.ndarray:
        """Dense block-diagonal weight matrix (covariances, or the
        inverse cross-product stack in pooled mode)."""
        return block_diagonal(self.blocks)

    def normal_equations(self) -> tuple[np.ndarray, np.ndarray]:
        """``(W' V^-1 W, W' V^-1 b)`` computed block by block.

        Each block is factorized on its own; the full ``V`` is never formed
        or inverted.
        """
        m = np.zeros((self.n_params, self.n_params))
        rhs = np.zeros(self.n_params)
        for sid, sl, block in zip(self.study_ids, self.block_slices, self.blocks):
            low = cholesky_spd(block, f"weight block of study {sid!r}")
            w_white = solve_lower(low, self.w[sl])
            b_white = solve_lower(low, self.b[sl])
            m += w_white.T @ w_white
            rhs += w_white.T @ b_white
        return m, rhs

    def weighted_quadratic(self, vec: np.ndarray, scale: float = 1.0) -> float:
        """Quadratic form ``vec' (scale * V)^-1 vec`` over the block structure."""
        total = 0.0
        for sid, sl, block in zip(self.study_ids, self.block_slices, self.blocks):
            low = cholesky_spd(block, f"weight block of study {sid!r}")
            z = solve_lower(low, vec[sl])
            total += float(z @ z)
        return total / scale

    def condition_number(self) -> float:
        """Condition number of the normal matrix ``W' V^-1 W``."""
        m, _ = self.normal_equations()
        return spd_condition_number(m)

    def project_slopes_only(self) -> "StackedSystem":
        """The same system with all intercept rows and the intercept column
        removed from ``b``, ``V`` and ``W``.  A no-op when intercepts were
        never stacked."""
        label = self.catalog.intercept_label
        if label is None or not self.has_intercept_rows:
            return self
        keep_rows = [i for i, (_, lab) in enumerate(self.row_index) if lab != label]
        keep_cols = [j for j, lab in enumerate(self.param_labels) if lab != label]

        new_blocks: list[np.ndarray] = []
        new_slices: list[slice] = []
        new_ids: list[str] = []
        new_prov: list[Provenance] = []
        new_rho: list[Optional[float]] = []
        rhos = self.block_rho or (None,) * self.k
        offset = 0
        for sid, sl, block, prov, rho in zip(
            self.study_ids, self.block_slices, self.blocks, self.block_provenance, rhos
        ):
            local = [i - sl.start for i in range(sl.start, sl.stop)
                     if self.row_index[i][1] != label]
            if not local:
                continue  # the study reported only an intercept
            new_blocks.append(block[np.ix_(local, local)])
            new_slices.append(slice(offset, offset + len(local)))
            new_ids.append(sid)
            new_prov.append(prov)
            new_rho.append(rho)
            offset += len(local)

        w = self.w[np.ix_(keep_rows, keep_cols)]
        labels = tuple(self.param_labels[j] for j in keep_cols)
        row_index = tuple(self.row_index[i] for i in keep_rows)
        _check_identified(w, labels)
        return replace(
            self,
            b=self.b[keep_rows],
            blocks=tuple(new_blocks),
            w=w,
            param_labels=labels,
            row_index=row_index,
            study_ids=tuple(new_ids),
            block_slices=tuple(new_slices),
            beta_count=self.beta_count - 1,
            block_provenance=tuple(new_prov),
            block_rho=tuple(new_rho),
            slopes_only=True,
        )


def block_diagonal(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Direct sum of square blocks; off-block entries are exactly zero."""
    blocks = [np.atleast_2d(np.asarray(blk, dtype=float)) for blk in blocks]
    for blk in blocks:
        if blk.shape[0] != blk.shape[1]:
            raise InputError(f"blocks must be square, got shape {blk.shape}")
    size = sum(blk.shape[0] for blk in blocks)
    out = np.zeros((size, size))
    at = 0
    for blk in blocks:
        d = blk.shape[0]
        out[at:at + d, at:at + d] = blk
        at += d
    return out


def _check_identified(w: np.ndarray, labels: Sequence[str]) -> None:
    """Full-column-rank check with a parameter-level diagnosis on failure."""
    dead = [lab for j, lab in enumerate(labels) if not np.any(w[:, j])]
    if dead:
        raise AssemblyError(
            f"parameters estimated by no study: {dead}; "
            "drop them from the catalog/moderators or add studies"
        )
    if w.shape[0] < w.shape[1]:
        raise AssemblyError(
            f"underdetermined system: {w.shape[0]} stacked coefficients "
            f"for {w.shape[1]} parameters"
        )
    svals = np.linalg.svd(w, compute_uv=False)
    rank = int(np.sum(svals > RANK_RTOL * svals[0]))
    if rank < w.shape[1]:
        _, _, vt = np.linalg.svd(w)
        null = np.abs(vt[-1])
        suspects = [lab for j, lab in enumerate(labels) if null[j] > 1e-8 * null.max()]
        raise AssemblyError(
            f"design matrix is rank-deficient (rank {rank} of {w.shape[1]}); "
            f"entangled parameters: {suspects}"
        )


def build_system(
    studies: Sequence[StudyRegression],
    catalog: PredictorCatalog,
    moderators: Sequence[ModeratorSpec] = (),
    mode: SynthesisMode = SynthesisMode.GLS,
    slopes_only: bool = False,
    corr_fill: Optional[float] = None,
) -> StackedSystem:
    """Assemble the stacked vector, weight blocks, and design matrix.

    Studies stack in input order; within a study, coefficients follow
    catalog order.  ``corr_fill`` forwards to covariance resolution for
    studies that reported only standard errors.  In ``WLS_DIAGONAL`` mode
    the off-diagonals of every block are zeroed; in ``POOLED_MSE`` mode the
    blocks are the recovered inverse cross-product matrices, which requires
    every study to report its MSE and full covariance.
    """
    if not studies:
        raise InputError("at least one study required")
    reports = validate_collection(studies, catalog)
    problems = [f"{r.study_id}: {msg}" for r in reports for msg in r.errors]
    if problems:
        raise InputError("invalid studies: " + "; ".join(problems))
    warnings = [f"{r.study_id}: {msg}" for r in reports for msg in r.warnings]

    ids = [s.id for s in studies]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate study ids: {ids}")

    mod_names = [m.name for m in moderators]
    if len(set(mod_names)) != len(mod_names):
        raise InputError(f"duplicate moderator names: {mod_names}")
    clash = [name for name in mod_names if name in catalog]
    if clash:
        raise InputError(f"moderator names collide with catalog labels: {clash}")
    for mod in moderators:
        catalog.index(mod.target)  # raises InputError if unknown

    ordered = [s.ordered_by(catalog) for s in studies]
    n_cat = len(catalog)
    param_labels = tuple(catalog.names) + tuple(mod_names)

    if mode is SynthesisMode.POOLED_MSE:
        missing = [s.id for s in ordered if s.mse is None]
        if missing:
            raise InputError(f"pooled-MSE synthesis requires an MSE from every study; missing: {missing}")
        signatures = {s.labels for s in ordered}
        if len(signatures) > 1:
            warnings.append(
                "pooled-MSE synthesis across studies fitting different models: "
                "the per-study error variances may estimate different quantities"
            )

    b_parts: list[np.ndarray] = []
    blocks: list[np.ndarray] = []
    provenance: list[Provenance] = []
    rhos: list[Optional[float]] = []
    w_rows: list[np.ndarray] = []
    row_index: list[tuple[str, str]] = []
    slices: list[slice] = []
    offset = 0

    for study in ordered:
        cov = resolve_covariance(study, corr_fill)
        if mode is SynthesisMode.GLS:
            block = cov.matrix
        elif mode is SynthesisMode.WLS_DIAGONAL:
            block = np.diag(np.diag(cov.matrix))
        else:
            try:
                block = recover_xtx_inverse(cov, study.mse)
            except InputError as exc:
                raise InputError(f"study {study.id!r}: {exc}") from None
        blocks.append(block)
        provenance.append(cov.provenance)
        rhos.append(cov.rho)

        b_parts.append(study.values)
        for lab in study.labels:
            row = np.zeros(n_cat + len(moderators))
            row[catalog.index(lab)] = 1.0
            for j, mod in enumerate(moderators):
                if lab == mod.target and bool(mod.applies_when(study)):
                    row[n_cat + j] = 1.0
            w_rows.append(row)
            row_index.append((study.id, lab))
        slices.append(slice(offset, offset + len(study.labels)))
        offset += len(study.labels)

    w = np.vstack(w_rows)
    _check_identified(w, param_labels)

    system = StackedSystem(
        b=np.concatenate(b_parts),
        blocks=tuple(blocks),
        w=w,
        param_labels=param_labels,
        row_index=tuple(row_index),
        mode=mode,
        catalog=catalog,
        study_ids=tuple(ids),
        block_slices=tuple(slices),
        beta_count=n_cat,
        moderator_count=len(moderators),
        block_provenance=tuple(provenance),
        block_rho=tuple(rhos),
        corr_fill=corr_fill,
        warnings=tuple(warnings),
    )
    if slopes_only:
        projected = system.project_slopes_only()
        if projected is system:
            # no intercept rows were ever stacked; nothing to project
            return replace(system, slopes_only=True)
        return projected
    return system
