"""Prompt-driven Gaussian selection and scene editing.

Queries score every Gaussian by cosine similarity between its feature
(mapped through the channel decoder when one exists, so text and pixel
prompts share the teacher's space) and each query embedding, followed by
a row softmax.  Selections are boolean masks over the cloud:

    soft    score[:, label] >= threshold
    hard    argmax(score) == label (ties to the lowest column)
    hybrid  soft OR hard

Edits never remove Gaussians; extraction and deletion push the opacity
logit to a kill value that renders as exactly alpha = 0, which keeps
indices stable for undo.  ``compact_cloud`` purges killed Gaussians when
a cloud is saved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import ChannelDecoder
from .oracle import Codebook
from .scene import KILL_LOGIT, FeatureMap, GaussianCloud


@dataclass
class ScoreMatrix:
    """Per-Gaussian softmax probabilities over a label set."""

    scores: np.ndarray  # (N, C), rows sum to 1
    labels: list | None = None

    @property
    def num_labels(self) -> int:
        return self.scores.shape[1]

    def column(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        if self.labels is None:
            raise KeyError("score matrix has no label names")
        return self.labels.index(label)


@dataclass
class EditSelection:
    """Boolean mask over a cloud plus how it was produced."""

    mask: np.ndarray
    provenance: str = "soft"

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.mask))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return x / safe


def score_gaussians(cloud: GaussianCloud, queries: np.ndarray,
                    decoder: ChannelDecoder | None = None,
                    labels: list | None = None) -> ScoreMatrix:
    """Cosine-then-softmax scores of every Gaussian against the queries.

    With a decoder, each feature is lifted by the decoder's weight matrix
    only: a Gaussian's contribution to any decoded pixel is W f (the bias
    is a per-pixel pedestal shared by all contributors, so including it
    would drag every low-magnitude feature toward the bias direction
    instead of its own).  Zero-norm features (or queries) contribute zero
    cosine, so a Gaussian with no feature signal gets a uniform row.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[0] < 2:
        raise ValueError("softmax requires a label set (at least 2 queries)")
    feats = cloud.features
    if decoder is not None:
        if feats.shape[1] != decoder.in_dim:
            raise ValueError(
                f"feature dim {feats.shape[1]} != decoder in_dim "
                f"{decoder.in_dim}")
        feats = feats @ decoder.weights.T
    if feats.shape[1] != queries.shape[1]:
        raise ValueError(
            f"query dim {queries.shape[1]} != feature dim {feats.shape[1]}")
    cos = _unit_rows(feats) @ _unit_rows(queries).T
    cos -= cos.max(axis=1, keepdims=True)
    e = np.exp(cos)
    return ScoreMatrix(scores=e / e.sum(axis=1, keepdims=True), labels=labels)


def score_against_codebook(cloud: GaussianCloud, codebook: Codebook,
                           decoder: ChannelDecoder | None = None) -> ScoreMatrix:
    return score_gaussians(cloud, codebook.embeddings, decoder=decoder,
                           labels=list(codebook.labels))


def _columns(scores: ScoreMatrix, label) -> list[int]:
    if isinstance(label, (list, tuple)):
        return [scores.column(l) for l in label]
    return [scores.column(label)]


def select_soft(scores: ScoreMatrix, label, threshold: float) -> EditSelection:
    """Threshold the chosen column(s); with several labels, a Gaussian is
    in when its best column among them clears the threshold."""
    cols = _columns(scores, label)
    best = scores.scores[:, cols].max(axis=1)
    return EditSelection(mask=best >= threshold,
                         provenance=f"soft({threshold})")


def select_hard(scores: ScoreMatrix, label) -> EditSelection:
    """Argmax selection; ties resolve to the lowest column index."""
    cols = _columns(scores, label)
    winners = np.argmax(scores.scores, axis=1)
    return EditSelection(mask=np.isin(winners, cols), provenance="hard")


def select_hybrid(scores: ScoreMatrix, label,
                  threshold: float) -> EditSelection:
    """Union of soft and hard selections."""
    mask = (select_soft(scores, label, threshold).mask
            | select_hard(scores, label).mask)
    return EditSelection(mask=mask, provenance=f"hybrid({threshold})")


def select(scores: ScoreMatrix, label, mode: str,
           threshold: float = 0.5) -> EditSelection:
    if mode == "soft":
        return select_soft(scores, label, threshold)
    if mode == "hard":
        return select_hard(scores, label)
    if mode == "hybrid":
        return select_hybrid(scores, label, threshold)
    raise ValueError(f"unknown selection mode {mode!r}")


def apply_edit(cloud: GaussianCloud, selection: EditSelection, op: str,
               recolor_fn=None) -> GaussianCloud:
    """Return an edited copy; the input cloud is never touched.

    extract: keep only the selection (everything else turns transparent).
    delete:  turn the selection transparent.
    recolor: map the selection's colors through ``recolor_fn`` (clamped).
    """
    if selection.mask.shape != (cloud.count,):
        raise ValueError("selection length does not match cloud")
    edited = cloud.copy()
    if op == "extract":
        edited.opacity_logits[~selection.mask] = KILL_LOGIT
    elif op == "delete":
        edited.opacity_logits[selection.mask] = KILL_LOGIT
    elif op == "recolor":
        if recolor_fn is None:
            raise ValueError("recolor needs a color function")
        picked = edited.colors[selection.mask]
        edited.colors[selection.mask] = np.clip(
            np.asarray(recolor_fn(picked), dtype=np.float64).reshape(
                picked.shape),
            0.0, 1.0)
    else:
        raise ValueError(f"unknown edit op {op!r}")
    return edited


def point_query(decoded_map: FeatureMap, x: int, y: int) -> np.ndarray:
    """Query embedding for a pixel prompt: that pixel's feature vector."""
    if not (0 <= x < decoded_map.width and 0 <= y < decoded_map.height):
        raise ValueError(f"point ({x}, {y}) outside the rendered view")
    return decoded_map.data[y, x].copy()


def box_query(decoded_map: FeatureMap, x0: int, y0: int, x1: int,
              y1: int) -> np.ndarray:
    """Query embedding for a box prompt: mean feature, unit-normalized."""
    x0, x1 = sorted((max(0, x0), min(decoded_map.width, x1)))
    y0, y1 = sorted((max(0, y0), min(decoded_map.height, y1)))
    if x1 <= x0 or y1 <= y0:
        raise ValueError("empty box")
    mean = decoded_map.data[y0:y1, x0:x1].reshape(-1, decoded_map.dim).mean(axis=0)
    norm = np.linalg.norm(mean)
    return mean / norm if norm > 0 else mean


def query_with_complement(query: np.ndarray) -> np.ndarray:
    """Single-query label set: the query plus its negation as 'others'."""
    query = np.asarray(query, dtype=np.float64)
    return np.stack([query, -query])


@dataclass
class EditCommand:
    op: str
    labels: list
    mode: str
    threshold: float = 0.5
    color: np.ndarray | None = None


def parse_edit_script(text: str) -> list[EditCommand]:
    """Line-oriented edit scripts.

    Grammar per line (blank lines and ``#`` comments skipped):

        <op> <label[,label...]> <mode> [threshold] [color=r,g,b]

    e.g. ``delete class2 hybrid 0.5`` or
    ``recolor class0 soft 0.6 color=1,0,0``.
    """
    commands = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(
                f"line {lineno}: expected '<op> <labels> <mode> [threshold]'")
        op, labels, mode = parts[0], parts[1].split(","), parts[2]
        if op not in ("extract", "delete", "recolor"):
            raise ValueError(f"line {lineno}: unknown op {op!r}")
        if mode not in ("soft", "hard", "hybrid"):
            raise ValueError(f"line {lineno}: unknown mode {mode!r}")
        threshold = 0.5
        color = None
        for extra in parts[3:]:
            if extra.startswith("color="):
                color = np.array([float(v) for v in extra[6:].split(",")])
                if color.shape != (3,):
                    raise ValueError(f"line {lineno}: color needs 3 components")
            else:
                threshold = float(extra)
        if op == "recolor" and color is None:
            raise ValueError(f"line {lineno}: recolor requires color=r,g,b")
        commands.append(EditCommand(op=op, labels=labels, mode=mode,
                                    threshold=threshold, color=color))
    return commands


def run_edit_script(cloud: GaussianCloud, codebook: Codebook,
                    commands: list[EditCommand],
                    decoder: ChannelDecoder | None = None) -> GaussianCloud:
    """Apply parsed edit commands in order; returns the edited copy."""
    current = cloud
    for cmd in commands:
        scores = score_against_codebook(current, codebook, decoder=decoder)
        cols = [codebook.label_index(name) for name in cmd.labels]
        selection = select(scores, cols, cmd.mode, cmd.threshold)
        fn = (lambda c, col=cmd.color: np.broadcast_to(col, c.shape)) \
            if cmd.color is not None else None
        current = apply_edit(current, selection, cmd.op, recolor_fn=fn)
    return current
