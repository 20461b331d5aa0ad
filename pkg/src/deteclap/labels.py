"""Object-label construction from tagger/detector score vectors.

Audio scores are cosine similarities in [-1, 1]; visual scores are
detection probabilities in [0, 1]. Hard labels keep entries whose score
strictly exceeds a threshold; per-modality hard labels merge with
elementwise AND/OR. Soft labels reuse the scores directly (audio clamped
into [0, 1]).

File formats are JSON Lines with a vocabulary header line; see
`write_score_file` / `write_label_file`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, InputError, ParseError

MODALITIES = ("audio", "visual")
HARD_PROVENANCES = ("audio", "visual", "and", "or")
SOFT_KINDS = ("soft-audio", "soft-visual", "soft-max")
LABEL_KINDS = ("hard",) + SOFT_KINDS

DEFAULT_THETA_AUDIO = 0.5
DEFAULT_THETA_VISUAL = 0.4


class Vocabulary:
    """Ordered, unique label names with a dense index map."""

    def __init__(self, names):
        names = list(names)
        if len(set(names)) != len(names):
            raise InputError("vocabulary names must be unique")
        if not names:
            raise InputError("vocabulary must not be empty")
        self.names = names
        self._index = {name: i for i, name in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.names == other.names

    def index(self, name):
        if name not in self._index:
            raise InputError(f"unknown label name {name!r}")
        return self._index[name]

    @classmethod
    def load(cls, path):
        """One label name per line; blank lines ignored."""
        with open(path, "r", encoding="utf-8") as fh:
            names = [line.strip() for line in fh if line.strip()]
        return cls(names)


@dataclass
class ScoreVector:
    clip: str
    modality: str
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.modality not in MODALITIES:
            raise InputError(f"modality must be audio or visual; got {self.modality!r}")
        if not np.all(np.isfinite(self.scores)):
            raise InputError(f"non-finite score for clip {self.clip!r}")
        if self.modality == "visual" and (
            self.scores.min() < 0.0 or self.scores.max() > 1.0
        ):
            raise InputError(
                f"visual scores for clip {self.clip!r} must lie in [0, 1]"
            )
        if self.modality == "audio" and (
            self.scores.min() < -1.0 or self.scores.max() > 1.0
        ):
            raise InputError(
                f"audio similarities for clip {self.clip!r} must lie in [-1, 1]"
            )


@dataclass
class LabelVector:
    clip: str
    kind: str  # hard | soft
    values: np.ndarray
    provenance: str  # audio | visual | and | or | max

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in ("hard", "soft"):
            raise InputError(f"kind must be hard or soft; got {self.kind!r}")
        if self.kind == "hard":
            if not np.all(np.isin(self.values, (0.0, 1.0))):
                raise InputError(f"hard labels for {self.clip!r} must be 0/1")
        elif self.values.min() < 0.0 or self.values.max() > 1.0:
            raise InputError(f"soft labels for {self.clip!r} must lie in [0, 1]")


def threshold_labels(scores, theta):
    """Hard labels: 1 where the score strictly exceeds theta."""
    if not 0.0 <= theta <= 1.0:
        raise InputError(f"threshold must lie in [0, 1]; got {theta}")
    return LabelVector(
        clip=scores.clip,
        kind="hard",
        values=(scores.scores > theta).astype(np.float64),
        provenance=scores.modality,
    )


def merge(y_a, y_v, op):
    """Elementwise logical AND/OR of two hard label vectors."""
    if op not in ("and", "or"):
        raise InputError(f"merge op must be 'and' or 'or'; got {op!r}")
    if y_a.clip != y_v.clip:
        raise ContractError(f"clip mismatch: {y_a.clip!r} vs {y_v.clip!r}")
    if y_a.kind != "hard" or y_v.kind != "hard":
        raise ContractError("merge requires hard label vectors")
    if y_a.values.shape != y_v.values.shape:
        raise ContractError(
            f"vocabulary sizes disagree: {y_a.values.shape} vs {y_v.values.shape}"
        )
    a = y_a.values.astype(bool)
    v = y_v.values.astype(bool)
    combined = (a & v) if op == "and" else (a | v)
    return LabelVector(
        clip=y_a.clip, kind="hard",
        values=combined.astype(np.float64), provenance=op,
    )


def soft_labels(audio, visual, kind):
    """Soft targets straight from the scores.

    kind="audio": cosine similarities clamped to [0, 1]; kind="visual":
    detection probabilities; kind="max": elementwise max of the two.
    """
    if kind not in ("audio", "visual", "max"):
        raise InputError(f"soft label kind must be audio|visual|max; got {kind!r}")
    need_audio = kind in ("audio", "max")
    need_visual = kind in ("visual", "max")
    if need_audio and audio is None:
        raise ContractError(f"soft kind {kind!r} requires audio scores")
    if need_visual and visual is None:
        raise ContractError(f"soft kind {kind!r} requires visual scores")
    if need_audio and need_visual:
        if audio.clip != visual.clip:
            raise ContractError(f"clip mismatch: {audio.clip!r} vs {visual.clip!r}")
        if audio.scores.shape != visual.scores.shape:
            raise ContractError(
                f"vocabulary sizes disagree: {audio.scores.shape} vs "
                f"{visual.scores.shape}"
            )
    if kind == "audio":
        clip, values = audio.clip, np.clip(audio.scores, 0.0, 1.0)
    elif kind == "visual":
        clip, values = visual.clip, visual.scores.copy()
    else:
        clip = audio.clip
        values = np.maximum(np.clip(audio.scores, 0.0, 1.0), visual.scores)
    return LabelVector(clip=clip, kind="soft", values=values, provenance=kind)


# -- score/label files -------------------------------------------------------


def write_score_file(path, vocabulary, vectors, extra_header=None):
    header = {"vocabulary": list(vocabulary.names)}
    if extra_header:
        header.update(extra_header)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in vectors:
            fh.write(json.dumps(
                {"clip": v.clip, "modality": v.modality,
                 "scores": [float(x) for x in v.scores]},
                sort_keys=True,
            ) + "\n")


def ingest_scores(path, vocabulary=None):
    """Parse a score file; returns (vocabulary, [ScoreVector]).

    An empty file yields (None, []). Malformed lines raise ParseError
    with their line number; when `vocabulary` is given the header must
    match it name for name.
    """
    vectors = []
    file_vocab = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=lineno) from None
            if file_vocab is None:
                if "vocabulary" not in record:
                    raise ParseError(
                        "first line must be a vocabulary header", line=lineno
                    )
                try:
                    file_vocab = Vocabulary(record["vocabulary"])
                except InputError as exc:
                    raise ParseError(str(exc), line=lineno) from None
                if vocabulary is not None:
                    unknown = [n for n in file_vocab.names
                               if n not in vocabulary._index]
                    if unknown:
                        raise ParseError(
                            f"unknown label name {unknown[0]!r}", line=lineno
                        )
                    if file_vocab.names != vocabulary.names:
                        raise ParseError(
                            "vocabulary does not match the expected one",
                            line=lineno,
                        )
                continue
            for key in ("clip", "modality", "scores"):
                if key not in record:
                    raise ParseError(f"missing field {key!r}", line=lineno)
            scores = record["scores"]
            if len(scores) != len(file_vocab):
                raise ParseError(
                    f"expected {len(file_vocab)} scores, got {len(scores)}",
                    line=lineno,
                )
            if not all(
                isinstance(x, (int, float)) and math.isfinite(x) for x in scores
            ):
                raise ParseError("non-finite or non-numeric score", line=lineno)
            try:
                vectors.append(ScoreVector(
                    clip=record["clip"], modality=record["modality"],
                    scores=np.array(scores, dtype=np.float64),
                ))
            except InputError as exc:
                raise ParseError(str(exc), line=lineno) from None
    return file_vocab, vectors


def write_label_file(path, vocabulary, vectors, extra_header=None):
    header = {"vocabulary": list(vocabulary.names)}
    if extra_header:
        header.update(extra_header)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in vectors:
            fh.write(json.dumps(
                {"clip": v.clip, "kind": v.kind, "provenance": v.provenance,
                 "values": [float(x) for x in v.values]},
                sort_keys=True,
            ) + "\n")


def ingest_labels(path, vocabulary=None):
    """Parse a label file; returns (vocabulary, [LabelVector])."""
    vectors = []
    file_vocab = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=lineno) from None
            if file_vocab is None:
                if "vocabulary" not in record:
                    raise ParseError(
                        "first line must be a vocabulary header", line=lineno
                    )
                file_vocab = Vocabulary(record["vocabulary"])
                if vocabulary is not None and file_vocab.names != vocabulary.names:
                    raise ParseError(
                        "vocabulary does not match the expected one", line=lineno
                    )
                continue
            for key in ("clip", "kind", "values"):
                if key not in record:
                    raise ParseError(f"missing field {key!r}", line=lineno)
            if len(record["values"]) != len(file_vocab):
                raise ParseError(
                    f"expected {len(file_vocab)} values, got "
                    f"{len(record['values'])}",
                    line=lineno,
                )
            try:
                vectors.append(LabelVector(
                    clip=record["clip"], kind=record["kind"],
                    values=np.array(record["values"], dtype=np.float64),
                    provenance=record.get("provenance", "audio"),
                ))
            except InputError as exc:
                raise ParseError(str(exc), line=lineno) from None
    return file_vocab, vectors


# -- synthetic score fixtures -------------------------------------------------


def synth_scores(clip_objects, n_classes, noise=0.0, dropout=0.0, seed=0,
                 high=0.9, low=0.1):
    """Paired audio/visual score vectors for synthetic clips.

    `clip_objects` is a list of (clip_id, iterable of class indices).
    Latent objects score `high`, everything else `low`, each entry
    perturbed by U(-noise, +noise) independently per modality. With
    probability `dropout` (a float, or an (audio, visual) pair) an
    object is silently dropped from one modality, which is exactly the
    situation OR-merging recovers and AND-merging does not.
    """
    if isinstance(dropout, (tuple, list)):
        drop_a, drop_v = float(dropout[0]), float(dropout[1])
    else:
        drop_a = drop_v = float(dropout)
    rng = np.random.default_rng(seed)
    audio_vectors, visual_vectors = [], []
    for clip_id, objects in clip_objects:
        objects = sorted(set(int(o) for o in objects))
        for o in objects:
            if not 0 <= o < n_classes:
                raise InputError(f"object index {o} outside 0..{n_classes - 1}")
        for modality, drop, out in (
            ("audio", drop_a, audio_vectors),
            ("visual", drop_v, visual_vectors),
        ):
            present = np.zeros(n_classes, dtype=bool)
            for o in objects:
                if rng.uniform() >= drop:
                    present[o] = True
            base = np.where(present, high, low)
            scores = base + rng.uniform(-noise, noise, size=n_classes)
            lo = -1.0 if modality == "audio" else 0.0
            out.append(ScoreVector(
                clip=clip_id, modality=modality,
                scores=np.clip(scores, lo, 1.0),
            ))
    return audio_vectors, visual_vectors


# -- label resolution for training --------------------------------------------


class LabelStore:
    """Per-clip label vectors keyed by provenance (plus kind)."""

    def __init__(self, vocabulary=None):
        self.vocabulary = vocabulary
        self._by_clip = {}

    def add(self, vector):
        self._by_clip.setdefault(vector.clip, {})[
            (vector.kind, vector.provenance)
        ] = vector

    def extend(self, vectors):
        for v in vectors:
            self.add(v)

    def get(self, clip, kind, provenance):
        return self._by_clip.get(clip, {}).get((kind, provenance))

    def clips(self):
        return list(self._by_clip)

    @classmethod
    def from_file(cls, path, vocabulary=None):
        vocab, vectors = ingest_labels(path, vocabulary)
        store = cls(vocab)
        store.extend(vectors)
        return store


def resolve_targets(store, clip, variant, label_kind="hard"):
    """Targets (audio-head, visual-head) for one clip under a variant.

    Hard kinds route per variant: audio/visual train both heads on that
    modality's labels, and/or on the merged vector (merged on the fly
    from per-modality hard labels when no pre-merged vector exists), and
    separate trains each head on its own modality. Soft kinds feed the
    chosen soft vector to both heads and require a label-using variant.
    """
    if variant == "base":
        return None

    def need(kind, provenance):
        vec = store.get(clip, kind, provenance)
        if vec is None:
            raise ContractError(
                f"clip {clip!r} is missing a {kind} label with provenance "
                f"{provenance!r} (required by variant {variant!r})"
            )
        return vec.values

    if label_kind in SOFT_KINDS:
        if variant == "separate":
            return (need("soft", "audio"), need("soft", "visual"))
        provenance = label_kind.split("-", 1)[1]
        values = need("soft", provenance)
        return (values, values)
    if label_kind != "hard":
        raise InputError(f"unknown label kind {label_kind!r}")
    if variant in ("audio", "visual"):
        values = need("hard", variant)
        return (values, values)
    if variant == "separate":
        return (need("hard", "audio"), need("hard", "visual"))
    if variant in ("and", "or"):
        vec = store.get(clip, "hard", variant)
        if vec is not None:
            return (vec.values, vec.values)
        merged = merge(
            LabelVector(clip, "hard", need("hard", "audio"), "audio"),
            LabelVector(clip, "hard", need("hard", "visual"), "visual"),
            variant,
        )
        return (merged.values, merged.values)
    raise InputError(f"unknown variant {variant!r}")


def build_labels(audio_scores, visual_scores, mode,
                 theta_audio=DEFAULT_THETA_AUDIO,
                 theta_visual=DEFAULT_THETA_VISUAL):
    """Label vectors for every clip, per the requested mode.

    Hard modes: "audio", "visual", "and", "or" give one merged-or-single
    vector per clip; "separate" emits both per-modality hard vectors.
    Soft modes: "soft-audio", "soft-visual", "soft-max".
    """
    by_clip_a = {v.clip: v for v in audio_scores}
    by_clip_v = {v.clip: v for v in visual_scores}
    out = []

    def audio_for(clip):
        if clip not in by_clip_a:
            raise ContractError(f"clip {clip!r} has no audio scores")
        return by_clip_a[clip]

    def visual_for(clip):
        if clip not in by_clip_v:
            raise ContractError(f"clip {clip!r} has no visual scores")
        return by_clip_v[clip]

    if mode == "audio":
        for v in audio_scores:
            out.append(threshold_labels(v, theta_audio))
    elif mode == "visual":
        for v in visual_scores:
            out.append(threshold_labels(v, theta_visual))
    elif mode in ("and", "or"):
        for clip in by_clip_a:
            out.append(merge(
                threshold_labels(audio_for(clip), theta_audio),
                threshold_labels(visual_for(clip), theta_visual),
                mode,
            ))
    elif mode == "separate":
        for clip in by_clip_a:
            out.append(threshold_labels(audio_for(clip), theta_audio))
            out.append(threshold_labels(visual_for(clip), theta_visual))
    elif mode in SOFT_KINDS:
        kind = mode.split("-", 1)[1]
        clips = by_clip_a if kind in ("audio", "max") else by_clip_v
        for clip in clips:
            audio = audio_for(clip) if kind in ("audio", "max") else None
            visual = visual_for(clip) if kind in ("visual", "max") else None
            out.append(soft_labels(audio, visual, kind))
    else:
        raise InputError(f"unknown label mode {mode!r}")
    return out
