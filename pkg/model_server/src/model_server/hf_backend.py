"""Masked-LM backend wrapping a local or hub checkpoint.

The server's own tokenizer decides subword segmentation: unmasked
stretches of the corrupted text are encoded as plain text, every
``"[M]"`` slot becomes the tokenizer's mask token, and a slot with a
requested target is widened to as many mask tokens as the target
occupies so that a single bidirectional forward pass scores all pieces
at once. The returned value per position is the sum of the target
pieces' log-probabilities, hence a natural-log token probability.

When configured, a prompt template is prepended to the context, not to
the corrupted candidate, so the scored span keeps its positions.

The checkpoint loads in a background thread (the server answers 503
until it is ready) and forward passes are serialized behind a lock:
arrival order affects latency only, never values.
"""

from __future__ import annotations

import threading

MASK_TOKEN = "[M]"


def build_encoding(tokenizer, prompt, context, corrupted, targets):
    """Assemble input ids and locate the pieces to read per target.

    Returns ``(ids, slots)`` where ``slots[key]`` lists ``(position,
    piece_id)`` pairs into the id sequence, one per subword piece of the
    target at ``key``. Keys keep their request spelling so the response
    can echo them. ``targets`` must already be validated.
    """
    mask_id = tokenizer.mask_token_id
    if mask_id is None:
        raise ValueError("tokenizer has no mask token; cannot serve masked queries")
    ids: list[int] = []
    cls_id = getattr(tokenizer, "cls_token_id", None)
    sep_id = getattr(tokenizer, "sep_token_id", None)
    if cls_id is not None:
        ids.append(cls_id)
    context_words = ([prompt] if prompt else []) + list(context)
    context_text = " ".join(context_words).strip()
    if context_text:
        ids.extend(tokenizer.encode(context_text, add_special_tokens=False))
        if sep_id is not None:
            ids.append(sep_id)
    by_pos = {int(key): key for key in targets}
    slots: dict[str, list[tuple[int, int]]] = {}
    run: list[str] = []

    def flush_run():
        if run:
            ids.extend(tokenizer.encode(" ".join(run), add_special_tokens=False))
            run.clear()

    for i, word in enumerate(corrupted):
        if i in by_pos:
            key = by_pos[i]
            flush_run()
            pieces = tokenizer.encode(targets[key], add_special_tokens=False)
            if not pieces:
                raise ValueError(f"target at position {key} encodes to no tokens")
            slots[key] = [(len(ids) + j, piece) for j, piece in enumerate(pieces)]
            ids.extend([mask_id] * len(pieces))
        elif word == MASK_TOKEN:
            # masked but not requested: still substitute the mask token
            flush_run()
            ids.append(mask_id)
        else:
            run.append(word)
    flush_run()
    if sep_id is not None:
        ids.append(sep_id)
    return ids, slots


def sum_target_logprobs(rows, slots) -> dict[str, float]:
    """Sum per-piece log-probabilities into one value per target key.

    ``rows`` is indexable as ``rows[position][piece_id]``; values are
    clamped at 0 so float noise can never violate the <= 0 contract.
    """
    out: dict[str, float] = {}
    for key, pairs in slots.items():
        total = 0.0
        for position, piece in pairs:
            total += float(rows[position][piece])
        out[key] = min(0.0, total)
    return out


class HFBackend:
    """Loads a checkpoint asynchronously and serves logprob queries."""

    def __init__(self, model_id: str, device: str = "cpu", prompt: str | None = None):
        self.model_id = model_id
        self.device = device
        self.prompt = prompt
        self._loaded = threading.Event()
        self._error: Exception | None = None
        self._lock = threading.Lock()
        self._tokenizer = None
        self._model = None

    def start(self) -> None:
        threading.Thread(target=self._load, daemon=True).start()

    def _load(self) -> None:
        try:
            from transformers import AutoModelForMaskedLM, AutoTokenizer
        except ImportError as exc:
            self._error = RuntimeError(
                "hf-model mode requires the transformers and torch packages"
                f" (install the [hf] extra): {exc}"
            )
            self._loaded.set()
            return
        try:
            tokenizer = AutoTokenizer.from_pretrained(self.model_id)
            if tokenizer.mask_token_id is None:
                raise ValueError(
                    f"{self.model_id} has no mask token; a masked LM is required"
                )
            model = AutoModelForMaskedLM.from_pretrained(self.model_id)
            model.to(self.device)
            model.eval()
            self._tokenizer = tokenizer
            self._model = model
        except Exception as exc:
            self._error = exc
        finally:
            self._loaded.set()

    @property
    def ready(self) -> bool:
        return self._loaded.is_set() and self._error is None

    @property
    def failed(self) -> Exception | None:
        return self._error if self._loaded.is_set() else None

    @property
    def vocab_size(self) -> int:
        return len(self._tokenizer)

    def wait_until_loaded(self, timeout: float | None = None) -> bool:
        return self._loaded.wait(timeout)

    def logprobs(self, context, corrupted, targets) -> dict[str, float]:
        import torch

        ids, slots = build_encoding(
            self._tokenizer, self.prompt, context, corrupted, targets
        )
        if not slots:
            return {}
        batch = torch.tensor([ids], dtype=torch.long, device=self.device)
        with self._lock, torch.no_grad():
            logits = self._model(input_ids=batch).logits[0]
        rows = torch.log_softmax(logits.double(), dim=-1)
        return sum_target_logprobs(rows, slots)
